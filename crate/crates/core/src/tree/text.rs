//! Plain-text model documents.
//!
//! ```text
//! fnt-model 1
//! inputs 4
//! activation squared
//! output 7.5 3.2
//! (+2 a=0.5 b=0.25
//!   [0.75 x2]
//!   [-0.5 (+2 a=0.1 b=0.9 [0.3 x0] [0.2 x1])])
//! ```
//!
//! A computational node is `(+N a=<f64> b=<f64> <edge>...)` with exactly N
//! edges; an edge is `[<weight> <child>]`; a leaf is `x<index>` (0-based).
//! `output` is either `none` or `<scale> <offset>`. `#` starts a comment.
//! Floats are written in shortest round-trip form, so a document reproduces
//! the model bit for bit.

use std::fmt::Write;

use thiserror::Error;

use super::{Activation, CompNode, Edge, FntModel, Node, OutputMap, TreeError};

pub const MAGIC: &str = "fnt-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

pub(super) fn write_model(m: &FntModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "inputs {}", m.input_arity()).unwrap();
    writeln!(out, "activation {}", m.activation().name()).unwrap();
    match m.output_map() {
        Some(map) => writeln!(out, "output {} {}", map.scale, map.offset).unwrap(),
        None => writeln!(out, "output none").unwrap(),
    }
    write_node(&mut out, m.root(), 0);
    out.push('\n');
    out
}

fn write_node(out: &mut String, node: &Node, indent: usize) {
    match node {
        Node::Leaf { feature } => write!(out, "x{feature}").unwrap(),
        Node::Comp(c) => {
            write!(out, "(+{} a={} b={}", c.edges.len(), c.a, c.b).unwrap();
            let flat = c.edges.iter().all(|e| e.child.is_leaf());
            for e in &c.edges {
                if flat {
                    out.push(' ');
                } else {
                    out.push('\n');
                    out.push_str(&"  ".repeat(indent + 1));
                }
                write!(out, "[{} ", e.weight).unwrap();
                write_node(out, &e.child, indent + 1);
                out.push(']');
            }
            out.push(')');
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    OpenEdge,
    CloseEdge,
    Word(&'a str),
}

struct Token<'a> {
    tok: Tok<'a>,
    line: usize,
    col: usize,
}

fn tokenize(s: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (li, line) in s.lines().enumerate() {
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let mut chars = line.char_indices().peekable();
        while let Some(&(ci, ch)) = chars.peek() {
            let pos = (li + 1, ci + 1);
            let single = match ch {
                '(' => Some(Tok::Open),
                ')' => Some(Tok::Close),
                '[' => Some(Tok::OpenEdge),
                ']' => Some(Tok::CloseEdge),
                _ => None,
            };
            if let Some(tok) = single {
                out.push(Token {
                    tok,
                    line: pos.0,
                    col: pos.1,
                });
                chars.next();
            } else if ch.is_whitespace() {
                chars.next();
            } else {
                let start = ci;
                let mut end = ci;
                while let Some(&(cj, c)) = chars.peek() {
                    if c.is_whitespace() || "()[]".contains(c) {
                        break;
                    }
                    end = cj + c.len_utf8();
                    chars.next();
                }
                out.push(Token {
                    tok: Tok::Word(&line[start..end]),
                    line: pos.0,
                    col: pos.1,
                });
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<Token<'a>>,
    pos: usize,
    eof: (usize, usize),
}

impl<'a> Parser<'a> {
    fn err_at(&self, line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map_or(self.eof, |t| (t.line, t.col))
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let (l, c) = self.here();
        self.err_at(l, c, msg)
    }

    fn next(&mut self) -> Result<&Token<'a>, ParseError> {
        if self.pos >= self.toks.len() {
            return Err(self.err("unexpected end of input"));
        }
        self.pos += 1;
        Ok(&self.toks[self.pos - 1])
    }

    fn word(&mut self) -> Result<&'a str, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Word(w) => Ok(w),
            ref other => Err(ParseError {
                line: t.line,
                col: t.col,
                msg: format!("expected a word, found {other:?}"),
            }),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let (l, c) = self.here();
        let w = self.word()?;
        if w != kw {
            return Err(self.err_at(l, c, format!("expected `{kw}`, found `{w}`")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ParseError> {
        let (l, c) = self.here();
        let w = self.word()?;
        w.parse()
            .map_err(|_| self.err_at(l, c, format!("invalid {what} `{w}`")))
    }

    fn float(&mut self, what: &str) -> Result<f64, ParseError> {
        let (l, c) = self.here();
        let v: f64 = self.number(what)?;
        if !v.is_finite() {
            return Err(self.err_at(l, c, format!("non-finite {what}")));
        }
        Ok(v)
    }

    fn labelled(&mut self, label: &str) -> Result<f64, ParseError> {
        let (l, c) = self.here();
        let w = self.word()?;
        let rest = w
            .strip_prefix(label)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err_at(l, c, format!("expected `{label}=<number>`")))?;
        match rest.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err_at(l, c, format!("invalid value for `{label}`"))),
        }
    }

    fn expect(&mut self, want: Tok<'static>) -> Result<(), ParseError> {
        let (l, c) = self.here();
        let t = self.next()?;
        if t.tok != want {
            return Err(ParseError {
                line: l,
                col: c,
                msg: format!("expected {want:?}, found {:?}", t.tok),
            });
        }
        Ok(())
    }

    fn node(&mut self) -> Result<Node, ParseError> {
        let (l, c) = self.here();
        match self.toks.get(self.pos).map(|t| t.tok.clone()) {
            Some(Tok::Open) => {
                self.pos += 1;
                let head = self.word()?;
                let n: usize = head
                    .strip_prefix('+')
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| self.err_at(l, c + 1, format!("expected `+N`, found `{head}`")))?;
                let a = self.labelled("a")?;
                let b = self.labelled("b")?;
                let mut edges = Vec::with_capacity(n);
                for _ in 0..n {
                    self.expect(Tok::OpenEdge)?;
                    let weight = self.float("weight")?;
                    let child = self.node()?;
                    self.expect(Tok::CloseEdge)?;
                    edges.push(Edge { weight, child });
                }
                self.expect(Tok::Close)
                    .map_err(|e| ParseError {
                        msg: format!("{} (node declared +{n})", e.msg),
                        ..e
                    })?;
                Ok(Node::Comp(CompNode { a, b, edges }))
            }
            Some(Tok::Word(w)) => {
                self.pos += 1;
                w.strip_prefix('x')
                    .and_then(|r| r.parse().ok())
                    .map(Node::leaf)
                    .ok_or_else(|| self.err_at(l, c, format!("expected leaf `x<index>`, found `{w}`")))
            }
            Some(other) => Err(self.err_at(l, c, format!("expected a node, found {other:?}"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

pub(super) fn read_model(s: &str) -> Result<FntModel, TreeError> {
    let line_count = s.lines().count().max(1);
    let mut p = Parser {
        toks: tokenize(s),
        pos: 0,
        eof: (line_count, s.lines().last().map_or(1, |l| l.len() + 1)),
    };
    p.keyword(MAGIC)?;
    let (l, c) = p.here();
    let version: u32 = p.number("version")?;
    if version != VERSION {
        return Err(p.err_at(l, c, format!("unsupported version {version}")).into());
    }
    p.keyword("inputs")?;
    let inputs: usize = p.number("input count")?;
    p.keyword("activation")?;
    let (l, c) = p.here();
    let activation = match p.word()? {
        "squared" => Activation::Squared,
        "unsquared" => Activation::Unsquared,
        other => return Err(p.err_at(l, c, format!("unknown activation `{other}`")).into()),
    };
    p.keyword("output")?;
    let output = if matches!(p.toks.get(p.pos), Some(Token { tok: Tok::Word("none"), .. })) {
        p.pos += 1;
        None
    } else {
        let scale = p.float("output scale")?;
        let offset = p.float("output offset")?;
        Some(OutputMap { scale, offset })
    };
    let root = p.node()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after model").into());
    }
    Ok(FntModel::new(root, inputs)?
        .with_activation(activation)
        .with_output_map(output))
}

#[cfg(test)]
mod tests {
    use super::super::tests::figure_one_tree;
    use super::*;

    #[test]
    fn round_trip_figure_one() {
        let m = figure_one_tree().with_output_map(Some(OutputMap {
            scale: 12.25,
            offset: -0.1,
        }));
        let text = m.to_text();
        let back = FntModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn round_trip_awkward_floats() {
        let root = Node::comp(
            0.1 + 0.2,
            1e-6,
            vec![(-0.0, Node::leaf(0)), (f64::MIN_POSITIVE, Node::leaf(1))],
        );
        let m = FntModel::new(root, 2)
            .unwrap()
            .with_activation(Activation::Unsquared);
        assert_eq!(FntModel::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        match FntModel::from_text("") {
            Err(TreeError::Parse(e)) => assert_eq!(e.line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn leaf_root_is_rejected() {
        let doc = "fnt-model 1\ninputs 2\nactivation squared\noutput none\nx0\n";
        assert_eq!(FntModel::from_text(doc), Err(TreeError::LeafRoot));
    }

    #[test]
    fn errors_carry_positions() {
        let doc = "fnt-model 1\ninputs 2\nactivation squared\noutput none\n(+2 a=0 b=1 [1 x0] [1 y1])\n";
        match FntModel::from_text(doc) {
            Err(TreeError::Parse(e)) => {
                assert_eq!((e.line, e.col), (5, 23));
                assert!(e.msg.contains("leaf"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let doc = "fnt-model 1\ninputs 2\nactivation squared\noutput none\n(+3 a=0 b=1 [1 x0] [1 x1])\n";
        assert!(matches!(FntModel::from_text(doc), Err(TreeError::Parse(_))));
        let doc = "fnt-model 2\n";
        assert!(matches!(FntModel::from_text(doc), Err(TreeError::Parse(_))));
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let doc = "# saved model\nfnt-model 1 inputs 2\nactivation squared output none\n(+2 a=0 b=1\n [1 x0] # left\n [1 x1])";
        let m = FntModel::from_text(doc).unwrap();
        assert_eq!(m.complexity(), 3);
    }
}
