//! Run configuration: TOML file with dotted keys, then `--set` and flag
//! overrides, then validation.

use std::path::Path;

use fntree::analysis::{FitnessKind, Matching};
use fntree::{DeConfig, GpConfig, MlpConfig, Mode, Scheme, StructureMode, SynthConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    None,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Target column; the last column when empty.
    pub target: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            target: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub scheme: Scheme,
    pub structure: StructureMode,
    pub baseline: Baseline,
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::KFold(10),
            structure: StructureMode::Reuse,
            baseline: Baseline::None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Both,
    Individual,
    Subset,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            ModeChoice::Both => vec![Mode::Individual, Mode::Subset],
            ModeChoice::Individual => vec![Mode::Individual],
            ModeChoice::Subset => vec![Mode::Subset],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub models: usize,
    pub mode: ModeChoice,
    pub matching: Matching,
    pub fitness: FitnessKind,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            models: 30,
            mode: ModeChoice::Both,
            matching: Matching::Exact,
            fitness: FitnessKind::Rmse,
        }
    }
}

/// Everything a command needs. Component seeds are derived from `seed` and
/// cannot be set individually.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synth: SynthConfig,
    pub gp: GpConfig,
    pub de: DeConfig,
    pub mlp: MlpConfig,
    pub cv: CvSection,
    pub features: FeaturesSection,
}

const SEEDED: [&str; 4] = ["gp", "de", "mlp", "synth"];

/// Sub-seed streams fanned out from the master seed.
pub mod seeds {
    pub const GP: u64 = 0x101;
    pub const DE: u64 = 0x102;
    pub const MLP: u64 = 0x103;
    pub const SYNTH: u64 = 0x104;
    pub const PLAN: u64 = 0x105;
}

/// Sets `path` (dotted) in `table`, creating intermediate tables.
pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Usage(format!("empty key `{path}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{p}` in `{path}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
pub fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn load_table(path: Option<&Path>) -> Result<Table, CliError> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Deserializes and validates a merged table.
pub fn resolve(table: Table) -> Result<RunConfig, CliError> {
    for section in SEEDED {
        if table
            .get(section)
            .and_then(Value::as_table)
            .is_some_and(|t| t.contains_key("seed"))
        {
            return Err(CliError::Usage(format!(
                "`{section}.seed` cannot be set; component seeds derive from the top-level `seed`"
            )));
        }
    }
    let mut cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
    let derive = |stream| fntree::seed::derive(cfg.seed, &[stream]);
    cfg.gp.seed = derive(seeds::GP);
    cfg.de.seed = derive(seeds::DE);
    cfg.mlp.seed = derive(seeds::MLP);
    cfg.synth.seed = derive(seeds::SYNTH);
    let usage = |e: String| CliError::Usage(e);
    cfg.gp.validate().map_err(|e| usage(e.to_string()))?;
    cfg.de.validate().map_err(|e| usage(e.to_string()))?;
    cfg.mlp.validate().map_err(|e| usage(e.to_string()))?;
    cfg.synth.validate().map_err(|e| usage(e.to_string()))?;
    if cfg.features.models == 0 {
        return Err(usage("features.models must be at least 1".into()));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn plan_seed(&self) -> u64 {
        fntree::seed::derive(self.seed, &[seeds::PLAN])
    }

    /// Effective configuration as TOML. Component seeds are left out since
    /// they follow from the master seed.
    pub fn to_toml(&self) -> String {
        let mut plain = self.clone();
        plain.gp.seed = 0;
        plain.de.seed = 0;
        plain.mlp.seed = 0;
        plain.synth.seed = 0;
        let mut table = match Value::try_from(&plain).expect("config serializes") {
            Value::Table(t) => t,
            _ => unreachable!("config is a table"),
        };
        for section in SEEDED {
            if let Some(t) = table.get_mut(section).and_then(Value::as_table_mut) {
                t.remove("seed");
            }
        }
        toml::to_string(&table).expect("config serializes")
    }

    /// Effective configuration as `# `-prefixed lines for output headers.
    pub fn header(&self, command: &str) -> String {
        let mut s = format!("# fntree {command}\n");
        for line in self.to_toml().lines() {
            if line.is_empty() {
                s.push_str("#\n");
            } else {
                s.push_str("# ");
                s.push_str(line);
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(s: &str) -> Table {
        s.parse().unwrap()
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let mut t = table("seed = 4\ngp.population_size = 12\ngp.tournament_size = 4\nde.variant = \"rand_one\"\n");
        set_path(&mut t, "gp.population_size", parse_value("20")).unwrap();
        set_path(&mut t, "cv.scheme", parse_value("5x2fcv")).unwrap();
        let cfg = resolve(t).unwrap();
        assert_eq!(cfg.gp.population_size, 20);
        assert_eq!(cfg.cv.scheme, Scheme::FiveByTwo);
        assert_eq!(cfg.de.variant, fntree::DeVariant::RandOne);
        assert_eq!(cfg.gp.max_arity, 4);
        assert_eq!(cfg.gp.seed, fntree::seed::derive(4, &[seeds::GP]));
    }

    #[test]
    fn unknown_and_seed_keys_rejected() {
        assert!(resolve(table("gp.populaton_size = 3")).is_err());
        assert!(resolve(table("nonsense = 1")).is_err());
        assert!(resolve(table("gp.seed = 3")).is_err());
        assert!(resolve(table("gp.tournament_size = 100")).is_err());
    }

    #[test]
    fn values_parse_as_toml_or_string() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("rand_one"), Value::String("rand_one".into()));
        assert_eq!(parse_value("[0.0, 2.0]").as_array().unwrap().len(), 2);
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = resolve(Table::new()).unwrap();
        let back = resolve(cfg.to_toml().parse().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.header("train").lines().all(|l| l.starts_with('#')));
    }
}
