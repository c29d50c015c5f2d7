//! `fntree`: synthesize data, train flexible neural trees, cross-validate
//! against an MLP baseline and rank features.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fntree::analysis::{analyze, build_model_list, render_analysis, write_records, write_scores, AnalysisOptions};
use fntree::cv::{make_fold_plan, render_report, run_cv_baseline, run_cv_fnt, write_predictions};
use fntree::data::{fit_normalization, generate_synthetic, load_csv, DataError};
use fntree::gp::{train_fnt, write_generation_log};
use fntree::metrics::{correlation_of, rmse_of};
use fntree::{CvReport, Dataset};
use serde::Serialize;
use toml::Value;

use config::{load_table, parse_value, resolve, set_path, Baseline, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "fntree", version, about = "Flexible neural tree regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic die-filling dataset.
    Synth(Common),
    /// Evolve and fit a model on a whole dataset.
    Train(Common),
    /// Cross-validate the tree model and optionally the MLP baseline.
    Cv(Common),
    /// Train an ensemble and score input features.
    Features(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Gaussian {
    Squared,
    #[value(name = "paper_eq5")]
    PaperEq5,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DeVariantArg {
    #[value(name = "paper_eq7")]
    PaperEq7,
    #[value(name = "rand_one")]
    RandOne,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    #[value(name = "10fcv")]
    TenFold,
    #[value(name = "5x2fcv")]
    FiveByTwo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Individual,
    Subset,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    None,
    Mlp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StructureArg {
    Reuse,
    PerFold,
}

#[derive(Args, Debug)]
struct Common {
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// TOML config with dotted keys, e.g. `gp.population_size = 30`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Target column (defaults to the last column).
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Number of ensemble models for feature analysis.
    #[arg(long)]
    models: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long = "de-variant", value_enum)]
    de_variant: Option<DeVariantArg>,
    #[arg(long, value_enum)]
    gaussian: Option<Gaussian>,
    #[arg(long, value_enum)]
    structure: Option<StructureArg>,
    /// Override any config key, e.g. `--set gp.max_generations=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut t = load_table(self.config.as_deref())?;
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            set_path(&mut t, k.trim(), parse_value(v.trim()))?;
        }
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed)
                .map_err(|_| CliError::Usage(format!("--seed must be at most {}", i64::MAX)))?;
            set_path(&mut t, "seed", Value::Integer(seed))?;
        }
        if let Some(m) = self.models {
            let m = i64::try_from(m).map_err(|_| CliError::Usage("--models too large".into()))?;
            set_path(&mut t, "features.models", Value::Integer(m))?;
        }
        if let Some(target) = &self.target {
            set_path(&mut t, "data.target", Value::String(target.clone()))?;
        }
        // the unsquared form is stored under its own name
        let gaussian = self.gaussian.map(|g| match g {
            Gaussian::Squared => "squared".to_string(),
            Gaussian::PaperEq5 => "unsquared".to_string(),
        });
        for (key, value) in [
            ("cv.scheme", self.scheme.map(value_name)),
            ("features.mode", self.mode.map(value_name)),
            ("cv.baseline", self.baseline.map(value_name)),
            ("de.variant", self.de_variant.map(value_name)),
            ("cv.structure", self.structure.map(value_name)),
            ("gp.activation", gaussian),
        ] {
            if let Some(v) = value {
                set_path(&mut t, key, Value::String(v))?;
            }
        }
        resolve(t)
    }

    fn dataset(&self, cfg: &RunConfig) -> Result<Dataset, CliError> {
        let path = self
            .data
            .as_deref()
            .ok_or_else(|| CliError::Usage("--data is required".into()))?;
        let target = if cfg.data.target.is_empty() {
            last_column(path)?
        } else {
            cfg.data.target.clone()
        };
        load_csv(path, &target).map_err(data_error)
    }
}

fn value_name<V: ValueEnum>(v: V) -> String {
    v.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn data_error(e: DataError) -> CliError {
    CliError::Data(format!("data: {e}"))
}

/// Name of the last header column, skipping `#` comment lines.
fn last_column(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("data {}: {e}", path.display())))?;
    text.lines()
        .find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .and_then(|h| h.rsplit(',').next())
        .map(|c| c.trim().to_string())
        .ok_or_else(|| CliError::Data(format!("data {}: missing header row", path.display())))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Usage(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("creating {}: {e}", dir.display())))
}

fn with_header(cfg: &RunConfig, command: &str, body: &[u8]) -> Vec<u8> {
    let mut v = cfg.header(command).into_bytes();
    v.extend_from_slice(body);
    v
}

fn cmd_synth(args: &Common) -> Result<(), CliError> {
    let cfg = args.run_config()?;
    let data = generate_synthetic(&cfg.synth).map_err(|e| CliError::Usage(e.to_string()))?;
    prepare_out(&args.out)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(internal)?;
    let path = write_file(&args.out, "synthetic.csv", &with_header(&cfg, "synth", &buf))?;
    println!("wrote {} rows to {} (seed {})", data.len(), path.display(), cfg.seed);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    train_rmse: f64,
    train_r: Option<f64>,
    complexity: usize,
    selected_features: Vec<&'a str>,
    normalization: &'a fntree::NormalizationParams,
    target: &'a str,
    features: &'a [String],
}

fn cmd_train(args: &Common) -> Result<(), CliError> {
    let cfg = args.run_config()?;
    let data = args.dataset(&cfg)?;
    prepare_out(&args.out)?;
    let norm = fit_normalization(data.rows()).map_err(data_error)?;
    let scaled = norm.apply_dataset(&data).map_err(data_error)?;
    let fit = train_fnt(&scaled, &cfg.gp, &cfg.de).map_err(internal)?;
    let pred: Vec<f64> = scaled
        .rows()
        .iter()
        .map(|r| fit.model.predict(&r.features))
        .collect::<Result<_, _>>()
        .map_err(internal)?;
    let targets = scaled.targets();
    let rmse = rmse_of(&pred, &targets).map_err(internal)?;
    let r = correlation_of(&pred, &targets).ok();
    let names = data.feature_names();
    let summary = TrainSummary {
        train_rmse: rmse,
        train_r: r,
        complexity: fit.model.complexity(),
        selected_features: fit.model.selected_features().iter().map(|&k| names[k].as_str()).collect(),
        normalization: &norm,
        target: data.target_name(),
        features: names,
    };

    write_file(&args.out, "model.fnt", &with_header(&cfg, "train", fit.model.to_text().as_bytes()))?;
    let mut log = Vec::new();
    write_generation_log(&fit.history, &mut log).map_err(internal)?;
    write_file(&args.out, "generations.csv", &with_header(&cfg, "train", &log))?;
    let json = serde_json::json!({ "config": cfg, "summary": summary });
    write_file(&args.out, "train_summary.json", pretty(&json)?.as_bytes())?;

    println!("train RMSE   {rmse:.6}");
    println!("train r      {}", r.map_or("undefined".into(), |r| format!("{r:.6}")));
    println!("complexity   {}", fit.model.complexity());
    println!("features     {}", summary.selected_features.join(", "));
    println!("model        {}", args.out.join("model.fnt").display());
    Ok(())
}

fn pretty(v: &serde_json::Value) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(internal)?;
    s.push('\n');
    Ok(s)
}

fn cmd_cv(args: &Common) -> Result<(), CliError> {
    let cfg = args.run_config()?;
    let data = args.dataset(&cfg)?;
    prepare_out(&args.out)?;
    let plan = make_fold_plan(data.len(), cfg.cv.scheme, cfg.plan_seed()).map_err(|e| CliError::Data(e.to_string()))?;
    let mut reports: Vec<CvReport> = vec![run_cv_fnt(&data, &plan, &cfg.gp, &cfg.de, cfg.cv.structure).map_err(internal)?];
    if cfg.cv.baseline == Baseline::Mlp {
        reports.push(run_cv_baseline(&data, &plan, &cfg.mlp).map_err(internal)?);
    }
    let table = render_report(&reports, data.feature_names()).map_err(internal)?;
    write_file(&args.out, "cv_report.txt", &with_header(&cfg, "cv", table.as_bytes()))?;
    let json = serde_json::json!({
        "config": cfg,
        "features": data.feature_names(),
        "target": data.target_name(),
        "reports": reports,
    });
    write_file(&args.out, "cv_report.json", pretty(&json)?.as_bytes())?;
    for rep in &reports {
        let mut buf = Vec::new();
        write_predictions(rep, &mut buf).map_err(internal)?;
        let name = format!("predictions_{}.csv", rep.model_type.to_lowercase());
        write_file(&args.out, &name, &with_header(&cfg, "cv", &buf))?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_features(args: &Common) -> Result<(), CliError> {
    let cfg = args.run_config()?;
    let data = args.dataset(&cfg)?;
    prepare_out(&args.out)?;
    let records = build_model_list(&data, &cfg.gp, &cfg.de, cfg.features.models).map_err(internal)?;
    let names = data.feature_names();
    let opts = AnalysisOptions {
        matching: cfg.features.matching,
        fitness: cfg.features.fitness,
    };
    let mut buf = Vec::new();
    write_records(&records, names, &mut buf).map_err(internal)?;
    write_file(&args.out, "models.csv", &with_header(&cfg, "features", &buf))?;
    let mut report = String::new();
    let mut results = Vec::new();
    for mode in cfg.features.mode.modes() {
        let res = analyze(&records, data.n_features(), mode, opts).map_err(internal)?;
        let label = match mode {
            fntree::Mode::Individual => "individual",
            fntree::Mode::Subset => "subset",
        };
        let mut csv = Vec::new();
        write_scores(&res, names, &mut csv).map_err(internal)?;
        write_file(&args.out, &format!("features_{label}.csv"), &with_header(&cfg, "features", &csv))?;
        report.push_str(&format!("{label} ({} models)\n", res.models));
        report.push_str(&render_analysis(&res, names));
        report.push('\n');
        results.push(res);
    }
    write_file(&args.out, "features_report.txt", &with_header(&cfg, "features", report.as_bytes()))?;
    let json = serde_json::json!({ "config": cfg, "features": names, "records": records, "analyses": results });
    write_file(&args.out, "features.json", pretty(&json)?.as_bytes())?;
    print!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Features(a) => cmd_features(a),
    };
    match result {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
