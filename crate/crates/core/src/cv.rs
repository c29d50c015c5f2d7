//! Cross-validation: k-fold and 5x2 fold plans, FNT and MLP runners, and
//! report rendering.
//!
//! By default the FNT structure is searched once, on the first fold's
//! training rows, and later folds only refit its parameters.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{fit_normalization, DataError, Dataset};
use crate::de::{optimize_parameters, DeConfig, DeError};
use crate::gp::{train_fnt, GpConfig, GpError};
use crate::metrics::{aggregate, correlation_of, rmse_of, MetricsError};
use crate::mlp::{train_mlp, MlpConfig, MlpError};
use crate::seed::{self, stream};
use crate::tree::{FntModel, TreeError};

#[derive(Debug, Error)]
pub enum CvError {
    #[error("{scheme} needs at least {needed} rows, found {found}")]
    TooFewRows {
        scheme: Scheme,
        needed: usize,
        found: usize,
    },
    #[error("k-fold needs k >= 2, got {0}")]
    BadK(usize),
    #[error("plan covers {plan} rows but the dataset has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("no reports to render")]
    NoReports,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    De(#[from] DeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    KFold(usize),
    FiveByTwo,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::KFold(k) => write!(f, "{k}fcv"),
            Scheme::FiveByTwo => f.write_str("5x2fcv"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "5x2fcv" {
            return Ok(Scheme::FiveByTwo);
        }
        s.strip_suffix("fcv")
            .and_then(|k| k.parse().ok())
            .filter(|&k| k >= 2)
            .map(Scheme::KFold)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected e.g. 10fcv or 5x2fcv)"))
    }
}

impl TryFrom<String> for Scheme {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

/// One (train, test) evaluation. For k-fold `repetition` is 0 and `role`
/// the fold number; for 5x2 `role` 0 trains on the first half.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub repetition: usize,
    pub role: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: Scheme,
    pub seed: u64,
    pub n_rows: usize,
    pub folds: Vec<Fold>,
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

pub fn make_fold_plan(n_rows: usize, scheme: Scheme, seed_: u64) -> Result<FoldPlan, CvError> {
    let folds = match scheme {
        Scheme::KFold(k) => {
            if k < 2 {
                return Err(CvError::BadK(k));
            }
            if n_rows < k {
                return Err(CvError::TooFewRows {
                    scheme,
                    needed: k,
                    found: n_rows,
                });
            }
            let mut perm: Vec<usize> = (0..n_rows).collect();
            perm.shuffle(&mut seed::rng(seed_, &[stream::CV_PLAN]));
            let (base, extra) = (n_rows / k, n_rows % k);
            let mut start = 0;
            (0..k)
                .map(|i| {
                    let size = base + usize::from(i < extra);
                    let test = &perm[start..start + size];
                    let train = perm[..start].iter().chain(&perm[start + size..]).copied().collect();
                    start += size;
                    Fold {
                        repetition: 0,
                        role: i,
                        train: sorted(train),
                        test: sorted(test.to_vec()),
                    }
                })
                .collect()
        }
        Scheme::FiveByTwo => {
            if n_rows < 2 {
                return Err(CvError::TooFewRows {
                    scheme,
                    needed: 2,
                    found: n_rows,
                });
            }
            let mut folds = Vec::with_capacity(10);
            for rep in 0..5 {
                let mut perm: Vec<usize> = (0..n_rows).collect();
                perm.shuffle(&mut seed::rng(seed_, &[stream::CV_PLAN, rep as u64]));
                let (a, b) = perm.split_at(n_rows.div_ceil(2));
                let (a, b) = (sorted(a.to_vec()), sorted(b.to_vec()));
                folds.push(Fold {
                    repetition: rep,
                    role: 0,
                    train: a.clone(),
                    test: b.clone(),
                });
                folds.push(Fold {
                    repetition: rep,
                    role: 1,
                    train: b,
                    test: a,
                });
            }
            folds
        }
    };
    Ok(FoldPlan {
        scheme,
        seed: seed_,
        n_rows,
        folds,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureMode {
    /// Search the structure on the first fold, refit parameters elsewhere.
    #[default]
    Reuse,
    /// Search a new structure on every fold.
    PerFold,
}

impl FromStr for StructureMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reuse" => Ok(StructureMode::Reuse),
            "per-fold" => Ok(StructureMode::PerFold),
            _ => Err(format!("unknown structure mode `{s}` (reuse|per-fold)")),
        }
    }
}

/// Test-row prediction kept for plotting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row_index: usize,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repetition: usize,
    pub role: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    /// Absent when a series has zero variance or fewer than two points.
    pub train_r: Option<f64>,
    pub test_r: Option<f64>,
    pub complexity: Option<usize>,
    pub selected_features: BTreeSet<usize>,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model_type: String,
    pub scheme: Scheme,
    pub mean_train_rmse: f64,
    pub mean_test_rmse: f64,
    /// Means and population standard deviations over the folds where r is
    /// defined; absent when no fold has one.
    pub mean_train_r: Option<f64>,
    pub mean_test_r: Option<f64>,
    pub std_train_r: Option<f64>,
    pub std_test_r: Option<f64>,
    pub model_complexity: Option<usize>,
    pub selected_features: BTreeSet<usize>,
    pub structure_reused: bool,
    pub per_fold: Vec<FoldRecord>,
}

fn optional_r(pred: &[f64], target: &[f64]) -> Result<Option<f64>, CvError> {
    match correlation_of(pred, target) {
        Ok(r) => Ok(Some(r)),
        Err(MetricsError::ZeroVariance | MetricsError::TooShort) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn r_summary(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let defined: Vec<f64> = values.flatten().collect();
    match aggregate(&defined) {
        Ok(s) => (Some(s.mean), Some(s.std)),
        Err(_) => (None, None),
    }
}

impl CvReport {
    /// Aggregates fold records. Complexity and features are reported when
    /// every fold agrees on them.
    pub fn from_folds(
        model_type: impl Into<String>,
        scheme: Scheme,
        structure_reused: bool,
        per_fold: Vec<FoldRecord>,
    ) -> Result<CvReport, CvError> {
        let tr: Vec<f64> = per_fold.iter().map(|f| f.train_rmse).collect();
        let te: Vec<f64> = per_fold.iter().map(|f| f.test_rmse).collect();
        let (mean_train_r, std_train_r) = r_summary(per_fold.iter().map(|f| f.train_r));
        let (mean_test_r, std_test_r) = r_summary(per_fold.iter().map(|f| f.test_r));
        let first = per_fold.first().ok_or(MetricsError::Empty)?;
        let uniform = per_fold.iter().all(|f| f.complexity == first.complexity);
        let same_features = per_fold
            .iter()
            .all(|f| f.selected_features == first.selected_features);
        Ok(CvReport {
            model_type: model_type.into(),
            scheme,
            mean_train_rmse: aggregate(&tr)?.mean,
            mean_test_rmse: aggregate(&te)?.mean,
            mean_train_r,
            mean_test_r,
            std_train_r,
            std_test_r,
            model_complexity: if uniform { first.complexity } else { None },
            selected_features: if same_features {
                first.selected_features.clone()
            } else {
                per_fold
                    .iter()
                    .flat_map(|f| f.selected_features.iter().copied())
                    .collect()
            },
            structure_reused,
            per_fold,
        })
    }
}

fn check_plan(data: &Dataset, plan: &FoldPlan) -> Result<(), CvError> {
    if plan.n_rows != data.len() {
        return Err(CvError::PlanMismatch {
            plan: plan.n_rows,
            data: data.len(),
        });
    }
    Ok(())
}

/// Normalized train/test slices of `fold`, scaled on its training rows.
fn fold_data(data: &Dataset, fold: &Fold) -> Result<(Dataset, Dataset), CvError> {
    let train = data.select(&fold.train);
    let test = data.select(&fold.test);
    let norm = fit_normalization(train.rows())?;
    Ok((norm.apply_dataset(&train)?, norm.apply_dataset(&test)?))
}

fn score<F>(
    fold: &Fold,
    train: &Dataset,
    test: &Dataset,
    predict: F,
    complexity: Option<usize>,
    selected_features: BTreeSet<usize>,
) -> Result<FoldRecord, CvError>
where
    F: Fn(&[f64]) -> Result<f64, CvError>,
{
    let run = |d: &Dataset| -> Result<(Vec<f64>, Vec<f64>), CvError> {
        let p = d.rows().iter().map(|r| predict(&r.features)).collect::<Result<_, _>>()?;
        Ok((p, d.targets()))
    };
    let (ptr, ttr) = run(train)?;
    let (pte, tte) = run(test)?;
    Ok(FoldRecord {
        repetition: fold.repetition,
        role: fold.role,
        train_size: train.len(),
        test_size: test.len(),
        train_rmse: rmse_of(&ptr, &ttr)?,
        test_rmse: rmse_of(&pte, &tte)?,
        train_r: optional_r(&ptr, &ttr)?,
        test_r: optional_r(&pte, &tte)?,
        complexity,
        selected_features,
        predictions: fold
            .test
            .iter()
            .zip(pte.iter().zip(&tte))
            .map(|(&row_index, (&prediction, &target))| Prediction {
                row_index,
                target,
                prediction,
            })
            .collect(),
    })
}

fn fold_seed(base: u64, k: usize) -> u64 {
    seed::derive(base, &[stream::CV_FOLD, k as u64])
}

fn fnt_record(fold: &Fold, train: &Dataset, test: &Dataset, model: &FntModel) -> Result<FoldRecord, CvError> {
    score(
        fold,
        train,
        test,
        |x| Ok(model.predict(x)?),
        Some(model.complexity()),
        model.selected_features(),
    )
}

pub fn run_cv_fnt(
    data: &Dataset,
    plan: &FoldPlan,
    gp: &GpConfig,
    de: &DeConfig,
    mode: StructureMode,
) -> Result<CvReport, CvError> {
    check_plan(data, plan)?;
    let seeded = |k: usize| {
        (
            GpConfig {
                seed: fold_seed(gp.seed, k),
                ..gp.clone()
            },
            DeConfig {
                seed: fold_seed(de.seed, k),
                ..de.clone()
            },
        )
    };
    let records: Vec<FoldRecord> = match mode {
        StructureMode::Reuse => {
            let (first_train, first_test) = fold_data(data, &plan.folds[0])?;
            let (g0, d0) = seeded(0);
            let structure = train_fnt(&first_train, &g0, &d0)?.model;
            let first = fnt_record(&plan.folds[0], &first_train, &first_test, &structure)?;
            let rest: Vec<FoldRecord> = plan.folds[1..]
                .par_iter()
                .enumerate()
                .map(|(i, fold)| {
                    let (train, test) = fold_data(data, fold)?;
                    let (_, dk) = seeded(i + 1);
                    let fit = optimize_parameters(&structure, &train, &dk, &gp.ranges)?;
                    fnt_record(fold, &train, &test, &fit.model)
                })
                .collect::<Result<_, _>>()?;
            std::iter::once(first).chain(rest).collect()
        }
        StructureMode::PerFold => plan
            .folds
            .par_iter()
            .enumerate()
            .map(|(k, fold)| {
                let (train, test) = fold_data(data, fold)?;
                let (gk, dk) = seeded(k);
                let model = train_fnt(&train, &gk, &dk)?.model;
                fnt_record(fold, &train, &test, &model)
            })
            .collect::<Result<_, _>>()?,
    };
    CvReport::from_folds("FNT", plan.scheme, mode == StructureMode::Reuse, records)
}

pub fn run_cv_baseline(data: &Dataset, plan: &FoldPlan, mlp: &MlpConfig) -> Result<CvReport, CvError> {
    check_plan(data, plan)?;
    let all: BTreeSet<usize> = (0..data.n_features()).collect();
    let records: Vec<FoldRecord> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let (train, test) = fold_data(data, fold)?;
            let cfg = MlpConfig {
                seed: fold_seed(mlp.seed, k),
                ..mlp.clone()
            };
            let model = train_mlp(&train, &cfg)?.model;
            score(
                fold,
                &train,
                &test,
                |x| Ok(model.predict(x)?),
                Some(model.node_count()),
                all.clone(),
            )
        })
        .collect::<Result<_, _>>()?;
    CvReport::from_folds("MLP", plan.scheme, false, records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Reports ordered by mean test r (descending, undefined last), ties broken
/// by lower mean test RMSE.
pub fn sort_reports(reports: &[CvReport]) -> Vec<&CvReport> {
    let mut v: Vec<&CvReport> = reports.iter().collect();
    v.sort_by(|a, b| {
        let ra = a.mean_test_r.unwrap_or(f64::NEG_INFINITY);
        let rb = b.mean_test_r.unwrap_or(f64::NEG_INFINITY);
        rb.total_cmp(&ra).then(a.mean_test_rmse.total_cmp(&b.mean_test_rmse))
    });
    v
}

/// Aligned text table, one row per report.
pub fn render_report(reports: &[CvReport], feature_names: &[String]) -> Result<String, CvError> {
    if reports.is_empty() {
        return Err(CvError::NoReports);
    }
    let header = [
        "No.", "Model", "Scheme", "Train RMSE", "Test RMSE", "Train r", "Train r sd", "Test r",
        "Test r sd", "Complexity", "Features",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for (i, r) in sort_reports(reports).into_iter().enumerate() {
        let feats: Vec<String> = r
            .selected_features
            .iter()
            .map(|&k| feature_names.get(k).cloned().unwrap_or_else(|| format!("x{k}")))
            .collect();
        rows.push(vec![
            (i + 1).to_string(),
            r.model_type.clone(),
            r.scheme.to_string(),
            format!("{:.4}", r.mean_train_rmse),
            format!("{:.4}", r.mean_test_rmse),
            fmt_opt(r.mean_train_r),
            fmt_opt(r.std_train_r),
            fmt_opt(r.mean_test_r),
            fmt_opt(r.std_test_r),
            r.model_complexity.map_or("-".into(), |c| c.to_string()),
            feats.join(","),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c <= 2 || c == 10 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}

/// Per-fold test predictions: fold, repetition, role, row_index, target,
/// prediction.
pub fn write_predictions<W: Write>(report: &CvReport, out: W) -> Result<(), CvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "repetition", "role", "row_index", "target", "prediction"])
        .map_err(std::io::Error::from)?;
    for (k, f) in report.per_fold.iter().enumerate() {
        for p in &f.predictions {
            w.write_record([
                k.to_string(),
                f.repetition.to_string(),
                f.role.to_string(),
                p.row_index.to_string(),
                p.target.to_string(),
                p.prediction.to_string(),
            ])
            .map_err(std::io::Error::from)?;
        }
    }
    w.flush()?;
    Ok(())
}
