//! Feature importance from an ensemble of independently evolved models.
//!
//! For a feature set `A`, the selection rate `R` is the fraction of models
//! that select it. The fitness `F` is the summed training RMSE of those
//! models for a single feature, or their mean RMSE for a larger set. The
//! predictability `P` is `F / max F` over the sets evaluated.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{fit_normalization, DataError, Dataset};
use crate::de::DeConfig;
use crate::gp::{train_fnt, GpConfig, GpError};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least one model")]
    NoModels,
    #[error("feature set is empty")]
    EmptySet,
    #[error("every fitness is zero; predictability is undefined")]
    AllZero,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub selected_features: BTreeSet<usize>,
    pub rmse: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One set per input feature; a model matches if it uses the feature.
    #[default]
    Individual,
    /// One set per distinct observed selection.
    Subset,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "individual" => Ok(Mode::Individual),
            "subset" => Ok(Mode::Subset),
            _ => Err(format!("unknown mode `{s}` (individual|subset)")),
        }
    }
}

/// How a subset is matched against a model's selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    #[default]
    Exact,
    /// The subset is contained in the model's selection.
    Containment,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessKind {
    /// Built from the models' RMSEs.
    #[default]
    Rmse,
    /// Built from reciprocal RMSEs, so accurate models weigh more.
    InverseRmse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub matching: Matching,
    pub fitness: FitnessKind,
}

/// Trains `m` models on the whole (normalized) dataset with seeds derived
/// from the configs' seeds.
pub fn build_model_list(
    data: &Dataset,
    gp: &GpConfig,
    de: &DeConfig,
    m: usize,
) -> Result<Vec<ModelRecord>, AnalysisError> {
    if m == 0 {
        return Err(AnalysisError::NoModels);
    }
    let norm = fit_normalization(data.rows())?;
    let scaled = norm.apply_dataset(data)?;
    (0..m)
        .into_par_iter()
        .map(|i| {
            let g = GpConfig {
                seed: seed::derive(gp.seed, &[stream::ANALYSIS_MODEL, i as u64]),
                ..gp.clone()
            };
            let d = DeConfig {
                seed: seed::derive(de.seed, &[stream::ANALYSIS_MODEL, i as u64]),
                ..de.clone()
            };
            let fit = train_fnt(&scaled, &g, &d)?;
            Ok(ModelRecord {
                selected_features: fit.model.selected_features(),
                rmse: fit.train_rmse,
            })
        })
        .collect()
}

fn matches(record: &ModelRecord, set: &BTreeSet<usize>, mode: Mode, opts: AnalysisOptions) -> bool {
    match (mode, opts.matching) {
        (Mode::Individual, _) | (Mode::Subset, Matching::Containment) => {
            set.is_subset(&record.selected_features)
        }
        (Mode::Subset, Matching::Exact) => &record.selected_features == set,
    }
}

pub fn selection_rate(
    records: &[ModelRecord],
    set: &BTreeSet<usize>,
    mode: Mode,
    opts: AnalysisOptions,
) -> Result<f64, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoModels);
    }
    if set.is_empty() {
        return Err(AnalysisError::EmptySet);
    }
    let hits = records.iter().filter(|r| matches(r, set, mode, opts)).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Sum over matching models for single features, mean for larger sets,
/// zero when nothing matches.
pub fn fitness(
    records: &[ModelRecord],
    set: &BTreeSet<usize>,
    mode: Mode,
    opts: AnalysisOptions,
) -> f64 {
    let errors: Vec<f64> = records
        .iter()
        .filter(|r| matches(r, set, mode, opts))
        .map(|r| match opts.fitness {
            FitnessKind::Rmse => r.rmse,
            FitnessKind::InverseRmse => 1.0 / r.rmse.max(f64::MIN_POSITIVE),
        })
        .collect();
    if errors.is_empty() {
        return 0.0;
    }
    let total: f64 = errors.iter().sum();
    if set.len() == 1 {
        total
    } else {
        total / errors.len() as f64
    }
}

pub fn predictability(fitnesses: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let max = fitnesses.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(AnalysisError::AllZero);
    }
    Ok(fitnesses.iter().map(|f| f / max).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetScore {
    pub features: BTreeSet<usize>,
    pub selection_rate: f64,
    pub fitness: f64,
    pub predictability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub mode: Mode,
    pub models: usize,
    pub options: AnalysisOptions,
    pub scores: Vec<SetScore>,
}

/// Scores every single feature (individual mode) or every distinct observed
/// selection (subset mode). Subset rows come out by descending rate.
pub fn analyze(
    records: &[ModelRecord],
    n_features: usize,
    mode: Mode,
    opts: AnalysisOptions,
) -> Result<AnalysisResult, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::NoModels);
    }
    let sets: Vec<BTreeSet<usize>> = match mode {
        Mode::Individual => (0..n_features).map(|k| BTreeSet::from([k])).collect(),
        Mode::Subset => records
            .iter()
            .map(|r| r.selected_features.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let rates = sets
        .iter()
        .map(|s| selection_rate(records, s, mode, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let fits: Vec<f64> = sets.iter().map(|s| fitness(records, s, mode, opts)).collect();
    let preds = predictability(&fits)?;
    let mut scores: Vec<SetScore> = sets
        .into_iter()
        .zip(rates)
        .zip(fits.into_iter().zip(preds))
        .map(|((features, selection_rate), (fitness, predictability))| SetScore {
            features,
            selection_rate,
            fitness,
            predictability,
        })
        .collect();
    if mode == Mode::Subset {
        scores.sort_by(|a, b| b.selection_rate.total_cmp(&a.selection_rate));
    }
    Ok(AnalysisResult {
        mode,
        models: records.len(),
        options: opts,
        scores,
    })
}

pub fn set_label(set: &BTreeSet<usize>, names: &[String]) -> String {
    let parts: Vec<String> = set
        .iter()
        .map(|&k| names.get(k).cloned().unwrap_or_else(|| format!("x{k}")))
        .collect();
    parts.join("+")
}

/// Aligned text table: feature set, R, F, P.
pub fn render_analysis(result: &AnalysisResult, names: &[String]) -> String {
    let mut rows = vec![["Feature set".to_string(), "R".into(), "F".into(), "P".into()]];
    for s in &result.scores {
        rows.push([
            set_label(&s.features, names),
            format!("{:.5}", s.selection_rate),
            format!("{:.5}", s.fitness),
            format!("{:.5}", s.predictability),
        ]);
    }
    let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
    let wn = rows.iter().flat_map(|r| r[1..].iter().map(|c| c.len())).max().unwrap_or(0);
    rows.iter()
        .map(|r| format!("{:<w0$}  {:>wn$}  {:>wn$}  {:>wn$}\n", r[0], r[1], r[2], r[3]))
        .collect()
}

/// CSV of scores: mode, feature_set, R, F, P.
pub fn write_scores<W: Write>(result: &AnalysisResult, names: &[String], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    let mode = match result.mode {
        Mode::Individual => "individual",
        Mode::Subset => "subset",
    };
    w.write_record(["mode", "feature_set", "selection_rate", "fitness", "predictability"])
        .map_err(std::io::Error::from)?;
    for s in &result.scores {
        w.write_record([
            mode.to_string(),
            set_label(&s.features, names),
            s.selection_rate.to_string(),
            s.fitness.to_string(),
            s.predictability.to_string(),
        ])
        .map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Raw record list: model, rmse, selected_features.
pub fn write_records<W: Write>(records: &[ModelRecord], names: &[String], out: W) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "rmse", "selected_features"])
        .map_err(std::io::Error::from)?;
    for (i, r) in records.iter().enumerate() {
        w.write_record([i.to_string(), r.rmse.to_string(), set_label(&r.selected_features, names)])
            .map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rec(features: &[usize], rmse: f64) -> ModelRecord {
        ModelRecord {
            selected_features: features.iter().copied().collect(),
            rmse,
        }
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    const O: AnalysisOptions = AnalysisOptions {
        matching: Matching::Exact,
        fitness: FitnessKind::Rmse,
    };

    #[test]
    fn rate_extremes() {
        let recs = [rec(&[2, 3], 1.0), rec(&[2], 2.0), rec(&[0, 2], 3.0)];
        assert_eq!(selection_rate(&recs, &set(&[2]), Mode::Individual, O).unwrap(), 1.0);
        assert_eq!(selection_rate(&recs, &set(&[1]), Mode::Individual, O).unwrap(), 0.0);
        assert!(matches!(
            selection_rate(&recs, &set(&[]), Mode::Individual, O),
            Err(AnalysisError::EmptySet)
        ));
        assert!(matches!(
            selection_rate(&[], &set(&[1]), Mode::Individual, O),
            Err(AnalysisError::NoModels)
        ));
    }

    #[test]
    fn subset_rate_nine_of_twenty_nine() {
        let mut recs: Vec<ModelRecord> = (0..9).map(|_| rec(&[0, 1, 2, 3], 2.0)).collect();
        recs.extend((0..20).map(|_| rec(&[2, 3], 2.0)));
        let r = selection_rate(&recs, &set(&[0, 1, 2, 3]), Mode::Subset, O).unwrap();
        assert_relative_eq!(r, 9.0 / 29.0, max_relative = 1e-12);
        assert!((r - 0.31035).abs() < 1e-5);
        // containment also counts supersets
        let contain = AnalysisOptions {
            matching: Matching::Containment,
            ..O
        };
        assert_eq!(selection_rate(&recs, &set(&[2, 3]), Mode::Subset, contain).unwrap(), 1.0);
        assert_relative_eq!(selection_rate(&recs, &set(&[2, 3]), Mode::Subset, O).unwrap(), 20.0 / 29.0);
    }

    #[test]
    fn fitness_cases() {
        let recs = [rec(&[1], 2.0), rec(&[1, 2], 3.0), rec(&[1, 3], 4.0)];
        assert_eq!(fitness(&recs, &set(&[1]), Mode::Individual, O), 9.0);
        assert_eq!(fitness(&recs, &set(&[0]), Mode::Individual, O), 0.0);
        assert_eq!(fitness(&[rec(&[0, 1], 2.5)], &set(&[0, 1]), Mode::Subset, O), 2.5);
        let inv = AnalysisOptions {
            fitness: FitnessKind::InverseRmse,
            ..O
        };
        assert_relative_eq!(fitness(&recs, &set(&[1]), Mode::Individual, inv), 0.5 + 1.0 / 3.0 + 0.25);
    }

    #[test]
    fn predictability_normalizes() {
        assert_eq!(predictability(&[1.0, 2.0, 4.0]).unwrap(), vec![0.25, 0.5, 1.0]);
        assert!(matches!(predictability(&[0.0, 0.0]), Err(AnalysisError::AllZero)));
    }

    #[test]
    fn analyze_modes() {
        let recs = [rec(&[2, 3], 1.0), rec(&[2, 3], 1.5), rec(&[0, 2, 3], 2.0), rec(&[3], 3.0)];
        let ind = analyze(&recs, 4, Mode::Individual, O).unwrap();
        assert_eq!(ind.scores.len(), 4);
        assert_eq!(ind.scores[3].selection_rate, 1.0);
        assert_eq!(ind.scores[3].predictability, 1.0);
        assert_eq!(ind.scores[1].selection_rate, 0.0);
        let sub = analyze(&recs, 4, Mode::Subset, O).unwrap();
        assert_eq!(sub.scores.len(), 3);
        assert_eq!(sub.scores[0].features, set(&[2, 3]));
        let total: f64 = sub.scores.iter().map(|s| s.selection_rate).sum();
        assert_relative_eq!(total, 1.0);
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let table = render_analysis(&sub, &names);
        assert!(table.lines().nth(1).unwrap().starts_with("c+d"));
        let mut buf = Vec::new();
        write_scores(&ind, &names, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("mode,feature_set,"));
    }

    fn records() -> impl Strategy<Value = Vec<ModelRecord>> {
        prop::collection::vec(
            (prop::collection::btree_set(0usize..5, 1..=5), 0.01f64..10.0)
                .prop_map(|(s, e)| ModelRecord { selected_features: s, rmse: e }),
            1..40,
        )
    }

    proptest! {
        #[test]
        fn individual_identity(recs in records()) {
            let m = recs.len() as f64;
            for k in 0..5 {
                let s = set(&[k]);
                let r = selection_rate(&recs, &s, Mode::Individual, O).unwrap();
                let f = fitness(&recs, &s, Mode::Individual, O);
                let sel: Vec<f64> = recs.iter().filter(|x| x.selected_features.contains(&k)).map(|x| x.rmse).collect();
                let expect = if sel.is_empty() { 0.0 } else { r * m * sel.iter().sum::<f64>() / sel.len() as f64 };
                prop_assert!((f - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }

        #[test]
        fn scores_are_bounded(recs in records()) {
            for mode in [Mode::Individual, Mode::Subset] {
                let res = analyze(&recs, 5, mode, O).unwrap();
                for s in &res.scores {
                    prop_assert!((0.0..=1.0).contains(&s.selection_rate));
                    prop_assert!((0.0..=1.0).contains(&s.predictability));
                }
                let max = res.scores.iter().map(|s| s.predictability).fold(0.0, f64::max);
                prop_assert_eq!(max, 1.0);
            }
            let sub = analyze(&recs, 5, Mode::Subset, O).unwrap();
            let total: f64 = sub.scores.iter().map(|s| s.selection_rate).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
