//! Tabular regression data: CSV ingestion, min-max feature scaling and a
//! synthetic die-filling generator built on the critical-velocity fill law.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("duplicate column name `{0}` in header")]
    DuplicateHeader(String),
    #[error("target column `{0}` not found in header")]
    UnknownTarget(String),
    #[error("row {row}, column `{column}`: {reason} (`{value}`)")]
    BadCell {
        /// 1-based data row number (the header is row 0).
        row: usize,
        column: String,
        value: String,
        reason: &'static str,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("dataset needs at least one feature column")]
    NoFeatures,
    #[error("feature arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("cannot fit normalization on an empty row set")]
    EmptyRows,
    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),
}

/// One observation: feature vector plus scalar target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: f64) -> Self {
        Self { features, target }
    }
}

/// Named feature columns plus one target column.
///
/// Construction through [`Dataset::new`] enforces at least two rows, at least
/// one feature, uniform arity and finite values. Row subsets produced by
/// [`Dataset::select`] (fold slices) may hold a single row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    rows: Vec<Sample>,
    provenance: String,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        rows: Vec<Sample>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        if rows.len() < 2 {
            return Err(DataError::TooFewRows {
                needed: 2,
                found: rows.len(),
            });
        }
        Self::from_parts(feature_names, target_name.into(), rows, provenance.into())
    }

    fn from_parts(
        feature_names: Vec<String>,
        target_name: String,
        rows: Vec<Sample>,
        provenance: String,
    ) -> Result<Self, DataError> {
        if feature_names.is_empty() {
            return Err(DataError::NoFeatures);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.features.len() != feature_names.len() {
                return Err(DataError::ArityMismatch {
                    expected: feature_names.len(),
                    found: row.features.len(),
                });
            }
            if !row.target.is_finite() || row.features.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row: i });
            }
        }
        Ok(Self {
            feature_names,
            target_name,
            rows,
            provenance,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Row subset in the given index order. Panics on out-of-range indices.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Same schema, new rows (e.g. after normalization).
    pub fn with_rows(&self, rows: Vec<Sample>) -> Result<Dataset, DataError> {
        Self::from_parts(
            self.feature_names.clone(),
            self.target_name.clone(),
            rows,
            self.provenance.clone(),
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record: Vec<String> = row.features.iter().map(|v| v.to_string()).collect();
            record.push(row.target.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Loads a comma-separated file with one header row. Features keep header
/// order with the target column removed.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, target_column, &path.display().to_string())
}

pub fn read_csv<R: Read>(
    reader: R,
    target_column: &str,
    provenance: &str,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(DataError::MissingHeader),
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    if names.iter().all(String::is_empty) {
        return Err(DataError::MissingHeader);
    }
    let mut seen = HashSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(DataError::DuplicateHeader(name.clone()));
        }
    }
    let target_idx = names
        .iter()
        .position(|n| n == target_column)
        .ok_or_else(|| DataError::UnknownTarget(target_column.to_owned()))?;

    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != names.len() {
            return Err(DataError::RaggedRow {
                row: row_no,
                expected: names.len(),
                found: record.len(),
            });
        }
        let mut features = Vec::with_capacity(names.len() - 1);
        let mut target = 0.0;
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| DataError::BadCell {
                row: row_no,
                column: names[j].clone(),
                value: cell.to_owned(),
                reason: "not a number",
            })?;
            if !value.is_finite() {
                return Err(DataError::BadCell {
                    row: row_no,
                    column: names[j].clone(),
                    value: cell.to_owned(),
                    reason: "not finite",
                });
            }
            if j == target_idx {
                target = value;
            } else {
                features.push(value);
            }
        }
        rows.push(Sample { features, target });
    }
    let mut feature_names = names;
    let target_name = feature_names.remove(target_idx);
    Dataset::new(feature_names, target_name, rows, provenance)
}

/// Per-feature min/max, fit on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_normalization(rows: &[Sample]) -> Result<NormalizationParams, DataError> {
    let first = rows.first().ok_or(DataError::EmptyRows)?;
    let mut min = first.features.clone();
    let mut max = first.features.clone();
    for row in &rows[1..] {
        if row.features.len() != min.len() {
            return Err(DataError::ArityMismatch {
                expected: min.len(),
                found: row.features.len(),
            });
        }
        for (k, &v) in row.features.iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    Ok(NormalizationParams { min, max })
}

impl NormalizationParams {
    pub fn arity(&self) -> usize {
        self.min.len()
    }

    fn check(&self, rows: &[Sample]) -> Result<(), DataError> {
        match rows.iter().find(|r| r.features.len() != self.arity()) {
            Some(r) => Err(DataError::ArityMismatch {
                expected: self.arity(),
                found: r.features.len(),
            }),
            None => Ok(()),
        }
    }

    /// Maps each feature to `(x - min) / (max - min)`; constant columns map
    /// to 0. Targets are untouched and values outside the fitted range are
    /// not clamped.
    pub fn apply(&self, rows: &[Sample]) -> Result<Vec<Sample>, DataError> {
        self.check(rows)?;
        Ok(rows
            .iter()
            .map(|r| Sample {
                features: r
                    .features
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| {
                        let span = self.max[k] - self.min[k];
                        if span > 0.0 {
                            (x - self.min[k]) / span
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                target: r.target,
            })
            .collect())
    }

    /// Inverse of [`apply`](Self::apply). Constant columns map back to `min`.
    pub fn invert(&self, rows: &[Sample]) -> Result<Vec<Sample>, DataError> {
        self.check(rows)?;
        Ok(rows
            .iter()
            .map(|r| Sample {
                features: r
                    .features
                    .iter()
                    .enumerate()
                    .map(|(k, &z)| self.min[k] + z * (self.max[k] - self.min[k]))
                    .collect(),
                target: r.target,
            })
            .collect())
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Result<Dataset, DataError> {
        data.with_rows(self.apply(data.rows())?)
    }
}

/// Powder grade entering the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub true_density: f64,
    pub d50: f64,
}

/// `intercept + granule_size_coef * size + property_coef * property`, where
/// the property is true density (full-die mass) or d50 (critical velocity).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    pub intercept: f64,
    pub granule_size_coef: f64,
    pub property_coef: f64,
}

impl AffineMap {
    pub fn eval(&self, granule_size: f64, property: f64) -> f64 {
        self.intercept + self.granule_size_coef * granule_size + self.property_coef * property
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub materials: Vec<Material>,
    /// Granule size classes in µm.
    pub granule_sizes: Vec<f64>,
    /// Shoe speeds in mm/s.
    pub shoe_speeds: Vec<f64>,
    pub repeats: usize,
    /// Fill-law exponent, 1.0 to 1.6.
    pub m_exponent: f64,
    /// Standard deviation of additive Gaussian noise on the mass, in grams.
    pub noise_sd: f64,
    /// Full-die mass from (granule size, true density).
    pub full_die_mass: AffineMap,
    /// Critical shoe velocity from (granule size, d50).
    pub critical_velocity: AffineMap,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Three MCC grades, six sieve classes, seven shoe speeds, three repeats.
    fn default() -> Self {
        Self {
            materials: vec![
                Material {
                    true_density: 1581.0,
                    d50: 59.83,
                },
                Material {
                    true_density: 1570.3,
                    d50: 94.7,
                },
                Material {
                    true_density: 1785.6,
                    d50: 52.33,
                },
            ],
            granule_sizes: vec![90.0, 250.0, 500.0, 1000.0, 1400.0, 2360.0],
            shoe_speeds: vec![10.0, 20.0, 30.0, 50.0, 60.0, 200.0, 400.0],
            repeats: 3,
            m_exponent: 1.3,
            noise_sd: 0.3,
            full_die_mass: AffineMap {
                intercept: 5.0,
                granule_size_coef: -0.0008,
                property_coef: 0.005,
            },
            critical_velocity: AffineMap {
                intercept: 20.0,
                granule_size_coef: 0.1,
                property_coef: 0.2,
            },
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidSynthConfig(msg));
        if self.materials.is_empty() || self.granule_sizes.is_empty() || self.shoe_speeds.is_empty()
        {
            return bad("materials, granule sizes and shoe speeds must be non-empty".into());
        }
        if self.repeats < 1 {
            return bad("repeats must be at least 1".into());
        }
        if !(1.0..=1.6).contains(&self.m_exponent) {
            return bad(format!("m_exponent {} outside [1.0, 1.6]", self.m_exponent));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be finite and >= 0", self.noise_sd));
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !self.granule_sizes.iter().all(positive) || !self.shoe_speeds.iter().all(positive) {
            return bad("granule sizes and shoe speeds must be strictly positive".into());
        }
        if !self
            .materials
            .iter()
            .all(|m| positive(&m.true_density) && positive(&m.d50))
        {
            return bad("material properties must be strictly positive".into());
        }
        for m in &self.materials {
            for &size in &self.granule_sizes {
                let vc = self.critical_velocity.eval(size, m.d50);
                let full = self.full_die_mass.eval(size, m.true_density);
                if !(vc.is_finite() && vc > 0.0) {
                    return bad(format!("critical velocity {vc} not positive at size {size}"));
                }
                if !(full.is_finite() && full >= 0.0) {
                    return bad(format!("full-die mass {full} negative at size {size}"));
                }
            }
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.materials.len() * self.granule_sizes.len() * self.shoe_speeds.len() * self.repeats
    }
}

/// Fill ratio `min(1, (v_c / v_s)^m)`.
pub fn fill_ratio(critical_velocity: f64, shoe_speed: f64, m: f64) -> f64 {
    (critical_velocity / shoe_speed).powf(m).min(1.0)
}

pub const SYNTH_FEATURES: [&str; 4] = ["true_density", "d50", "granule_size", "shoe_speed"];
pub const SYNTH_TARGET: &str = "mass";

/// Full factorial design over (material, size, speed, repeat), in that
/// nesting order.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let mut rng = seed::rng(config.seed, &[seed::stream::SYNTH_NOISE]);
    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| DataError::InvalidSynthConfig(e.to_string()))?;
    let mut rows = Vec::with_capacity(config.row_count());
    for m in &config.materials {
        for &size in &config.granule_sizes {
            let vc = config.critical_velocity.eval(size, m.d50);
            let full = config.full_die_mass.eval(size, m.true_density);
            for &speed in &config.shoe_speeds {
                let clean = full * fill_ratio(vc, speed, config.m_exponent);
                for _ in 0..config.repeats {
                    let eps = if config.noise_sd > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    rows.push(Sample {
                        features: vec![m.true_density, m.d50, size, speed],
                        target: (clean + eps).max(0.0),
                    });
                }
            }
        }
    }
    Dataset::new(
        SYNTH_FEATURES.iter().map(|s| s.to_string()).collect(),
        SYNTH_TARGET,
        rows,
        config.to_string(),
    )
}

impl fmt::Display for SynthConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "synthetic(materials={}, sizes={}, speeds={}, repeats={}, m={}, noise_sd={}, seed={})",
            self.materials.len(),
            self.granule_sizes.len(),
            self.shoe_speeds.len(),
            self.repeats,
            self.m_exponent,
            self.noise_sd,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[&[f64]]) -> Vec<Sample> {
        values
            .iter()
            .map(|v| Sample::new(v.to_vec(), 0.0))
            .collect()
    }

    #[test]
    fn parses_table_row() {
        let csv = "density,d50,size,speed,mass\n1581,59.83,90,10,12.81\n1581,59.83,90,10,12.78\n";
        let ds = read_csv(csv.as_bytes(), "mass", "mem").unwrap();
        assert_eq!(ds.n_features(), 4);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rows()[0].target, 12.81);
        assert_eq!(ds.rows()[0].features, vec![1581.0, 59.83, 90.0, 10.0]);
        assert_eq!(ds.feature_names(), ["density", "d50", "size", "speed"]);
    }

    #[test]
    fn single_data_row_is_rejected() {
        let csv = "density,d50,size,speed,mass\n1581,59.83,90,10,12.81\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), "mass", "mem"),
            Err(DataError::TooFewRows { found: 1, .. })
        ));
    }

    #[test]
    fn target_in_middle_column() {
        let csv = "a,y,b\n1,10,2\n3,30,4\n";
        let ds = read_csv(csv.as_bytes(), "y", "mem").unwrap();
        assert_eq!(ds.feature_names(), ["a", "b"]);
        assert_eq!(ds.rows()[1].features, vec![3.0, 4.0]);
        assert_eq!(ds.rows()[1].target, 30.0);
    }

    #[test]
    fn nan_cell_is_named() {
        let csv = "a,b,y\n1,2,3\n4,NaN,6\n";
        match read_csv(csv.as_bytes(), "y", "mem") {
            Err(DataError::BadCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            read_csv("".as_bytes(), "y", "mem"),
            Err(DataError::MissingHeader)
        ));
        assert!(matches!(
            read_csv("a,a,y\n1,2,3\n1,2,3\n".as_bytes(), "y", "mem"),
            Err(DataError::DuplicateHeader(_))
        ));
        assert!(matches!(
            read_csv("a,b\n1,2\n1,2\n".as_bytes(), "y", "mem"),
            Err(DataError::UnknownTarget(_))
        ));
        assert!(matches!(
            read_csv("a,y\n1,x\n1,2\n".as_bytes(), "y", "mem"),
            Err(DataError::BadCell { .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/data.csv", "y"),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn fit_examples() {
        let p = fit_normalization(&rows(&[&[10.0], &[400.0]])).unwrap();
        assert_eq!((p.min[0], p.max[0]), (10.0, 400.0));
        let p = fit_normalization(&rows(&[&[5.0]])).unwrap();
        assert_eq!((p.min[0], p.max[0]), (5.0, 5.0));
        let p = fit_normalization(&rows(&[&[1.0], &[2.0], &[3.0]])).unwrap();
        assert_eq!((p.min[0], p.max[0]), (1.0, 3.0));
        assert!(matches!(fit_normalization(&[]), Err(DataError::EmptyRows)));
    }

    #[test]
    fn apply_examples() {
        let p = NormalizationParams {
            min: vec![10.0],
            max: vec![400.0],
        };
        let out = p.apply(&rows(&[&[10.0], &[400.0], &[205.0], &[790.0]])).unwrap();
        assert_eq!(out[0].features[0], 0.0);
        assert_eq!(out[1].features[0], 1.0);
        assert_eq!(out[2].features[0], 0.5);
        // unseen rows are not clamped
        assert_eq!(out[3].features[0], 2.0);
        assert!(matches!(
            p.apply(&rows(&[&[1.0, 2.0]])),
            Err(DataError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let p = fit_normalization(&rows(&[&[3.0, 1.0], &[3.0, 2.0]])).unwrap();
        let out = p.apply(&rows(&[&[3.0, 1.5]])).unwrap();
        assert_eq!(out[0].features, vec![0.0, 0.5]);
    }

    #[test]
    fn fill_law_examples() {
        assert_eq!(fill_ratio(50.0, 100.0, 1.0), 0.5);
        assert_eq!(fill_ratio(50.0, 20.0, 1.3), 1.0);
        assert_eq!(10.0 * fill_ratio(50.0, 100.0, 1.0), 5.0);
    }

    #[test]
    fn synthetic_direct_evaluation() {
        // v_c = 50, M_full = 10, v_s in {25, 100}
        let cfg = SynthConfig {
            materials: vec![Material {
                true_density: 1.0,
                d50: 1.0,
            }],
            granule_sizes: vec![1.0],
            shoe_speeds: vec![25.0, 100.0],
            repeats: 1,
            m_exponent: 1.0,
            noise_sd: 0.0,
            full_die_mass: AffineMap {
                intercept: 10.0,
                granule_size_coef: 0.0,
                property_coef: 0.0,
            },
            critical_velocity: AffineMap {
                intercept: 50.0,
                granule_size_coef: 0.0,
                property_coef: 0.0,
            },
            seed: 1,
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.targets(), vec![10.0, 5.0]);
    }

    #[test]
    fn synthetic_counts() {
        let cfg = SynthConfig::default();
        assert_eq!(generate_synthetic(&cfg).unwrap().len(), 378);
        let cfg = SynthConfig {
            repeats: 1,
            ..SynthConfig::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap().len(), 126);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig {
            seed: 99,
            ..SynthConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let other = SynthConfig {
            seed: 100,
            ..SynthConfig::default()
        };
        assert_ne!(
            generate_synthetic(&cfg).unwrap().targets(),
            generate_synthetic(&other).unwrap().targets()
        );
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        for cfg in [
            SynthConfig {
                m_exponent: 1.7,
                ..SynthConfig::default()
            },
            SynthConfig {
                repeats: 0,
                ..SynthConfig::default()
            },
            SynthConfig {
                shoe_speeds: vec![10.0, 0.0],
                ..SynthConfig::default()
            },
            SynthConfig {
                noise_sd: -1.0,
                ..SynthConfig::default()
            },
        ] {
            assert!(matches!(
                generate_synthetic(&cfg),
                Err(DataError::InvalidSynthConfig(_))
            ));
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice(), SYNTH_TARGET, ds.provenance()).unwrap();
        assert_eq!(back, ds);
    }
}
