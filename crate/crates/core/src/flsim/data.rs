//! Synthetic client datasets, CSV import, and candidate universes.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClientDataset, ModelKind};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// `y = wᵀx + bias + noise·z`, with per-client covariate shift.
    Regression {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default = "default_intercept")]
        intercept: f64,
        #[serde(default = "default_shift")]
        shift: f64,
    },
    /// Two Gaussian clusters at `±separation/2` on every axis.
    Classification {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    /// Header row, feature columns then the target; rows dealt round-robin.
    Csv { path: PathBuf },
}

fn default_samples() -> usize {
    20
}
fn default_features() -> usize {
    1
}
fn default_noise() -> f64 {
    0.5
}
fn default_intercept() -> f64 {
    0.5
}
fn default_shift() -> f64 {
    0.5
}
fn default_separation() -> f64 {
    2.0
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::Regression {
            samples: default_samples(),
            features: default_features(),
            noise: default_noise(),
            weights: None,
            intercept: default_intercept(),
            shift: default_shift(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Regression { samples, features, noise, weights, .. } => {
                if *samples == 0 || *features == 0 {
                    return Err(Error::InvalidParameter("samples and features must be positive".into()));
                }
                if !(*noise >= 0.0) {
                    return Err(Error::InvalidParameter(format!("noise {noise} must be ≥ 0")));
                }
                if let Some(w) = weights {
                    if w.len() != *features {
                        return Err(Error::DimensionMismatch { expected: *features, got: w.len() });
                    }
                }
                Ok(())
            }
            Self::Classification { samples, features, separation } => {
                if *samples == 0 || *features == 0 {
                    return Err(Error::InvalidParameter("samples and features must be positive".into()));
                }
                if !separation.is_finite() {
                    return Err(Error::NonFinite("separation".into()));
                }
                Ok(())
            }
            Self::Csv { .. } => Ok(()),
        }
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Self::Regression { .. } => Some(ModelKind::LinearRegression),
            Self::Classification { .. } => Some(ModelKind::LogisticRegression),
            Self::Csv { .. } => None,
        }
    }
}

/// One dataset per client, each from its own stream.
pub fn generate_datasets(spec: &DatasetSpec, clients: usize, seed: u64) -> Result<Vec<ClientDataset>> {
    spec.validate()?;
    if let DatasetSpec::Csv { path } = spec {
        return load_csv_dataset(path, clients);
    }
    (0..clients)
        .map(|k| {
            let mut rng = stream(seed, Purpose::Dataset, &[k as u64]);
            match spec {
                DatasetSpec::Regression { samples, features, noise, weights, intercept, shift } => {
                    let offset = shift * standard_normal(&mut rng);
                    let w = weights.clone().unwrap_or_else(|| vec![1.0; *features]);
                    let mut xs = Vec::with_capacity(*samples);
                    let mut ys = Vec::with_capacity(*samples);
                    for _ in 0..*samples {
                        let x: Vec<f64> = (0..*features).map(|_| offset + standard_normal(&mut rng)).collect();
                        let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                            + intercept
                            + noise * standard_normal(&mut rng);
                        xs.push(x);
                        ys.push(y);
                    }
                    ClientDataset::new(k, xs, ys)
                }
                DatasetSpec::Classification { samples, features, separation } => {
                    let mut xs = Vec::with_capacity(*samples);
                    let mut ys = Vec::with_capacity(*samples);
                    for _ in 0..*samples {
                        let label: bool = rng.random();
                        let centre = if label { 0.5 * separation } else { -0.5 * separation };
                        xs.push((0..*features).map(|_| centre + standard_normal(&mut rng)).collect());
                        ys.push(if label { 1.0 } else { 0.0 });
                    }
                    ClientDataset::new(k, xs, ys)
                }
                DatasetSpec::Csv { .. } => unreachable!(),
            }
        })
        .collect()
}

pub fn load_csv_dataset(path: &Path, clients: usize) -> Result<Vec<ClientDataset>> {
    let cfg_err = |message: String| Error::Config { path: path.display().to_string(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| cfg_err(e.to_string()))?;
    let width = reader.headers().map_err(|e| cfg_err(e.to_string()))?.len();
    if width < 2 {
        return Err(cfg_err("need at least one feature column and a target column".into()));
    }
    let mut xs: Vec<Vec<Vec<f64>>> = vec![vec![]; clients];
    let mut ys: Vec<Vec<f64>> = vec![vec![]; clients];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| cfg_err(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| cfg_err(format!("row {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(cfg_err(format!("row {} has {} fields, header has {width}", i + 1, row.len())));
        }
        let k = i % clients;
        ys[k].push(row[width - 1]);
        xs[k].push(row[..width - 1].to_vec());
    }
    xs.into_iter().zip(ys).enumerate().map(|(k, (x, y))| ClientDataset::new(k, x, y)).collect()
}

/// How the server's candidate universe for each client is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseSpec {
    pub candidates: usize,
    /// Target perturbation scale (regression) or label-flip probability
    /// (classification) separating decoys from the true dataset.
    pub spread: f64,
    /// Standard deviation of the Gaussian emission model around each
    /// candidate's local update, and of the release jitter.
    pub sigma_obs: f64,
    /// Weight of the candidate-independent floor in the emission model; 0
    /// disables it.
    pub floor_weight: f64,
    /// Floor standard deviation in units of `sigma_obs`, on top of the
    /// spread of the candidate means.
    pub floor_scale: f64,
    pub cap: usize,
}

impl Default for UniverseSpec {
    fn default() -> Self {
        Self { candidates: 8, spread: 1.0, sigma_obs: 0.1, floor_weight: 0.05, floor_scale: 10.0, cap: crate::belief::DEFAULT_CANDIDATE_CAP }
    }
}

impl UniverseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.candidates < 2 || self.candidates > self.cap {
            return Err(Error::InvalidParameter(format!(
                "candidate count {} must be in 2..={}",
                self.candidates, self.cap
            )));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidParameter(format!("spread {} must be positive", self.spread)));
        }
        if !(self.sigma_obs > 0.0) || !self.sigma_obs.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_obs {} must be positive", self.sigma_obs)));
        }
        if !(0.0..1.0).contains(&self.floor_weight) {
            return Err(Error::InvalidParameter(format!("floor weight {} must be in [0, 1)", self.floor_weight)));
        }
        if !(self.floor_scale > 0.0) || !self.floor_scale.is_finite() {
            return Err(Error::InvalidParameter(format!("floor scale {} must be positive", self.floor_scale)));
        }
        Ok(())
    }
}

/// Candidate datasets for one client: the true one at a seeded index, the
/// rest perturbed copies sharing its features.
pub fn make_candidates<R: Rng + ?Sized>(
    truth: &ClientDataset,
    kind: ModelKind,
    spec: &UniverseSpec,
    rng: &mut R,
) -> Result<(Vec<ClientDataset>, usize)> {
    spec.validate()?;
    let true_index = rng.random_range(0..spec.candidates);
    let mut out = Vec::with_capacity(spec.candidates);
    for c in 0..spec.candidates {
        if c == true_index {
            out.push(truth.clone());
            continue;
        }
        let targets = truth
            .targets
            .iter()
            .map(|y| match kind {
                ModelKind::LinearRegression => y + spec.spread * standard_normal(rng),
                ModelKind::LogisticRegression => {
                    if rng.random::<f64>() < spec.spread.min(1.0) {
                        1.0 - y
                    } else {
                        *y
                    }
                }
            })
            .collect();
        out.push(ClientDataset::new(truth.client_id, truth.features.clone(), targets)?);
    }
    Ok((out, true_index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let spec = DatasetSpec::default();
        assert_eq!(generate_datasets(&spec, 3, 7).unwrap(), generate_datasets(&spec, 3, 7).unwrap());
        assert_ne!(generate_datasets(&spec, 3, 7).unwrap(), generate_datasets(&spec, 3, 8).unwrap());
    }

    #[test]
    fn classification_labels_binary() {
        let spec = DatasetSpec::Classification { samples: 50, features: 2, separation: 2.0 };
        for d in generate_datasets(&spec, 2, 1).unwrap() {
            assert!(d.targets.iter().all(|y| *y == 0.0 || *y == 1.0));
        }
    }

    #[test]
    fn csv_round_robin() {
        let dir = std::env::temp_dir().join(format!("nfl-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("d.csv");
        std::fs::write(&p, "x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
        let ds = load_csv_dataset(&p, 2).unwrap();
        assert_eq!(ds[0].targets, vec![3.0, 9.0]);
        assert_eq!(ds[1].features, vec![vec![4.0, 5.0]]);
        std::fs::write(&p, "x,y\n1,oops\n").unwrap();
        assert!(matches!(load_csv_dataset(&p, 1), Err(Error::Config { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn candidates_contain_truth() {
        let d = &generate_datasets(&DatasetSpec::default(), 1, 3).unwrap()[0];
        let mut rng = stream(3, Purpose::Universe, &[0]);
        let (cands, idx) = make_candidates(d, ModelKind::LinearRegression, &UniverseSpec::default(), &mut rng).unwrap();
        assert_eq!(cands.len(), 8);
        assert_eq!(&cands[idx], d);
        assert!(cands.iter().enumerate().all(|(i, c)| i == idx || c != d));
    }
}
