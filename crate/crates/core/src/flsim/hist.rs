//! Empirical model-information distributions and shared histogram bins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::divergence::DiagGaussian;
use crate::error::{Error, Result};

pub const MAX_HIST_DIMS: usize = 3;

/// Whether a release is a plaintext weight vector or an opaque ciphertext tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Plain,
    Cipher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalModelDist {
    pub domain: Domain,
    pub samples: Vec<Vec<f64>>,
}

impl EmpiricalModelDist {
    pub fn new(domain: Domain, samples: Vec<Vec<f64>>) -> Self {
        Self { domain, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn fit_gaussian(&self) -> Result<DiagGaussian> {
        DiagGaussian::fit(&self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub domain: Domain,
    pub index: Vec<u32>,
}

/// Equal-width bins per dimension over a fixed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lo: Vec<f64>,
    pub width: Vec<f64>,
    pub bins: u32,
}

impl Binning {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Vec<f64>>, bins: u32) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter("need at least one bin".into()));
        }
        let mut lo: Vec<f64> = vec![];
        let mut hi: Vec<f64> = vec![];
        for s in samples {
            if lo.is_empty() {
                if s.len() > MAX_HIST_DIMS {
                    return Err(Error::InvalidParameter(format!(
                        "histograms support at most {MAX_HIST_DIMS} dims; use the Gaussian path for {}",
                        s.len()
                    )));
                }
                lo = s.clone();
                hi = s.clone();
                continue;
            }
            if s.len() != lo.len() {
                return Err(Error::DimensionMismatch { expected: lo.len(), got: s.len() });
            }
            for i in 0..s.len() {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        if lo.is_empty() {
            return Err(Error::EmptySamples);
        }
        if lo.iter().chain(&hi).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("histogram samples".into()));
        }
        let width = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| if h > l { (h - l) / bins as f64 } else { 1.0 })
            .collect();
        Ok(Self { lo, width, bins })
    }

    pub fn index(&self, w: &[f64]) -> Vec<u32> {
        w.iter()
            .zip(&self.lo)
            .zip(&self.width)
            .map(|((x, l), wd)| (((x - l) / wd).floor().max(0.0) as u32).min(self.bins - 1))
            .collect()
    }

    /// Bin centre.
    pub fn representative(&self, index: &[u32]) -> Vec<f64> {
        index
            .iter()
            .zip(&self.lo)
            .zip(&self.width)
            .map(|((i, l), wd)| l + (*i as f64 + 0.5) * wd)
            .collect()
    }
}

/// Bin counts keyed by domain and index, in a fixed order.
pub type Histogram = BTreeMap<BinKey, u64>;

/// One binning per domain, fitted on the pooled samples of every
/// distribution that will be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedBins {
    pub plain: Option<Binning>,
    pub cipher: Option<Binning>,
}

impl SharedBins {
    pub fn fit(dists: &[&EmpiricalModelDist], bins: u32) -> Result<Self> {
        let pooled = |d: Domain| {
            let v: Vec<&Vec<f64>> = dists.iter().filter(|x| x.domain == d).flat_map(|x| x.samples.iter()).collect();
            if v.is_empty() {
                Ok(None)
            } else {
                Binning::fit(v, bins).map(Some)
            }
        };
        Ok(Self { plain: pooled(Domain::Plain)?, cipher: pooled(Domain::Cipher)? })
    }

    fn binning(&self, d: Domain) -> Result<&Binning> {
        match d {
            Domain::Plain => self.plain.as_ref(),
            Domain::Cipher => self.cipher.as_ref(),
        }
        .ok_or_else(|| Error::InvalidParameter(format!("no bins fitted for {d:?} samples")))
    }

    pub fn key(&self, domain: Domain, w: &[f64]) -> Result<BinKey> {
        Ok(BinKey { domain, index: self.binning(domain)?.index(w) })
    }

    pub fn representative(&self, key: &BinKey) -> Result<Vec<f64>> {
        Ok(self.binning(key.domain)?.representative(&key.index))
    }

    pub fn histogram(&self, dist: &EmpiricalModelDist) -> Result<Histogram> {
        let mut h = Histogram::new();
        for s in &dist.samples {
            *h.entry(self.key(dist.domain, s)?).or_default() += 1;
        }
        Ok(h)
    }
}

/// TV between two histograms normalised by their sample counts.
pub fn tv_histograms(a: &Histogram, b: &Histogram) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let mut keys: Vec<&BinKey> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let s: f64 = keys
        .iter()
        .map(|k| {
            let pa = a.get(*k).copied().unwrap_or(0) as f64 / na as f64;
            let pb = b.get(*k).copied().unwrap_or(0) as f64 / nb as f64;
            (pa - pb).abs()
        })
        .sum();
    (0.5 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::tv_slices;

    #[test]
    fn bins_cover_pooled_range() {
        let a = EmpiricalModelDist::new(Domain::Plain, vec![vec![0.0], vec![1.0]]);
        let b = EmpiricalModelDist::new(Domain::Plain, vec![vec![2.0], vec![4.0]]);
        let bins = SharedBins::fit(&[&a, &b], 4).unwrap();
        assert_eq!(bins.key(Domain::Plain, &[0.0]).unwrap().index, vec![0]);
        assert_eq!(bins.key(Domain::Plain, &[4.0]).unwrap().index, vec![3]);
        assert_eq!(bins.representative(&bins.key(Domain::Plain, &[2.0]).unwrap()).unwrap(), vec![2.5]);
        assert!(bins.cipher.is_none());
    }

    #[test]
    fn two_client_hand_histograms() {
        let a = EmpiricalModelDist::new(Domain::Plain, vec![vec![0.0], vec![0.0], vec![1.0], vec![3.0]]);
        let b = EmpiricalModelDist::new(Domain::Plain, vec![vec![0.0], vec![3.0], vec![3.0], vec![3.0]]);
        let bins = SharedBins::fit(&[&a, &b], 3).unwrap();
        let tv = tv_histograms(&bins.histogram(&a).unwrap(), &bins.histogram(&b).unwrap());
        // Bins [0,1), [1,2), [2,3]: masses (.5,.25,.25) vs (.25,0,.75).
        assert!((tv - tv_slices(&[0.5, 0.25, 0.25], &[0.25, 0.0, 0.75])).abs() < 1e-15);
    }

    #[test]
    fn domains_are_disjoint() {
        let a = EmpiricalModelDist::new(Domain::Plain, vec![vec![0.0], vec![1.0]]);
        let b = EmpiricalModelDist::new(Domain::Cipher, vec![vec![0.0], vec![1.0]]);
        let bins = SharedBins::fit(&[&a, &b], 8).unwrap();
        assert_eq!(tv_histograms(&bins.histogram(&a).unwrap(), &bins.histogram(&b).unwrap()), 1.0);
    }

    #[test]
    fn too_many_dims_rejected() {
        let a = EmpiricalModelDist::new(Domain::Plain, vec![vec![0.0; 4], vec![1.0; 4]]);
        assert!(SharedBins::fit(&[&a], 8).is_err());
    }
}
