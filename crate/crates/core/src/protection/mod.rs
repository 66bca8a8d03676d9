//! Protection mechanisms mapping a client's unprotected release to what the
//! server observes.

pub mod he;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

pub use he::{he_add, he_decrypt, he_encrypt, he_keygen, he_sum, Ciphertext, HeParams, SecretKey};

/// Fractional bits used for every released model vector.
pub const FIXED_POINT_BITS: u32 = 8;

pub fn fixed_point_scale() -> f64 {
    (1u64 << FIXED_POINT_BITS) as f64
}

/// Rounds to the shared fixed-point grid (idempotent).
pub fn quantize(x: f64) -> f64 {
    (x * fixed_point_scale()).round() / fixed_point_scale()
}

pub fn quantize_vec(w: &[f64]) -> Vec<f64> {
    w.iter().map(|x| quantize(*x)).collect()
}

pub fn to_fixed(x: f64) -> Result<i64> {
    let v = (x * fixed_point_scale()).round();
    if !v.is_finite() || v.abs() >= (1u64 << 62) as f64 {
        return Err(Error::FixedPointOverflow(x));
    }
    Ok(v as i64)
}

pub fn from_fixed(v: i64) -> f64 {
    v as f64 / fixed_point_scale()
}

/// Per-coordinate values, written in config either as one number or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerCoord {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerCoord {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Self::Scalar(x) => Ok(vec![*x; n]),
            Self::Vector(v) if v.len() == n => Ok(v.clone()),
            Self::Vector(v) => Err(Error::DimensionMismatch { expected: n, got: v.len() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    NoOp,
    Randomization {
        sigma: f64,
    },
    /// Upload the first `d` coordinates; the rest are modeled as draws from
    /// `N(mu_g, diag(var_g))`, fitted from a pilot run when omitted.
    Sparsity {
        d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_g: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        var_g: Option<Vec<f64>>,
    },
    SecretSharing {
        delta: f64,
        a: PerCoord,
        b: PerCoord,
    },
    ToyHe(HeParams),
}

impl MechanismSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::NoOp => "noop",
            Self::Randomization { .. } => "randomization",
            Self::Sparsity { .. } => "sparsity",
            Self::SecretSharing { .. } => "secret_sharing",
            Self::ToyHe(_) => "toy_he",
        }
    }

    /// Name and value of the swept parameter, for curve output.
    pub fn param(&self) -> (&'static str, f64) {
        match self {
            Self::NoOp => ("none", 0.0),
            Self::Randomization { sigma } => ("sigma", *sigma),
            Self::Sparsity { d, .. } => ("d", *d as f64),
            Self::SecretSharing { delta, .. } => ("delta", *delta),
            Self::ToyHe(params) => ("n_d", params.n_d as f64),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::NoOp => Ok(()),
            Self::Randomization { sigma } => {
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidParameter(format!("sigma must be ≥ 0, got {sigma}")));
                }
                Ok(())
            }
            Self::Sparsity { d, mu_g, var_g } => {
                if *d > dim {
                    return Err(Error::InvalidParameter(format!("kept dimension {d} exceeds model dimension {dim}")));
                }
                if let Some(m) = mu_g {
                    if m.len() != dim - d {
                        return Err(Error::DimensionMismatch { expected: dim - d, got: m.len() });
                    }
                }
                if let Some(v) = var_g {
                    if v.len() != dim - d {
                        return Err(Error::DimensionMismatch { expected: dim - d, got: v.len() });
                    }
                    if v.iter().any(|x| !(*x > 0.0)) {
                        return Err(Error::InvalidParameter("substitute variances must be positive".into()));
                    }
                }
                Ok(())
            }
            Self::SecretSharing { delta, a, b } => {
                let (a, b) = (a.expand(dim)?, b.expand(dim)?);
                if !(*delta > 0.0) || a.iter().chain(&b).any(|x| !(x > delta)) {
                    return Err(Error::InvalidParameter("secret sharing needs 0 < delta < a, b".into()));
                }
                Ok(())
            }
            Self::ToyHe(params) => params.validate(),
        }
    }
}

/// Adds i.i.d. `N(0, σ²)` noise. `σ = 0` returns the input untouched.
pub fn randomize<R: Rng + ?Sized>(w: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return w.to_vec();
    }
    w.iter().map(|x| x + sigma * standard_normal(rng)).collect()
}

/// Keeps the first `d` coordinates and replaces the rest by a draw from
/// `N(mu_g, diag(var_g))`.
pub fn sparsify<R: Rng + ?Sized>(w: &[f64], d: usize, mu_g: &[f64], var_g: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if d > w.len() {
        return Err(Error::InvalidParameter(format!("kept dimension {d} exceeds {}", w.len())));
    }
    let rest = w.len() - d;
    if mu_g.len() != rest {
        return Err(Error::DimensionMismatch { expected: rest, got: mu_g.len() });
    }
    if var_g.len() != rest {
        return Err(Error::DimensionMismatch { expected: rest, got: var_g.len() });
    }
    let mut out = w[..d].to_vec();
    out.extend(mu_g.iter().zip(var_g).map(|(m, v)| m + v.sqrt() * standard_normal(rng)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecretShares {
    /// `shares[k][j]`: the share of client k's vector held by party j, as
    /// fixed-point integers modulo 2⁶⁴.
    pub shares: Vec<Vec<Vec<u64>>>,
    pub reconstructed_sum: Vec<f64>,
}

/// Additive K-of-K sharing over `Z_{2^64}` of fixed-point encodings. The
/// reconstructed sum is exact because the ring arithmetic wraps.
pub fn secret_share<R: Rng + ?Sized>(models: &[Vec<f64>], rng: &mut R) -> Result<SecretShares> {
    let k = models.len();
    if k < 2 {
        return Err(Error::InvalidParameter("secret sharing needs at least 2 clients".into()));
    }
    let dim = models[0].len();
    let mut shares = Vec::with_capacity(k);
    for m in models {
        if m.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.len() });
        }
        let enc: Vec<u64> = m.iter().map(|x| to_fixed(*x).map(|v| v as u64)).collect::<Result<_>>()?;
        let mut parts: Vec<Vec<u64>> = (0..k - 1).map(|_| (0..dim).map(|_| rng.random::<u64>()).collect()).collect();
        let last = (0..dim)
            .map(|i| parts.iter().fold(enc[i], |acc, p| acc.wrapping_sub(p[i])))
            .collect();
        parts.push(last);
        shares.push(parts);
    }
    let reconstructed_sum = reconstruct(&shares, dim)?;
    Ok(SecretShares { shares, reconstructed_sum })
}

/// Each party sums what it holds; the server adds the partial sums.
pub fn reconstruct(shares: &[Vec<Vec<u64>>], dim: usize) -> Result<Vec<f64>> {
    let k = shares.len();
    let mut total = vec![0u64; dim];
    for j in 0..k {
        let mut partial = vec![0u64; dim];
        for client in shares {
            for (p, s) in partial.iter_mut().zip(&client[j]) {
                *p = p.wrapping_add(*s);
            }
        }
        for (t, p) in total.iter_mut().zip(&partial) {
            *t = t.wrapping_add(*p);
        }
    }
    Ok(total.into_iter().map(|v| from_fixed(v as i64)).collect())
}

/// A share's marginal view under the interval model: uniform on
/// `[c − a, c + b]` per coordinate, driven by uniform mask bits `u`.
pub fn interval_share_view(center: &[f64], a: &[f64], b: &[f64], mask_bits: &[u64]) -> Vec<f64> {
    center
        .iter()
        .zip(a)
        .zip(b)
        .zip(mask_bits)
        .map(|(((c, a), b), m)| {
            let u = (m >> 11) as f64 / (1u64 << 53) as f64;
            c - a + (a + b) * u
        })
        .collect()
}

/// `TV(U[c±δ] ‖ U[c−a, c+b]) = 1 − Π_j 2δ / (a_j + b_j)`.
pub fn share_marginal_tv(delta: f64, a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(a, b)| 2.0 * delta / (a + b)).product::<f64>()
}
