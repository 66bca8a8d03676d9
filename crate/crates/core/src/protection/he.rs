//! Toy approximate-eigenvector (GSW-style) encryption supporting additions.
//!
//! Correctness-scale parameters only; the key space is deliberately small.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeParams {
    /// LWE dimension.
    pub n_d: usize,
    /// Modulus, a power of two.
    pub q: u64,
    /// Fresh ciphertext noise is uniform on `[−error_bound, error_bound]`.
    pub error_bound: u64,
    /// Fixed-point fractional bits of the plaintext encoding.
    pub frac_bits: u32,
    /// Optional cap on additions per ciphertext, on top of the noise budget.
    pub max_additions: Option<u64>,
}

impl Default for HeParams {
    fn default() -> Self {
        Self { n_d: 8, q: 1 << 16, error_bound: 4, frac_bits: 8, max_additions: None }
    }
}

impl HeParams {
    pub fn validate(&self) -> Result<()> {
        if !self.q.is_power_of_two() || self.q < 4 || self.q > 1 << 32 {
            return Err(Error::InvalidParameter(format!("modulus {} must be a power of two in [4, 2^32]", self.q)));
        }
        if self.n_d == 0 || self.n_d > 63 {
            return Err(Error::InvalidParameter(format!("LWE dimension {} must be in 1..=63", self.n_d)));
        }
        if self.error_bound >= self.q / 4 {
            return Err(Error::InvalidParameter("fresh noise already exceeds the decryption margin".into()));
        }
        Ok(())
    }

    /// Gadget width `ℓ = log₂ q`.
    pub fn ell(&self) -> usize {
        self.q.trailing_zeros() as usize
    }

    pub fn rows(&self) -> usize {
        self.n_d + 1
    }

    pub fn cols(&self) -> usize {
        self.rows() * self.ell()
    }

    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Largest number of fresh ciphertexts whose summed noise stays below q/4.
    pub fn fresh_limit(&self) -> u64 {
        if self.error_bound == 0 {
            return u64::MAX;
        }
        (self.q / 4 - 1) / self.error_bound
    }

    pub fn plaintext_range(&self) -> (i64, i64) {
        let half = (self.q / 2) as i64;
        (-half, half - 1)
    }

    /// Rounds a real value to the fixed-point plaintext grid.
    pub fn encode(&self, x: f64) -> Result<i64> {
        let m = (x * self.scale()).round();
        let (lo, hi) = self.plaintext_range();
        if !m.is_finite() || m < lo as f64 || m > hi as f64 {
            return Err(Error::FixedPointOverflow(x));
        }
        Ok(m as i64)
    }

    pub fn decode(&self, m: i64) -> f64 {
        m as f64 / self.scale()
    }

    fn mask(&self) -> u64 {
        self.q - 1
    }

    fn to_signed(&self, v: u64) -> i64 {
        let v = v & self.mask();
        if v >= self.q / 2 {
            v as i64 - self.q as i64
        } else {
            v as i64
        }
    }
}

/// `s = (−t, 1) mod q` with `t` binary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub s: Vec<u64>,
}

impl SecretKey {
    /// Key whose binary part is the low `n_d` bits of `bits`.
    pub fn from_bits(params: &HeParams, bits: u64) -> Self {
        let mut s: Vec<u64> = (0..params.n_d)
            .map(|i| if (bits >> i) & 1 == 1 { params.q - 1 } else { 0 })
            .collect();
        s.push(1);
        Self { s }
    }

    pub fn bits(&self) -> u64 {
        self.s[..self.s.len() - 1]
            .iter()
            .enumerate()
            .fold(0, |acc, (i, v)| if *v != 0 { acc | (1 << i) } else { acc })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    /// Row-major `(n_d+1) × (n_d+1)ℓ` matrix with entries in `[0, q)`.
    pub data: Vec<u64>,
    /// Number of fresh encryptions summed into this ciphertext.
    pub fresh: u64,
    pub params: HeParams,
}

impl Ciphertext {
    pub fn entry(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.params.cols() + c]
    }

    /// Last-row, last-column entry read as a signed fixed-point number: what a
    /// server without the key would take as "the weight".
    pub fn server_tag(&self) -> f64 {
        let p = &self.params;
        p.decode(p.to_signed(self.entry(p.rows() - 1, p.cols() - 1)))
    }
}

pub fn he_keygen<R: Rng + ?Sized>(params: &HeParams, rng: &mut R) -> Result<SecretKey> {
    params.validate()?;
    let bits = rng.random::<u64>() & ((1u64 << params.n_d) - 1);
    Ok(SecretKey::from_bits(params, bits))
}

/// Encrypts a fixed-point integer plaintext.
pub fn he_encrypt<R: Rng + ?Sized>(params: &HeParams, m: i64, key: &SecretKey, rng: &mut R) -> Result<Ciphertext> {
    params.validate()?;
    let (lo, hi) = params.plaintext_range();
    if m < lo || m > hi {
        return Err(Error::FixedPointOverflow(params.decode(m)));
    }
    if key.s.len() != params.rows() {
        return Err(Error::DimensionMismatch { expected: params.rows(), got: key.s.len() });
    }
    let (rows, cols, ell, mask) = (params.rows(), params.cols(), params.ell(), params.mask());
    let mut data = vec![0u64; rows * cols];
    // Top rows uniform; the last row is tᵀA + e, where t = −s[..n_d].
    for v in data[..params.n_d * cols].iter_mut() {
        *v = rng.random::<u64>() & mask;
    }
    let width = 2 * params.error_bound + 1;
    for c in 0..cols {
        let mut acc: u64 = 0;
        for r in 0..params.n_d {
            let t = key.s[r].wrapping_neg() & mask;
            acc = acc.wrapping_add(t.wrapping_mul(data[r * cols + c]));
        }
        let e = rng.random_range(0..width) as i64 - params.error_bound as i64;
        data[(rows - 1) * cols + c] = acc.wrapping_add(e as u64) & mask;
    }
    // Add m·G with G = I ⊗ (1, 2, …, 2^{ℓ−1}).
    let mq = (m as u64) & mask;
    for r in 0..rows {
        for i in 0..ell {
            let idx = r * cols + r * ell + i;
            data[idx] = data[idx].wrapping_add(mq.wrapping_mul(1u64 << i)) & mask;
        }
    }
    Ok(Ciphertext { data, fresh: 1, params: *params })
}

/// Recovers the plaintext bit by bit from the last gadget block. With the
/// wrong key the output is garbage, by design.
pub fn he_decrypt(c: &Ciphertext, key: &SecretKey) -> i64 {
    let p = &c.params;
    let (rows, cols, ell, mask, q) = (p.rows(), p.cols(), p.ell(), p.mask(), p.q);
    let block = (rows - 1) * ell;
    let mut m_acc: u64 = 0;
    for b in 0..ell {
        let i = ell - 1 - b;
        let col = block + i;
        let mut v: u64 = 0;
        for r in 0..rows {
            v = v.wrapping_add(key.s[r].wrapping_mul(c.data[r * cols + col]));
        }
        let rem = v.wrapping_sub(m_acc.wrapping_mul(1u64 << i)) & mask;
        if rem >= q / 4 && rem < 3 * (q / 4) {
            m_acc |= 1 << b;
        }
    }
    p.to_signed(m_acc)
}

/// Homomorphic addition, refusing to exceed the noise budget.
pub fn he_add(c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
    if c1.params != c2.params {
        return Err(Error::InvalidParameter("ciphertexts use different parameters".into()));
    }
    let p = c1.params;
    let fresh = c1.fresh + c2.fresh;
    let limit = p.fresh_limit();
    if fresh > limit {
        return Err(Error::ErrorBudgetExceeded { fresh, limit });
    }
    if let Some(max_add) = p.max_additions {
        if fresh - 1 > max_add {
            return Err(Error::ErrorBudgetExceeded { fresh, limit: max_add + 1 });
        }
    }
    let mask = p.mask();
    let data = c1.data.iter().zip(&c2.data).map(|(a, b)| a.wrapping_add(*b) & mask).collect();
    Ok(Ciphertext { data, fresh, params: p })
}

/// Sums a non-empty slice of ciphertexts left to right.
pub fn he_sum(cs: &[Ciphertext]) -> Result<Ciphertext> {
    let (first, rest) = cs.split_first().ok_or(Error::EmptySamples)?;
    rest.iter().try_fold(first.clone(), |acc, c| he_add(&acc, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn roundtrip_small_values() {
        let p = HeParams::default();
        let mut rng = stream(3, Purpose::HeEncrypt, &[]);
        let key = he_keygen(&p, &mut rng).unwrap();
        for m in [0, 1, -1, 255, -256, 32767, -32768] {
            let c = he_encrypt(&p, m, &key, &mut rng).unwrap();
            assert_eq!(c.data.len(), 9 * 144);
            assert!(c.data.iter().all(|v| *v < p.q));
            assert_eq!(he_decrypt(&c, &key), m);
        }
    }

    #[test]
    fn homomorphic_sum() {
        let p = HeParams::default();
        let mut rng = stream(4, Purpose::HeEncrypt, &[]);
        let key = he_keygen(&p, &mut rng).unwrap();
        let xs = [1.5, -0.25, 3.0, 2.75];
        let cs: Vec<_> = xs.iter().map(|x| he_encrypt(&p, p.encode(*x).unwrap(), &key, &mut rng).unwrap()).collect();
        let sum = he_sum(&cs).unwrap();
        assert_eq!(sum.fresh, 4);
        assert_eq!(p.decode(he_decrypt(&sum, &key)), 7.0);
    }

    #[test]
    fn budget_breach_is_an_error() {
        let p = HeParams { error_bound: 6000, ..HeParams::default() };
        let mut rng = stream(5, Purpose::HeEncrypt, &[]);
        let key = he_keygen(&p, &mut rng).unwrap();
        let c = he_encrypt(&p, 7, &key, &mut rng).unwrap();
        let two = he_add(&c, &c).unwrap();
        assert_eq!(he_add(&two, &c), Err(Error::ErrorBudgetExceeded { fresh: 3, limit: 2 }));
        let capped = HeParams { max_additions: Some(1), ..HeParams::default() };
        let c = he_encrypt(&capped, 1, &key, &mut rng).unwrap();
        let two = he_add(&c, &c).unwrap();
        assert!(matches!(he_add(&two, &c), Err(Error::ErrorBudgetExceeded { .. })));
    }

    #[test]
    fn wrong_key_does_not_error() {
        let p = HeParams::default();
        let mut rng = stream(6, Purpose::HeEncrypt, &[]);
        let key = SecretKey::from_bits(&p, 0b1010_1100);
        let other = SecretKey::from_bits(&p, 0b0101_0011);
        let c = he_encrypt(&p, 1234, &key, &mut rng).unwrap();
        let _ = he_decrypt(&c, &other);
        assert_eq!(key.bits(), 0b1010_1100);
    }

    #[test]
    fn out_of_range_plaintext_rejected() {
        let p = HeParams::default();
        assert!(p.encode(128.0).is_err());
        assert_eq!(p.encode(-128.0).unwrap(), -32768);
    }
}
