//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a [`Stream`] derived from a
//! 64-bit master seed plus a path of labels (trial, round, client, purpose).
//! Streams never share state, so trials can run in any order or in parallel
//! and still reproduce bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha12Rng;

/// Purpose labels keep streams for different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Universe = 2,
    Jitter = 3,
    Mechanism = 4,
    Masks = 5,
    HeKey = 6,
    HeEncrypt = 7,
    Attack = 8,
    MonteCarlo = 9,
    Pilot = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn stream(master: u64, purpose: Purpose, path: &[u64]) -> Stream {
    let mut full = Vec::with_capacity(path.len() + 1);
    full.push(purpose as u64);
    full.extend_from_slice(path);
    Stream::seed_from_u64(derive_seed(master, &full))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Serde for 64-bit seeds in formats whose integers are signed: seeds above
/// `i64::MAX` are written as decimal strings, and both forms are read back.
pub mod seed_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if *seed <= i64::MAX as u64 {
            s.serialize_i64(*seed as i64)
        } else {
            s.serialize_str(&seed.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(v),
            Raw::Text(t) => t.trim().parse().map_err(|_| de::Error::custom(format!("seed {t:?} is not a u64"))),
        }
    }
}
