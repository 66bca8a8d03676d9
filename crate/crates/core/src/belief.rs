//! Exact Bayesian posteriors over a finite candidate universe, privacy
//! leakage, the maximum log posterior/prior ratio ξ, and the DP check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{js_slices, DiagGaussian};
use crate::error::{Error, Result};

pub const DEFAULT_CANDIDATE_CAP: usize = 64;

/// Candidate private datasets with a strictly positive prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateUniverse<C> {
    candidates: Vec<C>,
    prior: Vec<f64>,
}

impl<C> CandidateUniverse<C> {
    pub fn new(candidates: Vec<C>, prior: Vec<f64>, cap: usize) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::InvalidParameter("a universe needs at least 2 candidates".into()));
        }
        if candidates.len() > cap {
            return Err(Error::InvalidParameter(format!(
                "{} candidates exceed the cap of {cap}",
                candidates.len()
            )));
        }
        if prior.len() != candidates.len() {
            return Err(Error::DimensionMismatch { expected: candidates.len(), got: prior.len() });
        }
        if let Some(i) = prior.iter().position(|p| !(*p > 0.0)) {
            return Err(Error::ZeroPrior(i));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("prior sums to {total}")));
        }
        Ok(Self { candidates, prior })
    }

    pub fn uniform(candidates: Vec<C>, cap: usize) -> Result<Self> {
        let n = candidates.len();
        Self::new(candidates, vec![1.0 / n as f64; n], cap)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[C] {
        &self.candidates
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// The prior as a belief, tagged F^B.
    pub fn prior_belief(&self) -> BeliefDistribution {
        BeliefDistribution { mass: self.prior.clone(), provenance: Provenance::Prior }
    }
}

/// How the adversary scores a released value against each candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LikelihoodModel {
    /// `w | d_c ~ N(means[c], σ_obs² I)`, optionally mixed with a
    /// candidate-independent floor component.
    Gaussian {
        means: Vec<Vec<f64>>,
        sigma_obs: f64,
        #[serde(default)]
        floor: Option<LikelihoodFloor>,
    },
    /// Release carries no information about the candidate.
    Uninformative,
}

/// `η · N(mean, σ² I)`, shared by every candidate. Keeps posterior/prior
/// ratios bounded far from all candidate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodFloor {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl LikelihoodModel {
    pub fn gaussian(means: Vec<Vec<f64>>, sigma_obs: f64) -> Result<Self> {
        if !(sigma_obs > 0.0) || !sigma_obs.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_obs must be positive, got {sigma_obs}")));
        }
        if means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("likelihood means".into()));
        }
        if let Some(first) = means.first() {
            if let Some(bad) = means.iter().find(|m| m.len() != first.len()) {
                return Err(Error::DimensionMismatch { expected: first.len(), got: bad.len() });
            }
        }
        Ok(Self::Gaussian { means, sigma_obs, floor: None })
    }

    pub fn gaussian_with_floor(means: Vec<Vec<f64>>, sigma_obs: f64, floor: LikelihoodFloor) -> Result<Self> {
        if !(floor.weight > 0.0 && floor.weight < 1.0) {
            return Err(Error::InvalidParameter(format!("floor weight {} must be in (0, 1)", floor.weight)));
        }
        if !(floor.sigma > 0.0) || !floor.sigma.is_finite() || floor.mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("floor component needs a finite mean and positive sigma".into()));
        }
        match Self::gaussian(means, sigma_obs)? {
            Self::Gaussian { means, sigma_obs, .. } => {
                if let Some(m) = means.first() {
                    if m.len() != floor.mean.len() {
                        return Err(Error::DimensionMismatch { expected: m.len(), got: floor.mean.len() });
                    }
                }
                Ok(Self::Gaussian { means, sigma_obs, floor: Some(floor) })
            }
            Self::Uninformative => unreachable!(),
        }
    }

    /// Log densities up to a candidate-independent constant.
    pub fn log_likelihoods(&self, w: &[f64], n_candidates: usize) -> Result<Vec<f64>> {
        match self {
            Self::Uninformative => Ok(vec![0.0; n_candidates]),
            Self::Gaussian { means, sigma_obs, floor } => {
                if means.len() != n_candidates {
                    return Err(Error::DimensionMismatch { expected: n_candidates, got: means.len() });
                }
                let iso = |m: &[f64], s: f64| -> Result<f64> {
                    if m.len() != w.len() {
                        return Err(Error::DimensionMismatch { expected: m.len(), got: w.len() });
                    }
                    let d2: f64 = m.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum();
                    Ok(-d2 / (2.0 * s * s))
                };
                match floor {
                    None => means.iter().map(|m| iso(m, *sigma_obs)).collect(),
                    Some(f) => {
                        // Both components need their normalising σ^{-n}.
                        let n = w.len() as f64;
                        let lf = f.weight.ln() - n * f.sigma.ln() + iso(&f.mean, f.sigma)?;
                        means
                            .iter()
                            .map(|m| {
                                let lg = (-f.weight).ln_1p() - n * sigma_obs.ln() + iso(m, *sigma_obs)?;
                                Ok(log_sum_exp(&[lg, lf]))
                            })
                            .collect()
                    }
                }
            }
        }
    }

    pub fn is_informative(&self) -> bool {
        !matches!(self, Self::Uninformative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Prior,
    Posterior,
    MarginalProtected,
    MarginalUnprotected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefDistribution {
    pub mass: Vec<f64>,
    pub provenance: Provenance,
}

impl BeliefDistribution {
    pub fn argmax(&self) -> (usize, bool) {
        argmax_with_ties(&self.mass)
    }
}

/// Index of the first maximum and whether another entry ties with it.
pub fn argmax_with_ties(v: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    let tie = v.iter().enumerate().any(|(i, x)| i != best && *x == v[best]);
    (best, tie)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log f(d|w)` from log-likelihoods and a log prior, normalised with
/// max-subtraction.
pub fn log_posterior_from_log_likelihoods(log_lik: &[f64], prior: &[f64]) -> Result<Vec<f64>> {
    if log_lik.len() != prior.len() {
        return Err(Error::DimensionMismatch { expected: prior.len(), got: log_lik.len() });
    }
    if log_lik.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    let joint: Vec<f64> = log_lik.iter().zip(prior).map(|(l, p)| l + p.ln()).collect();
    let z = log_sum_exp(&joint);
    if z == f64::NEG_INFINITY {
        return Err(Error::LikelihoodUnderflow);
    }
    Ok(joint.iter().map(|j| j - z).collect())
}

pub fn posterior_from_log_likelihoods(log_lik: &[f64], prior: &[f64]) -> Result<Vec<f64>> {
    let lp = log_posterior_from_log_likelihoods(log_lik, prior)?;
    let mut post: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
    let s: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= s);
    Ok(post)
}

/// `f(d | w) ∝ f(w | d) f(d)` over the universe.
pub fn posterior<C>(
    w: &[f64],
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
) -> Result<BeliefDistribution> {
    let mass = match likelihood {
        LikelihoodModel::Uninformative => universe.prior.clone(),
        _ => {
            let ll = likelihood.log_likelihoods(w, universe.len())?;
            posterior_from_log_likelihoods(&ll, &universe.prior)?
        }
    };
    Ok(BeliefDistribution { mass, provenance: Provenance::Posterior })
}

/// Weighted average of posteriors over released values.
pub fn marginal_belief_weighted<C>(
    draws: &[(f64, Vec<f64>)],
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
    provenance: Provenance,
) -> Result<BeliefDistribution> {
    if draws.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !likelihood.is_informative() {
        return Ok(BeliefDistribution { mass: universe.prior.clone(), provenance });
    }
    let mut acc = vec![0.0; universe.len()];
    let mut total = 0.0;
    for (weight, w) in draws {
        let post = posterior(w, universe, likelihood)?;
        for (a, p) in acc.iter_mut().zip(&post.mass) {
            *a += weight * p;
        }
        total += weight;
    }
    if !(total > 0.0) {
        return Err(Error::EmptySamples);
    }
    let mut mass: Vec<f64> = acc.iter().map(|a| a / total).collect();
    let s: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= s);
    Ok(BeliefDistribution { mass, provenance })
}

pub fn marginal_belief_samples<C>(
    samples: &[Vec<f64>],
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
    provenance: Provenance,
) -> Result<BeliefDistribution> {
    let draws: Vec<(f64, Vec<f64>)> = samples.iter().map(|s| (1.0, s.clone())).collect();
    marginal_belief_weighted(&draws, universe, likelihood, provenance)
}

/// Marginal belief under a Gaussian release distribution, from `n` draws of
/// the supplied stream.
pub fn marginal_belief_gaussian<C, R: Rng + ?Sized>(
    dist: &DiagGaussian,
    n: usize,
    rng: &mut R,
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
    provenance: Provenance,
) -> Result<BeliefDistribution> {
    dist.validate()?;
    let samples: Vec<Vec<f64>> = (0..n).map(|_| dist.sample(rng)).collect();
    marginal_belief_samples(&samples, universe, likelihood, provenance)
}

fn check_prior(prior: &[f64]) -> Result<()> {
    match prior.iter().position(|p| !(*p > 0.0)) {
        Some(i) => Err(Error::ZeroPrior(i)),
        None => Ok(()),
    }
}

/// Per grid point, `log f(d|w) − log f(d)` for every candidate.
fn log_ratios(prior: &[f64], likelihood: &LikelihoodModel, w: &[f64]) -> Result<Vec<f64>> {
    let ll = likelihood.log_likelihoods(w, prior.len())?;
    let joint: Vec<f64> = ll.iter().zip(prior).map(|(l, p)| l + p.ln()).collect();
    let z = log_sum_exp(&joint);
    if z == f64::NEG_INFINITY {
        return Err(Error::LikelihoodUnderflow);
    }
    Ok(ll.iter().map(|l| l - z).collect())
}

/// `ξ̂ = max_{w ∈ grid, d} |log(f(d|w) / f(d))|`.
pub fn compute_xi_prior(prior: &[f64], likelihood: &LikelihoodModel, grid: &[Vec<f64>]) -> Result<f64> {
    check_prior(prior)?;
    if !likelihood.is_informative() {
        return Ok(0.0);
    }
    let mut xi: f64 = 0.0;
    for w in grid {
        for r in log_ratios(prior, likelihood, w)? {
            xi = xi.max(r.abs());
        }
    }
    Ok(xi)
}

pub fn compute_xi<C>(
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
    grid: &[Vec<f64>],
) -> Result<f64> {
    compute_xi_prior(&universe.prior, likelihood, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpCheck {
    pub max_log_ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `max_{d,w,w'} |log(f(d|w)/f(d|w'))|` against `2ξ̂` on the same grid.
pub fn dp_epsilon_check_prior(prior: &[f64], likelihood: &LikelihoodModel, grid: &[Vec<f64>]) -> Result<DpCheck> {
    check_prior(prior)?;
    if !likelihood.is_informative() || grid.is_empty() {
        return Ok(DpCheck { max_log_ratio: 0.0, bound: 0.0, pass: true });
    }
    let n = prior.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut xi: f64 = 0.0;
    for w in grid {
        for (d, r) in log_ratios(prior, likelihood, w)?.into_iter().enumerate() {
            lo[d] = lo[d].min(r);
            hi[d] = hi[d].max(r);
            xi = xi.max(r.abs());
        }
    }
    let max_log_ratio = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    let bound = 2.0 * xi;
    Ok(DpCheck { max_log_ratio, bound, pass: max_log_ratio <= bound })
}

pub fn dp_epsilon_check<C>(
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
    grid: &[Vec<f64>],
) -> Result<DpCheck> {
    dp_epsilon_check_prior(&universe.prior, likelihood, grid)
}

/// `ε_{p,k} = √JS(F^A ‖ F^B)`.
pub fn bayesian_privacy_leakage(fa: &BeliefDistribution, fb: &BeliefDistribution) -> Result<f64> {
    if fa.mass.len() != fb.mass.len() {
        return Err(Error::DimensionMismatch { expected: fb.mass.len(), got: fa.mass.len() });
    }
    Ok(js_slices(&fa.mass, &fb.mass).sqrt())
}

/// System-level leakage: the mean over clients.
pub fn system_leakage(per_client: &[f64]) -> f64 {
    if per_client.is_empty() {
        return 0.0;
    }
    per_client.iter().sum::<f64>() / per_client.len() as f64
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points in the box `[lo, hi]`. A grid of size n is a prefix of
/// every larger grid, so refining can only increase ξ̂.
pub fn halton_grid(lo: &[f64], hi: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
    }
    if lo.len() > PRIMES.len() {
        return Err(Error::InvalidParameter(format!("Halton grid supports at most {} dims", PRIMES.len())));
    }
    Ok((1..=n as u64)
        .map(|i| {
            lo.iter()
                .zip(hi)
                .zip(PRIMES)
                .map(|((l, h), b)| l + (h - l) * radical_inverse(i, b))
                .collect()
        })
        .collect())
}

/// Smallest axis-aligned box containing `mean ± k·sd` of every Gaussian.
pub fn covering_box(dists: &[&DiagGaussian], k: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = dists.first().ok_or(Error::EmptySamples)?;
    let n = first.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for g in dists {
        if g.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: g.dim() });
        }
        for i in 0..n {
            let s = g.variances[i].sqrt();
            lo[i] = lo[i].min(g.mean[i] - k * s);
            hi[i] = hi[i].max(g.mean[i] + k * s);
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two() -> CandidateUniverse<&'static str> {
        CandidateUniverse::uniform(vec!["a", "b"], DEFAULT_CANDIDATE_CAP).unwrap()
    }

    /// Likelihood ratio 0.9 : 0.1 at w = 0 via Gaussian means at ±m.
    fn lik_90_10() -> LikelihoodModel {
        // exp(-(0-a)²/2) / exp(-(0-b)²/2) = 9 with a = 0, b² = 2 ln 9.
        LikelihoodModel::gaussian(vec![vec![0.0], vec![(2.0 * 9f64.ln()).sqrt()]], 1.0).unwrap()
    }

    #[test]
    fn uninformative_posterior_is_prior() {
        let u = CandidateUniverse::new(vec![1, 2, 3], vec![0.2, 0.3, 0.5], 64).unwrap();
        let p = posterior(&[1.0], &u, &LikelihoodModel::Uninformative).unwrap();
        assert_eq!(p.mass, u.prior());
    }

    #[test]
    fn hand_bayes() {
        let p = posterior(&[0.0], &two(), &lik_90_10()).unwrap();
        assert_abs_diff_eq!(p.mass[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mass[1], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mass.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn near_delta_likelihood_concentrates() {
        let u = CandidateUniverse::uniform(vec![0, 1, 2, 3], 64).unwrap();
        let lik = LikelihoodModel::gaussian(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], 0.01).unwrap();
        let p = posterior(&[2.0], &u, &lik).unwrap();
        assert!(p.mass[2] >= 1.0 - 1e-6);
    }

    #[test]
    fn extreme_log_likelihoods_stay_finite() {
        let post = posterior_from_log_likelihoods(&[-1e5, -1e5 - 3.0], &[0.5, 0.5]).unwrap();
        assert!(post[0] > post[1] && post[1] > 0.0);
        assert_eq!(
            posterior_from_log_likelihoods(&[f64::NEG_INFINITY; 2], &[0.5, 0.5]),
            Err(Error::LikelihoodUnderflow)
        );
    }

    #[test]
    fn marginal_examples() {
        let u = two();
        let lik = lik_90_10();
        let m = marginal_belief_samples(&[vec![0.0]], &u, &lik, Provenance::MarginalProtected).unwrap();
        assert_eq!(m.mass, posterior(&[0.0], &u, &lik).unwrap().mass);

        // Two equally weighted releases: mirror point gives (0.1, 0.9) by symmetry.
        let b = (2.0 * 9f64.ln()).sqrt();
        let m = marginal_belief_samples(&[vec![0.0], vec![b]], &u, &lik, Provenance::MarginalProtected).unwrap();
        assert_abs_diff_eq!(m.mass[0], 0.5, epsilon = 1e-12);
        let flat = marginal_belief_samples(&[vec![3.0]], &u, &LikelihoodModel::Uninformative, Provenance::MarginalProtected)
            .unwrap();
        assert_eq!(flat.mass, u.prior());
        assert_eq!(
            marginal_belief_samples(&[], &u, &lik, Provenance::MarginalProtected),
            Err(Error::EmptySamples)
        );
    }

    #[test]
    fn xi_at_a_single_grid_point() {
        // Posterior (0.9, 0.1) against prior (0.5, 0.5): the largest
        // |log ratio| is ln(0.1/0.5) = −ln 5, not ln(0.9/0.5).
        let xi = compute_xi(&two(), &lik_90_10(), &[vec![0.0]]).unwrap();
        assert_abs_diff_eq!(xi, 5f64.ln(), epsilon = 1e-12);
        assert_eq!(compute_xi(&two(), &LikelihoodModel::Uninformative, &[vec![0.0]]).unwrap(), 0.0);
        assert_eq!(compute_xi_prior(&[1.0, 0.0], &lik_90_10(), &[vec![0.0]]), Err(Error::ZeroPrior(1)));
    }

    #[test]
    fn dp_check_on_two_points() {
        let b = (2.0 * 9f64.ln()).sqrt();
        let grid = vec![vec![0.0], vec![b]];
        let dp = dp_epsilon_check(&two(), &lik_90_10(), &grid).unwrap();
        // Enumeration oracle: candidate 0 has posteriors 0.9 and 0.1.
        assert_abs_diff_eq!(dp.max_log_ratio, 9f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(dp.bound, 2.0 * 5f64.ln(), epsilon = 1e-12);
        assert!(dp.pass);
        let flat = dp_epsilon_check(&two(), &LikelihoodModel::Uninformative, &grid).unwrap();
        assert_eq!((flat.max_log_ratio, flat.bound, flat.pass), (0.0, 0.0, true));
    }

    #[test]
    fn leakage_examples() {
        let fb = two().prior_belief();
        assert_eq!(bayesian_privacy_leakage(&fb, &fb).unwrap(), 0.0);
        let a = BeliefDistribution { mass: vec![1.0, 0.0], provenance: Provenance::Posterior };
        let b = BeliefDistribution { mass: vec![0.0, 1.0], provenance: Provenance::Prior };
        assert_abs_diff_eq!(bayesian_privacy_leakage(&a, &b).unwrap(), std::f64::consts::LN_2.sqrt(), epsilon = 1e-15);
        let fa = BeliefDistribution { mass: vec![0.9, 0.1], provenance: Provenance::MarginalProtected };
        let oracle = crate::divergence::js_discrete(
            &crate::divergence::DiscretePmf::new(vec![0, 1], vec![0.9, 0.1]).unwrap(),
            &crate::divergence::DiscretePmf::new(vec![0, 1], vec![0.5, 0.5]).unwrap(),
        )
        .value
        .sqrt();
        assert_abs_diff_eq!(bayesian_privacy_leakage(&fa, &fb).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn halton_refinement_is_monotone() {
        let lik = LikelihoodModel::gaussian(vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-0.1, 0.4]], 0.2).unwrap();
        let u = CandidateUniverse::uniform(vec![0, 1, 2], 64).unwrap();
        let mut prev = 0.0;
        for n in [16, 64, 256, 1024] {
            let grid = halton_grid(&[-1.0, -1.0], &[1.0, 1.0], n).unwrap();
            let xi = compute_xi(&u, &lik, &grid).unwrap();
            assert!(xi >= prev);
            prev = xi;
        }
    }

    #[test]
    fn argmax_reports_ties() {
        assert_eq!(argmax_with_ties(&[0.25, 0.25, 0.5]), (2, false));
        assert_eq!(argmax_with_ties(&[0.5, 0.5]), (0, true));
    }

    #[test]
    fn universe_validation() {
        assert!(CandidateUniverse::uniform(vec![0], 64).is_err());
        assert!(CandidateUniverse::uniform((0..65).collect(), 64).is_err());
        assert_eq!(CandidateUniverse::new(vec![0, 1], vec![1.0, 0.0], 64), Err(Error::ZeroPrior(1)));
    }
}
