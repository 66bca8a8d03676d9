//! Inference attacks: gradient inversion, model inversion, and brute-force
//! key search, plus the posterior arg-max they all approximate.

use serde::{Deserialize, Serialize};

use crate::belief::{posterior, CandidateUniverse, LikelihoodModel};
use crate::error::{Error, Result};
use crate::flsim::ModelKind;
use crate::protection::he::{he_decrypt, Ciphertext, HeParams, SecretKey};
use crate::rng::{normal_vec, stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    GradientInversion,
    ModelInversion,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    #[default]
    None,
    /// Penalises the (smoothed) total variation of the data vector.
    Smoothness,
    /// The target is known and held fixed.
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    /// Initial trial step of each backtracking line search.
    pub step: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { step: 1.0, max_iters: 2000, tol: 1e-8, restarts: 4 }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerance must be positive".into()));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter("optimizer step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default)]
    pub prior: PriorKind,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, prior: PriorKind) -> Self {
        Self { kind, prior, optimizer: OptimizerSpec::default(), lambda: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("prior weight {} must be ≥ 0", self.lambda)));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub recovered: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Loss after every accepted step of the winning run.
    pub loss_trace: Vec<f64>,
}

/// Gradient descent with Armijo backtracking (halving, c = 1e-4). Stops when
/// the gradient norm or the loss falls to the tolerance.
pub fn minimize<F>(f: F, x0: &[f64], opt: &OptimizerSpec) -> AttackResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut trace = vec![fx];
    let mut step = opt.step;
    for it in 0..opt.max_iters {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() <= opt.tol || fx <= opt.tol * opt.tol {
            return AttackResult { recovered: x, loss: fx, iterations: it, converged: true, loss_trace: trace };
        }
        let mut t = step;
        loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc <= fx - 1e-4 * t * gn2 {
                x = cand;
                fx = fc;
                g = gc;
                trace.push(fx);
                step = (2.0 * t).min(opt.step);
                break;
            }
            t *= 0.5;
            if t < 1e-30 {
                // No descent possible at machine precision: a stationary point.
                return AttackResult { recovered: x, loss: fx, iterations: it, converged: false, loss_trace: trace };
            }
        }
    }
    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let converged = gn <= opt.tol || fx <= opt.tol * opt.tol;
    AttackResult { recovered: x, loss: fx, iterations: opt.max_iters, converged, loss_trace: trace }
}

/// Runs from `init` (when given) and from seeded restarts around it; the
/// first result is kept unless a later one is better by more than `tol`.
fn with_restarts<F>(f: F, init: Option<&[f64]>, dim: usize, opt: &OptimizerSpec, seed: u64) -> AttackResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let centre = init.map_or_else(|| vec![0.0; dim], <[f64]>::to_vec);
    let mut starts: Vec<Vec<f64>> = init.into_iter().map(<[f64]>::to_vec).collect();
    for r in 0..opt.restarts {
        let mut rng = stream(seed, Purpose::Attack, &[r as u64]);
        starts.push(centre.iter().zip(normal_vec(&mut rng, dim)).map(|(c, z)| c + z).collect());
    }
    if starts.is_empty() {
        starts.push(centre);
    }
    let mut best: Option<AttackResult> = None;
    for s in starts {
        let res = minimize(&f, &s, opt);
        best = match best {
            Some(b) if res.loss < b.loss - opt.tol => Some(res),
            Some(b) => Some(b),
            None => Some(res),
        };
    }
    best.expect("at least one start")
}

/// `Σ_i sqrt((d_{i+1} − d_i)² + s²)` and its gradient.
fn smoothed_tv(d: &[f64]) -> (f64, Vec<f64>) {
    const S2: f64 = 1e-16;
    let mut v = 0.0;
    let mut g = vec![0.0; d.len()];
    for i in 0..d.len().saturating_sub(1) {
        let diff = d[i + 1] - d[i];
        let s = (diff * diff + S2).sqrt();
        v += s - S2.sqrt();
        g[i + 1] += diff / s;
        g[i] -= diff / s;
    }
    (v, g)
}

/// The model whose gradient or outputs the attacker observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContext {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: bool,
}

impl ModelContext {
    pub fn features(&self) -> usize {
        self.weights.len() - usize::from(self.bias)
    }

    /// Score `z`, link output, and link derivative at `x`.
    fn eval(&self, x: &[f64]) -> (f64, f64) {
        let f = self.features();
        let mut z: f64 = self.weights[..f].iter().zip(x).map(|(a, b)| a * b).sum();
        if self.bias {
            z += self.weights[f];
        }
        match self.kind {
            ModelKind::LinearRegression => (z, 1.0),
            ModelKind::LogisticRegression => {
                let s = 1.0 / (1.0 + (-z).exp());
                (s, s * (1.0 - s))
            }
        }
    }

    fn augmented(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.bias {
            v.push(1.0);
        }
        v
    }

    /// Gradient of the per-example loss with respect to the weights.
    pub fn weight_gradient(&self, x: &[f64], y: f64) -> Vec<f64> {
        let (p, _) = self.eval(x);
        self.augmented(x).into_iter().map(|v| (p - y) * v).collect()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }
}

fn prior_term(prior: PriorKind, lambda: f64, x: &[f64]) -> (f64, Vec<f64>) {
    if prior == PriorKind::Smoothness && lambda > 0.0 {
        let (v, g) = smoothed_tv(x);
        (lambda * v, g.into_iter().map(|gi| lambda * gi).collect())
    } else {
        (0.0, vec![0.0; x.len()])
    }
}

/// Minimises `‖∇_W(d) − G‖² − λ·L₂(d)` over `d = x` (label prior, with
/// `label` fixed) or `d = (x, y)`.
pub fn gradient_inversion(
    observed: &[f64],
    ctx: &ModelContext,
    label: Option<f64>,
    init: Option<&[f64]>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if observed.len() != ctx.weights.len() {
        return Err(Error::DimensionMismatch { expected: ctx.weights.len(), got: observed.len() });
    }
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observed gradient".into()));
    }
    let f = ctx.features();
    let fixed = match cfg.prior {
        PriorKind::Label => Some(label.ok_or_else(|| Error::InvalidParameter("label prior needs a label".into()))?),
        _ => None,
    };
    let dim = if fixed.is_some() { f } else { f + 1 };
    if let Some(i) = init {
        if i.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: i.len() });
        }
    }
    let objective = |d: &[f64]| {
        let x = &d[..f];
        let y = fixed.unwrap_or_else(|| d[f]);
        let (p, dp) = ctx.eval(x);
        let r = p - y;
        let xt = ctx.augmented(x);
        let e: Vec<f64> = xt.iter().zip(observed).map(|(v, g)| r * v - g).collect();
        let ex: f64 = e.iter().zip(&xt).map(|(a, b)| a * b).sum();
        let mut loss: f64 = e.iter().map(|v| v * v).sum();
        let mut grad = vec![0.0; d.len()];
        for i in 0..f {
            grad[i] = 2.0 * dp * ctx.weights[i] * ex + 2.0 * r * e[i];
        }
        if fixed.is_none() {
            grad[f] = -2.0 * ex;
        }
        let (pv, pg) = prior_term(cfg.prior, cfg.lambda, x);
        loss += pv;
        for i in 0..f {
            grad[i] += pg[i];
        }
        (loss, grad)
    };
    Ok(with_restarts(objective, init, dim, &cfg.optimizer, cfg.seed))
}

/// Minimises `Σ_m (Ô_m(x) − O_m)² − λ·L₂(x)` given the outputs `O_m` of
/// several observed models on the same private input.
pub fn model_inversion(
    observed: &[f64],
    models: &[ModelContext],
    init: Option<&[f64]>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if observed.len() != models.len() || models.is_empty() {
        return Err(Error::DimensionMismatch { expected: models.len(), got: observed.len() });
    }
    let f = models[0].features();
    if let Some(m) = models.iter().find(|m| m.features() != f) {
        return Err(Error::DimensionMismatch { expected: f, got: m.features() });
    }
    let objective = |x: &[f64]| {
        let mut loss = 0.0;
        let mut grad = vec![0.0; f];
        for (m, o) in models.iter().zip(observed) {
            let (p, dp) = m.eval(x);
            let r = p - o;
            loss += r * r;
            for i in 0..f {
                grad[i] += 2.0 * r * dp * m.weights[i];
            }
        }
        let (pv, pg) = prior_term(cfg.prior, cfg.lambda, x);
        for i in 0..f {
            grad[i] += pg[i];
        }
        (loss + pv, grad)
    };
    Ok(with_restarts(objective, init, f, &cfg.optimizer, cfg.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySearch {
    pub key_bits: Option<u64>,
    /// Scan position of the first matching key.
    pub index: Option<u64>,
    pub decrypt_calls: u64,
    pub converged: bool,
}

/// Tries every key `0..2^bits` in ascending order; one decrypt call per key
/// covers the whole plaintext/ciphertext pair. Returns the first match.
pub fn brute_force_key(plaintexts: &[i64], ciphertexts: &[Ciphertext], params: &HeParams, bits: u32) -> Result<KeySearch> {
    if plaintexts.len() != ciphertexts.len() || plaintexts.is_empty() {
        return Err(Error::SampleCountMismatch { left: plaintexts.len(), right: ciphertexts.len() });
    }
    if bits as usize != params.n_d {
        return Err(Error::InvalidParameter(format!("keyspace of {bits} bits does not match n_d = {}", params.n_d)));
    }
    let mut found = None;
    let mut calls = 0;
    for k in 0..(1u64 << bits) {
        calls += 1;
        let key = SecretKey::from_bits(params, k);
        if found.is_none() && plaintexts.iter().zip(ciphertexts).all(|(m, c)| he_decrypt(c, &key) == *m) {
            found = Some(k);
        }
    }
    Ok(KeySearch { key_bits: found, index: found, decrypt_calls: calls, converged: found.is_some() })
}

/// `argmax_d f(d | w)`; ties go to the lowest index and are reported.
pub fn attack_as_posterior_argmax<C>(
    w: &[f64],
    universe: &CandidateUniverse<C>,
    likelihood: &LikelihoodModel,
) -> Result<(usize, bool)> {
    Ok(posterior(w, universe, likelihood)?.argmax())
}

/// Median gradient-inversion error per noise level. Instance `i` reuses the
/// same data, model, and noise direction at every level.
pub fn median_inversion_error(sigmas: &[f64], instances: usize, features: usize, seed: u64) -> Result<Vec<f64>> {
    let cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::Label);
    let mut out = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let mut errs = Vec::with_capacity(instances);
        for i in 0..instances {
            let mut rng = stream(seed, Purpose::Attack, &[1 << 32, i as u64]);
            let x0 = normal_vec(&mut rng, features);
            let mut weights = normal_vec(&mut rng, features);
            weights.push(0.5);
            let y = normal_vec(&mut rng, 1)[0] * 2.0 + 3.0;
            let noise = normal_vec(&mut rng, features + 1);
            let ctx = ModelContext { kind: ModelKind::LinearRegression, weights, bias: true };
            let g: Vec<f64> = ctx.weight_gradient(&x0, y).iter().zip(&noise).map(|(a, z)| a + sigma * z).collect();
            let res = gradient_inversion(&g, &ctx, Some(y), None, &AttackConfig { seed: i as u64, ..cfg.clone() })?;
            errs.push(res.recovered.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
        errs.sort_by(f64::total_cmp);
        let m = errs.len();
        out.push(if m % 2 == 1 { errs[m / 2] } else { 0.5 * (errs[m / 2 - 1] + errs[m / 2]) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::DEFAULT_CANDIDATE_CAP;
    use crate::protection::he::{he_encrypt, he_keygen};

    fn lin(w: Vec<f64>, bias: bool) -> ModelContext {
        ModelContext { kind: ModelKind::LinearRegression, weights: w, bias }
    }

    #[test]
    fn start_at_truth_needs_no_steps() {
        let ctx = lin(vec![0.7, -1.2, 0.3], true);
        let x0 = [1.5, -0.5];
        let g = ctx.weight_gradient(&x0, 2.0);
        let cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::Label);
        let r = gradient_inversion(&g, &ctx, Some(2.0), Some(&x0), &cfg).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.recovered, x0.to_vec());
    }

    #[test]
    fn one_d_root_in_descent_basin() {
        // (x − 2)·x = 3 has roots 3 and −1; from x = 2 descent reaches 3.
        let ctx = lin(vec![1.0], false);
        let cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::Label);
        let r = gradient_inversion(&[3.0], &ctx, Some(2.0), Some(&[2.0]), &cfg).unwrap();
        assert!((r.recovered[0] - 3.0).abs() <= 1e-4, "{:?}", r.recovered);
    }

    #[test]
    fn identifiable_instance_recovered() {
        let ctx = lin(vec![0.8, -0.4, 0.5], true);
        let x0 = [0.9, 2.1];
        let g = ctx.weight_gradient(&x0, -1.0);
        let cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::Label);
        let r = gradient_inversion(&g, &ctx, Some(-1.0), None, &cfg).unwrap();
        let err: f64 = r.recovered.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4, "err {err}");
    }

    #[test]
    fn loss_trace_never_increases() {
        let ctx = lin(vec![1.3, 0.2], true);
        let g = ctx.weight_gradient(&[0.4], 1.0);
        let cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::None);
        let r = gradient_inversion(&g, &ctx, None, Some(&[3.0, -2.0]), &cfg).unwrap();
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn heavy_smoothness_flattens() {
        let ctx = lin(vec![1.0, -1.0, 0.0], true);
        let g = ctx.weight_gradient(&[2.0, -3.0], 1.0);
        let mut cfg = AttackConfig::new(AttackKind::GradientInversion, PriorKind::Smoothness);
        cfg.lambda = 1e6;
        let r = gradient_inversion(&g, &ctx, None, Some(&[2.0, -3.0, 1.0]), &cfg).unwrap();
        assert!((r.recovered[0] - r.recovered[1]).abs() <= 1e-4, "{:?}", r.recovered);
    }

    #[test]
    fn model_inversion_examples() {
        let cfg = AttackConfig::new(AttackKind::ModelInversion, PriorKind::None);
        let r = model_inversion(&[6.0], &[lin(vec![2.0], false)], None, &cfg).unwrap();
        assert!((r.recovered[0] - 3.0).abs() <= 1e-4);

        let logit = ModelContext { kind: ModelKind::LogisticRegression, weights: vec![1.5, -0.5], bias: false };
        let r = model_inversion(&[0.5], std::slice::from_ref(&logit), Some(&[1.0, 2.0]), &cfg).unwrap();
        let z: f64 = logit.weights.iter().zip(&r.recovered).map(|(a, b)| a * b).sum();
        assert!(z.abs() <= 1e-4, "w·x = {z}");

        let x0 = [0.3, -1.1];
        let ms = [lin(vec![1.0, 2.0], false), lin(vec![-0.5, 1.0], false)];
        let outs: Vec<f64> = ms.iter().map(|m| m.output(&x0)).collect();
        let r = model_inversion(&outs, &ms, Some(&x0), &cfg).unwrap();
        assert_eq!(r.loss, 0.0);
    }

    #[test]
    fn brute_force_finds_planted_key() {
        let p = HeParams { n_d: 6, ..HeParams::default() };
        let key = SecretKey::from_bits(&p, 0b101101);
        let mut rng = stream(2, Purpose::HeEncrypt, &[]);
        let ms = [1234, -77, 5];
        let cs: Vec<_> = ms.iter().map(|m| he_encrypt(&p, *m, &key, &mut rng).unwrap()).collect();
        let r = brute_force_key(&ms, &cs, &p, 6).unwrap();
        assert_eq!(r.key_bits, Some(0b101101));
        assert_eq!(r.decrypt_calls, 64);

        let q = HeParams { n_d: 3, ..HeParams::default() };
        let key = he_keygen(&q, &mut rng).unwrap();
        let c = he_encrypt(&q, 99, &key, &mut rng).unwrap();
        // Plaintext the ciphertext does not hold: no key matches.
        let r = brute_force_key(&[100], &[c], &q, 3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.decrypt_calls, 8);
    }

    #[test]
    fn posterior_argmax_examples() {
        let u = CandidateUniverse::uniform(vec![0, 1, 2, 3], DEFAULT_CANDIDATE_CAP).unwrap();
        assert_eq!(attack_as_posterior_argmax(&[0.0], &u, &LikelihoodModel::Uninformative).unwrap(), (0, true));
        let u = CandidateUniverse::new(vec![0, 1, 2], vec![0.05, 0.9, 0.05], DEFAULT_CANDIDATE_CAP).unwrap();
        let flat = LikelihoodModel::gaussian(vec![vec![0.0], vec![0.01], vec![0.02]], 100.0).unwrap();
        assert_eq!(attack_as_posterior_argmax(&[0.0], &u, &flat).unwrap().0, 1);
    }
}
