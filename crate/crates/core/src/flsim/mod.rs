//! Horizontal federated learning at desk scale: local training, FedAvg,
//! utility, utility loss, and the constants Δ and γ.

mod data;
mod federation;
mod hist;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{generate_datasets, load_csv_dataset, make_candidates, DatasetSpec, UniverseSpec};
pub use federation::{
    run_federation, ClientSetup, FederationConfig, FederationRun, LocalSpec, ReleaseSet, RoundTrace, View,
};
pub use hist::{tv_histograms, BinKey, Binning, Domain, EmpiricalModelDist, Histogram, SharedBins, MAX_HIST_DIMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_true")]
    pub bias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::LinearRegression, bias: true }
    }
}

impl ModelSpec {
    pub fn dim(&self, features: usize) -> usize {
        features + usize::from(self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl ClientDataset {
    pub fn new(client_id: usize, features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptySamples);
        }
        if features.len() != targets.len() {
            return Err(Error::SampleCountMismatch { left: features.len(), right: targets.len() });
        }
        let f = features[0].len();
        if let Some(bad) = features.iter().find(|r| r.len() != f) {
            return Err(Error::DimensionMismatch { expected: f, got: bad.len() });
        }
        if features.iter().flatten().chain(&targets).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        Ok(Self { client_id, features, targets })
    }

    pub fn n_features(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    pub weights: Vec<f64>,
    pub kind: ModelKind,
}

impl ModelVector {
    pub fn zeros(dim: usize, kind: ModelKind) -> Self {
        Self { weights: vec![0.0; dim], kind }
    }
}

/// `w·x̃` where `x̃` appends a constant 1 when the model has a bias.
fn linear_score(w: &[f64], x: &[f64]) -> f64 {
    let mut s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    if w.len() == x.len() + 1 {
        s += w[x.len()];
    }
    s
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Model output for one row: the regression prediction or the class-1
/// probability.
pub fn predict(w: &ModelVector, x: &[f64]) -> f64 {
    let z = linear_score(&w.weights, x);
    match w.kind {
        ModelKind::LinearRegression => z,
        ModelKind::LogisticRegression => sigmoid(z),
    }
}

fn check_dims(w: &ModelVector, data: &ClientDataset) -> Result<()> {
    let f = data.n_features();
    if w.weights.len() != f && w.weights.len() != f + 1 {
        return Err(Error::DimensionMismatch { expected: f + 1, got: w.weights.len() });
    }
    Ok(())
}

/// Mean training loss: ½ squared error, or log-loss.
pub fn training_loss(w: &ModelVector, data: &ClientDataset) -> Result<f64> {
    check_dims(w, data)?;
    let n = data.len() as f64;
    let s: f64 = data
        .features
        .iter()
        .zip(&data.targets)
        .map(|(x, y)| match w.kind {
            ModelKind::LinearRegression => 0.5 * (linear_score(&w.weights, x) - y).powi(2),
            ModelKind::LogisticRegression => {
                let z = linear_score(&w.weights, x);
                // log(1 + e^z) − y z, written to avoid overflow.
                z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
            }
        })
        .sum();
    Ok(s / n)
}

/// Exact gradient of [`training_loss`].
pub fn training_gradient(w: &ModelVector, data: &ClientDataset) -> Result<Vec<f64>> {
    check_dims(w, data)?;
    let mut g = vec![0.0; w.weights.len()];
    let f = data.n_features();
    for (x, y) in data.features.iter().zip(&data.targets) {
        let r = predict(w, x) - y;
        for j in 0..f {
            g[j] += r * x[j];
        }
        if g.len() == f + 1 {
            g[f] += r;
        }
    }
    let n = data.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}

/// Full-batch gradient descent for `steps` steps.
pub fn local_update(w: &ModelVector, data: &ClientDataset, steps: usize, lr: f64) -> Result<ModelVector> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidParameter(format!("learning rate {lr} must be ≥ 0")));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("local update needs at least one step".into()));
    }
    let mut cur = w.clone();
    for step in 0..steps {
        let g = training_gradient(&cur, data)?;
        for (wi, gi) in cur.weights.iter_mut().zip(&g) {
            *wi -= lr * gi;
        }
        if cur.weights.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(cur)
}

/// Coordinate-wise sum divided by the count.
pub fn mean_from_sum(sum: &[f64], k: usize) -> Vec<f64> {
    sum.iter().map(|s| s / k as f64).collect()
}

pub fn fedavg_vectors(models: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = models.first().ok_or(Error::EmptySamples)?;
    let mut sum = vec![0.0; first.len()];
    for m in models {
        if m.len() != first.len() {
            return Err(Error::DimensionMismatch { expected: first.len(), got: m.len() });
        }
        for (s, x) in sum.iter_mut().zip(m) {
            *s += x;
        }
    }
    Ok(mean_from_sum(&sum, models.len()))
}

pub fn fedavg_aggregate(models: &[ModelVector]) -> Result<ModelVector> {
    let kind = models.first().ok_or(Error::EmptySamples)?.kind;
    let ws: Vec<Vec<f64>> = models.iter().map(|m| m.weights.clone()).collect();
    Ok(ModelVector { weights: fedavg_vectors(&ws)?, kind })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilitySpec {
    Accuracy,
    ClippedRegression { tau: f64 },
}

impl Default for UtilitySpec {
    fn default() -> Self {
        Self::ClippedRegression { tau: 4.0 }
    }
}

impl UtilitySpec {
    pub fn validate(&self, model: ModelKind) -> Result<()> {
        match (self, model) {
            (Self::ClippedRegression { tau }, ModelKind::LinearRegression) if *tau > 0.0 && tau.is_finite() => Ok(()),
            (Self::ClippedRegression { tau }, ModelKind::LinearRegression) => {
                Err(Error::InvalidParameter(format!("clip scale {tau} must be positive")))
            }
            (Self::Accuracy, ModelKind::LogisticRegression) => Ok(()),
            _ => Err(Error::InvalidParameter(
                "accuracy pairs with logistic regression, clipped regression with linear".into(),
            )),
        }
    }

    /// Upper bound of the utility, which is 1 by construction.
    pub fn c4(&self) -> f64 {
        1.0
    }
}

/// Utility in `[0, 1]`: accuracy, or `1 − min(1, MSE/τ)`.
pub fn utility(w: &ModelVector, data: &ClientDataset, spec: &UtilitySpec) -> f64 {
    let n = data.len() as f64;
    let u = match spec {
        UtilitySpec::Accuracy => {
            let correct = data
                .features
                .iter()
                .zip(&data.targets)
                .filter(|(x, y)| {
                    let label = if linear_score(&w.weights, x) >= 0.0 { 1.0 } else { 0.0 };
                    label == **y
                })
                .count();
            correct as f64 / n
        }
        UtilitySpec::ClippedRegression { tau } => {
            let mse: f64 = data
                .features
                .iter()
                .zip(&data.targets)
                .map(|(x, y)| (linear_score(&w.weights, x) - y).powi(2))
                .sum::<f64>()
                / n;
            if mse.is_finite() {
                1.0 - (mse / tau).min(1.0)
            } else {
                0.0
            }
        }
    };
    u.clamp(0.0, 1.0)
}

/// `Ū(w) = (1/K) Σ_k U_k(w)`.
pub fn mean_utility(w: &[f64], kind: ModelKind, datasets: &[ClientDataset], spec: &UtilitySpec) -> f64 {
    let m = ModelVector { weights: w.to_vec(), kind };
    datasets.iter().map(|d| utility(&m, d, spec)).sum::<f64>() / datasets.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityLoss {
    pub eps_u: f64,
    pub se: f64,
    pub utility_o: f64,
    pub utility_s: f64,
}

/// `ε_u = (1/K) Σ_k [Û_k(P_a^O) − Û_k(P_a^S)]` with paired standard error.
pub fn utility_loss(
    agg_o: &[Vec<f64>],
    agg_s: &[Vec<f64>],
    kind: ModelKind,
    datasets: &[ClientDataset],
    spec: &UtilitySpec,
) -> Result<UtilityLoss> {
    if agg_o.len() != agg_s.len() {
        return Err(Error::SampleCountMismatch { left: agg_o.len(), right: agg_s.len() });
    }
    if agg_o.is_empty() {
        return Err(Error::EmptySamples);
    }
    let uo: Vec<f64> = agg_o.iter().map(|w| mean_utility(w, kind, datasets, spec)).collect();
    let us: Vec<f64> = agg_s.iter().map(|w| mean_utility(w, kind, datasets, spec)).collect();
    let t = uo.len() as f64;
    let utility_o = uo.iter().sum::<f64>() / t;
    let utility_s = us.iter().sum::<f64>() / t;
    let diffs: Vec<f64> = uo.iter().zip(&us).map(|(a, b)| a - b).collect();
    let eps_u = utility_o - utility_s;
    let se = standard_error(&diffs);
    Ok(UtilityLoss { eps_u, se, utility_o, utility_s })
}

pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Best observed mean utility, optionally improved by a short gradient
/// descent on the pooled training loss (regression only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UStar {
    pub value: f64,
    pub best_observed: f64,
    pub argmax: Vec<f64>,
    pub polished: bool,
}

pub fn estimate_u_star(
    aggregates: &[Vec<f64>],
    kind: ModelKind,
    datasets: &[ClientDataset],
    spec: &UtilitySpec,
) -> Result<UStar> {
    let mut best = f64::NEG_INFINITY;
    let mut arg: Option<&Vec<f64>> = None;
    for w in aggregates {
        let u = mean_utility(w, kind, datasets, spec);
        if u > best {
            best = u;
            arg = Some(w);
        }
    }
    let arg = arg.ok_or(Error::EmptySamples)?.clone();
    let mut out = UStar { value: best, best_observed: best, argmax: arg.clone(), polished: false };
    if kind == ModelKind::LinearRegression {
        let polished = polish(&arg, kind, datasets)?;
        let u = mean_utility(&polished, kind, datasets, spec);
        if u > best {
            out = UStar { value: u, best_observed: best, argmax: polished, polished: true };
        }
    }
    Ok(out)
}

fn pooled_loss_grad(w: &[f64], kind: ModelKind, datasets: &[ClientDataset]) -> Result<(f64, Vec<f64>)> {
    let m = ModelVector { weights: w.to_vec(), kind };
    let mut loss = 0.0;
    let mut grad = vec![0.0; w.len()];
    for d in datasets {
        loss += training_loss(&m, d)?;
        for (g, x) in grad.iter_mut().zip(training_gradient(&m, d)?) {
            *g += x;
        }
    }
    let k = datasets.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((loss / k, grad))
}

fn polish(start: &[f64], kind: ModelKind, datasets: &[ClientDataset]) -> Result<Vec<f64>> {
    let mut w = start.to_vec();
    let (mut f, mut g) = pooled_loss_grad(&w, kind, datasets)?;
    for _ in 0..500 {
        let gn2: f64 = g.iter().map(|x| x * x).sum();
        if gn2.sqrt() <= 1e-10 {
            break;
        }
        let mut step = 1.0;
        loop {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let (fc, gc) = pooled_loss_grad(&cand, kind, datasets)?;
            if fc <= f - 1e-4 * step * gn2 {
                w = cand;
                f = fc;
                g = gc;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return Ok(w);
            }
        }
    }
    Ok(w)
}

/// Largest Δ (to within `tol`) such that the protected aggregate mass of the
/// near-optimal set `{w : u* − Ū(w) ≤ Δ}` stays at or below `tv / 2`.
pub fn compute_delta(s_utilities: &[f64], u_star: f64, tv: f64, tol: f64) -> Result<f64> {
    if s_utilities.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("bisection tolerance must be positive".into()));
    }
    if !(tv > 0.0) {
        return Err(Error::AssumptionViolated("TV(P_a^O, P_a^S) is zero, so no near-optimal set has small mass".into()));
    }
    let gaps: Vec<f64> = s_utilities.iter().map(|u| (u_star - u).max(0.0)).collect();
    let t = gaps.len() as f64;
    let feasible = |delta: f64| (gaps.iter().filter(|g| **g <= delta).count() as f64) / t <= tv / 2.0;
    if !feasible(0.0) {
        return Err(Error::AssumptionViolated(
            "protected aggregates already reach the optimum with mass above TV/2 (Δ ≤ 0)".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = gaps.iter().cloned().fold(0.0, f64::max) + 1.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !(lo > 0.0) {
        return Err(Error::AssumptionViolated(format!("near-optimal gap below tolerance {tol}")));
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gamma {
    /// `(1/K) Σ_k TV_k / TV_a`.
    pub mean_form: f64,
    /// `Σ_k TV_k / TV_a`.
    pub sum_form: f64,
}

pub fn compute_gamma(tv_k: &[f64], tv_a: f64) -> Result<Gamma> {
    if tv_k.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(tv_a > 0.0) {
        return Err(Error::ZeroAggregateTv);
    }
    let sum: f64 = tv_k.iter().sum();
    Ok(Gamma { mean_form: sum / tv_k.len() as f64 / tv_a, sum_form: sum / tv_a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_point(x: f64, y: f64) -> ClientDataset {
        ClientDataset::new(0, vec![vec![x]], vec![y]).unwrap()
    }

    #[test]
    fn local_update_examples() {
        let w = ModelVector::zeros(1, ModelKind::LinearRegression);
        let d = one_point(1.0, 2.0);
        assert_eq!(local_update(&w, &d, 1, 0.0).unwrap(), w);
        assert_eq!(local_update(&w, &d, 1, 0.5).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn loss_non_increasing_below_one_over_l() {
        let feats: Vec<Vec<f64>> = vec![vec![0.5], vec![-1.0], vec![2.0], vec![1.5]];
        let d = ClientDataset::new(0, feats.clone(), vec![1.0, -2.0, 3.5, 2.0]).unwrap();
        // L is the largest eigenvalue of the mean of x̃x̃ᵀ (2×2, closed form).
        let n = feats.len() as f64;
        let sxx: f64 = feats.iter().map(|r| r[0] * r[0]).sum::<f64>() / n;
        let sx: f64 = feats.iter().map(|r| r[0]).sum::<f64>() / n;
        let tr = sxx + 1.0;
        let det = sxx - sx * sx;
        let l = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        let lr = 0.9 / l;
        let mut w = ModelVector::zeros(2, ModelKind::LinearRegression);
        let mut prev = training_loss(&w, &d).unwrap();
        for _ in 0..50 {
            w = local_update(&w, &d, 1, lr).unwrap();
            let cur = training_loss(&w, &d).unwrap();
            assert!(cur <= prev + 1e-15);
            prev = cur;
        }
    }

    #[test]
    fn divergence_names_the_step() {
        let d = ClientDataset::new(0, vec![vec![1e3]], vec![1.0]).unwrap();
        let w = ModelVector::zeros(1, ModelKind::LinearRegression);
        assert!(matches!(local_update(&w, &d, 500, 10.0), Err(Error::Divergence { .. })));
    }

    #[test]
    fn fedavg_examples() {
        let m = |v: Vec<f64>| ModelVector { weights: v, kind: ModelKind::LinearRegression };
        assert_eq!(fedavg_aggregate(&[m(vec![0.0, 0.0]), m(vec![2.0, 4.0])]).unwrap().weights, vec![1.0, 2.0]);
        let xs = [vec![0.3, -1.2], vec![2.2, 0.7], vec![-0.4, 5.1]];
        let got = fedavg_vectors(&xs).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(got[i], (xs[0][i] + xs[1][i] + xs[2][i]) / 3.0, epsilon = 1e-15);
        }
        assert!(fedavg_vectors(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn utility_examples() {
        let d = ClientDataset::new(0, vec![vec![1.0], vec![-1.0]], vec![1.0, 0.0]).unwrap();
        let good = ModelVector { weights: vec![5.0, 0.0], kind: ModelKind::LogisticRegression };
        let bad = ModelVector { weights: vec![-5.0, 0.0], kind: ModelKind::LogisticRegression };
        assert_eq!(utility(&good, &d, &UtilitySpec::Accuracy), 1.0);
        assert_eq!(utility(&bad, &d, &UtilitySpec::Accuracy), 0.0);

        let r = ClientDataset::new(0, vec![vec![1.0], vec![2.0], vec![3.0]], vec![1.0, 3.0, 2.0]).unwrap();
        let w = ModelVector { weights: vec![1.0], kind: ModelKind::LinearRegression };
        // Residuals 0, −1, 1 → MSE 2/3.
        let u = utility(&w, &r, &UtilitySpec::ClippedRegression { tau: 4.0 });
        assert_abs_diff_eq!(u, 1.0 - (2.0 / 3.0) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn utility_loss_examples() {
        let d = vec![ClientDataset::new(0, vec![vec![1.0]], vec![1.0]).unwrap()];
        let spec = UtilitySpec::ClippedRegression { tau: 4.0 };
        let a = vec![vec![0.5], vec![1.5]];
        let l = utility_loss(&a, &a, ModelKind::LinearRegression, &d, &spec).unwrap();
        assert_eq!(l.eps_u, 0.0);
        assert!(utility_loss(&a, &a[..1], ModelKind::LinearRegression, &d, &spec).is_err());
    }

    #[test]
    fn delta_matches_exhaustive_scan() {
        // u(w) = 1 − |w| on a uniform grid over [−1, 1].
        let grid: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 * 0.01).collect();
        let utils: Vec<f64> = grid.iter().map(|w| 1.0 - w.abs()).collect();
        let u_star = 1.0;
        for tv in [0.1, 0.3, 0.6, 0.9] {
            let tol = 1e-10;
            let got = compute_delta(&utils, u_star, tv, tol).unwrap();
            let mut gaps: Vec<f64> = utils.iter().map(|u| u_star - u).collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let t = gaps.len() as f64;
            let m = (0..=gaps.len()).filter(|c| (*c as f64) / t <= tv / 2.0).max().unwrap();
            assert!((got - gaps[m]).abs() <= tol, "tv {tv}: {got} vs {}", gaps[m]);
        }
    }

    #[test]
    fn delta_monotone_in_tv() {
        let utils: Vec<f64> = (0..100).map(|i| 1.0 - (i as f64 / 100.0).powi(2)).collect();
        let mut prev = 0.0;
        for tv in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let d = compute_delta(&utils, 1.0, tv, 1e-9).unwrap();
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn delta_assumption_violations() {
        assert!(matches!(compute_delta(&[0.5, 0.4], 0.5, 0.0, 1e-9), Err(Error::AssumptionViolated(_))));
        assert!(matches!(compute_delta(&[0.5, 0.5], 0.5, 0.5, 1e-9), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(&[0.3], 0.3).unwrap().mean_form, 1.0);
        let g = compute_gamma(&[0.2, 0.4], 0.5).unwrap();
        assert_abs_diff_eq!(g.mean_form, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(g.sum_form, 1.2, epsilon = 1e-15);
        assert_eq!(compute_gamma(&[0.2], 0.0), Err(Error::ZeroAggregateTv));
    }
}
