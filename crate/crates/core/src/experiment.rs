//! Experiment orchestration: sweeps over mechanisms, curve rows, grouped
//! verification and the attack suite.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_as_posterior_argmax, brute_force_key, gradient_inversion, median_inversion_error, model_inversion,
    AttackConfig, AttackKind, ModelContext, PriorKind,
};
use crate::bounds::{
    check_he, check_randomization, check_report, check_sparsity, evaluate, randomization_bound_term, solve_constrained_tradeoff,
    sparsity_h, CheckOutcome, EvalSpec, TradeoffChoice, TradeoffReport,
};
use crate::divergence::log_affinity;
use crate::error::{Error, Result};
use crate::flsim::{run_federation, Domain, FederationConfig, FederationRun, ModelKind};
use crate::protection::he::{he_encrypt, he_keygen, HeParams};
use crate::protection::MechanismSpec;
use crate::rng::{normal_vec, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSuite {
    /// Noise levels for the median gradient-inversion sweep.
    pub sigmas: Vec<f64>,
    pub instances: usize,
    pub features: usize,
    #[serde(with = "crate::rng::seed_serde")]
    pub seed: u64,
    /// Keyspace bits for the brute-force search; 0 skips it.
    pub key_bits: usize,
}

impl Default for AttackSuite {
    fn default() -> Self {
        Self { sigmas: vec![0.0, 0.1, 0.3, 1.0], instances: 100, features: 2, seed: 0, key_bits: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub federation: FederationConfig,
    pub eval: EvalSpec,
    /// Mechanisms to sweep; empty means the single `federation.mechanism`.
    pub sweep: Vec<MechanismSpec>,
    /// Privacy budgets for the constrained choice.
    pub budgets: Vec<f64>,
    pub attacks: AttackSuite,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn mechanisms(&self) -> Vec<MechanismSpec> {
        if self.sweep.is_empty() {
            vec![self.federation.mechanism.clone()]
        } else {
            self.sweep.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.federation.clients < 2 || self.federation.trials < 2 {
            return Err(Error::InvalidParameter("need K ≥ 2 clients and T ≥ 2 trials".into()));
        }
        if self.budgets.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidParameter("budgets must be finite and ≥ 0".into()));
        }
        if self.eval.bins == 0 || self.eval.grid_points == 0 || !(self.eval.grid_sd > 0.0) || !(self.eval.delta_tol > 0.0) {
            return Err(Error::InvalidParameter("eval bins, grid points, grid width and tolerance must be positive".into()));
        }
        Ok(())
    }
}

pub struct SweepPoint {
    pub config: FederationConfig,
    pub run: FederationRun,
    pub reports: Vec<TradeoffReport>,
}

/// Runs every sweep point with the same master seed so the unprotected path
/// is shared across the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    cfg.mechanisms()
        .into_iter()
        .map(|mechanism| {
            let config = FederationConfig { mechanism, ..cfg.federation.clone() };
            let run = run_federation(&config)?;
            let reports = (0..run.views.len()).map(|v| evaluate(&run, v, &config, &cfg.eval)).collect::<Result<_>>()?;
            Ok(SweepPoint { config, run, reports })
        })
        .collect()
}

/// Per-report checks plus the sweep-level checks for every mechanism family
/// present.
pub fn verify_reports(reports: &[TradeoffReport]) -> Vec<CheckOutcome> {
    let mut out: Vec<CheckOutcome> = vec![];
    for r in reports {
        for mut c in check_report(r) {
            c.name = format!("{}[{}={}/{}]:{}", r.mechanism_id, r.param_name, r.param_value, r.view, c.name);
            out.push(c);
        }
    }
    let family = |id: &str| -> Vec<TradeoffReport> { reports.iter().filter(|r| r.mechanism_id == id).cloned().collect() };
    let push = |out: &mut Vec<CheckOutcome>, name: &str, res: Result<Vec<CheckOutcome>>| match res {
        Ok(v) => out.extend(v.into_iter().map(|mut c| {
            c.name = format!("{name}:{}", c.name);
            c
        })),
        Err(e) => out.push(CheckOutcome::le(format!("{name}:error"), 1.0, 0.0, 0.0).with_note(e.to_string())),
    };
    let rand = family("randomization");
    if !rand.is_empty() {
        push(&mut out, "randomization", check_randomization(&rand));
    }
    let sparse = family("sparsity");
    if !sparse.is_empty() {
        push(&mut out, "sparsity", check_sparsity(&sparse));
    }
    let he = family("toy_he");
    for pair in he.chunks(2) {
        let unknown = pair.iter().find(|r| r.view == "unknown_key");
        let known = pair.iter().find(|r| r.view == "known_key");
        push(&mut out, "toy_he", check_he(unknown, known));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub mechanism_id: String,
    pub param_name: String,
    pub param_value: f64,
    pub eps_p: f64,
    pub eps_u: f64,
    /// Lower bound on `ε_p` implied by the mechanism family bound.
    pub bound_privacy: f64,
    /// Upper bound on `ε_u` implied by the mechanism family bound.
    pub bound_utility: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    pub xi: f64,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    /// `budget:true|false` pairs separated by `;`.
    pub feasible_at_budget: String,
    /// Mean per-client `h` for sparsity points.
    pub h: Option<f64>,
}

fn pooled_o_variances(r: &TradeoffReport) -> Option<Vec<f64>> {
    let fits: Vec<_> = r.fits.o_clients.iter().cloned().collect::<Option<Vec<_>>>()?;
    let n = fits.first()?.dim();
    Some((0..n).map(|i| fits.iter().map(|f| f.variances[i]).sum::<f64>() / fits.len() as f64).collect())
}

pub fn curve_row(r: &TradeoffReport, budgets: &[f64]) -> Result<CurveRow> {
    let growth = r.growth();
    let kf = r.per_client.len() as f64;
    let (bound_privacy, bound_utility, h) = match &r.mechanism {
        MechanismSpec::Randomization { sigma } => {
            let vars = pooled_o_variances(r).ok_or_else(|| Error::NotGaussian("unprotected client fits unavailable".into()))?;
            let b = randomization_bound_term(*sigma, &vars);
            (r.c1 - 0.75 * growth * b, r.c4 * b, None)
        }
        MechanismSpec::Sparsity { d, .. } => {
            let (mu, var) = r.substitute.clone().ok_or_else(|| Error::NotGaussian("substitute missing".into()))?;
            let mut hs = 0.0;
            for f in r.fits.o_clients.iter() {
                let f = f.as_ref().ok_or_else(|| Error::NotGaussian("unprotected client fits unavailable".into()))?;
                hs += sparsity_h(f, *d, &mu, &var)?;
            }
            let h = hs / kf;
            let h_agg = match (&r.fits.o_aggregate, &r.fits.s_aggregate) {
                (Some(a), Some(b)) => (-log_affinity(&a.mean, &a.variances, &b.mean, &b.variances).exp_m1()).max(0.0).sqrt(),
                _ => return Err(Error::NotGaussian("aggregate fits unavailable".into())),
            };
            (r.c1 - r.c3 * 2f64.sqrt() * h, 2f64.sqrt() * r.c4 * h_agg, Some(h))
        }
        _ => {
            let tv_term = r.per_client.iter().map(|c| 0.5 * growth * c.tv).sum::<f64>() / kf;
            (r.c1 - tv_term, r.c4 * r.tv_a, None)
        }
    };
    let feasible_at_budget =
        budgets.iter().map(|b| format!("{b}:{}", r.eps_p <= *b)).collect::<Vec<_>>().join(";");
    let mechanism_id =
        if r.view == "protected" { r.mechanism_id.clone() } else { format!("{}:{}", r.mechanism_id, r.view) };
    Ok(CurveRow {
        mechanism_id,
        param_name: r.param_name.clone(),
        param_value: r.param_value,
        eps_p: r.eps_p,
        eps_u: r.eps_u,
        bound_privacy,
        bound_utility,
        c1: r.c1,
        c2: r.c2,
        c3: r.c3,
        c4: r.c4,
        xi: r.xi,
        gamma: r.gamma.map(|g| g.mean_form),
        delta: r.delta,
        feasible_at_budget,
        h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetChoice {
    pub budget: f64,
    pub choice: TradeoffChoice,
}

/// The constrained optimum over the sweep for every budget.
pub fn choose_per_budget(reports: &[TradeoffReport], budgets: &[f64]) -> Result<Vec<BudgetChoice>> {
    let pts: Vec<(f64, f64)> = reports.iter().map(|r| (r.eps_p, r.eps_u)).collect();
    budgets.iter().map(|b| Ok(BudgetChoice { budget: *b, choice: solve_constrained_tradeoff(&pts, *b)? })).collect()
}

/// One line of the attack table; cells that do not apply stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: String,
    pub param_name: String,
    pub param_value: f64,
    pub recovery_error: Option<f64>,
    pub loss: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub planted_key: Option<u64>,
    pub found_key: Option<u64>,
    pub decrypt_calls: Option<u64>,
    pub success_rate: Option<f64>,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Posterior arg-max success rate on every plaintext view of a recorded run.
pub fn posterior_attack_rows(run: &FederationRun, label: &str) -> Result<Vec<AttackRow>> {
    let mut rows = vec![];
    for view in &run.views {
        if view.release.per_client.iter().any(|d| d.domain == Domain::Cipher) {
            continue;
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for (setup, dist) in run.clients.iter().zip(&view.release.per_client) {
            for w in &dist.samples {
                let (idx, _) = attack_as_posterior_argmax(w, &setup.universe, &setup.likelihood)?;
                hits += usize::from(idx == setup.true_index);
                total += 1;
            }
        }
        rows.push(AttackRow {
            attack: format!("posterior_argmax{label}:{}", view.name),
            param_name: "releases".into(),
            param_value: total as f64,
            success_rate: Some(hits as f64 / total.max(1) as f64),
            ..Default::default()
        });
    }
    Ok(rows)
}

/// Optimization attacks on seeded identifiable instances, the noisy median
/// sweep, the brute-force key search, and (given a run) posterior arg-max
/// success on its recorded releases.
pub fn run_attack_suite(suite: &AttackSuite, run: Option<&FederationRun>) -> Result<Vec<AttackRow>> {
    let f = suite.features.max(1);
    let mut rows = vec![];
    let mut rng = stream(suite.seed, Purpose::Attack, &[u64::MAX]);

    let x0 = normal_vec(&mut rng, f);
    let mut weights = normal_vec(&mut rng, f);
    weights.push(0.5);
    let ctx = ModelContext { kind: ModelKind::LinearRegression, weights, bias: true };
    let y = 1.5;
    let gi = gradient_inversion(
        &ctx.weight_gradient(&x0, y),
        &ctx,
        Some(y),
        None,
        &AttackConfig::new(AttackKind::GradientInversion, PriorKind::Label),
    )?;
    rows.push(AttackRow {
        attack: "gradient_inversion".into(),
        param_name: "sigma".into(),
        recovery_error: Some(l2(&gi.recovered, &x0)),
        loss: Some(gi.loss),
        iterations: Some(gi.iterations),
        converged: Some(gi.converged),
        ..Default::default()
    });

    let models: Vec<ModelContext> = (0..f)
        .map(|_| ModelContext { kind: ModelKind::LinearRegression, weights: normal_vec(&mut rng, f), bias: false })
        .collect();
    let outs: Vec<f64> = models.iter().map(|m| m.output(&x0)).collect();
    let mi = model_inversion(&outs, &models, None, &AttackConfig::new(AttackKind::ModelInversion, PriorKind::None))?;
    rows.push(AttackRow {
        attack: "model_inversion".into(),
        param_name: "models".into(),
        param_value: f as f64,
        recovery_error: Some(l2(&mi.recovered, &x0)),
        loss: Some(mi.loss),
        iterations: Some(mi.iterations),
        converged: Some(mi.converged),
        ..Default::default()
    });

    if !suite.sigmas.is_empty() {
        let medians = median_inversion_error(&suite.sigmas, suite.instances.max(1), f, suite.seed)?;
        for (s, m) in suite.sigmas.iter().zip(medians) {
            rows.push(AttackRow {
                attack: "gradient_inversion_median".into(),
                param_name: "sigma".into(),
                param_value: *s,
                recovery_error: Some(m),
                ..Default::default()
            });
        }
    }

    if suite.key_bits > 0 {
        let params = HeParams { n_d: suite.key_bits, ..HeParams::default() };
        params.validate()?;
        let mut krng = stream(suite.seed, Purpose::HeKey, &[u64::MAX]);
        let key = he_keygen(&params, &mut krng)?;
        let mut erng = stream(suite.seed, Purpose::HeEncrypt, &[u64::MAX]);
        let (lo, hi) = params.plaintext_range();
        let ms: Vec<i64> = [lo, hi, 0, 17].to_vec();
        let cs = ms.iter().map(|m| he_encrypt(&params, *m, &key, &mut erng)).collect::<Result<Vec<_>>>()?;
        let ks = brute_force_key(&ms, &cs, &params, suite.key_bits as u32)?;
        rows.push(AttackRow {
            attack: "brute_force_key".into(),
            param_name: "key_bits".into(),
            param_value: suite.key_bits as f64,
            planted_key: Some(key.bits()),
            found_key: ks.key_bits,
            decrypt_calls: Some(ks.decrypt_calls),
            converged: Some(ks.converged),
            ..Default::default()
        });
    }

    if let Some(run) = run {
        rows.extend(posterior_attack_rows(run, "")?);
    }
    Ok(rows)
}
