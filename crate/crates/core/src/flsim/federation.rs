//! T seeded trials of R FedAvg rounds, each run twice: once unprotected
//! (O path) and once through the protection mechanism (S path).
//!
//! Both paths share the per-(trial, round, client) release jitter, so the O
//! path is identical across mechanism sweeps and a no-op mechanism
//! reproduces it sample for sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{generate_datasets, make_candidates, DatasetSpec, UniverseSpec};
use super::hist::{Domain, EmpiricalModelDist};
use super::{fedavg_vectors, local_update, mean_from_sum, mean_utility, ClientDataset, ModelKind, ModelSpec, ModelVector, UtilitySpec};
use crate::belief::{CandidateUniverse, LikelihoodFloor, LikelihoodModel};
use crate::divergence::DiagGaussian;
use crate::error::{Error, Result};
use crate::protection::he::{he_decrypt, he_encrypt, he_keygen, he_sum, Ciphertext, HeParams, SecretKey};
use crate::protection::{interval_share_view, quantize_vec, randomize, secret_share, sparsify, MechanismSpec};
use crate::rng::{normal_vec, stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSpec {
    pub steps: usize,
    pub lr: f64,
}

impl Default for LocalSpec {
    fn default() -> Self {
        Self { steps: 40, lr: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub clients: usize,
    pub rounds: usize,
    pub trials: usize,
    #[serde(with = "crate::rng::seed_serde")]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub utility: UtilitySpec,
    pub local: LocalSpec,
    pub universe: UniverseSpec,
    pub mechanism: MechanismSpec,
    /// Trials used to fit the sparsity substitute when it is not given.
    pub pilot_trials: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            clients: 4,
            rounds: 50,
            trials: 1000,
            seed: 0,
            dataset: DatasetSpec::default(),
            model: ModelSpec::default(),
            utility: UtilitySpec::default(),
            local: LocalSpec::default(),
            universe: UniverseSpec::default(),
            mechanism: MechanismSpec::NoOp,
            pilot_trials: 64,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.clients < 2 {
            return Err(Error::InvalidParameter(format!("need K ≥ 2 clients, got {}", self.clients)));
        }
        if self.trials < 2 {
            return Err(Error::InvalidParameter(format!("need T ≥ 2 trials, got {}", self.trials)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("need at least one round".into()));
        }
        if self.local.steps == 0 || !(self.local.lr > 0.0) {
            return Err(Error::InvalidParameter("local training needs steps ≥ 1 and lr > 0".into()));
        }
        if let Some(kind) = self.dataset.model_kind() {
            if kind != self.model.kind {
                return Err(Error::InvalidParameter(format!("dataset generator produces {kind:?} data")));
            }
        }
        if matches!(self.mechanism, MechanismSpec::Sparsity { mu_g: None, .. } | MechanismSpec::Sparsity { var_g: None, .. })
            && self.pilot_trials < 2
        {
            return Err(Error::InvalidParameter("fitting the sparsity substitute needs ≥ 2 pilot trials".into()));
        }
        self.universe.validate()?;
        self.utility.validate(self.model.kind)?;
        self.mechanism.validate(dim)
    }
}

/// Per-round record of the noiseless unprotected reference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub global: Vec<f64>,
    pub mean_utility: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSetup {
    pub universe: CandidateUniverse<ClientDataset>,
    pub true_index: usize,
    pub likelihood: LikelihoodModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSet {
    pub per_client: Vec<EmpiricalModelDist>,
    pub aggregate: EmpiricalModelDist,
}

/// What the server observes under protection. HE yields two views, one per
/// key regime; every other mechanism yields one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub name: String,
    /// False when releases carry no information about the candidate.
    pub informative: bool,
    pub release: ReleaseSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationRun {
    pub kind: ModelKind,
    pub datasets: Vec<ClientDataset>,
    pub clients: Vec<ClientSetup>,
    pub traces: Vec<RoundTrace>,
    /// Global model entering the last round of the noiseless run.
    pub w_ref: Vec<f64>,
    pub dist_o: ReleaseSet,
    pub views: Vec<View>,
    /// Fitted Gaussian of pooled unprotected client releases (sparsity only).
    pub pilot_fit: Option<DiagGaussian>,
    pub max_quantization_error: f64,
}

struct Ctx<'a> {
    cfg: &'a FederationConfig,
    datasets: &'a [ClientDataset],
    dim: usize,
    substitute: Option<(Vec<f64>, Vec<f64>)>,
}

struct TrialOut {
    o_clients: Vec<Vec<f64>>,
    o_agg: Vec<f64>,
    views: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    qerr: f64,
}

fn model(w: &[f64], kind: ModelKind) -> ModelVector {
    ModelVector { weights: w.to_vec(), kind }
}

fn sub_err(trial: u64, round: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Mechanism { trial: trial as usize, round, source: Box::new(e) }
}

/// One round of local updates plus the shared jitter, quantized.
fn jittered(
    ctx: &Ctx,
    global: &[f64],
    jitter: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    let mut raw_local = Vec::with_capacity(ctx.datasets.len());
    let mut released = Vec::with_capacity(ctx.datasets.len());
    let mut qerr: f64 = 0.0;
    for (d, j) in ctx.datasets.iter().zip(jitter) {
        let local = local_update(&model(global, ctx.cfg.model.kind), d, ctx.cfg.local.steps, ctx.cfg.local.lr)?.weights;
        let raw: Vec<f64> = local.iter().zip(j).map(|(a, b)| a + b).collect();
        let q = quantize_vec(&raw);
        for (a, b) in raw.iter().zip(&q) {
            qerr = qerr.max((a - b).abs());
        }
        raw_local.push(local);
        released.push(q);
    }
    Ok((raw_local, released, qerr))
}

fn jitter_for(ctx: &Ctx, purpose: Purpose, t: u64, r: usize) -> Vec<Vec<f64>> {
    let s = ctx.cfg.universe.sigma_obs;
    (0..ctx.datasets.len())
        .map(|k| {
            let mut rng = stream(ctx.cfg.seed, purpose, &[t, r as u64, k as u64]);
            normal_vec(&mut rng, ctx.dim).into_iter().map(|z| s * z).collect()
        })
        .collect()
}

fn run_o_only(ctx: &Ctx, purpose: Purpose, t: u64) -> Result<Vec<Vec<f64>>> {
    let mut global = vec![0.0; ctx.dim];
    let mut last = vec![];
    for r in 0..ctx.cfg.rounds {
        let (_, rel, _) = jittered(ctx, &global, &jitter_for(ctx, purpose, t, r))?;
        global = fedavg_vectors(&rel)?;
        last = rel;
    }
    Ok(last)
}

fn encrypt_all(
    p: &HeParams,
    models: &[Vec<f64>],
    key: &SecretKey,
    seed: u64,
    t: u64,
    r: usize,
) -> Result<Vec<Vec<Ciphertext>>> {
    models
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut rng = stream(seed, Purpose::HeEncrypt, &[t, r as u64, k as u64]);
            w.iter().map(|x| he_encrypt(p, p.encode(*x)?, key, &mut rng)).collect()
        })
        .collect()
}

/// Applies the mechanism to one round's releases. Returns the server views
/// and the aggregate the clients continue from.
fn protect(
    ctx: &Ctx,
    t: u64,
    r: usize,
    local: &[Vec<f64>],
    pre: &[Vec<f64>],
    key: Option<&SecretKey>,
) -> Result<(Vec<(Vec<Vec<f64>>, Vec<f64>)>, Vec<f64>)> {
    let k = pre.len();
    let mut rng = stream(ctx.cfg.seed, Purpose::Mechanism, &[t, r as u64]);
    match &ctx.cfg.mechanism {
        MechanismSpec::NoOp => {
            let agg = fedavg_vectors(pre)?;
            Ok((vec![(pre.to_vec(), agg.clone())], agg))
        }
        MechanismSpec::Randomization { sigma } => {
            let v: Vec<Vec<f64>> = pre.iter().map(|w| quantize_vec(&randomize(w, *sigma, &mut rng))).collect();
            let agg = fedavg_vectors(&v)?;
            Ok((vec![(v, agg.clone())], agg))
        }
        MechanismSpec::Sparsity { d, .. } => {
            let (mu, var) = ctx.substitute.as_ref().ok_or_else(|| Error::MissingRegime("mechanism state not prepared".into()))?;
            let v: Vec<Vec<f64>> = pre
                .iter()
                .map(|w| sparsify(w, *d, mu, var, &mut rng).map(|x| quantize_vec(&x)))
                .collect::<Result<_>>()?;
            let agg = fedavg_vectors(&v)?;
            Ok((vec![(v, agg.clone())], agg))
        }
        MechanismSpec::SecretSharing { a, b, .. } => {
            let (a, b) = (a.expand(ctx.dim)?, b.expand(ctx.dim)?);
            let mut masks = stream(ctx.cfg.seed, Purpose::Masks, &[t, r as u64]);
            let shares = secret_share(pre, &mut masks)?;
            let agg = mean_from_sum(&shares.reconstructed_sum, k);
            let v = local
                .iter()
                .enumerate()
                .map(|(i, c)| interval_share_view(c, &a, &b, &shares.shares[i][0]))
                .collect();
            Ok((vec![(v, agg.clone())], agg))
        }
        MechanismSpec::ToyHe(p) => {
            let key = key.ok_or_else(|| Error::MissingRegime("mechanism state not prepared".into()))?;
            let cts = encrypt_all(p, pre, key, ctx.cfg.seed, t, r)?;
            let (lo, hi) = p.plaintext_range();
            let mut agg_known = Vec::with_capacity(ctx.dim);
            let mut agg_unknown = Vec::with_capacity(ctx.dim);
            for i in 0..ctx.dim {
                let plain: i64 = pre.iter().map(|w| p.encode(w[i])).sum::<Result<i64>>()?;
                if plain < lo || plain > hi {
                    return Err(Error::FixedPointOverflow(p.decode(plain)));
                }
                let col: Vec<Ciphertext> = cts.iter().map(|c| c[i].clone()).collect();
                let sum = he_sum(&col)?;
                agg_known.push(p.decode(he_decrypt(&sum, key)));
                agg_unknown.push(sum.server_tag());
            }
            let agg_known = mean_from_sum(&agg_known, k);
            let agg_unknown = mean_from_sum(&agg_unknown, k);
            let tags = cts.iter().map(|c| c.iter().map(Ciphertext::server_tag).collect()).collect();
            let plain = cts.iter().map(|c| c.iter().map(|x| p.decode(he_decrypt(x, key))).collect()).collect();
            Ok((vec![(tags, agg_unknown), (plain, agg_known.clone())], agg_known))
        }
    }
}

fn run_trial(ctx: &Ctx, t: u64) -> Result<TrialOut> {
    let key = match &ctx.cfg.mechanism {
        MechanismSpec::ToyHe(p) => Some(he_keygen(p, &mut stream(ctx.cfg.seed, Purpose::HeKey, &[t]))?),
        _ => None,
    };
    let mut g_o = vec![0.0; ctx.dim];
    let mut g_s = vec![0.0; ctx.dim];
    let mut qerr: f64 = 0.0;
    let mut out = None;
    for r in 0..ctx.cfg.rounds {
        let jitter = jitter_for(ctx, Purpose::Jitter, t, r);
        let (_, o_rel, q1) = jittered(ctx, &g_o, &jitter)?;
        let (s_local, pre, q2) = jittered(ctx, &g_s, &jitter)?;
        qerr = qerr.max(q1).max(q2);
        let o_agg = fedavg_vectors(&o_rel)?;
        let (views, s_agg) = protect(ctx, t, r, &s_local, &pre, key.as_ref()).map_err(sub_err(t, r))?;
        g_o = o_agg.clone();
        g_s = s_agg;
        out = Some(TrialOut { o_clients: o_rel, o_agg, views, qerr: 0.0 });
    }
    let mut out = out.expect("at least one round");
    out.qerr = qerr;
    Ok(out)
}

fn grad_norm(w: &[f64], kind: ModelKind, datasets: &[ClientDataset]) -> Result<f64> {
    let m = model(w, kind);
    let mut g = vec![0.0; w.len()];
    for d in datasets {
        for (a, b) in g.iter_mut().zip(super::training_gradient(&m, d)?) {
            *a += b / datasets.len() as f64;
        }
    }
    Ok(g.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn release_set(domain: Domain, per_client: Vec<Vec<Vec<f64>>>, agg: Vec<Vec<f64>>) -> ReleaseSet {
    ReleaseSet {
        per_client: per_client.into_iter().map(|s| EmpiricalModelDist::new(domain, s)).collect(),
        aggregate: EmpiricalModelDist::new(domain, agg),
    }
}

/// Runs the full simulation.
pub fn run_federation(cfg: &FederationConfig) -> Result<FederationRun> {
    let datasets = generate_datasets(&cfg.dataset, cfg.clients, cfg.seed)?;
    let kind = cfg.model.kind;
    let dim = cfg.model.dim(datasets[0].n_features());
    cfg.validate(dim)?;
    if let Some(d) = datasets.iter().find(|d| d.n_features() != datasets[0].n_features()) {
        return Err(Error::DimensionMismatch { expected: datasets[0].n_features(), got: d.n_features() });
    }

    // Noiseless reference run.
    let mut traces = Vec::with_capacity(cfg.rounds);
    let mut global = vec![0.0; dim];
    let mut w_ref = global.clone();
    for r in 0..cfg.rounds {
        w_ref = global.clone();
        let locals: Vec<Vec<f64>> = datasets
            .iter()
            .map(|d| local_update(&model(&global, kind), d, cfg.local.steps, cfg.local.lr).map(|m| m.weights))
            .collect::<Result<_>>()?;
        global = fedavg_vectors(&locals)?;
        traces.push(RoundTrace {
            round: r,
            mean_utility: mean_utility(&global, kind, &datasets, &cfg.utility),
            grad_norm: grad_norm(&global, kind, &datasets)?,
            global: global.clone(),
        });
    }

    let clients = datasets
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut rng = stream(cfg.seed, Purpose::Universe, &[k as u64]);
            let (cands, true_index) = make_candidates(d, kind, &cfg.universe, &mut rng)?;
            let means: Vec<Vec<f64>> = cands
                .iter()
                .map(|c| local_update(&model(&w_ref, kind), c, cfg.local.steps, cfg.local.lr).map(|m| m.weights))
                .collect::<Result<_>>()?;
            let likelihood = if cfg.universe.floor_weight > 0.0 {
                let centre = fedavg_vectors(&means)?;
                let reach = means
                    .iter()
                    .map(|m| m.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                let floor = LikelihoodFloor {
                    weight: cfg.universe.floor_weight,
                    mean: centre,
                    sigma: cfg.universe.floor_scale * cfg.universe.sigma_obs + reach,
                };
                LikelihoodModel::gaussian_with_floor(means, cfg.universe.sigma_obs, floor)?
            } else {
                LikelihoodModel::gaussian(means, cfg.universe.sigma_obs)?
            };
            let universe = CandidateUniverse::uniform(cands, cfg.universe.cap)?;
            Ok(ClientSetup { universe, true_index, likelihood })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ctx = Ctx { cfg, datasets: &datasets, dim, substitute: None };
    let mut pilot_fit = None;
    if let MechanismSpec::Sparsity { d, mu_g, var_g } = &cfg.mechanism {
        let (mu, var) = match (mu_g, var_g) {
            (Some(m), Some(v)) => (m.clone(), v.clone()),
            _ => {
                let pooled: Vec<Vec<f64>> = (0..cfg.pilot_trials as u64)
                    .into_par_iter()
                    .map(|t| run_o_only(&ctx, Purpose::Pilot, t))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect();
                let fit = DiagGaussian::fit(&pooled)?;
                let (tm, tv) = (fit.mean[*d..].to_vec(), fit.variances[*d..].to_vec());
                pilot_fit = Some(fit);
                (mu_g.clone().unwrap_or(tm), var_g.clone().unwrap_or(tv))
            }
        };
        ctx.substitute = Some((mu, var));
    }

    let outs: Vec<TrialOut> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(&ctx, t))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    let k = cfg.clients;
    let mut max_q: f64 = 0.0;
    let mut o_k: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(cfg.trials); k];
    let mut o_a = Vec::with_capacity(cfg.trials);
    let n_views = outs[0].views.len();
    let mut v_k: Vec<Vec<Vec<Vec<f64>>>> = vec![vec![Vec::with_capacity(cfg.trials); k]; n_views];
    let mut v_a: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(cfg.trials); n_views];
    for out in outs {
        max_q = max_q.max(out.qerr);
        for (i, w) in out.o_clients.into_iter().enumerate() {
            o_k[i].push(w);
        }
        o_a.push(out.o_agg);
        for (v, (clients, agg)) in out.views.into_iter().enumerate() {
            for (i, w) in clients.into_iter().enumerate() {
                v_k[v][i].push(w);
            }
            v_a[v].push(agg);
        }
    }
    let names: Vec<(&str, Domain, bool)> = match cfg.mechanism {
        MechanismSpec::ToyHe(_) => vec![("unknown_key", Domain::Cipher, false), ("known_key", Domain::Plain, true)],
        _ => vec![("protected", Domain::Plain, true)],
    };
    let views = names
        .into_iter()
        .zip(v_k.into_iter().zip(v_a))
        .map(|((name, domain, informative), (kk, aa))| View {
            name: name.to_string(),
            informative,
            release: release_set(domain, kk, aa),
        })
        .collect();

    Ok(FederationRun {
        kind,
        datasets,
        clients,
        traces,
        w_ref,
        dist_o: release_set(Domain::Plain, o_k, o_a),
        views,
        pilot_fit,
        max_quantization_error: max_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protection::PerCoord;

    fn small(mechanism: MechanismSpec) -> FederationConfig {
        FederationConfig { rounds: 3, trials: 40, seed: 11, mechanism, ..FederationConfig::default() }
    }

    #[test]
    fn noop_reproduces_o_path() {
        let run = run_federation(&small(MechanismSpec::NoOp)).unwrap();
        assert_eq!(run.views.len(), 1);
        assert_eq!(run.views[0].release, run.dist_o);
        assert!(run.max_quantization_error <= 1.0 / 512.0);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = small(MechanismSpec::Randomization { sigma: 0.3 });
        assert_eq!(run_federation(&cfg).unwrap(), run_federation(&cfg).unwrap());
    }

    #[test]
    fn o_path_independent_of_mechanism() {
        let a = run_federation(&small(MechanismSpec::NoOp)).unwrap();
        let b = run_federation(&small(MechanismSpec::Randomization { sigma: 1.0 })).unwrap();
        assert_eq!(a.dist_o, b.dist_o);
    }

    #[test]
    fn secret_sharing_aggregate_is_exact() {
        let ss = MechanismSpec::SecretSharing { delta: 0.3, a: PerCoord::Scalar(0.6), b: PerCoord::Scalar(0.6) };
        let a = run_federation(&small(MechanismSpec::NoOp)).unwrap();
        let b = run_federation(&small(ss)).unwrap();
        assert_eq!(a.dist_o.aggregate, b.views[0].release.aggregate);
    }

    #[test]
    fn he_known_key_matches_noop() {
        let a = run_federation(&small(MechanismSpec::NoOp)).unwrap();
        let b = run_federation(&small(MechanismSpec::ToyHe(HeParams::default()))).unwrap();
        assert_eq!(b.views.len(), 2);
        assert_eq!(b.views[1].release, a.dist_o);
        assert_eq!(b.views[0].release.aggregate.domain, Domain::Cipher);
        assert!(!b.views[0].informative);
    }

    #[test]
    fn sparsity_full_dimension_is_identity() {
        let sp = MechanismSpec::Sparsity { d: 2, mu_g: None, var_g: None };
        let run = run_federation(&small(sp)).unwrap();
        assert_eq!(run.views[0].release, run.dist_o);
        assert!(run.pilot_fit.is_some());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = FederationConfig { clients: 1, ..small(MechanismSpec::NoOp) };
        assert!(run_federation(&cfg).is_err());
        let cfg = FederationConfig { trials: 1, ..small(MechanismSpec::NoOp) };
        assert!(run_federation(&cfg).is_err());
    }

    #[test]
    fn budget_breach_carries_coordinates() {
        let p = HeParams { error_bound: 6000, ..HeParams::default() };
        let err = run_federation(&small(MechanismSpec::ToyHe(p))).unwrap_err();
        assert!(matches!(err, Error::Mechanism { trial: 0, round: 0, .. }), "{err:?}");
    }
}
