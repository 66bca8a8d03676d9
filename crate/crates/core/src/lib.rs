//! Bayesian privacy / utility trade-off laboratory for horizontal federated
//! learning.

pub mod attacks;
pub mod belief;
pub mod bounds;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod flsim;
pub mod protection;
pub mod rng;

pub use error::{Error, Result};
pub use belief::{BeliefDistribution, CandidateUniverse, DpCheck, LikelihoodModel};
pub use bounds::{CheckOutcome, ClientReport, EvalSpec, TradeoffChoice, TradeoffReport, SCHEMA_VERSION};
pub use divergence::{DiagGaussian, DiscretePmf, DistanceResult};
pub use experiment::{AttackRow, AttackSuite, CurveRow, ExperimentConfig};
pub use flsim::{DatasetSpec, FederationConfig, FederationRun, ModelKind, ModelSpec, UniverseSpec, UtilitySpec};
pub use protection::{he::HeParams, MechanismSpec, PerCoord};
pub use rng::Purpose;
