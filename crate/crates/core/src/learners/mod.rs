//! Optimisation backends: PPO, Bayesian optimisation, the maximum-entropy
//! preference sampler, and the information cost for bounded-rational agents.

pub mod bayes;
pub mod fixed;
pub mod info_cost;
pub mod maxent;
pub mod nn;
pub mod policy;
pub mod ppo;

pub use bayes::{bayes_suggest, AcquisitionConfig, BayesLeader, KernelParams, SurrogateState};
pub use fixed::FixedPolicy;
pub use info_cost::{kl_information_cost, uniform_information_cost};
pub use maxent::{max_entropy_sample, preference_entropy, MaxEntropyLeader, PreferenceGrid};
pub use policy::{Dist, Head, PolicySpec};
pub use ppo::{gae_advantages, surrogate_loss, PolicySample, PpoConfig, PpoLearner, SurrogateCoeffs};
