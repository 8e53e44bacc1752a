//! Exact and Monte Carlo inference for a hierarchical latent model of
//! step-by-step text generation, with ambiguity measures and bound checks
//! for in-context prompting.
//!
//! A context is drawn from a prior, a chain of intentions is drawn from a
//! context-dependent kernel, and each intention emits one message. The
//! special END intention emits the stop symbol and ends the chain.

pub mod ambiguity;
pub mod bounds;
pub mod chain;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod logspace;
pub mod mc;
pub mod model;
pub mod rng;

pub use ambiguity::{
    ambiguity_profile, chain_ambiguity, input_ambiguity, length_threshold, skewness, AmbiguityMeasure,
    AmbiguityProfile, Threshold,
};
pub use bounds::{
    geometric_sweep, proof_quantities, theorem_rhs, verify_instance, BoundReport, PriorMode, SweepConfig, SweepRow,
    VerifyOptions,
};
pub use chain::{sample_chain, sample_prompt_instance, ChainRecord, LabeledChain, PromptInstance};
pub use error::{CotError, Result};
pub use exact::{
    enumerate_tails, joint_prob, marginal_prob, p_llm_conditional, posterior_latents, prefix_prob_given_context,
    prompt_marginal, q_true_conditional, Method, PosteriorResult,
};
pub use fixtures::{generate_random_model, make_fixture, Fixture, GeneratorParams};
pub use mc::{mc_marginal, mc_prefix_prob, McEstimate};
pub use model::{
    validate_model, ContextId, IntentionId, KernelFamily, MessageId, ModelSpec, Step, ValidationReport,
};
