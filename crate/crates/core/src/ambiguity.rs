//! Ambiguity of messages about their latent generators, prior skewness,
//! ambiguity-versus-length profiles and the length-threshold finder.

use crate::chain::LabeledChain;
use crate::error::{CotError, Result};
use crate::exact::{latent_split, ln_prefix_prob_given_context};
use crate::logspace::{ln, LogSum};
use crate::model::{ContextId, IntentionId, MessageId, ModelSpec};

/// `epsilon` is one minus the posterior probability of the true latents.
/// `odds = epsilon / (1 - epsilon)` is computed as a ratio of masses, so it
/// stays accurate when `epsilon` is tiny or close to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityMeasure {
    pub epsilon: f64,
    pub odds: f64,
}

impl AmbiguityMeasure {
    fn from_masses(ln_truth: f64, ln_other: f64) -> Self {
        let ln_total = LogSum::from_iter([ln_truth, ln_other]).value();
        let epsilon = if ln_other == f64::NEG_INFINITY {
            0.0
        } else {
            (ln_other - ln_total).exp().min(1.0)
        };
        let odds = if ln_other == f64::NEG_INFINITY {
            0.0
        } else if ln_truth == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (ln_other - ln_truth).exp()
        };
        AmbiguityMeasure { epsilon, odds }
    }
}

/// Ambiguity of `messages` about the latents `(context, intentions)`.
pub fn latent_ambiguity(
    spec: &ModelSpec,
    messages: &[MessageId],
    context: ContextId,
    intentions: &[IntentionId],
) -> Result<AmbiguityMeasure> {
    if messages.len() != intentions.len() {
        return Err(CotError::InvalidArgument(
            "messages and intentions differ in length".into(),
        ));
    }
    let mut ln_truth = f64::NEG_INFINITY;
    let mut other = LogSum::new();
    for c in spec.context_ids() {
        let lp = ln(spec.prior(c));
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if c == context {
            let split = latent_split(spec, messages, c, intentions);
            ln_truth = lp + split.ln_truth;
            other.add(lp + split.ln_other);
        } else {
            other.add(lp + ln_prefix_prob_given_context(spec, messages, c));
        }
    }
    let ln_other = other.value();
    if ln_truth == f64::NEG_INFINITY && ln_other == f64::NEG_INFINITY {
        return Err(CotError::ConditioningOnNullEvent {
            what: "messages have zero marginal probability".into(),
        });
    }
    Ok(AmbiguityMeasure::from_masses(ln_truth, ln_other))
}

pub fn chain_ambiguity_measure(spec: &ModelSpec, chain: &LabeledChain) -> Result<AmbiguityMeasure> {
    latent_ambiguity(spec, &chain.messages, chain.context, &chain.intentions)
}

/// `1 - q(c*, θ*₀..θ*ₘ | messages)`.
pub fn chain_ambiguity(spec: &ModelSpec, chain: &LabeledChain) -> Result<f64> {
    chain_ambiguity_measure(spec, chain).map(|a| a.epsilon)
}

pub fn input_ambiguity_measure(spec: &ModelSpec, input: &LabeledChain) -> Result<AmbiguityMeasure> {
    latent_ambiguity(spec, &input.messages, input.context, &input.intentions)
}

/// `1 - q(θ*₀, c* | x₀)`; longer inputs use all of their true intentions.
pub fn input_ambiguity(spec: &ModelSpec, input: &LabeledChain) -> Result<f64> {
    input_ambiguity_measure(spec, input).map(|a| a.epsilon)
}

/// `max_c q(c*) / q(c)`.
pub fn skewness(spec: &ModelSpec, context: ContextId) -> Result<f64> {
    if let Some(c) = spec.context_ids().find(|&c| spec.prior(c) <= 0.0) {
        return Err(CotError::ZeroPriorContext {
            context: spec.contexts[c.0].clone(),
        });
    }
    let target = spec.prior(context);
    Ok(spec
        .context_ids()
        .map(|c| target / spec.prior(c))
        .fold(1.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityProfile {
    pub lengths: Vec<usize>,
    pub values: Vec<f64>,
    pub source_chain: LabeledChain,
}

/// Ambiguity of each prefix ending in a content message.
pub fn ambiguity_profile(spec: &ModelSpec, chain: &LabeledChain) -> Result<AmbiguityProfile> {
    let content = chain
        .messages
        .iter()
        .position(|&m| spec.is_stop(m))
        .unwrap_or(chain.len());
    let lengths: Vec<usize> = (1..=content).collect();
    let values = lengths
        .iter()
        .map(|&l| {
            latent_ambiguity(spec, &chain.messages[..l], chain.context, &chain.intentions[..l])
                .map(|a| a.epsilon)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbiguityProfile {
        lengths,
        values,
        source_chain: chain.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Found(usize),
    NotFoundWithinHorizon,
}

impl Threshold {
    pub fn length(self) -> Option<usize> {
        match self {
            Threshold::Found(l) => Some(l),
            Threshold::NotFoundWithinHorizon => None,
        }
    }
}

/// Smallest profiled length from which every later value is at most `delta`.
pub fn length_threshold(profile: &AmbiguityProfile, delta: f64) -> Result<Threshold> {
    if !(0.0..0.5).contains(&delta) {
        return Err(CotError::DeltaOutOfRange(delta));
    }
    let mut start = None;
    for (i, &v) in profile.values.iter().enumerate().rev() {
        if v > delta {
            break;
        }
        start = Some(i);
    }
    Ok(match start {
        Some(i) => Threshold::Found(profile.lengths[i]),
        None => Threshold::NotFoundWithinHorizon,
    })
}
