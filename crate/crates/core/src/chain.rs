//! Labeled chains, prompt instances, and ancestral sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::model::{ContextId, IntentionId, MessageId, ModelSpec, Step};
use crate::rng::{substream, LabRng};

/// A message sequence together with the latents that generated it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledChain {
    pub messages: Vec<MessageId>,
    pub context: ContextId,
    pub intentions: Vec<IntentionId>,
    /// True iff the chain ends with the stop symbol emitted by END.
    pub complete: bool,
}

impl LabeledChain {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn steps(&self) -> Vec<Step> {
        self.intentions.iter().copied().zip(self.messages.iter().copied()).collect()
    }

    /// The first `len` messages, as an incomplete chain unless `len` covers
    /// the whole complete chain.
    pub fn prefix(&self, len: usize) -> LabeledChain {
        let len = len.min(self.len());
        LabeledChain {
            messages: self.messages[..len].to_vec(),
            context: self.context,
            intentions: self.intentions[..len].to_vec(),
            complete: self.complete && len == self.len(),
        }
    }

    /// Checks the structural invariants against a model.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let fail = |msg: &str| Err(CotError::InvalidArgument(format!("chain: {msg}")));
        if self.messages.len() != self.intentions.len() {
            return fail("messages and intentions differ in length");
        }
        if self.context.0 >= spec.n_contexts()
            || self.messages.iter().any(|m| m.0 >= spec.n_messages())
            || self.intentions.iter().any(|t| t.0 >= spec.n_intentions())
        {
            return fail("identifier out of range");
        }
        let stops = self.messages.iter().filter(|&&m| spec.is_stop(m)).count();
        if self.complete {
            let last_ok = self.messages.last().is_some_and(|&m| spec.is_stop(m))
                && self.intentions.last().is_some_and(|&t| spec.is_end(t));
            if !last_ok || stops != 1 {
                return fail("complete chains end with (END, stop) and contain one stop symbol");
            }
        } else if stops != 0 {
            return fail("incomplete chains may not contain the stop symbol");
        }
        Ok(())
    }

    pub fn to_record(&self, spec: &ModelSpec) -> ChainRecord {
        ChainRecord {
            messages: spec.message_names(&self.messages).into_iter().map(String::from).collect(),
            context: spec.contexts[self.context.0].clone(),
            intentions: spec.intention_names(&self.intentions).into_iter().map(String::from).collect(),
            complete: self.complete,
        }
    }

    pub fn from_record(spec: &ModelSpec, rec: &ChainRecord) -> Result<Self> {
        let chain = LabeledChain {
            messages: spec.parse_messages(&rec.messages)?,
            context: spec.context_id(&rec.context)?,
            intentions: rec
                .intentions
                .iter()
                .map(|t| spec.intention_id(t))
                .collect::<Result<_>>()?,
            complete: rec.complete,
        };
        chain.check(spec)?;
        Ok(chain)
    }
}

/// Serialized chain: `{messages, context, intentions, complete}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub messages: Vec<String>,
    pub context: String,
    pub intentions: Vec<String>,
    pub complete: bool,
}

/// N example chains plus an input prefix, all generated under one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInstance {
    pub examples: Vec<LabeledChain>,
    pub input: LabeledChain,
    pub true_context: ContextId,
}

impl PromptInstance {
    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn example_messages(&self) -> Vec<Vec<MessageId>> {
        self.examples.iter().map(|z| z.messages.clone()).collect()
    }
}

pub(crate) fn draw(probs: &[f64], rng: &mut LabRng) -> usize {
    WeightedIndex::new(probs)
        .expect("validated probability vector")
        .sample(rng)
}

/// Draws a complete chain under `context` using the supplied generator.
pub fn sample_chain_with(spec: &ModelSpec, context: ContextId, rng: &mut LabRng) -> Result<LabeledChain> {
    let mut intentions = Vec::new();
    let mut messages = Vec::new();
    let mut history: Vec<Step> = Vec::new();
    let mut theta = IntentionId(draw(&spec.init_intention[context.0], rng));
    loop {
        let msg = MessageId(draw(&spec.emission[theta.0], rng));
        intentions.push(theta);
        messages.push(msg);
        if spec.is_end(theta) {
            return Ok(LabeledChain {
                messages,
                context,
                intentions,
                complete: true,
            });
        }
        if messages.len() >= spec.max_len {
            return Err(CotError::Truncation { max_len: spec.max_len });
        }
        history.push((theta, msg));
        let row = spec.transition_row(context, &history).ok_or_else(|| {
            CotError::InvalidModel(format!(
                "no transition row for history `{}`",
                spec.history_key(&history)
            ))
        })?;
        theta = IntentionId(draw(row, rng));
    }
}

/// Draws a complete chain; deterministic in `seed`.
pub fn sample_chain(spec: &ModelSpec, context: ContextId, seed: u64) -> Result<LabeledChain> {
    sample_chain_with(spec, context, &mut substream(seed, 0))
}

/// The first message of a fresh chain, as an incomplete prefix.
pub fn sample_input_with(spec: &ModelSpec, context: ContextId, rng: &mut LabRng) -> LabeledChain {
    let theta = IntentionId(draw(&spec.init_intention[context.0], rng));
    let msg = MessageId(draw(&spec.emission[theta.0], rng));
    LabeledChain {
        messages: vec![msg],
        context,
        intentions: vec![theta],
        complete: false,
    }
}

pub fn sample_context_with(spec: &ModelSpec, rng: &mut LabRng) -> ContextId {
    ContextId(draw(&spec.context_prior, rng))
}

/// Stream layout used by the instance samplers: stream 0 draws the context,
/// stream 1 the input, stream `2 + k` example `k`.
const CONTEXT_STREAM: u64 = 0;
const INPUT_STREAM: u64 = 1;
const FIRST_EXAMPLE_STREAM: u64 = 2;

/// Samples an instance with the true context drawn from the prior.
pub fn sample_prompt_instance(spec: &ModelSpec, n: usize, seed: u64) -> Result<PromptInstance> {
    let context = sample_context_with(spec, &mut substream(seed, CONTEXT_STREAM));
    sample_prompt_instance_in_context(spec, context, n, seed)
}

/// Samples an instance under a fixed true context.
pub fn sample_prompt_instance_in_context(
    spec: &ModelSpec,
    context: ContextId,
    n: usize,
    seed: u64,
) -> Result<PromptInstance> {
    let input = sample_input_with(spec, context, &mut substream(seed, INPUT_STREAM));
    let examples = (0..n as u64)
        .map(|k| sample_chain_with(spec, context, &mut substream(seed, FIRST_EXAMPLE_STREAM + k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PromptInstance {
        examples,
        input,
        true_context: context,
    })
}

/// Rejection sampler: draws from stream `seed` until a chain satisfying
/// `accept` appears, giving up after `budget` draws. Truncated draws count
/// as rejections.
pub fn sample_chain_until(
    spec: &ModelSpec,
    context: ContextId,
    seed: u64,
    budget: usize,
    mut accept: impl FnMut(&LabeledChain) -> bool,
) -> Option<LabeledChain> {
    let mut rng = substream(seed, 0);
    for _ in 0..budget {
        match sample_chain_with(spec, context, &mut rng) {
            Ok(chain) if accept(&chain) => return Some(chain),
            _ => continue,
        }
    }
    None
}
