//! Exact probabilities of the generative process.
//!
//! Every quantity is a sum over latent intention paths consistent with the
//! observed messages. [`Frontier`] carries those paths one message at a time,
//! in log space. Under [`Method::Enumerate`] each path keeps its full
//! history (required for FULL kernels). Under [`Method::Forward`] paths that
//! end in the same intention are merged, which is the forward recursion and
//! is only valid for MARKOV kernels.
//!
//! Conditioning events are prefixes: "the document begins with these
//! messages". A sequence ending in the stop symbol is automatically a
//! complete chain because only END emits the stop symbol.

use std::collections::BTreeMap;

use crate::chain::LabeledChain;
use crate::error::{CotError, Result};
use crate::logspace::{checked_exp, ln, log_add, LogSum};
use crate::model::{ContextId, IntentionId, KernelFamily, MessageId, ModelSpec, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Merge paths by their last intention (MARKOV kernels only).
    Forward,
    /// Keep every latent path separately.
    Enumerate,
}

impl Method {
    /// Forward recursion where the kernel allows it, enumeration otherwise.
    pub fn for_spec(spec: &ModelSpec) -> Method {
        match spec.family() {
            KernelFamily::Markov => Method::Forward,
            KernelFamily::Full => Method::Enumerate,
        }
    }
}

/// Latent paths consistent with the messages consumed so far, optionally
/// tracking one designated ("true") path separately from the rest.
#[derive(Clone, Debug)]
pub struct Frontier<'a> {
    spec: &'a ModelSpec,
    context: ContextId,
    merge: bool,
    consumed: usize,
    /// Non-designated paths. When merging, the history holds only the last step.
    paths: Vec<(Vec<Step>, f64)>,
    /// Designated path history and log weight.
    truth: Option<(Vec<Step>, f64)>,
}

impl<'a> Frontier<'a> {
    pub fn new(spec: &'a ModelSpec, context: ContextId, method: Method) -> Result<Self> {
        if method == Method::Forward && spec.family() != KernelFamily::Markov {
            return Err(CotError::NotMarkov);
        }
        Ok(Frontier {
            spec,
            context,
            merge: method == Method::Forward,
            consumed: 0,
            paths: Vec::new(),
            truth: None,
        })
    }

    /// Starts tracking a designated path. Only valid before any message.
    pub fn with_truth(mut self) -> Self {
        assert_eq!(self.consumed, 0, "truth tracking must start at the beginning");
        self.truth = Some((Vec::new(), 0.0));
        self
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Log weight of the designated path (`-inf` when not tracked).
    pub fn ln_truth(&self) -> f64 {
        self.truth.as_ref().map_or(f64::NEG_INFINITY, |t| t.1)
    }

    /// Log mass of every other path.
    pub fn ln_other(&self) -> f64 {
        if self.consumed == 0 && self.truth.is_none() {
            return 0.0;
        }
        self.paths.iter().map(|p| p.1).collect::<LogSum>().value()
    }

    /// Log probability of the consumed prefix under this context.
    pub fn ln_total(&self) -> f64 {
        log_add(self.ln_truth(), self.ln_other())
    }

    /// Paths with their full intention histories (enumeration only).
    pub fn paths(&self) -> impl Iterator<Item = (&[Step], f64)> {
        self.truth
            .iter()
            .map(|(h, w)| (h.as_slice(), *w))
            .chain(self.paths.iter().map(|(h, w)| (h.as_slice(), *w)))
    }

    pub fn extended(&self, msg: MessageId) -> Self {
        let mut next = self.clone();
        next.push(msg, None);
        next
    }

    /// Consumes one message. `truth_next` names the designated path's
    /// intention for this message; mass leaving the designated path is
    /// moved to the ordinary paths.
    pub fn push(&mut self, msg: MessageId, truth_next: Option<IntentionId>) {
        let spec = self.spec;
        let c = self.context;
        let n_t = spec.n_intentions();
        let emit: Vec<f64> = (0..n_t).map(|t| ln(spec.emission[t][msg.0])).collect();

        let mut merged: Vec<LogSum> = if self.merge { vec![LogSum::new(); n_t] } else { Vec::new() };
        let mut fresh: Vec<(Vec<Step>, f64)> = Vec::new();
        let mut add = |hist: &[Step], t: usize, w: f64, merged: &mut Vec<LogSum>| {
            if self.merge {
                merged[t].add(w);
            } else {
                let mut h = Vec::with_capacity(hist.len() + 1);
                h.extend_from_slice(hist);
                h.push((IntentionId(t), msg));
                fresh.push((h, w));
            }
        };

        // `None` row: first message, drawn from the initial distribution.
        let successors = |hist: &[Step]| -> Option<Vec<f64>> {
            if hist.is_empty() {
                return Some(spec.init_intention[c.0].iter().map(|&p| ln(p)).collect());
            }
            let (last, _) = *hist.last().expect("non-empty");
            if spec.is_end(last) {
                return None;
            }
            spec.transition_row(c, hist).map(|row| row.iter().map(|&p| ln(p)).collect())
        };

        let first = self.consumed == 0;
        let starts: Vec<(Vec<Step>, f64)> = if first && self.truth.is_none() {
            vec![(Vec::new(), 0.0)]
        } else {
            std::mem::take(&mut self.paths)
        };
        for (hist, w) in &starts {
            if *w == f64::NEG_INFINITY {
                continue;
            }
            if let Some(row) = successors(hist) {
                for t in 0..n_t {
                    let nw = w + row[t] + emit[t];
                    if nw > f64::NEG_INFINITY {
                        add(hist, t, nw, &mut merged);
                    }
                }
            }
        }

        if let Some((hist, w)) = self.truth.take() {
            let target = truth_next.expect("designated path needs its next intention");
            let mut new_w = f64::NEG_INFINITY;
            if w > f64::NEG_INFINITY {
                if let Some(row) = successors(&hist) {
                    for t in 0..n_t {
                        let nw = w + row[t] + emit[t];
                        if t == target.0 {
                            new_w = nw;
                        } else if nw > f64::NEG_INFINITY {
                            add(&hist, t, nw, &mut merged);
                        }
                    }
                }
            }
            let mut h = hist;
            h.push((target, msg));
            self.truth = Some((h, new_w));
        }

        self.paths = if self.merge {
            merged
                .into_iter()
                .enumerate()
                .filter_map(|(t, acc)| {
                    let w = acc.value();
                    (w > f64::NEG_INFINITY).then(|| (vec![(IntentionId(t), msg)], w))
                })
                .collect()
        } else {
            fresh
        };
        self.consumed += 1;
    }

    pub fn push_all(&mut self, msgs: &[MessageId]) {
        for &m in msgs {
            self.push(m, None);
        }
    }
}

/// Prefix log probability under `c` with an explicit method.
pub fn ln_prefix_prob_with(spec: &ModelSpec, msgs: &[MessageId], c: ContextId, method: Method) -> Result<f64> {
    let mut f = Frontier::new(spec, c, method)?;
    f.push_all(msgs);
    Ok(f.ln_total())
}

/// `q(messages | c)` by the forward recursion; MARKOV kernels only.
pub fn prefix_prob_forward(spec: &ModelSpec, msgs: &[MessageId], c: ContextId) -> Result<f64> {
    ln_prefix_prob_with(spec, msgs, c, Method::Forward).map(f64::exp)
}

/// `q(messages | c)` by enumerating every latent path.
pub fn prefix_prob_enumerate(spec: &ModelSpec, msgs: &[MessageId], c: ContextId) -> f64 {
    ln_prefix_prob_with(spec, msgs, c, Method::Enumerate)
        .expect("enumeration applies to every kernel")
        .exp()
}

pub fn ln_prefix_prob_given_context(spec: &ModelSpec, msgs: &[MessageId], c: ContextId) -> f64 {
    ln_prefix_prob_with(spec, msgs, c, Method::for_spec(spec)).expect("method matches kernel")
}

/// `q(messages | c)`: probability that a document generated under `c` begins
/// with `messages`.
pub fn prefix_prob_given_context(spec: &ModelSpec, msgs: &[MessageId], c: ContextId) -> f64 {
    ln_prefix_prob_given_context(spec, msgs, c).exp()
}

/// Log mass of the designated latent path and of all other paths, under a
/// single context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentSplit {
    pub ln_truth: f64,
    pub ln_other: f64,
}

pub fn latent_split(spec: &ModelSpec, msgs: &[MessageId], c: ContextId, truth: &[IntentionId]) -> LatentSplit {
    assert_eq!(msgs.len(), truth.len(), "one intention per message");
    let mut f = Frontier::new(spec, c, Method::for_spec(spec))
        .expect("method matches kernel")
        .with_truth();
    for (&m, &t) in msgs.iter().zip(truth) {
        f.push(m, Some(t));
    }
    LatentSplit {
        ln_truth: f.ln_truth(),
        ln_other: f.ln_other(),
    }
}

pub fn ln_joint_prob(spec: &ModelSpec, chain: &LabeledChain) -> f64 {
    if chain.messages.len() != chain.intentions.len() {
        return f64::NEG_INFINITY;
    }
    let c = chain.context;
    let mut total = ln(spec.prior(c));
    let mut history: Vec<Step> = Vec::with_capacity(chain.len());
    for (i, (&t, &m)) in chain.intentions.iter().zip(&chain.messages).enumerate() {
        let step = if i == 0 {
            spec.init_prob(c, t)
        } else {
            let (last, _) = history[i - 1];
            if spec.is_end(last) {
                0.0
            } else {
                spec.transition_prob(c, &history, t)
            }
        };
        total += ln(step) + ln(spec.emission_prob(t, m));
        history.push((t, m));
    }
    total
}

/// `q(c)·q(θ₀|c)·q(x₀|θ₀)·∏ q(θᵢ|history, c)·q(xᵢ|θᵢ)`.
pub fn joint_prob(spec: &ModelSpec, chain: &LabeledChain) -> f64 {
    ln_joint_prob(spec, chain).exp()
}

pub fn ln_marginal_prob(spec: &ModelSpec, msgs: &[MessageId]) -> f64 {
    spec.context_ids()
        .map(|c| ln(spec.prior(c)) + ln_prefix_prob_given_context(spec, msgs, c))
        .collect::<LogSum>()
        .value()
}

/// `Σ_c q(c)·q(messages | c)`: the marginal the idealized model matches.
pub fn marginal_prob(spec: &ModelSpec, msgs: &[MessageId]) -> f64 {
    ln_marginal_prob(spec, msgs).exp()
}

/// Per-context log likelihoods of a prompt's parts, shared by the
/// conditional and bound computations.
#[derive(Debug, Clone)]
pub struct ContextLikelihoods {
    pub ln_prior: Vec<f64>,
    /// `Σ_k ln q(Z_k | c)` per context.
    pub ln_examples: Vec<f64>,
    /// `ln q(Z_k | c)` indexed `[k][c]`.
    pub ln_each_example: Vec<Vec<f64>>,
}

impl ContextLikelihoods {
    pub fn new(spec: &ModelSpec, examples: &[Vec<MessageId>]) -> Self {
        let ln_each_example: Vec<Vec<f64>> = examples
            .iter()
            .map(|z| spec.context_ids().map(|c| ln_prefix_prob_given_context(spec, z, c)).collect())
            .collect();
        let ln_examples = (0..spec.n_contexts())
            .map(|c| ln_each_example.iter().map(|row| row[c]).sum())
            .collect();
        ContextLikelihoods {
            ln_prior: spec.context_ids().map(|c| ln(spec.prior(c))).collect(),
            ln_examples,
            ln_each_example,
        }
    }

    /// `ln Σ_c q(c)·∏_k q(Z_k|c)·exp(ln_trailing[c])`.
    pub fn ln_mixture(&self, ln_trailing: &[f64]) -> f64 {
        self.ln_prior
            .iter()
            .zip(&self.ln_examples)
            .zip(ln_trailing)
            .map(|((p, z), t)| p + z + t)
            .collect::<LogSum>()
            .value()
    }
}

pub fn ln_prompt_marginal(spec: &ModelSpec, examples: &[Vec<MessageId>], trailing: &[MessageId]) -> f64 {
    let lik = ContextLikelihoods::new(spec, examples);
    let ln_trailing: Vec<f64> = spec
        .context_ids()
        .map(|c| ln_prefix_prob_given_context(spec, trailing, c))
        .collect();
    lik.ln_mixture(&ln_trailing)
}

/// `Σ_c q(c)·∏_k q(Z_k|c)·q(trailing|c)`. Reports underflow instead of
/// returning zero for a positive probability.
pub fn prompt_marginal(spec: &ModelSpec, examples: &[Vec<MessageId>], trailing: &[MessageId]) -> Result<f64> {
    checked_exp(ln_prompt_marginal(spec, examples, trailing))
}

fn concat(a: &[MessageId], b: &[MessageId]) -> Vec<MessageId> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// The idealized model's likelihood of `tail` given the input and examples:
/// a ratio of two prompt marginals.
pub fn p_llm_conditional(
    spec: &ModelSpec,
    tail: &[MessageId],
    input: &[MessageId],
    examples: &[Vec<MessageId>],
) -> Result<f64> {
    let lik = ContextLikelihoods::new(spec, examples);
    let per_context = |msgs: &[MessageId]| -> Vec<f64> {
        spec.context_ids().map(|c| ln_prefix_prob_given_context(spec, msgs, c)).collect()
    };
    let ln_den = lik.ln_mixture(&per_context(input));
    if ln_den == f64::NEG_INFINITY {
        return Err(CotError::ConditioningOnNullEvent {
            what: "input and examples have zero marginal probability".into(),
        });
    }
    let ln_num = lik.ln_mixture(&per_context(&concat(input, tail)));
    Ok((ln_num - ln_den).exp())
}

/// `q(tail | input, c*)`.
pub fn q_true_conditional(spec: &ModelSpec, tail: &[MessageId], input: &[MessageId], c: ContextId) -> Result<f64> {
    let ln_den = ln_prefix_prob_given_context(spec, input, c);
    if ln_den == f64::NEG_INFINITY {
        return Err(CotError::ConditioningOnNullEvent {
            what: format!("input has zero probability under context `{}`", spec.contexts[c.0]),
        });
    }
    let ln_num = ln_prefix_prob_given_context(spec, &concat(input, tail), c);
    Ok((ln_num - ln_den).exp())
}

/// Exact joint posterior over `(context, intention sequence)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    /// Entries with positive probability, ordered lexicographically.
    pub entries: BTreeMap<(ContextId, Vec<IntentionId>), f64>,
    pub evidence: f64,
}

impl PosteriorResult {
    pub fn probability(&self, c: ContextId, intentions: &[IntentionId]) -> f64 {
        self.entries.get(&(c, intentions.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

pub fn posterior_latents(spec: &ModelSpec, msgs: &[MessageId]) -> Result<PosteriorResult> {
    let mut joints = Vec::new();
    for c in spec.context_ids() {
        let lp = ln(spec.prior(c));
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let mut f = Frontier::new(spec, c, Method::Enumerate)?;
        f.push_all(msgs);
        if msgs.is_empty() {
            joints.push(((c, Vec::new()), lp));
        }
        for (hist, w) in f.paths() {
            joints.push(((c, hist.iter().map(|s| s.0).collect()), lp + w));
        }
    }
    let ln_evidence = joints.iter().map(|j| j.1).collect::<LogSum>().value();
    if ln_evidence == f64::NEG_INFINITY {
        return Err(CotError::ConditioningOnNullEvent {
            what: "messages have zero marginal probability".into(),
        });
    }
    let entries = joints
        .into_iter()
        .map(|(key, w)| (key, (w - ln_evidence).exp()))
        .collect();
    Ok(PosteriorResult {
        entries,
        evidence: ln_evidence.exp(),
    })
}

/// All message sequences of length `1..=max_len` in which the stop symbol
/// only appears last, in lexicographic order of symbol indices.
pub fn enumerate_tails(spec: &ModelSpec, max_len: usize) -> Vec<Vec<MessageId>> {
    fn walk(spec: &ModelSpec, max_len: usize, cur: &mut Vec<MessageId>, out: &mut Vec<Vec<MessageId>>) {
        for m in spec.message_ids() {
            cur.push(m);
            out.push(cur.clone());
            if !spec.is_stop(m) && cur.len() < max_len {
                walk(spec, max_len, cur, out);
            }
            cur.pop();
        }
    }
    let mut out = Vec::new();
    walk(spec, max_len, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{make_fixture, Fixture};

    fn msgs(spec: &ModelSpec, names: &[&str]) -> Vec<MessageId> {
        spec.parse_messages(names).unwrap()
    }

    #[test]
    fn empty_prefix_has_probability_one() {
        let spec = make_fixture(Fixture::TinyB);
        assert_eq!(prefix_prob_given_context(&spec, &[], ContextId(0)), 1.0);
        assert_eq!(prefix_prob_enumerate(&spec, &[], ContextId(1)), 1.0);
    }

    #[test]
    fn forward_rejects_full_kernels() {
        use crate::fixtures::{generate_random_model, GeneratorParams};
        use crate::model::KernelFamily;
        let spec = generate_random_model(&GeneratorParams::new((2, 3, 4), 0.5, KernelFamily::Full, 1)).unwrap();
        assert_eq!(prefix_prob_forward(&spec, &[MessageId(0)], ContextId(0)), Err(CotError::NotMarkov));
    }

    #[test]
    fn stop_symbol_mid_sequence_has_zero_probability() {
        let spec = make_fixture(Fixture::TinyB);
        let x = msgs(&spec, &["a", "<END>", "a"]);
        assert_eq!(marginal_prob(&spec, &x), 0.0);
        assert_eq!(prefix_prob_enumerate(&spec, &x, ContextId(0)), 0.0);
        let y = msgs(&spec, &["a", "<END>", "<END>"]);
        assert_eq!(marginal_prob(&spec, &y), 0.0);
    }

    #[test]
    fn latent_split_partitions_the_prefix_mass() {
        let spec = make_fixture(Fixture::TinyB);
        let x = msgs(&spec, &["a", "b", "<END>"]);
        let truth = [IntentionId(0), IntentionId(0), IntentionId(2)];
        let split = latent_split(&spec, &x, ContextId(0), &truth);
        let total = ln_prefix_prob_given_context(&spec, &x, ContextId(0));
        assert!((log_add(split.ln_truth, split.ln_other) - total).abs() < 1e-14);
        // Under c0 only t0 is reachable, so the truth path carries all the mass.
        assert_eq!(split.ln_other, f64::NEG_INFINITY);
    }

    #[test]
    fn tails_count_and_order() {
        let spec = make_fixture(Fixture::TinyA);
        assert_eq!(enumerate_tails(&spec, 1).len(), 3);
        let two = enumerate_tails(&spec, 2);
        assert_eq!(two.len(), 9);
        assert_eq!(&two[..3], &[vec![MessageId(0)], vec![MessageId(0), MessageId(0)], vec![MessageId(0), MessageId(1)]]);
        assert_eq!(enumerate_tails(&spec, 1), vec![vec![MessageId(0)], vec![MessageId(1)], vec![MessageId(2)]]);
        assert!(two.iter().all(|t| t[..t.len() - 1].iter().all(|&m| !spec.is_stop(m))));
    }

    #[test]
    fn null_events_are_errors() {
        let spec = make_fixture(Fixture::TinyA);
        let b = msgs(&spec, &["b"]);
        let a = msgs(&spec, &["a"]);
        assert!(matches!(
            q_true_conditional(&spec, &a, &b, ContextId(0)),
            Err(CotError::ConditioningOnNullEvent { .. })
        ));
        let bad = msgs(&spec, &["a", "b"]);
        assert!(matches!(posterior_latents(&spec, &bad), Err(CotError::ConditioningOnNullEvent { .. })));
        let z = vec![msgs(&spec, &["a", "<END>"])];
        assert!(matches!(
            p_llm_conditional(&spec, &a, &b, &z),
            Err(CotError::ConditioningOnNullEvent { .. })
        ));
    }

    #[test]
    fn prompt_marginal_reports_underflow() {
        let spec = make_fixture(Fixture::TinyB);
        // 100 copies push both context terms below the smallest subnormal.
        let z = msgs(&spec, &["b", "b", "b", "b", "b", "b", "b", "b", "<END>"]);
        let examples = vec![z; 100];
        let a = msgs(&spec, &["a"]);
        let ln_v = ln_prompt_marginal(&spec, &examples, &a);
        assert!(ln_v.is_finite());
        assert!(matches!(prompt_marginal(&spec, &examples, &a), Err(CotError::Underflow { .. })));
        // Conditionals stay well defined in log space.
        let p = p_llm_conditional(&spec, &a, &a, &examples).unwrap();
        assert!((p - 0.5 * 0.2).abs() < 1e-12, "{p}");
    }
}
