//! Brute-force reference implementation in linear space.
//!
//! Every quantity is a plain sum over all `(context, intention sequence)`
//! pairs of the factorized product, read straight off the model tables.
//! Nothing here shares code with the library's inference routines.

#![allow(dead_code)]

use cotlab_core::model::{ContextId, IntentionId, MessageId, ModelSpec, Step};

/// `∏ q(θᵢ | history, c)·q(xᵢ | θᵢ)`, without the context prior.
pub fn path_prob(spec: &ModelSpec, c: usize, thetas: &[usize], msgs: &[usize]) -> f64 {
    let end = spec.end_intention.0;
    let mut p = 1.0;
    let mut history: Vec<Step> = Vec::new();
    for i in 0..msgs.len() {
        let (t, x) = (thetas[i], msgs[i]);
        let step = if i == 0 {
            spec.init_intention[c][t]
        } else if thetas[i - 1] == end {
            0.0
        } else {
            spec.transitions
                .row(ContextId(c), &history)
                .map_or(0.0, |row| row[t])
        };
        p *= step * spec.emission[t][x];
        if p == 0.0 {
            return 0.0;
        }
        history.push((IntentionId(t), MessageId(x)));
    }
    p
}

/// Calls `f` with every intention sequence of length `n`.
pub fn for_each_sequence(n_symbols: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut cur = vec![0usize; n];
    loop {
        f(&cur);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < n_symbols {
                break;
            }
            cur[i] = 0;
        }
    }
}

pub fn ids(msgs: &[MessageId]) -> Vec<usize> {
    msgs.iter().map(|m| m.0).collect()
}

pub fn prefix(spec: &ModelSpec, msgs: &[MessageId], c: usize) -> f64 {
    let x = ids(msgs);
    let mut total = 0.0;
    for_each_sequence(spec.intentions.len(), x.len(), |ts| total += path_prob(spec, c, ts, &x));
    total
}

pub fn marginal(spec: &ModelSpec, msgs: &[MessageId]) -> f64 {
    (0..spec.contexts.len())
        .map(|c| spec.context_prior[c] * prefix(spec, msgs, c))
        .sum()
}

/// All latent explanations with positive joint probability.
pub fn joints(spec: &ModelSpec, msgs: &[MessageId]) -> Vec<((usize, Vec<usize>), f64)> {
    let x = ids(msgs);
    let mut out = Vec::new();
    for c in 0..spec.contexts.len() {
        for_each_sequence(spec.intentions.len(), x.len(), |ts| {
            let p = spec.context_prior[c] * path_prob(spec, c, ts, &x);
            if p > 0.0 {
                out.push(((c, ts.to_vec()), p));
            }
        });
    }
    out
}

pub fn posterior(spec: &ModelSpec, msgs: &[MessageId]) -> Vec<((usize, Vec<usize>), f64)> {
    let js = joints(spec, msgs);
    let evidence: f64 = js.iter().map(|j| j.1).sum();
    js.into_iter().map(|(k, p)| (k, p / evidence)).collect()
}

/// `1 − q(c*, θ* | messages)`.
pub fn ambiguity(spec: &ModelSpec, msgs: &[MessageId], c: usize, truth: &[IntentionId]) -> f64 {
    let t: Vec<usize> = truth.iter().map(|t| t.0).collect();
    let p = spec.context_prior[c] * path_prob(spec, c, &t, &ids(msgs));
    1.0 - p / marginal(spec, msgs)
}

pub fn concat(a: &[MessageId], b: &[MessageId]) -> Vec<MessageId> {
    a.iter().chain(b).copied().collect()
}

pub fn prompt_marginal(spec: &ModelSpec, examples: &[Vec<MessageId>], trailing: &[MessageId]) -> f64 {
    (0..spec.contexts.len())
        .map(|c| {
            let z: f64 = examples.iter().map(|e| prefix(spec, e, c)).product();
            spec.context_prior[c] * z * prefix(spec, trailing, c)
        })
        .sum()
}

pub fn p_llm(spec: &ModelSpec, tail: &[MessageId], input: &[MessageId], examples: &[Vec<MessageId>]) -> f64 {
    prompt_marginal(spec, examples, &concat(input, tail)) / prompt_marginal(spec, examples, input)
}

pub fn q_true(spec: &ModelSpec, tail: &[MessageId], input: &[MessageId], c: usize) -> f64 {
    prefix(spec, &concat(input, tail), c) / prefix(spec, input, c)
}

/// Every message sequence of length `1..=max_len` with the stop symbol only
/// at the end, in no particular order.
pub fn tails(spec: &ModelSpec, max_len: usize) -> Vec<Vec<MessageId>> {
    let stop = spec.stop_message.0;
    let mut out = Vec::new();
    for len in 1..=max_len {
        for_each_sequence(spec.messages.len(), len, |xs| {
            if xs[..len - 1].iter().all(|&x| x != stop) {
                out.push(xs.iter().map(|&x| MessageId(x)).collect());
            }
        });
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
