//! Sequential importance sampling for prefix probabilities.
//!
//! Intentions are proposed from the model's own kernel along the fixed
//! observed messages, so each sample's weight is the product of emission
//! probabilities. A stop symbol contributes the probability of moving to
//! END, the only intention that emits it.

use rayon::prelude::*;

use crate::chain::draw;
use crate::model::{ContextId, IntentionId, MessageId, ModelSpec, Step};
use crate::rng::{derive_seed, substream, LabRng};

const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub ess: f64,
}

/// Running mean and variance (Welford), mergeable across batches.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, w: f64) {
        self.n += 1;
        let delta = w - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (w - self.mean);
        self.sum += w;
        self.sum_sq += w * w;
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    fn estimate(&self) -> McEstimate {
        let stderr = if self.n > 1 {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        let ess = if self.sum_sq > 0.0 {
            (self.sum * self.sum / self.sum_sq).min(self.n as f64)
        } else {
            0.0
        };
        McEstimate {
            value: self.mean.max(0.0),
            stderr,
            n_samples: self.n,
            ess,
        }
    }
}

fn sample_weight(spec: &ModelSpec, msgs: &[MessageId], c: ContextId, rng: &mut LabRng) -> f64 {
    let end = spec.end_intention;
    let mut history: Vec<Step> = Vec::with_capacity(msgs.len());
    let mut weight = 1.0;
    for &x in msgs {
        let row = if history.is_empty() {
            &spec.init_intention[c.0]
        } else {
            let (last, _) = *history.last().expect("non-empty");
            if spec.is_end(last) {
                return 0.0;
            }
            match spec.transition_row(c, &history) {
                Some(row) => row,
                None => return 0.0,
            }
        };
        let theta = if spec.is_stop(x) {
            weight *= row[end.0] * spec.emission_prob(end, x);
            end
        } else {
            let t = IntentionId(draw(row, rng));
            weight *= spec.emission_prob(t, x);
            t
        };
        if weight == 0.0 {
            return 0.0;
        }
        history.push((theta, x));
    }
    weight
}

/// Estimates `q(messages | c)`. Batches run in parallel on substreams
/// `(seed, batch)` and are merged in batch order.
pub fn mc_prefix_prob(spec: &ModelSpec, msgs: &[MessageId], c: ContextId, n_samples: usize, seed: u64) -> McEstimate {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let n_batches = n_samples.div_ceil(BATCH);
    let batches: Vec<Moments> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b as u64);
            let count = BATCH.min(n_samples - b * BATCH);
            let mut m = Moments::default();
            for _ in 0..count {
                m.push(sample_weight(spec, msgs, c, &mut rng));
            }
            m
        })
        .collect();
    batches
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .estimate()
}

/// Estimates `Σ_c q(c)·q(messages | c)` with `n_samples` draws per context.
pub fn mc_marginal(spec: &ModelSpec, msgs: &[MessageId], n_samples: usize, seed: u64) -> McEstimate {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut total = 0;
    let mut ess = 0.0;
    for c in spec.context_ids() {
        let q = spec.prior(c);
        if q == 0.0 {
            continue;
        }
        let est = mc_prefix_prob(spec, msgs, c, n_samples, derive_seed(seed, c.0 as u64));
        value += q * est.value;
        var += q * q * est.stderr * est.stderr;
        total += est.n_samples;
        ess += est.ess;
    }
    McEstimate {
        value,
        stderr: var.sqrt(),
        n_samples: total,
        ess,
    }
}
