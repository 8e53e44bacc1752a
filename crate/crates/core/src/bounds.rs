//! The gap between the idealized model's conditional and the true-context
//! conditional, its ambiguity bound, and the intermediate inequalities
//! behind it.

use rayon::prelude::*;

use crate::ambiguity::{chain_ambiguity_measure, input_ambiguity_measure, skewness, AmbiguityMeasure};
use crate::chain::{sample_chain_with, sample_context_with, sample_input_with, LabeledChain, PromptInstance};
use crate::error::{CotError, Result};
use crate::exact::{ContextLikelihoods, Frontier, Method};
use crate::model::{ContextId, MessageId, ModelSpec};
use crate::rng::substream;

pub const DEFAULT_TAIL_MAX_LEN: usize = 3;
pub const DEFAULT_RETRY_BUDGET: usize = 200;

/// `lhs <= rhs` up to accumulated rounding.
pub fn within_bound(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + 1e-9 * rhs.max(1.0)
}

/// `δ / (1 - δ)`.
pub fn rho(delta: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&delta) {
        return Err(CotError::DeltaOutOfRange(delta));
    }
    Ok(delta / (1.0 - delta))
}

/// Product of non-negative factors where any infinite factor makes the
/// result infinite, even alongside a zero.
fn bound_product(factors: impl IntoIterator<Item = f64>) -> f64 {
    let mut prod = 1.0;
    let mut infinite = false;
    for f in factors {
        if f.is_infinite() {
            infinite = true;
        } else {
            prod *= f;
        }
    }
    if infinite {
        f64::INFINITY
    } else {
        prod
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    /// The caller asserts a uniform context prior; checked.
    UniformAsserted,
    /// Any prior; the constant picks up the skewness factor.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremRhs {
    /// `η` in uniform mode, `η̂ = γᴺ·η` in general mode.
    pub eta: f64,
    pub rhs: f64,
    /// Some ambiguity equals one, so the bound is `+∞`.
    pub vacuous: bool,
}

/// Ambiguities and skewness of an instance.
#[derive(Debug, Clone, PartialEq)]
struct InstanceAmbiguity {
    input: AmbiguityMeasure,
    examples: Vec<AmbiguityMeasure>,
    gamma: f64,
}

impl InstanceAmbiguity {
    fn new(spec: &ModelSpec, instance: &PromptInstance) -> Result<Self> {
        Ok(InstanceAmbiguity {
            input: input_ambiguity_measure(spec, &instance.input)?,
            examples: instance
                .examples
                .iter()
                .map(|z| chain_ambiguity_measure(spec, z))
                .collect::<Result<_>>()?,
            gamma: skewness(spec, instance.true_context)?,
        })
    }

    fn gamma_pow_n(&self) -> f64 {
        self.gamma.powi(self.examples.len() as i32)
    }

    fn eta(&self) -> f64 {
        2.0 * self.input.odds
    }

    fn eta_hat(&self) -> f64 {
        bound_product([2.0, self.gamma_pow_n(), self.input.odds])
    }

    fn example_odds(&self) -> f64 {
        bound_product(self.examples.iter().map(|a| a.odds))
    }

    fn vacuous(&self) -> bool {
        self.input.odds.is_infinite() || self.examples.iter().any(|a| a.odds.is_infinite())
    }
}

/// Right-hand side of the gap bound: `η·∏ₖ εₖ/(1-εₖ)` with `η = 2·ε₀/(1-ε₀)`.
pub fn theorem_rhs(spec: &ModelSpec, instance: &PromptInstance, mode: PriorMode) -> Result<TheoremRhs> {
    if mode == PriorMode::UniformAsserted && !spec.is_uniform_prior() {
        return Err(CotError::PriorNotUniform);
    }
    let amb = InstanceAmbiguity::new(spec, instance)?;
    let eta = match mode {
        PriorMode::UniformAsserted => amb.eta(),
        PriorMode::General => amb.eta_hat(),
    };
    Ok(TheoremRhs {
        eta,
        rhs: bound_product([eta, amb.example_odds()]),
        vacuous: amb.vacuous(),
    })
}

/// Exact proof intermediates for one tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofQuantities {
    /// `Σ_{c≠c*} q(x₀⧺tail, Z, c) / q(x₀, Z, c*)`.
    pub a: f64,
    /// `Σ_{c≠c*} q(x₀, Z, c) / q(x₀, Z, c*)`.
    pub b: f64,
    /// `Σ_{c≠c*} q(x₀, c) / q(x₀, c*)`.
    pub a1: f64,
    /// `Σ_{c≠c*} q(Z_k, c) / q(Z_k, c*)` per example.
    pub a2: Vec<f64>,
}

/// Per-context log likelihoods shared by every tail of one instance.
struct InstanceLikelihoods {
    lik: ContextLikelihoods,
    ln_input: Vec<f64>,
    truth: usize,
}

impl InstanceLikelihoods {
    fn new(spec: &ModelSpec, instance: &PromptInstance) -> Result<Self> {
        let lik = ContextLikelihoods::new(spec, &instance.example_messages());
        let ln_input: Vec<f64> = spec
            .context_ids()
            .map(|c| {
                let mut f = Frontier::new(spec, c, Method::for_spec(spec)).expect("method matches kernel");
                f.push_all(&instance.input.messages);
                f.ln_total()
            })
            .collect();
        let truth = instance.true_context.0;
        let me = InstanceLikelihoods { lik, ln_input, truth };
        if me.ln_denominator() == f64::NEG_INFINITY {
            return Err(CotError::ConditioningOnNullEvent {
                what: format!(
                    "input and examples have zero probability under the true context `{}`",
                    spec.contexts[truth]
                ),
            });
        }
        Ok(me)
    }

    /// `ln q(x₀, Z, c*)`.
    fn ln_denominator(&self) -> f64 {
        self.lik.ln_prior[self.truth] + self.ln_input[self.truth] + self.lik.ln_examples[self.truth]
    }

    /// `Σ_{c≠c*} exp(ln_prior + per_context − ln_reference)`.
    fn others(&self, per_context: impl Fn(usize) -> f64, ln_reference: f64) -> f64 {
        (0..self.lik.ln_prior.len())
            .filter(|&c| c != self.truth)
            .map(|c| (self.lik.ln_prior[c] + per_context(c) - ln_reference).exp())
            .sum()
    }

    fn b(&self) -> f64 {
        self.others(|c| self.ln_input[c] + self.lik.ln_examples[c], self.ln_denominator())
    }

    fn a(&self, ln_full: &[f64]) -> f64 {
        self.others(|c| ln_full[c] + self.lik.ln_examples[c], self.ln_denominator())
    }

    fn a1(&self) -> f64 {
        let t = self.truth;
        self.others(|c| self.ln_input[c], self.lik.ln_prior[t] + self.ln_input[t])
    }

    fn a2(&self) -> Vec<f64> {
        let t = self.truth;
        self.lik
            .ln_each_example
            .iter()
            .map(|row| self.others(|c| row[c], self.lik.ln_prior[t] + row[t]))
            .collect()
    }

    /// Idealized-model conditional of the tail.
    fn p_llm(&self, ln_full: &[f64]) -> f64 {
        let ln_num = self.lik.ln_mixture(ln_full);
        let ln_den = self.lik.ln_mixture(&self.ln_input);
        (ln_num - ln_den).exp()
    }

    fn q_true(&self, ln_full: &[f64]) -> f64 {
        (ln_full[self.truth] - self.ln_input[self.truth]).exp()
    }
}

/// Log likelihood of `input ⧺ tail` under each context, for every tail of
/// length `1..=max_len`, in the order of [`crate::exact::enumerate_tails`].
fn tail_likelihoods(spec: &ModelSpec, input: &[MessageId], max_len: usize) -> Vec<(Vec<MessageId>, Vec<f64>)> {
    fn walk(
        spec: &ModelSpec,
        frontiers: &[Frontier<'_>],
        max_len: usize,
        cur: &mut Vec<MessageId>,
        out: &mut Vec<(Vec<MessageId>, Vec<f64>)>,
    ) {
        for m in spec.message_ids() {
            let next: Vec<Frontier<'_>> = frontiers.iter().map(|f| f.extended(m)).collect();
            cur.push(m);
            out.push((cur.clone(), next.iter().map(Frontier::ln_total).collect()));
            if !spec.is_stop(m) && cur.len() < max_len {
                walk(spec, &next, max_len, cur, out);
            }
            cur.pop();
        }
    }
    let roots: Vec<Frontier<'_>> = spec
        .context_ids()
        .map(|c| {
            let mut f = Frontier::new(spec, c, Method::for_spec(spec)).expect("method matches kernel");
            f.push_all(input);
            f
        })
        .collect();
    let mut out = Vec::new();
    walk(spec, &roots, max_len, &mut Vec::new(), &mut out);
    out
}

pub fn proof_quantities(spec: &ModelSpec, instance: &PromptInstance, tail: &[MessageId]) -> Result<ProofQuantities> {
    let inst = InstanceLikelihoods::new(spec, instance)?;
    let mut full = instance.input.messages.clone();
    full.extend_from_slice(tail);
    let ln_full: Vec<f64> = spec
        .context_ids()
        .map(|c| {
            let mut f = Frontier::new(spec, c, Method::for_spec(spec)).expect("method matches kernel");
            f.push_all(&full);
            f.ln_total()
        })
        .collect();
    Ok(ProofQuantities {
        a: inst.a(&ln_full),
        b: inst.b(),
        a1: inst.a1(),
        a2: inst.a2(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailCheck {
    pub tail: Vec<MessageId>,
    pub p_llm: f64,
    pub q_true: f64,
    pub gap: f64,
    pub a: f64,
    /// `|p_llm − (q_true + a)/(1 + b)|`.
    pub identity_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Holds {
    /// `None` unless the prior is uniform.
    pub theorem_uniform: Option<bool>,
    pub theorem_general: bool,
    pub a_bound: bool,
    pub b_bound: bool,
    pub a1_bound: bool,
    pub a2_bounds: Vec<bool>,
    pub identity: bool,
}

impl Holds {
    pub fn all(&self) -> bool {
        self.theorem_uniform.unwrap_or(true)
            && self.theorem_general
            && self.a_bound
            && self.b_bound
            && self.a1_bound
            && self.a2_bounds.iter().all(|&h| h)
            && self.identity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub true_context: ContextId,
    pub tails: Vec<TailCheck>,
    pub max_gap: f64,
    pub eps_input: f64,
    pub eps_examples: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub eta_hat: f64,
    pub rhs_uniform: f64,
    pub rhs_nonuniform: f64,
    pub vacuous: bool,
    pub rho: Option<f64>,
    pub b: f64,
    pub a1: f64,
    pub a2: Vec<f64>,
    /// `γᴺ·ε₀/(1-ε₀)·∏ₖ εₖ/(1-εₖ)`, bounding both `a` (every tail) and `b`.
    pub ab_bound: f64,
    /// `ε₀/(1-ε₀)`.
    pub a1_bound: f64,
    /// `εₖ/(1-εₖ)` per example.
    pub a2_bounds: Vec<f64>,
    pub holds: Holds,
}

impl BoundReport {
    pub fn max_a(&self) -> f64 {
        self.tails.iter().map(|t| t.a).fold(0.0, f64::max)
    }

    pub fn max_identity_error(&self) -> f64 {
        self.tails.iter().map(|t| t.identity_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub tail_max_len: usize,
    pub delta: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tail_max_len: DEFAULT_TAIL_MAX_LEN,
            delta: None,
        }
    }
}

/// Evaluates the gap on every tail up to `tail_max_len` and checks the
/// bound together with each intermediate inequality.
pub fn verify_instance(spec: &ModelSpec, instance: &PromptInstance, opts: VerifyOptions) -> Result<BoundReport> {
    let rho = opts.delta.map(rho).transpose()?;
    let inst = InstanceLikelihoods::new(spec, instance)?;
    let amb = InstanceAmbiguity::new(spec, instance)?;
    let b = inst.b();

    let tails: Vec<TailCheck> = tail_likelihoods(spec, &instance.input.messages, opts.tail_max_len)
        .into_iter()
        .map(|(tail, ln_full)| {
            let p_llm = inst.p_llm(&ln_full);
            let q_true = inst.q_true(&ln_full);
            let a = inst.a(&ln_full);
            TailCheck {
                tail,
                p_llm,
                q_true,
                gap: (p_llm - q_true).abs(),
                a,
                identity_error: (p_llm - (q_true + a) / (1.0 + b)).abs(),
            }
        })
        .collect();
    let max_gap = tails.iter().map(|t| t.gap).fold(0.0, f64::max);

    let example_odds = amb.example_odds();
    let eta = amb.eta();
    let eta_hat = amb.eta_hat();
    let rhs_uniform = bound_product([eta, example_odds]);
    let rhs_nonuniform = bound_product([eta_hat, example_odds]);
    let ab_bound = bound_product([amb.gamma_pow_n(), amb.input.odds, example_odds]);
    let a1 = inst.a1();
    let a2 = inst.a2();
    let a2_bounds: Vec<f64> = amb.examples.iter().map(|a| a.odds).collect();

    let holds = Holds {
        theorem_uniform: spec.is_uniform_prior().then(|| within_bound(max_gap, rhs_uniform)),
        theorem_general: within_bound(max_gap, rhs_nonuniform),
        a_bound: tails.iter().all(|t| within_bound(t.a, ab_bound)),
        b_bound: within_bound(b, ab_bound),
        a1_bound: within_bound(a1, amb.input.odds),
        a2_bounds: a2.iter().zip(&a2_bounds).map(|(&v, &bd)| within_bound(v, bd)).collect(),
        identity: tails.iter().all(|t| t.identity_error <= 1e-9),
    };

    Ok(BoundReport {
        n: instance.n(),
        true_context: instance.true_context,
        tails,
        max_gap,
        eps_input: amb.input.epsilon,
        eps_examples: amb.examples.iter().map(|a| a.epsilon).collect(),
        gamma: amb.gamma,
        eta,
        eta_hat,
        rhs_uniform,
        rhs_nonuniform,
        vacuous: amb.vacuous(),
        rho,
        b,
        a1,
        a2,
        ab_bound,
        a1_bound: amb.input.odds,
        a2_bounds,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub delta: f64,
    /// Draws allowed per example before giving up on `ε ≤ δ`.
    pub retry_budget: usize,
    pub tail_max_len: usize,
    /// Fixes the true context; drawn from the prior per seed when `None`.
    pub true_context: Option<ContextId>,
}

impl SweepConfig {
    pub fn new(n_values: Vec<usize>, seeds: Vec<u64>, delta: f64) -> Self {
        SweepConfig {
            n_values,
            seeds,
            delta,
            retry_budget: DEFAULT_RETRY_BUDGET,
            tail_max_len: DEFAULT_TAIL_MAX_LEN,
            true_context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub max_gap: f64,
    pub rhs_uniform: f64,
    pub rhs_nonuniform: f64,
    pub eta: f64,
    pub eta_hat: f64,
    /// `η̂·ρᴺ`.
    pub eta_rho_pow_n: f64,
    /// Every example met `ε ≤ δ` within the retry budget.
    pub condition1_satisfied: bool,
    /// Gap bound, intermediate inequalities and, when the examples met
    /// `ε ≤ δ`, the geometric rate.
    pub bound_holds: bool,
}

/// One sampled example together with whether it met `ε ≤ δ`.
struct Accepted {
    chain: LabeledChain,
    ok: bool,
}

/// Draws examples one at a time from substreams `(seed, 2 + attempt)`,
/// keeping the first chain with `ε ≤ δ`, or the least ambiguous one when the
/// budget runs out.
fn draw_examples(
    spec: &ModelSpec,
    context: ContextId,
    count: usize,
    seed: u64,
    delta: f64,
    budget: usize,
) -> Result<Vec<Accepted>> {
    let mut attempt = 2u64;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(f64, LabeledChain)> = None;
        let mut found = None;
        for _ in 0..budget.max(1) {
            let mut rng = substream(seed, attempt);
            attempt += 1;
            let Ok(chain) = sample_chain_with(spec, context, &mut rng) else {
                continue;
            };
            let eps = chain_ambiguity_measure(spec, &chain)?.epsilon;
            if eps <= delta {
                found = Some(chain);
                break;
            }
            if best.as_ref().is_none_or(|(e, _)| eps < *e) {
                best = Some((eps, chain));
            }
        }
        out.push(match (found, best) {
            (Some(chain), _) => Accepted { chain, ok: true },
            (None, Some((_, chain))) => Accepted { chain, ok: false },
            (None, None) => return Err(CotError::Truncation { max_len: spec.max_len }),
        });
    }
    Ok(out)
}

fn sweep_seed(spec: &ModelSpec, cfg: &SweepConfig, seed: u64) -> Result<Vec<SweepRow>> {
    let rho = rho(cfg.delta)?;
    let context = cfg
        .true_context
        .unwrap_or_else(|| sample_context_with(spec, &mut substream(seed, 0)));
    let input = sample_input_with(spec, context, &mut substream(seed, 1));
    let max_n = cfg.n_values.iter().copied().max().unwrap_or(0);
    let examples = draw_examples(spec, context, max_n, seed, cfg.delta, cfg.retry_budget)?;
    cfg.n_values
        .iter()
        .map(|&n| {
            let instance = PromptInstance {
                examples: examples[..n].iter().map(|a| a.chain.clone()).collect(),
                input: input.clone(),
                true_context: context,
            };
            let report = verify_instance(
                spec,
                &instance,
                VerifyOptions {
                    tail_max_len: cfg.tail_max_len,
                    delta: Some(cfg.delta),
                },
            )?;
            let condition1_satisfied = examples[..n].iter().all(|a| a.ok);
            let eta_rho_pow_n = bound_product([report.eta_hat, rho.powi(n as i32)]);
            let rate_holds = !condition1_satisfied || within_bound(report.max_gap, eta_rho_pow_n);
            Ok(SweepRow {
                n,
                seed,
                max_gap: report.max_gap,
                rhs_uniform: report.rhs_uniform,
                rhs_nonuniform: report.rhs_nonuniform,
                eta: report.eta,
                eta_hat: report.eta_hat,
                eta_rho_pow_n,
                condition1_satisfied,
                bound_holds: report.holds.all() && rate_holds,
            })
        })
        .collect()
}

/// For each seed: one true context, one input and a growing list of
/// examples filtered to `ε ≤ δ`; row `N` uses the first `N` examples. Rows
/// are ordered by `(N, seed)`.
pub fn geometric_sweep(spec: &ModelSpec, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    rho(cfg.delta)?;
    let per_seed: Vec<Vec<SweepRow>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| sweep_seed(spec, cfg, seed))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_seed.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.n, cfg.seeds.iter().position(|&s| s == r.seed)));
    Ok(rows)
}
