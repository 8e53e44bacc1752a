//! One function per subcommand. Each returns the rendered output and the
//! number of failed inequality checks.

use anyhow::Context;
use cotlab_core::ambiguity::{ambiguity_profile, chain_ambiguity, input_ambiguity, length_threshold, Threshold};
use cotlab_core::bounds::{geometric_sweep, verify_instance, SweepConfig, SweepRow, VerifyOptions};
use cotlab_core::chain::{sample_chain_until, sample_context_with, sample_prompt_instance, sample_prompt_instance_in_context};
use cotlab_core::exact::marginal_prob;
use cotlab_core::mc::mc_marginal;
use cotlab_core::model::{ContextId, ModelSpec};
use cotlab_core::rng::{derive_seed, substream};
use cotlab_core::{ChainRecord, CotError, LabeledChain, PromptInstance};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, Resolved};
use crate::csv::{Cell, Table};
use crate::svg::{self, Series};

pub struct Output {
    pub text: String,
    pub svg: Option<String>,
    pub rows: usize,
    pub violations: usize,
}

pub fn run(cfg: &Resolved) -> anyhow::Result<Output> {
    match cfg.mode {
        Mode::GenModel => Ok(Output {
            text: cfg.model.spec.to_json() + "\n",
            svg: None,
            rows: 1,
            violations: 0,
        }),
        Mode::Sample => sample(cfg),
        Mode::Ambiguity => ambiguity(cfg),
        Mode::Verify => verify(cfg),
        Mode::SweepN => sweep(cfg),
        Mode::LemmaThreshold => lemma(cfg),
        Mode::McCheck => mc_check(cfg),
    }
}

fn context_for(spec: &ModelSpec, fixed: Option<ContextId>, seed: u64) -> ContextId {
    fixed.unwrap_or_else(|| sample_context_with(spec, &mut substream(seed, 0)))
}

fn joined(names: Vec<&str>) -> String {
    names.join(" ")
}

/// A complete chain for `seed`, skipping truncated draws.
fn chain_for(cfg: &Resolved, seed: u64, min_len: usize) -> Option<LabeledChain> {
    let spec = &cfg.model.spec;
    let c = context_for(spec, cfg.context, seed);
    sample_chain_until(spec, c, derive_seed(seed, 1), cfg.retry_budget, |z| z.len() >= min_len)
}

fn no_chain(seed: u64, budget: usize) -> anyhow::Error {
    anyhow::anyhow!("seed {seed}: no complete chain within `retry_budget` = {budget} draws")
}

/// An instance for `(n, seed)`; truncated draws move on to derived seeds.
pub fn instance_for(cfg: &Resolved, n: usize, seed: u64) -> anyhow::Result<PromptInstance> {
    let spec = &cfg.model.spec;
    for attempt in 0..cfg.retry_budget as u64 {
        let s = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
        let drawn = match cfg.context {
            Some(c) => sample_prompt_instance_in_context(spec, c, n, s),
            None => sample_prompt_instance(spec, n, s),
        };
        match drawn {
            Ok(inst) => return Ok(inst),
            Err(CotError::Truncation { .. }) => continue,
            Err(e) => return Err(e).with_context(|| format!("sampling instance N={n}, seed {seed}")),
        }
    }
    Err(anyhow::anyhow!(
        "N={n}, seed {seed}: every draw was truncated within `retry_budget` = {}",
        cfg.retry_budget
    ))
}

#[derive(Serialize)]
struct SampleLine {
    seed: u64,
    #[serde(flatten)]
    chain: ChainRecord,
}

fn sample(cfg: &Resolved) -> anyhow::Result<Output> {
    let spec = &cfg.model.spec;
    let mut text = String::new();
    for &seed in &cfg.seeds {
        let chain = chain_for(cfg, seed, 1).ok_or_else(|| no_chain(seed, cfg.retry_budget))?;
        let line = SampleLine {
            seed,
            chain: chain.to_record(spec),
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }
    Ok(Output {
        text,
        svg: None,
        rows: cfg.seeds.len(),
        violations: 0,
    })
}

fn ambiguity(cfg: &Resolved) -> anyhow::Result<Output> {
    let spec = &cfg.model.spec;
    let rows: Vec<Vec<Cell>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let z = chain_for(cfg, seed, 1).ok_or_else(|| no_chain(seed, cfg.retry_budget))?;
            let eps = chain_ambiguity(spec, &z)?;
            let eps_input = input_ambiguity(spec, &z.prefix(1))?;
            Ok(vec![
                seed.into(),
                spec.contexts[z.context.0].clone().into(),
                z.len().into(),
                joined(spec.message_names(&z.messages)).into(),
                joined(spec.intention_names(&z.intentions)).into(),
                eps.into(),
                eps_input.into(),
            ])
        })
        .collect::<anyhow::Result<_>>()?;
    let mut table = Table::new(vec![
        "seed",
        "context",
        "length",
        "messages",
        "intentions",
        "chain_ambiguity",
        "input_ambiguity",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output {
        rows: table.rows.len(),
        text: table.render(),
        svg: None,
        violations: 0,
    })
}

fn verify(cfg: &Resolved) -> anyhow::Result<Output> {
    let spec = &cfg.model.spec;
    let jobs: Vec<(usize, u64)> = cfg
        .n
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let opts = VerifyOptions {
        tail_max_len: cfg.tail_max_len,
        delta: cfg.delta,
    };
    let reports = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let inst = instance_for(cfg, n, seed)?;
            let rep = verify_instance(spec, &inst, opts).with_context(|| format!("verifying N={n}, seed {seed}"))?;
            Ok((n, seed, rep))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut table = Table::new(vec![
        "N",
        "seed",
        "context",
        "max_gap",
        "rhs_uniform",
        "rhs_nonuniform",
        "eta",
        "eta_hat",
        "gamma",
        "eps_input",
        "max_eps_example",
        "b",
        "a1",
        "max_a",
        "ab_bound",
        "max_identity_error",
        "vacuous",
        "theorem_holds",
        "all_checks_hold",
    ]);
    let mut violations = 0;
    for (n, seed, rep) in &reports {
        let all = rep.holds.all();
        violations += usize::from(!all);
        table.push(vec![
            (*n).into(),
            (*seed).into(),
            spec.contexts[rep.true_context.0].clone().into(),
            rep.max_gap.into(),
            rep.rhs_uniform.into(),
            rep.rhs_nonuniform.into(),
            rep.eta.into(),
            rep.eta_hat.into(),
            rep.gamma.into(),
            rep.eps_input.into(),
            rep.eps_examples.iter().copied().fold(0.0, f64::max).into(),
            rep.b.into(),
            rep.a1.into(),
            rep.max_a().into(),
            rep.ab_bound.into(),
            rep.max_identity_error().into(),
            rep.vacuous.into(),
            (rep.holds.theorem_general && rep.holds.theorem_uniform.unwrap_or(true)).into(),
            all.into(),
        ]);
    }

    let svg = cfg.svg.as_ref().map(|_| {
        let per_n = |pick: &dyn Fn(&cotlab_core::BoundReport) -> f64, worst: fn(f64, f64) -> f64, init: f64| {
            cfg.n
                .iter()
                .map(|&n| {
                    let v = reports.iter().filter(|r| r.0 == n).map(|r| pick(&r.2)).fold(init, worst);
                    (n as f64, v)
                })
                .collect::<Vec<_>>()
        };
        let series = vec![
            Series {
                label: "largest max_gap".into(),
                points: per_n(&|r| r.max_gap, f64::max, 0.0),
                dashed: false,
            },
            Series {
                label: "smallest bound".into(),
                points: per_n(&|r| r.rhs_nonuniform, f64::min, f64::INFINITY),
                dashed: true,
            },
        ];
        svg::render(&format!("gap vs N: {}", cfg.model.label), "N", "value", &series, cfg.log_y)
    });

    Ok(Output {
        rows: table.rows.len(),
        text: table.render(),
        svg,
        violations,
    })
}

pub const SWEEP_HEADER: [&str; 10] = [
    "N",
    "max_gap",
    "rhs_uniform",
    "eta_rho_pow_n",
    "condition1_satisfied",
    "seed",
    "rhs_nonuniform",
    "eta",
    "eta_hat",
    "bound_holds",
];

fn sweep_row(r: &SweepRow) -> Vec<Cell> {
    vec![
        r.n.into(),
        r.max_gap.into(),
        r.rhs_uniform.into(),
        r.eta_rho_pow_n.into(),
        r.condition1_satisfied.into(),
        r.seed.into(),
        r.rhs_nonuniform.into(),
        r.eta.into(),
        r.eta_hat.into(),
        r.bound_holds.into(),
    ]
}

fn sweep(cfg: &Resolved) -> anyhow::Result<Output> {
    let delta = cfg.delta.expect("checked by resolve");
    let sweep_cfg = SweepConfig {
        n_values: cfg.n.clone(),
        seeds: cfg.seeds.clone(),
        delta,
        retry_budget: cfg.retry_budget,
        tail_max_len: cfg.tail_max_len,
        true_context: cfg.context,
    };
    let rows = geometric_sweep(&cfg.model.spec, &sweep_cfg).context("running sweep")?;
    let mut table = Table::new(SWEEP_HEADER.to_vec());
    for r in &rows {
        table.push(sweep_row(r));
    }
    let violations = rows.iter().filter(|r| !r.bound_holds).count();
    let svg = cfg.svg.as_ref().map(|_| {
        let mut series = Vec::new();
        for &seed in &cfg.seeds {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.seed == seed).collect();
            series.push(Series {
                label: format!("max_gap, seed {seed}"),
                points: mine.iter().map(|r| (r.n as f64, r.max_gap)).collect(),
                dashed: false,
            });
            series.push(Series {
                label: format!("eta*rho^N, seed {seed}"),
                points: mine.iter().map(|r| (r.n as f64, r.eta_rho_pow_n)).collect(),
                dashed: true,
            });
        }
        svg::render(
            &format!("gap vs N, delta = {delta}: {}", cfg.model.label),
            "N",
            "value",
            &series,
            cfg.log_y,
        )
    });
    Ok(Output {
        rows: table.rows.len(),
        text: table.render(),
        svg,
        violations,
    })
}

fn lemma(cfg: &Resolved) -> anyhow::Result<Output> {
    let spec = &cfg.model.spec;
    let delta = cfg.delta.expect("checked by resolve");
    let rows: Vec<(Vec<Cell>, bool)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let Some(z) = chain_for(cfg, seed, cfg.min_len) else {
                let context = context_for(spec, cfg.context, seed);
                let row = vec![
                    seed.into(),
                    spec.contexts[context.0].clone().into(),
                    0usize.into(),
                    "NO_TRAJECTORY".into(),
                    true.into(),
                    "".into(),
                ];
                return Ok((row, true));
            };
            let profile = ambiguity_profile(spec, &z)?;
            let threshold = length_threshold(&profile, delta)?;
            let (m_star, suffix_ok) = match threshold {
                Threshold::Found(m) => (
                    m.to_string(),
                    profile
                        .lengths
                        .iter()
                        .zip(&profile.values)
                        .all(|(&l, &v)| l < m || v <= delta),
                ),
                Threshold::NotFoundWithinHorizon => ("NOT_FOUND".to_string(), true),
            };
            let values: Vec<String> = profile.values.iter().map(|&v| crate::csv::format_float(v)).collect();
            let row = vec![
                seed.into(),
                spec.contexts[z.context.0].clone().into(),
                z.len().into(),
                m_star.into(),
                suffix_ok.into(),
                values.join(";").into(),
            ];
            Ok((row, suffix_ok))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut table = Table::new(vec!["seed", "context", "length", "m_star", "suffix_ok", "profile"]);
    let mut violations = 0;
    for (row, ok) in rows {
        violations += usize::from(!ok);
        table.push(row);
    }
    Ok(Output {
        rows: table.rows.len(),
        text: table.render(),
        svg: None,
        violations,
    })
}

fn mc_check(cfg: &Resolved) -> anyhow::Result<Output> {
    let spec = &cfg.model.spec;
    let rows: Vec<Vec<Cell>> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let z = chain_for(cfg, seed, 1).ok_or_else(|| no_chain(seed, cfg.retry_budget))?;
            let exact = marginal_prob(spec, &z.messages);
            let est = mc_marginal(spec, &z.messages, cfg.samples, derive_seed(seed, 2));
            let within = (est.value - exact).abs() <= 4.0 * est.stderr;
            Ok(vec![
                seed.into(),
                joined(spec.message_names(&z.messages)).into(),
                exact.into(),
                est.value.into(),
                est.stderr.into(),
                est.ess.into(),
                est.n_samples.into(),
                within.into(),
            ])
        })
        .collect::<anyhow::Result<_>>()?;
    let mut table = Table::new(vec![
        "seed",
        "messages",
        "exact",
        "estimate",
        "stderr",
        "ess",
        "n_samples",
        "within_4_stderr",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Output {
        rows: table.rows.len(),
        text: table.render(),
        svg: None,
        violations: 0,
    })
}
