//! Canonical fixtures and the randomized model family.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};
use crate::model::{
    ContextId, IntentionId, KernelFamily, MessageId, ModelSpec, Step, TransitionKernel,
    DEFAULT_END_FLOOR,
};
use crate::rng::{substream, LabRng};

/// Horizon used by the hand-written fixtures.
pub const FIXTURE_MAX_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fixture {
    /// Two contexts with disjoint intentions and deterministic emissions.
    TinyA,
    /// TINY-A with 0.8/0.2 cross emissions.
    TinyB,
    /// TINY-B restricted to its first context.
    SingleC,
    /// TINY-B with prior (0.75, 0.25).
    Skewed,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::TinyA, Fixture::TinyB, Fixture::SingleC, Fixture::Skewed];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::TinyA => "TINY-A",
            Fixture::TinyB => "TINY-B",
            Fixture::SingleC => "SINGLE-C",
            Fixture::Skewed => "SKEWED",
        }
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = CotError;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CotError::UnknownFixture(s.to_string()))
    }
}

pub fn make_fixture_by_name(name: &str) -> Result<ModelSpec> {
    name.parse().map(make_fixture)
}

pub fn make_fixture(fixture: Fixture) -> ModelSpec {
    let (t0, t1, end) = (IntentionId(0), IntentionId(1), IntentionId(2));
    let (a, b) = (MessageId(0), MessageId(1));

    let emission = match fixture {
        Fixture::TinyA => vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        _ => vec![vec![0.8, 0.2, 0.0], vec![0.2, 0.8, 0.0], vec![0.0, 0.0, 1.0]],
    };
    let continue_c0 = vec![0.5, 0.0, 0.5];
    let continue_c1 = vec![0.0, 0.5, 0.5];
    let markov_table = |row: &Vec<f64>| -> HashMap<Step, Vec<f64>> {
        let mut table = HashMap::new();
        for t in [t0, t1] {
            for m in [a, b] {
                if emission[t.0][m.0] > 0.0 {
                    table.insert((t, m), row.clone());
                }
            }
        }
        table
    };

    let mut spec = ModelSpec {
        contexts: vec!["c0".into(), "c1".into()],
        intentions: vec!["t0".into(), "t1".into(), "END".into()],
        end_intention: end,
        messages: vec!["a".into(), "b".into(), "<END>".into()],
        stop_message: MessageId(2),
        context_prior: vec![0.5, 0.5],
        init_intention: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        transitions: TransitionKernel::Markov {
            rows: vec![markov_table(&continue_c0), markov_table(&continue_c1)],
        },
        emission,
        max_len: FIXTURE_MAX_LEN,
        end_floor: DEFAULT_END_FLOOR,
    };

    match fixture {
        Fixture::TinyA | Fixture::TinyB => {}
        Fixture::SingleC => {
            spec.contexts.truncate(1);
            spec.context_prior = vec![1.0];
            spec.init_intention.truncate(1);
            if let TransitionKernel::Markov { rows } = &mut spec.transitions {
                rows.truncate(1);
            }
        }
        Fixture::Skewed => spec.context_prior = vec![0.75, 0.25],
    }
    spec
}

/// Parameters of the randomized model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub n_contexts: usize,
    /// Includes END.
    pub n_intentions: usize,
    /// Includes the stop symbol.
    pub n_messages: usize,
    /// Emission mixing weight toward the uniform distribution over content
    /// messages; 0 gives disjoint supports.
    pub ambiguity: f64,
    pub family: KernelFamily,
    pub seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_end_floor")]
    pub end_floor: f64,
    #[serde(default = "default_true")]
    pub uniform_prior: bool,
    /// FULL kernels list explicit rows for histories up to this length.
    #[serde(default = "default_full_depth")]
    pub full_depth: usize,
}

fn default_max_len() -> usize {
    8
}
fn default_end_floor() -> f64 {
    DEFAULT_END_FLOOR
}
fn default_true() -> bool {
    true
}
fn default_full_depth() -> usize {
    2
}

impl GeneratorParams {
    pub fn new(sizes: (usize, usize, usize), ambiguity: f64, family: KernelFamily, seed: u64) -> Self {
        GeneratorParams {
            n_contexts: sizes.0,
            n_intentions: sizes.1,
            n_messages: sizes.2,
            ambiguity,
            family,
            seed,
            max_len: default_max_len(),
            end_floor: DEFAULT_END_FLOOR,
            uniform_prior: true,
            full_depth: default_full_depth(),
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(CotError::InfeasibleSizes(msg));
        if self.n_contexts < 1 {
            return bad("need at least one context".into());
        }
        if self.n_intentions < 2 {
            return bad("need at least two intentions (one content plus END)".into());
        }
        if self.n_messages < 2 {
            return bad("need at least two messages (one content plus stop)".into());
        }
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return bad(format!("ambiguity dial {} outside [0, 1]", self.ambiguity));
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if !(self.end_floor > 0.0 && self.end_floor < 1.0) {
            return bad(format!("end_floor {} outside (0, 1)", self.end_floor));
        }
        if self.ambiguity == 0.0 {
            let k = self.n_intentions - 1;
            if self.n_messages - 1 < k {
                return bad(format!(
                    "disjoint emissions need |M| >= |Θ| (got |M| = {}, |Θ| = {})",
                    self.n_messages, self.n_intentions
                ));
            }
            if self.n_contexts > k {
                return bad(format!(
                    "disjoint context supports need |C| <= |Θ| - 1 (got |C| = {}, |Θ| = {})",
                    self.n_contexts, self.n_intentions
                ));
            }
        }
        Ok(())
    }
}

/// Symmetric Dirichlet(1) draw restricted to `support`, zero elsewhere.
fn simplex_on(rng: &mut LabRng, len: usize, support: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; len];
    let mut total = 0.0;
    for &i in support {
        // Exp(1) via inversion; 1 - u lies in (0, 1].
        let e = -(1.0 - rng.random::<f64>()).ln();
        v[i] = e;
        total += e;
    }
    for &i in support {
        v[i] /= total;
    }
    v
}

fn floor_end(mut row: Vec<f64>, end: usize, floor: f64) -> Vec<f64> {
    if row[end] < floor {
        let scale = (1.0 - floor) / (1.0 - row[end]);
        for (i, x) in row.iter_mut().enumerate() {
            if i != end {
                *x *= scale;
            }
        }
        row[end] = floor;
    }
    row
}

/// Draws a random model. Emission rows are `(1 − α)·block + α·uniform` where
/// each content intention owns a disjoint block of content messages. At
/// `α = 0` contexts also get disjoint intention sets, so every chain has a
/// unique latent explanation.
pub fn generate_random_model(params: &GeneratorParams) -> Result<ModelSpec> {
    params.check()?;
    let n_c = params.n_contexts;
    let n_t = params.n_intentions;
    let n_m = params.n_messages;
    let k = n_t - 1;
    let content_msgs = n_m - 1;
    let end = IntentionId(k);
    let stop = MessageId(content_msgs);
    let alpha = params.ambiguity;

    let context_prior = if params.uniform_prior {
        vec![1.0 / n_c as f64; n_c]
    } else {
        let all: Vec<usize> = (0..n_c).collect();
        simplex_on(&mut substream(params.seed, 0), n_c, &all)
    };

    let mut rng = substream(params.seed, 1);
    let mut emission = Vec::with_capacity(n_t);
    for j in 0..k {
        let block: Vec<usize> = if content_msgs >= k {
            (0..content_msgs).filter(|x| x % k == j).collect()
        } else {
            vec![j % content_msgs]
        };
        let block_row = simplex_on(&mut rng, n_m, &block);
        let uniform = 1.0 / content_msgs as f64;
        let row: Vec<f64> = (0..n_m)
            .map(|x| {
                if x == stop.0 {
                    0.0
                } else {
                    (1.0 - alpha) * block_row[x] + alpha * uniform
                }
            })
            .collect();
        emission.push(row);
    }
    let mut end_row = vec![0.0; n_m];
    end_row[stop.0] = 1.0;
    emission.push(end_row);

    let supports: Vec<Vec<usize>> = (0..n_c)
        .map(|c| {
            if alpha == 0.0 {
                (0..k).filter(|j| j % n_c == c).collect()
            } else {
                (0..k).collect()
            }
        })
        .collect();

    let mut rng = substream(params.seed, 2);
    let init_intention: Vec<Vec<f64>> = supports
        .iter()
        .map(|s| simplex_on(&mut rng, n_t, s))
        .collect();

    let mut rng = substream(params.seed, 3);
    let mut transition_row = |c: usize| {
        let mut support = supports[c].clone();
        support.push(end.0);
        floor_end(simplex_on(&mut rng, n_t, &support), end.0, params.end_floor)
    };
    let emits = |t: usize| -> Vec<usize> { (0..content_msgs).filter(|&x| emission[t][x] > 0.0).collect() };

    let transitions = match params.family {
        KernelFamily::Markov => {
            let mut rows = Vec::with_capacity(n_c);
            for c in 0..n_c {
                let mut table = HashMap::new();
                for t in 0..k {
                    for x in emits(t) {
                        table.insert((IntentionId(t), MessageId(x)), transition_row(c));
                    }
                }
                rows.push(table);
            }
            TransitionKernel::Markov { rows }
        }
        KernelFamily::Full => {
            let depth = params.full_depth.min(params.max_len - 1);
            let mut rows = Vec::with_capacity(n_c);
            let mut fallback = Vec::with_capacity(n_c);
            for (c, support) in supports.iter().enumerate() {
                let pairs: Vec<Step> = support
                    .iter()
                    .flat_map(|&t| emits(t).into_iter().map(move |x| (IntentionId(t), MessageId(x))))
                    .collect();
                let mut table = HashMap::new();
                let mut frontier: Vec<Vec<Step>> = vec![Vec::new()];
                for _ in 0..depth {
                    let mut next = Vec::with_capacity(frontier.len() * pairs.len());
                    for hist in &frontier {
                        for &p in &pairs {
                            let mut h = hist.clone();
                            h.push(p);
                            table.insert(h.clone(), transition_row(c));
                            next.push(h);
                        }
                    }
                    frontier = next;
                }
                rows.push(table);
                fallback.push(transition_row(c));
            }
            TransitionKernel::Full { rows, fallback }
        }
    };

    Ok(ModelSpec {
        contexts: (0..n_c).map(|c| format!("c{c}")).collect(),
        intentions: (0..k).map(|t| format!("t{t}")).chain(["END".to_string()]).collect(),
        end_intention: end,
        messages: (0..content_msgs).map(|x| format!("m{x}")).chain(["<END>".to_string()]).collect(),
        stop_message: stop,
        context_prior,
        init_intention,
        transitions,
        emission,
        max_len: params.max_len,
        end_floor: params.end_floor,
    })
}

/// True iff `c` has any initial mass on `t`; used by tests on disjoint models.
pub fn reaches(spec: &ModelSpec, c: ContextId, t: IntentionId) -> bool {
    spec.init_prob(c, t) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn fixtures_validate() {
        for fx in Fixture::ALL {
            let report = validate_model(&make_fixture(fx));
            assert!(report.is_ok(), "{fx}: {:?}", report.violations);
        }
    }

    #[test]
    fn fixture_shapes() {
        assert_eq!(make_fixture(Fixture::SingleC).n_contexts(), 1);
        let skewed = make_fixture(Fixture::Skewed);
        assert_eq!(skewed.context_prior, vec![0.75, 0.25]);
        assert_eq!(skewed.context_prior.iter().sum::<f64>(), 1.0);
        assert!("tiny-b".parse::<Fixture>().is_ok());
        assert_eq!(
            make_fixture_by_name("HUGE").unwrap_err(),
            CotError::UnknownFixture("HUGE".into())
        );
    }

    #[test]
    fn generated_model_validates() {
        for family in [KernelFamily::Markov, KernelFamily::Full] {
            let spec = generate_random_model(&GeneratorParams::new((3, 4, 6), 0.3, family, 42)).unwrap();
            let report = validate_model(&spec);
            assert!(report.is_ok(), "{family}: {:?}", report.violations);
            assert_eq!(spec.family(), family);
        }
    }

    #[test]
    fn dial_endpoint_one_gives_identical_emissions() {
        let spec = generate_random_model(&GeneratorParams::new((2, 4, 5), 1.0, KernelFamily::Markov, 7)).unwrap();
        let first = &spec.emission[0];
        for row in &spec.emission[..spec.n_intentions() - 1] {
            assert_eq!(row, first);
        }
        assert!(first[..4].iter().all(|&p| p == 0.25));
    }

    #[test]
    fn dial_zero_gives_disjoint_supports() {
        let spec = generate_random_model(&GeneratorParams::new((2, 5, 6), 0.0, KernelFamily::Full, 3)).unwrap();
        assert!(validate_model(&spec).is_ok());
        for x in spec.content_messages() {
            let owners = spec.content_intentions().filter(|&t| spec.emission_prob(t, x) > 0.0).count();
            assert!(owners <= 1);
        }
        for t in spec.content_intentions() {
            let owners = spec.context_ids().filter(|&c| reaches(&spec, c, t)).count();
            assert!(owners <= 1);
        }
    }

    #[test]
    fn infeasible_sizes_are_rejected() {
        let err = generate_random_model(&GeneratorParams::new((2, 5, 3), 0.0, KernelFamily::Markov, 1));
        assert!(matches!(err, Err(CotError::InfeasibleSizes(_))));
        let err = generate_random_model(&GeneratorParams::new((4, 3, 6), 0.0, KernelFamily::Markov, 1));
        assert!(matches!(err, Err(CotError::InfeasibleSizes(_))));
        let err = generate_random_model(&GeneratorParams::new((2, 1, 3), 0.5, KernelFamily::Markov, 1));
        assert!(matches!(err, Err(CotError::InfeasibleSizes(_))));
    }

    #[test]
    fn generator_is_deterministic() {
        let p = GeneratorParams::new((3, 4, 5), 0.4, KernelFamily::Full, 99);
        assert_eq!(generate_random_model(&p).unwrap(), generate_random_model(&p).unwrap());
    }

    #[test]
    fn non_uniform_prior_option() {
        let mut p = GeneratorParams::new((3, 3, 4), 0.2, KernelFamily::Markov, 5);
        p.uniform_prior = false;
        let spec = generate_random_model(&p).unwrap();
        assert!(!spec.is_uniform_prior());
        assert!(validate_model(&spec).is_ok());
    }
}
