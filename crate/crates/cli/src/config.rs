//! Experiment configuration: command-line flags merged with an optional
//! JSON file whose fields take precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use cotlab_core::fixtures::{make_fixture_by_name, GeneratorParams};
use cotlab_core::model::{validate_model, ContextId, KernelFamily, ModelSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenModel,
    Sample,
    Ambiguity,
    Verify,
    SweepN,
    LemmaThreshold,
    McCheck,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::GenModel => "gen-model",
            Mode::Sample => "sample",
            Mode::Ambiguity => "ambiguity",
            Mode::Verify => "verify",
            Mode::SweepN => "sweep-n",
            Mode::LemmaThreshold => "lemma-threshold",
            Mode::McCheck => "mc-check",
        }
    }

    fn uses_seeds(self) -> bool {
        self != Mode::GenModel
    }
}

/// Every setting is optional here; [`ExperimentConfig::resolve`] checks
/// what each mode needs.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSON config file; its fields override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Checked against the subcommand when present in a config file.
    #[arg(skip)]
    pub mode: Option<Mode>,

    /// Built-in model: TINY-A, TINY-B, SINGLE-C or SKEWED.
    #[arg(long)]
    pub fixture: Option<String>,
    /// Model JSON file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Random model parameters (config file only).
    #[arg(skip)]
    pub generator: Option<GeneratorParams>,
    /// Random model sizes `|C|,|Θ|,|M|`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Random model ambiguity dial in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Random model kernel family.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<KernelFamily>,
    /// Random model seed.
    #[arg(long)]
    pub model_seed: Option<u64>,

    /// Example counts.
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Instance seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub tail_max_len: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Draws allowed per accepted example or trajectory.
    #[arg(long)]
    pub retry_budget: Option<usize>,
    /// Fixes the true context by name instead of drawing it from the prior.
    #[arg(long)]
    pub context: Option<String>,
    /// Minimum trajectory length (stop symbol included).
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Monte Carlo draws per context.
    #[arg(long)]
    pub samples: Option<usize>,

    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional SVG chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Logarithmic y axis for the chart.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub log_y: Option<bool>,
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    match s.to_ascii_uppercase().as_str() {
        "FULL" => Ok(KernelFamily::Full),
        "MARKOV" => Ok(KernelFamily::Markov),
        _ => Err(format!("expected FULL or MARKOV, got `{s}`")),
    }
}

/// A model ready to use together with a label for reports.
pub struct LoadedModel {
    pub spec: ModelSpec,
    pub label: String,
}

/// Validated settings for one run.
pub struct Resolved {
    pub mode: Mode,
    pub model: LoadedModel,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tail_max_len: usize,
    pub delta: Option<f64>,
    pub retry_budget: usize,
    pub context: Option<ContextId>,
    pub min_len: usize,
    pub samples: usize,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub log_y: bool,
}

pub const DEFAULT_MIN_LEN: usize = 8;
pub const DEFAULT_SAMPLES: usize = 10_000;

macro_rules! overlay {
    ($base:ident, $file:ident, $($field:ident),+) => {
        $( if $file.$field.is_some() { $base.$field = $file.$field; } )+
    };
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config `{}`", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config `{}`", path.display()))
    }

    /// Fields set in `file` replace those given as flags.
    pub fn overlay(mut self, file: ExperimentConfig) -> Self {
        overlay!(
            self, file, mode, fixture, model, generator, sizes, alpha, family, model_seed, n, seeds, tail_max_len,
            delta, retry_budget, context, min_len, samples, out, svg, log_y
        );
        self
    }

    /// Flags, then the `--config` file on top.
    pub fn merged(self) -> anyhow::Result<Self> {
        match self.config.clone() {
            Some(path) => Ok(self.overlay(Self::read(&path)?)),
            None => Ok(self),
        }
    }

    fn generator_params(&self) -> anyhow::Result<Option<GeneratorParams>> {
        let flag_fields = self.sizes.is_some() || self.alpha.is_some() || self.family.is_some();
        if let Some(g) = &self.generator {
            if flag_fields {
                bail!("config field `generator` conflicts with `sizes`/`alpha`/`family`");
            }
            return Ok(Some(g.clone()));
        }
        if !flag_fields {
            return Ok(None);
        }
        let sizes = self.sizes.as_deref().context("config field `sizes` is required for a random model")?;
        let [c, t, m] = sizes else {
            bail!("config field `sizes`: expected three values |C|,|Θ|,|M|, got {}", sizes.len());
        };
        let alpha = self.alpha.context("config field `alpha` is required for a random model")?;
        let family = self.family.unwrap_or(KernelFamily::Markov);
        let seed = self
            .model_seed
            .context("config field `model_seed` is required for a random model")?;
        Ok(Some(GeneratorParams::new((*c, *t, *m), alpha, family, seed)))
    }

    fn load_model(&self) -> anyhow::Result<LoadedModel> {
        let generator = self.generator_params()?;
        let sources = usize::from(self.fixture.is_some()) + usize::from(self.model.is_some()) + usize::from(generator.is_some());
        if sources != 1 {
            bail!("exactly one model source is required: `fixture`, `model` or `generator` (`sizes`/`alpha`/`family`/`model_seed`); got {sources}");
        }
        if let Some(name) = &self.fixture {
            let spec = make_fixture_by_name(name).context("config field `fixture`")?;
            return Ok(LoadedModel {
                label: spec_label_fixture(name),
                spec,
            });
        }
        if let Some(path) = &self.model {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading model `{}`", path.display()))?;
            let spec = ModelSpec::from_json(&text).with_context(|| format!("loading model `{}`", path.display()))?;
            validate_model(&spec)
                .into_result()
                .with_context(|| format!("validating model `{}`", path.display()))?;
            return Ok(LoadedModel {
                label: path.display().to_string(),
                spec,
            });
        }
        let params = generator.expect("one source present");
        let spec = cotlab_core::fixtures::generate_random_model(&params).context("config field `generator`")?;
        Ok(LoadedModel {
            label: format!(
                "random({},{},{}; alpha={}; {}; seed={})",
                params.n_contexts, params.n_intentions, params.n_messages, params.ambiguity, params.family, params.seed
            ),
            spec,
        })
    }

    pub fn resolve(self, mode: Mode) -> anyhow::Result<Resolved> {
        if let Some(m) = self.mode {
            if m != mode {
                bail!("config field `mode`: file says `{}` but the command is `{}`", m.name(), mode.name());
            }
        }
        let model = self.load_model()?;
        let seeds = self.seeds.clone().unwrap_or_default();
        if mode.uses_seeds() && seeds.is_empty() {
            bail!("config field `seeds` is required for `{}` (e.g. --seeds 1,2,3)", mode.name());
        }
        let n = self.n.clone().unwrap_or_default();
        if matches!(mode, Mode::SweepN | Mode::Verify) && n.is_empty() {
            bail!("config field `n` must list at least one example count for `{}`", mode.name());
        }
        if let Some(d) = self.delta {
            if !(0.0..0.5).contains(&d) {
                bail!("config field `delta` must lie in [0, 0.5), got {d}");
            }
        }
        if matches!(mode, Mode::SweepN | Mode::LemmaThreshold) && self.delta.is_none() {
            bail!("config field `delta` is required for `{}`", mode.name());
        }
        let tail_max_len = self.tail_max_len.unwrap_or(cotlab_core::bounds::DEFAULT_TAIL_MAX_LEN);
        if tail_max_len == 0 {
            bail!("config field `tail_max_len` must be at least 1");
        }
        let samples = self.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            bail!("config field `samples` must be at least 1");
        }
        let retry_budget = self.retry_budget.unwrap_or(cotlab_core::bounds::DEFAULT_RETRY_BUDGET);
        if retry_budget == 0 {
            bail!("config field `retry_budget` must be at least 1");
        }
        let context = self
            .context
            .as_deref()
            .map(|name| model.spec.context_id(name))
            .transpose()
            .context("config field `context`")?;
        Ok(Resolved {
            mode,
            model,
            n,
            seeds,
            tail_max_len,
            delta: self.delta,
            retry_budget,
            context,
            min_len: self.min_len.unwrap_or(DEFAULT_MIN_LEN),
            samples,
            out: self.out,
            svg: self.svg,
            log_y: self.log_y.unwrap_or(false),
        })
    }
}

fn spec_label_fixture(name: &str) -> String {
    name.parse::<cotlab_core::Fixture>()
        .map(|f| f.name().to_string())
        .unwrap_or_else(|_| name.to_string())
}
