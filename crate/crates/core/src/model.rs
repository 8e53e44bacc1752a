//! The discrete generative model: a context drawn once per document, a chain
//! of intentions that evolves conditioned on the full history, and one
//! message emitted per intention until the stop symbol appears.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CotError, Result};

macro_rules! index_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

index_newtype!(
    /// Index into [`ModelSpec::contexts`].
    ContextId
);
index_newtype!(
    /// Index into [`ModelSpec::intentions`].
    IntentionId
);
index_newtype!(
    /// Index into [`ModelSpec::messages`].
    MessageId
);

/// One generated step: the intention and the message it emitted.
pub type Step = (IntentionId, MessageId);

pub const DEFAULT_END_FLOOR: f64 = 0.05;
const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KernelFamily {
    /// Rows keyed by the whole `(intention, message)` history.
    Full,
    /// Rows keyed by the last `(intention, message)` pair only.
    Markov,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Full => f.write_str("FULL"),
            KernelFamily::Markov => f.write_str("MARKOV"),
        }
    }
}

/// Intention transition kernel `q(θ_{i+1} | history, c)`, stored per context.
#[derive(Clone, Debug, PartialEq)]
pub enum TransitionKernel {
    Markov {
        rows: Vec<HashMap<Step, Vec<f64>>>,
    },
    /// Explicit rows for listed histories; any other history uses the
    /// context's fallback row.
    Full {
        rows: Vec<HashMap<Vec<Step>, Vec<f64>>>,
        fallback: Vec<Vec<f64>>,
    },
}

impl TransitionKernel {
    pub fn family(&self) -> KernelFamily {
        match self {
            TransitionKernel::Markov { .. } => KernelFamily::Markov,
            TransitionKernel::Full { .. } => KernelFamily::Full,
        }
    }

    /// Distribution over the next intention. `None` for an empty history or
    /// a MARKOV pair without a row.
    pub fn row(&self, context: ContextId, history: &[Step]) -> Option<&[f64]> {
        let last = history.last()?;
        match self {
            TransitionKernel::Markov { rows } => rows
                .get(context.0)
                .and_then(|table| table.get(last))
                .map(Vec::as_slice),
            TransitionKernel::Full { rows, fallback } => {
                let table = rows.get(context.0)?;
                table
                    .get(history)
                    .or_else(|| fallback.get(context.0))
                    .map(Vec::as_slice)
            }
        }
    }
}

/// The full discrete generative model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub contexts: Vec<String>,
    pub intentions: Vec<String>,
    pub end_intention: IntentionId,
    pub messages: Vec<String>,
    pub stop_message: MessageId,
    pub context_prior: Vec<f64>,
    /// `init_intention[c][θ] = q(θ₀ = θ | c)`.
    pub init_intention: Vec<Vec<f64>>,
    pub transitions: TransitionKernel,
    /// `emission[θ][x] = q(x | θ)`.
    pub emission: Vec<Vec<f64>>,
    /// Maximum chain length, counting the stop symbol.
    pub max_len: usize,
    pub end_floor: f64,
}

impl ModelSpec {
    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn n_intentions(&self) -> usize {
        self.intentions.len()
    }

    pub fn n_messages(&self) -> usize {
        self.messages.len()
    }

    pub fn family(&self) -> KernelFamily {
        self.transitions.family()
    }

    pub fn context_ids(&self) -> impl Iterator<Item = ContextId> + '_ {
        (0..self.contexts.len()).map(ContextId)
    }

    pub fn intention_ids(&self) -> impl Iterator<Item = IntentionId> + '_ {
        (0..self.intentions.len()).map(IntentionId)
    }

    pub fn message_ids(&self) -> impl Iterator<Item = MessageId> + '_ {
        (0..self.messages.len()).map(MessageId)
    }

    pub fn content_messages(&self) -> impl Iterator<Item = MessageId> + '_ {
        self.message_ids().filter(move |&m| m != self.stop_message)
    }

    pub fn content_intentions(&self) -> impl Iterator<Item = IntentionId> + '_ {
        self.intention_ids().filter(move |&t| t != self.end_intention)
    }

    #[inline]
    pub fn is_stop(&self, m: MessageId) -> bool {
        m == self.stop_message
    }

    #[inline]
    pub fn is_end(&self, t: IntentionId) -> bool {
        t == self.end_intention
    }

    #[inline]
    pub fn prior(&self, c: ContextId) -> f64 {
        self.context_prior[c.0]
    }

    #[inline]
    pub fn init_prob(&self, c: ContextId, t: IntentionId) -> f64 {
        self.init_intention[c.0][t.0]
    }

    #[inline]
    pub fn emission_prob(&self, t: IntentionId, m: MessageId) -> f64 {
        self.emission[t.0][m.0]
    }

    pub fn transition_row(&self, c: ContextId, history: &[Step]) -> Option<&[f64]> {
        self.transitions.row(c, history)
    }

    /// `q(θ | history, c)`; a missing row contributes no mass.
    pub fn transition_prob(&self, c: ContextId, history: &[Step], t: IntentionId) -> f64 {
        self.transition_row(c, history).map_or(0.0, |row| row[t.0])
    }

    pub fn is_uniform_prior(&self) -> bool {
        let first = self.context_prior[0];
        self.context_prior
            .iter()
            .all(|&p| (p - first).abs() <= SUM_TOLERANCE)
    }

    pub fn context_id(&self, name: &str) -> Result<ContextId> {
        lookup(&self.contexts, name, "context").map(ContextId)
    }

    pub fn intention_id(&self, name: &str) -> Result<IntentionId> {
        lookup(&self.intentions, name, "intention").map(IntentionId)
    }

    pub fn message_id(&self, name: &str) -> Result<MessageId> {
        lookup(&self.messages, name, "message").map(MessageId)
    }

    pub fn parse_messages<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<MessageId>> {
        names.iter().map(|n| self.message_id(n.as_ref())).collect()
    }

    pub fn message_names(&self, msgs: &[MessageId]) -> Vec<&str> {
        msgs.iter().map(|m| self.messages[m.0].as_str()).collect()
    }

    pub fn intention_names(&self, ts: &[IntentionId]) -> Vec<&str> {
        ts.iter().map(|t| self.intentions[t.0].as_str()).collect()
    }

    /// Canonical history key, `"θ₀:x₀|θ₁:x₁|…"`.
    pub fn history_key(&self, history: &[Step]) -> String {
        history
            .iter()
            .map(|(t, m)| format!("{}:{}", self.intentions[t.0], self.messages[m.0]))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse_history_key(&self, key: &str) -> Result<Vec<Step>> {
        key.split('|')
            .map(|pair| {
                let (t, m) = pair.split_once(':').ok_or_else(|| {
                    CotError::InvalidModel(format!("history key `{key}`: expected `intention:message`"))
                })?;
                Ok((self.intention_id(t)?, self.message_id(m)?))
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| CotError::InvalidModel(format!("model JSON: {e}")))?;
        ModelSpec::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }
}

fn lookup(names: &[String], name: &str, kind: &'static str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| CotError::UnknownSymbol {
            kind,
            name: name.to_string(),
        })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Structure(String),
    WrongLength { expected: usize, found: usize },
    NonFinite,
    NegativeEntry,
    RowSum { sum: f64 },
    NonTerminalEmitsStop,
    TerminalMustEmitStop,
    InitSelectsEnd,
    EndBelowFloor { mass: f64, floor: f64 },
    BadHistory(String),
    MissingRow,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Structure(s) => write!(f, "{s}"),
            ViolationKind::WrongLength { expected, found } => {
                write!(f, "wrong length: expected {expected}, found {found}")
            }
            ViolationKind::NonFinite => f.write_str("non-finite entry"),
            ViolationKind::NegativeEntry => f.write_str("negative entry"),
            ViolationKind::RowSum { sum } => write!(f, "row sum ≠ 1 (sum = {sum})"),
            ViolationKind::NonTerminalEmitsStop => f.write_str("non-terminal emits stop symbol"),
            ViolationKind::TerminalMustEmitStop => {
                f.write_str("terminal intention must emit the stop symbol with probability 1")
            }
            ViolationKind::InitSelectsEnd => f.write_str("initial intention may not be END"),
            ViolationKind::EndBelowFloor { mass, floor } => {
                write!(f, "END mass {mass} below end_floor {floor}")
            }
            ViolationKind::BadHistory(s) => write!(f, "bad history key: {s}"),
            ViolationKind::MissingRow => f.write_str("missing transition row"),
        }
    }
}

/// A single failed invariant, located by field and row.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.kind)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&ViolationKind) -> bool) -> bool {
        self.violations.iter().any(|v| pred(&v.kind))
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
            Err(CotError::InvalidModel(msgs.join("; ")))
        }
    }
}

struct Validator {
    violations: Vec<Violation>,
}

impl Validator {
    fn push(&mut self, location: impl Into<String>, kind: ViolationKind) {
        self.violations.push(Violation {
            location: location.into(),
            kind,
        });
    }

    /// Returns true when the vector is a usable probability vector.
    fn prob_vector(&mut self, location: &str, v: &[f64], expected_len: usize) -> bool {
        if v.len() != expected_len {
            self.push(
                location,
                ViolationKind::WrongLength {
                    expected: expected_len,
                    found: v.len(),
                },
            );
            return false;
        }
        if v.iter().any(|x| !x.is_finite()) {
            self.push(location, ViolationKind::NonFinite);
            return false;
        }
        let mut ok = true;
        if v.iter().any(|&x| x < 0.0) {
            self.push(location, ViolationKind::NegativeEntry);
            ok = false;
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            self.push(location, ViolationKind::RowSum { sum });
            ok = false;
        }
        ok
    }
}

/// Checks every structural and probabilistic invariant of a model. Violations
/// are returned as data; the function never fails.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut v = Validator {
        violations: Vec::new(),
    };
    let n_c = spec.n_contexts();
    let n_t = spec.n_intentions();
    let n_m = spec.n_messages();

    if n_c < 1 {
        v.push("contexts", ViolationKind::Structure("at least one context required".into()));
    }
    if n_t < 2 {
        v.push("intentions", ViolationKind::Structure("at least two intentions required".into()));
    }
    if n_m < 2 {
        v.push("messages", ViolationKind::Structure("at least two messages required".into()));
    }
    for (field, names) in [
        ("contexts", &spec.contexts),
        ("intentions", &spec.intentions),
        ("messages", &spec.messages),
    ] {
        let mut seen = HashSet::new();
        for name in names {
            if name.is_empty() || name.contains(':') || name.contains('|') {
                v.push(
                    format!("{field}[{name:?}]"),
                    ViolationKind::Structure("identifiers must be non-empty and free of ':' and '|'".into()),
                );
            }
            if !seen.insert(name) {
                v.push(format!("{field}[{name:?}]"), ViolationKind::Structure("duplicate identifier".into()));
            }
        }
    }
    if spec.end_intention.0 >= n_t {
        v.push("end_intention", ViolationKind::Structure("index out of range".into()));
    }
    if spec.stop_message.0 >= n_m {
        v.push("stop_message", ViolationKind::Structure("index out of range".into()));
    }
    if spec.max_len < 2 {
        v.push("max_len", ViolationKind::Structure("must be at least 2".into()));
    }
    if !(spec.end_floor > 0.0 && spec.end_floor <= 1.0) {
        v.push("end_floor", ViolationKind::Structure("must lie in (0, 1]".into()));
    }
    if !v.violations.is_empty() {
        return ValidationReport { violations: v.violations };
    }

    let end = spec.end_intention;
    let stop = spec.stop_message;

    v.prob_vector("context_prior", &spec.context_prior, n_c);

    if spec.init_intention.len() != n_c {
        v.push(
            "init_intention",
            ViolationKind::WrongLength {
                expected: n_c,
                found: spec.init_intention.len(),
            },
        );
    } else {
        for (c, row) in spec.init_intention.iter().enumerate() {
            let loc = format!("init_intention[{}]", spec.contexts[c]);
            if v.prob_vector(&loc, row, n_t) && row[end.0] != 0.0 {
                v.push(loc, ViolationKind::InitSelectsEnd);
            }
        }
    }

    if spec.emission.len() != n_t {
        v.push(
            "emission",
            ViolationKind::WrongLength {
                expected: n_t,
                found: spec.emission.len(),
            },
        );
    } else {
        for (t, row) in spec.emission.iter().enumerate() {
            let loc = format!("emission[{}]", spec.intentions[t]);
            if !v.prob_vector(&loc, row, n_m) {
                continue;
            }
            if t == end.0 {
                if row[stop.0] != 1.0 {
                    v.push(loc, ViolationKind::TerminalMustEmitStop);
                }
            } else if row[stop.0] != 0.0 {
                v.push(loc, ViolationKind::NonTerminalEmitsStop);
            }
        }
    }

    let check_row = |v: &mut Validator, loc: String, row: &[f64]| {
        if v.prob_vector(&loc, row, n_t) && row[end.0] < spec.end_floor {
            v.push(
                loc,
                ViolationKind::EndBelowFloor {
                    mass: row[end.0],
                    floor: spec.end_floor,
                },
            );
        }
    };
    let check_history = |v: &mut Validator, loc: &str, history: &[Step]| -> bool {
        if history.is_empty() {
            v.push(loc, ViolationKind::BadHistory("empty history".into()));
            return false;
        }
        if history.len() > spec.max_len {
            v.push(loc, ViolationKind::BadHistory("longer than max_len".into()));
            return false;
        }
        for &(t, m) in history {
            if t.0 >= n_t || m.0 >= n_m {
                v.push(loc, ViolationKind::BadHistory("index out of range".into()));
                return false;
            }
            if t == end || m == stop {
                v.push(loc, ViolationKind::BadHistory("END is absorbing and cannot be a source".into()));
                return false;
            }
        }
        true
    };

    match &spec.transitions {
        TransitionKernel::Markov { rows } => {
            if rows.len() != n_c {
                v.push(
                    "transition_kernel.rows",
                    ViolationKind::WrongLength {
                        expected: n_c,
                        found: rows.len(),
                    },
                );
            } else {
                for (c, table) in rows.iter().enumerate() {
                    let mut keys: Vec<&Step> = table.keys().collect();
                    keys.sort();
                    for key in keys {
                        let loc = format!(
                            "transition_kernel.rows[{}][{}]",
                            spec.contexts[c],
                            safe_key(spec, std::slice::from_ref(key))
                        );
                        if check_history(&mut v, &loc, std::slice::from_ref(key)) {
                            check_row(&mut v, loc, &table[key]);
                        }
                    }
                    if spec.emission.len() == n_t {
                        for t in spec.content_intentions() {
                            for m in spec.content_messages() {
                                if spec.emission[t.0].get(m.0).copied().unwrap_or(0.0) > 0.0
                                    && !table.contains_key(&(t, m))
                                {
                                    v.push(
                                        format!(
                                            "transition_kernel.rows[{}][{}:{}]",
                                            spec.contexts[c], spec.intentions[t.0], spec.messages[m.0]
                                        ),
                                        ViolationKind::MissingRow,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        TransitionKernel::Full { rows, fallback } => {
            if rows.len() != n_c || fallback.len() != n_c {
                v.push(
                    "transition_kernel",
                    ViolationKind::Structure("rows and fallback need one entry per context".into()),
                );
            } else {
                for (c, table) in rows.iter().enumerate() {
                    let mut keys: Vec<&Vec<Step>> = table.keys().collect();
                    keys.sort();
                    for key in keys {
                        let loc = format!("transition_kernel.rows[{}][{}]", spec.contexts[c], safe_key(spec, key));
                        if check_history(&mut v, &loc, key) {
                            check_row(&mut v, loc, &table[key]);
                        }
                    }
                    check_row(
                        &mut v,
                        format!("transition_kernel.fallback[{}]", spec.contexts[c]),
                        &fallback[c],
                    );
                }
            }
        }
    }

    ValidationReport { violations: v.violations }
}

fn safe_key(spec: &ModelSpec, history: &[Step]) -> String {
    history
        .iter()
        .map(|(t, m)| {
            let tn = spec.intentions.get(t.0).map_or("?", String::as_str);
            let mn = spec.messages.get(m.0).map_or("?", String::as_str);
            format!("{tn}:{mn}")
        })
        .collect::<Vec<_>>()
        .join("|")
}

// ---------------------------------------------------------------------------
// JSON file format
// ---------------------------------------------------------------------------

/// On-disk model document. Probability tables are indexed in declaration
/// order of the corresponding identifier lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub contexts: Vec<String>,
    pub intentions: Vec<String>,
    pub end_intention: String,
    pub messages: Vec<String>,
    pub stop_message: String,
    pub context_prior: Vec<f64>,
    pub init_intention: Vec<Vec<f64>>,
    pub transition_kernel: KernelFile,
    pub emission: Vec<Vec<f64>>,
    pub max_len: usize,
    #[serde(default = "default_end_floor")]
    pub end_floor: f64,
}

fn default_end_floor() -> f64 {
    DEFAULT_END_FLOOR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub family: KernelFamily,
    /// context id -> history key -> distribution over intentions.
    pub rows: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<BTreeMap<String, Vec<f64>>>,
}

impl From<&ModelSpec> for ModelFile {
    fn from(spec: &ModelSpec) -> Self {
        let mut rows = BTreeMap::new();
        let mut fallback = None;
        match &spec.transitions {
            TransitionKernel::Markov { rows: tables } => {
                for (c, table) in tables.iter().enumerate() {
                    let entries = table
                        .iter()
                        .map(|(step, row)| (spec.history_key(std::slice::from_ref(step)), row.clone()))
                        .collect();
                    rows.insert(spec.contexts[c].clone(), entries);
                }
            }
            TransitionKernel::Full { rows: tables, fallback: fb } => {
                for (c, table) in tables.iter().enumerate() {
                    let entries = table
                        .iter()
                        .map(|(hist, row)| (spec.history_key(hist), row.clone()))
                        .collect();
                    rows.insert(spec.contexts[c].clone(), entries);
                }
                fallback = Some(
                    fb.iter()
                        .enumerate()
                        .map(|(c, row)| (spec.contexts[c].clone(), row.clone()))
                        .collect(),
                );
            }
        }
        ModelFile {
            contexts: spec.contexts.clone(),
            intentions: spec.intentions.clone(),
            end_intention: spec.intentions[spec.end_intention.0].clone(),
            messages: spec.messages.clone(),
            stop_message: spec.messages[spec.stop_message.0].clone(),
            context_prior: spec.context_prior.clone(),
            init_intention: spec.init_intention.clone(),
            transition_kernel: KernelFile {
                family: spec.family(),
                rows,
                fallback,
            },
            emission: spec.emission.clone(),
            max_len: spec.max_len,
            end_floor: spec.end_floor,
        }
    }
}

impl TryFrom<ModelFile> for ModelSpec {
    type Error = CotError;

    fn try_from(file: ModelFile) -> Result<Self> {
        let bad = |field: &str, e: CotError| CotError::InvalidModel(format!("{field}: {e}"));
        let end_intention = IntentionId(lookup(&file.intentions, &file.end_intention, "intention").map_err(|e| bad("end_intention", e))?);
        let stop_message = MessageId(lookup(&file.messages, &file.stop_message, "message").map_err(|e| bad("stop_message", e))?);

        // A skeleton with an empty kernel lets us reuse the id parsers.
        let mut spec = ModelSpec {
            contexts: file.contexts,
            intentions: file.intentions,
            end_intention,
            messages: file.messages,
            stop_message,
            context_prior: file.context_prior,
            init_intention: file.init_intention,
            transitions: TransitionKernel::Markov { rows: Vec::new() },
            emission: file.emission,
            max_len: file.max_len,
            end_floor: file.end_floor,
        };

        let kernel = file.transition_kernel;
        for name in kernel.rows.keys() {
            spec.context_id(name).map_err(|e| bad("transition_kernel.rows", e))?;
        }
        let table_for = |c: &str| kernel.rows.get(c);
        spec.transitions = match kernel.family {
            KernelFamily::Markov => {
                if kernel.fallback.is_some() {
                    return Err(CotError::InvalidModel(
                        "transition_kernel.fallback: only allowed for FULL kernels".into(),
                    ));
                }
                let mut rows = Vec::with_capacity(spec.n_contexts());
                for c in &spec.contexts {
                    let mut table = HashMap::new();
                    for (key, row) in table_for(c).into_iter().flatten() {
                        let field = format!("transition_kernel.rows[{c}][{key}]");
                        let hist = spec.parse_history_key(key).map_err(|e| bad(&field, e))?;
                        if hist.len() != 1 {
                            return Err(CotError::InvalidModel(format!(
                                "{field}: MARKOV keys hold exactly one `intention:message` pair"
                            )));
                        }
                        table.insert(hist[0], row.clone());
                    }
                    rows.push(table);
                }
                TransitionKernel::Markov { rows }
            }
            KernelFamily::Full => {
                let fb = kernel.fallback.as_ref().ok_or_else(|| {
                    CotError::InvalidModel("transition_kernel.fallback: required for FULL kernels".into())
                })?;
                for name in fb.keys() {
                    spec.context_id(name).map_err(|e| bad("transition_kernel.fallback", e))?;
                }
                let mut rows = Vec::with_capacity(spec.n_contexts());
                let mut fallback = Vec::with_capacity(spec.n_contexts());
                for c in &spec.contexts {
                    let mut table = HashMap::new();
                    for (key, row) in table_for(c).into_iter().flatten() {
                        let field = format!("transition_kernel.rows[{c}][{key}]");
                        let hist = spec.parse_history_key(key).map_err(|e| bad(&field, e))?;
                        table.insert(hist, row.clone());
                    }
                    rows.push(table);
                    fallback.push(fb.get(c).cloned().ok_or_else(|| {
                        CotError::InvalidModel(format!("transition_kernel.fallback: missing context `{c}`"))
                    })?);
                }
                TransitionKernel::Full { rows, fallback }
            }
        };
        Ok(spec)
    }
}
