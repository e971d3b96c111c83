//! Declarative scenarios: config parsing, engine runs, cross-checks and
//! rendered output files.
//!
//! A scenario file is TOML with the sections `[geometry]`, `[state]`,
//! `[engine]`, `[[protocol]]` and `[output]`. Running one is split into
//! [`prepare`] (parse and validate) and [`Scenario::execute`] (engines and
//! protocols); nothing touches the disk until [`Outcome::write`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dicke::{
    dicke_decay_oracle, multiplet_state, singlet_product, FullState, MultipletLabel, MAX_ATOMS,
};
use crate::ensemble::{halves, make_ensemble, thirds, AtomEnsemble, BinPartition, GeometrySpec};
use crate::error::Error;
use crate::kernel::{
    build_kernel, evolve_amplitudes, rate_minus_closed_form, rate_of, rate_plus_closed_form,
    rate_three_bin_closed_form, uniform_grid, DecayKernel,
};
use crate::prep::{
    conditional_prepare, prepare_singlet_on, prepare_timed_minus, prepare_timed_plus,
    prepare_with_network, switch_2pi, Element, OpticalNetwork, Target,
};
use crate::states::{minus_state, plus_state, three_bin_state, ExcitationState};
use crate::ww::{
    fit_decay, integrate_ww, make_mode_grid, Calibration, GridParams, ModeGrid, RateFit,
    MAX_DT_FRACTION,
};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest ensemble handed to the mode-resolved integrator.
pub const MAX_WW_ATOMS: usize = 64;
/// Fidelity shortfall tolerated by the exact preparation protocols.
pub const EXACT_PREP_TOL: f64 = 1e-10;
/// Samples kept per trajectory in the CSV/JSON tables.
/// Relative residual below which a state counts as a kernel eigenvector.
pub const EIGEN_TOL: f64 = 1e-6;
pub const TRAJECTORY_ROWS: usize = 501;

const BUNDLED: &[(&str, &str)] = &[
    ("dicke-n4", include_str!("../scenarios/dicke-n4.toml")),
    ("switch-demo", include_str!("../scenarios/switch-demo.toml")),
    (
        "engine-triangle",
        include_str!("../scenarios/engine-triangle.toml"),
    ),
    ("compare-n12", include_str!("../scenarios/compare-n12.toml")),
    ("ww-pair", include_str!("../scenarios/ww-pair.toml")),
    (
        "slab-closed-forms",
        include_str!("../scenarios/slab-closed-forms.toml"),
    ),
    (
        "three-bin-n6",
        include_str!("../scenarios/three-bin-n6.toml"),
    ),
    ("preparation", include_str!("../scenarios/preparation.toml")),
];

/// Names and sources of the scenarios shipped with the binary.
pub fn bundled_scenarios() -> &'static [(&'static str, &'static str)] {
    BUNDLED
}

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    pub geometry: GeometrySpec,
    pub state: StateSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub protocol: Vec<ProtocolSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    #[serde(default)]
    pub states: Vec<StateSpec>,
    /// Custom bins; used by `minus` when it has two bins and by
    /// `three-bin` when it has three.
    pub partition: Option<PartitionSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub bins: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Plus,
    Minus,
    ThreeBin,
    Basis {
        atom: usize,
    },
    /// Kernel eigenvector, ascending eigenvalue order.
    Eigen {
        index: usize,
    },
    Multiplet {
        r: f64,
        m: f64,
        p: usize,
    },
    SingletPairs {
        pairs: Vec<[usize; 2]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    Kernel,
    Ww,
    DickeOracle,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Kernel, EngineKind::Ww, EngineKind::DickeOracle];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Kernel => "kernel",
            EngineKind::Ww => "ww",
            EngineKind::DickeOracle => "dicke-oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub engines: Vec<EngineKind>,
    /// Kernel against oracle, relative to `max(rate, γ)`.
    pub kernel_tolerance: f64,
    /// Kernel against integrator, relative.
    pub ww_tolerance: f64,
    /// Rates below this many `γ` count as subradiant; both engines must
    /// then stay below it.
    pub subradiant_threshold: f64,
    /// Allowed norm drift per unit `γt` of integrator trajectories.
    pub norm_tolerance: f64,
    pub grid: GridParams,
    /// Integration span in units of `1/γ`; chosen per state when absent.
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            engines: vec![EngineKind::Kernel],
            kernel_tolerance: 1e-8,
            ww_tolerance: 0.1,
            subradiant_threshold: 0.1,
            norm_tolerance: 1e-6,
            grid: GridParams::default(),
            t_end: None,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolSpec {
    /// Prepared minus state, evolved by the kernel, switched at
    /// `switch_time` on `bin` (second half by default).
    Switch {
        switch_time: f64,
        t_end: f64,
        samples: usize,
        bin: Option<Vec<usize>>,
    },
    TimedPlus,
    TimedMinus,
    SingletPairs {
        pairs: Vec<[usize; 2]>,
    },
    Conditional {
        target: Target,
        eps: Vec<f64>,
    },
    Network {
        elements: Vec<Element>,
        targets: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum RunError {
    Parse(String),
    Validation(String),
    Engine(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => 2,
            RunError::Validation(_) => 3,
            RunError::Engine(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Parse(m) => write!(f, "parse error: {m}"),
            RunError::Validation(m) => write!(f, "validation error: {m}"),
            RunError::Engine(e) => write!(f, "engine error: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

/// Exit code for a run that finished but broke an invariant.
pub const ACCEPTANCE_EXIT: i32 = 5;

fn validation(e: impl std::fmt::Display) -> RunError {
    RunError::Validation(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
}

/// Resolved state with its single-excitation and full-space forms.
#[derive(Debug, Clone)]
pub struct NamedState {
    pub name: String,
    pub spec: StateSpec,
    pub single: Option<ExcitationState>,
    pub full: Option<FullState>,
}

/// Parsed and validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
    pub ensemble: AtomEnsemble,
    pub kernel: DecayKernel,
    pub states: Vec<NamedState>,
    pub header: Header,
}

/// Overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    /// Replaces the engine list.
    pub engines: Option<Vec<EngineKind>>,
}

/// Reads a config path, or a bundled scenario when no such file exists.
pub fn load_source(arg: &str) -> Result<(String, String), RunError> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Parse(format!("cannot read {arg}: {e}")))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        return Ok((stem, text));
    }
    bundled(arg)
        .map(|s| (arg.to_string(), s.to_string()))
        .ok_or_else(|| RunError::Parse(format!("no config file or bundled scenario named {arg:?}")))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, RunError> {
    toml::from_str(text).map_err(|e| RunError::Parse(e.to_string()))
}

/// Parses, applies overrides and validates.
pub fn prepare(
    default_name: &str,
    text: &str,
    overrides: &Overrides,
) -> Result<Scenario, RunError> {
    let mut config = parse_config(text)?;
    if let Some(seed) = overrides.seed {
        config.geometry = config.geometry.with_seed(seed);
    }
    if let Some(dir) = &overrides.out_dir {
        config.output.dir = dir.clone();
    }
    if let Some(f) = overrides.format {
        config.output.format = f;
    }
    if let Some(e) = &overrides.engines {
        config.engine.engines = e.clone();
    }

    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    if let Some(seed) = overrides.seed {
        hasher.update(format!("\nseed-override={seed}").as_bytes());
    }
    let digest = hasher.finalize();
    let config_sha256 = digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });

    let ensemble = make_ensemble(&config.geometry).map_err(validation)?;
    validate_engine(&config.engine)?;
    let kernel = build_kernel(&ensemble);
    let states = config
        .state
        .states
        .iter()
        .map(|spec| resolve_state(spec, &config.state, &ensemble, &kernel))
        .collect::<Result<Vec<_>, _>>()?;
    validate_protocols(&config.protocol, &ensemble)?;

    Ok(Scenario {
        name: config
            .name
            .clone()
            .unwrap_or_else(|| default_name.to_string()),
        config,
        ensemble,
        kernel,
        states,
        header: Header {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config_sha256,
        },
    })
}

fn validate_engine(e: &EngineSection) -> Result<(), RunError> {
    for (name, v) in [
        ("kernel_tolerance", e.kernel_tolerance),
        ("ww_tolerance", e.ww_tolerance),
        ("subradiant_threshold", e.subradiant_threshold),
        ("norm_tolerance", e.norm_tolerance),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(RunError::Validation(format!(
                "engine.{name} must be positive, got {v}"
            )));
        }
    }
    for (name, v) in [("t_end", e.t_end), ("dt", e.dt)] {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RunError::Validation(format!(
                    "engine.{name} must be positive, got {v}"
                )));
            }
        }
    }
    if e.engines.is_empty() {
        return Err(RunError::Validation(
            "engine.engines must name at least one engine".into(),
        ));
    }
    if e.engines.contains(&EngineKind::Ww) {
        e.grid.validate().map_err(validation)?;
    }
    Ok(())
}

fn validate_protocols(protocols: &[ProtocolSpec], ens: &AtomEnsemble) -> Result<(), RunError> {
    let n = ens.len();
    for p in protocols {
        match p {
            ProtocolSpec::Switch {
                switch_time,
                t_end,
                samples,
                bin,
            } => {
                if !(*switch_time > 0.0 && t_end > switch_time) {
                    return Err(validation("switch needs 0 < switch_time < t_end"));
                }
                if *samples < 4 {
                    return Err(validation("switch needs at least 4 samples"));
                }
                if bin.is_none() && n % 2 != 0 {
                    return Err(validation("switch on the second half needs even N"));
                }
                if let Some(b) = bin {
                    if b.iter().any(|&j| j >= n) {
                        return Err(validation("switch bin index out of range"));
                    }
                }
                if n % 2 != 0 {
                    return Err(validation(
                        "switch starts from the minus state and needs even N",
                    ));
                }
            }
            ProtocolSpec::TimedPlus => {}
            ProtocolSpec::TimedMinus => {
                if n % 2 != 0 {
                    return Err(validation("timed minus preparation needs even N"));
                }
            }
            ProtocolSpec::SingletPairs { pairs } => {
                let flat: Vec<(usize, usize)> = pairs.iter().map(|p| (p[0], p[1])).collect();
                singlet_product(&flat, n).map_err(validation)?;
            }
            ProtocolSpec::Conditional { target, eps } => {
                if *target == Target::Minus && n % 2 != 0 {
                    return Err(validation("conditional minus preparation needs even N"));
                }
                if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0) || e * e > n as f64) {
                    return Err(validation("conditional eps values must lie in [0, √N]"));
                }
            }
            ProtocolSpec::Network { elements, targets } => {
                OpticalNetwork::new(elements.clone(), targets.clone()).map_err(validation)?;
                if targets.iter().any(|&t| t >= n) {
                    return Err(validation("network target out of range"));
                }
            }
        }
    }
    Ok(())
}

fn partition_for(
    section: &StateSection,
    n: usize,
    bins: usize,
) -> Result<Option<BinPartition>, RunError> {
    match &section.partition {
        Some(p) if p.bins.len() == bins => Ok(Some(
            BinPartition::new(p.bins.clone(), p.weights.clone(), n).map_err(validation)?,
        )),
        _ => Ok(None),
    }
}

/// Single-excitation part of a full state, if that is all it has.
fn single_sector(full: &FullState) -> Option<ExcitationState> {
    let n = full.atoms();
    let amps: Vec<C64> = (0..n).map(|j| full.amplitudes()[1 << j]).collect();
    let weight: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
    ((weight - 1.0).abs() < 1e-12)
        .then(|| ExcitationState::normalized(amps, "").ok())
        .flatten()
}

fn resolve_state(
    spec: &StateSpec,
    section: &StateSection,
    ens: &AtomEnsemble,
    kernel: &DecayKernel,
) -> Result<NamedState, RunError> {
    let n = ens.len();
    let embed = |s: &ExcitationState| {
        (n <= MAX_ATOMS)
            .then(|| FullState::from_excitation(s).ok())
            .flatten()
    };
    let (name, single, full) = match spec {
        StateSpec::Plus => {
            let s = plus_state(ens);
            ("plus".to_string(), Some(s.clone()), embed(&s))
        }
        StateSpec::Minus => {
            let part = match partition_for(section, n, 2)? {
                Some(p) => p,
                None => halves(ens).map_err(validation)?,
            };
            let s = minus_state(ens, &part).map_err(validation)?;
            ("minus".to_string(), Some(s.clone()), embed(&s))
        }
        StateSpec::ThreeBin => {
            let part = match partition_for(section, n, 3)? {
                Some(p) => p,
                None => thirds(ens).map_err(validation)?,
            };
            let s = three_bin_state(ens, &part).map_err(validation)?;
            ("three-bin".to_string(), Some(s.clone()), embed(&s))
        }
        StateSpec::Basis { atom } => {
            let s = ExcitationState::basis(n, *atom).map_err(validation)?;
            (format!("basis:{atom}"), Some(s.clone()), embed(&s))
        }
        StateSpec::Eigen { index } => {
            if *index >= n {
                return Err(validation(format!(
                    "eigen index {index} out of range for N = {n}"
                )));
            }
            let (_, vecs) = kernel.eigen();
            let amps = vecs
                .column(*index)
                .iter()
                .map(|&x| C64::new(x, 0.0))
                .collect();
            let s =
                ExcitationState::normalized(amps, format!("eigen:{index}")).map_err(validation)?;
            (format!("eigen:{index}"), Some(s.clone()), embed(&s))
        }
        StateSpec::Multiplet { r, m, p } => {
            let label = MultipletLabel::new(*r, *m, *p).map_err(validation)?;
            let full = multiplet_state(n, &label).map_err(validation)?;
            (
                format!("multiplet:R={r},m={m},p={p}"),
                single_sector(&full),
                Some(full),
            )
        }
        StateSpec::SingletPairs { pairs } => {
            let flat: Vec<(usize, usize)> = pairs.iter().map(|p| (p[0], p[1])).collect();
            let full = singlet_product(&flat, n).map_err(validation)?;
            let name = flat
                .iter()
                .map(|(a, b)| format!("{a}-{b}"))
                .collect::<Vec<_>>()
                .join(",");
            (format!("singlets:{name}"), single_sector(&full), Some(full))
        }
    };
    Ok(NamedState {
        single: single.map(|s| s.with_label(name.clone())),
        name,
        spec: spec.clone(),
        full,
    })
}

/// One (state, engine) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub state: String,
    pub engine: EngineKind,
    pub rate: Option<f64>,
    pub skipped: Option<String>,
    pub closed_form: Option<f64>,
    pub closed_form_name: Option<String>,
    /// Closed-form value fell below zero and was reported as zero.
    pub closed_form_clamped: bool,
    /// `|rate − closed_form| / max(|closed_form|, γ)`.
    pub deviation: Option<f64>,
    pub fit: Option<RateFit>,
    pub norm_drift_per_gamma_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDeviation {
    pub state: String,
    pub engines: [EngineKind; 2],
    pub rates: [f64; 2],
    pub deviation: f64,
    pub tolerance: f64,
    pub mode: &'static str,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub name: String,
    pub quantity: &'static str,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum ProtocolRecord {
    Switch {
        switch_time: f64,
        max_deviation_before: f64,
        rate_before: f64,
        rate_after: f64,
        fitted_rate_after: RateFit,
        expected_rate_after: f64,
    },
    Preparation {
        method: String,
        fidelity: f64,
        success_probability: f64,
        rate: Option<f64>,
    },
    Conditional {
        target: Target,
        eps: f64,
        no_count_probability: f64,
        count_probability: f64,
        eps_squared: f64,
        fidelity: f64,
        thin_medium_warning: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub atoms: usize,
    pub wavelength: f64,
    pub gamma: f64,
    pub area: f64,
    pub lambda_sq_over_area: f64,
    pub dicke_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub header: Header,
    pub scenario: String,
    pub geometry: GeometrySummary,
    pub rates: Vec<RateRow>,
    pub comparisons: Vec<PairDeviation>,
    pub protocols: Vec<ProtocolRecord>,
    pub calibration: Option<Calibration>,
    pub violations: Vec<String>,
    pub passed: bool,
}

/// Results held in memory until written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub trajectories: Vec<Trajectory>,
    pub out_dir: PathBuf,
    pub format: Format,
}

impl Scenario {
    fn gamma(&self) -> f64 {
        self.ensemble.gamma()
    }

    fn closed_form(&self, st: &NamedState) -> (Option<f64>, Option<String>, bool) {
        let ens = &self.ensemble;
        let n = ens.len() as f64;
        let g = self.gamma();
        if ens.is_dicke_limit() {
            let v = match &st.spec {
                StateSpec::Plus => Some(n * g),
                StateSpec::Minus | StateSpec::ThreeBin => Some(0.0),
                StateSpec::Basis { .. } => Some(g),
                StateSpec::Multiplet { r, m, p } => MultipletLabel::new(*r, *m, *p)
                    .ok()
                    .map(|l| crate::dicke::ladder_rate(&l) * g),
                _ => None,
            };
            return (v, v.map(|_| "dicke-ladder".to_string()), false);
        }
        // amplitude-rate closed forms, doubled to population rates
        let raw = match &st.spec {
            StateSpec::Plus => Some((2.0 * rate_plus_closed_form(ens), "plus-closed-form")),
            StateSpec::Minus => Some((2.0 * rate_minus_closed_form(ens), "minus-closed-form")),
            StateSpec::ThreeBin => Some((
                2.0 * rate_three_bin_closed_form(ens),
                "three-bin-closed-form",
            )),
            StateSpec::Basis { .. } => Some((g, "single-atom")),
            _ => None,
        };
        match raw {
            Some((v, name)) => (Some(v.max(0.0)), Some(name.to_string()), v < 0.0),
            None => (None, None, false),
        }
    }

    fn row(&self, st: &NamedState, engine: EngineKind) -> RateRow {
        let (closed_form, closed_form_name, closed_form_clamped) = self.closed_form(st);
        RateRow {
            state: st.name.clone(),
            engine,
            rate: None,
            skipped: None,
            closed_form,
            closed_form_name,
            closed_form_clamped,
            deviation: None,
            fit: None,
            norm_drift_per_gamma_t: None,
        }
    }

    fn ww_span(&self, kernel_rate: f64, grid: &ModeGrid) -> (f64, f64) {
        let g = self.gamma();
        let n = self.ensemble.len() as f64;
        let dt = self
            .config
            .engine
            .dt
            .map(|d| d / g)
            .unwrap_or(MAX_DT_FRACTION / (n * g));
        let t_end = match self.config.engine.t_end {
            Some(t) => t / g,
            None => {
                let natural = if kernel_rate > self.config.engine.subradiant_threshold * g {
                    2.5 / kernel_rate
                } else {
                    1.0 / g
                };
                natural.min(0.9 * grid.recurrence_time())
            }
        };
        (t_end, dt)
    }

    /// Runs engines, checks and protocols.
    pub fn execute(&self) -> Result<Outcome, RunError> {
        let g = self.gamma();
        let n = self.ensemble.len();
        let eng = &self.config.engine;
        let mut rows = Vec::new();
        let mut trajectories = Vec::new();
        let mut violations = Vec::new();

        let mut grid: Option<(ModeGrid, Calibration)> = None;
        if eng.engines.contains(&EngineKind::Ww)
            && n <= MAX_WW_ATOMS
            && self.states.iter().any(|s| s.single.is_some())
        {
            let p = eng.grid;
            grid = Some(
                make_mode_grid(&self.ensemble, p.n_angles, p.n_radial, p.cutoff_multiple)
                    .map_err(RunError::Engine)?,
            );
        }

        for st in &self.states {
            let kernel_rate = match &st.single {
                Some(s) => Some(rate_of(s, &self.kernel).map_err(RunError::Engine)?),
                None => None,
            };
            for &engine in &eng.engines {
                let mut row = self.row(st, engine);
                match engine {
                    EngineKind::Kernel => match kernel_rate {
                        Some(r) => row.rate = Some(r),
                        None => row.skipped = Some("not a single-excitation state".into()),
                    },
                    EngineKind::DickeOracle => {
                        if n > MAX_ATOMS {
                            row.skipped =
                                Some(format!("N = {n} exceeds full-space capacity {MAX_ATOMS}"));
                        } else if !self.ensemble.is_dicke_limit() {
                            row.skipped = Some("geometry is not in the Dicke limit".into());
                        } else if let Some(full) = &st.full {
                            row.rate = Some(dicke_decay_oracle(full, g).map_err(RunError::Engine)?);
                        } else {
                            row.skipped = Some("no full-space representation".into());
                        }
                    }
                    EngineKind::Ww => match (&st.single, &grid, kernel_rate) {
                        _ if n > MAX_WW_ATOMS => {
                            row.skipped = Some(format!(
                                "N = {n} exceeds integrator capacity {MAX_WW_ATOMS}"
                            ))
                        }
                        (Some(s), Some((grid, _)), Some(kr)) => {
                            let (t_end, dt) = self.ww_span(kr, grid);
                            let traj = integrate_ww(&self.ensemble, grid, s, t_end, dt)
                                .map_err(RunError::Engine)?;
                            let proj = traj.projection(s);
                            let fit = fit_decay(&traj.times, &proj, traj.settle_time)
                                .map_err(RunError::Engine)?;
                            let drift = traj.drift_per_gamma_t(g);
                            if drift > eng.norm_tolerance {
                                violations.push(format!(
                                    "{}: integrator norm drift {drift:.3e} per γt exceeds {:.1e}",
                                    st.name, eng.norm_tolerance
                                ));
                            }
                            row.rate = Some(fit.rate);
                            row.fit = Some(fit);
                            row.norm_drift_per_gamma_t = Some(drift);
                            let atoms = traj.atom_population();
                            for (quantity, values) in [
                                ("projection", &proj),
                                ("atom-population", &atoms),
                                ("field-population", &traj.field_population),
                            ] {
                                trajectories.push(Trajectory {
                                    name: format!("ww:{}", st.name),
                                    quantity,
                                    samples: decimate(&traj.times, values),
                                });
                            }
                        }
                        _ => row.skipped = Some("not a single-excitation state".into()),
                    },
                }
                if let (Some(r), Some(cf)) = (row.rate, row.closed_form) {
                    row.deviation = Some((r - cf).abs() / cf.abs().max(g));
                }
                rows.push(row);
            }
        }

        let comparisons = self.compare_rows(&rows);
        for c in comparisons.iter().filter(|c| !c.passed) {
            violations.push(format!(
                "{}: {} vs {} deviation {:.3e} exceeds {:.1e} ({})",
                c.state,
                c.engines[0].name(),
                c.engines[1].name(),
                c.deviation,
                c.tolerance,
                c.mode
            ));
        }

        let mut protocols = Vec::new();
        for p in &self.config.protocol {
            self.run_protocol(p, &mut protocols, &mut trajectories, &mut violations)
                .map_err(RunError::Engine)?;
        }

        let ens = &self.ensemble;
        let summary = Summary {
            header: self.header.clone(),
            scenario: self.name.clone(),
            geometry: GeometrySummary {
                atoms: n,
                wavelength: ens.wavelength(),
                gamma: g,
                area: ens.area(),
                lambda_sq_over_area: ens.lambda_sq_over_area(),
                dicke_limit: ens.is_dicke_limit(),
            },
            rates: rows,
            comparisons,
            protocols,
            calibration: grid.map(|(_, c)| c),
            passed: violations.is_empty(),
            violations,
        };
        Ok(Outcome {
            summary,
            trajectories,
            out_dir: self.config.output.dir.clone(),
            format: self.config.output.format,
        })
    }

    /// Whether `state` is an eigenvector of the kernel with eigenvalue `rate`.
    fn is_kernel_mode(&self, state: &ExcitationState, rate: f64) -> bool {
        let image = self.kernel.apply(state.amplitudes());
        let residual: f64 = image
            .iter()
            .zip(state.amplitudes())
            .map(|(a, b)| (a - b * rate).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual <= EIGEN_TOL * rate.max(self.gamma())
    }

    fn compare_rows(&self, rows: &[RateRow]) -> Vec<PairDeviation> {
        let g = self.gamma();
        let eng = &self.config.engine;
        let mut out = Vec::new();
        for st in &self.states {
            let rate = |e: EngineKind| {
                rows.iter()
                    .find(|r| r.state == st.name && r.engine == e)
                    .and_then(|r| r.rate)
            };
            let k = rate(EngineKind::Kernel);
            if let (Some(k), Some(o)) = (k, rate(EngineKind::DickeOracle)) {
                let dev = (k - o).abs() / k.abs().max(g);
                out.push(PairDeviation {
                    state: st.name.clone(),
                    engines: [EngineKind::Kernel, EngineKind::DickeOracle],
                    rates: [k, o],
                    deviation: dev,
                    tolerance: eng.kernel_tolerance,
                    mode: "relative",
                    passed: dev <= eng.kernel_tolerance,
                });
            }
            if let (Some(k), Some(w)) = (k, rate(EngineKind::Ww)) {
                let thr = eng.subradiant_threshold * g;
                let eigen = st
                    .single
                    .as_ref()
                    .is_some_and(|s| self.is_kernel_mode(s, k));
                let (dev, tol, mode) = if k < thr {
                    (w.max(k) / g, eng.subradiant_threshold, "subradiant-bound")
                } else if !eigen {
                    // a single-exponential fit says nothing about β†Γβ here
                    ((w - k).abs() / k, f64::INFINITY, "reported")
                } else {
                    ((w - k).abs() / k, eng.ww_tolerance, "relative")
                };
                out.push(PairDeviation {
                    state: st.name.clone(),
                    engines: [EngineKind::Kernel, EngineKind::Ww],
                    rates: [k, w],
                    deviation: dev,
                    tolerance: tol,
                    mode,
                    passed: dev <= tol,
                });
            }
        }
        out
    }

    fn run_protocol(
        &self,
        p: &ProtocolSpec,
        records: &mut Vec<ProtocolRecord>,
        trajectories: &mut Vec<Trajectory>,
        violations: &mut Vec<String>,
    ) -> Result<(), Error> {
        let ens = &self.ensemble;
        let n = ens.len();
        let g = self.gamma();
        let mut prep_record = |method: &str,
                               state: &ExcitationState,
                               target: &ExcitationState,
                               prob: f64| {
            let fidelity = state.fidelity(target);
            if fidelity < 1.0 - EXACT_PREP_TOL || (prob - 1.0).abs() > EXACT_PREP_TOL {
                violations.push(format!(
                    "{method}: fidelity {fidelity:.12} and success probability {prob:.12} fall short of exact preparation"
                ));
            }
            records.push(ProtocolRecord::Preparation {
                method: method.to_string(),
                fidelity,
                success_probability: prob,
                rate: rate_of(state, &self.kernel).ok(),
            });
        };
        match p {
            ProtocolSpec::TimedPlus => {
                let out = prepare_timed_plus(ens)?;
                prep_record(
                    "timed-plus",
                    &out.state,
                    &plus_state(ens),
                    out.success_probability,
                );
            }
            ProtocolSpec::TimedMinus => {
                let out = prepare_timed_minus(ens)?;
                let target = minus_state(ens, &halves(ens)?)?;
                prep_record("timed-minus", &out.state, &target, out.success_probability);
            }
            ProtocolSpec::Network { elements, targets } => {
                let net = OpticalNetwork::new(elements.clone(), targets.clone())?;
                let phases = ens.carrier_phases();
                let net = net.with_leg_phases(targets.iter().map(|&j| phases[j]).collect())?;
                let out = prepare_with_network(ens, &net, "network")?;
                records.push(ProtocolRecord::Preparation {
                    method: "network".into(),
                    fidelity: out.state.fidelity(&plus_state(ens)),
                    success_probability: out.success_probability,
                    rate: rate_of(&out.state, &self.kernel).ok(),
                });
            }
            ProtocolSpec::SingletPairs { pairs } => {
                let flat: Vec<(usize, usize)> = pairs.iter().map(|p| (p[0], p[1])).collect();
                let mut state = FullState::ground(n)?;
                let mut prob = 1.0;
                for &(i, j) in &flat {
                    let (next, p) = prepare_singlet_on(&state, i, j)?;
                    state = next;
                    prob *= p;
                }
                let target = singlet_product(&flat, n)?;
                let fidelity = state.fidelity(&target);
                if fidelity < 1.0 - EXACT_PREP_TOL || (prob - 1.0).abs() > EXACT_PREP_TOL {
                    violations.push(format!(
                        "singlet-pairs: fidelity {fidelity:.12}, probability {prob:.12}"
                    ));
                }
                let rate = if ens.is_dicke_limit() {
                    Some(dicke_decay_oracle(&state, g)?)
                } else {
                    None
                };
                records.push(ProtocolRecord::Preparation {
                    method: "singlet-pairs".into(),
                    fidelity,
                    success_probability: prob,
                    rate,
                });
            }
            ProtocolSpec::Conditional { target, eps } => {
                for &e in eps {
                    let out = conditional_prepare(ens, *target, e)?;
                    if e > 0.0 && out.fidelity < 1.0 - e * e {
                        violations.push(format!(
                            "conditional eps={e}: fidelity {:.6} below 1 − ε²",
                            out.fidelity
                        ));
                    }
                    records.push(ProtocolRecord::Conditional {
                        target: *target,
                        eps: e,
                        no_count_probability: out.no_count_probability,
                        count_probability: out.count_probability,
                        eps_squared: e * e,
                        fidelity: out.fidelity,
                        thin_medium_warning: out.thin_medium_warning,
                    });
                }
            }
            ProtocolSpec::Switch {
                switch_time,
                t_end,
                samples,
                bin,
            } => {
                let (ts, te) = (switch_time / g, t_end / g);
                let bin: Vec<usize> = bin.clone().unwrap_or_else(|| (n / 2..n).collect());
                let start = prepare_timed_minus(ens)?.state;
                let n_before = ((*samples as f64) * ts / te).round().max(2.0) as usize;
                let n_after = samples.saturating_sub(n_before).max(3) + 1;
                let before = evolve_amplitudes(&start, &self.kernel, &uniform_grid(ts, n_before))?;
                let last = before.times.len() - 1;
                let remaining = before.survival[last];
                let switched_unit = switch_2pi(&before.state_at(last)?, &bin)?;
                let after = evolve_amplitudes(
                    &switched_unit,
                    &self.kernel,
                    &uniform_grid(te - ts, n_after),
                )?;

                let mut times = before.times.clone();
                let mut pop = before.survival.clone();
                for (t, s) in after.times.iter().zip(&after.survival).skip(1) {
                    times.push(ts + t);
                    pop.push(s * remaining);
                }
                let p0 = before.survival[0];
                let max_dev = before
                    .survival
                    .iter()
                    .map(|p| (p - p0).abs())
                    .fold(0.0, f64::max);
                let fitted = fit_decay(&after.times, &after.survival, 0.0)?;
                let rate_before = rate_of(&start, &self.kernel)?;
                let rate_after = rate_of(&switched_unit, &self.kernel)?;
                if ens.is_dicke_limit() {
                    if max_dev > 1e-9 {
                        violations.push(format!(
                            "switch: population moved by {max_dev:.3e} before the switch"
                        ));
                    }
                    let expect = n as f64 * g;
                    if (rate_after - expect).abs() > 1e-10 * expect {
                        violations.push(format!(
                            "switch: rate after switch {rate_after} differs from Nγ = {expect}"
                        ));
                    }
                }
                records.push(ProtocolRecord::Switch {
                    switch_time: ts,
                    max_deviation_before: max_dev,
                    rate_before,
                    rate_after,
                    fitted_rate_after: fitted,
                    expected_rate_after: rate_after,
                });
                trajectories.push(Trajectory {
                    name: "switch".into(),
                    quantity: "excited-population",
                    samples: decimate(&times, &pop),
                });
            }
        }
        Ok(())
    }
}

fn decimate(times: &[f64], values: &[f64]) -> Vec<TrajectorySample> {
    let len = times.len();
    let stride = len.div_ceil(TRAJECTORY_ROWS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx.into_iter()
        .map(|i| TrajectorySample {
            t: times[i],
            value: values[i],
        })
        .collect()
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

impl Outcome {
    fn csv_header(&self, out: &mut String) {
        let h = &self.summary.header;
        let _ = writeln!(out, "# tool={} version={}", h.tool, h.version);
        let _ = writeln!(out, "# config_sha256={}", h.config_sha256);
    }

    /// File names and contents, in write order.
    pub fn render(&self) -> Vec<(String, String)> {
        let mut files = Vec::new();
        let summary =
            serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n";
        files.push(("summary.json".to_string(), summary));

        match self.format {
            Format::Csv => {
                let mut rates = String::new();
                self.csv_header(&mut rates);
                rates.push_str("state,engine,rate,closed_form,deviation,skipped\n");
                for r in &self.summary.rates {
                    let _ = writeln!(
                        rates,
                        "{},{},{},{},{},{}",
                        r.state.replace(',', ";"),
                        r.engine.name(),
                        fmt_opt(r.rate),
                        fmt_opt(r.closed_form),
                        fmt_opt(r.deviation),
                        r.skipped.clone().unwrap_or_default().replace(',', ";")
                    );
                }
                files.push(("rates.csv".to_string(), rates));
                if !self.trajectories.is_empty() {
                    let mut t = String::new();
                    self.csv_header(&mut t);
                    t.push_str("trajectory,quantity,t,value\n");
                    for tr in &self.trajectories {
                        for s in &tr.samples {
                            let _ = writeln!(
                                t,
                                "{},{},{},{}",
                                tr.name.replace(',', ";"),
                                tr.quantity,
                                fmt_num(s.t),
                                fmt_num(s.value)
                            );
                        }
                    }
                    files.push(("trajectories.csv".to_string(), t));
                }
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Wrapped<'a, T: Serialize> {
                    header: &'a Header,
                    data: T,
                }
                let h = &self.summary.header;
                let rates = serde_json::to_string_pretty(&Wrapped {
                    header: h,
                    data: &self.summary.rates,
                })
                .expect("rates serialize");
                files.push(("rates.json".to_string(), rates + "\n"));
                if !self.trajectories.is_empty() {
                    let t = serde_json::to_string_pretty(&Wrapped {
                        header: h,
                        data: &self.trajectories,
                    })
                    .expect("trajectories serialize");
                    files.push(("trajectories.json".to_string(), t + "\n"));
                }
            }
        }
        if let Some(cal) = &self.summary.calibration {
            #[derive(Serialize)]
            struct Cal<'a> {
                header: &'a Header,
                calibration: &'a Calibration,
            }
            let text = serde_json::to_string_pretty(&Cal {
                header: &self.summary.header,
                calibration: cal,
            })
            .expect("calibration serializes");
            files.push(("grid_calibration.json".to_string(), text + "\n"));
        }
        files
    }

    /// Renders every file first, then writes them under `out_dir`.
    pub fn write(&self) -> Result<Vec<PathBuf>, RunError> {
        let files = self.render();
        std::fs::create_dir_all(&self.out_dir).map_err(RunError::Io)?;
        let mut paths = Vec::new();
        for (name, text) in files {
            let path = self.out_dir.join(name);
            std::fs::write(&path, text).map_err(RunError::Io)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Rates of every state under every engine, with skips and pairwise checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub header: Header,
    pub scenario: String,
    pub states: Vec<CompareEntry>,
    pub comparisons: Vec<PairDeviation>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareEntry {
    pub state: String,
    pub kernel: Option<f64>,
    pub ww: Option<f64>,
    pub dicke_oracle: Option<f64>,
    pub skipped: Vec<String>,
}

impl CompareReport {
    pub fn from_summary(summary: &Summary) -> Self {
        let mut states: Vec<CompareEntry> = Vec::new();
        for r in &summary.rates {
            let pos = match states.iter().position(|e| e.state == r.state) {
                Some(p) => p,
                None => {
                    states.push(CompareEntry {
                        state: r.state.clone(),
                        kernel: None,
                        ww: None,
                        dicke_oracle: None,
                        skipped: Vec::new(),
                    });
                    states.len() - 1
                }
            };
            let entry = &mut states[pos];
            match r.engine {
                EngineKind::Kernel => entry.kernel = r.rate,
                EngineKind::Ww => entry.ww = r.rate,
                EngineKind::DickeOracle => entry.dicke_oracle = r.rate,
            }
            if let Some(s) = &r.skipped {
                entry.skipped.push(format!("{}: {s}", r.engine.name()));
            }
        }
        Self {
            header: summary.header.clone(),
            scenario: summary.scenario.clone(),
            states,
            comparisons: summary.comparisons.clone(),
            passed: summary.passed,
        }
    }
}

/// Runs all three engines on the scenario's states.
pub fn compare_engines(
    default_name: &str,
    text: &str,
    overrides: &Overrides,
) -> Result<(Outcome, CompareReport), RunError> {
    let mut o = overrides.clone();
    o.engines = Some(EngineKind::ALL.to_vec());
    let scenario = prepare(default_name, text, &o)?;
    let outcome = scenario.execute()?;
    let report = CompareReport::from_summary(&outcome.summary);
    Ok((outcome, report))
}

/// `prepare` followed by `execute`.
pub fn run_scenario(
    default_name: &str,
    text: &str,
    overrides: &Overrides,
) -> Result<Outcome, RunError> {
    prepare(default_name, text, overrides)?.execute()
}
