//! Command implementations behind the `chromophore-gate` binary.
//!
//! Every command is a pure function of a [`RunConfig`] that returns its
//! output files as strings; nothing touches the filesystem until the whole
//! command has succeeded, so a failing run leaves no partial output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    self, feasibility_from, one_pass_sequence, run_protocol_with, single_pass_sequence,
    two_pass_sequence, BranchModel, DecayRates, TwoPassOptions, MUCH_LESS_RATIO,
};
use crate::effective::{coupling_analytic, ExcitedSpectrum};
use crate::entanglement::{self, BlockEvolution};
use crate::error::{Error, Result};
use crate::hamiltonian::SpinParams;
use crate::kinetics::{
    self, add_noise, fit_traces, simulate_trace, sublevel_mixing, TraceData, TraceKind,
    TraceSetup, Transition, TripletKinetics,
};
use crate::linalg::{c, CMatrix};
use crate::spincore::{DensityMatrix, Sublevel, DOWN_UP, UP_DOWN};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Couplings,
    EpowerCurve,
    AsymmetryMap,
    ProtocolSweep,
    KineticsSim,
    KineticsFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Couplings => "couplings",
            Command::EpowerCurve => "epower-curve",
            Command::AsymmetryMap => "asymmetry-map",
            Command::ProtocolSweep => "protocol-sweep",
            Command::KineticsSim => "kinetics-sim",
            Command::KineticsFit => "kinetics-fit",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub spin: SpinParams,
    pub rates: RatesConfig,
    pub protocol: ProtocolConfig,
    pub sweep: SweepConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
    pub epower: EpowerConfig,
    pub map: MapConfig,
    pub kinetics: KineticsConfig,
}

/// Decay rates either as lifetimes or derived from the triplet kinetics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesConfig {
    /// `(τ₊, τ₀, τ₋)` in ms
    pub lifetimes_ms: Option<[f64; 3]>,
    pub kinetics: Option<TripletKinetics>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            lifetimes_ms: Some([0.57, 0.02, 0.57]),
            kinetics: None,
        }
    }
}

impl RatesConfig {
    pub fn resolve(&self) -> Result<DecayRates> {
        match (self.lifetimes_ms, &self.kinetics) {
            (Some(_), Some(_)) => Err(Error::Config(
                "rates: give either lifetimes_ms or kinetics, not both".into(),
            )),
            (Some([p, z, m]), None) => DecayRates::from_lifetimes_ms(p, z, m),
            (None, Some(k)) => {
                let mix = sublevel_mixing(k)?;
                Ok(DecayRates {
                    k_plus: mix.rates[0],
                    k_zero: mix.rates[1],
                    k_minus: mix.rates[2],
                })
            }
            (None, None) => Err(Error::Config("rates: nothing given".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    DownUp,
    UpDown,
    UpUp,
    DownDown,
}

/// Real and imaginary parts of an explicit 4×4 density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub re: [[f64; 4]; 4],
    #[serde(default)]
    pub im: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(NamedState),
    Matrix(Box<MatrixConfig>),
}

impl InitialState {
    pub fn density(&self) -> Result<DensityMatrix> {
        let rho = match self {
            InitialState::Named(name) => {
                let index = match name {
                    NamedState::UpUp => 0,
                    NamedState::UpDown => UP_DOWN,
                    NamedState::DownUp => DOWN_UP,
                    NamedState::DownDown => 3,
                };
                let mut rho = CMatrix::zeros(4, 4);
                rho[(index, index)] = c(1.0);
                rho
            }
            InitialState::Matrix(m) => {
                CMatrix::from_fn(4, 4, |i, j| num_complex::Complex64::new(m.re[i][j], m.im[i][j]))
            }
        };
        entanglement::check_density(&rho, 1e-9)
            .map_err(|e| Error::Config(format!("protocol.initial_state: {e}")))?;
        Ok(rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// 1 gates only T₊; 2 gates T₊ then T₋.
    pub passes: u8,
    pub initial_state: InitialState,
    /// `(p₊, p₀, p₋)` of the laser excitation.
    pub populations: [f64; 3],
    /// Wait between passes in units of the T₀ lifetime.
    pub inter_wait_lifetimes: f64,
    /// Odd multiple of the T₋ quarter-swap time for the second pass.
    pub second_pass_multiple: Option<u32>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            passes: 2,
            initial_state: InitialState::Named(NamedState::DownUp),
            populations: [0.49, 0.02, 0.49],
            inter_wait_lifetimes: dynamics::INTER_PASS_LIFETIMES,
            second_pass_multiple: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Only the symmetric hyperfine constant `A` can be swept.
    pub parameter: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            parameter: "A".into(),
            min: 0.25,
            max: 50.0,
            points: 25,
            spacing: Spacing::Log,
        }
    }
}

impl SweepConfig {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.parameter != "A" {
            return Err(Error::Config(format!(
                "sweep.parameter: only \"A\" is supported, got {:?}",
                self.parameter
            )));
        }
        if self.points < 2 {
            return Err(Error::Config("sweep.points must be ≥ 2".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max && self.min >= 0.0) {
            return Err(Error::Config("sweep needs finite 0 ≤ min < max".into()));
        }
        let n = self.points - 1;
        Ok(match self.spacing {
            Spacing::Linear => (0..=n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / n as f64)
                .collect(),
            Spacing::Log => {
                if self.min <= 0.0 {
                    return Err(Error::Config("log sweep needs min > 0".into()));
                }
                kinetics::log_times(self.min, self.max, self.points)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            prefix: "chromophore-gate".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpowerConfig {
    pub points: usize,
    /// Length of the curve in periods of the T₊ entangling power.
    pub periods: f64,
}

impl Default for EpowerConfig {
    fn default() -> Self {
        Self {
            points: 500,
            periods: 1.0,
        }
    }
}

/// Which sign of `A′ − A` a map cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapOrientation {
    /// The larger of the two.
    Best,
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub size: usize,
    pub delta_max: f64,
    /// Time grid of each cell's maximisation.
    pub grid: usize,
    /// Defaults to `2/|a₋|` of the symmetric molecule.
    pub t_max_us: Option<f64>,
    pub orientation: MapOrientation,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            size: 21,
            delta_max: 1.0,
            grid: 800,
            t_max_us: None,
            orientation: MapOrientation::Best,
        }
    }
}

/// One synthetic trace: a [`TraceSetup`] with log-spaced delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub kind: TraceKind,
    pub transition: Transition,
    #[serde(default)]
    pub inversion_delay_us: Option<f64>,
    pub field_mhz: f64,
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: f64,
    #[serde(default = "default_t_start")]
    pub t_start_us: f64,
    #[serde(default = "default_t_end")]
    pub t_end_us: f64,
    #[serde(default = "default_trace_points")]
    pub points: usize,
}

fn default_t_start() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    2000.0
}
fn default_trace_points() -> usize {
    100
}

impl TraceConfig {
    fn new(kind: TraceKind, theta_deg: f64) -> Self {
        Self {
            kind,
            transition: Transition::PlusZero,
            inversion_delay_us: (kind == TraceKind::InversionRecovery).then_some(20.0),
            field_mhz: 9600.0,
            theta_deg,
            phi_deg: 0.0,
            t_start_us: default_t_start(),
            t_end_us: default_t_end(),
            points: default_trace_points(),
        }
    }

    pub fn setup(&self) -> Result<TraceSetup> {
        if !(self.t_start_us > 0.0 && self.t_end_us > self.t_start_us && self.points >= 2) {
            return Err(Error::Config(
                "kinetics.traces: need 0 < t_start_us < t_end_us and points ≥ 2".into(),
            ));
        }
        Ok(TraceSetup {
            kind: self.kind,
            transition: self.transition,
            inversion_delay_us: self.inversion_delay_us,
            times: kinetics::log_times(self.t_start_us, self.t_end_us, self.points),
            field_mhz: self.field_mhz,
            theta_deg: self.theta_deg,
            phi_deg: self.phi_deg,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticsConfig {
    /// Parameters that generate synthetic traces.
    pub truth: TripletKinetics,
    /// Starting point of the fit.
    pub initial: TripletKinetics,
    pub noise_sigma: f64,
    pub traces: Vec<TraceConfig>,
    /// Trace file read by `kinetics-fit`.
    pub input_csv: Option<PathBuf>,
}

impl Default for KineticsConfig {
    fn default() -> Self {
        let truth = TripletKinetics::reference();
        Self {
            truth,
            initial: TripletKinetics {
                p_x: 0.35,
                p_y: 0.45,
                p_z: 0.20,
                tau_x_ms: 0.40,
                tau_y_ms: 0.70,
                tau_z_ms: 0.03,
                ..truth
            },
            noise_sigma: 0.01,
            traces: vec![
                TraceConfig::new(TraceKind::FlashDelay, 0.0),
                TraceConfig::new(TraceKind::InversionRecovery, 0.0),
                TraceConfig::new(TraceKind::FlashDelay, 90.0),
                TraceConfig::new(TraceKind::InversionRecovery, 90.0),
            ],
            input_csv: None,
        }
    }
}

/// Parse a strict JSON configuration. `None` gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })
}

/// Short SHA-256 of the configuration, ignoring the output prefix.
pub fn config_hash(config: &RunConfig) -> String {
    let mut hashed = config.clone();
    hashed.output = OutputConfig::default();
    let json = serde_json::to_string(&hashed).expect("config serialises");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// Suffix appended to the output prefix, e.g. `couplings.csv`.
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    /// Human-readable report for stdout.
    pub summary: String,
    pub artifacts: Vec<Artifact>,
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let record: Vec<String> = fields.into_iter().collect();
        self.writer.write_record(&record).expect("in-memory write");
    }

    fn finish(self, name: &str, hash: &str) -> Artifact {
        let body = String::from_utf8(self.writer.into_inner().expect("in-memory flush"))
            .expect("csv is UTF-8");
        Artifact {
            name: name.into(),
            contents: format!("# config_hash={hash} version={VERSION}\n{body}"),
        }
    }
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e6)`.
fn num(x: f64) -> String {
    let m = x.abs();
    if m == 0.0 || (1e-4..1e6).contains(&m) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn json_artifact(name: &str, value: &impl Serialize) -> Artifact {
    let mut contents = serde_json::to_string_pretty(value).expect("report serialises");
    contents.push('\n');
    Artifact {
        name: name.into(),
        contents,
    }
}

/// Run one command inside a pool of `workers` threads (all cores when
/// `None`).
pub fn run(command: Command, config: &RunConfig, workers: Option<usize>) -> Result<CommandOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Couplings => cmd_couplings(config),
        Command::EpowerCurve => cmd_epower_curve(config),
        Command::AsymmetryMap => cmd_asymmetry_map(config),
        Command::ProtocolSweep => cmd_protocol_sweep(config),
        Command::KineticsSim => cmd_kinetics_sim(config),
        Command::KineticsFit => cmd_kinetics_fit(config),
    })
}

/// Write every artifact as `<prefix>_<name>`.
pub fn write_artifacts(prefix: &str, output: &CommandOutput) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for artifact in &output.artifacts {
        let path = PathBuf::from(format!("{prefix}_{}", artifact.name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, &artifact.contents)?;
        written.push(path);
    }
    Ok(written)
}

/// Exit status for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(error: &Error) -> i32 {
    if error.is_numerical() {
        return 3;
    }
    match error {
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn validated_spin(config: &RunConfig) -> Result<SpinParams> {
    config
        .spin
        .validate()
        .map_err(|e| Error::Config(format!("spin: {e}")))?;
    Ok(config.spin)
}

#[derive(Serialize)]
struct CouplingsReport {
    perturbative_regime: bool,
    ratio_plus_zero_analytic: Option<f64>,
    ratio_plus_zero_numeric: f64,
    feasibility: dynamics::FeasibilityReport,
    gate_entangling_power: Option<GatePower>,
}

#[derive(Serialize)]
struct GatePower {
    time_us: f64,
    exact: f64,
    monte_carlo: f64,
    stderr: f64,
}

pub fn cmd_couplings(config: &RunConfig) -> Result<CommandOutput> {
    let params = validated_spin(config)?;
    let rates = config.rates.resolve()?;
    let spectrum = ExcitedSpectrum::new(&params);
    let couplings = Sublevel::ALL
        .iter()
        .map(|&s| spectrum.coupling(&params, s))
        .collect::<Result<Vec<_>>>()?;
    let (plus, zero) = (couplings[0], couplings[1]);
    let hash = config_hash(config);

    let mut csv = Csv::new(&[
        "sublevel",
        "a_analytic_MHz",
        "a_numeric_MHz",
        "offdiag_MHz",
        "detuning_MHz",
        "effective_detuning_MHz",
        "quarter_swap_us",
    ]);
    let mut table = String::from("sublevel  a_analytic(MHz)  a_numeric(MHz)  quarter swap (µs)\n");
    for c in &couplings {
        let analytic = coupling_analytic(&params, c.sublevel).ok();
        let gate = dynamics::quarter_swap_time(c.offdiag);
        csv.row([
            c.sublevel.symbol().to_string(),
            analytic.map(num).unwrap_or_default(),
            num(c.a_numeric),
            num(c.offdiag),
            num(c.detuning),
            num(c.effective_detuning),
            num(gate),
        ]);
        let _ = writeln!(
            table,
            "{:<8}  {:>15}  {:>14.6e}  {:>17.1}",
            c.sublevel.symbol(),
            analytic.map(|a| format!("{a:.6e}")).unwrap_or_else(|| "n/a".into()),
            c.a_numeric,
            gate
        );
    }
    let analytic_ratio = match (
        coupling_analytic(&params, Sublevel::Plus),
        coupling_analytic(&params, Sublevel::Zero),
    ) {
        (Ok(p), Ok(z)) if z != 0.0 => Some((p / z).abs()),
        _ => None,
    };
    let numeric_ratio = (plus.a_numeric / zero.a_numeric).abs();
    let feasibility = feasibility_from(plus.a_numeric, zero.a_numeric, rates.k_plus, MUCH_LESS_RATIO);

    let gate_entangling_power = if feasibility.gate_within_lifetime {
        let t = feasibility.gate_time_us;
        let u = BlockEvolution::new(&spectrum).propagator(t);
        let block = dynamics::sublevel_block(&u, Sublevel::Plus, dynamics::LEAK_TOL)?
            .accept(dynamics::LEAK_TOL)?;
        let mc = entanglement::entangling_power_mc(&block, config.mc.samples, config.mc.seed)?;
        Some(GatePower {
            time_us: t,
            exact: entanglement::entangling_power_exact(&block)?,
            monte_carlo: mc.entangling_power,
            stderr: mc.stderr,
        })
    } else {
        None
    };

    let _ = writeln!(
        table,
        "|a+/a0| closed form: {}   numeric: {numeric_ratio:.2}",
        analytic_ratio.map(|r| format!("{r:.2}")).unwrap_or_else(|| "n/a".into())
    );
    let _ = writeln!(
        table,
        "gate {:.1} µs, lifetime {:.1} µs, T0 swap {:.1} µs: gate<τ {} ; τ≪T0 swap {} (×{:.1})",
        feasibility.gate_time_us,
        feasibility.lifetime_us,
        feasibility.t0_swap_time_us,
        feasibility.gate_within_lifetime,
        feasibility.lifetime_well_below_t0_swap,
        feasibility.coherence_margin
    );

    let perturbative = params.perturbative_regime();
    if !perturbative {
        table.push_str("warning: outside the perturbative regime, couplings are not meaningful\n");
    }
    let report = CouplingsReport {
        perturbative_regime: perturbative,
        ratio_plus_zero_analytic: analytic_ratio,
        ratio_plus_zero_numeric: numeric_ratio,
        feasibility,
        gate_entangling_power,
    };
    Ok(CommandOutput {
        summary: table,
        artifacts: vec![
            csv.finish("couplings.csv", &hash),
            json_artifact("feasibility.json", &report),
        ],
    })
}

pub fn cmd_epower_curve(config: &RunConfig) -> Result<CommandOutput> {
    let params = validated_spin(config)?;
    let spectrum = ExcitedSpectrum::new(&params);
    let a_plus = spectrum.coupling(&params, Sublevel::Plus)?.a_numeric;
    if a_plus == 0.0 {
        return Err(Error::Config("epower-curve: the T₊ coupling vanishes".into()));
    }
    let cfg = &config.epower;
    if cfg.points < 2 || !(cfg.periods > 0.0) {
        return Err(Error::Config("epower: need points ≥ 2 and periods > 0".into()));
    }
    let span = cfg.periods / (2.0 * a_plus);
    let evolution = BlockEvolution::new(&spectrum);
    let rows: Vec<Result<[f64; 4]>> = (0..cfg.points)
        .into_par_iter()
        .map(|i| {
            let t = span * i as f64 / (cfg.points - 1) as f64;
            Ok([
                t,
                entanglement::entangling_power_closed(a_plus, t),
                evolution.entangling_power(Sublevel::Plus, t)?,
                evolution.entangling_power(Sublevel::Zero, t)?,
            ])
        })
        .collect();
    let mut csv = Csv::new(&["t_us", "e_plus_closed", "e_plus_exact", "e_zero_exact"]);
    let (mut max_plus, mut max_zero) = (0.0f64, 0.0f64);
    for row in rows {
        let row = row?;
        max_plus = max_plus.max(row[2]);
        max_zero = max_zero.max(row[3]);
        csv.row(row.map(num));
    }
    Ok(CommandOutput {
        summary: format!(
            "{} points over {span:.1} µs: max e+ = {max_plus:.6}, max e0 = {max_zero:.6}\n",
            cfg.points
        ),
        artifacts: vec![csv.finish("epower_curve.csv", &config_hash(config))],
    })
}

/// Maximal T₋ entangling power of one map cell and its argmax.
pub fn map_cell(
    params: &SpinParams,
    delta1: f64,
    delta2: f64,
    orientation: MapOrientation,
    t_max: f64,
    grid: usize,
) -> Result<(f64, f64)> {
    let signs: &[f64] = match orientation {
        MapOrientation::Best => &[1.0, -1.0],
        MapOrientation::Plus => &[1.0],
        MapOrientation::Minus => &[-1.0],
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &sign in signs {
        let cell = params.with_asymmetry(delta1, delta2, sign);
        let found =
            entanglement::max_entangling_power_grid(&cell, Sublevel::Minus, t_max, grid)?;
        if found.0 > best.0 {
            best = found;
        }
    }
    Ok(best)
}

/// Default maximisation window of the map: `2/|a₋|` of the symmetric molecule.
pub fn default_map_window(params: &SpinParams) -> Result<f64> {
    let symmetric = SpinParams {
        omega_nprime: params.omega_n,
        a_prime: params.a,
        ..*params
    };
    let a = crate::effective::coupling_numeric(&symmetric, Sublevel::Minus)?.a_numeric;
    if a == 0.0 {
        return Err(Error::Config("asymmetry-map: the T₋ coupling vanishes".into()));
    }
    Ok(2.0 / a)
}

pub fn cmd_asymmetry_map(config: &RunConfig) -> Result<CommandOutput> {
    let params = validated_spin(config)?;
    let cfg = &config.map;
    if cfg.size < 2 || !(cfg.delta_max > 0.0) {
        return Err(Error::Config("map: need size ≥ 2 and delta_max > 0".into()));
    }
    let t_max = match cfg.t_max_us {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::Config(format!("map.t_max_us must be > 0, got {t}"))),
        None => default_map_window(&params)?,
    };
    let step = cfg.delta_max / (cfg.size - 1) as f64;
    let cells: Vec<(f64, f64)> = (0..cfg.size)
        .flat_map(|i| (0..cfg.size).map(move |j| (i as f64 * step, j as f64 * step)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|&(d1, d2)| map_cell(&params, d1, d2, cfg.orientation, t_max, cfg.grid))
        .collect();
    let mut csv = Csv::new(&["delta1", "delta2", "m_minus", "t_star_us"]);
    let mut peak = 0.0f64;
    for (&(d1, d2), result) in cells.iter().zip(results) {
        let (m, t) = result?;
        peak = peak.max(m);
        csv.row([num(d1), num(d2), num(m), num(t)]);
    }
    Ok(CommandOutput {
        summary: format!(
            "{0}×{0} cells, window {t_max:.1} µs, largest m₋ = {peak:.6}\n",
            cfg.size
        ),
        artifacts: vec![csv.finish("asymmetry_map.csv", &config_hash(config))],
    })
}

/// EoF of the single-pass polarised protocol and of the configured
/// experimental protocol at one hyperfine constant.
pub fn protocol_point(
    config: &RunConfig,
    rates: &DecayRates,
    hyperfine: f64,
) -> Result<(f64, f64, Vec<String>)> {
    let params = config.spin.with_hyperfine(hyperfine);
    let model = BranchModel::new(&params)?;
    let spectrum = ExcitedSpectrum::new(&params);
    let a_plus = spectrum.coupling(&params, Sublevel::Plus)?.offdiag;
    let a_minus = spectrum.coupling(&params, Sublevel::Minus)?.offdiag;
    let initial = config.protocol.initial_state.density()?;
    let proto = &config.protocol;

    let polarized = run_protocol_with(&model, rates, &single_pass_sequence(initial.clone(), a_plus, false))?;
    let sequence = match proto.passes {
        1 => one_pass_sequence(initial, proto.populations, a_plus),
        2 => {
            let options = TwoPassOptions {
                inter_wait_us: (rates.k_zero > 0.0).then(|| proto.inter_wait_lifetimes / rates.k_zero),
                multiple: proto.second_pass_multiple,
            };
            two_pass_sequence(initial, proto.populations, a_plus, a_minus, rates, options)?.0
        }
        n => return Err(Error::Config(format!("protocol.passes must be 1 or 2, got {n}"))),
    };
    let experimental = run_protocol_with(&model, rates, &sequence)?;
    let warnings = [&polarized, &experimental]
        .iter()
        .filter_map(|o| o.warning.clone())
        .map(|w| format!("A = {hyperfine} MHz: {w}"))
        .collect();
    Ok((
        entanglement::entanglement_of_formation(&polarized.rho)?,
        entanglement::entanglement_of_formation(&experimental.rho)?,
        warnings,
    ))
}

pub fn cmd_protocol_sweep(config: &RunConfig) -> Result<CommandOutput> {
    validated_spin(config)?;
    let rates = config.rates.resolve()?;
    config.protocol.initial_state.density()?;
    if config.protocol.populations.iter().any(|p| !(*p >= 0.0))
        || config.protocol.populations.iter().sum::<f64>() > 1.0 + 1e-12
    {
        return Err(Error::Config("protocol.populations must be ≥ 0 with sum ≤ 1".into()));
    }
    let values = config.sweep.values()?;
    let results: Vec<Result<(f64, f64, Vec<String>)>> = values
        .par_iter()
        .map(|&a| protocol_point(config, &rates, a))
        .collect();
    let mut csv = Csv::new(&["A_MHz", "eof_polarized", "eof_experimental"]);
    let mut summary = String::new();
    for (&a, result) in values.iter().zip(results) {
        let (pol, exp, warnings) = result?;
        csv.row([num(a), num(pol), num(exp)]);
        let _ = writeln!(summary, "A = {a:>8.4} MHz  EoF polarised {pol:.4}  experimental {exp:.4}");
        for w in warnings {
            let _ = writeln!(summary, "warning: {w}");
        }
    }
    Ok(CommandOutput {
        summary,
        artifacts: vec![csv.finish("protocol_sweep.csv", &config_hash(config))],
    })
}

const TRACE_HEADER: [&str; 8] = [
    "kind",
    "transition",
    "t_us",
    "amplitude",
    "field_MHz",
    "theta_deg",
    "phi_deg",
    "t_inv_us",
];

fn label<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn trace_fields(setup: &TraceSetup, t: f64, amplitude: f64) -> [String; 8] {
    [
        label(&setup.kind),
        label(&setup.transition),
        num(t),
        num(amplitude),
        num(setup.field_mhz),
        num(setup.theta_deg),
        num(setup.phi_deg),
        setup.inversion_delay_us.map(num).unwrap_or_default(),
    ]
}

#[derive(Serialize)]
struct SimReport<'a> {
    truth: &'a TripletKinetics,
    noise_sigma: f64,
    seed: u64,
    traces: Vec<SimTrace>,
}

#[derive(Serialize)]
struct SimTrace {
    setup: String,
    mixing: kinetics::SublevelMixing,
}

pub fn cmd_kinetics_sim(config: &RunConfig) -> Result<CommandOutput> {
    let cfg = &config.kinetics;
    cfg.truth
        .validate()
        .map_err(|e| Error::Config(format!("kinetics.truth: {e}")))?;
    if !(cfg.noise_sigma >= 0.0) {
        return Err(Error::Config("kinetics.noise_sigma must be ≥ 0".into()));
    }
    let mut csv = Csv::new(&TRACE_HEADER);
    let mut sims = Vec::new();
    for (i, trace) in cfg.traces.iter().enumerate() {
        let setup = trace.setup()?;
        let mut data = simulate_trace(&cfg.truth, &setup)?;
        if cfg.noise_sigma > 0.0 {
            data = add_noise(data, cfg.noise_sigma, config.mc.seed.wrapping_add(i as u64))?;
        }
        for (&t, &a) in data.setup.times.iter().zip(&data.amplitudes) {
            csv.row(trace_fields(&data.setup, t, a));
        }
        sims.push(SimTrace {
            setup: format!(
                "{} {} θ={}° φ={}°",
                label(&setup.kind),
                label(&setup.transition),
                setup.theta_deg,
                setup.phi_deg
            ),
            mixing: sublevel_mixing(&cfg.truth.with_field(
                setup.field_mhz,
                setup.theta_deg,
                setup.phi_deg,
            ))?,
        });
    }
    let report = SimReport {
        truth: &cfg.truth,
        noise_sigma: cfg.noise_sigma,
        seed: config.mc.seed,
        traces: sims,
    };
    Ok(CommandOutput {
        summary: format!("{} traces simulated\n", cfg.traces.len()),
        artifacts: vec![
            csv.finish("kinetics_traces.csv", &config_hash(config)),
            json_artifact("kinetics_truth.json", &report),
        ],
    })
}

#[derive(Deserialize)]
struct TraceRow {
    kind: TraceKind,
    transition: Transition,
    t_us: f64,
    amplitude: f64,
    #[serde(rename = "field_MHz")]
    field_mhz: f64,
    theta_deg: f64,
    phi_deg: f64,
    t_inv_us: Option<f64>,
}

/// Group CSV rows into traces, in order of first appearance.
pub fn read_traces(text: &str) -> Result<Vec<TraceData>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut traces: Vec<TraceData> = Vec::new();
    for (line, row) in reader.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("trace row {}: {e}", line + 1)))?;
        let matches = |t: &TraceData| {
            let s = &t.setup;
            s.kind == row.kind
                && s.transition == row.transition
                && s.field_mhz == row.field_mhz
                && s.theta_deg == row.theta_deg
                && s.phi_deg == row.phi_deg
                && s.inversion_delay_us == row.t_inv_us
        };
        match traces.iter_mut().find(|t| matches(t)) {
            Some(trace) => {
                trace.setup.times.push(row.t_us);
                trace.amplitudes.push(row.amplitude);
            }
            None => traces.push(TraceData {
                setup: TraceSetup {
                    kind: row.kind,
                    transition: row.transition,
                    inversion_delay_us: row.t_inv_us,
                    times: vec![row.t_us],
                    field_mhz: row.field_mhz,
                    theta_deg: row.theta_deg,
                    phi_deg: row.phi_deg,
                },
                amplitudes: vec![row.amplitude],
                noise_sigma: 0.0,
            }),
        }
    }
    for trace in &traces {
        trace
            .setup
            .validate()
            .map_err(|e| Error::Config(format!("trace data: {e}")))?;
    }
    Ok(traces)
}

#[derive(Serialize)]
struct FitSummary<'a> {
    kinetics: &'a TripletKinetics,
    uncertainty: &'a kinetics::FitUncertainty,
    scales: &'a [f64],
    residual_norm: f64,
    condition_number: f64,
    ill_conditioned: bool,
    iterations: usize,
    high_field_mixing: kinetics::SublevelMixing,
}

pub fn cmd_kinetics_fit(config: &RunConfig) -> Result<CommandOutput> {
    let cfg = &config.kinetics;
    let path = cfg
        .input_csv
        .as_ref()
        .ok_or_else(|| Error::Config("kinetics.input_csv is required for kinetics-fit".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let traces = read_traces(&text)?;
    cfg.initial
        .validate()
        .map_err(|e| Error::Config(format!("kinetics.initial: {e}")))?;
    let fit = fit_traces(&traces, &cfg.initial)?;
    let k = fit.kinetics;

    let mut csv = Csv::new(&[
        "kind",
        "transition",
        "t_us",
        "amplitude",
        "field_MHz",
        "theta_deg",
        "phi_deg",
        "t_inv_us",
        "model",
        "residual",
    ]);
    for (trace, residuals) in traces.iter().zip(&fit.residuals) {
        for ((&t, &a), &r) in trace.setup.times.iter().zip(&trace.amplitudes).zip(residuals) {
            let mut fields = trace_fields(&trace.setup, t, a).to_vec();
            fields.push(num(a - r));
            fields.push(num(r));
            csv.row(fields);
        }
    }
    let summary_json = FitSummary {
        kinetics: &k,
        uncertainty: &fit.uncertainty,
        scales: &fit.scales,
        residual_norm: fit.residual_norm,
        condition_number: fit.condition_number,
        ill_conditioned: fit.ill_conditioned,
        iterations: fit.iterations,
        high_field_mixing: sublevel_mixing(&k.with_field(9600.0, 0.0, 0.0))?,
    };
    let u = fit.uncertainty;
    let mut summary = format!(
        "p_x:p_y:p_z = {:.3}:{:.3}:{:.3} (± {:.1e}, {:.1e}, {:.1e})\n\
         τ = {:.4}, {:.4}, {:.4} ms (± {:.1e}, {:.1e}, {:.1e})\n\
         residual norm {:.4e}, condition number {:.3e}\n",
        k.p_x, k.p_y, k.p_z, u.populations[0], u.populations[1], u.populations[2],
        k.tau_x_ms, k.tau_y_ms, k.tau_z_ms, u.lifetimes_ms[0], u.lifetimes_ms[1], u.lifetimes_ms[2],
        fit.residual_norm, fit.condition_number
    );
    if fit.ill_conditioned {
        summary.push_str("warning: the data do not determine every parameter\n");
    }
    Ok(CommandOutput {
        summary,
        artifacts: vec![
            json_artifact("kinetics_fit.json", &summary_json),
            csv.finish("kinetics_residuals.csv", &config_hash(config)),
        ],
    })
}
