//! Propagators, pulse sequences and the optical decay channel.
//!
//! An [`EnsembleState`] tracks one nuclear density matrix per triplet
//! sublevel plus a ground-state accumulator. Coherences between different
//! sublevels are never stored: the photons emitted from different sublevels
//! differ in frequency by roughly the electron Zeeman energy, so any such
//! coherence is erased on emission.
//!
//! The ground accumulator is held in the interaction picture of the ground
//! nuclear Zeeman Hamiltonian. Ground evolution is local, so this frame
//! changes no entanglement measure; [`EnsembleState::ground_lab`] undoes it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::effective::ExcitedSpectrum;
use crate::error::{Error, Result};
use crate::hamiltonian::{build_ground, SpinParams};
use crate::linalg::{self, c, CMatrix, I};
use crate::spincore::{BasisLayout, DensityMatrix, Operator, Sublevel, NUCLEAR_DIM};
use crate::TWO_PI;

/// Default tolerance on the leakage out of a sublevel block.
pub const LEAK_TOL: f64 = 1e-3;
/// Excited population left after a complete collection that triggers a warning.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Default ratio encoding "≪" in the feasibility report.
pub const MUCH_LESS_RATIO: f64 = 10.0;
/// Default inter-pass wait in units of the T₀ lifetime.
pub const INTER_PASS_LIFETIMES: f64 = 5.0;

/// `exp(−iHt)` through the spectral decomposition.
pub fn propagator(h: &Operator, t: f64) -> Result<Operator> {
    let deviation = linalg::hermiticity_deviation(h);
    if deviation > 1e-9 * linalg::frobenius(h).max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(linalg::hermitian_map(h, |e| (-I * e * t).exp()))
}

/// Sublevel block of a 12×12 excited-manifold propagator.
#[derive(Debug, Clone)]
pub struct SublevelBlock {
    pub block: CMatrix,
    /// `1 − tr(B†B)/4`
    pub leakage: f64,
    /// Closest unitary, present when `leakage < tol`.
    pub unitary: Option<CMatrix>,
}

impl SublevelBlock {
    /// The unitary block, or the leakage as an error.
    pub fn accept(self, tolerance: f64) -> Result<CMatrix> {
        self.unitary.ok_or(Error::Leakage {
            leakage: self.leakage,
            tolerance,
        })
    }
}

pub fn sublevel_block(u: &CMatrix, sublevel: Sublevel, tolerance: f64) -> Result<SublevelBlock> {
    if u.nrows() != BasisLayout::Excited.dim() || u.ncols() != u.nrows() {
        return Err(Error::DimensionMismatch {
            expected: BasisLayout::Excited.dim(),
            got: u.nrows(),
        });
    }
    let start = BasisLayout::Excited.sublevel_indices(sublevel).start;
    let block = u.view((start, start), (NUCLEAR_DIM, NUCLEAR_DIM)).into_owned();
    let leakage = 1.0 - linalg::trace(&(block.adjoint() * &block)).re / NUCLEAR_DIM as f64;
    let unitary = (leakage < tolerance).then(|| linalg::polar_unitary(&block));
    Ok(SublevelBlock {
        block,
        leakage,
        unitary,
    })
}

/// Decay rates of the three sublevels to the ground state (µs⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    pub k_plus: f64,
    pub k_zero: f64,
    pub k_minus: f64,
}

impl DecayRates {
    pub const ZERO: DecayRates = DecayRates {
        k_plus: 0.0,
        k_zero: 0.0,
        k_minus: 0.0,
    };

    /// From lifetimes `(τ₊, τ₀, τ₋)` in milliseconds. An infinite lifetime
    /// gives a zero rate.
    pub fn from_lifetimes_ms(plus: f64, zero: f64, minus: f64) -> Result<Self> {
        let rate = |tau: f64| -> Result<f64> {
            if tau.is_nan() || tau <= 0.0 {
                return Err(Error::Domain(format!("lifetime must be positive, got {tau}")));
            }
            Ok(1.0 / (tau * 1e3))
        };
        Ok(Self {
            k_plus: rate(plus)?,
            k_zero: rate(zero)?,
            k_minus: rate(minus)?,
        })
    }

    /// Lifetimes used for the two-pass protocol: 0.57, 0.02, 0.57 ms.
    pub fn reference() -> Self {
        Self::from_lifetimes_ms(0.57, 0.02, 0.57).expect("positive lifetimes")
    }

    pub fn get(&self, sublevel: Sublevel) -> f64 {
        match sublevel {
            Sublevel::Plus => self.k_plus,
            Sublevel::Zero => self.k_zero,
            Sublevel::Minus => self.k_minus,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in Sublevel::ALL {
            let k = self.get(s);
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Domain(format!("decay rate for {s} must be ≥ 0, got {k}")));
            }
        }
        Ok(())
    }
}

/// Overlap `|⟨γ_μ|γ_ν⟩|` of two Lorentzian emission lines of total width
/// `k_tot` whose centres differ by `delta` (both rad/µs).
///
/// This is the only place the distinguishability model enters.
pub fn photon_overlap(k_tot: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        return 1.0;
    }
    k_tot / k_tot.hypot(delta)
}

/// Nuclear Hamiltonians of every sublevel and of the ground state.
#[derive(Debug, Clone)]
pub struct BranchModel {
    /// Effective 4×4 Hamiltonians (rad/µs) indexed by [`Sublevel::index`].
    pub hamiltonians: [CMatrix; 3],
    eigen: [(Vec<f64>, CMatrix); 3],
    /// Ground nuclear energies (rad/µs).
    pub ground: [f64; 4],
    /// Extra optical linewidth (rad/µs).
    pub dephasing: f64,
}

impl BranchModel {
    pub fn new(params: &SpinParams) -> Result<Self> {
        params.validate()?;
        let spectrum = ExcitedSpectrum::new(params);
        let hamiltonians = [
            spectrum.sublevel_hamiltonian(Sublevel::Plus)?,
            spectrum.sublevel_hamiltonian(Sublevel::Zero)?,
            spectrum.sublevel_hamiltonian(Sublevel::Minus)?,
        ];
        Ok(Self::from_parts(hamiltonians, build_ground(params), params.gamma_opt))
    }

    /// Model from explicit branch Hamiltonians (rad/µs), ground Hamiltonian
    /// and optical linewidth (MHz).
    pub fn from_parts(hamiltonians: [CMatrix; 3], ground: CMatrix, gamma_opt: f64) -> Self {
        let eigen = [
            linalg::eigh(&hamiltonians[0]),
            linalg::eigh(&hamiltonians[1]),
            linalg::eigh(&hamiltonians[2]),
        ];
        Self {
            hamiltonians,
            eigen,
            ground: std::array::from_fn(|i| ground[(i, i)].re),
            dephasing: TWO_PI * gamma_opt,
        }
    }

    pub fn branch_propagator(&self, sublevel: Sublevel, t: f64) -> CMatrix {
        let (values, vectors) = &self.eigen[sublevel.index()];
        let phases = nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|&e| (-I * e * t).exp()),
        );
        vectors * CMatrix::from_diagonal(&phases) * vectors.adjoint()
    }

    fn ground_rotation(&self, t: f64, sign: f64) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            self.ground.iter().map(|&g| (I * sign * g * t).exp()),
        ))
    }
}

/// How long a decay segment lasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    /// Finite duration in µs.
    Duration(f64),
    /// Until every branch has emptied.
    Complete,
}

/// One emission segment of one branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonRecord {
    pub sublevel: Sublevel,
    pub start_us: f64,
    pub duration_us: f64,
    pub rate: f64,
    /// Population transferred to the ground state in this segment.
    pub emitted: f64,
    /// Nuclear-state-dependent line offsets relative to the optical
    /// frequency (MHz).
    pub line_offsets_mhz: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    /// Subnormalised branch matrices indexed by [`Sublevel::index`].
    pub branches: [DensityMatrix; 3],
    /// Ground accumulator in the interaction picture of the ground Hamiltonian.
    pub ground: DensityMatrix,
    /// Elapsed time (µs).
    pub clock: f64,
    pub photons: Vec<PhotonRecord>,
}

impl EnsembleState {
    pub fn new(nuclear: DensityMatrix) -> Result<Self> {
        validate_density(&nuclear)?;
        Ok(Self {
            branches: std::array::from_fn(|_| CMatrix::zeros(4, 4)),
            ground: nuclear,
            clock: 0.0,
            photons: Vec::new(),
        })
    }

    pub fn branch(&self, sublevel: Sublevel) -> &DensityMatrix {
        &self.branches[sublevel.index()]
    }

    pub fn excited_population(&self) -> f64 {
        self.branches.iter().map(|b| linalg::trace(b).re).sum()
    }

    pub fn trace(&self) -> f64 {
        self.excited_population() + linalg::trace(&self.ground).re
    }

    /// Ground accumulator in the laboratory frame.
    pub fn ground_lab(&self, model: &BranchModel) -> DensityMatrix {
        let r = model.ground_rotation(self.clock, -1.0);
        &r * &self.ground * r.adjoint()
    }

    /// Sum of every branch and the (rotating-frame) ground accumulator.
    pub fn total_nuclear(&self) -> DensityMatrix {
        self.branches.iter().fold(self.ground.clone(), |acc, b| acc + b)
    }
}

fn validate_density(rho: &DensityMatrix) -> Result<()> {
    crate::entanglement::check_density(rho, 1e-10)
}

/// Laser excitation out of the ground state.
///
/// A fraction `p_i` of the current ground population goes to sublevel `i`,
/// carrying the nuclear state with it; the remainder stays in the ground state.
pub fn apply_excitation(
    mut state: EnsembleState,
    model: &BranchModel,
    populations: [f64; 3],
) -> Result<EnsembleState> {
    validate_populations(populations)?;
    let lab = state.ground_lab(model);
    for (branch, p) in state.branches.iter_mut().zip(populations) {
        *branch += lab.scale(p);
    }
    state.ground = state.ground.scale(1.0 - populations.iter().sum::<f64>());
    Ok(state)
}

fn validate_populations(populations: [f64; 3]) -> Result<()> {
    let sum: f64 = populations.iter().sum();
    if populations.iter().any(|p| !(*p >= 0.0)) || sum > 1.0 + 1e-12 {
        return Err(Error::InvalidSequence(format!(
            "populations {populations:?} must be nonnegative with sum ≤ 1"
        )));
    }
    Ok(())
}

/// Ideal instantaneous π pulse between two sublevels.
pub fn apply_microwave(mut state: EnsembleState, from: Sublevel, to: Sublevel) -> EnsembleState {
    state.branches.swap(from.index(), to.index());
    state
}

/// `k(1 − e^{−zT})/z`, with `T = ∞` for a complete collection.
fn emission_weight(k: f64, z: Complex64, horizon: Horizon) -> Complex64 {
    match horizon {
        Horizon::Complete => c(k) / z,
        Horizon::Duration(t) => {
            let zt = z * t;
            if zt.norm() < 1e-8 {
                c(k * t) * (c(1.0) - zt * 0.5)
            } else {
                c(k) * (c(1.0) - (-zt).exp()) / z
            }
        }
    }
}

/// Coherent evolution of every branch with exponential emission into the
/// ground state.
///
/// Each emitted coherence between branch eigenstates `μ, ν` is weighted by
/// the photon overlap of their emission lines and by the time average of its
/// phase over the emission time.
pub fn evolve_with_decay(
    mut state: EnsembleState,
    model: &BranchModel,
    rates: &DecayRates,
    horizon: Horizon,
) -> Result<EnsembleState> {
    rates.validate()?;
    if let Horizon::Duration(t) = horizon {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("duration must be ≥ 0, got {t}")));
        }
    }
    let t0 = state.clock;
    for sublevel in Sublevel::ALL {
        let i = sublevel.index();
        let k = rates.get(sublevel);
        let rho = &state.branches[i];
        let population = linalg::trace(rho).re;
        if population == 0.0 && linalg::frobenius(rho) == 0.0 {
            continue;
        }
        let (values, vectors) = &model.eigen[i];
        if k > 0.0 {
            let in_eigenbasis = vectors.adjoint() * rho * vectors;
            let k_tot = k + model.dephasing;
            let mut gained = CMatrix::zeros(4, 4);
            for mu in 0..4 {
                for nu in 0..4 {
                    let amp = in_eigenbasis[(mu, nu)];
                    if amp.norm() == 0.0 {
                        continue;
                    }
                    let delta = values[mu] - values[nu];
                    let overlap = photon_overlap(k_tot, delta);
                    for a in 0..4 {
                        for b in 0..4 {
                            let g = model.ground[a] - model.ground[b];
                            let z = c(k) + I * (delta - g);
                            let weight = emission_weight(k, z, horizon);
                            gained[(a, b)] += amp
                                * overlap
                                * vectors[(a, mu)]
                                * vectors[(b, nu)].conj()
                                * (I * g * t0).exp()
                                * weight;
                        }
                    }
                }
            }
            state.ground += gained;
        }
        let remaining = match horizon {
            Horizon::Complete if k > 0.0 => CMatrix::zeros(4, 4),
            Horizon::Complete => rho.clone(),
            Horizon::Duration(t) => {
                let u = model.branch_propagator(sublevel, t);
                (&u * rho * u.adjoint()).scale((-k * t).exp())
            }
        };
        let emitted = population - linalg::trace(&remaining).re;
        if k > 0.0 {
            state.photons.push(PhotonRecord {
                sublevel,
                start_us: t0,
                duration_us: match horizon {
                    Horizon::Duration(t) => t,
                    Horizon::Complete => f64::INFINITY,
                },
                rate: k,
                emitted,
                line_offsets_mhz: values.iter().map(|e| e / TWO_PI).collect(),
            });
        }
        state.branches[i] = remaining;
    }
    if let Horizon::Duration(t) = horizon {
        state.clock += t;
    }
    Ok(state)
}

/// One step of a pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Event {
    /// Laser excitation with sublevel populations `(p₊, p₀, p₋)`.
    Excite { populations: [f64; 3] },
    MicrowaveSwap { from: Sublevel, to: Sublevel },
    /// Evolution with decay switched on.
    Wait { duration: f64 },
    /// Evolution with decay switched off (idealised gate).
    CoherentWait { duration: f64 },
    CollectDecay { horizon: Horizon },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    /// Initial ground-state nuclear density matrix.
    #[serde(skip)]
    pub initial: DensityMatrix,
    pub events: Vec<Event>,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        validate_density(&self.initial)?;
        match self.events.last() {
            Some(Event::CollectDecay { .. }) => {}
            _ => {
                return Err(Error::InvalidSequence(
                    "sequence must end with CollectDecay".into(),
                ))
            }
        }
        for event in &self.events {
            match *event {
                Event::Excite { populations } => validate_populations(populations)?,
                Event::MicrowaveSwap { from, to } if from == to => {
                    return Err(Error::InvalidSequence(format!("swap {from} with itself")))
                }
                Event::Wait { duration } | Event::CoherentWait { duration }
                    if !(duration >= 0.0 && duration.is_finite()) =>
                {
                    return Err(Error::InvalidSequence(format!("wait of {duration} µs")))
                }
                Event::CollectDecay {
                    horizon: Horizon::Duration(d),
                } if !(d >= 0.0) => {
                    return Err(Error::InvalidSequence(format!("horizon of {d} µs")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Result of [`run_protocol`].
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    /// Final ground nuclear state, trace 1, in the rotating frame of the
    /// ground Zeeman Hamiltonian.
    pub rho: DensityMatrix,
    /// Same state in the laboratory frame.
    pub rho_lab: DensityMatrix,
    pub residual_excited: f64,
    pub warning: Option<String>,
    pub photons: Vec<PhotonRecord>,
}

pub fn run_protocol(
    params: &SpinParams,
    rates: &DecayRates,
    sequence: &PulseSequence,
) -> Result<ProtocolOutcome> {
    run_protocol_with(&BranchModel::new(params)?, rates, sequence)
}

/// [`run_protocol`] with a prebuilt model, for sweeps.
pub fn run_protocol_with(
    model: &BranchModel,
    rates: &DecayRates,
    sequence: &PulseSequence,
) -> Result<ProtocolOutcome> {
    sequence.validate()?;
    rates.validate()?;
    let mut state = EnsembleState::new(sequence.initial.clone())?;
    for event in &sequence.events {
        state = match *event {
            Event::Excite { populations } => apply_excitation(state, model, populations)?,
            Event::MicrowaveSwap { from, to } => apply_microwave(state, from, to),
            Event::Wait { duration } => {
                evolve_with_decay(state, model, rates, Horizon::Duration(duration))?
            }
            Event::CoherentWait { duration } => {
                evolve_with_decay(state, model, &DecayRates::ZERO, Horizon::Duration(duration))?
            }
            Event::CollectDecay { horizon } => evolve_with_decay(state, model, rates, horizon)?,
        };
    }
    let residual_excited = state.excited_population();
    let ground_trace = linalg::trace(&state.ground).re;
    if ground_trace <= 0.0 {
        return Err(Error::Domain("no population returned to the ground state".into()));
    }
    let warning = (residual_excited > RESIDUAL_TOL).then(|| {
        format!("{residual_excited:.3e} of the population is still excited")
    });
    Ok(ProtocolOutcome {
        rho: state.ground.unscale(ground_trace),
        rho_lab: state.ground_lab(model).unscale(ground_trace),
        residual_excited,
        warning,
        photons: state.photons,
    })
}

/// Wait that turns `|↓↑⟩` into an equal superposition of `|↓↑⟩` and `|↑↓⟩`
/// for a flip-flop coupling `a` (MHz): `1/(8|a|)` µs.
pub fn quarter_swap_time(a: f64) -> f64 {
    1.0 / (8.0 * a.abs())
}

/// Excite fully into T₀, swap into T₊ for the quarter-swap time, swap back,
/// collect.
pub fn single_pass_sequence(initial: DensityMatrix, a_plus: f64, coherent: bool) -> PulseSequence {
    let gate = quarter_swap_time(a_plus);
    let mut events = vec![Event::Excite {
        populations: [0.0, 1.0, 0.0],
    }];
    if gate.is_finite() {
        let wait = if coherent {
            Event::CoherentWait { duration: gate }
        } else {
            Event::Wait { duration: gate }
        };
        events.extend([
            Event::MicrowaveSwap {
                from: Sublevel::Zero,
                to: Sublevel::Plus,
            },
            wait,
            Event::MicrowaveSwap {
                from: Sublevel::Plus,
                to: Sublevel::Zero,
            },
        ]);
    }
    events.push(Event::CollectDecay {
        horizon: Horizon::Complete,
    });
    PulseSequence { initial, events }
}

/// Excite with the given populations, park T₊ in T₀ after its quarter swap
/// and collect. Population in T₋ decays without being gated.
pub fn one_pass_sequence(initial: DensityMatrix, populations: [f64; 3], a_plus: f64) -> PulseSequence {
    let gate = quarter_swap_time(a_plus);
    let mut events = vec![Event::Excite { populations }];
    if gate.is_finite() {
        events.extend([
            Event::Wait { duration: gate },
            Event::MicrowaveSwap {
                from: Sublevel::Plus,
                to: Sublevel::Zero,
            },
        ]);
    }
    events.push(Event::CollectDecay {
        horizon: Horizon::Complete,
    });
    PulseSequence { initial, events }
}

/// Knobs of the two-pass scheduler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPassOptions {
    /// Wait after the first pass before the second swap may happen (µs).
    /// Defaults to five T₀ lifetimes.
    #[serde(default)]
    pub inter_wait_us: Option<f64>,
    /// Odd multiple of the T₋ quarter-swap time at which the second swap
    /// happens. Chosen automatically when absent.
    #[serde(default)]
    pub multiple: Option<u32>,
}

/// Timing chosen by [`two_pass_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPassTiming {
    pub gate_plus_us: f64,
    pub gate_minus_us: f64,
    pub multiple: u32,
    pub second_swap_us: f64,
}

/// Smallest odd `m` with `m·gate_minus ≥ earliest` whose T₋ superposition
/// phase matches the T₊ one: `sign(a₋)·sin(mπ/2) = sign(a₊)`.
pub fn second_pass_multiple(a_plus: f64, a_minus: f64, gate_minus: f64, earliest: f64) -> u32 {
    let wanted = a_plus.signum() * a_minus.signum();
    let mut m = 1u32;
    loop {
        let phase = if m % 4 == 1 { 1.0 } else { -1.0 };
        if phase == wanted && m as f64 * gate_minus >= earliest {
            return m;
        }
        m += 2;
    }
}

/// Excite once, let T₊ and T₋ evolve together, park T₊ in T₀ after its
/// quarter swap, wait for T₀ to empty, then park T₋ at a phase-aligned odd
/// multiple of its quarter-swap time and collect.
///
/// `a_plus` and `a_minus` are the signed flip-flop couplings (MHz).
pub fn two_pass_sequence(
    initial: DensityMatrix,
    populations: [f64; 3],
    a_plus: f64,
    a_minus: f64,
    rates: &DecayRates,
    options: TwoPassOptions,
) -> Result<(PulseSequence, Option<TwoPassTiming>)> {
    let excite = Event::Excite { populations };
    let collect = Event::CollectDecay {
        horizon: Horizon::Complete,
    };
    let gate_plus = quarter_swap_time(a_plus);
    let gate_minus = quarter_swap_time(a_minus);
    if !gate_plus.is_finite() || !gate_minus.is_finite() {
        return Ok((
            PulseSequence {
                initial,
                events: vec![excite, collect],
            },
            None,
        ));
    }
    let inter_wait = match options.inter_wait_us {
        Some(w) => w,
        None if rates.k_zero > 0.0 => INTER_PASS_LIFETIMES / rates.k_zero,
        None => 0.0,
    };
    let multiple = match options.multiple {
        Some(m) if m % 2 == 1 => m,
        Some(m) => {
            return Err(Error::InvalidSequence(format!(
                "second-pass multiple must be odd, got {m}"
            )))
        }
        None => second_pass_multiple(a_plus, a_minus, gate_minus, gate_plus + inter_wait),
    };
    let second = multiple as f64 * gate_minus;
    if second < gate_plus {
        return Err(Error::InvalidSequence(format!(
            "second swap at {second} µs precedes the first at {gate_plus} µs"
        )));
    }
    let events = vec![
        excite,
        Event::Wait {
            duration: gate_plus,
        },
        Event::MicrowaveSwap {
            from: Sublevel::Plus,
            to: Sublevel::Zero,
        },
        Event::Wait {
            duration: second - gate_plus,
        },
        Event::MicrowaveSwap {
            from: Sublevel::Minus,
            to: Sublevel::Zero,
        },
        collect,
    ];
    Ok((
        PulseSequence { initial, events },
        Some(TwoPassTiming {
            gate_plus_us: gate_plus,
            gate_minus_us: gate_minus,
            multiple,
            second_swap_us: second,
        }),
    ))
}

/// Check of `gate < τ ≪ π/(2a₀)`.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub gate_time_us: f64,
    pub lifetime_us: f64,
    /// `π/(2·2π|a₀|)`, the time for T₀ to swap the pair.
    pub t0_swap_time_us: f64,
    /// `τ / gate`
    pub lifetime_margin: f64,
    /// `π/(2·2π|a₀|) / τ`
    pub coherence_margin: f64,
    /// `π/(2·2π|a₀|) / gate`
    pub coherence_over_gate: f64,
    pub gate_within_lifetime: bool,
    pub lifetime_well_below_t0_swap: bool,
    pub notes: Vec<String>,
}

pub fn feasibility(params: &SpinParams, rates: &DecayRates, ratio: f64) -> Result<FeasibilityReport> {
    let spectrum = ExcitedSpectrum::new(params);
    let a_plus = spectrum.coupling(params, Sublevel::Plus)?.a_numeric;
    let a_zero = spectrum.coupling(params, Sublevel::Zero)?.a_numeric;
    Ok(feasibility_from(a_plus, a_zero, rates.k_plus, ratio))
}

/// Report from couplings (MHz) and the T₊ decay rate (µs⁻¹).
pub fn feasibility_from(a_plus: f64, a_zero: f64, k_plus: f64, ratio: f64) -> FeasibilityReport {
    let gate = quarter_swap_time(a_plus);
    let lifetime = if k_plus > 0.0 { 1.0 / k_plus } else { f64::INFINITY };
    let t0_swap = 1.0 / (4.0 * a_zero.abs());
    let mut notes = Vec::new();
    if lifetime.is_infinite() {
        notes.push("infinite lifetime: no decay during the gate".to_string());
    }
    if t0_swap.is_infinite() {
        notes.push("T₀ pair is uncoupled".to_string());
    }
    let coherence_margin = t0_swap / lifetime;
    FeasibilityReport {
        gate_time_us: gate,
        lifetime_us: lifetime,
        t0_swap_time_us: t0_swap,
        lifetime_margin: lifetime / gate,
        coherence_margin,
        coherence_over_gate: t0_swap / gate,
        gate_within_lifetime: gate < lifetime,
        lifetime_well_below_t0_swap: coherence_margin >= ratio,
        notes,
    }
}

/// Pure nuclear state `|ψ⟩⟨ψ|` from amplitudes on `↑↑, ↑↓, ↓↑, ↓↓`.
pub fn pure_state(amplitudes: [Complex64; 4]) -> DensityMatrix {
    let v = nalgebra::DVector::from_column_slice(&amplitudes);
    let n = v.norm();
    let v = v.unscale(n);
    &v * v.adjoint()
}

/// `|↓↑⟩⟨↓↑|`
pub fn down_up() -> DensityMatrix {
    let mut amps = [c(0.0); 4];
    amps[crate::spincore::DOWN_UP] = c(1.0);
    pure_state(amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entanglement::concurrence;
    use crate::hamiltonian::build_excited;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn propagator_basics() {
        let h = build_excited(&SpinParams::reference());
        let u0 = propagator(&h, 0.0).unwrap();
        assert!(linalg::frobenius(&(u0 - linalg::identity(12))) < 1e-12);
        let u1 = propagator(&h, 13.0).unwrap();
        let u2 = propagator(&h, 29.0).unwrap();
        let u3 = propagator(&h, 42.0).unwrap();
        assert!(linalg::frobenius(&(&u1 * &u2 - &u3)) < 1e-9);
        let d = linalg::from_real(2, 2, &[1.5, 0.0, 0.0, -0.25]);
        let ud = propagator(&d, 2.0).unwrap();
        assert!((ud[(0, 0)] - (-I * 3.0).exp()).norm() < 1e-14);
        assert!((ud[(1, 1)] - (I * 0.5).exp()).norm() < 1e-14);
        assert!(ud[(0, 1)].norm() < 1e-14);
        let bad = linalg::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(propagator(&bad, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn block_diagonal_unitary_has_no_leakage() {
        let u = linalg::identity(12);
        for s in Sublevel::ALL {
            let b = sublevel_block(&u, s, LEAK_TOL).unwrap();
            assert!(b.leakage.abs() < 1e-14);
            assert!(b.unitary.is_some());
        }
    }

    #[test]
    fn gate_block_leakage_is_small() {
        let p = SpinParams::reference();
        let a = crate::effective::coupling_numeric(&p, Sublevel::Plus).unwrap().a_numeric;
        let t = std::f64::consts::PI / (2.0 * TWO_PI * a);
        let u = propagator(&build_excited(&p), t).unwrap();
        let b = sublevel_block(&u, Sublevel::Plus, LEAK_TOL).unwrap();
        // independent norm: sum of squared magnitudes outside the block, per column
        let mut outside = 0.0;
        for col in 0..4 {
            for row in 0..12 {
                if !(0..4).contains(&row) {
                    outside += u[(row, col)].norm_sqr();
                }
            }
        }
        assert!(rel(b.leakage, outside / 4.0) < 1e-6 || b.leakage < 1e-12);
        assert!(b.leakage < 1e-4);
    }

    #[test]
    fn microwave_is_an_involution() {
        let model = BranchModel::new(&SpinParams::reference()).unwrap();
        let s = EnsembleState::new(down_up()).unwrap();
        let s = apply_excitation(s, &model, [0.2, 0.3, 0.1]).unwrap();
        let once = apply_microwave(s.clone(), Sublevel::Plus, Sublevel::Zero);
        assert!((once.trace() - 1.0).abs() < 1e-12);
        assert!((linalg::trace(once.branch(Sublevel::Plus)).re - 0.3).abs() < 1e-12);
        let twice = apply_microwave(once, Sublevel::Plus, Sublevel::Zero);
        for sl in Sublevel::ALL {
            assert_eq!(twice.branch(sl), s.branch(sl));
        }
        let empty = apply_microwave(
            EnsembleState::new(down_up()).unwrap(),
            Sublevel::Minus,
            Sublevel::Zero,
        );
        assert_eq!(empty.ground, down_up());
    }

    #[test]
    fn degenerate_coherence_survives_decay() {
        let h = CMatrix::zeros(4, 4);
        let model = BranchModel::from_parts(
            [h.clone(), h.clone(), h.clone()],
            CMatrix::zeros(4, 4),
            0.0,
        );
        let bell = pure_state([c(0.0), c(1.0), c(-1.0), c(0.0)]);
        let s = EnsembleState::new(bell.clone()).unwrap();
        let s = apply_excitation(s, &model, [0.0, 1.0, 0.0]).unwrap();
        let rates = DecayRates {
            k_plus: 0.0,
            k_zero: 0.05,
            k_minus: 0.0,
        };
        let s = evolve_with_decay(s, &model, &rates, Horizon::Complete).unwrap();
        assert!(linalg::frobenius(&(&s.ground - &bell)) < 1e-12);
    }

    #[test]
    fn distinguishable_lines_erase_coherence() {
        assert!(photon_overlap(1e-3, 10.0) < 1e-3);
        assert_eq!(photon_overlap(0.1, 0.0), 1.0);
        // split the pair by a lot more than the linewidth
        let mut h = CMatrix::zeros(4, 4);
        h[(1, 2)] = c(50.0);
        h[(2, 1)] = c(50.0);
        let model = BranchModel::from_parts([h.clone(), h.clone(), h], CMatrix::zeros(4, 4), 0.0);
        let s = EnsembleState::new(down_up()).unwrap();
        let s = apply_excitation(s, &model, [1.0, 0.0, 0.0]).unwrap();
        let rates = DecayRates {
            k_plus: 0.01,
            ..DecayRates::ZERO
        };
        let s = evolve_with_decay(s, &model, &rates, Horizon::Complete).unwrap();
        assert!(s.ground[(1, 2)].norm() < 1e-3);
        assert!(concurrence(&s.ground).unwrap() < 1e-3);
    }

    #[test]
    fn diagonal_branch_decays_exponentially() {
        // fine-step Euler integration of dρ_g/dt = k ρ_e, dρ_e/dt = −k ρ_e
        let p = SpinParams::reference().with_hyperfine(0.0);
        let model = BranchModel::new(&p).unwrap();
        let rho = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.1),
            c(0.2),
            c(0.3),
            c(0.4),
        ]));
        let k = 0.013;
        let duration = 37.0;
        let mut s = EnsembleState::new(rho.clone()).unwrap();
        s = apply_excitation(s, &model, [1.0, 0.0, 0.0]).unwrap();
        let rates = DecayRates {
            k_plus: k,
            ..DecayRates::ZERO
        };
        let s = evolve_with_decay(s, &model, &rates, Horizon::Duration(duration)).unwrap();
        let steps = 200_000;
        let dt = duration / steps as f64;
        let (mut excited, mut ground) = (1.0f64, 0.0f64);
        for _ in 0..steps {
            let flow = k * excited * dt;
            ground += flow;
            excited -= flow;
        }
        let closed = 1.0 - (-k * duration).exp();
        assert!((ground - closed).abs() < 1e-5);
        for i in 0..4 {
            let expect = closed * rho[(i, i)].re;
            assert!((s.ground[(i, i)].re - expect).abs() < 1e-4 * expect, "{i}");
        }
        assert!((s.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn no_excitation_leaves_state_unchanged() {
        let p = SpinParams::reference();
        let psi = pure_state([c(0.5), c(0.3), c(-0.2), linalg::I * 0.4]);
        let seq = PulseSequence {
            initial: psi.clone(),
            events: vec![
                Event::Wait { duration: 100.0 },
                Event::CollectDecay {
                    horizon: Horizon::Complete,
                },
            ],
        };
        let out = run_protocol(&p, &DecayRates::reference(), &seq).unwrap();
        assert!(linalg::frobenius(&(&out.rho - &psi)) < 1e-12);
        assert!(out.warning.is_none());
    }

    #[test]
    fn idealised_single_pass_makes_a_bell_state() {
        let p = SpinParams::reference();
        let a = crate::effective::coupling_numeric(&p, Sublevel::Plus).unwrap().offdiag;
        let seq = single_pass_sequence(down_up(), a, true);
        let out = run_protocol(&p, &DecayRates::reference(), &seq).unwrap();
        assert!(concurrence(&out.rho).unwrap() >= 0.99);
        // two-level Rabi oracle: populations cos²(2πat), sin²(2πat) at 2πat = π/4
        assert!(out.warning.is_none());
    }

    #[test]
    fn coherent_gate_matches_rabi_oscillation() {
        let p = SpinParams::reference();
        let model = BranchModel::new(&p).unwrap();
        let a = crate::effective::coupling_numeric(&p, Sublevel::Plus).unwrap().a_numeric;
        let s = EnsembleState::new(down_up()).unwrap();
        let s = apply_excitation(s, &model, [1.0, 0.0, 0.0]).unwrap();
        for t in [50.0, 372.5, 900.0] {
            let out = evolve_with_decay(s.clone(), &model, &DecayRates::ZERO, Horizon::Duration(t))
                .unwrap();
            let phi = TWO_PI * a * t;
            let rho = out.branch(Sublevel::Plus);
            assert!((rho[(2, 2)].re - phi.cos().powi(2)).abs() < 1e-7, "t = {t}");
            assert!((rho[(1, 1)].re - phi.sin().powi(2)).abs() < 1e-7, "t = {t}");
            assert!((out.trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_validation() {
        let seq = PulseSequence {
            initial: down_up(),
            events: vec![Event::Wait { duration: 1.0 }],
        };
        assert!(matches!(seq.validate(), Err(Error::InvalidSequence(_))));
        let seq = PulseSequence {
            initial: down_up(),
            events: vec![
                Event::MicrowaveSwap {
                    from: Sublevel::Plus,
                    to: Sublevel::Plus,
                },
                Event::CollectDecay {
                    horizon: Horizon::Complete,
                },
            ],
        };
        assert!(seq.validate().is_err());
        let seq = PulseSequence {
            initial: down_up(),
            events: vec![
                Event::Excite {
                    populations: [0.6, 0.6, 0.0],
                },
                Event::CollectDecay {
                    horizon: Horizon::Complete,
                },
            ],
        };
        assert!(seq.validate().is_err());
    }

    #[test]
    fn residual_population_warns() {
        let p = SpinParams::reference();
        let seq = PulseSequence {
            initial: down_up(),
            events: vec![
                Event::Excite {
                    populations: [0.5, 0.0, 0.0],
                },
                Event::CollectDecay {
                    horizon: Horizon::Duration(10.0),
                },
            ],
        };
        let out = run_protocol(&p, &DecayRates::reference(), &seq).unwrap();
        assert!(out.warning.is_some());
        assert!(out.residual_excited > 0.4);
    }

    #[test]
    fn phase_aligned_multiple() {
        // opposite-sign couplings need m ≡ 3 (mod 4)
        assert_eq!(second_pass_multiple(1.0, -1.0, 1.0, 0.0), 3);
        assert_eq!(second_pass_multiple(1.0, -1.0, 1.0, 5.5), 7);
        assert_eq!(second_pass_multiple(1.0, 1.0, 1.0, 0.0), 1);
        assert_eq!(second_pass_multiple(1.0, 1.0, 1.0, 2.0), 5);
    }

    #[test]
    fn feasibility_at_reference() {
        let p = SpinParams::reference();
        let r = feasibility(&p, &DecayRates::reference(), MUCH_LESS_RATIO).unwrap();
        // scalar oracle with the couplings pinned from the model
        assert!((r.gate_time_us - 1.0 / (8.0 * 3.3561e-4)).abs() < 0.1);
        assert!(r.gate_within_lifetime);
        assert!(r.coherence_over_gate >= 10.0);
        let idle = feasibility(&p, &DecayRates::ZERO, MUCH_LESS_RATIO).unwrap();
        assert!(idle.gate_within_lifetime);
        assert!(!idle.notes.is_empty());
        let strong = feasibility(&p.with_hyperfine(50.0), &DecayRates::reference(), MUCH_LESS_RATIO)
            .unwrap();
        assert!(!strong.lifetime_well_below_t0_swap);
    }
}
