//! Triplet sublevel kinetics and the echo-detected relaxation experiments.
//!
//! Populations and decay rates are natural in the zero-field sublevels
//! `T_x, T_y, T_z`. In a field they are redistributed over the in-field
//! states `T₊, T₀, T₋` by the squared overlaps of the two bases. Flash-delay
//! and inversion-recovery traces follow from free exponential decay of each
//! in-field level; no relaxation between sublevels is modelled.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};
use crate::spincore::{spin_one_ops, Sublevel};
use crate::TWO_PI;

/// Relative gap below which levels or projections count as degenerate.
const LABEL_TOL: f64 = 1e-9;

/// Zero-field populations, lifetimes and ZFS together with one field
/// orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletKinetics {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub tau_x_ms: f64,
    pub tau_y_ms: f64,
    pub tau_z_ms: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    /// Electron Zeeman frequency (MHz).
    pub field_mhz: f64,
    /// Polar angle of the field in the ZFS frame.
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Default for TripletKinetics {
    fn default() -> Self {
        Self::reference()
    }
}

impl TripletKinetics {
    /// Zero-field fit values 0.46:0.54:0.00, τ = 0.50, 0.58, 0.020 ms,
    /// D = −296 MHz, E = −6 MHz, 9.6 GHz field along z.
    pub fn reference() -> Self {
        Self {
            p_x: 0.46,
            p_y: 0.54,
            p_z: 0.0,
            tau_x_ms: 0.50,
            tau_y_ms: 0.58,
            tau_z_ms: 0.020,
            d: -296.0,
            e: -6.0,
            field_mhz: 9600.0,
            theta_deg: 0.0,
            phi_deg: 0.0,
        }
    }

    pub fn with_field(mut self, field_mhz: f64, theta_deg: f64, phi_deg: f64) -> Self {
        self.field_mhz = field_mhz;
        self.theta_deg = theta_deg;
        self.phi_deg = phi_deg;
        self
    }

    pub fn populations(&self) -> [f64; 3] {
        [self.p_x, self.p_y, self.p_z]
    }

    pub fn lifetimes_ms(&self) -> [f64; 3] {
        [self.tau_x_ms, self.tau_y_ms, self.tau_z_ms]
    }

    /// Zero-field decay rates (µs⁻¹).
    pub fn rates(&self) -> [f64; 3] {
        self.lifetimes_ms().map(|tau| 1.0 / (tau * 1e3))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.populations();
        if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "populations {p:?} must be nonnegative and sum to 1"
            )));
        }
        if self.lifetimes_ms().iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Domain("lifetimes must be positive".into()));
        }
        for (name, v) in [
            ("D", self.d),
            ("E", self.e),
            ("field_mhz", self.field_mhz),
            ("theta_deg", self.theta_deg),
            ("phi_deg", self.phi_deg),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite")));
            }
        }
        if self.field_mhz < 0.0 {
            return Err(Error::Domain("field must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// In-field populations and rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SublevelMixing {
    /// `(p₊, p₀, p₋)`
    pub populations: [f64; 3],
    /// `(k₊, k₀, k₋)` in µs⁻¹
    pub rates: [f64; 3],
    /// `|⟨T_i|T_j⟩|²` with `i ∈ (+, 0, −)` and `j ∈ (x, y, z)`.
    pub matrix: [[f64; 3]; 3],
}

impl SublevelMixing {
    pub fn lifetimes_ms(&self) -> [f64; 3] {
        self.rates.map(|k| 1.0 / (k * 1e3))
    }

    pub fn population(&self, s: Sublevel) -> f64 {
        self.populations[s.index()]
    }

    pub fn rate(&self, s: Sublevel) -> f64 {
        self.rates[s.index()]
    }
}

/// Zero-field eigenstates `T_x, T_y, T_z` as columns in the `|+1, 0, −1⟩`
/// basis.
pub fn zero_field_basis() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMatrix::zeros(3, 3);
    m[(0, 0)] = c(h);
    m[(2, 0)] = c(-h);
    m[(0, 1)] = I * h;
    m[(2, 1)] = I * h;
    m[(1, 2)] = c(1.0);
    m
}

/// Triplet Hamiltonian `2π[ω_e n̂·S + D(S_z² − 2/3) + E(S_x² − S_y²)]`
/// (rad/µs) and the field-direction spin operator `n̂·S`.
pub fn triplet_hamiltonian(k: &TripletKinetics) -> (CMatrix, CMatrix) {
    let [sx, sy, sz] = spin_one_ops();
    let (theta, phi) = (k.theta_deg.to_radians(), k.phi_deg.to_radians());
    let n_dot_s = sx.scale(theta.sin() * phi.cos())
        + sy.scale(theta.sin() * phi.sin())
        + sz.scale(theta.cos());
    let zfs = (&sz * &sz - linalg::identity(3).scale(2.0 / 3.0)).scale(k.d)
        + (&sx * &sx - &sy * &sy).scale(k.e);
    ((n_dot_s.scale(k.field_mhz) + zfs).scale(TWO_PI), n_dot_s)
}

fn degenerate(values: &[f64], scale: f64) -> Option<Vec<f64>> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= LABEL_TOL * scale.max(1.0))
        .then_some(sorted)
}

/// Redistribute zero-field populations and rates over the in-field states.
///
/// In-field states are labelled `T₊, T₀, T₋` by decreasing projection on
/// the field. At zero field the projections all vanish and the states are
/// labelled by decreasing energy instead.
pub fn sublevel_mixing(k: &TripletKinetics) -> Result<SublevelMixing> {
    k.validate()?;
    let (h, n_dot_s) = triplet_hamiltonian(k);
    let (energies, vectors) = linalg::eigh(&h);
    let scale = energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if let Some(sorted) = degenerate(&energies, scale) {
        return Err(Error::Labeling(sorted));
    }
    let keys: Vec<f64> = if k.field_mhz == 0.0 {
        energies.clone()
    } else {
        let proj: Vec<f64> = (0..3)
            .map(|i| {
                let v = vectors.column(i);
                (v.adjoint() * &n_dot_s * v)[(0, 0)].re
            })
            .collect();
        if let Some(sorted) = degenerate(&proj, 1.0) {
            return Err(Error::Labeling(sorted));
        }
        proj
    };
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    let overlaps = vectors.adjoint() * zero_field_basis();
    let mut matrix = [[0.0; 3]; 3];
    for (i, &col) in order.iter().enumerate() {
        for (j, m) in matrix[i].iter_mut().enumerate() {
            *m = overlaps[(col, j)].norm_sqr();
        }
    }
    let (p, r) = (k.populations(), k.rates());
    let mix = |v: [f64; 3]| -> [f64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| matrix[i][j] * v[j]).sum())
    };
    Ok(SublevelMixing {
        populations: mix(p),
        rates: mix(r),
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    FlashDelay,
    InversionRecovery,
}

/// EPR transition observed by the echo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    PlusZero,
    ZeroMinus,
}

impl Transition {
    pub fn levels(self) -> (Sublevel, Sublevel) {
        match self {
            Transition::PlusZero => (Sublevel::Plus, Sublevel::Zero),
            Transition::ZeroMinus => (Sublevel::Zero, Sublevel::Minus),
        }
    }
}

/// Experimental settings of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSetup {
    pub kind: TraceKind,
    pub transition: Transition,
    /// Delay between flash and inversion pulse (µs), inversion recovery only.
    pub inversion_delay_us: Option<f64>,
    /// Strictly increasing delays (µs).
    pub times: Vec<f64>,
    pub field_mhz: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl TraceSetup {
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Domain("trace has no time points".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("trace times must be strictly increasing".into()));
        }
        match (self.kind, self.inversion_delay_us) {
            (TraceKind::InversionRecovery, Some(t)) if t >= 0.0 => Ok(()),
            (TraceKind::InversionRecovery, _) => Err(Error::Domain(
                "inversion recovery needs a nonnegative inversion delay".into(),
            )),
            _ => Ok(()),
        }
    }

    fn kinetics(&self, base: &TripletKinetics) -> TripletKinetics {
        base.with_field(self.field_mhz, self.theta_deg, self.phi_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub setup: TraceSetup,
    pub amplitudes: Vec<f64>,
    /// Standard deviation of the added noise; zero for clean data.
    pub noise_sigma: f64,
}

/// Unnormalised echo amplitude `n_a − n_b` at every time point.
pub fn echo_amplitudes(mixing: &SublevelMixing, setup: &TraceSetup) -> Vec<f64> {
    let (a, b) = setup.transition.levels();
    let (pa, pb) = (mixing.population(a), mixing.population(b));
    let (ka, kb) = (mixing.rate(a), mixing.rate(b));
    match setup.kind {
        TraceKind::FlashDelay => setup
            .times
            .iter()
            .map(|&t| pa * (-ka * t).exp() - pb * (-kb * t).exp())
            .collect(),
        TraceKind::InversionRecovery => {
            let t_inv = setup.inversion_delay_us.unwrap_or(0.0);
            // the π pulse exchanges the two populations
            let na = pb * (-kb * t_inv).exp();
            let nb = pa * (-ka * t_inv).exp();
            setup
                .times
                .iter()
                .map(|&t| na * (-ka * t).exp() - nb * (-kb * t).exp())
                .collect()
        }
    }
}

/// Simulated trace normalised to its first point. A trace whose first
/// point vanishes is returned as all zeros.
pub fn simulate_trace(kinetics: &TripletKinetics, setup: &TraceSetup) -> Result<TraceData> {
    setup.validate()?;
    let mixing = sublevel_mixing(&setup.kinetics(kinetics))?;
    let raw = echo_amplitudes(&mixing, setup);
    let first = raw[0];
    // populations are O(1), so an absolute threshold is meaningful
    let amplitudes = if first.abs() <= 1e-12 {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|x| x / first).collect()
    };
    Ok(TraceData {
        setup: setup.clone(),
        amplitudes,
        noise_sigma: 0.0,
    })
}

/// Add white Gaussian noise of standard deviation `sigma`.
pub fn add_noise(mut trace: TraceData, sigma: f64, seed: u64) -> Result<TraceData> {
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Domain(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in &mut trace.amplitudes {
        *a += normal.sample(&mut rng);
    }
    trace.noise_sigma = sigma;
    Ok(trace)
}

/// Log-spaced delays from `start` to `end` µs.
pub fn log_times(start: f64, end: f64, points: usize) -> Vec<f64> {
    let (l0, l1) = (start.ln(), end.ln());
    (0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1).max(1) as f64).exp())
        .collect()
}

/// Standard errors of the fitted physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitUncertainty {
    /// `(p_x, p_y, p_z)`
    pub populations: [f64; 3],
    /// `(τ_x, τ_y, τ_z)` in ms
    pub lifetimes_ms: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub kinetics: TripletKinetics,
    /// One amplitude scale per trace.
    pub scales: Vec<f64>,
    /// `√Σr²` over every trace.
    pub residual_norm: f64,
    pub residuals: Vec<Vec<f64>>,
    pub uncertainty: FitUncertainty,
    /// Condition number of the column-normalised Jacobian.
    pub condition_number: f64,
    /// The data do not pin down every parameter.
    pub ill_conditioned: bool,
    pub iterations: usize,
    /// Cost `½Σr²` after every accepted step.
    pub cost_log: Vec<f64>,
}

/// Options of the Levenberg–Marquardt fit.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Condition number above which the fit is flagged as non-identifiable.
    pub condition_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            condition_limit: 1e6,
        }
    }
}

/// Internal parameter vector: logits of `p_y, p_z` relative to `p_x`,
/// log-lifetimes, then one scale per trace.
struct FitProblem<'a> {
    traces: &'a [TraceData],
    base: TripletKinetics,
}

impl FitProblem<'_> {
    fn kinetics(&self, theta: &DVector<f64>) -> TripletKinetics {
        let logits = [0.0, theta[0], theta[1]];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w = logits.map(|u| (u - max).exp());
        let sum: f64 = w.iter().sum();
        TripletKinetics {
            p_x: w[0] / sum,
            p_y: w[1] / sum,
            p_z: w[2] / sum,
            tau_x_ms: theta[2].exp(),
            tau_y_ms: theta[3].exp(),
            tau_z_ms: theta[4].exp(),
            ..self.base
        }
    }

    fn model(&self, theta: &DVector<f64>) -> Result<Vec<Vec<f64>>> {
        let k = self.kinetics(theta);
        self.traces
            .iter()
            .enumerate()
            .map(|(i, trace)| {
                let mixing = sublevel_mixing(&trace.setup.kinetics(&k))?;
                Ok(echo_amplitudes(&mixing, &trace.setup)
                    .into_iter()
                    .map(|x| theta[5 + i] * x)
                    .collect())
            })
            .collect()
    }

    fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let model = self.model(theta)?;
        Ok(DVector::from_iterator(
            self.traces.iter().map(|t| t.amplitudes.len()).sum(),
            model
                .iter()
                .zip(self.traces)
                .flat_map(|(m, t)| m.iter().zip(&t.amplitudes).map(|(a, b)| a - b)),
        ))
    }

    fn jacobian(&self, theta: &DVector<f64>, m: usize) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(m, theta.len());
        for j in 0..theta.len() {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let col = (self.residuals(&plus)? - self.residuals(&minus)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    fn initial(&self, start: &TripletKinetics) -> Result<DVector<f64>> {
        let floor = 1e-6;
        let p = start.populations().map(|x| x.max(floor));
        let mut theta = DVector::zeros(5 + self.traces.len());
        theta[0] = (p[1] / p[0]).ln();
        theta[1] = (p[2] / p[0]).ln();
        for (i, tau) in start.lifetimes_ms().iter().enumerate() {
            theta[2 + i] = tau.ln();
        }
        for i in 0..self.traces.len() {
            theta[5 + i] = 1.0;
        }
        // best scale for each trace given the starting kinetics
        let model = self.model(&theta)?;
        for (i, (m, t)) in model.iter().zip(self.traces).enumerate() {
            let mm: f64 = m.iter().map(|x| x * x).sum();
            let md: f64 = m.iter().zip(&t.amplitudes).map(|(a, b)| a * b).sum();
            if mm > 0.0 && md != 0.0 {
                theta[5 + i] = md / mm;
            }
        }
        Ok(theta)
    }
}

/// Simultaneous least-squares fit of zero-field populations and lifetimes
/// to traces taken at fixed, known fields and orientations.
///
/// `D`, `E` are taken from `initial` and held fixed.
pub fn fit_traces(traces: &[TraceData], initial: &TripletKinetics) -> Result<FitReport> {
    fit_traces_with(traces, initial, FitOptions::default())
}

pub fn fit_traces_with(
    traces: &[TraceData],
    initial: &TripletKinetics,
    options: FitOptions,
) -> Result<FitReport> {
    if traces.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 traces, got {}",
            traces.len()
        )));
    }
    for t in traces {
        t.setup.validate()?;
        if t.amplitudes.len() != t.setup.times.len() {
            return Err(Error::DimensionMismatch {
                expected: t.setup.times.len(),
                got: t.amplitudes.len(),
            });
        }
    }
    initial.validate()?;
    let problem = FitProblem {
        traces,
        base: *initial,
    };
    let mut theta = problem.initial(initial)?;
    let n = theta.len();
    let mut r = problem.residuals(&theta)?;
    let m = r.len();
    let mut cost = 0.5 * r.norm_squared();
    let mut cost_log = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let jac = problem.jacobian(&theta, m)?;
        let jtj = jac.transpose() * &jac;
        let gradient = jac.transpose() * &r;
        if gradient.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for j in 0..n {
                damped[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-&gradient))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &theta + &step;
            let trial_r = match problem.residuals(&trial) {
                Ok(r) if r.iter().all(|x| x.is_finite()) => r,
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial_cost = 0.5 * trial_r.norm_squared();
            if trial_cost < cost {
                let decrease = cost - trial_cost;
                theta = trial;
                r = trial_r;
                cost = trial_cost;
                cost_log.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if decrease <= 1e-14 * cost.max(1e-300) || step.norm() <= 1e-12 * (1.0 + theta.norm()) {
                    converged = true;
                }
                break;
            }
            lambda *= 3.0;
        }
        // no downhill step exists at any damping: a stationary point
        if !accepted || converged {
            converged = true;
            break;
        }
    }

    let report = finish(&problem, &theta, &r, cost_log, iterations, options)?;
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            cost,
            best: Box::new(report),
        });
    }
    Ok(report)
}

fn finish(
    problem: &FitProblem,
    theta: &DVector<f64>,
    r: &DVector<f64>,
    cost_log: Vec<f64>,
    iterations: usize,
    options: FitOptions,
) -> Result<FitReport> {
    let n = theta.len();
    let m = r.len();
    let jac = problem.jacobian(theta, m)?;
    let mut normalised = jac.clone();
    for mut col in normalised.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = normalised.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let kinetics = problem.kinetics(theta);

    let dof = m.saturating_sub(n).max(1) as f64;
    let sigma2 = r.norm_squared() / dof;
    let (curvature, modes) = {
        let eig = (jac.transpose() * &jac).symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    };
    let top = curvature.amax();
    // variance of g·θ; combinations touching an unresolved direction are infinite
    let variance = |g: &DVector<f64>| -> f64 {
        let mut v = 0.0;
        for k in 0..n {
            let proj = g.dot(&modes.column(k));
            if curvature[k] <= 1e-14 * top {
                if proj * proj > 1e-12 * g.norm_squared() {
                    return f64::INFINITY;
                }
            } else {
                v += proj * proj / curvature[k];
            }
        }
        sigma2 * v
    };
    let p = kinetics.populations();
    let taus = kinetics.lifetimes_ms();
    let uncertainty = FitUncertainty {
        populations: std::array::from_fn(|i| {
            // softmax derivative with respect to the two free logits
            let mut g = DVector::zeros(n);
            for j in 0..2 {
                let delta = if i == j + 1 { 1.0 } else { 0.0 };
                g[j] = p[i] * (delta - p[j + 1]);
            }
            variance(&g).sqrt()
        }),
        lifetimes_ms: std::array::from_fn(|i| {
            let mut g = DVector::zeros(n);
            g[2 + i] = taus[i];
            variance(&g).sqrt()
        }),
    };
    let model = problem.model(theta)?;
    Ok(FitReport {
        kinetics,
        scales: (0..problem.traces.len()).map(|i| theta[5 + i]).collect(),
        residual_norm: r.norm(),
        residuals: model
            .iter()
            .zip(problem.traces)
            .map(|(m, t)| m.iter().zip(&t.amplitudes).map(|(a, b)| b - a).collect())
            .collect(),
        uncertainty,
        condition_number,
        ill_conditioned: condition_number > options.condition_limit,
        iterations,
        cost_log,
    })
}
