//! Effective nuclear dynamics inside each triplet sublevel.
//!
//! Within a sublevel `T_i` the states `|T_i↓↑⟩` and `|T_i↑↓⟩` are coupled only
//! at second order, through the neighbouring sublevels. This module computes
//! that flip-flop coupling three ways: the closed-form expression for the
//! symmetric molecule, quasi-degenerate perturbation theory over the whole
//! excited manifold, and numerically from the exact eigenvectors.
//!
//! The numerical route projects a group of exact eigenvectors onto a model
//! subspace, orthonormalises the projections, and rebuilds an effective
//! Hamiltonian with exactly the same eigenvalues (des Cloizeaux form). Its
//! off-diagonal element is the coupling, its diagonal difference the detuning.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{build_excited, SpinParams};
use crate::linalg::{self, c, CMatrix};
use crate::spincore::{BasisLayout, Sublevel, DOWN_UP, NUCLEAR_DIM, UP_DOWN};
use crate::TWO_PI;

/// Minimum weight an exact eigenvector must carry on its model subspace.
pub const OVERLAP_THRESHOLD: f64 = 0.7;

/// Couplings smaller than this fraction of the spectral radius are zero.
pub const ROUNDOFF_FLOOR: f64 = 100.0 * f64::EPSILON;

/// Largest `|V|/|ΔE|` accepted by the perturbative expansion.
const MAX_MIXING_RATIO: f64 = 0.1;

/// Flip-flop coupling within one sublevel (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub sublevel: Sublevel,
    /// Closed-form value; `None` for an asymmetric molecule.
    pub a_analytic: Option<f64>,
    /// Magnitude of the effective off-diagonal element.
    pub a_numeric: f64,
    /// Signed effective element `⟨T_i↓↑|H_eff|T_i↑↓⟩`.
    pub offdiag: f64,
    /// Unperturbed energy difference `E(T_i↓↑) − E(T_i↑↓)`.
    pub detuning: f64,
    /// Same difference after second-order shifts.
    pub effective_detuning: f64,
}

/// Closed-form coupling for the symmetric molecule:
/// `a_± = 2A²/(∓D + 2ω_e + 4ω_n)` and `a₀ = a₊ − a₋`.
pub fn coupling_analytic(params: &SpinParams, sublevel: Sublevel) -> Result<f64> {
    if !params.is_symmetric() {
        return Err(Error::Domain(
            "closed-form couplings require A = A′ and ω_n = ω_n′".into(),
        ));
    }
    let pm = |sign: f64| -> Result<f64> {
        let den = -sign * params.d + 2.0 * params.omega_e + 4.0 * params.omega_n;
        if den == 0.0 {
            return Err(Error::Domain("coupling denominator vanishes".into()));
        }
        Ok(2.0 * params.a * params.a / den)
    };
    match sublevel {
        Sublevel::Plus => pm(1.0),
        Sublevel::Minus => pm(-1.0),
        Sublevel::Zero => Ok(pm(1.0)? - pm(-1.0)?),
    }
}

/// Exact eigen-decomposition of the excited-manifold Hamiltonian.
#[derive(Debug, Clone)]
pub struct ExcitedSpectrum {
    pub hamiltonian: CMatrix,
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl ExcitedSpectrum {
    pub fn new(params: &SpinParams) -> Self {
        Self::from_hamiltonian(build_excited(params))
    }

    pub fn from_hamiltonian(hamiltonian: CMatrix) -> Self {
        let (values, vectors) = linalg::eigh(&hamiltonian);
        Self {
            hamiltonian,
            values,
            vectors,
        }
    }

    /// Weight of eigenvector `col` on the basis states `subspace`.
    pub fn weight(&self, col: usize, subspace: &[usize]) -> f64 {
        subspace.iter().map(|&r| self.vectors[(r, col)].norm_sqr()).sum()
    }

    /// Effective Hamiltonian on `subspace` (rad/µs).
    ///
    /// Picks the `subspace.len()` eigenvectors with the largest weight on the
    /// subspace and rebuilds `W diag(λ) W†`, `W` the unitary polar factor of
    /// their projection.
    pub fn effective_block(&self, subspace: &[usize]) -> Result<EffectiveBlock> {
        let k = subspace.len();
        let mut ranked: Vec<(usize, f64)> = (0..self.values.len())
            .map(|col| (col, self.weight(col, subspace)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        let chosen = &ranked[..k];
        if chosen.iter().any(|&(_, w)| w < OVERLAP_THRESHOLD) {
            return Err(Error::DegeneracyResolution {
                indices: chosen.iter().map(|&(i, _)| i).collect(),
                overlaps: chosen.iter().map(|&(_, w)| w).collect(),
                threshold: OVERLAP_THRESHOLD,
            });
        }
        let mut eigen: Vec<usize> = chosen.iter().map(|&(i, _)| i).collect();
        eigen.sort_unstable();
        let mut projection = CMatrix::zeros(k, k);
        for (row, &r) in subspace.iter().enumerate() {
            for (col, &e) in eigen.iter().enumerate() {
                projection[(row, col)] = self.vectors[(r, e)];
            }
        }
        let w = linalg::polar_unitary(&projection);
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            k,
            eigen.iter().map(|&e| c(self.values[e])),
        ));
        let hamiltonian = &w * diag * w.adjoint();
        Ok(EffectiveBlock {
            hamiltonian,
            eigen_indices: eigen,
            overlaps: chosen.iter().map(|&(_, w)| w).collect(),
        })
    }

    /// 4×4 effective nuclear Hamiltonian of one sublevel (rad/µs).
    pub fn sublevel_hamiltonian(&self, sublevel: Sublevel) -> Result<CMatrix> {
        let idx: Vec<usize> = BasisLayout::Excited.sublevel_indices(sublevel).collect();
        Ok(self.effective_block(&idx)?.hamiltonian)
    }

    pub fn coupling(&self, params: &SpinParams, sublevel: Sublevel) -> Result<Coupling> {
        let offset = sublevel.index() * NUCLEAR_DIM;
        let (du, ud) = (offset + DOWN_UP, offset + UP_DOWN);
        let block = self.effective_block(&[du, ud])?;
        let h = &block.hamiltonian;
        let radius = self.values.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let mut offdiag = h[(0, 1)].re / TWO_PI;
        // below this the element is eigensolver round-off, not a coupling
        if offdiag.abs() <= ROUNDOFF_FLOOR * radius / TWO_PI {
            offdiag = 0.0;
        }
        Ok(Coupling {
            sublevel,
            a_analytic: coupling_analytic(params, sublevel).ok(),
            a_numeric: offdiag.abs(),
            offdiag,
            detuning: (self.hamiltonian[(du, du)].re - self.hamiltonian[(ud, ud)].re) / TWO_PI,
            effective_detuning: (h[(0, 0)].re - h[(1, 1)].re) / TWO_PI,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveBlock {
    pub hamiltonian: CMatrix,
    pub eigen_indices: Vec<usize>,
    pub overlaps: Vec<f64>,
}

/// Numerically extracted flip-flop coupling.
pub fn coupling_numeric(params: &SpinParams, sublevel: Sublevel) -> Result<Coupling> {
    ExcitedSpectrum::new(params).coupling(params, sublevel)
}

/// All three couplings from one diagonalisation.
pub fn couplings(params: &SpinParams) -> Result<[Coupling; 3]> {
    let spectrum = ExcitedSpectrum::new(params);
    Ok([
        spectrum.coupling(params, Sublevel::Plus)?,
        spectrum.coupling(params, Sublevel::Zero)?,
        spectrum.coupling(params, Sublevel::Minus)?,
    ])
}

/// Second-order eigenvalues and first-order eigenvectors of the excited
/// manifold.
#[derive(Debug, Clone)]
pub struct EffectiveSpectrum {
    /// Second-order energies (rad/µs), grouped by sublevel.
    pub eigenvalues: Vec<f64>,
    /// First-order eigenvectors as orthonormal columns.
    pub vectors: CMatrix,
    /// Dominant sublevel of each column.
    pub labels: Vec<Sublevel>,
}

impl EffectiveSpectrum {
    /// `V diag(E) V†`
    pub fn reconstruct(&self) -> CMatrix {
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&e| c(e)),
        ));
        &self.vectors * diag * self.vectors.adjoint()
    }

    /// Compare against exact eigenvalues (both sorted).
    pub fn accuracy(&self, params: &SpinParams) -> SpectrumAccuracy {
        let exact = ExcitedSpectrum::new(params);
        let mut approx = self.eigenvalues.clone();
        approx.sort_by(f64::total_cmp);
        let max_abs = approx
            .iter()
            .zip(&exact.values)
            .map(|(a, e)| (a - e).abs())
            .fold(0.0f64, f64::max);
        // some levels sit near zero, so errors are measured against the spectral radius
        let radius = exact.values.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let max_rel = if radius > 0.0 { max_abs / radius } else { 0.0 };
        let hf = TWO_PI * params.a.abs().max(params.a_prime.abs());
        let scale = hf.powi(3) / (TWO_PI * params.omega_e).powi(2);
        let recon = self.reconstruct();
        SpectrumAccuracy {
            max_abs_error: max_abs,
            max_rel_error: max_rel,
            third_order_constant: if scale > 0.0 { max_abs / scale } else { 0.0 },
            reconstruction_rel_error: linalg::frobenius(&(&recon - &exact.hamiltonian))
                / linalg::frobenius(&exact.hamiltonian),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumAccuracy {
    pub max_abs_error: f64,
    /// Relative to the largest exact level.
    pub max_rel_error: f64,
    /// `C` in `max|E − E_exact| = C·(2πA)³/(2πω_e)²`.
    pub third_order_constant: f64,
    pub reconstruction_rel_error: f64,
}

/// Quasi-degenerate perturbation theory with each sublevel's four nuclear
/// states as a model space.
///
/// The second-order effective Hamiltonian inside a sublevel is diagonalised
/// exactly, so degenerate flip-flop pairs get well-defined eigenvectors.
pub fn perturbative_spectrum(params: &SpinParams) -> Result<EffectiveSpectrum> {
    let h = build_excited(params);
    let n = h.nrows();
    let e0: Vec<f64> = (0..n).map(|i| h[(i, i)].re).collect();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut columns = CMatrix::zeros(n, n);
    let mut labels = Vec::with_capacity(n);

    for sublevel in Sublevel::ALL {
        let model: Vec<usize> = BasisLayout::Excited.sublevel_indices(sublevel).collect();
        let outside: Vec<usize> = (0..n).filter(|i| !model.contains(i)).collect();

        for &a in &model {
            for &m in &outside {
                let v = h[(a, m)].norm();
                if v == 0.0 {
                    continue;
                }
                let gap = (e0[a] - e0[m]).abs();
                let ratio = if gap > 0.0 { v / gap } else { f64::INFINITY };
                if ratio > MAX_MIXING_RATIO {
                    return Err(Error::AccidentalDegeneracy { levels: (a, m), ratio });
                }
            }
        }

        let mut heff = CMatrix::zeros(4, 4);
        for (i, &a) in model.iter().enumerate() {
            heff[(i, i)] += c(e0[a]);
            for (j, &b) in model.iter().enumerate() {
                for &m in &outside {
                    let coupling = h[(a, m)] * h[(m, b)];
                    if coupling.norm() == 0.0 {
                        continue;
                    }
                    let denom = 0.5 * (1.0 / (e0[a] - e0[m]) + 1.0 / (e0[b] - e0[m]));
                    heff[(i, j)] += coupling * denom;
                }
            }
        }
        let (values, vecs) = linalg::eigh(&heff);
        for (k, value) in values.into_iter().enumerate() {
            let col = eigenvalues.len();
            for (i, &a) in model.iter().enumerate() {
                let amp = vecs[(i, k)];
                columns[(a, col)] += amp;
                for &m in &outside {
                    if h[(m, a)].norm() > 0.0 {
                        columns[(m, col)] += amp * h[(m, a)] / (e0[a] - e0[m]);
                    }
                }
            }
            eigenvalues.push(value);
            labels.push(sublevel);
        }
    }

    Ok(EffectiveSpectrum {
        eigenvalues,
        vectors: linalg::lowdin_orthonormalize(&columns),
        labels,
    })
}

/// Distance of the parameters from the two first-order degeneracy lines
/// `A′ − A = ±2(ω_n′ − ω_n)` (MHz).
pub fn degeneracy_residual(params: &SpinParams) -> (f64, f64) {
    let da = params.a_prime - params.a;
    let dw = params.omega_nprime - params.omega_n;
    ((da - 2.0 * dw).abs(), (da + 2.0 * dw).abs())
}

/// Hyperfine `A′` that makes the `T_i` flip-flop pair degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgePoint {
    /// From `A′ − A = 2m(ω_n′ − ω_n)` with `m = ±1`.
    pub a_prime_first_order: f64,
    /// Root of the effective detuning including second-order shifts.
    pub a_prime_refined: f64,
}

/// Locate the degeneracy ridge for `T₊` or `T₋` at the given `ω_n′`.
pub fn ridge_partner(params: &SpinParams, sublevel: Sublevel) -> Result<RidgePoint> {
    let m = sublevel.projection();
    if m == 0.0 {
        return Err(Error::Domain("T₀ has no hyperfine-tuned ridge".into()));
    }
    let first = params.a + 2.0 * (params.omega_nprime - params.omega_n) / m;
    let detuning = |a_prime: f64| -> Result<f64> {
        let p = SpinParams { a_prime, ..*params };
        Ok(coupling_numeric(&p, sublevel)?.effective_detuning)
    };
    let mut width = 1e-3 * first.abs().max(1.0);
    let (mut lo, mut hi) = (first - width, first + width);
    let (mut f_lo, mut f_hi) = (detuning(lo)?, detuning(hi)?);
    while f_lo.signum() == f_hi.signum() {
        width *= 2.0;
        if width > 1.0 + first.abs() {
            return Err(Error::Domain(format!(
                "no degeneracy ridge near A′ = {first:.4} MHz"
            )));
        }
        lo = first - width;
        hi = first + width;
        f_lo = detuning(lo)?;
        f_hi = detuning(hi)?;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let f_mid = detuning(mid)?;
        if f_mid == 0.0 || (hi - lo) < 1e-13 * first.abs().max(1.0) {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(RidgePoint {
        a_prime_first_order: first,
        a_prime_refined: 0.5 * (lo + hi),
    })
}
