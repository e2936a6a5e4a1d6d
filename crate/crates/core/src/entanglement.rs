//! Entangling power of two-qubit gates and entanglement of mixed states.
//!
//! Entangling power is the mean linear entropy `1 − tr ρ_A²` a gate produces
//! from Haar-random product states, so a maximally entangling gate reaches
//! 2/9. Mixed-state entanglement is measured by the Wootters concurrence and
//! the entanglement of formation in ebits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::{sublevel_block, LEAK_TOL};
use crate::effective::ExcitedSpectrum;
use crate::error::{Error, Result};
use crate::hamiltonian::SpinParams;
use crate::linalg::{self, c, CMatrix, I};
use crate::spincore::{DensityMatrix, Sublevel};
use crate::{MAX_ENTANGLING_POWER, TWO_PI};

/// Minimum grid size for [`max_entangling_power`].
pub const MIN_GRID: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    ExactHaar,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub entangling_power: f64,
    pub method: Method,
    /// Standard error of the mean; zero for deterministic methods.
    pub stderr: f64,
}

fn check_unitary(u: &CMatrix) -> Result<()> {
    if u.nrows() != 4 || u.ncols() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: u.nrows(),
        });
    }
    let deviation = linalg::unitarity_deviation(u);
    if deviation > 1e-8 {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

/// Haar average over pure product states, computed exactly on two copies.
///
/// With both qubits doubled, `e = 1 − Tr[(U⊗U) Ω (U⊗U)† S_A]` where
/// `Ω = ω_A ⊗ ω_B`, `ω = (1 + SWAP)/6` and `S_A` swaps the copies of A.
pub fn entangling_power_exact(u: &CMatrix) -> Result<f64> {
    check_unitary(u)?;
    // copy-major index (a1 b1 a2 b2), one bit each
    let bits = |i: usize| ((i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1);
    let omega = |x1: usize, x2: usize, y1: usize, y2: usize| -> f64 {
        let identity = f64::from(u8::from(x1 == y1 && x2 == y2));
        let swap = f64::from(u8::from(x1 == y2 && x2 == y1));
        (identity + swap) / 6.0
    };
    let mut big_omega = CMatrix::zeros(16, 16);
    let mut swap_a = CMatrix::zeros(16, 16);
    for row in 0..16 {
        let (a1, b1, a2, b2) = bits(row);
        swap_a[(a2 << 3 | b1 << 2 | a1 << 1 | b2, row)] = c(1.0);
        for col in 0..16 {
            let (a1p, b1p, a2p, b2p) = bits(col);
            big_omega[(row, col)] = c(omega(a1, a2, a1p, a2p) * omega(b1, b2, b1p, b2p));
        }
    }
    let uu = linalg::kron(u, u);
    let evolved = &uu * big_omega * uu.adjoint();
    let purity = linalg::trace(&(evolved * swap_a)).re;
    Ok((1.0 - purity).clamp(0.0, MAX_ENTANGLING_POWER))
}

pub fn report_exact(u: &CMatrix) -> Result<EntanglementReport> {
    Ok(EntanglementReport {
        entangling_power: entangling_power_exact(u)?,
        method: Method::ExactHaar,
        stderr: 0.0,
    })
}

fn haar_qubit(rng: &mut ChaCha8Rng) -> [num_complex::Complex64; 2] {
    let mut draw = || {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        num_complex::Complex64::new(re, im)
    };
    let (x, y) = (draw(), draw());
    let norm = (x.norm_sqr() + y.norm_sqr()).sqrt();
    [x / norm, y / norm]
}

/// Linear entropy `1 − tr ρ_A²` of a two-qubit pure state.
pub fn linear_entropy(psi: &nalgebra::DVector<num_complex::Complex64>) -> f64 {
    let mut rho_a = CMatrix::zeros(2, 2);
    for a in 0..2 {
        for ap in 0..2 {
            for b in 0..2 {
                rho_a[(a, ap)] += psi[2 * a + b] * psi[2 * ap + b].conj();
            }
        }
    }
    1.0 - linalg::trace(&(&rho_a * &rho_a)).re
}

/// Monte Carlo estimate of the entangling power from `samples` Haar-random
/// product states.
pub fn entangling_power_mc(u: &CMatrix, samples: usize, seed: u64) -> Result<EntanglementReport> {
    check_unitary(u)?;
    if samples < 100 {
        return Err(Error::Domain(format!("need at least 100 samples, got {samples}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let alpha = haar_qubit(&mut rng);
        let beta = haar_qubit(&mut rng);
        let product = nalgebra::DVector::from_iterator(
            4,
            (0..4).map(|i| alpha[i >> 1] * beta[i & 1]),
        );
        let s = linear_entropy(&(u * product));
        sum += s;
        sum_sq += s * s;
    }
    let n = samples as f64;
    let mean = sum / n;
    let variance = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(EntanglementReport {
        entangling_power: mean,
        method: Method::MonteCarlo,
        stderr: (variance / n).sqrt(),
    })
}

/// `(1/9)(3 + cos 2φ) sin²φ` with `φ = 2π·a·t`, `a` in MHz and `t` in µs.
pub fn entangling_power_closed(a: f64, t: f64) -> f64 {
    let phi = TWO_PI * a * t;
    (3.0 + (2.0 * phi).cos()) * phi.sin().powi(2) / 9.0
}

/// Time evolution of one sublevel block from a single diagonalisation.
pub struct BlockEvolution {
    values: Vec<f64>,
    rows: CMatrix,
    vectors: CMatrix,
}

impl BlockEvolution {
    pub fn new(spectrum: &ExcitedSpectrum) -> Self {
        Self {
            values: spectrum.values.clone(),
            rows: spectrum.vectors.clone(),
            vectors: spectrum.vectors.adjoint(),
        }
    }

    /// Full 12×12 propagator at time `t` (µs).
    pub fn propagator(&self, t: f64) -> CMatrix {
        let phases = nalgebra::DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&e| (-I * e * t).exp()),
        );
        &self.rows * CMatrix::from_diagonal(&phases) * &self.vectors
    }

    /// Entangling power of the unitary part of a sublevel block.
    pub fn entangling_power(&self, sublevel: Sublevel, t: f64) -> Result<f64> {
        let block = sublevel_block(&self.propagator(t), sublevel, LEAK_TOL)?.accept(LEAK_TOL)?;
        entangling_power_exact(&block)
    }
}

/// Maximum over `t ∈ (0, t_max]` of the entangling power of one sublevel
/// block, returned with its argmax (µs).
pub fn max_entangling_power(params: &SpinParams, sublevel: Sublevel, t_max: f64) -> Result<(f64, f64)> {
    max_entangling_power_grid(params, sublevel, t_max, MIN_GRID)
}

pub fn max_entangling_power_grid(
    params: &SpinParams,
    sublevel: Sublevel,
    t_max: f64,
    grid: usize,
) -> Result<(f64, f64)> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!("t_max must be positive, got {t_max}")));
    }
    let evolution = BlockEvolution::new(&ExcitedSpectrum::new(params));
    let grid = grid.max(MIN_GRID);
    let step = t_max / grid as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut last_error = None;
    for j in 1..=grid {
        match evolution.entangling_power(sublevel, j as f64 * step) {
            Ok(e) => {
                if best.is_none_or(|(_, b)| e > b) {
                    best = Some((j, e));
                }
            }
            Err(err) => last_error = Some(err),
        }
    }
    let Some((j, e_grid)) = best else {
        return Err(last_error.unwrap_or(Error::Domain("empty grid".into())));
    };
    let objective = |t: f64| evolution.entangling_power(sublevel, t).unwrap_or(f64::NEG_INFINITY);
    let lo = (j as f64 - 1.0) * step;
    let hi = ((j as f64 + 1.0) * step).min(t_max);
    let (t_star, e_star) = golden_max(objective, lo, hi, 1e-4 * t_max);
    Ok(if e_star >= e_grid {
        (e_star, t_star)
    } else {
        (e_grid, j as f64 * step)
    })
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Checks that `rho` is a density matrix within `tol`.
pub fn check_density(rho: &DensityMatrix, tol: f64) -> Result<()> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: rho.nrows(),
        });
    }
    if linalg::hermiticity_deviation(rho) > tol {
        return Err(Error::InvalidDensityMatrix("not Hermitian".into()));
    }
    let tr = linalg::trace(rho).re;
    if (tr - 1.0).abs() > tol {
        return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
    }
    let (values, _) = linalg::eigh(rho);
    if values[0] < -tol {
        return Err(Error::InvalidDensityMatrix(format!(
            "negative eigenvalue {}",
            values[0]
        )));
    }
    Ok(())
}

/// Wootters concurrence.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    check_density(rho, 1e-8)?;
    let yy = linalg::from_real(4, 4, &[
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0,
    ]);
    let flipped = &yy * rho.conjugate() * &yy;
    let root = linalg::sqrt_psd(rho);
    let r = &root * flipped * &root;
    let (values, _) = linalg::eigh(&r);
    let mut lambda: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok((lambda[0] - lambda[1] - lambda[2] - lambda[3]).clamp(0.0, 1.0))
}

/// Base-2 binary entropy.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0).clamp(0.0, 1.0)
}

/// Entanglement of formation in ebits.
pub fn entanglement_of_formation(rho: &DensityMatrix) -> Result<f64> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}
