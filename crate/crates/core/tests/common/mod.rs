#![allow(dead_code)]

use chromophore_gate::linalg::{c, CMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-random unitary via QR of a complex Ginibre matrix with the phase fix.
pub fn haar_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        (0..dim).map(|i| {
            let d = r[(i, i)];
            if d.norm() == 0.0 {
                c(1.0)
            } else {
                d / d.norm()
            }
        }),
    ));
    q * phases
}

/// Random full-rank density matrix `GG†/Tr`.
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho.unscale(tr)
}

pub fn cnot() -> CMatrix {
    let mut u = CMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        u[(i, j)] = c(1.0);
    }
    u
}

pub fn swap() -> CMatrix {
    let mut u = CMatrix::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        u[(i, j)] = c(1.0);
    }
    u
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    let (values, _) = chromophore_gate::linalg::eigh(m);
    values.into_iter().fold(f64::INFINITY, f64::min)
}

/// Nuclear ground-state output of excite, wait, collect, applied to any
/// 4×4 operator by linearity from density-matrix inputs.
pub fn decay_channel(
    model: &chromophore_gate::dynamics::BranchModel,
    rates: &chromophore_gate::dynamics::DecayRates,
    populations: [f64; 3],
    wait: f64,
    input: &CMatrix,
) -> CMatrix {
    use chromophore_gate::dynamics::{apply_excitation, evolve_with_decay, EnsembleState, Horizon};
    use chromophore_gate::linalg::I;
    let run = |rho: CMatrix| -> CMatrix {
        let state = EnsembleState::new(rho).unwrap();
        let state = apply_excitation(state, model, populations).unwrap();
        let state = evolve_with_decay(state, model, rates, Horizon::Duration(wait)).unwrap();
        evolve_with_decay(state, model, rates, Horizon::Complete).unwrap().ground
    };
    let unit = |i: usize, j: usize| -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(i, j)] = c(1.0);
        m
    };
    let mut out = CMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let coefficient = input[(i, j)];
            if coefficient.norm() == 0.0 {
                continue;
            }
            let image = if i == j {
                run(unit(i, i))
            } else {
                // |i⟩⟨j| = ½[(2P₊ − Π) + i(2P_i − Π)], Π = |i⟩⟨i| + |j⟩⟨j|
                let pair = unit(i, i) + unit(j, j);
                let plus = (&pair + unit(i, j) + unit(j, i)).scale(0.5);
                let imag = (&pair - unit(i, j) * I + unit(j, i) * I).scale(0.5);
                let diag = run(unit(i, i)) + run(unit(j, j));
                ((run(plus).scale(2.0) - &diag) + (run(imag).scale(2.0) - &diag) * I).scale(0.5)
            };
            out += image * coefficient;
        }
    }
    out
}

/// Choi matrix `Σ |i⟩⟨j| ⊗ E(|i⟩⟨j|)` of [`decay_channel`].
pub fn decay_choi(
    model: &chromophore_gate::dynamics::BranchModel,
    rates: &chromophore_gate::dynamics::DecayRates,
    populations: [f64; 3],
    wait: f64,
) -> CMatrix {
    let mut choi = CMatrix::zeros(16, 16);
    for i in 0..4 {
        for j in 0..4 {
            let mut e = CMatrix::zeros(4, 4);
            e[(i, j)] = c(1.0);
            let image = decay_channel(model, rates, populations, wait, &e);
            choi += chromophore_gate::linalg::kron(&e, &image);
        }
    }
    choi
}
