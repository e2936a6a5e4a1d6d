//! Spin matrices, tensor-product embeddings, and the basis convention.
//!
//! The composite basis index is `electron·4 + n·2 + n′`. Electron levels are
//! ordered `[|0⟩, T₊, T₀, T₋]` in the full 16-state space and `[T₊, T₀, T₋]`
//! in the 12-state excited manifold. Nuclear levels are ordered `[↑, ↓]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};

/// Dense complex square matrix. Dimension is `nrows()`.
pub type Operator = CMatrix;

/// 4×4 density matrix on the two nuclear spins.
pub type DensityMatrix = CMatrix;

pub const FULL_DIM: usize = 16;
pub const EXCITED_DIM: usize = 12;
pub const NUCLEAR_DIM: usize = 4;

/// Triplet sublevel along the applied field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sublevel {
    Plus,
    Zero,
    Minus,
}

impl Sublevel {
    pub const ALL: [Sublevel; 3] = [Sublevel::Plus, Sublevel::Zero, Sublevel::Minus];

    /// Position in the excited-manifold ordering `[T₊, T₀, T₋]`.
    pub fn index(self) -> usize {
        match self {
            Sublevel::Plus => 0,
            Sublevel::Zero => 1,
            Sublevel::Minus => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Electron spin projection `m_S`.
    pub fn projection(self) -> f64 {
        match self {
            Sublevel::Plus => 1.0,
            Sublevel::Zero => 0.0,
            Sublevel::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sublevel::Plus => "+",
            Sublevel::Zero => "0",
            Sublevel::Minus => "-",
        }
    }
}

impl std::fmt::Display for Sublevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "T{}", self.symbol())
    }
}

/// Nuclear spin state in the `[↑, ↓]` ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nuclear {
    Up,
    Down,
}

impl Nuclear {
    pub fn index(self) -> usize {
        match self {
            Nuclear::Up => 0,
            Nuclear::Down => 1,
        }
    }

    fn from_index(i: usize) -> Self {
        if i == 0 {
            Nuclear::Up
        } else {
            Nuclear::Down
        }
    }
}

/// Electron level in the full space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Electron {
    Ground,
    Triplet(Sublevel),
}

/// Which factor of the tensor product an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Electron,
    NucleusN,
    NucleusNPrime,
}

/// Target space of an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisLayout {
    /// Ground `|0⟩` plus the triplet: 16 states, ground at indices 0..4.
    Full,
    /// Triplet only: 12 states.
    Excited,
}

impl BasisLayout {
    pub fn dim(self) -> usize {
        match self {
            BasisLayout::Full => FULL_DIM,
            BasisLayout::Excited => EXCITED_DIM,
        }
    }

    fn electron_levels(self) -> usize {
        self.dim() / NUCLEAR_DIM
    }

    pub fn compose(self, electron: Electron, n: Nuclear, n_prime: Nuclear) -> usize {
        let e = match (self, electron) {
            (BasisLayout::Full, Electron::Ground) => 0,
            (BasisLayout::Full, Electron::Triplet(s)) => s.index() + 1,
            (BasisLayout::Excited, Electron::Triplet(s)) => s.index(),
            (BasisLayout::Excited, Electron::Ground) => {
                panic!("the excited layout has no ground level")
            }
        };
        e * NUCLEAR_DIM + n.index() * 2 + n_prime.index()
    }

    pub fn decompose(self, index: usize) -> (Electron, Nuclear, Nuclear) {
        assert!(index < self.dim(), "basis index {index} out of range");
        let e = index / NUCLEAR_DIM;
        let electron = match self {
            BasisLayout::Full if e == 0 => Electron::Ground,
            BasisLayout::Full => Electron::Triplet(Sublevel::ALL[e - 1]),
            BasisLayout::Excited => Electron::Triplet(Sublevel::ALL[e]),
        };
        let nuc = index % NUCLEAR_DIM;
        (electron, Nuclear::from_index(nuc / 2), Nuclear::from_index(nuc % 2))
    }

    /// Indices spanning the nuclear subspace of one triplet sublevel.
    pub fn sublevel_indices(self, sublevel: Sublevel) -> std::ops::Range<usize> {
        let offset = match self {
            BasisLayout::Full => NUCLEAR_DIM,
            BasisLayout::Excited => 0,
        };
        let start = offset + sublevel.index() * NUCLEAR_DIM;
        start..start + NUCLEAR_DIM
    }
}

/// Index of a two-nuclei state within a 4-dimensional nuclear block.
pub fn nuclear_index(n: Nuclear, n_prime: Nuclear) -> usize {
    n.index() * 2 + n_prime.index()
}

/// Index of `|↓↑⟩` inside a nuclear block.
pub const DOWN_UP: usize = 2;
/// Index of `|↑↓⟩` inside a nuclear block.
pub const UP_DOWN: usize = 1;

/// Spin-½ matrices `(Sx, Sy, Sz)` with eigenvalues ±½.
pub fn spin_half_ops() -> [Operator; 3] {
    let sx = linalg::from_real(2, 2, &[0.0, 0.5, 0.5, 0.0]);
    let sy = CMatrix::from_row_slice(2, 2, &[c(0.0), -I * 0.5, I * 0.5, c(0.0)]);
    let sz = linalg::from_real(2, 2, &[0.5, 0.0, 0.0, -0.5]);
    [sx, sy, sz]
}

/// Spin-1 matrices `(Sx, Sy, Sz)` in the `[T₊, T₀, T₋]` ordering.
pub fn spin_one_ops() -> [Operator; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sx = linalg::from_real(3, 3, &[0.0, r, 0.0, r, 0.0, r, 0.0, r, 0.0]);
    let z = c(0.0);
    let sy = CMatrix::from_row_slice(3, 3, &[z, -I * r, z, I * r, z, -I * r, z, I * r, z]);
    let sz = linalg::from_real(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    [sx, sy, sz]
}

/// Pauli σ_z in the `[↑, ↓]` ordering.
pub fn pauli_z() -> Operator {
    linalg::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

/// Place a single-factor operator into the composite space.
///
/// Electron operators are 3×3 on the triplet. Embedded into the full layout
/// they vanish on the ground manifold. Nuclear operators are 2×2 and act on
/// every electron level.
pub fn embed(op: &Operator, slot: Slot, layout: BasisLayout) -> Result<Operator> {
    let expected = match slot {
        Slot::Electron => 3,
        Slot::NucleusN | Slot::NucleusNPrime => 2,
    };
    if op.nrows() != expected || op.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: op.nrows(),
        });
    }
    let eye2 = linalg::identity(2);
    let levels = layout.electron_levels();
    let embedded = match slot {
        Slot::Electron => {
            let mut electron = CMatrix::zeros(levels, levels);
            let offset = levels - 3;
            electron.view_mut((offset, offset), (3, 3)).copy_from(op);
            linalg::kron(&linalg::kron(&electron, &eye2), &eye2)
        }
        Slot::NucleusN => {
            linalg::kron(&linalg::kron(&linalg::identity(levels), op), &eye2)
        }
        Slot::NucleusNPrime => {
            linalg::kron(&linalg::kron(&linalg::identity(levels), &eye2), op)
        }
    };
    Ok(embedded)
}

/// The three embedded components of a spin vector.
pub fn embed_vector(ops: &[Operator; 3], slot: Slot, layout: BasisLayout) -> Result<[Operator; 3]> {
    Ok([
        embed(&ops[0], slot, layout)?,
        embed(&ops[1], slot, layout)?,
        embed(&ops[2], slot, layout)?,
    ])
}

/// Swap of the two nuclei on a 4-dimensional nuclear space.
pub fn nuclear_swap() -> Operator {
    let mut s = CMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            s[(a * 2 + b, b * 2 + a)] = c(1.0);
        }
    }
    s
}

/// Swap of the two nuclei lifted to a layout (identity on the electron).
pub fn nuclear_swap_on(layout: BasisLayout) -> Operator {
    linalg::kron(&linalg::identity(layout.electron_levels()), &nuclear_swap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, frobenius, hermiticity_deviation};

    fn basis(dim: usize, i: usize) -> nalgebra::DVector<num_complex::Complex64> {
        let mut v = nalgebra::DVector::zeros(dim);
        v[i] = c(1.0);
        v
    }

    #[test]
    fn spin_half_algebra() {
        let [sx, sy, sz] = spin_half_ops();
        assert!(frobenius(&(commutator(&sx, &sy) - &sz * I)) < 1e-15);
        assert!(frobenius(&(commutator(&sy, &sz) - &sx * I)) < 1e-15);
        assert!(frobenius(&(commutator(&sz, &sx) - &sy * I)) < 1e-15);
        let up = basis(2, 0);
        assert_eq!(&sz * &up, up.scale(0.5));
        let raise = &sx + &sy * I;
        assert_eq!(&raise * basis(2, 1), basis(2, 0));
        let casimir = &sx * &sx + &sy * &sy + &sz * &sz;
        assert!((linalg::trace(&casimir).re - 1.5).abs() < 1e-15);
    }

    #[test]
    fn spin_one_algebra() {
        let [sx, sy, sz] = spin_one_ops();
        assert!(frobenius(&(commutator(&sx, &sy) - &sz * I)) < 1e-15);
        assert!(frobenius(&(commutator(&sy, &sz) - &sx * I)) < 1e-15);
        assert!(frobenius(&(commutator(&sz, &sx) - &sy * I)) < 1e-15);
        let plus = basis(3, 0);
        assert_eq!(&sz * &plus, plus);
        let lower = &sx - &sy * I;
        let out = &lower * &plus;
        assert!((out[1].re - 2f64.sqrt()).abs() < 1e-15 && out[0].norm() + out[2].norm() < 1e-15);
        assert!((&sz * &sz * basis(3, 1)).norm() < 1e-15);
    }

    #[test]
    fn embeddings_on_disjoint_slots_commute() {
        let half = spin_half_ops();
        let one = spin_one_ops();
        for layout in [BasisLayout::Full, BasisLayout::Excited] {
            for a in 0..3 {
                for b in 0..3 {
                    let e = embed(&one[a], Slot::Electron, layout).unwrap();
                    let n = embed(&half[b], Slot::NucleusN, layout).unwrap();
                    let m = embed(&half[a], Slot::NucleusNPrime, layout).unwrap();
                    assert!(frobenius(&commutator(&e, &n)) < 1e-12);
                    assert!(frobenius(&commutator(&n, &m)) < 1e-12);
                    assert!(frobenius(&commutator(&e, &m)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_embeds_to_identity() {
        for layout in [BasisLayout::Full, BasisLayout::Excited] {
            let e = embed(&linalg::identity(2), Slot::NucleusN, layout).unwrap();
            assert_eq!(e, linalg::identity(layout.dim()));
        }
    }

    #[test]
    fn electron_sz_on_t_plus_up_up() {
        let [_, _, sz] = spin_one_ops();
        let e = embed(&sz, Slot::Electron, BasisLayout::Full).unwrap();
        let idx = BasisLayout::Full.compose(Electron::Triplet(Sublevel::Plus), Nuclear::Up, Nuclear::Up);
        assert_eq!(idx, 4);
        assert!((e[(idx, idx)].re - 1.0).abs() < 1e-15);
        // ground manifold untouched
        for i in 0..4 {
            for j in 0..16 {
                assert_eq!(e[(i, j)], c(0.0));
            }
        }
    }

    #[test]
    fn embed_preserves_hermiticity_and_norm() {
        let one = spin_one_ops();
        for op in one.iter() {
            let e = embed(op, Slot::Electron, BasisLayout::Full).unwrap();
            assert!(hermiticity_deviation(&e) < 1e-15);
            let norm = |m: &CMatrix| m.clone().svd(false, false).singular_values.max();
            assert!((norm(op) - norm(&e)).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let [sx, ..] = spin_half_ops();
        assert!(matches!(
            embed(&sx, Slot::Electron, BasisLayout::Full),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn index_round_trip() {
        for layout in [BasisLayout::Full, BasisLayout::Excited] {
            for idx in 0..layout.dim() {
                let (e, n, m) = layout.decompose(idx);
                assert_eq!(layout.compose(e, n, m), idx);
            }
        }
        assert_eq!(nuclear_index(Nuclear::Down, Nuclear::Up), DOWN_UP);
        assert_eq!(nuclear_index(Nuclear::Up, Nuclear::Down), UP_DOWN);
        assert_eq!(BasisLayout::Full.sublevel_indices(Sublevel::Minus), 12..16);
    }
}
