//! Spin Hamiltonian of two nuclei coupled to a transient triplet.
//!
//! ```text
//! H = −ω_n σ_z,n − ω_n′ σ_z,n′
//!     + |e⟩(ω_e S_z,e + ω₀ + A 𝐒_n·𝐒_e + A′ 𝐒_n′·𝐒_e + D S²_z,e)⟨e|
//! ```
//!
//! The nuclear Zeeman terms use the Pauli matrix σ_z, the hyperfine terms use
//! spin-½ vectors 𝐒 = σ/2, and the electron is spin-1. Coefficients are MHz on
//! input and rad/µs in every returned operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};
use crate::spincore::{self, BasisLayout, Operator, Slot};
use crate::TWO_PI;

/// Ratio below which a coupling counts as small against the electron Zeeman.
pub const PERTURBATIVE_RATIO: f64 = 0.1;

/// Hamiltonian constants, all ordinary frequencies in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    pub omega_n: f64,
    pub omega_nprime: f64,
    pub omega_e: f64,
    #[serde(default)]
    pub omega_0: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "A_prime")]
    pub a_prime: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(default = "default_gamma_opt")]
    pub gamma_opt: f64,
}

/// Extra optical linewidth on top of the lifetime-limited width (MHz).
pub const DEFAULT_GAMMA_OPT: f64 = 1e-6;

fn default_gamma_opt() -> f64 {
    DEFAULT_GAMMA_OPT
}

impl Default for SpinParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl SpinParams {
    /// Functionalised-fullerene reference values: ω_e = 9.6 GHz,
    /// ω_n = ω_n′ = 3.7 MHz, A = A′ = 2.5 MHz, D = −296 MHz.
    pub fn reference() -> Self {
        Self {
            omega_n: 3.7,
            omega_nprime: 3.7,
            omega_e: 9600.0,
            omega_0: 0.0,
            a: 2.5,
            a_prime: 2.5,
            d: -296.0,
            gamma_opt: DEFAULT_GAMMA_OPT,
        }
    }

    /// Same parameters with `A = A′ = hyperfine`.
    pub fn with_hyperfine(mut self, hyperfine: f64) -> Self {
        self.a = hyperfine;
        self.a_prime = hyperfine;
        self
    }

    /// Asymmetric variant used by the asymmetry map:
    /// `ω_n′ = ω_n(1 + Δ₁)` and `A′ = A(1 + sign·Δ₂)`.
    pub fn with_asymmetry(mut self, delta1: f64, delta2: f64, sign: f64) -> Self {
        self.omega_nprime = self.omega_n * (1.0 + delta1);
        self.a_prime = self.a * (1.0 + sign.signum() * delta2);
        self
    }

    pub fn is_symmetric(&self) -> bool {
        self.a == self.a_prime && self.omega_n == self.omega_nprime
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_n", self.omega_n),
            ("omega_nprime", self.omega_nprime),
            ("omega_e", self.omega_e),
            ("omega_0", self.omega_0),
            ("A", self.a),
            ("A_prime", self.a_prime),
            ("D", self.d),
            ("gamma_opt", self.gamma_opt),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be finite")));
        }
        if self.omega_e <= 0.0 {
            return Err(Error::Domain("omega_e must be positive".into()));
        }
        if self.gamma_opt <= 0.0 {
            return Err(Error::Domain("gamma_opt must be positive".into()));
        }
        Ok(())
    }

    /// Whether every coupling is below [`PERTURBATIVE_RATIO`]·ω_e.
    pub fn perturbative_regime(&self) -> bool {
        [self.a, self.a_prime, self.omega_n, self.omega_nprime, self.d]
            .iter()
            .all(|v| v.abs() <= PERTURBATIVE_RATIO * self.omega_e)
    }
}

struct Terms {
    zeeman_n: Operator,
    zeeman_nprime: Operator,
    electron_zeeman: Operator,
    excited_projector: Operator,
    hyperfine_n: Operator,
    hyperfine_nprime: Operator,
    zfs: Operator,
}

fn dot(a: &[Operator; 3], b: &[Operator; 3]) -> Operator {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

fn terms(layout: BasisLayout) -> Terms {
    let half = spincore::spin_half_ops();
    let one = spincore::spin_one_ops();
    let embed = |op: &Operator, slot| spincore::embed(op, slot, layout).expect("static dimensions");
    let embed_vec = |ops: &[Operator; 3], slot| {
        spincore::embed_vector(ops, slot, layout).expect("static dimensions")
    };
    let electron = embed_vec(&one, Slot::Electron);
    let n = embed_vec(&half, Slot::NucleusN);
    let nprime = embed_vec(&half, Slot::NucleusNPrime);
    let sz = &one[2];
    Terms {
        zeeman_n: embed(&spincore::pauli_z(), Slot::NucleusN),
        zeeman_nprime: embed(&spincore::pauli_z(), Slot::NucleusNPrime),
        electron_zeeman: electron[2].clone(),
        excited_projector: embed(&linalg::identity(3), Slot::Electron),
        hyperfine_n: dot(&n, &electron),
        hyperfine_nprime: dot(&nprime, &electron),
        zfs: embed(&(sz * sz), Slot::Electron),
    }
}

fn assemble(params: &SpinParams, layout: BasisLayout) -> Operator {
    let t = terms(layout);
    let h = t.zeeman_n.scale(-params.omega_n)
        + t.zeeman_nprime.scale(-params.omega_nprime)
        + t.electron_zeeman.scale(params.omega_e)
        + t.excited_projector.scale(params.omega_0)
        + t.hyperfine_n.scale(params.a)
        + t.hyperfine_nprime.scale(params.a_prime)
        + t.zfs.scale(params.d);
    h.scale(TWO_PI)
}

/// Full 16×16 Hamiltonian over ground and triplet manifolds (rad/µs).
pub fn build_full(params: &SpinParams) -> Operator {
    assemble(params, BasisLayout::Full)
}

/// 12×12 triplet-manifold block `⟨e|H|e⟩` (rad/µs).
pub fn build_excited(params: &SpinParams) -> Operator {
    assemble(params, BasisLayout::Excited)
}

/// 4×4 ground-manifold block: nuclear Zeeman only (rad/µs).
pub fn build_ground(params: &SpinParams) -> Operator {
    let mut h = CMatrix::zeros(4, 4);
    for (idx, (sn, snp)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .into_iter()
        .enumerate()
    {
        h[(idx, idx)] = c(-TWO_PI * (params.omega_n * sn + params.omega_nprime * snp));
    }
    h
}
