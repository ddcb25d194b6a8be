//! Closed-form three-spin ring: pseudo-spin doublet, Σ operators, exact
//! ground and Floquet states, and the Berry phase.
//!
//! The S = 1/2, S_z = +1/2 sector of three spins is spanned by configurations
//! with one down spin. Writing |d_k⟩ for "down spin at site k", the chiral
//! doublet is |±⟩ = (|d3⟩ + q^{±1}|d2⟩ + q^{±2}|d1⟩)/√3 with q = e^{2πi/3}.
//! The S = 3/2 member of the same sector is annihilated by every Σ.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{SpinBasis, StateVector};
use crate::error::{Error, Result};
use crate::hamiltonian::{Convention, HamiltonianView};
use crate::profiles::CouplingVector;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

const D1: u32 = 0b110;
const D2: u32 = 0b101;
const D3: u32 = 0b011;

/// Which chiral doublet member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Result of [`reparameterize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeSpinParams {
    pub j0_tilde: f64,
    pub j1_tilde: f64,
    pub phi: f64,
    /// Set when J̃1 vanishes and φ carries no information.
    pub degenerate: bool,
}

/// (J̃0, J̃1, φ) with J_k = J̃0 + J̃1 cos(2π(k-1)/3 - φ).
pub fn reparameterize(j: &CouplingVector) -> Result<ThreeSpinParams> {
    if j.len() != 3 {
        return Err(Error::InvalidRingSize(j.len()));
    }
    j.check_positive()?;
    let v = j.values();
    let j0 = v.iter().sum::<f64>() / 3.0;
    let mut z = C0;
    for (k, &jk) in v.iter().enumerate() {
        z += Complex64::from_polar(jk, 2.0 * PI * k as f64 / 3.0);
    }
    z *= 2.0 / 3.0;
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if z.norm() <= 1e-14 * scale {
        return Ok(ThreeSpinParams { j0_tilde: j0, j1_tilde: 0.0, phi: 0.0, degenerate: true });
    }
    Ok(ThreeSpinParams {
        j0_tilde: j0,
        j1_tilde: z.norm(),
        phi: z.arg().rem_euclid(2.0 * PI),
        degenerate: false,
    })
}

/// The n = 3, n_up = 2 sector.
pub fn doublet_basis() -> Arc<SpinBasis> {
    SpinBasis::shared(3, 2).expect("three-site sector")
}

/// Normalized |+⟩ or |−⟩.
pub fn chiral_state(branch: Branch) -> StateVector {
    let norm = 1.0 / 3f64.sqrt();
    let q = Complex64::from_polar(1.0, branch.sign() * 2.0 * PI / 3.0);
    StateVector::from_terms(doublet_basis(), &[(D3, C1 * norm), (D2, q * norm), (D1, q * q * norm)])
        .expect("doublet configurations")
}

/// Normalized singlet on the bond (a, a+1) with the remaining spin up.
/// `a = 1` is |SS0⟩, `a = 2` is |0SS⟩, `a = 3` is |S0S⟩.
pub fn singlet_state(a: usize) -> Result<StateVector> {
    let (first, second) = match a {
        1 => (D2, D1),
        2 => (D3, D2),
        3 => (D1, D3),
        _ => return Err(Error::InvalidParameter(format!("bond {a} is not on a three-site ring"))),
    };
    let s = 1.0 / 2f64.sqrt();
    StateVector::from_terms(doublet_basis(), &[(first, C1 * s), (second, -C1 * s)])
}

/// Σ operators in the (|+⟩, |−⟩) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaOperators {
    pub x: Matrix2<Complex64>,
    pub y: Matrix2<Complex64>,
    pub z: Matrix2<Complex64>,
}

fn bond_operator(weights: [f64; 3]) -> DMatrix<f64> {
    let j = CouplingVector::new(weights.to_vec()).expect("three finite weights");
    HamiltonianView::new(doublet_basis(), j, Convention::SpinHalf)
        .and_then(|h| h.materialize_dense())
        .expect("three-site operator")
}

fn project(op: &DMatrix<f64>) -> Matrix2<Complex64> {
    let states = [chiral_state(Branch::Plus), chiral_state(Branch::Minus)];
    let mut out = Matrix2::zeros();
    for (a, sa) in states.iter().enumerate() {
        for (b, sb) in states.iter().enumerate() {
            let mut acc = C0;
            for i in 0..3 {
                for k in 0..3 {
                    acc += sa.amplitudes()[i].conj() * op[(i, k)] * sb.amplitudes()[k];
                }
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Σ_{X±iY} = (4/3) Σ_k e^{±2πi(k-1)/3} S_k·S_{k+1} with spin-1/2 operators,
/// Σ_Z = -(i/2)[Σ_X, Σ_Y], all restricted to the doublet.
pub fn sigma_operators() -> SigmaOperators {
    let angle = |k: usize| 2.0 * PI * k as f64 / 3.0;
    let x = project(&bond_operator([0, 1, 2].map(|k| 4.0 / 3.0 * angle(k).cos())));
    let y = project(&bond_operator([0, 1, 2].map(|k| 4.0 / 3.0 * angle(k).sin())));
    let z = (x * y - y * x) * Complex64::new(0.0, -0.5);
    SigmaOperators { x, y, z }
}

/// Doublet splitting of H₃ under one operator convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionSplitting {
    pub convention: Convention,
    /// E(excited doublet member) - E(ground).
    pub gap: f64,
    /// Coefficient of (Σ_X cos φ + Σ_Y sin φ); half the gap.
    pub sigma_coefficient: f64,
    /// Whether the Σ coefficient equals 3J̃1/4.
    pub matches_three_quarters: bool,
}

/// Three-spin model with a given modulation; Δ is always measured, never assumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeSpinModel {
    pub j0_tilde: f64,
    pub j1_tilde: f64,
    pub convention: Convention,
}

impl ThreeSpinModel {
    pub fn new(j0_tilde: f64, j1_tilde: f64, convention: Convention) -> Result<Self> {
        if !(j1_tilde > 0.0) || !j0_tilde.is_finite() || !j1_tilde.is_finite() {
            return Err(Error::InvalidParameter(format!("three-spin model needs J̃1 > 0, got {j1_tilde}")));
        }
        if j0_tilde <= j1_tilde {
            return Err(Error::InvalidParameter(format!(
                "J̃0 = {j0_tilde} must exceed J̃1 = {j1_tilde} to keep couplings positive"
            )));
        }
        Ok(Self { j0_tilde, j1_tilde, convention })
    }

    pub fn couplings(&self, phi: f64) -> CouplingVector {
        CouplingVector::new(
            (0..3)
                .map(|k| self.j0_tilde + self.j1_tilde * (2.0 * PI * k as f64 / 3.0 - phi).cos())
                .collect(),
        )
        .expect("finite couplings")
    }

    /// H₃(φ) on the n_up = 2 sector.
    pub fn hamiltonian(&self, phi: f64) -> DMatrix<f64> {
        HamiltonianView::new(doublet_basis(), self.couplings(phi), self.convention)
            .and_then(|h| h.materialize_dense())
            .expect("three-site operator")
    }

    /// H₃(φ) projected onto the doublet.
    pub fn projected(&self, phi: f64) -> Matrix2<Complex64> {
        project(&self.hamiltonian(phi))
    }

    /// Measured doublet splitting E1 - E0 at φ = 0.
    pub fn gap(&self) -> f64 {
        let eig = SymmetricEigen::new(self.hamiltonian(0.0));
        let mut e: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e[1] - e[0]
    }

    /// Gap Δ entering the Floquet and Berry formulas: the full doublet splitting.
    pub fn delta(&self) -> f64 {
        self.gap()
    }

    /// Splittings under both conventions.
    pub fn convention_report(&self) -> [ConventionSplitting; 2] {
        [Convention::Pauli, Convention::SpinHalf].map(|convention| {
            let gap = ThreeSpinModel { convention, ..*self }.gap();
            let sigma_coefficient = gap / 2.0;
            ConventionSplitting {
                convention,
                gap,
                sigma_coefficient,
                matches_three_quarters: (sigma_coefficient - 0.75 * self.j1_tilde).abs() < 1e-12 * self.j1_tilde.max(1.0),
            }
        })
    }
}

/// Embed doublet amplitudes (c₊, c₋) as a state on the three-site sector.
pub fn doublet_state(plus: Complex64, minus: Complex64) -> StateVector {
    chiral_state(Branch::Plus)
        .scaled(plus)
        .add_scaled(minus, &chiral_state(Branch::Minus))
        .expect("same sector")
}

/// Doublet amplitudes of a three-site state in the (|+⟩, |−⟩) basis.
pub fn doublet_components(v: &StateVector) -> Result<(Complex64, Complex64)> {
    Ok((
        chiral_state(Branch::Plus).inner(v)?,
        chiral_state(Branch::Minus).inner(v)?,
    ))
}

/// Normalized |φ⟩ = |+⟩ − e^{iφ}|−⟩.
pub fn ground_state_phi(phi: f64) -> StateVector {
    let s = 1.0 / 2f64.sqrt();
    doublet_state(C1 * s, -Complex64::from_polar(s, phi))
}

/// Exact co-moving Floquet state for drive rate ω > 0.
///
/// Its pseudo-spin Bloch vector is the normalized sum of the |SS0⟩ direction
/// (−1, 0, 0) and (ω/Δ) times the |±⟩ direction (0, 0, ±1).
pub fn floquet_state_exact(omega: f64, delta: f64, branch: Branch) -> Result<StateVector> {
    let x = check_rates(omega, delta)?;
    // polar angle from +z: cos θ = ±x/√(1+x²); azimuth π (pointing along −x)
    let cos_t = branch.sign() * x / (1.0 + x * x).sqrt();
    let theta = cos_t.clamp(-1.0, 1.0).acos();
    let plus = Complex64::new((theta / 2.0).cos(), 0.0);
    let minus = Complex64::from_polar((theta / 2.0).sin(), PI);
    Ok(doublet_state(plus, minus))
}

/// Normalized ket sum |SS0⟩ + (ω/Δ)|±⟩ with both kets normalized first and
/// |SS0⟩ phased so that ⟨±|SS0⟩ is real and positive.
pub fn floquet_state_ket_sum(omega: f64, delta: f64, branch: Branch) -> Result<StateVector> {
    let x = check_rates(omega, delta)?;
    let chiral = chiral_state(branch);
    let ss0 = singlet_state(1)?;
    let c = chiral.inner(&ss0)?;
    Ok(ss0
        .scaled(c.conj() / c.norm())
        .add_scaled(C1 * x, &chiral)?
        .normalized())
}

fn check_rates(omega: f64, delta: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("Floquet state needs ω > 0, got {omega}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("gap must be positive, got {delta}")));
    }
    Ok(omega / delta)
}

/// Ω = 2π(1 − 1/√(1 + (Δ/ω)²)), in [0, 2π).
pub fn berry_phase_exact(omega: f64, delta: f64) -> Result<f64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter("Berry phase needs ω ≠ 0".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("gap must be positive, got {delta}")));
    }
    let r = delta / omega;
    Ok(2.0 * PI * (1.0 - 1.0 / (1.0 + r * r).sqrt()))
}
