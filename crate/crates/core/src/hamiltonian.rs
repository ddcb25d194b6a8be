//! Matrix-free Heisenberg ring Hamiltonian H = Σ_k J_k S_k·S_{k+1} in one S_z sector.

use std::ops::{Add, Mul};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{SpinBasis, StateVector};
use crate::error::{Error, Result};
use crate::profiles::CouplingVector;

/// Largest sector dimension materialized as a dense matrix.
pub const DENSE_LIMIT: usize = 4096;

const PARALLEL_THRESHOLD: usize = 1 << 14;

/// Operator normalization of S_k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// S_k are Pauli matrices; a bond singlet has energy -3J.
    #[default]
    Pauli,
    /// S_k are spin-1/2 operators (Pauli / 2); every energy is 1/4 of the Pauli value.
    SpinHalf,
}

impl Convention {
    /// Factor multiplying the Pauli-convention bond operator.
    pub fn scale(self) -> f64 {
        match self {
            Convention::Pauli => 1.0,
            Convention::SpinHalf => 0.25,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Pauli => "pauli",
            Convention::SpinHalf => "spin_half",
        }
    }
}

/// Amplitude types the Hamiltonian can act on.
pub trait Scalar: Copy + Send + Sync + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bond {
    mask: u32,
    // already multiplied by the convention scale
    j: f64,
}

/// H restricted to the sector of `basis`.
#[derive(Debug, Clone)]
pub struct HamiltonianView {
    basis: Arc<SpinBasis>,
    couplings: CouplingVector,
    convention: Convention,
    bonds: Vec<Bond>,
}

impl HamiltonianView {
    pub fn new(basis: Arc<SpinBasis>, couplings: CouplingVector, convention: Convention) -> Result<Self> {
        let n = basis.n_sites();
        if couplings.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} couplings for a ring of {n} sites",
                couplings.len()
            )));
        }
        let scale = convention.scale();
        let bonds = (0..n)
            .map(|b| Bond {
                mask: (1u32 << b) | (1u32 << ((b + 1) % n)),
                j: couplings.values()[b] * scale,
            })
            .collect();
        Ok(Self {
            basis,
            couplings,
            convention,
            bonds,
        })
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    pub fn couplings(&self) -> &CouplingVector {
        &self.couplings
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Diagonal matrix element ⟨c|H|c⟩.
    #[inline]
    pub fn diagonal(&self, config: u32) -> f64 {
        self.bonds
            .iter()
            .map(|b| {
                let m = config & b.mask;
                if m == 0 || m == b.mask {
                    b.j
                } else {
                    -b.j
                }
            })
            .sum()
    }

    #[inline]
    fn row<T: Scalar>(&self, i: usize, x: &[T]) -> T {
        let c = self.basis.state(i);
        let mut acc = x[i] * self.diagonal(c);
        for b in &self.bonds {
            let m = c & b.mask;
            if m != 0 && m != b.mask && b.j != 0.0 {
                let j = self.basis.rank(c ^ b.mask);
                acc = acc + x[j] * (2.0 * b.j);
            }
        }
        acc
    }

    /// y = H x on raw amplitude slices. Each output entry is accumulated by one
    /// worker in fixed bond order, so results do not depend on the thread count.
    pub fn apply_into<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        if self.dim() >= PARALLEL_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row(i, x));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row(i, x));
        }
    }

    /// H v.
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if !v.basis().same_sector(&self.basis) {
            return Err(Error::BasisMismatch(format!(
                "vector over ({}, {}), operator over ({}, {})",
                v.basis().n_sites(),
                v.basis().n_up(),
                self.basis.n_sites(),
                self.basis.n_up()
            )));
        }
        let mut out = vec![Complex64::zero(); self.dim()];
        self.apply_into(v.amplitudes(), &mut out);
        StateVector::from_amplitudes(self.basis.clone(), out)
    }

    /// ⟨v|H|v⟩ / ⟨v|v⟩.
    pub fn expectation(&self, v: &StateVector) -> Result<f64> {
        let hv = self.apply(v)?;
        Ok(v.inner(&hv)?.re / v.inner(v)?.re)
    }

    /// Dense real-symmetric matrix of H in the sector basis.
    pub fn materialize_dense(&self) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        if dim > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge { dim, limit: DENSE_LIMIT });
        }
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for (i, &c) in self.basis.states().iter().enumerate() {
            m[(i, i)] = self.diagonal(c);
            for b in &self.bonds {
                let bits = c & b.mask;
                if bits != 0 && bits != b.mask {
                    let j = self.basis.rank(c ^ b.mask);
                    m[(i, j)] += 2.0 * b.j;
                }
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{spin_flip, translate};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn full_space_eigenvalues(j: &[f64], conv: Convention) -> Vec<f64> {
        let n = j.len();
        let mut all = Vec::new();
        for up in 0..=n {
            let b = SpinBasis::shared(n, up).unwrap();
            let h = HamiltonianView::new(b, CouplingVector::new(j.to_vec()).unwrap(), conv).unwrap();
            let m = h.materialize_dense().unwrap();
            all.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
        }
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all
    }

    /// Independent oracle: H = Σ J_k (XX + YY + ZZ) assembled from explicit
    /// 2^n Kronecker products of Pauli matrices.
    fn kronecker_oracle(j: &[f64]) -> DMatrix<Complex64> {
        let n = j.len();
        let dim = 1usize << n;
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let paulis = [
            DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
            DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
        ];
        let id = DMatrix::<Complex64>::identity(2, 2);
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for (k, &jk) in j.iter().enumerate() {
            for p in &paulis {
                // site index 0 is the least significant bit, i.e. the rightmost factor
                let mut op = DMatrix::<Complex64>::identity(1, 1);
                for site in (0..n).rev() {
                    let f = if site == k || site == (k + 1) % n { p } else { &id };
                    op = op.kronecker(f);
                }
                h += op * Complex64::new(jk, 0.0);
            }
        }
        h
    }

    #[test]
    fn zero_couplings_give_zero_vector() {
        let b = SpinBasis::shared(5, 2).unwrap();
        let h = HamiltonianView::new(b.clone(), CouplingVector::uniform(5, 0.0).unwrap(), Convention::Pauli).unwrap();
        let amps: Vec<f64> = (0..b.dim()).map(|i| i as f64 + 1.0).collect();
        let v = StateVector::from_real(b, &amps).unwrap();
        assert!(h.apply(&v).unwrap().norm() == 0.0);
    }

    #[test]
    fn three_site_uniform_ring_spectrum() {
        // every pair is a bond, so E = 2 S(S+1) - 9/2 in Pauli units: S = 1/2 -> -3, S = 3/2 -> 3
        let e = full_space_eigenvalues(&[1.0; 3], Convention::Pauli);
        let expected = [-3.0, -3.0, -3.0, -3.0, 3.0, 3.0, 3.0, 3.0];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn sector_matrices_match_kronecker_oracle() {
        let j = [0.7, 1.3, 0.4, 1.1, 0.9];
        let oracle = kronecker_oracle(&j);
        for up in 0..=5 {
            let b = SpinBasis::shared(5, up).unwrap();
            let h = HamiltonianView::new(b.clone(), CouplingVector::new(j.to_vec()).unwrap(), Convention::Pauli).unwrap();
            let m = h.materialize_dense().unwrap();
            for (a, &ca) in b.states().iter().enumerate() {
                for (c, &cc) in b.states().iter().enumerate() {
                    let o = oracle[(ca as usize, cc as usize)];
                    assert!(o.im.abs() < 1e-14);
                    assert!((m[(a, c)] - o.re).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn bond_singlet_has_energy_minus_three() {
        let b = SpinBasis::shared(3, 2).unwrap();
        let h = HamiltonianView::new(b.clone(), CouplingVector::new(vec![1.0, 0.0, 0.0]).unwrap(), Convention::Pauli).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // sites 1,2 in a singlet, site 3 up
        let v = StateVector::from_terms(
            b,
            &[(0b101, Complex64::new(s, 0.0)), (0b110, Complex64::new(-s, 0.0))],
        )
        .unwrap();
        let hv = h.apply(&v).unwrap();
        let r = hv.add_scaled(Complex64::new(3.0, 0.0), &v).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn four_site_uniform_ring_singlet() {
        let e = full_space_eigenvalues(&[1.0; 4], Convention::Pauli);
        assert!((e[0] + 8.0).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn dense_matches_apply_and_is_symmetric() {
        let b = SpinBasis::shared(7, 3).unwrap();
        let j = CouplingVector::new(vec![1.0, 0.3, 2.0, 0.7, 1.4, 0.9, 0.2]).unwrap();
        let h = HamiltonianView::new(b.clone(), j, Convention::Pauli).unwrap();
        let m = h.materialize_dense().unwrap();
        assert_eq!((&m - m.transpose()).amax(), 0.0);
        for col in 0..b.dim() {
            let mut e = vec![0.0; b.dim()];
            e[col] = 1.0;
            let mut y = vec![0.0; b.dim()];
            h.apply_into(&e, &mut y);
            for row in 0..b.dim() {
                assert_eq!(y[row], m[(row, col)]);
            }
        }
    }

    #[test]
    fn three_site_small_block() {
        let b = SpinBasis::shared(3, 2).unwrap();
        let h = HamiltonianView::new(b, CouplingVector::uniform(3, 1.0).unwrap(), Convention::Pauli).unwrap();
        let m = h.materialize_dense().unwrap();
        // one aligned bond (+1) and two anti-aligned bonds (-1) per configuration
        for i in 0..3 {
            assert_eq!(m[(i, i)], -1.0);
            for k in 0..3 {
                if k != i {
                    assert_eq!(m[(i, k)], 2.0);
                }
            }
        }
    }

    #[test]
    fn dense_limit_enforced() {
        let b = SpinBasis::shared(15, 7).unwrap();
        let h = HamiltonianView::new(b, CouplingVector::uniform(15, 1.0).unwrap(), Convention::Pauli).unwrap();
        assert!(matches!(h.materialize_dense(), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn basis_mismatch_rejected() {
        let h = HamiltonianView::new(SpinBasis::shared(5, 2).unwrap(), CouplingVector::uniform(5, 1.0).unwrap(), Convention::Pauli).unwrap();
        let v = StateVector::basis_state(SpinBasis::shared(5, 3).unwrap(), 0b00111).unwrap();
        assert!(matches!(h.apply(&v), Err(Error::BasisMismatch(_))));
        assert!(HamiltonianView::new(SpinBasis::shared(5, 2).unwrap(), CouplingVector::uniform(4, 1.0).unwrap(), Convention::Pauli).is_err());
    }

    #[test]
    fn conventions_differ_by_exactly_four() {
        let j = vec![0.3, 1.2, 0.8, 1.9, 0.5, 1.1];
        let p = full_space_eigenvalues(&j, Convention::Pauli);
        let s = full_space_eigenvalues(&j, Convention::SpinHalf);
        for (a, b) in p.iter().zip(&s) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_ring_flip_related_sectors_share_spectra() {
        let j = vec![1.0; 8];
        for up in 0..=8 {
            let a = HamiltonianView::new(SpinBasis::shared(8, up).unwrap(), CouplingVector::new(j.clone()).unwrap(), Convention::Pauli).unwrap();
            let b = HamiltonianView::new(SpinBasis::shared(8, 8 - up).unwrap(), CouplingVector::new(j.clone()).unwrap(), Convention::Pauli).unwrap();
            let ea = SymmetricEigen::new(a.materialize_dense().unwrap()).eigenvalues;
            let eb = SymmetricEigen::new(b.materialize_dense().unwrap()).eigenvalues;
            let mut ea: Vec<f64> = ea.iter().copied().collect();
            let mut eb: Vec<f64> = eb.iter().copied().collect();
            ea.sort_by(|x, y| x.partial_cmp(y).unwrap());
            eb.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (x, y) in ea.iter().zip(&eb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    proptest! {
        #[test]
        fn hermitian_on_random_vectors(n in 3usize..10, seed in 0u64..10_000) {
            let up = n / 2;
            let b = SpinBasis::shared(n, up).unwrap();
            let j: Vec<f64> = pseudo_random(n, seed).iter().map(|x| x + 1.0).collect();
            let h = HamiltonianView::new(b.clone(), CouplingVector::new(j).unwrap(), Convention::Pauli).unwrap();
            let u = StateVector::from_real(b.clone(), &pseudo_random(b.dim(), seed + 1)).unwrap();
            let v = StateVector::from_real(b.clone(), &pseudo_random(b.dim(), seed + 2)).unwrap();
            let lhs = u.inner(&h.apply(&v).unwrap()).unwrap();
            let rhs = h.apply(&u).unwrap().inner(&v).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn energy_invariant_under_global_flip(n in 3usize..10, seed in 0u64..10_000) {
            let up = (seed as usize) % (n + 1);
            let j: Vec<f64> = pseudo_random(n, seed).iter().map(|x| x + 1.0).collect();
            let b = SpinBasis::shared(n, up).unwrap();
            let v = StateVector::from_real(b.clone(), &pseudo_random(b.dim(), seed + 5)).unwrap();
            let f = spin_flip(&v);
            let h = HamiltonianView::new(b, CouplingVector::new(j.clone()).unwrap(), Convention::Pauli).unwrap();
            let hf = HamiltonianView::new(f.basis().clone(), CouplingVector::new(j).unwrap(), Convention::Pauli).unwrap();
            prop_assert!((h.expectation(&v).unwrap() - hf.expectation(&f).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn uniform_ring_commutes_with_translation(n in 3usize..11, seed in 0u64..10_000) {
            let b = SpinBasis::shared(n, n / 2).unwrap();
            let h = HamiltonianView::new(b.clone(), CouplingVector::uniform(n, 0.83).unwrap(), Convention::Pauli).unwrap();
            let v = StateVector::from_real(b, &pseudo_random(h.dim(), seed)).unwrap().normalized();
            let a = h.apply(&translate(&v, 1)).unwrap();
            let c = translate(&h.apply(&v).unwrap(), 1);
            prop_assert!(a.add_scaled(Complex64::new(-1.0, 0.0), &c).unwrap().norm() < 1e-12);
        }

        #[test]
        fn sector_is_conserved(n in 3usize..9, seed in 0u64..1000) {
            // acting on each sector basis vector lands back in the sector (apply never indexes outside it)
            let up = (seed as usize) % (n + 1);
            let b = SpinBasis::shared(n, up).unwrap();
            let h = HamiltonianView::new(b.clone(), CouplingVector::new(pseudo_random(n, seed)).unwrap(), Convention::Pauli).unwrap();
            let total: Vec<f64> = (0..b.dim()).map(|i| {
                let mut e = vec![0.0; b.dim()];
                e[i] = 1.0;
                let mut y = vec![0.0; b.dim()];
                h.apply_into(&e, &mut y);
                y.iter().map(|x| x * x).sum::<f64>()
            }).collect();
            // column norms of the sector block equal those of the Kronecker oracle restricted to the sector
            let oracle = kronecker_oracle(h.couplings().values());
            for (i, &c) in b.states().iter().enumerate() {
                let full: f64 = (0..(1usize << n)).map(|r| oracle[(r, c as usize)].norm_sqr()).sum();
                prop_assert!((full - total[i]).abs() < 1e-10);
            }
        }
    }
}
