//! Fixed-magnetization configuration bases for spin-1/2 rings.
//!
//! Site `k` (1-based, as in the physics notation) lives in bit `k - 1` of a
//! configuration word; a set bit is spin up. States are kept in increasing
//! integer order, which is the colexicographic order of their set-bit
//! positions, so ranking uses the combinatorial number system and no hash
//! map is needed even for sectors with ~10^8 states.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_SITES: usize = 32;

/// All `n_sites`-bit configurations with exactly `n_up` set bits.
#[derive(Debug, Clone)]
pub struct SpinBasis {
    n_sites: usize,
    n_up: usize,
    states: Vec<u32>,
    // binom[n][k] for 0 <= k <= n <= 32
    binom: Vec<[u64; MAX_SITES + 1]>,
}

fn binomial_table() -> Vec<[u64; MAX_SITES + 1]> {
    let mut t = vec![[0u64; MAX_SITES + 1]; MAX_SITES + 1];
    for n in 0..=MAX_SITES {
        t[n][0] = 1;
        for k in 1..=n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0 };
        }
    }
    t
}

/// Binomial coefficient C(n, k) for n <= 32.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n || n > MAX_SITES {
        return 0;
    }
    let mut acc: u64 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u64 / (i as u64 + 1);
    }
    acc
}

impl SpinBasis {
    /// Enumerate the `(n_sites, n_up)` sector.
    pub fn build_sector(n_sites: usize, n_up: usize) -> Result<Self> {
        if !(3..=MAX_SITES).contains(&n_sites) {
            return Err(Error::InvalidRingSize(n_sites));
        }
        if n_up > n_sites {
            return Err(Error::InvalidFilling { n_sites, n_up });
        }
        let dim = binomial(n_sites, n_up) as usize;
        let mut states = Vec::with_capacity(dim);
        let limit: u64 = 1u64 << n_sites;
        let mut c: u64 = (1u64 << n_up) - 1;
        if n_up == 0 {
            states.push(0);
        } else {
            // Gosper's hack: next larger word with the same popcount.
            while c < limit {
                states.push(c as u32);
                let lowest = c & c.wrapping_neg();
                let ripple = c + lowest;
                c = (((ripple ^ c) >> 2) / lowest) | ripple;
            }
        }
        debug_assert_eq!(states.len(), dim);
        Ok(Self {
            n_sites,
            n_up,
            states,
            binom: binomial_table(),
        })
    }

    /// Shared handle, the form every [`StateVector`] holds.
    pub fn shared(n_sites: usize, n_up: usize) -> Result<Arc<Self>> {
        Self::build_sector(n_sites, n_up).map(Arc::new)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u32 {
        self.states[i]
    }

    /// Twice the total S_z of the sector (number of up spins minus down spins).
    pub fn two_sz(&self) -> i64 {
        2 * self.n_up as i64 - self.n_sites as i64
    }

    /// Mask with the lowest `n_sites` bits set.
    pub fn site_mask(&self) -> u32 {
        if self.n_sites == 32 {
            u32::MAX
        } else {
            (1u32 << self.n_sites) - 1
        }
    }

    /// Ordinal of `config`, or `None` if it lies outside the sector.
    #[inline]
    pub fn index_of(&self, config: u32) -> Option<usize> {
        if config & !self.site_mask() != 0 || config.count_ones() as usize != self.n_up {
            return None;
        }
        Some(self.rank(config))
    }

    /// Rank of an in-sector configuration (no validation).
    #[inline]
    pub fn rank(&self, config: u32) -> usize {
        let mut rest = config;
        let mut j = 1;
        let mut r: u64 = 0;
        while rest != 0 {
            let p = rest.trailing_zeros() as usize;
            r += self.binom[p][j];
            j += 1;
            rest &= rest - 1;
        }
        r as usize
    }

    /// Whether two bases describe the same sector.
    pub fn same_sector(&self, other: &SpinBasis) -> bool {
        self.n_sites == other.n_sites && self.n_up == other.n_up
    }

    /// Cyclic rotation of a configuration: the occupation of site k moves to site k + shift.
    #[inline]
    pub fn rotate(&self, config: u32, shift: i64) -> u32 {
        let n = self.n_sites as i64;
        let s = shift.rem_euclid(n) as u32;
        if s == 0 {
            return config;
        }
        let c = config as u64;
        let n = self.n_sites as u32;
        let mask = (1u64 << n) - 1;
        (((c << s) | (c >> (n - s))) & mask) as u32
    }

    /// Mirror image under site k -> axis - k (1-based, mod n_c).
    #[inline]
    pub fn reflect(&self, config: u32, axis: i64) -> u32 {
        let n = self.n_sites as i64;
        let mut out = 0u32;
        let mut rest = config;
        while rest != 0 {
            let b = rest.trailing_zeros() as i64;
            let k = b + 1;
            let target = (axis - k - 1).rem_euclid(n);
            out |= 1 << target;
            rest &= rest - 1;
        }
        out
    }
}

/// Complex amplitudes over a [`SpinBasis`].
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<SpinBasis>,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(basis: Arc<SpinBasis>) -> Self {
        let amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        Self { basis, amps }
    }

    pub fn from_amplitudes(basis: Arc<SpinBasis>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{} amplitudes for a sector of dimension {}",
                amps.len(),
                basis.dim()
            )));
        }
        Ok(Self { basis, amps })
    }

    pub fn from_real(basis: Arc<SpinBasis>, amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(basis, amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Unit vector on a single configuration.
    pub fn basis_state(basis: Arc<SpinBasis>, config: u32) -> Result<Self> {
        let i = basis.index_of(config).ok_or_else(|| {
            Error::BasisMismatch(format!("configuration {config:#b} not in sector"))
        })?;
        let mut v = Self::zeros(basis);
        v.amps[i] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// Superposition of configurations with the given coefficients (not normalized).
    pub fn from_terms(basis: Arc<SpinBasis>, terms: &[(u32, Complex64)]) -> Result<Self> {
        let mut v = Self::zeros(basis);
        for &(config, c) in terms {
            let i = v.basis.index_of(config).ok_or_else(|| {
                Error::BasisMismatch(format!("configuration {config:#b} not in sector"))
            })?;
            v.amps[i] += c;
        }
        Ok(v)
    }

    pub fn basis(&self) -> &Arc<SpinBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
        n
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// ⟨self|other⟩ (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_same(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |⟨self|other⟩| normalized by both norms.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        let ip = self.inner(other)?;
        Ok(ip.norm() / (self.norm() * other.norm()))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            basis: self.basis.clone(),
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    /// self + c·other
    pub fn add_scaled(&self, c: Complex64, other: &StateVector) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            basis: self.basis.clone(),
            amps: self
                .amps
                .iter()
                .zip(&other.amps)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    /// Fix the global phase so the largest-magnitude amplitude is real and positive.
    pub fn fix_gauge(&mut self) {
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for (i, a) in self.amps.iter().enumerate() {
            let m = a.norm();
            if m > best_mag * (1.0 + 1e-12) {
                best = i;
                best_mag = m;
            }
        }
        if best_mag > 0.0 {
            let phase = self.amps[best].conj() / best_mag;
            self.amps.iter_mut().for_each(|a| *a *= phase);
        }
    }

    pub(crate) fn check_same(&self, other: &StateVector) -> Result<()> {
        if self.basis.same_sector(&other.basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.basis.n_sites(),
                self.basis.n_up(),
                other.basis.n_sites(),
                other.basis.n_up()
            )))
        }
    }
}

/// Cyclic translation by `shift` sites: each configuration's site-k occupation
/// moves to site k + shift.
pub fn translate(v: &StateVector, shift: i64) -> StateVector {
    let basis = v.basis();
    let mut out = StateVector::zeros(basis.clone());
    for (i, &c) in basis.states().iter().enumerate() {
        let j = basis.rank(basis.rotate(c, shift));
        out.amps[j] = v.amps[i];
    }
    out
}

/// Site reflection k -> axis - k (mod n_c), 1-based sites.
pub fn reflect(v: &StateVector, axis: i64) -> StateVector {
    let basis = v.basis();
    let mut out = StateVector::zeros(basis.clone());
    for (i, &c) in basis.states().iter().enumerate() {
        let j = basis.rank(basis.reflect(c, axis));
        out.amps[j] = v.amps[i];
    }
    out
}

/// Global spin flip into the complementary sector `(n_c, n_c - n_up)`.
pub fn spin_flip(v: &StateVector) -> StateVector {
    let b = v.basis();
    let target = if 2 * b.n_up() == b.n_sites() {
        b.clone()
    } else {
        Arc::new(
            SpinBasis::build_sector(b.n_sites(), b.n_sites() - b.n_up())
                .expect("complementary sector of a valid basis is valid"),
        )
    };
    spin_flip_into(v, &target)
}

/// Global spin flip onto an already-built complementary basis.
pub fn spin_flip_into(v: &StateVector, target: &Arc<SpinBasis>) -> StateVector {
    let b = v.basis();
    assert!(
        target.n_sites() == b.n_sites() && target.n_up() == b.n_sites() - b.n_up(),
        "target basis is not the complementary sector"
    );
    let mask = b.site_mask();
    let mut out = StateVector::zeros(target.clone());
    for (i, &c) in b.states().iter().enumerate() {
        out.amps[target.rank(!c & mask)] = v.amps[i];
    }
    out
}
