//! Time evolution under driven ring Hamiltonians and the Floquet operator F = D U_T.
//!
//! Propagation is dense: each step exponentiates a real-symmetric matrix
//! through its eigendecomposition, so every step is unitary to rounding.
//! Two schemes are available. `Midpoint` evaluates H once per step at the
//! step center (second order). `Magnus4` is the commutator-free fourth-order
//! Magnus scheme (two exponentials of real combinations of H at the Gauss
//! nodes); it is the default.
//!
//! The translation in F is chosen co-moving with the wall: the profile at
//! time T equals the t = 0 profile shifted by two sites in the direction of
//! motion, so F translates back by two sites. For ω > 0 that is `shift = -2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{SpinBasis, StateVector};
use crate::error::{Error, Result};
use crate::hamiltonian::{Convention, HamiltonianView, DENSE_LIMIT};
use crate::profiles::{evaluate_exchange_unchecked, ExchangeSpec};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Midpoint,
    #[default]
    Magnus4,
}

/// Step-count refinement policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationPolicy {
    /// Initial steps per period (or per interval, for [`propagate`]).
    pub step_count: usize,
    /// Doubling stops once eigenphases (or the propagated state) change less than this.
    pub phase_tol: f64,
    /// Refinement gives up beyond this many steps per period.
    pub max_steps: usize,
    pub integrator: Integrator,
}

impl Default for PropagationPolicy {
    fn default() -> Self {
        Self {
            step_count: 64,
            phase_tol: 1e-9,
            max_steps: 1 << 14,
            integrator: Integrator::Magnus4,
        }
    }
}

/// H(t) for a profile on a fixed sector.
#[derive(Debug, Clone)]
pub struct Drive {
    pub spec: ExchangeSpec,
    pub basis: Arc<SpinBasis>,
    pub convention: Convention,
}

impl Drive {
    pub fn new(spec: ExchangeSpec, basis: Arc<SpinBasis>, convention: Convention) -> Result<Self> {
        if spec.n_sites() != basis.n_sites() {
            return Err(Error::InvalidParameter(format!(
                "profile has {} sites, basis has {}",
                spec.n_sites(),
                basis.n_sites()
            )));
        }
        if basis.dim() > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge {
                dim: basis.dim(),
                limit: DENSE_LIMIT,
            });
        }
        Ok(Self {
            spec,
            basis,
            convention,
        })
    }

    /// H(t). Couplings are not required to be positive here so that degenerate
    /// drives (all J = 0) can still be propagated.
    pub fn hamiltonian(&self, t: f64) -> Result<HamiltonianView> {
        HamiltonianView::new(self.basis.clone(), evaluate_exchange_unchecked(&self.spec, t)?, self.convention)
    }

    pub fn dense(&self, t: f64) -> Result<DMatrix<f64>> {
        self.hamiltonian(t)?.materialize_dense()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn with_omega(&self, omega: f64) -> Result<Self> {
        Ok(Self {
            spec: ExchangeSpec {
                profile: self.spec.profile.with_omega(omega)?,
                disorder: self.spec.disorder,
            },
            basis: self.basis.clone(),
            convention: self.convention,
        })
    }
}

/// Complex matrix stored as separate real and imaginary parts so products
/// with real eigenvector matrices stay in real GEMM.
#[derive(Debug, Clone)]
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn identity(n: usize) -> Self {
        Self {
            re: DMatrix::identity(n, n),
            im: DMatrix::zeros(n, n),
        }
    }

    fn from_vector(v: &StateVector) -> Self {
        let n = v.dim();
        Self {
            re: DMatrix::from_iterator(n, 1, v.amplitudes().iter().map(|a| a.re)),
            im: DMatrix::from_iterator(n, 1, v.amplitudes().iter().map(|a| a.im)),
        }
    }

    fn to_complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.re.nrows(), self.re.ncols(), |i, j| {
            Complex64::new(self.re[(i, j)], self.im[(i, j)])
        })
    }

    /// self <- exp(-i H dt) self, with H = V diag(λ) Vᵀ.
    fn apply_exponential(&mut self, eig: &SymmetricEigen<f64, nalgebra::Dyn>, dt: f64) {
        let v = &eig.eigenvectors;
        let vt = v.transpose();
        let a = &vt * &self.re;
        let b = &vt * &self.im;
        let (rows, cols) = a.shape();
        let mut c = DMatrix::<f64>::zeros(rows, cols);
        let mut d = DMatrix::<f64>::zeros(rows, cols);
        for i in 0..rows {
            let (s, co) = (-eig.eigenvalues[i] * dt).sin_cos();
            for j in 0..cols {
                c[(i, j)] = co * a[(i, j)] - s * b[(i, j)];
                d[(i, j)] = s * a[(i, j)] + co * b[(i, j)];
            }
        }
        self.re = v * c;
        self.im = v * d;
    }
}

const CF4_SQRT3_6: f64 = 0.288_675_134_594_812_9; // √3 / 6

fn step(drive: &Drive, integrator: Integrator, t: f64, dt: f64, u: &mut Split) -> Result<()> {
    match integrator {
        Integrator::Midpoint => {
            let h = drive.dense(t + 0.5 * dt)?;
            u.apply_exponential(&SymmetricEigen::new(h), dt);
        }
        Integrator::Magnus4 => {
            let h1 = drive.dense(t + (0.5 - CF4_SQRT3_6) * dt)?;
            let h2 = drive.dense(t + (0.5 + CF4_SQRT3_6) * dt)?;
            let (a_small, a_large) = (0.25 - CF4_SQRT3_6, 0.25 + CF4_SQRT3_6);
            let early = &h1 * a_large + &h2 * a_small;
            let late = &h1 * a_small + &h2 * a_large;
            u.apply_exponential(&SymmetricEigen::new(early), dt);
            u.apply_exponential(&SymmetricEigen::new(late), dt);
        }
    }
    Ok(())
}

fn evolve(drive: &Drive, integrator: Integrator, t0: f64, t1: f64, steps: usize, mut u: Split) -> Result<Split> {
    if t1 == t0 || steps == 0 {
        return Ok(u);
    }
    let dt = (t1 - t0) / steps as f64;
    for k in 0..steps {
        step(drive, integrator, t0 + k as f64 * dt, dt, &mut u)?;
    }
    Ok(u)
}

/// Dense propagator U(t1, t0) with a fixed number of steps.
pub fn propagator(drive: &Drive, t0: f64, t1: f64, steps: usize, integrator: Integrator) -> Result<DMatrix<Complex64>> {
    Ok(evolve(drive, integrator, t0, t1, steps, Split::identity(drive.dim()))?.to_complex())
}

/// U(t1, t0) v, doubling the step count until the result moves by less than `phase_tol`.
pub fn propagate(drive: &Drive, t0: f64, t1: f64, policy: &PropagationPolicy, v: &StateVector) -> Result<StateVector> {
    v.check_same_basis(&drive.basis)?;
    if t1 == t0 {
        return Ok(v.clone());
    }
    let x0 = Split::from_vector(v);
    let to_state = |s: &Split| -> Result<StateVector> {
        let c = s.to_complex();
        StateVector::from_amplitudes(drive.basis.clone(), c.column(0).iter().copied().collect())
    };
    if !drive.spec.profile.is_time_dependent() {
        return to_state(&evolve(drive, policy.integrator, t0, t1, 1, x0)?);
    }
    let mut steps = policy.step_count.max(1);
    let mut prev = to_state(&evolve(drive, policy.integrator, t0, t1, steps, x0.clone())?)?;
    loop {
        let next_steps = steps * 2;
        if next_steps > policy.max_steps {
            return Err(Error::PropagationNotConverged {
                steps,
                phase_change: f64::NAN,
            });
        }
        let next = to_state(&evolve(drive, policy.integrator, t0, t1, next_steps, x0.clone())?)?;
        let change = next.add_scaled(Complex64::new(-1.0, 0.0), &prev)?.norm();
        if change < policy.phase_tol {
            return Ok(next);
        }
        if next_steps == policy.max_steps {
            return Err(Error::PropagationNotConverged {
                steps: next_steps,
                phase_change: change,
            });
        }
        prev = next;
        steps = next_steps;
    }
}

/// Permutation matrix of [`crate::basis::translate`].
pub fn translation_matrix(basis: &SpinBasis, shift: i64) -> DMatrix<Complex64> {
    let n = basis.dim();
    let mut p = DMatrix::<Complex64>::zeros(n, n);
    for (i, &c) in basis.states().iter().enumerate() {
        p[(basis.rank(basis.rotate(c, shift)), i)] = Complex64::new(1.0, 0.0);
    }
    p
}

/// Largest entry of |U†U - 1|.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - DMatrix::<Complex64>::identity(n, n))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Match of one static (t = 0) eigenstate to the Floquet eigenspaces.
#[derive(Debug, Clone)]
pub struct Pairing {
    pub static_index: usize,
    pub static_energy: f64,
    /// Floquet eigenvectors sharing the matched (possibly degenerate) eigenvalue.
    pub cluster: Vec<usize>,
    /// Norm of the static state's projection onto the matched cluster.
    pub overlap: f64,
    /// Same quantity for the next-best cluster.
    pub runner_up: f64,
    pub ambiguous: bool,
    /// Normalized projection of the static state onto the matched cluster.
    pub state: StateVector,
}

/// Eigen-decomposition of F = D_shift U(T).
#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    pub omega: f64,
    pub period: f64,
    pub shift: i64,
    pub steps_per_period: usize,
    pub integrator: Integrator,
    pub eigenvalues: Vec<Complex64>,
    /// arg of each eigenvalue, in (-π, π].
    pub eigenphases: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
    /// Pairing of every t = 0 eigenstate, ordered by static energy.
    pub pairing: Vec<Pairing>,
    /// Largest eigenphase change at the last step doubling.
    pub phase_change: f64,
    pub unitarity_error: f64,
    pub operator: DMatrix<Complex64>,
}

impl FloquetSpectrum {
    /// Floquet state paired with the static ground state.
    pub fn ground_paired(&self) -> &Pairing {
        &self.pairing[0]
    }

    /// Largest deviation of |λ| from 1.
    pub fn unit_circle_error(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest |⟨f_i|f_j⟩ - δ_ij| among eigenvectors.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let ip = a.inner(b).expect("same basis");
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Co-moving translation for drive rate ω: two sites against the wall motion.
pub fn comoving_shift(omega: f64) -> i64 {
    if omega > 0.0 {
        -2
    } else {
        2
    }
}

fn schur_eigen(f: DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let schur = nalgebra::Schur::try_new(f, 1e-15, 100_000).ok_or(Error::DenseSolverFailed)?;
    let (q, t) = schur.unpack();
    let vals = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    Ok((vals, q))
}

fn max_phase_change(old: &[Complex64], new: &[Complex64]) -> f64 {
    new.iter()
        .map(|a| {
            old.iter()
                .map(|b| (a / b).arg().abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Eigenvalues closer than this on the unit circle form one Floquet eigenspace.
const CLUSTER_TOL: f64 = 1e-7;

/// Build F = D U(T) for drive rate `omega`, diagonalize it and pair with the t = 0 eigenstates.
pub fn floquet_operator(drive: &Drive, omega: f64, policy: &PropagationPolicy) -> Result<FloquetSpectrum> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter("floquet operator needs a finite omega != 0".into()));
    }
    let drive = drive.with_omega(omega)?;
    let period = drive.spec.profile.two_site_period()?;
    let shift = comoving_shift(omega);
    let dim = drive.dim();
    let translation = translation_matrix(&drive.basis, shift);
    let build = |steps: usize| -> Result<(DMatrix<Complex64>, Vec<Complex64>, DMatrix<Complex64>)> {
        let u = propagator(&drive, 0.0, period, steps, policy.integrator)?;
        let f = &translation * u;
        let (vals, q) = schur_eigen(f.clone())?;
        Ok((f, vals, q))
    };

    let mut steps = policy.step_count.max(1);
    let mut current = build(steps)?;
    let mut phase_change;
    loop {
        let next_steps = steps * 2;
        if next_steps > policy.max_steps {
            return Err(Error::PropagationNotConverged {
                steps,
                phase_change: f64::NAN,
            });
        }
        let next = build(next_steps)?;
        phase_change = max_phase_change(&current.1, &next.1);
        current = next;
        steps = next_steps;
        if phase_change < policy.phase_tol {
            break;
        }
        if next_steps == policy.max_steps {
            return Err(Error::PropagationNotConverged {
                steps,
                phase_change,
            });
        }
    }
    let (operator, eigenvalues, q) = current;
    let eigenphases: Vec<f64> = eigenvalues.iter().map(|z| z.arg()).collect();
    let eigenvectors: Vec<StateVector> = (0..dim)
        .map(|c| {
            let mut v = StateVector::from_amplitudes(drive.basis.clone(), q.column(c).iter().copied().collect())?;
            v.fix_gauge();
            Ok(v)
        })
        .collect::<Result<_>>()?;

    // eigenspaces: group eigenvalues that coincide on the unit circle
    let mut cluster_of = vec![usize::MAX; dim];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..dim {
        if cluster_of[i] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        cluster_of[i] = id;
        for j in (i + 1)..dim {
            if cluster_of[j] == usize::MAX && (eigenvalues[i] - eigenvalues[j]).norm() < CLUSTER_TOL {
                cluster_of[j] = id;
                members.push(j);
            }
        }
        clusters.push(members);
    }

    let h0 = drive.dense(0.0)?;
    let eig0 = SymmetricEigen::new(h0);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig0.eigenvalues[a].partial_cmp(&eig0.eigenvalues[b]).unwrap());
    let mut pairing = Vec::with_capacity(dim);
    for (rank, &s) in order.iter().enumerate() {
        let x: DVector<Complex64> = eig0.eigenvectors.column(s).map(|r| Complex64::new(r, 0.0));
        let coeffs: Vec<Complex64> = (0..dim).map(|c| q.column(c).dotc(&x)).collect();
        let mut weights: Vec<(usize, f64)> = clusters
            .iter()
            .enumerate()
            .map(|(id, members)| (id, members.iter().map(|&c| coeffs[c].norm_sqr()).sum::<f64>().sqrt()))
            .collect();
        weights.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let (best, overlap) = weights[0];
        let runner_up = weights.get(1).map(|w| w.1).unwrap_or(0.0);
        let mut proj = DVector::<Complex64>::zeros(dim);
        for &c in &clusters[best] {
            proj += q.column(c) * coeffs[c];
        }
        let mut state = StateVector::from_amplitudes(drive.basis.clone(), proj.iter().copied().collect())?.normalized();
        state.fix_gauge();
        pairing.push(Pairing {
            static_index: rank,
            static_energy: eig0.eigenvalues[s],
            cluster: clusters[best].clone(),
            overlap,
            runner_up,
            ambiguous: overlap - runner_up < 1e-3,
            state,
        });
    }
    if pairing[0].ambiguous {
        return Err(Error::AmbiguousPairing {
            first: pairing[0].overlap,
            second: pairing[0].runner_up,
        });
    }
    let unitarity_error = unitarity_error(&operator);
    Ok(FloquetSpectrum {
        omega,
        period,
        shift,
        steps_per_period: steps,
        integrator: policy.integrator,
        eigenvalues,
        eigenphases,
        eigenvectors,
        pairing,
        phase_change,
        unitarity_error,
        operator,
    })
}

/// Outcome of [`berry_phase_numeric`].
#[derive(Debug, Clone, Copy)]
pub struct BerryPhase {
    /// Geometric phase in [0, 2π).
    pub geometric: f64,
    /// arg⟨ψ(0)|ψ(T_cycle)⟩.
    pub total: f64,
    /// ∫⟨ψ(t)|H(t)|ψ(t)⟩ dt over the cycle.
    pub energy_integral: f64,
    /// Duration of the closed cycle (n_c applications of F).
    pub cycle: f64,
    /// 1 - |⟨ψ(0)|ψ(T_cycle)⟩|; zero for an exactly cyclic state.
    pub cyclicity_error: f64,
}

/// Geometric phase of the ground-paired Floquet state over one closed cycle.
///
/// The cycle lasts n_c periods of F, after which the wall has advanced 2 n_c
/// sites and the translation has wrapped back to the identity. With phases
/// counted as ψ(T) = e^{-iθ} ψ(0), the geometric part is θ_total − ∫⟨H⟩dt,
/// reported modulo 2π.
pub fn berry_phase_numeric(fs: &FloquetSpectrum, drive: &Drive) -> Result<BerryPhase> {
    let drive = drive.with_omega(fs.omega)?;
    let psi0 = fs.ground_paired().state.clone();
    let n = drive.basis.n_sites();
    // translate^(n shift) = identity on an odd ring with |shift| = 2; on even rings use the lcm
    let windings = n / gcd(n, fs.shift.unsigned_abs() as usize);
    let steps = fs.steps_per_period;
    let dt = fs.period / steps as f64;
    let total_steps = steps * windings;
    let mut psi = Split::from_vector(&psi0);
    let energy = |s: &Split, t: f64| -> Result<f64> {
        let h = drive.dense(t)?;
        let hr = &h * &s.re;
        let hi = &h * &s.im;
        Ok(s.re.dot(&hr) + s.im.dot(&hi))
    };
    // trapezoid on a periodic integrand
    let mut integral = 0.5 * energy(&psi, 0.0)?;
    for k in 0..total_steps {
        let t = k as f64 * dt;
        step(&drive, fs.integrator, t, dt, &mut psi)?;
        let e = energy(&psi, t + dt)?;
        integral += if k + 1 == total_steps { 0.5 * e } else { e };
    }
    integral *= dt;
    let end = StateVector::from_amplitudes(drive.basis.clone(), psi.to_complex().column(0).iter().copied().collect())?;
    let ip = psi0.inner(&end)?;
    let total = ip.arg();
    let geometric = (-total - integral).rem_euclid(2.0 * PI);
    Ok(BerryPhase {
        geometric,
        total,
        energy_integral: integral,
        cycle: dt * total_steps as f64,
        cyclicity_error: 1.0 - ip.norm(),
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl StateVector {
    pub(crate) fn check_same_basis(&self, basis: &SpinBasis) -> Result<()> {
        if self.basis().same_sector(basis) {
            Ok(())
        } else {
            Err(Error::BasisMismatch("state and drive live in different sectors".into()))
        }
    }
}
