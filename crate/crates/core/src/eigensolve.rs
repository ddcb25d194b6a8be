//! Lowest eigenpairs of a [`HamiltonianView`].
//!
//! [`lanczos_lowest`] converges one eigenpair per Lanczos run and locks it;
//! later runs start from a fresh random vector deflated against everything
//! locked so far, which is what resolves exactly degenerate levels (a single
//! Krylov sequence only ever sees one vector of a degenerate eigenspace).
//! A final Rayleigh-Ritz step over the locked vectors makes the returned set
//! orthonormal and sorted.
//!
//! Two storage strategies exist. `FullReorth` keeps the whole Krylov basis
//! and reorthogonalizes every new vector against it. `TwoPass` keeps only a
//! three-term window (plus the locked vectors): pass one builds the
//! tridiagonal matrix, pass two replays the identical recurrence to
//! assemble the Ritz vector. `Auto` picks `FullReorth` unless the Krylov
//! basis would exceed the memory budget.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::StateVector;
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianView;

/// Eigenvalue gaps below this are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Largest number of eigenpairs Lanczos is asked for.
pub const MAX_LANCZOS_PAIRS: usize = 16;

/// Lowest eigenpairs, ascending.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl EigenResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &StateVector {
        &self.eigenvectors[0]
    }

    /// E_1 - E_0, if at least two levels were computed.
    pub fn gap(&self) -> Option<f64> {
        (self.eigenvalues.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }

    /// Largest |⟨v_i|v_j⟩ - δ_ij| over the returned vectors.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let ip = a.inner(b).expect("vectors share a basis");
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Krylov storage strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LanczosMode {
    #[default]
    Auto,
    FullReorth,
    TwoPass,
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    pub n_pairs: usize,
    pub tol: f64,
    pub seed: u64,
    /// Per-eigenpair iteration cap; `None` means 10·m·√dim (at least 100).
    pub max_iter: Option<usize>,
    pub mode: LanczosMode,
    /// Budget for the stored Krylov basis in `Auto` mode.
    pub memory_budget_bytes: usize,
}

impl LanczosOptions {
    pub fn new(n_pairs: usize, tol: f64, seed: u64) -> Self {
        Self {
            n_pairs,
            tol,
            seed,
            max_iter: None,
            mode: LanczosMode::Auto,
            memory_budget_bytes: 512 << 20,
        }
    }
}

/// Lowest `m` eigenpairs by Lanczos with default options.
pub fn lanczos_lowest(h: &HamiltonianView, m: usize, tol: f64, seed: u64) -> Result<EigenResult> {
    lanczos_with(h, &LanczosOptions::new(m, tol, seed))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: &mut [f64], s: f64) {
    a.iter_mut().for_each(|x| *x *= s);
}

fn project_out(w: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(q, w);
        axpy(-c, q, w);
    }
}

/// Lowest eigenpair of the j×j tridiagonal matrix: (θ, y).
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let j = alpha.len();
    let mut t = DMatrix::<f64>::zeros(j, j);
    for i in 0..j {
        t[(i, i)] = alpha[i];
        if i + 1 < j {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (k, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .expect("non-empty tridiagonal");
    (theta, eig.eigenvectors.column(k).iter().copied().collect())
}

struct Solver<'a> {
    h: &'a HamiltonianView,
    tol: f64,
    max_iter: usize,
    locked: Vec<Vec<f64>>,
    iterations: usize,
}

impl<'a> Solver<'a> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.h.apply_into(x, y);
    }

    fn residual(&self, x: &[f64]) -> (f64, f64) {
        let mut hx = vec![0.0; x.len()];
        self.apply(x, &mut hx);
        let theta = dot(x, &hx);
        axpy(-theta, x, &mut hx);
        (theta, norm(&hx))
    }

    fn start_vector(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let dim = self.h.dim();
        for _ in 0..4 {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            project_out(&mut v, &self.locked);
            project_out(&mut v, &self.locked);
            let n = norm(&v);
            if n > 1e-8 {
                scale(&mut v, 1.0 / n);
                return Some(v);
            }
        }
        None
    }

    /// One deflated full-reorthogonalization run; returns (θ, x, residual).
    fn run_full(&mut self, start: Vec<f64>) -> (f64, Vec<f64>, f64) {
        let dim = self.h.dim();
        let room = dim - self.locked.len();
        let cap = self.max_iter.min(room);
        let mut basis: Vec<Vec<f64>> = vec![start];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        let mut best = (f64::NAN, basis[0].clone(), f64::INFINITY);
        loop {
            let j = basis.len() - 1;
            self.apply(&basis[j], &mut w);
            self.iterations += 1;
            project_out(&mut w, &self.locked);
            let a = dot(&w, &basis[j]);
            alpha.push(a);
            axpy(-a, &basis[j], &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &basis[j - 1], &mut w);
            }
            // twice is enough (Kahan-Parlett)
            project_out(&mut w, &basis);
            project_out(&mut w, &basis);
            project_out(&mut w, &self.locked);
            let b = norm(&w);
            let exhausted = b < 1e-12 || alpha.len() >= cap;
            if exhausted || alpha.len() % 5 == 0 {
                let (_, y) = tridiagonal_lowest(&alpha, &beta);
                let estimate = b * y[y.len() - 1].abs();
                if estimate < 0.5 * self.tol || exhausted {
                    let mut x = vec![0.0; dim];
                    for (yi, v) in y.iter().zip(&basis) {
                        axpy(*yi, v, &mut x);
                    }
                    project_out(&mut x, &self.locked);
                    let nx = norm(&x);
                    scale(&mut x, 1.0 / nx);
                    let (rq, res) = self.residual(&x);
                    if res < best.2 {
                        best = (rq, x, res);
                    }
                    if res < self.tol || exhausted {
                        return best;
                    }
                }
            }
            beta.push(b);
            scale(&mut w, 1.0 / b);
            basis.push(w.clone());
        }
    }

    /// Three-term recurrence from `start`; calls `visit(j, v_j)` for every Lanczos vector.
    fn recurrence(
        &mut self,
        start: &[f64],
        steps: usize,
        mut visit: impl FnMut(usize, &[f64]),
        mut check: impl FnMut(&[f64], &[f64], f64) -> bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let dim = self.h.dim();
        let mut v_prev = vec![0.0; dim];
        let mut v = start.to_vec();
        let mut w = vec![0.0; dim];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..steps {
            visit(j, &v);
            self.apply(&v, &mut w);
            self.iterations += 1;
            project_out(&mut w, &self.locked);
            let a = dot(&w, &v);
            alpha.push(a);
            axpy(-a, &v, &mut w);
            if j > 0 {
                axpy(-beta[j - 1], &v_prev, &mut w);
            }
            // local reorthogonalization against the window and the locked set
            let c = dot(&w, &v);
            axpy(-c, &v, &mut w);
            if j > 0 {
                let c = dot(&w, &v_prev);
                axpy(-c, &v_prev, &mut w);
            }
            project_out(&mut w, &self.locked);
            let b = norm(&w);
            if check(&alpha, &beta, b) || b < 1e-12 {
                return (alpha, beta);
            }
            beta.push(b);
            std::mem::swap(&mut v_prev, &mut v);
            v.copy_from_slice(&w);
            scale(&mut v, 1.0 / b);
        }
        (alpha, beta)
    }

    fn run_two_pass(&mut self, mut start: Vec<f64>) -> (f64, Vec<f64>, f64) {
        let dim = self.h.dim();
        let room = dim - self.locked.len();
        let cap = self.max_iter.min(room);
        let tol = self.tol;
        let mut best = (f64::NAN, start.clone(), f64::INFINITY);
        for _restart in 0..8 {
            // pass one: stop as soon as the lowest Ritz value has converged, before ghosts appear
            let (alpha, beta) = self.recurrence(
                &start,
                cap,
                |_, _| {},
                |alpha, beta, b| {
                    if alpha.len() % 5 != 0 && alpha.len() < cap {
                        return false;
                    }
                    let (_, y) = tridiagonal_lowest(alpha, &beta[..alpha.len() - 1]);
                    b * y[y.len() - 1].abs() < 0.1 * tol
                },
            );
            let n_used = alpha.len();
            let (_, y) = tridiagonal_lowest(&alpha, &beta[..n_used - 1]);
            // pass two: replay and accumulate x = Σ y_j v_j
            let mut x = vec![0.0; dim];
            self.recurrence(&start, n_used, |j, v| axpy(y[j], v, &mut x), |_, _, _| false);
            project_out(&mut x, &self.locked);
            let nx = norm(&x);
            scale(&mut x, 1.0 / nx);
            let (rq, res) = self.residual(&x);
            if res < best.2 {
                best = (rq, x.clone(), res);
            }
            if res < tol || n_used >= room {
                break;
            }
            start = x;
        }
        best
    }
}

/// Lowest eigenpairs by deflated Lanczos.
pub fn lanczos_with(h: &HamiltonianView, opts: &LanczosOptions) -> Result<EigenResult> {
    let dim = h.dim();
    let m = opts.n_pairs;
    if m == 0 || m > dim.min(MAX_LANCZOS_PAIRS) {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs; need 1 <= m <= min(dim = {dim}, {MAX_LANCZOS_PAIRS})"
        )));
    }
    if !(opts.tol >= 1e-12) {
        return Err(Error::InvalidParameter(format!("tolerance {} below 1e-12", opts.tol)));
    }
    let max_iter = opts
        .max_iter
        .unwrap_or_else(|| ((10 * m) as f64 * (dim as f64).sqrt()).ceil().max(100.0) as usize);
    let mode = match opts.mode {
        LanczosMode::Auto => {
            let krylov = max_iter.min(dim).min(1000);
            if krylov.saturating_mul(dim).saturating_mul(8) <= opts.memory_budget_bytes {
                LanczosMode::FullReorth
            } else {
                LanczosMode::TwoPass
            }
        }
        other => other,
    };
    let mut solver = Solver {
        h,
        tol: opts.tol,
        max_iter,
        locked: Vec::with_capacity(m),
        iterations: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_residuals = Vec::new();
    for _ in 0..m {
        let start = solver
            .start_vector(&mut rng)
            .ok_or_else(|| Error::Degenerate("no start vector outside the locked subspace".into()))?;
        let (_, x, res) = match mode {
            LanczosMode::TwoPass => solver.run_two_pass(start),
            _ => solver.run_full(start),
        };
        best_residuals.push(res);
        if !(res < opts.tol) {
            return Err(Error::NotConverged {
                iterations: solver.iterations,
                residuals: best_residuals,
            });
        }
        solver.locked.push(x);
    }
    let iterations = solver.iterations;
    finish(h, solver.locked, iterations, opts.tol)
}

/// Rayleigh-Ritz over the locked vectors: orthonormal, ascending, with true residuals.
fn finish(h: &HamiltonianView, mut vecs: Vec<Vec<f64>>, iterations: usize, tol: f64) -> Result<EigenResult> {
    let dim = h.dim();
    // modified Gram-Schmidt, twice
    for _ in 0..2 {
        for i in 0..vecs.len() {
            let (done, rest) = vecs.split_at_mut(i);
            let v = &mut rest[0];
            project_out(v, done);
            let n = norm(v);
            scale(v, 1.0 / n);
        }
    }
    let k = vecs.len();
    let hq: Vec<Vec<f64>> = vecs
        .iter()
        .map(|q| {
            let mut y = vec![0.0; dim];
            h.apply_into(q, &mut y);
            y
        })
        .collect();
    let proj = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&vecs[i], &hq[j]) + dot(&vecs[j], &hq[i])));
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &c in &order {
        let mut x = vec![0.0; dim];
        let mut hx = vec![0.0; dim];
        for i in 0..k {
            let yi = eig.eigenvectors[(i, c)];
            axpy(yi, &vecs[i], &mut x);
            axpy(yi, &hq[i], &mut hx);
        }
        let lambda = eig.eigenvalues[c];
        axpy(-lambda, &x, &mut hx);
        residuals.push(norm(&hx));
        eigenvalues.push(lambda);
        eigenvectors.push(StateVector::from_real(h.basis().clone(), &x)?);
    }
    if residuals.iter().any(|&r| !(r < tol)) {
        return Err(Error::NotConverged { iterations, residuals });
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
        residuals,
        iterations,
    })
}

/// Lowest `m` eigenpairs from a full dense diagonalization.
pub fn dense_lowest(h: &HamiltonianView, m: usize) -> Result<EigenResult> {
    let dim = h.dim();
    if m == 0 || m > dim {
        return Err(Error::InvalidParameter(format!("requested {m} eigenpairs of a {dim}-dim sector")));
    }
    let mat = h.materialize_dense()?;
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for &c in order.iter().take(m) {
        let x: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let mut hx = vec![0.0; dim];
        h.apply_into(&x, &mut hx);
        let lambda = eig.eigenvalues[c];
        axpy(-lambda, &x, &mut hx);
        residuals.push(norm(&hx));
        eigenvalues.push(lambda);
        eigenvectors.push(StateVector::from_real(h.basis().clone(), &x)?);
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
        residuals,
        iterations: 0,
    })
}

/// Dense when the sector is small enough, Lanczos otherwise.
pub fn lowest(h: &HamiltonianView, m: usize, tol: f64, seed: u64) -> Result<EigenResult> {
    if h.dim() <= 256 {
        dense_lowest(h, m.min(h.dim()))
    } else {
        lanczos_lowest(h, m, tol, seed)
    }
}
