//! Observables and post-processing: spin density, gaps, hybrid states,
//! exponential fits, localization and channel capacity.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::StateVector;
use crate::error::{Error, Result};

/// Reduced Planck constant in eV·s (CODATA 2018, exact to the quoted digits).
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

/// Per-site ⟨Z_k⟩, site 1 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinDensity {
    pub values: Vec<f64>,
}

impl SpinDensity {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1-based site accessor.
    pub fn site(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    /// Largest |a_k - b_k|.
    pub fn max_abs_diff(&self, other: &SpinDensity) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// ⟨Z_k⟩ for every site by accumulating |amplitude|² over configurations.
pub fn spin_density(v: &StateVector) -> SpinDensity {
    let basis = v.basis();
    let n = basis.n_sites();
    let mut up = vec![0.0; n];
    let mut total = 0.0;
    for (&c, a) in basis.states().iter().zip(v.amplitudes()) {
        let p = a.norm_sqr();
        total += p;
        let mut bits = c;
        while bits != 0 {
            up[bits.trailing_zeros() as usize] += p;
            bits &= bits - 1;
        }
    }
    // ⟨Z⟩ = P(up) - P(down) = 2 P(up) - ‖v‖²
    SpinDensity {
        values: up.into_iter().map(|u| 2.0 * u - total).collect(),
    }
}

/// ⟨S²⟩ in units of ħ², summing S_i·S_j over all pairs with spin-1/2 operators.
pub fn total_spin_squared(v: &StateVector) -> f64 {
    let basis = v.basis();
    let n = basis.n_sites();
    let amps = v.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for (&c, a) in basis.states().iter().zip(amps) {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let mut diag = 0.75 * n as f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let bi = (c >> i) & 1;
                let bj = (c >> j) & 1;
                if bi == bj {
                    diag += 0.5;
                } else {
                    diag -= 0.5;
                    // 2 · (1/2)(S+S- + S-S+) couples to the exchanged configuration
                    let flipped = c ^ ((1 << i) | (1 << j));
                    let k = basis.rank(flipped);
                    acc += amps[k].conj() * a;
                }
            }
        }
        acc += a.norm_sqr() * diag;
    }
    acc.re
}

/// Lowest three energies along a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub parameter: Vec<f64>,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl GapSeries {
    pub fn new(parameter: Vec<f64>, e0: Vec<f64>, e1: Vec<f64>, e2: Vec<f64>) -> Result<Self> {
        let n = parameter.len();
        if e0.len() != n || e1.len() != n || e2.len() != n {
            return Err(Error::InvalidParameter("gap series columns differ in length".into()));
        }
        for i in 0..n {
            let slack = 1e-10 * (1.0 + e2[i].abs());
            if e0[i] > e1[i] + slack || e1[i] > e2[i] + slack {
                return Err(Error::InvalidParameter(format!("energies out of order at point {i}")));
            }
        }
        Ok(Self { parameter, e0, e1, e2 })
    }

    pub fn len(&self) -> usize {
        self.parameter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameter.is_empty()
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.e1.iter().zip(&self.e0).map(|(a, b)| a - b).collect()
    }

    pub fn second_gaps(&self) -> Vec<f64> {
        self.e2.iter().zip(&self.e0).map(|(a, b)| a - b).collect()
    }
}

/// (max − min) / min of a positive series.
pub fn relative_spread(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty series".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        return Err(Error::Degenerate(format!("minimum value {min:e} is not positive")));
    }
    Ok((max - min) / min)
}

/// (max(E1−E0) − min(E1−E0)) / min(E1−E0).
pub fn gap_ratio(series: &GapSeries) -> Result<f64> {
    relative_spread(&series.gaps())
}

/// Hybrid of two states with the gauge that was chosen.
#[derive(Debug, Clone)]
pub struct Hybrid {
    pub state: StateVector,
    pub density: SpinDensity,
    /// θ in ψ0 − e^{iθ}ψ1.
    pub phase: f64,
    /// Whether several phases tied for the largest contrast and the preference broke the tie.
    pub tie_broken: bool,
}

const HYBRID_PHASES: usize = 360;

/// Normalized ψ0 − e^{iθ}ψ1 with θ maximizing Σ_k |⟨Z_k⟩|.
///
/// Real eigenvector pairs give the same contrast for θ = 0 and π. When
/// `negative_site` is given, the tie is broken toward a negative density at
/// that (1-based) site.
pub fn hybridize(psi0: &StateVector, psi1: &StateVector, negative_site: Option<usize>) -> Result<Hybrid> {
    let overlap = psi0.inner(psi1)?;
    if (overlap.norm() - psi0.norm() * psi1.norm()).abs() < 1e-12 {
        return Err(Error::Degenerate("hybridizing a state with itself".into()));
    }
    let build = |theta: f64| -> Result<(StateVector, SpinDensity, f64)> {
        let mut v = psi0.add_scaled(-Complex64::from_polar(1.0, theta), psi1)?;
        v.normalize();
        let d = spin_density(&v);
        let contrast = d.values.iter().map(|x| x.abs()).sum();
        Ok((v, d, contrast))
    };
    let mut candidates = Vec::with_capacity(HYBRID_PHASES);
    for i in 0..HYBRID_PHASES {
        let theta = 2.0 * PI * i as f64 / HYBRID_PHASES as f64;
        candidates.push((theta, build(theta)?));
    }
    let best = candidates.iter().map(|c| c.1 .2).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&(f64, (StateVector, SpinDensity, f64))> =
        candidates.iter().filter(|c| best - c.1 .2 <= 1e-10 * best.max(1.0)).collect();
    let pick = match negative_site {
        Some(k) if tied.len() > 1 => tied
            .iter()
            .min_by(|a, b| a.1 .1.site(k).partial_cmp(&b.1 .1.site(k)).unwrap())
            .unwrap(),
        _ => &tied[0],
    };
    Ok(Hybrid {
        state: pick.1 .0.clone(),
        density: pick.1 .1.clone(),
        phase: pick.0,
        tie_broken: tied.len() > 1 && negative_site.is_some(),
    })
}

/// Least-squares fit of ln y = ln A − s/λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    /// λ; infinite when the data do not vary.
    pub decay_length: f64,
    pub slope: f64,
    /// RMS of the residuals in ln y.
    pub rms_residual: f64,
}

impl ExponentialFit {
    pub fn is_constant(&self) -> bool {
        self.decay_length.is_infinite()
    }
}

pub fn fit_exponential(s: &[f64], y: &[f64]) -> Result<ExponentialFit> {
    if s.len() != y.len() {
        return Err(Error::InvalidParameter("fit arrays differ in length".into()));
    }
    if s.len() < 3 {
        return Err(Error::InvalidParameter(format!("fit needs at least 3 points, got {}", s.len())));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!("fit needs y > 0, got {v}")));
    }
    let n = s.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let sm = s.iter().sum::<f64>() / n;
    let lm = ly.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|x| (x - sm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let sxy: f64 = s.iter().zip(&ly).map(|(x, l)| (x - sm) * (l - lm)).sum();
    let slope = sxy / sxx;
    let intercept = lm - slope * sm;
    let rss: f64 = s.iter().zip(&ly).map(|(x, l)| (l - intercept - slope * x).powi(2)).sum();
    let scale = ly.iter().map(|l| l.abs()).fold(1.0, f64::max);
    let decay_length = if slope.abs() <= 1e-14 * scale { f64::INFINITY } else { -1.0 / slope };
    Ok(ExponentialFit {
        amplitude: intercept.exp(),
        decay_length,
        slope,
        rms_residual: (rss / n).sqrt(),
    })
}

/// Inputs to the throughput estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// Exchange energy in eV.
    pub j0_ev: f64,
    /// Wall spacing in sites.
    pub spacing_sites: f64,
    /// Dot spacing in meters (informational).
    #[serde(default)]
    pub dot_spacing_m: Option<f64>,
    /// Wall width in sites (informational).
    #[serde(default)]
    pub wall_width: Option<f64>,
}

impl CapacityParams {
    pub fn new(j0_ev: f64, spacing_sites: f64) -> Result<Self> {
        let p = Self { j0_ev, spacing_sites, dot_spacing_m: None, wall_width: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j0_ev >= 0.0) || !self.j0_ev.is_finite() {
            return Err(Error::InvalidParameter(format!("J0 = {} eV must be non-negative", self.j0_ev)));
        }
        if !(self.spacing_sites >= 1.0) || !self.spacing_sites.is_finite() {
            return Err(Error::InvalidParameter(format!("wall spacing D = {} must be >= 1", self.spacing_sites)));
        }
        Ok(())
    }
}

/// Q = J0 / (ħ D) in qubits per second.
pub fn channel_capacity(p: &CapacityParams) -> Result<f64> {
    p.validate()?;
    Ok(p.j0_ev / (HBAR_EV_S * p.spacing_sites))
}

/// Peak site and participation ratio of the positive part of a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// 1-based.
    pub peak_site: usize,
    pub participation_ratio: f64,
}

pub fn localization_measure(d: &SpinDensity) -> Result<Localization> {
    let p: Vec<f64> = d.values.iter().map(|&v| v.max(0.0)).collect();
    let s1: f64 = p.iter().sum();
    if s1 <= 0.0 {
        return Err(Error::Degenerate("density has no positive part".into()));
    }
    let s2: f64 = p.iter().map(|x| x * x).sum();
    let peak = d
        .values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > d.values[best] { i } else { best });
    Ok(Localization {
        peak_site: peak + 1,
        participation_ratio: s1 * s1 / s2,
    })
}

/// Shortest distance between two sites on a ring of `n` sites.
pub fn ring_distance(a: f64, b: f64, n: usize) -> f64 {
    let d = (a - b).rem_euclid(n as f64);
    d.min(n as f64 - d)
}
