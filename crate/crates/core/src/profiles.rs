//! Staggered order parameters and exchange profiles {J_k(t)}.
//!
//! Bond `k` (1-based) couples sites `k` and `k + 1 (mod n_c)`; a
//! [`CouplingVector`] stores it at index `k - 1`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default symmetric truncation of the image sum.
pub const DEFAULT_IMAGE_CUTOFF: usize = 16;
/// Largest truncation tried before giving up.
pub const MAX_IMAGE_CUTOFF: usize = 64;
const IMAGE_SUM_TOL: f64 = 1e-12;

/// Shape of a single tanh domain wall on a ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallParams {
    pub a0: f64,
    pub k0: f64,
    pub w: f64,
    pub n_sites: usize,
}

impl WallParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParameter(format!("wall width w = {} must be > 0", self.w)));
        }
        if !self.a0.is_finite() || !self.k0.is_finite() {
            return Err(Error::InvalidParameter("wall amplitude and center must be finite".into()));
        }
        if self.n_sites < 3 {
            return Err(Error::InvalidRingSize(self.n_sites));
        }
        Ok(())
    }
}

/// Partial image sum Σ_{r=-R}^{R} (-1)^r tanh((x - r n)/w), paired as (r, -r).
fn image_sum(x: f64, n: f64, w: f64, cutoff: usize) -> f64 {
    let mut acc = 0.0;
    for r in (1..=cutoff).rev() {
        let rn = r as f64 * n;
        let pair = ((x - rn) / w).tanh() + ((x + rn) / w).tanh();
        if r % 2 == 0 {
            acc += pair;
        } else {
            acc -= pair;
        }
    }
    acc + (x / w).tanh()
}

/// Antiperiodic tanh wall α(k - k0) = a0 Σ_r (-1)^r tanh((k - (k0 + r n_c))/w).
///
/// The alternating sum is truncated symmetrically at even R, starting from
/// [`DEFAULT_IMAGE_CUTOFF`], and grown until successive partial sums agree to 1e-12.
pub fn alpha_tanh(k: f64, p: &WallParams) -> Result<f64> {
    p.validate()?;
    if p.a0 == 0.0 {
        return Ok(0.0);
    }
    let x = k - p.k0;
    let n = p.n_sites as f64;
    let mut cutoff = DEFAULT_IMAGE_CUTOFF;
    let mut prev = image_sum(x, n, p.w, cutoff);
    loop {
        let next_cutoff = cutoff + 2;
        let next = image_sum(x, n, p.w, next_cutoff);
        let change = (next - prev).abs();
        if change < IMAGE_SUM_TOL {
            return Ok(p.a0 * next);
        }
        if next_cutoff >= MAX_IMAGE_CUTOFF {
            return Err(Error::AlphaNotConverged {
                w: p.w,
                n_sites: p.n_sites,
                last_change: change,
            });
        }
        cutoff = next_cutoff;
        prev = next;
    }
}

/// Image sum at a fixed cutoff, without a convergence check.
pub fn alpha_tanh_truncated(k: f64, p: &WallParams, cutoff: usize) -> f64 {
    p.a0 * image_sum(k - p.k0, p.n_sites as f64, p.w, cutoff)
}

fn stagger(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn default_epr_mean() -> f64 {
    0.55
}
fn default_epr_stagger() -> f64 {
    0.45
}
fn default_a0() -> f64 {
    1.0
}
fn default_w() -> f64 {
    2.0
}

/// Coupling profile families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// J_k = J0 exp[(-1)^k α(k - k0)] with the tanh image-sum wall.
    ExpWall {
        n_sites: usize,
        j0: f64,
        a0: f64,
        k0: f64,
        w: f64,
    },
    /// J_k = J0 + (-1)^k a0 sin(π(k - k0)/n_c - ω t).
    AdditiveSin {
        n_sites: usize,
        j0: f64,
        a0: f64,
        k0: f64,
        omega: f64,
    },
    /// Three-site ring: J_k = J̃0 + J̃1 cos(2π(k-1)/3 - φ(t)), φ(t) = phi + ω t.
    ThreeSpin {
        j0_tilde: f64,
        j1_tilde: f64,
        #[serde(default)]
        phi: f64,
        #[serde(default)]
        omega: f64,
    },
    /// Wall pair: J_k = mean - stagger (-1)^k [1 + α(k - k_A) - α(k - k_B)],
    /// k_A = (n_c + s)/2, k_B = (n_c - s)/2.
    EprPair {
        n_sites: usize,
        s: f64,
        #[serde(default = "default_a0")]
        a0: f64,
        #[serde(default = "default_w")]
        w: f64,
        #[serde(default = "default_epr_mean")]
        mean: f64,
        #[serde(default = "default_epr_stagger")]
        stagger: f64,
    },
    /// Literal coupling list.
    Explicit { couplings: Vec<f64> },
}

/// Multiplicative disorder applied after profile evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disorder {
    pub fraction: f64,
    pub seed: u64,
}

/// Declarative, possibly time-dependent coupling profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeSpec {
    #[serde(flatten)]
    pub profile: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<Disorder>,
}

impl From<Profile> for ExchangeSpec {
    fn from(profile: Profile) -> Self {
        Self {
            profile,
            disorder: None,
        }
    }
}

/// Bond strengths J_1..J_{n_c}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector(Vec<f64>);

impl CouplingVector {
    /// Any finite couplings (zeros allowed; used for operator tests).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidRingSize(values.len()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("coupling J_{} is not finite", k + 1)));
        }
        Ok(Self(values))
    }

    /// Strictly positive couplings, as every physical profile requires.
    pub fn positive(values: Vec<f64>) -> Result<Self> {
        let v = Self::new(values)?;
        v.check_positive()?;
        Ok(v)
    }

    pub fn uniform(n_sites: usize, j: f64) -> Result<Self> {
        Self::new(vec![j; n_sites])
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.0.iter().position(|&v| v <= 0.0) {
            Some(k) => Err(Error::NonPositiveCoupling {
                bond: k + 1,
                value: self.0[k],
            }),
            None => Ok(()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// J_k for 1-based bond k.
    pub fn bond(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Profile {
    pub fn n_sites(&self) -> usize {
        match self {
            Profile::ExpWall { n_sites, .. }
            | Profile::AdditiveSin { n_sites, .. }
            | Profile::EprPair { n_sites, .. } => *n_sites,
            Profile::ThreeSpin { .. } => 3,
            Profile::Explicit { couplings } => couplings.len(),
        }
    }

    /// Whether the couplings depend on time.
    pub fn is_time_dependent(&self) -> bool {
        match self {
            Profile::AdditiveSin { omega, .. } | Profile::ThreeSpin { omega, .. } => *omega != 0.0,
            _ => false,
        }
    }

    /// Drive rate ω of the periodic kinds.
    pub fn omega(&self) -> Option<f64> {
        match self {
            Profile::AdditiveSin { omega, .. } | Profile::ThreeSpin { omega, .. } => Some(*omega),
            _ => None,
        }
    }

    /// Same profile with a different drive rate.
    pub fn with_omega(&self, new_omega: f64) -> Result<Profile> {
        let mut p = self.clone();
        match &mut p {
            Profile::AdditiveSin { omega, .. } | Profile::ThreeSpin { omega, .. } => {
                *omega = new_omega;
                Ok(p)
            }
            _ => Err(Error::InvalidParameter(
                "only three_spin and additive_sin profiles carry a drive rate".into(),
            )),
        }
    }

    /// Time for the wall to advance by two sites (one application of F = D U_T).
    pub fn two_site_period(&self) -> Result<f64> {
        match self {
            Profile::ThreeSpin { omega, .. } | Profile::AdditiveSin { omega, .. } if *omega != 0.0 => {
                let n = self.n_sites() as f64;
                let angle = match self {
                    Profile::ThreeSpin { .. } => 4.0 * PI / n,
                    _ => 2.0 * PI / n,
                };
                Ok(angle / omega.abs())
            }
            _ => Err(Error::InvalidParameter(
                "a periodic drive (three_spin or additive_sin with omega != 0) is required".into(),
            )),
        }
    }

    /// Wall centers in bond units (where the staggered order parameter changes sign).
    pub fn wall_centers(&self) -> Vec<f64> {
        match self {
            Profile::ExpWall { k0, .. } | Profile::AdditiveSin { k0, .. } => vec![*k0],
            Profile::EprPair { n_sites, s, .. } => {
                let n = *n_sites as f64;
                vec![(n + s) / 2.0, (n - s) / 2.0]
            }
            Profile::ThreeSpin { .. } | Profile::Explicit { .. } => vec![],
        }
    }

    /// Couplings at time `t`, without disorder or positivity checks.
    pub fn raw_couplings(&self, t: f64) -> Result<Vec<f64>> {
        let n = self.n_sites();
        if n < 3 {
            return Err(Error::InvalidRingSize(n));
        }
        let out = match self {
            Profile::ExpWall { n_sites, j0, a0, k0, w } => {
                let p = WallParams { a0: *a0, k0: *k0, w: *w, n_sites: *n_sites };
                (1..=n)
                    .map(|k| Ok(j0 * (stagger(k) * alpha_tanh(k as f64, &p)?).exp()))
                    .collect::<Result<Vec<_>>>()?
            }
            Profile::AdditiveSin { n_sites, j0, a0, k0, omega } => {
                let nf = *n_sites as f64;
                (1..=n)
                    .map(|k| j0 + stagger(k) * a0 * (PI * (k as f64 - k0) / nf - omega * t).sin())
                    .collect()
            }
            Profile::ThreeSpin { j0_tilde, j1_tilde, phi, omega } => {
                let phase = phi + omega * t;
                (1..=3)
                    .map(|k| j0_tilde + j1_tilde * (2.0 * PI * (k as f64 - 1.0) / 3.0 - phase).cos())
                    .collect()
            }
            Profile::EprPair { n_sites, s, a0, w, mean, stagger: amp } => {
                let nf = *n_sites as f64;
                let wall_a = WallParams { a0: *a0, k0: (nf + s) / 2.0, w: *w, n_sites: *n_sites };
                let wall_b = WallParams { k0: (nf - s) / 2.0, ..wall_a };
                (1..=n)
                    .map(|k| {
                        let kf = k as f64;
                        let g = 1.0 + alpha_tanh(kf, &wall_a)? - alpha_tanh(kf, &wall_b)?;
                        Ok(mean - amp * stagger(k) * g)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Profile::Explicit { couplings } => couplings.clone(),
        };
        Ok(out)
    }
}

impl ExchangeSpec {
    pub fn n_sites(&self) -> usize {
        self.profile.n_sites()
    }

    pub fn with_disorder(mut self, fraction: f64, seed: u64) -> Self {
        self.disorder = Some(Disorder { fraction, seed });
        self
    }
}

/// Evaluate the profile at time `t`; disorder (if any) is applied afterwards.
pub fn evaluate_exchange(spec: &ExchangeSpec, t: f64) -> Result<CouplingVector> {
    let j = evaluate_exchange_unchecked(spec, t)?;
    j.check_positive()?;
    Ok(j)
}

/// As [`evaluate_exchange`] but without the positivity check.
pub fn evaluate_exchange_unchecked(spec: &ExchangeSpec, t: f64) -> Result<CouplingVector> {
    let raw = CouplingVector::new(spec.profile.raw_couplings(t)?)?;
    match spec.disorder {
        Some(d) => apply_disorder(&raw, d.fraction, d.seed),
        None => Ok(raw),
    }
}

/// J_k -> J_k (1 + fraction u_k), u_k ~ U[-1, 1] i.i.d. from a ChaCha8 stream seeded by `seed`.
pub fn apply_disorder(j: &CouplingVector, fraction: f64, seed: u64) -> Result<CouplingVector> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidDisorder(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = j
        .values()
        .iter()
        .map(|&v| {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            v * (1.0 + fraction * u)
        })
        .collect();
    Ok(CouplingVector(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wall(a0: f64, k0: f64, w: f64, n: usize) -> WallParams {
        WallParams { a0, k0, w, n_sites: n }
    }

    #[test]
    fn alpha_vanishes_at_center_and_for_zero_amplitude() {
        let p = wall(1.0, 15.0, 2.0, 29);
        assert_eq!(alpha_tanh(15.0, &p).unwrap(), 0.0);
        let p0 = wall(0.0, 15.0, 2.0, 29);
        for k in 1..=29 {
            assert_eq!(alpha_tanh(k as f64, &p0).unwrap(), 0.0);
        }
    }

    #[test]
    fn alpha_far_from_wall_saturates() {
        // oracle: direct truncated summation at R = 64, term by term in index order
        let p = wall(1.0, 15.0, 2.0, 29);
        let x: f64 = 7.0;
        let oracle: f64 = (-64i64..=64)
            .map(|r| {
                let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                sign * ((x - r as f64 * 29.0) / 2.0).tanh()
            })
            .sum();
        let got = alpha_tanh(22.0, &p).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 1.0).abs() < 1e-2);
    }

    #[test]
    fn alpha_is_antiperiodic_over_the_ring() {
        let p = wall(1.0, 4.5, 2.0, 9);
        for k in 0..9 {
            let a = alpha_tanh(k as f64, &p).unwrap();
            let b = alpha_tanh(k as f64 + 9.0, &p).unwrap();
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_reports_non_convergence_for_very_wide_walls() {
        let p = wall(1.0, 5.0, 500.0, 9);
        assert!(matches!(alpha_tanh(1.0, &p), Err(Error::AlphaNotConverged { .. })));
        assert!(alpha_tanh(1.0, &wall(1.0, 5.0, -1.0, 9)).is_err());
    }

    #[test]
    fn wide_tanh_wall_crosses_zero_where_the_sine_profile_does() {
        let n = 9;
        let k0 = 4.5;
        let tanh_wall = wall(1.0, k0, n as f64, n);
        let crossings = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            // sign changes of the continuous order parameter on a fine grid over one ring length
            let grid: Vec<f64> = (0..=900).map(|i| i as f64 * 0.01).collect();
            grid.windows(2)
                .filter(|w| f(w[0]).signum() != f(w[1]).signum())
                .map(|w| 0.5 * (w[0] + w[1]))
                .collect()
        };
        let a = crossings(&|k| alpha_tanh(k, &tanh_wall).unwrap());
        let b = crossings(&|k| (PI * (k - k0) / n as f64).sin());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 0.5, "{x} vs {y}");
        }
    }

    #[test]
    fn epr_pair_at_zero_separation_is_uniformly_dimerized() {
        let spec: ExchangeSpec = Profile::EprPair {
            n_sites: 18,
            s: 0.0,
            a0: 1.0,
            w: 2.0,
            mean: 0.55,
            stagger: 0.45,
        }
        .into();
        let j = evaluate_exchange(&spec, 0.0).unwrap();
        for k in 1..=18 {
            let expected = if k % 2 == 1 { 1.0 } else { 0.1 };
            assert!((j.bond(k) - expected).abs() < 1e-15, "J_{k} = {}", j.bond(k));
        }
    }

    #[test]
    fn epr_pair_flips_dimerization_between_walls() {
        let n = 30;
        let s = 12.0;
        let spec: ExchangeSpec = Profile::EprPair { n_sites: n, s, a0: 1.0, w: 2.0, mean: 0.55, stagger: 0.45 }.into();
        let j = evaluate_exchange(&spec, 0.0).unwrap();
        // staggered part (J_k - mean)(-1)^k changes sign exactly once across each wall
        let order: Vec<f64> = (1..=n).map(|k| -(j.bond(k) - 0.55) * stagger(k)).collect();
        let flips: Vec<usize> = (1..n).filter(|&k| order[k - 1].signum() != order[k].signum()).collect();
        assert_eq!(flips.len(), 2, "{order:?}");
        let (kb, ka) = ((n as f64 - s) / 2.0, (n as f64 + s) / 2.0);
        assert!(order[(kb as usize + ka as usize) / 2 - 1] < 0.0);
        assert!(order[0] > 0.0 && order[n - 1] > 0.0);
    }

    #[test]
    fn exp_wall_without_amplitude_is_uniform() {
        let spec: ExchangeSpec = Profile::ExpWall { n_sites: 11, j0: 1.3, a0: 0.0, k0: 6.0, w: 2.0 }.into();
        let j = evaluate_exchange(&spec, 0.0).unwrap();
        assert!(j.values().iter().all(|&v| v == 1.3));
    }

    #[test]
    fn three_spin_substitution() {
        let spec: ExchangeSpec = Profile::ThreeSpin { j0_tilde: 1.0, j1_tilde: 0.5, phi: 0.0, omega: 0.0 }.into();
        let j = evaluate_exchange(&spec, 0.0).unwrap();
        assert!((j.bond(1) - 1.5).abs() < 1e-15);
        assert!((j.bond(2) - 0.75).abs() < 1e-15);
        assert!((j.bond(3) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn additive_sin_reports_non_positive_bond() {
        let spec: ExchangeSpec = Profile::AdditiveSin { n_sites: 9, j0: 0.5, a0: 1.0, k0: 4.5, omega: 0.0 }.into();
        match evaluate_exchange(&spec, 0.0) {
            Err(Error::NonPositiveCoupling { bond, value }) => {
                assert!(value <= 0.0);
                assert!((1..=9).contains(&bond));
            }
            other => panic!("expected NonPositiveCoupling, got {other:?}"),
        }
    }

    #[test]
    fn additive_sin_wall_advances_two_sites_per_period() {
        let profile = Profile::AdditiveSin { n_sites: 9, j0: 1.0, a0: 0.1, k0: 4.5, omega: 0.7 };
        let t = profile.two_site_period().unwrap();
        let j0 = profile.raw_couplings(0.3).unwrap();
        let j1 = profile.raw_couplings(0.3 + t).unwrap();
        for k in 0..9 {
            assert!((j1[(k + 2) % 9] - j0[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn disorder_examples() {
        let j = CouplingVector::positive(vec![1.0, 0.5, 2.0, 1.5, 0.8]).unwrap();
        assert_eq!(apply_disorder(&j, 0.0, 7).unwrap(), j);
        let a = apply_disorder(&j, 0.5, 42).unwrap();
        let b = apply_disorder(&j, 0.5, 42).unwrap();
        let c = apply_disorder(&j, 0.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (x, y) in a.values().iter().zip(j.values()) {
            assert!(*x >= 0.5 * y && *x <= 1.5 * y);
        }
        assert!(matches!(apply_disorder(&j, 1.0, 1), Err(Error::InvalidDisorder(_))));
        assert!(matches!(apply_disorder(&j, -0.1, 1), Err(Error::InvalidDisorder(_))));
    }

    #[test]
    fn disorder_keeps_staggered_sign_pattern() {
        let spec: ExchangeSpec = Profile::ExpWall { n_sites: 17, j0: 1.0, a0: 1.0, k0: 9.0, w: 2.0 }.into();
        let clean = evaluate_exchange(&spec, 0.0).unwrap();
        for seed in 0..20 {
            let dirty = evaluate_exchange(&spec.clone().with_disorder(0.5, seed), 0.0).unwrap();
            // ln J_k carries the sign of (-1)^k α; disorder only rescales by a factor in [0.5, 1.5]
            for (c, d) in clean.values().iter().zip(dirty.values()) {
                assert!(d / c >= 0.5 && d / c <= 1.5);
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ExchangeSpec::from(Profile::EprPair { n_sites: 18, s: 4.0, a0: 1.0, w: 2.0, mean: 0.55, stagger: 0.45 })
            .with_disorder(0.2, 9);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"epr_pair\""));
        let back: ExchangeSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn alpha_antisymmetric_about_center(x in 0.0f64..20.0, k0 in 1.0f64..29.0, w in 0.5f64..6.0) {
            let p = wall(1.0, k0, w, 29);
            let a = alpha_tanh(k0 + x, &p).unwrap();
            let b = alpha_tanh(k0 - x, &p).unwrap();
            prop_assert!((a + b).abs() < 1e-12);
        }
    }
}
