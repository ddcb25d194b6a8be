use spinwall::analytic3::{
    berry_phase_exact, chiral_state, doublet_basis, floquet_state_exact, Branch, ThreeSpinModel,
};
use spinwall::dynamics::{berry_phase_numeric, floquet_operator, Drive, PropagationPolicy};
use spinwall::hamiltonian::Convention;
use spinwall::profiles::{ExchangeSpec, Profile};

fn drive(conv: Convention) -> (Drive, f64) {
    let spec = ExchangeSpec::from(Profile::ThreeSpin { j0_tilde: 1.0, j1_tilde: 0.5, phi: 0.0, omega: 1.0 });
    let delta = ThreeSpinModel::new(1.0, 0.5, conv).unwrap().delta();
    (Drive::new(spec, doublet_basis(), conv).unwrap(), delta)
}

#[test]
fn ground_paired_state_matches_closed_form() {
    for conv in [Convention::Pauli, Convention::SpinHalf] {
        let (d, delta) = drive(conv);
        for ratio in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let fs = floquet_operator(&d, ratio * delta, &PropagationPolicy::default()).unwrap();
            let exact = floquet_state_exact(ratio * delta, delta, Branch::Plus).unwrap();
            let f = fs.ground_paired().state.fidelity(&exact).unwrap();
            assert!(f > 1.0 - 1e-8, "{conv:?} ω/Δ = {ratio}: fidelity {f}");
            // adiabatic-regime bound on the pairing overlap
            assert!(fs.ground_paired().overlap >= 1.0 / (1.0 + ratio * ratio).sqrt() - 1e-3);
        }
    }
}

#[test]
fn floquet_eigenvectors_stay_in_doublet_or_quartet() {
    let (d, delta) = drive(Convention::Pauli);
    let fs = floquet_operator(&d, 0.7 * delta, &PropagationPolicy::default()).unwrap();
    let plus = chiral_state(Branch::Plus);
    let minus = chiral_state(Branch::Minus);
    let mut in_doublet = 0;
    for v in &fs.eigenvectors {
        let w = plus.fidelity(v).unwrap() + minus.fidelity(v).unwrap();
        assert!(!(1e-10..=1.0 - 1e-10).contains(&w), "doublet weight {w}");
        if w > 0.5 {
            in_doublet += 1;
        }
    }
    assert_eq!(in_doublet, 2);
}

#[test]
fn adiabatic_limit() {
    let (d, delta) = drive(Convention::Pauli);
    // the period is ~10³ time units here, so eigenphases accumulate ~10³ rad and
    // an absolute 1e-9 phase tolerance is out of reach within 2^14 steps
    let policy = PropagationPolicy { phase_tol: 1e-7, ..Default::default() };
    let fs = floquet_operator(&d, 1e-3 * delta, &policy).unwrap();
    let overlap = fs.ground_paired().overlap;
    assert!(overlap >= 0.999999, "overlap {overlap}");
}

#[test]
fn berry_phase_matches_closed_form() {
    let (d, delta) = drive(Convention::Pauli);
    for (ratio, tol) in [(0.1, 1e-4), (1.0, 1e-4), (100.0, 1e-3)] {
        let omega = ratio * delta;
        let fs = floquet_operator(&d, omega, &PropagationPolicy::default()).unwrap();
        let b = berry_phase_numeric(&fs, &d).unwrap();
        let exact = berry_phase_exact(omega, delta).unwrap();
        let diff = (b.geometric - exact).abs().min(2.0 * std::f64::consts::PI - (b.geometric - exact).abs());
        assert!(diff < tol, "ω/Δ = {ratio}: numeric {} exact {exact}", b.geometric);
        assert!(b.cyclicity_error < 1e-8);
    }
}
