use spinwall::experiments::{run, ExperimentConfig, ExperimentKind, RunOutput};

fn small(kind: ExperimentKind, edit: impl FnOnce(&mut ExperimentConfig)) -> RunOutput {
    let mut cfg = ExperimentConfig::new(kind);
    edit(&mut cfg);
    cfg.validate().unwrap();
    run(&cfg).unwrap()
}

#[test]
fn epr_pipeline_on_a_short_ring() {
    let out = small(ExperimentKind::Epr, |c| {
        c.n = Some(12);
        c.s_values = Some(vec![0.0, 2.0, 4.0, 6.0]);
    });
    let m = &out.manifest;
    assert!(m.check("ground_total_spin_squared").unwrap().pass);
    assert!(m.check("uniform_dimer_at_s0").unwrap().pass);
    assert!(m.check("hybrid_lobe_product").unwrap().pass);
    let de = out.tables[0].column("dE").unwrap();
    assert!(de.windows(2).all(|w| w[1] < w[0]), "splitting must fall with separation: {de:?}");
    let hybrid = out.tables[1].column("density_k").unwrap();
    assert_eq!(hybrid.len(), 12);
    assert!((hybrid.iter().sum::<f64>()).abs() < 1e-10, "hybrid of S = 0 and S = 1, Sz = 0 states carries no net spin");
}

#[test]
fn floquet3_manifest_carries_convention_report() {
    let out = small(ExperimentKind::Floquet3, |c| c.omega_ratios = Some(vec![0.2, 2.0]));
    assert!(out.manifest.passed(), "{:#?}", out.manifest.checks);
    let notes = &out.manifest.notes;
    assert!((notes["gap_pauli"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((notes["gap_spin_half"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(notes["convention_matching_three_quarters_j1"], serde_json::json!(["spin_half"]));
}

#[test]
fn floquet3_agrees_across_conventions() {
    // Δ is measured, so the dimensionless results do not depend on the operator scale
    let pick = |conv| {
        let out = small(ExperimentKind::Floquet3, |c| {
            c.convention = conv;
            c.omega_ratios = Some(vec![0.7]);
        });
        out.tables[0].column("berry_numeric").unwrap()[0]
    };
    let a = pick(spinwall::hamiltonian::Convention::Pauli);
    let b = pick(spinwall::hamiltonian::Convention::SpinHalf);
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn transport_on_a_nine_site_ring() {
    let out = small(ExperimentKind::Transport, |c| {
        c.n = Some(9);
        c.k0 = Some(5.0);
    });
    let m = &out.manifest;
    assert!(m.check("double_period_density_diff").unwrap().pass);
    assert!(m.check("single_revolution_parity_diff").unwrap().pass);
    assert_eq!(out.tables[0].rows.len(), 19);
}

#[test]
fn failed_checks_are_visible_in_the_manifest() {
    // a wall far too wide for the ring cannot localize
    let out = small(ExperimentKind::Soliton, |c| {
        c.n = Some(9);
        c.k0 = Some(5.0);
        c.w = 40.0;
        c.a0 = Some(0.05);
    });
    assert!(!out.manifest.passed());
    let pr = out.manifest.check("participation_ratio").unwrap();
    assert!(!pr.pass && pr.tolerance == 3.0);
}
