use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;

use timebin_core::correlations::*;
use timebin_core::model::{StateIndex, SystemConfig};
use timebin_core::propagator::PropagationSettings;
use timebin_core::protocol::*;
use timebin_core::pulses::RotationSpec;
use timebin_core::stabilizers::ideal_state_oracle;
use timebin_core::Error;

fn pulses() -> ProtocolPulses {
    ProtocolPulses::new(RotationSpec::new(PI, 0.0, 1.0, PI), RotationSpec::new(PI / 2.0, 0.0, -36.0, 0.0))
}

fn context(n: usize, pulses: ProtocolPulses) -> ProtocolContext {
    let config = SystemConfig::default();
    let plan = build_plan(n, BinConfig::default(), pulses, &config).unwrap();
    ProtocolContext::new(plan, &config, &PropagationSettings::default()).unwrap()
}

fn ideal_bins() -> BinConfig {
    BinConfig { bin_length: 400.0, extraction_offset: 5.0, rotation_offset: 5.0 }
}

fn ideal_context(n: usize, azimuths: (f64, f64)) -> ProtocolContext {
    let config = SystemConfig { gamma_cyc: 12.0, ..Default::default() };
    let plan = build_ideal_plan(n, ideal_bins(), ideal_targets(azimuths.0, azimuths.1), &config).unwrap();
    ProtocolContext::new(plan, &config, &PropagationSettings::default()).unwrap()
}

fn p(s: &str) -> OpPattern {
    s.parse().unwrap()
}

#[test]
fn mesh_dual_and_pointwise_routes_agree() {
    let ctx = context(3, pulses());
    let grid = SuperGrid::build(&ctx, 0.0, 6, 16).unwrap();
    for name in ["EEEL", "ELLL", "LELE", "EEEELE", "LEEELL", "ELELEL"] {
        let pat = p(name);
        let mesh = CorrelationGrid::compute(&grid, &pat).unwrap();
        let scale = mesh.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(scale > 1e-8, "{name} vanishes");

        let dual = integrate_pattern(&grid, &pat).unwrap();
        let quad = mesh.integrate();
        assert!((dual - quad).norm() <= 1e-10 * quad.norm().max(1e-12), "{name}: {dual} vs {quad}");

        let k = pat.order();
        for idx in [[1usize, 3, 5], [4, 4, 4], [15, 0, 9], [7, 12, 2]] {
            let idx = &idx[..k];
            let times: Vec<f64> = (0..k).map(|a| mesh.time(a, idx[a])).collect();
            let point = evaluate_pattern(&ctx, &pat, &times).unwrap();
            let err = (point - mesh.value(idx)).norm();
            assert!(err < 1e-6 * scale + 1e-10, "{name} at {idx:?}: {point} vs {}", mesh.value(idx));
        }
    }
}

#[test]
fn reversed_patterns_are_conjugate() {
    let ctx = context(3, pulses());
    let grid = SuperGrid::build(&ctx, 0.0, 6, 24).unwrap();
    for name in ["EEEL", "ELLL", "ELEL", "EEEELE", "LELLLL", "EELLLE"] {
        let pat = p(name);
        let a = integrate_pattern(&grid, &pat).unwrap();
        let b = integrate_pattern(&grid, &pat.reversed()).unwrap();
        assert!((a - b.conj()).norm() < 1e-10 * a.norm().max(1e-12), "{name}: {a} vs {b}");
    }
}

#[test]
fn population_patterns_are_real_and_non_negative() {
    let ctx = context(3, pulses());
    let grid = SuperGrid::build(&ctx, 0.0, 6, 16).unwrap();
    for pat in OpPattern::populations(2).into_iter().chain(OpPattern::populations(3)) {
        let mesh = CorrelationGrid::compute(&grid, &pat).unwrap();
        for v in &mesh.values {
            assert!(v.im.abs() < 1e-8 && v.re > -1e-8, "{pat}: {v}");
        }
    }
    let binned = integrate_on(&grid, &stabilizer_patterns(3)).unwrap();
    assert!(binned.population_imaginary_residue() < 1e-8);
    let total: f64 = OpPattern::populations(3).iter().map(|q| binned.get(&q.to_string()).unwrap().re).sum();
    assert_eq!(binned.g3_total, Some(total));
    assert!(total > 0.0);
}

#[test]
fn time_ordering_is_enforced() {
    let ctx = context(2, pulses());
    let err = evaluate_g2(&ctx, &p("EEEE"), 300.0, 100.0).unwrap_err();
    assert!(matches!(err, Error::PlanOrdering { ref pattern, .. } if pattern == "EEEE"), "{err}");
    assert!(evaluate_g2(&ctx, &p("EEEEEE"), 1.0, 2.0).is_err());
    assert!(evaluate_g3(&ctx, &p("EEEEEE"), 100.0, 200.0, 300.0).is_ok());
}

#[test]
fn grid_evaluation_is_deterministic() {
    let ctx = context(2, pulses());
    let a = integrate_bins(&ctx, 0.0, 20, &OpPattern::all(2)).unwrap();
    let b = integrate_bins(&ctx, 0.0, 20, &OpPattern::all(2)).unwrap();
    assert_eq!(a, b);
}

/// Photon reduced state of the oracle register (spin traced out).
fn oracle_photons(azimuths: (f64, f64)) -> Matrix4<Complex64> {
    let o = ideal_state_oracle(2, [(PI, azimuths.0), (PI / 2.0, azimuths.1)]).unwrap();
    Matrix4::from_fn(|x, u| (0..2).map(|s| o.state[2 * x + s] * o.state[2 * u + s].conj()).sum())
}

#[test]
fn ideal_two_photon_state_matches_the_oracle() {
    for az in [(0.0, 0.0), (0.4, 1.1)] {
        let ctx = ideal_context(2, az);
        let rho = two_photon_density_matrix(&ctx, 64).unwrap();
        let expected = oracle_photons(az);
        let err = (rho - expected).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-2, "azimuths {az:?}: deviation {err}\n{rho:.4}\n{expected:.4}");
    }
}

#[test]
fn pulsed_two_photon_state_is_a_density_matrix() {
    let ctx = context(2, pulses());
    let rho = two_photon_density_matrix(&ctx, 32).unwrap();
    let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(herm < 1e-6, "{herm}");
    assert!((rho.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let min = h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min > -1e-2, "smallest eigenvalue {min}");

    // Same populations and coherence magnitudes as the ideal register.
    let ideal = oracle_photons((0.0, 0.0));
    for r in 0..4 {
        for c in 0..4 {
            let d = (rho[(r, c)].norm() - ideal[(r, c)].norm()).abs();
            assert!(d < 0.05, "|rho[{r},{c}]| differs by {d}");
        }
    }
}

#[test]
fn without_rotations_the_photons_carry_no_coherence() {
    let off = RotationSpec { alpha_g1: 0.0, alpha_g2: 0.0, ..RotationSpec::new(PI, 0.0, 0.0, 0.0) };
    let ctx = context(2, ProtocolPulses::new(off, RotationSpec { theta: PI / 2.0, ..off }));
    let rho = two_photon_density_matrix(&ctx, 24).unwrap();
    for r in 0..4 {
        for c in 0..4 {
            if r != c {
                // Only the undecayed tail of one emission, e^(-ΓT/2) in
                // amplitude, links consecutive bins.
                assert!(rho[(r, c)].norm() < 1e-3, "rho[{r},{c}] = {}", rho[(r, c)]);
            }
        }
    }
}

#[test]
fn separate_cycles_factorize() {
    let ctx = ideal_bins_default_context();
    let t = ctx.bin_length();
    let intensity = |s: f64| ctx.state_at(s).unwrap().population(StateIndex::X1);
    for (t1, t2) in [(60.0, 2.0 * t + 60.0), (300.0, 2.0 * t + 900.0), (1500.0, 2.0 * t + 200.0)] {
        let g = evaluate_g2(&ctx, &p("EEEE"), t1, t2).unwrap();
        let product = intensity(t1) * intensity(t2);
        assert!(g.im.abs() < 1e-10);
        assert!((g.re - product).abs() < 2e-3 * product, "({t1}, {t2}): {} vs {product}", g.re);
    }
}

/// Ideal rotations on the default 4 ns bins.
fn ideal_bins_default_context() -> ProtocolContext {
    let config = SystemConfig::default();
    let plan = build_ideal_plan(2, BinConfig::default(), ideal_targets(0.0, 0.0), &config).unwrap();
    ProtocolContext::new(plan, &config, &PropagationSettings::default()).unwrap()
}

#[test]
fn grid_files_round_trip_through_disk() {
    let ctx = context(2, pulses());
    let grid = SuperGrid::build(&ctx, 0.0, 4, 16).unwrap();
    let mesh = CorrelationGrid::compute(&grid, &p("ELLL")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.tbgrid");
    mesh.save(&path).unwrap();
    let back = CorrelationGrid::load(&path).unwrap();
    assert_eq!(back, mesh);
    assert_eq!(back.integrate(), mesh.integrate());
}

#[test]
fn too_coarse_or_empty_emission_is_rejected() {
    let ctx = context(2, pulses());
    assert!(integrate_bins(&ctx, 0.0, MIN_RESOLUTION - 1, &OpPattern::all(2)).is_err());
    let config = SystemConfig::default();
    let mut plan = build_plan(2, BinConfig::default(), pulses(), &config).unwrap();
    plan.drive.pulses.clear();
    let dark = ProtocolContext::new(plan, &config, &PropagationSettings::default()).unwrap();
    assert!(matches!(two_photon_density_matrix(&dark, 16), Err(Error::Degenerate(_))));
}
