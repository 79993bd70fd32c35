use nalgebra::Matrix2;
use proptest::prelude::*;
use tskit_core::direct::simulate_to_steady_state;
use tskit_core::models::{AdsorptionColumnModel, ForcedOscillatorModel, LinearMapModel, QuadraticMap, SpectrumEntry};
use tskit_core::rpm::{rpm_solve, RpmOptions};
use tskit_core::*;

/// Cycles direct simulation needs from a clean bed with the default column.
const N_DIRECT_BASELINE: usize = 139;

/// `exp(M t)` for the underdamped oscillator in closed form.
fn monodromy(model: &ForcedOscillatorModel) -> Matrix2<f64> {
    let t = model.forcing_period();
    let a = model.zeta * model.omega0;
    let wd = model.omega0 * (1.0 - model.zeta * model.zeta).sqrt();
    let m = model.system_matrix();
    ((Matrix2::identity() * (wd * t).cos()) + (m + Matrix2::identity() * a) * ((wd * t).sin() / wd)) * (-a * t).exp()
}

fn css(model: &AdsorptionColumnModel) -> StateVector {
    let s = Timestepper::new(model.clone());
    let p = s.default_parameters();
    let warm = direct::simulate_cycles(&s, &model.clean_state(), &p, 30).unwrap();
    let opts = RpmOptions {
        tolerance: 1e-9,
        ..Default::default()
    };
    let fp = rpm_solve(&s, &warm, &p, &opts, None).unwrap();
    assert!(fp.converged(), "{:?}", fp.status);
    fp.state
}

#[test]
fn oscillator_jacobian_is_matrix_exponential() {
    let model = ForcedOscillatorModel::default();
    let s = Timestepper::new(model.clone());
    let expected = monodromy(&model);
    for forcing in [0.0, 0.2, 3.0] {
        let p = Parameters::new("forcing", forcing);
        let u = model.periodic_state(forcing);
        let j = s.dense_jacobian(&u, &EpsilonPolicy::default(), &p).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - expected[(r, c)]).abs() <= 1e-7);
            }
        }
    }
}

#[test]
fn oscillator_multipliers_do_not_depend_on_forcing() {
    let model = ForcedOscillatorModel::default();
    let s = Timestepper::new(model.clone());
    // The map is affine, so a wide difference step is exact and keeps
    // cancellation error far below the tolerance.
    let wide = EpsilonPolicy {
        base: 1e-3,
        scale_with_state: false,
    };
    let spectrum = |f: f64| {
        let p = Parameters::new("forcing", f);
        let j = s.dense_jacobian(&model.periodic_state(f), &wide, &p).unwrap();
        linalg::eigenvalues(&j).unwrap()
    };
    let base = spectrum(0.0);
    for f in [0.5, 2.0] {
        for (a, b) in base.iter().zip(spectrum(f)) {
            assert!((a - b).norm() <= 1e-8);
        }
    }
}

#[test]
fn linear_spectrum_survives_dense_eigensolve() {
    let spectrum = vec![
        SpectrumEntry::Real(0.99),
        SpectrumEntry::Pair {
            modulus: 0.9,
            angle: 0.4,
        },
        SpectrumEntry::Real(-0.3),
        SpectrumEntry::Real(0.05),
    ];
    let model = LinearMapModel::new(spectrum, &[0.0; 5], Some(11)).unwrap();
    let mut expected = model.eigenvalues(0.0);
    let mut got = linalg::eigenvalues(&model.matrix(0.0)).unwrap();
    linalg::sort_eigenvalues(&mut expected);
    linalg::sort_eigenvalues(&mut got);
    for (a, b) in expected.iter().zip(&got) {
        assert!((a - b).norm() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn column_reaches_css_at_baseline_with_monotone_decay() {
    let model = AdsorptionColumnModel::default();
    let s = Timestepper::new(model.clone());
    let p = s.default_parameters();
    let mut u = model.clean_state();
    let mut changes = Vec::new();
    loop {
        let (next, balance) = model.cycle_with_balance(&u, &p).unwrap();
        assert!(balance.relative_defect() <= 1e-6, "cycle {}: {:e}", changes.len(), balance.relative_defect());
        let change = (&next - &u).norm();
        changes.push(change);
        u = next;
        if change <= 1e-6 || changes.len() > 1000 {
            break;
        }
    }
    assert_eq!(changes.len(), N_DIRECT_BASELINE);
    for w in changes[10..].windows(2) {
        assert!(w[1] < w[0]);
    }
    let run = simulate_to_steady_state(&s, &model.clean_state(), &p, 1e-6, 1000).unwrap();
    assert!(run.converged);
    assert_eq!(run.cycles, N_DIRECT_BASELINE);
    assert_eq!(run.state, u);
}

#[test]
fn css_respects_bounds() {
    let model = AdsorptionColumnModel::default();
    let u = css(&model);
    let n = model.n_cells;
    assert!(u.rows(0, n).iter().all(|&c| (0.0..=model.c_feed).contains(&c)));
    assert!(u.rows(n, n).iter().all(|&q| (0.0..=model.q_sat).contains(&q)));
}

#[test]
fn grid_refinement_moves_product_end_little() {
    let coarse = AdsorptionColumnModel::default();
    let fine = AdsorptionColumnModel {
        n_cells: 180,
        ..coarse.clone()
    };
    let a = css(&coarse)[coarse.n_cells - 1];
    let b = css(&fine)[fine.n_cells - 1];
    assert!(a > 0.0);
    assert!((a - b).abs() <= 0.05 * b.abs(), "{a} vs {b}");
}

#[test]
fn finer_time_step_agrees() {
    let model = AdsorptionColumnModel::default();
    let fine = AdsorptionColumnModel {
        dt: Some(model.nominal_dt() / 10.0),
        ..model.clone()
    };
    let p = model.default_parameters();
    let u = direct::simulate_cycles(&Timestepper::new(model.clone()), &model.clean_state(), &p, 5).unwrap();
    let v = direct::simulate_cycles(&Timestepper::new(fine), &model.clean_state(), &p, 5).unwrap();
    assert!((&u - &v).norm() <= 1e-2 * v.norm(), "{:e}", (&u - &v).norm() / v.norm());
}

fn stepper_for(kind: usize) -> Timestepper {
    match kind {
        0 => Timestepper::new(
            LinearMapModel::new(
                vec![SpectrumEntry::Real(0.9), SpectrumEntry::Pair { modulus: 0.5, angle: 1.0 }],
                &[1.0, 0.0, -1.0],
                Some(3),
            )
            .unwrap(),
        ),
        1 => Timestepper::new(ForcedOscillatorModel::default()),
        2 => Timestepper::new(QuadraticMap::new(3).with_default_lambda(0.1)),
        _ => Timestepper::new(AdsorptionColumnModel {
            n_cells: 12,
            ..Default::default()
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_model_is_deterministic(kind in 0usize..4, seed in prop::collection::vec(0.0f64..0.5, 24)) {
        let s = stepper_for(kind);
        let u = StateVector::from_iterator(s.dim(), seed.iter().copied().cycle().take(s.dim()));
        let p = s.default_parameters();
        let a = s.evaluate(&u, &p).unwrap();
        let b = s.evaluate(&u, &p).unwrap();
        let again = stepper_for(kind).evaluate(&u, &p).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.iter().zip(again.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert_eq!(s.calls(), 2);
    }
}
