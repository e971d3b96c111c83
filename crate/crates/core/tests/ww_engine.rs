use num_complex::Complex64 as C64;

use subradiance::ensemble::{make_ensemble, GeometrySpec};
use subradiance::kernel::build_kernel;
use subradiance::states::{plus_state, ExcitationState};
use subradiance::ww::{
    build_mode_grid, calibrate, extract_rate, integrate_ww, make_mode_grid, short_time_coefficient,
    GridParams, MAX_DT_FRACTION,
};
use subradiance::Error;

fn grid(n_angles: usize, n_radial: usize, cutoff_multiple: f64) -> GridParams {
    GridParams {
        n_angles,
        n_radial,
        cutoff_multiple,
    }
}

#[test]
fn single_atom_decays_at_gamma() {
    for gamma in [1.0, 2.5] {
        let ens = make_ensemble(&GeometrySpec::point_cluster(1, 0.0).with_gamma(gamma)).unwrap();
        let (g, cal) = make_mode_grid(&ens, 6, 256, 40.0).unwrap();
        assert!(
            cal.relative_error < 0.05,
            "γ={gamma}: {}",
            cal.relative_error
        );
        let s = ExcitationState::basis(1, 0).unwrap();
        let traj = integrate_ww(&ens, &g, &s, 2.0 / gamma, MAX_DT_FRACTION / gamma).unwrap();
        let fit = extract_rate(&traj, &s).unwrap();
        assert!(
            (fit.rate - gamma).abs() < 0.05 * gamma,
            "γ={gamma}: fit {}",
            fit.rate
        );
    }
}

#[test]
fn pair_eigenmodes_match_kernel() {
    let ens = make_ensemble(&GeometrySpec::line(2, 0.3)).unwrap();
    let (vals, vecs) = build_kernel(&ens).eigen();
    let (g, _) = make_mode_grid(&ens, 8, 256, 40.0).unwrap();
    let dt = MAX_DT_FRACTION / 2.0;
    for m in 0..2 {
        let s = ExcitationState::normalized(
            vecs.column(m).iter().map(|&x| C64::new(x, 0.0)).collect(),
            "eig",
        )
        .unwrap();
        let t_end = (2.5 / vals[m]).min(0.9 * g.recurrence_time());
        let traj = integrate_ww(&ens, &g, &s, t_end, dt).unwrap();
        let fit = extract_rate(&traj, &s).unwrap();
        assert!(
            (fit.rate - vals[m]).abs() < 0.02 * vals[m],
            "mode {m}: {} vs {}",
            fit.rate,
            vals[m]
        );
    }
}

#[test]
fn early_decay_is_quadratic() {
    let ens = make_ensemble(&GeometrySpec::point_cluster(2, 0.0)).unwrap();
    let g = build_mode_grid(&ens, grid(6, 128, 40.0)).unwrap();
    let s = plus_state(&ens);
    let kappa = short_time_coefficient(&ens, &g, &s);
    let dt = 0.005 / g.cutoff();
    let traj = integrate_ww(&ens, &g, &s, 0.1 / g.cutoff(), dt).unwrap();
    let p = traj.projection(&s);
    for (t, pi) in traj.times.iter().zip(&p).skip(1) {
        let loss = 1.0 - pi;
        assert!(
            (loss / (kappa * t * t) - 1.0).abs() < 0.01,
            "t={t}: {loss} vs {}",
            kappa * t * t
        );
    }
}

#[test]
fn radial_refinement_in_recurrence_regime() {
    // fixed window 2.5/γ: the 64-node revival at 2π·64/200 falls inside it
    let ens = make_ensemble(&GeometrySpec::point_cluster(1, 0.0)).unwrap();
    let s = ExcitationState::basis(1, 0).unwrap();
    let error = |n_radial| {
        let g = build_mode_grid(&ens, grid(6, n_radial, 100.0)).unwrap();
        let traj = integrate_ww(&ens, &g, &s, 2.5, 0.001).unwrap();
        (extract_rate(&traj, &s).unwrap().rate - 1.0).abs()
    };
    let (coarse, fine) = (error(64), error(128));
    assert!(fine <= 0.5 * coarse, "{coarse} -> {fine}");

    // the calibration window stops short of the revival on either grid
    for n_radial in [64, 128] {
        let cal = calibrate(&build_mode_grid(&ens, grid(6, n_radial, 100.0)).unwrap()).unwrap();
        assert!(cal.passed, "n_radial {n_radial}: {}", cal.relative_error);
    }
}

#[test]
fn bad_grids_are_rejected() {
    let ens = make_ensemble(&GeometrySpec::point_cluster(1, 0.0)).unwrap();
    assert!(matches!(
        build_mode_grid(&ens, grid(6, 256, 0.0)),
        Err(Error::Configuration { .. })
    ));
    assert!(build_mode_grid(&ens, grid(2, 256, 40.0)).is_err());
    assert!(build_mode_grid(&ens, grid(6, 8, 40.0)).is_err());
    let g = build_mode_grid(&ens, GridParams::default()).unwrap();
    let s = ExcitationState::basis(1, 0).unwrap();
    assert!(integrate_ww(&ens, &g, &s, 1.0, 0.01).is_err());
    assert!(integrate_ww(&ens, &g, &ExcitationState::basis(2, 0).unwrap(), 1.0, 0.001).is_err());
}

#[test]
fn norm_is_conserved() {
    let ens = make_ensemble(&GeometrySpec::line(3, 0.4)).unwrap();
    let g = build_mode_grid(&ens, GridParams::default()).unwrap();
    let s = plus_state(&ens);
    let dt = MAX_DT_FRACTION / (3.0 * ens.gamma());
    let traj = integrate_ww(&ens, &g, &s, 1.0, dt).unwrap();
    assert!(
        traj.drift_per_gamma_t(ens.gamma()) <= 1e-6,
        "{}",
        traj.max_norm_drift
    );
    assert!((traj.final_state.total_norm() - 1.0).abs() < 1e-6);
    for (a, f) in traj.atom_population().iter().zip(&traj.field_population) {
        assert!((a + f - 1.0).abs() < 1e-6);
    }
}
