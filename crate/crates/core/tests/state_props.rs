use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use subradiance::ensemble::{halves, make_ensemble, thirds, BinPartition, GeometrySpec};
use subradiance::states::{
    apply_bin_phase, minus_state, plus_state, structure_factor, three_bin_state, ExcitationState,
};

fn slab() -> impl Strategy<Value = GeometrySpec> {
    (1usize..=10, 0.1f64..30.0, 0.05f64..8.0, any::<u64>())
        .prop_map(|(k, area, depth, seed)| GeometrySpec::slab(6 * k, area, depth, seed))
}

fn cluster() -> impl Strategy<Value = GeometrySpec> {
    (1usize..=10, 0.0f64..4.0, any::<u64>())
        .prop_map(|(k, spread, seed)| GeometrySpec::point_cluster(6 * k, spread).with_seed(seed))
}

fn any_geometry() -> impl Strategy<Value = GeometrySpec> {
    prop_oneof![slab(), cluster()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn seeded_layouts_repeat(spec in any_geometry()) {
        let a = make_ensemble(&spec).unwrap();
        let b = make_ensemble(&spec).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
    }

    #[test]
    fn partitions_balance(spec in any_geometry()) {
        let ens = make_ensemble(&spec).unwrap();
        for p in [halves(&ens).unwrap(), thirds(&ens).unwrap()] {
            let s: f64 = p.bins().iter().zip(p.weights()).map(|(b, w)| w * b.len() as f64).sum();
            prop_assert_eq!(s, 0.0);
        }
        prop_assert_eq!(BinPartition::single(ens.len()).weight_sum(), ens.len() as f64);
    }

    #[test]
    fn constructors_are_unit_norm_and_orthogonal(spec in any_geometry()) {
        let ens = make_ensemble(&spec).unwrap();
        let plus = plus_state(&ens);
        let minus = minus_state(&ens, &halves(&ens).unwrap()).unwrap();
        let three = three_bin_state(&ens, &thirds(&ens).unwrap()).unwrap();
        for s in [&plus, &minus, &three] {
            prop_assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        }
        prop_assert!(plus.inner(&minus).norm() < 1e-12);
        prop_assert!(plus.inner(&three).norm() < 1e-12);
    }

    #[test]
    fn structure_factor_at_carrier(spec in any_geometry()) {
        let ens = make_ensemble(&spec).unwrap();
        let k0 = ens.k0_vec();
        let n = ens.len() as f64;
        let sp = structure_factor(&plus_state(&ens), &ens, &k0);
        prop_assert!((sp.norm_sqr() - n).abs() < 1e-10 * n);
        let sm = structure_factor(&minus_state(&ens, &halves(&ens).unwrap()).unwrap(), &ens, &k0);
        prop_assert!(sm.norm() < 1e-12);
        let st = structure_factor(&three_bin_state(&ens, &thirds(&ens).unwrap()).unwrap(), &ens, &k0);
        prop_assert!(st.norm() < 1e-12);
    }

    #[test]
    fn bin_phase_is_unitary(
        raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..16),
        raw2 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
        mask in prop::collection::vec(any::<bool>(), 16),
        phase in -7.0f64..7.0,
    ) {
        let n = raw.len();
        prop_assume!(raw.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3));
        prop_assume!(raw2[..n].iter().any(|(a, b)| a.abs() + b.abs() > 1e-3));
        let mk = |v: &[(f64, f64)]| {
            ExcitationState::normalized(v.iter().map(|&(a, b)| C64::new(a, b)).collect(), "s").unwrap()
        };
        let (a, b) = (mk(&raw), mk(&raw2[..n]));
        let idx: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        let a2 = apply_bin_phase(&a, &idx, phase).unwrap();
        let b2 = apply_bin_phase(&b, &idx, phase).unwrap();
        prop_assert!((a2.norm_sq() - 1.0).abs() < 1e-12);
        prop_assert!((a2.inner(&b2) - a.inner(&b)).norm() < 1e-12);
        let back = apply_bin_phase(&apply_bin_phase(&a, &idx, PI).unwrap(), &idx, PI).unwrap();
        prop_assert!((back.fidelity(&a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dicke_plus_minus_orthogonal() {
    let ens = make_ensemble(&GeometrySpec::point_cluster(10, 0.0)).unwrap();
    let plus = plus_state(&ens);
    let minus = minus_state(&ens, &halves(&ens).unwrap()).unwrap();
    assert!(plus.inner(&minus).norm() < 1e-15);
}

#[test]
fn json_round_trip() {
    let ens = make_ensemble(&GeometrySpec::line(4, 0.3)).unwrap();
    let s = minus_state(&ens, &halves(&ens).unwrap()).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    let back: ExcitationState = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    let bad = r#"{"label":"x","amplitudes":[[1.0,0.0],[1.0,0.0]]}"#;
    assert!(serde_json::from_str::<ExcitationState>(bad).is_err());
}
