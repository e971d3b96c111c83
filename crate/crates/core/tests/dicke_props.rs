use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

mod common;

use common::expansion_by_hand;
use subradiance::dicke::{
    collective_ops, dicke_decay_oracle, eigenvalue, ladder_rate, multiplet_degeneracy,
    multiplet_table, multiplets, promote, promoted_minus_expansion, singlet, singlet_table_states,
    CollectiveOps, FullState, MultipletLabel,
};
use subradiance::ensemble::{halves, make_ensemble, GeometrySpec};
use subradiance::kernel::{build_kernel, rate_of};
use subradiance::states::{minus_state, plus_state, ExcitationState};

fn mats(ops: &CollectiveOps) -> [DMatrix<C64>; 4] {
    [
        ops.matrix(CollectiveOps::raise),
        ops.matrix(CollectiveOps::lower),
        ops.matrix(CollectiveOps::rz),
        ops.matrix(CollectiveOps::r_squared),
    ]
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

#[test]
fn commutation_relations() {
    for n in 1..=6 {
        let ops = collective_ops(n).unwrap();
        let [rp, rm, rz, r2] = mats(&ops);
        assert!(max_abs(&(&rz * &rp - &rp * &rz - &rp)) < 1e-10);
        assert!(max_abs(&(&rz * &rm - &rm * &rz + &rm)) < 1e-10);
        for op in [&rp, &rm, &rz] {
            assert!(max_abs(&(&r2 * op - op * &r2)) < 1e-10, "N={n}");
        }
        // R⁻ = (R⁺)†
        assert!(max_abs(&(rp.adjoint() - &rm)) < 1e-15);
    }
}

#[test]
fn multiplet_completeness_and_orthonormality() {
    for n in 1..=8 {
        let mps = multiplets(n).unwrap();
        let total: usize = mps.iter().map(|m| m.twice_r as usize + 1).sum();
        assert_eq!(total, 1 << n);
        for tr in 0..=n as u32 {
            let count = mps.iter().filter(|m| m.twice_r == tr).count();
            assert_eq!(count, multiplet_degeneracy(n, tr), "N={n} 2R={tr}");
        }
        if n <= 6 {
            let all: Vec<&FullState> = mps.iter().flat_map(|m| m.states.iter()).collect();
            for (i, a) in all.iter().enumerate() {
                for (j, b) in all.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((a.inner(b) - C64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }
    // four atoms: one quintet, three triplets, two singlets
    let four = multiplets(4).unwrap();
    let mut dims: Vec<usize> = four.iter().map(|m| m.twice_r as usize + 1).collect();
    dims.sort();
    assert_eq!(dims, vec![1, 1, 3, 3, 3, 5]);
}

#[test]
fn eigenvalues_and_lowering_norms() {
    for n in 1..=8 {
        let ops = collective_ops(n).unwrap();
        for mp in multiplets(n).unwrap() {
            for (i, st) in mp.states.iter().enumerate() {
                let label = mp.label(i);
                let (r, m) = (label.r(), label.m());
                let v = st.amplitudes();
                assert_eq!(
                    eigenvalue(v, &ops.rz(v), 1e-10).map(|x| (x - m).abs() < 1e-10),
                    Some(true)
                );
                let r2 = eigenvalue(v, &ops.r_squared(v), 1e-10).unwrap();
                assert!((r2 - r * (r + 1.0)).abs() < 1e-10);
                let lowered: f64 = ops.lower(v).iter().map(|c| c.norm_sqr()).sum();
                assert!(
                    (lowered - ladder_rate(&label)).abs() < 1e-10,
                    "N={n} {label:?}"
                );
                assert!((dicke_decay_oracle(st, 1.0).unwrap() - ladder_rate(&label)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn table_states() {
    let ops = collective_ops(4).unwrap();
    let rows = singlet_table_states();
    assert_eq!(rows.len(), 5);
    for (i, (label, a)) in rows.iter().enumerate() {
        assert!((a.norm_sq() - 1.0).abs() < 1e-12);
        let v = a.amplitudes();
        let r2 = eigenvalue(v, &ops.r_squared(v), 1e-12).unwrap();
        let rz = eigenvalue(v, &ops.rz(v), 1e-12).unwrap();
        assert!((r2 - label.r() * (label.r() + 1.0)).abs() < 1e-12);
        assert!((rz - label.m()).abs() < 1e-12);
        for (j, (_, b)) in rows.iter().enumerate() {
            if i != j {
                assert!(a.inner(b).norm() < 1e-12, "rows {i} and {j}");
            }
        }
    }
    // |1,−1⟩₁ has R² = 2 and R_z = −1; |0,0⟩₁ has R² = 0
    assert_eq!((rows[0].0.r(), rows[0].0.m()), (1.0, -1.0));
    assert_eq!(rows[3].0.r(), 0.0);
}

#[test]
fn singlet_pair_is_dark_to_local_raising() {
    let s = singlet(0, 1, 4).unwrap();
    // σ⁺₀ + σ⁺₁ restricted to the pair
    let mut out = vec![C64::new(0.0, 0.0); 16];
    for (idx, c) in s.amplitudes().iter().enumerate() {
        for j in [0, 1] {
            if idx >> j & 1 == 0 {
                out[idx | 1 << j] += c;
            }
        }
    }
    assert!(out.iter().all(|c| c.norm() < 1e-15));
    let a = singlet(0, 2, 3).unwrap();
    let b = singlet(1, 2, 3).unwrap();
    assert!((a.inner(&b).re - 0.5).abs() < 1e-15);
}

#[test]
fn promoted_minus_matches_expansion() {
    for n in [4, 6, 8] {
        let ens = make_ensemble(&GeometrySpec::point_cluster(n, 0.0)).unwrap();
        let minus = minus_state(&ens, &halves(&ens).unwrap()).unwrap();
        let promoted = promote(&FullState::from_excitation(&minus).unwrap()).unwrap();
        let (raw, norm_sq) = expansion_by_hand(n);
        // the sum over (N/2)² pairs has squared norm N³/8
        assert!((norm_sq - (n * n * n) as f64 / 8.0).abs() < 1e-10);
        let by_hand = FullState::normalized(n, raw).unwrap();
        assert!((promoted.fidelity(&by_hand) - 1.0).abs() < 1e-12, "N={n}");
        let lib = promoted_minus_expansion(n).unwrap();
        assert!((lib.fidelity(&by_hand) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oracle_examples() {
    let ens = make_ensemble(&GeometrySpec::point_cluster(4, 0.0)).unwrap();
    let plus = FullState::from_excitation(&plus_state(&ens)).unwrap();
    let minus =
        FullState::from_excitation(&minus_state(&ens, &halves(&ens).unwrap()).unwrap()).unwrap();
    assert!((dicke_decay_oracle(&plus, 1.0).unwrap() - 4.0).abs() < 1e-12);
    assert!(dicke_decay_oracle(&minus, 1.0).unwrap().abs() < 1e-12);
    let label = MultipletLabel::new(2.0, -1.0, 1).unwrap();
    let st = subradiance::dicke::multiplet_state(4, &label).unwrap();
    assert!((dicke_decay_oracle(&st, 1.0).unwrap() - ladder_rate(&label)).abs() < 1e-10);
    assert_eq!(ladder_rate(&label), 4.0);
}

#[test]
fn table_dump_covers_space() {
    let rows = multiplet_table(4).unwrap();
    assert_eq!(rows.len(), 16);
    let json = serde_json::to_value(&rows).unwrap();
    assert_eq!(json[0]["n"], 4);
    assert!(json
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["expansion"].as_array().is_some_and(|e| !e.is_empty())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_equals_kernel_in_dicke_limit(
        half in 1usize..=3,
        raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        gamma in 0.1f64..5.0,
    ) {
        let n = 2 * half;
        prop_assume!(raw[..n].iter().any(|(a, b)| a.abs() + b.abs() > 1e-3));
        let ens = make_ensemble(&GeometrySpec::point_cluster(n, 0.0).with_gamma(gamma)).unwrap();
        let s = ExcitationState::normalized(raw[..n].iter().map(|&(a, b)| C64::new(a, b)).collect(), "r").unwrap();
        let kernel = rate_of(&s, &build_kernel(&ens)).unwrap();
        let oracle = dicke_decay_oracle(&FullState::from_excitation(&s).unwrap(), gamma).unwrap();
        prop_assert!((kernel - oracle).abs() < 1e-10 * gamma.max(kernel));
    }
}
