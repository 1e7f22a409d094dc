use critmetric::gitcheck::{orbit_closed_1ps, torus_stable, OrbitStatus, WeightConfiguration};
use proptest::prelude::*;

fn status(w: &[Vec<i64>]) -> OrbitStatus {
    torus_stable(&WeightConfiguration::new(w.to_vec()).unwrap()).status
}

fn weights(rank: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-4i64..=4, rank), 1..=7)
}

/// Products of elementary shears and sign flips.
fn unimodular(rank: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec((0..rank, 0..rank, -2i64..=2, any::<bool>()), 0..6).prop_map(move |ops| {
        let mut a: Vec<Vec<i64>> = (0..rank).map(|i| (0..rank).map(|j| i64::from(i == j)).collect()).collect();
        for (i, j, c, flip) in ops {
            if i != j {
                for col in 0..rank {
                    a[i][col] += c * a[j][col];
                }
            }
            if flip {
                a[i].iter_mut().for_each(|v| *v = -*v);
            }
        }
        a
    })
}

fn apply(a: &[Vec<i64>], w: &[i64]) -> Vec<i64> {
    a.iter().map(|row| row.iter().zip(w).map(|(x, y)| x * y).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn permutation_invariant(w in weights(3), seed in any::<u64>()) {
        let mut p = w.clone();
        let n = p.len();
        for i in (1..n).rev() {
            p.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        prop_assert_eq!(status(&w), status(&p));
    }

    #[test]
    fn unimodular_invariant(w in weights(3), a in unimodular(3)) {
        let moved: Vec<Vec<i64>> = w.iter().map(|v| apply(&a, v)).collect();
        prop_assert_eq!(status(&w), status(&moved));
    }

    #[test]
    fn positive_scaling_invariant(w in weights(2), scales in prop::collection::vec(1i64..=5, 7)) {
        let scaled: Vec<Vec<i64>> = w.iter().zip(&scales).map(|(v, s)| v.iter().map(|x| x * s).collect()).collect();
        prop_assert_eq!(status(&w), status(&scaled));
    }

    #[test]
    fn witness_is_destabilizing(w in weights(3)) {
        let config = WeightConfiguration::new(w.clone()).unwrap();
        let verdict = torus_stable(&config);
        match verdict.status {
            OrbitStatus::NotClosed => {
                let a = verdict.witness.expect("witness");
                let pairings = config.pairings(&a);
                prop_assert!(pairings.iter().all(|&p| p >= 0));
                prop_assert!(pairings.iter().any(|&p| p > 0));
            }
            OrbitStatus::Closed => {
                prop_assert!(verdict.witness.is_none());
                prop_assert!(verdict.semistable);
            }
            OrbitStatus::Fixed => prop_assert!(w.iter().flatten().all(|&x| x == 0)),
        }
    }

    #[test]
    fn closed_orbits_have_no_small_witness(w in weights(2)) {
        if status(&w) == OrbitStatus::Closed {
            let config = WeightConfiguration::new(w.clone()).unwrap();
            for a in -6i64..=6 {
                for b in -6i64..=6 {
                    let p = config.pairings(&[a, b]);
                    prop_assert!(!(p.iter().all(|&x| x >= 0) && p.iter().any(|&x| x > 0)));
                }
            }
        }
    }
}

#[test]
fn one_parameter_rule() {
    assert_eq!(orbit_closed_1ps(&[2, -1, 0]).unwrap().status, OrbitStatus::Closed);
    assert_eq!(orbit_closed_1ps(&[2, 1, 0]).unwrap().status, OrbitStatus::NotClosed);
    assert_eq!(orbit_closed_1ps(&[0, 0]).unwrap().status, OrbitStatus::Fixed);
    assert!(orbit_closed_1ps(&[]).is_err());
}

#[test]
fn stock_configurations() {
    assert_eq!(status(&[vec![1, 0], vec![-1, 1], vec![0, -1]]), OrbitStatus::Closed);
    assert_eq!(status(&[vec![1, 0], vec![0, 1]]), OrbitStatus::NotClosed);
    // a segment through the origin in a rank-2 lattice is closed in its span
    assert_eq!(status(&[vec![1, 1], vec![-2, -2]]), OrbitStatus::Closed);
    // origin on the boundary of the hull
    assert_eq!(status(&[vec![1, 0], vec![-1, 0], vec![0, 1]]), OrbitStatus::NotClosed);
}
