use proptest::prelude::*;

use sconv_core::dyadic::{builtin_table, coarsen, Builtin};
use sconv_core::generators::{blowup, cycle};
use sconv_core::matcore::{l1_dist, quotient, FractionalPartitionMatrix, Matrix, NonNegSymMatrix};
use sconv_core::sampler::PolytopeSampler;
use sconv_core::shapes::{hausdorff_l1, shape_sample};

fn sym_from(vals: &[f64], n: usize) -> NonNegSymMatrix {
    let mut m = Matrix::zeros(n, n);
    let mut it = vals.iter().copied().cycle();
    for i in 0..n {
        for j in i..n {
            let v = it.next().unwrap();
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m.add_at(0, 0, 0.1);
    NonNegSymMatrix::new(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Quotients compose: partitioning a quotient is partitioning with the product.
    #[test]
    fn quotients_compose(vals in proptest::collection::vec(0.0f64..1.0, 36), n in 3usize..8, seed in any::<u64>()) {
        let s = sym_from(&vals, n);
        let m1 = PolytopeSampler::new(&s, 3, seed).unwrap().witness(0).to_partition().unwrap();
        let q1 = quotient(&s, &m1).unwrap();
        let m2 = PolytopeSampler::new(&q1, 2, seed ^ 1).unwrap().witness(0).to_partition().unwrap();
        let composed = FractionalPartitionMatrix::new(m2.matrix().matmul(m1.matrix()).unwrap()).unwrap();
        let direct = quotient(&s, &composed).unwrap();
        let twice = quotient(&q1, &m2).unwrap();
        prop_assert!(l1_dist(direct.matrix(), twice.matrix()).unwrap() <= 1e-9 * (1.0 + s.gamma()));
    }

    /// Sampler witnesses lie in the transportation polytope.
    #[test]
    fn witnesses_are_feasible(vals in proptest::collection::vec(0.0f64..1.0, 28), n in 2usize..7, k in 1usize..4, idx in 0u64..50) {
        let s = sym_from(&vals, n);
        let m = PolytopeSampler::new(&s, k, 5).unwrap().witness(idx).to_partition().unwrap();
        for c in m.matrix().col_sums() {
            prop_assert!((c - 1.0).abs() <= 1e-9);
        }
        for r in m.matrix().row_sums() {
            prop_assert!((r - n as f64 / k as f64).abs() <= 1e-9);
        }
        prop_assert!(m.matrix().data().iter().all(|&v| v >= 0.0));
    }

    /// The Hausdorff distance between sampled clouds is a pseudometric.
    #[test]
    fn hausdorff_triangle(vals in proptest::collection::vec(0.0f64..1.0, 21), seeds in any::<[u64; 3]>()) {
        let s = sym_from(&vals, 6).normalized();
        let clouds: Vec<_> = seeds.iter().map(|&sd| shape_sample(&s, 2, 40, sd).unwrap()).collect();
        let d = |a: usize, b: usize| hausdorff_l1(&clouds[a], &clouds[b]).unwrap().symmetric;
        prop_assert_eq!(d(0, 0), 0.0);
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-15);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }
}

#[test]
fn builtin_levels_are_coarsenings() {
    for b in [Builtin::Uniform, Builtin::MaxRegular, Builtin::Product { adjacency: cycle(3).unwrap() }] {
        let t = builtin_table(&b, 6).unwrap();
        for i in 0..6 {
            assert_eq!(coarsen(t.level(i + 1)).unwrap(), *t.level(i));
        }
        assert!(t.validate().ok);
    }
}

#[test]
fn blowup_normalized_shape_matches_at_k1() {
    // at k = 1 every shape is the single point γ
    let g = cycle(7).unwrap();
    let b = blowup(&g, 4).unwrap();
    let a = shape_sample(&g.normalized(), 1, 5, 0).unwrap();
    let c = shape_sample(&b.normalized(), 1, 5, 0).unwrap();
    assert!(hausdorff_l1(&a, &c).unwrap().symmetric <= 1e-12);
    assert!((a.points[0].get(0, 0) - 1.0).abs() <= 1e-12);
}
