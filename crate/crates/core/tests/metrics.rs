use proptest::prelude::*;

use s2e_coref::metrics::{b_cubed, ceaf_e, conll_f1, hungarian, mention_detection_f1, muc, Evaluator, Prf};
use s2e_coref::{ClusterSet, Matrix, Span};

/// Partition of a random subset of single-token mentions over 0..16.
fn clusters() -> impl Strategy<Value = ClusterSet> {
    prop::collection::vec(prop::option::of(0usize..4), 16).prop_map(|labels| {
        let mut cs: Vec<Vec<Span>> = vec![Vec::new(); 4];
        for (i, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                cs[*l].push(Span::new(i, i));
            }
        }
        cs.retain(|c| !c.is_empty());
        ClusterSet::new(cs)
    })
}

fn close(a: Prf, b: Prf) -> bool {
    (a.precision - b.precision).abs() < 1e-12 && (a.recall - b.recall).abs() < 1e-12 && (a.f1 - b.f1).abs() < 1e-12
}

fn metrics(g: &ClusterSet, p: &ClusterSet) -> [Prf; 3] {
    [muc(g, p), b_cubed(g, p), ceaf_e(g, p)]
}

proptest! {
    #[test]
    fn swapping_sides_swaps_precision_and_recall(g in clusters(), p in clusters()) {
        prop_assume!(!g.is_empty() && !p.is_empty());
        for (a, b) in metrics(&g, &p).into_iter().zip(metrics(&p, &g)) {
            prop_assert!((a.precision - b.recall).abs() < 1e-12);
            prop_assert!((a.recall - b.precision).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_to_cluster_and_mention_order(g in clusters(), p in clusters()) {
        let mut shuffled = p.clone();
        shuffled.clusters.reverse();
        shuffled.clusters.iter_mut().for_each(|c| c.reverse());
        for (a, b) in metrics(&g, &p).into_iter().zip(metrics(&g, &shuffled)) {
            prop_assert!(close(a, b));
        }
    }

    #[test]
    fn values_in_unit_interval(g in clusters(), p in clusters()) {
        for m in metrics(&g, &p) {
            for v in [m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let f = conll_f1(&g, &p);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn identical_sets_score_one(g in clusters()) {
        prop_assert!((conll_f1(&g, &g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hungarian_beats_random_permutations(
        rows in 1usize..7,
        cols in 1usize..7,
        values in prop::collection::vec(0.0f64..1.0, 49),
        perm_seed in prop::collection::vec(any::<u32>(), 7),
    ) {
        let m = Matrix::from_fn(rows, cols, |i, j| values[i * 7 + j]);
        let best = hungarian(&m);
        // A random injective assignment of the smaller side.
        let (small, large) = (rows.min(cols), rows.max(cols));
        let mut pool: Vec<usize> = (0..large).collect();
        let mut total = 0.0;
        for (i, s) in perm_seed.iter().take(small).enumerate() {
            let j = pool.remove(*s as usize % pool.len());
            total += if rows <= cols { m[(i, j)] } else { m[(j, i)] };
        }
        prop_assert!(best.total >= total - 1e-12);
        prop_assert_eq!(best.pairs.len(), small);
        let recomputed: f64 = best.pairs.iter().map(|&(i, j)| m[(i, j)]).sum();
        prop_assert!((recomputed - best.total).abs() < 1e-12);
    }
}

#[test]
fn micro_average_pools_counts() {
    let s = Span::new;
    let g1 = ClusterSet::new(vec![vec![s(0, 0), s(1, 1), s(2, 2)]]);
    let p1 = ClusterSet::new(vec![vec![s(0, 0), s(1, 1)]]);
    let g2 = ClusterSet::new(vec![vec![s(0, 0), s(1, 1)]]);
    let p2 = g2.clone();
    let mut ev = Evaluator::new();
    ev.add(&g1, &p1);
    ev.add(&g2, &p2);
    let r = ev.report();
    // MUC: recall (1 + 1) / (2 + 1), precision (1 + 1) / (1 + 1)
    assert!((r.muc.recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((r.muc.precision - 1.0).abs() < 1e-12);
    assert_eq!(ev.documents(), 2);
    // mention detection: 4 of 5 gold mentions found, no false positives
    assert!((r.mention_f1.recall - 0.8).abs() < 1e-12);
}

#[test]
fn mention_detection_counts_spans() {
    let s = Span::new;
    let r = mention_detection_f1(&[s(0, 1), s(3, 3)], &[s(0, 1), s(2, 2)]);
    assert_eq!(r, Prf::new(0.5, 0.5));
}
