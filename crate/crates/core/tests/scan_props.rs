use proptest::prelude::*;
use survscan_core::scan::{
    fused_scan_transform_reduce, prefix_scan, reduce, separated_scan_transform_reduce, suffix_scan,
    tuple3_scan, CompetingWeights, Tuple3,
};
use survscan_core::{ChunkPlan, Direction, TiedBlocks};

fn plan() -> impl Strategy<Value = ChunkPlan> {
    (1usize..40, 1usize..5).prop_map(|(c, w)| ChunkPlan::new(c, w).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn prefix_is_linear(xs in prop::collection::vec(-10.0f64..10.0, 0..200), k in -3.0f64..3.0, plan in plan()) {
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 - 1.0).collect();
        let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x + k * y).collect();
        let (a, b, c) = (prefix_scan(&xs, &plan), prefix_scan(&ys, &plan), prefix_scan(&combo, &plan));
        for i in 0..xs.len() {
            prop_assert!((c[i] - (a[i] + k * b[i])).abs() <= 1e-9 * (1.0 + a[i].abs() + (k * b[i]).abs()));
        }
    }

    #[test]
    fn last_prefix_and_first_suffix_equal_the_reduction(xs in prop::collection::vec(0.0f64..5.0, 1..300), plan in plan()) {
        let total = reduce(&xs, &plan);
        prop_assert!(close(*prefix_scan(&xs, &plan).last().unwrap(), total));
        prop_assert!(close(suffix_scan(&xs, &plan)[0], total));
    }

    #[test]
    fn chunked_scans_match_serial(xs in prop::collection::vec(0.0f64..5.0, 0..300), plan in plan()) {
        let serial = ChunkPlan::serial();
        for (a, b) in prefix_scan(&xs, &plan).iter().zip(prefix_scan(&xs, &serial)) {
            prop_assert!(close(*a, b));
        }
        for (a, b) in suffix_scan(&xs, &plan).iter().zip(suffix_scan(&xs, &serial)) {
            prop_assert!(close(*a, b));
        }
        let t = Tuple3::new(&xs, &xs, &xs).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let (p, s) = (tuple3_scan(t, dir, &plan), tuple3_scan(t, dir, &serial));
            for i in 0..xs.len() {
                prop_assert!(close(p.a[i], s.a[i]) && close(p.b[i], s.b[i]) && close(p.c[i], s.c[i]));
            }
        }
    }

    #[test]
    fn fused_equals_separated(
        rows in prop::collection::vec((0u8..6, 0.1f64..3.0, -2.0f64..2.0, 0u8..3), 1..150),
        plan in plan(),
    ) {
        let mut rows = rows;
        rows.sort_by_key(|r| std::cmp::Reverse(r.0));
        let keys: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        let blocks = TiedBlocks::from_sorted_keys(&keys);
        let a: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1 * r.2).collect();
        let c: Vec<f64> = rows.iter().map(|r| r.1 * r.2 * r.2).collect();
        let mask: Vec<f64> = rows.iter().map(|r| (r.3 == 1) as u8 as f64).collect();
        let u: Vec<f64> = rows.iter().map(|r| if r.3 == 2 { 1.25 } else { 0.0 }).collect();
        let g = vec![0.8; rows.len()];
        let input = Tuple3::new(&a, &b, &c).unwrap();
        for cw in [None, Some(CompetingWeights { u: &u, g: &g })] {
            let f = fused_scan_transform_reduce(input, cw, &mask, &blocks, &plan).unwrap();
            let s = separated_scan_transform_reduce(input, cw, &mask, &blocks, &plan).unwrap();
            prop_assert!(close(f.grad_sum, s.grad_sum), "{} {}", f.grad_sum, s.grad_sum);
            prop_assert!(close(f.hess_sum, s.hess_sum), "{} {}", f.hess_sum, s.hess_sum);
        }
    }

    #[test]
    fn tied_broadcast_is_constant_within_blocks(keys in prop::collection::vec(0u8..5, 1..100)) {
        let mut keys: Vec<f64> = keys.into_iter().map(f64::from).collect();
        keys.sort_by(|a, b| b.total_cmp(a));
        let blocks = TiedBlocks::from_sorted_keys(&keys);
        let mut v = prefix_scan(&vec![1.0; keys.len()], &ChunkPlan::serial());
        blocks.broadcast_last(&mut v);
        for (i, &k) in keys.iter().enumerate() {
            // Number of records with key >= k.
            let expected = keys.iter().filter(|&&o| o >= k).count() as f64;
            prop_assert_eq!(v[i], expected);
        }
    }
}
