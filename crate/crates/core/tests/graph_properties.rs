use proptest::prelude::*;
use taskbench::{DependencePattern, PatternKind, Point, TaskGraphSpec};

fn pattern(kind: PatternKind, radix: usize, seed: u64) -> DependencePattern {
    DependencePattern::from_parts(kind, radix, 0.5, seed)
}

/// Brute-force successor set: scan every task of the next row.
fn reverse_oracle(g: &TaskGraphSpec, p: Point) -> Vec<usize> {
    if p.t + 1 >= g.height || !g.contains_point(p) {
        return Vec::new();
    }
    (0..g.width)
        .filter(|&j| {
            let q = Point::new(p.t + 1, j);
            g.contains_point(q) && g.deps(q).contains(p.i)
        })
        .collect()
}

fn check_graph(g: &TaskGraphSpec) {
    for t in 0..g.height {
        for i in 0..g.width {
            let p = Point::new(t, i);
            let deps = g.deps(p).to_vec();
            assert!(deps.iter().all(|&j| j < g.width), "{g:?} {p}");
            assert!(deps.windows(2).all(|w| w[0] < w[1]));
            if t >= 1 && g.contains_point(p) {
                // deps only reference tasks that exist in the previous row
                for &j in &deps {
                    assert!(g.contains_point(Point::new(t - 1, j)), "{g:?} {p} -> {j}");
                }
            }
            assert_eq!(g.reverse_deps(p).to_vec(), reverse_oracle(g, p), "{g:?} {p}");
        }
    }
}

#[test]
fn converse_exhaustive_small() {
    for kind in PatternKind::ALL {
        for w in [1usize, 2, 3, 4, 5, 8, 13, 16, 32, 64] {
            let g = TaskGraphSpec::new(w, 16, pattern(kind, 5, 11));
            if g.validate().is_err() {
                continue;
            }
            check_graph(&g);
        }
    }
}

#[test]
fn fft_and_tree_never_empty() {
    for kind in [PatternKind::Fft, PatternKind::Tree] {
        for lg in 0..7 {
            let g = TaskGraphSpec::new(1 << lg, 20, pattern(kind, 0, 0));
            for p in g.points().filter(|p| p.t >= 1) {
                assert!(!g.deps(p).is_empty(), "{kind} W={} {p}", g.width);
            }
        }
    }
}

#[test]
fn nearest_size_away_from_edges() {
    for k in 0..10 {
        let g = TaskGraphSpec::new(32, 3, DependencePattern::Nearest { radix: k });
        assert_eq!(g.deps(Point::new(1, 16)).len(), k);
    }
    let g = TaskGraphSpec::new(4, 3, DependencePattern::Nearest { radix: 9 });
    assert_eq!(g.deps(Point::new(1, 2)).len(), 4);
}

proptest! {
    #[test]
    fn converse_random_params(
        kind_idx in 0usize..8,
        w in 1usize..48,
        h in 2usize..10,
        radix in 0usize..10,
        seed in any::<u64>(),
        graph_id in 0usize..4,
    ) {
        let kind = PatternKind::ALL[kind_idx];
        let w = if matches!(kind, PatternKind::Fft | PatternKind::Tree) { w.next_power_of_two() } else { w };
        let g = TaskGraphSpec::new(w, h, pattern(kind, radix, seed)).with_graph_id(graph_id);
        check_graph(&g);
        let by_enumeration: usize = g.points().map(|p| g.deps(p).len()).sum();
        prop_assert_eq!(g.num_deps(), by_enumeration);
    }

    #[test]
    fn output_header_round_trip(t in 0usize..(1 << 32), i in 0usize..(1 << 32), n in 16usize..128) {
        let out = taskbench::make_output(t, i, n).unwrap();
        prop_assert_eq!(out.header(), Some(Point::new(t, i)));
        prop_assert_eq!(out.len(), n);
    }
}
