//! Property tests for graph, word, tower and fiber-point invariants.

use std::collections::VecDeque;

use proptest::prelude::*;
use schreier_tower::graph::distances_from;
use schreier_tower::towers::default_mixed_degrees;
use schreier_tower::*;

fn perm(n: usize) -> impl Strategy<Value = Vec<u32>> {
    Just((0..n as u32).collect::<Vec<u32>>()).prop_shuffle()
}

/// A complete two-label graph on 1..=30 vertices, not necessarily connected.
fn action_graph() -> impl Strategy<Value = LabeledGraph> {
    (1usize..=30).prop_flat_map(|n| (perm(n), perm(n), 0..n as u32)).prop_map(|(a, b, base)| {
        LabeledGraph::make_action_graph(Alphabet::ab(), vec![a, b], base).expect("permutations")
    })
}

fn letter() -> impl Strategy<Value = Letter> {
    (0usize..2, any::<bool>()).prop_map(|(label, inverse)| Letter { label, inverse })
}

fn word(max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(letter(), 0..max).prop_map(Word::reduce)
}

fn tower(which: u8) -> Tower {
    match which % 6 {
        0 => build_schori_tower(8, SchoriMethod::Voltage),
        1 => build_rt_tower(8),
        2 => build_torus_tower(6),
        3 => build_dyadic_tower(8),
        4 => build_generalized_schori_tower(2, GeneralizedVariant::FourN, 5),
        _ => build_mixed_tower(&default_mixed_degrees(8), 8),
    }
    .expect("tower builds")
}

/// Plain BFS over the permutation arrays and flood fill of the annulus.
fn annulus_oracle(g: &LabeledGraph, v: u32, r: u32, big_r: u32) -> (usize, usize) {
    let n = g.vertex_count();
    let mut dist = vec![u32::MAX; n];
    dist[v as usize] = 0;
    let mut queue = VecDeque::from([v as usize]);
    let neighbours = |x: usize| -> Vec<usize> {
        let mut out = Vec::new();
        for p in g.perms() {
            out.push(p[x] as usize);
            out.push(p.iter().position(|&y| y as usize == x).unwrap());
        }
        out
    };
    while let Some(x) = queue.pop_front() {
        for y in neighbours(x) {
            if dist[y] == u32::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    let inside = |x: usize| dist[x] > r && dist[x] <= big_r;
    let mut seen = vec![false; n];
    let (mut count, mut touching) = (0, 0);
    for s in 0..n {
        if !inside(s) || seen[s] {
            continue;
        }
        count += 1;
        let mut touch = false;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(x) = stack.pop() {
            touch |= dist[x] == big_r;
            for y in neighbours(x) {
                if inside(y) && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if touch {
            touching += 1;
        }
    }
    (count, touching)
}

proptest! {
    #[test]
    fn letters_and_inverses_cancel(g in action_graph(), l in letter(), v in 0u32..30) {
        let v = v % g.vertex_count() as u32;
        let w = g.step(v, l).unwrap();
        prop_assert_eq!(g.step(w, l.inv()), Some(v));
    }

    #[test]
    fn distance_is_symmetric(g in action_graph(), u in 0u32..30, v in 0u32..30) {
        let n = g.vertex_count() as u32;
        let (u, v) = (u % n, v % n);
        prop_assert_eq!(distance(&g, u, v).ok(), distance(&g, v, u).ok());
    }

    #[test]
    fn triangle_inequality(g in action_graph(), u in 0u32..30, v in 0u32..30, w in 0u32..30) {
        let n = g.vertex_count() as u32;
        let (du, dv) = (distances_from(&g, u % n), distances_from(&g, v % n));
        let w = (w % n) as usize;
        if du[(v % n) as usize] != u32::MAX && dv[w] != u32::MAX {
            prop_assert!(du[w] <= du[(v % n) as usize] + dv[w]);
        }
    }

    #[test]
    fn annulus_matches_flood_fill(g in action_graph(), v in 0u32..30, r in 0u32..5, extra in 1u32..5) {
        let v = v % g.vertex_count() as u32;
        let big_r = r + extra;
        prop_assert_eq!(annulus_components(&g, v, r, big_r).unwrap(), annulus_oracle(&g, v, r, big_r));
    }

    #[test]
    fn ball_counts_match_distances(g in action_graph(), v in 0u32..30, r in 0u32..8) {
        let v = v % g.vertex_count() as u32;
        let b = ball(&g, v, r).unwrap();
        let d = distances_from(&g, v);
        for s in 0..=r {
            prop_assert_eq!(b.count_within(s), d.iter().filter(|&&x| x <= s).count());
        }
        for &(x, dx) in &b.members {
            prop_assert_eq!(d[x as usize], dx);
        }
    }

    #[test]
    fn decorating_then_pruning_is_identity(g in action_graph()) {
        let dec = decorate_with_loops(&g, &["c", "d"]).unwrap();
        prop_assert_eq!(&prune_loops(&dec, &["c", "d"]).unwrap(), &g);
        for v in 0..g.vertex_count() as u32 {
            prop_assert_eq!(distances_from(&dec, v), distances_from(&g, v));
        }
    }

    #[test]
    fn tracing_is_a_right_action(g in action_graph(), u in word(12), w in word(12), s in 0u32..30) {
        let s = s % g.vertex_count() as u32;
        let mid = trace_word(&g, s, &u).unwrap();
        prop_assert_eq!(trace_word(&g, s, &u.concat(&w)).unwrap(), trace_word(&g, mid, &w).unwrap());
        prop_assert_eq!(trace_word(&g, mid, &u.inverse()).unwrap(), s);
    }

    #[test]
    fn word_text_round_trips(w in word(16)) {
        let ab = Alphabet::ab();
        let text = w.display(&ab).to_string();
        prop_assert_eq!(Word::parse(&ab, &text).unwrap(), w);
    }

    #[test]
    fn graph_json_round_trips(g in action_graph()) {
        let text = export_graph(&g, GraphFormat::Json).unwrap();
        prop_assert_eq!(parse_graph_json(&text).unwrap(), g);
    }

    #[test]
    fn implicit_steps_invert(which in 0u8..6, k in 0usize..6, v in any::<u64>(), l in letter()) {
        let t = tower(which);
        let k = k.min(t.depth());
        let v = v % t.vertex_count(k);
        let w = t.step(k, v, l);
        prop_assert!(w < t.vertex_count(k));
        prop_assert_eq!(t.step(k, w, l.inv()), v);
    }

    #[test]
    fn projection_commutes_with_steps(which in 0u8..6, k in 0usize..5, v in any::<u64>(), l in letter()) {
        let t = tower(which);
        let k = k.min(t.depth() - 1);
        let v = v % t.vertex_count(k + 1);
        prop_assert_eq!(t.project(k, t.step(k + 1, v, l)), t.step(k, t.project(k, v), l));
        let fiber = t.preimages(k, t.project(k, v));
        prop_assert_eq!(fiber.len() as u32, t.degree(k));
        prop_assert!(fiber.contains(&v));
    }

    #[test]
    fn random_points_are_coherent(which in 0u8..6, seed in any::<u64>()) {
        let t = tower(which);
        let mut p = FiberPoint::new(Policy::Random { seed });
        let top = t.depth().min(6);
        let top_vertex = p.vertex(&t, top).unwrap();
        let mut v = top_vertex;
        for k in (0..top).rev() {
            v = t.project(k, v);
            prop_assert_eq!(p.vertex(&t, k).unwrap(), v);
        }
        prop_assert_eq!(v, t.basepoint(0));
    }

    #[test]
    fn stable_balls_only_grow(which in 0u8..6, seed in any::<u64>(), r in 1u32..6) {
        let t = tower(which);
        let mut p = FiberPoint::new(Policy::Random { seed });
        let mut last = 0;
        for k in 0..=t.depth().min(6) {
            let v = p.vertex(&t, k).unwrap();
            let b = schreier_tower::graph::ball_in(&t.view(k), v, r, k);
            prop_assert!(b.len() >= last, "level {}: {} < {}", k, b.len(), last);
            last = b.len();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn folding_ignores_generator_order(
        (k, gens) in (1usize..=4).prop_flat_map(|k| {
            (Just(k), Just(schori_generator_sets(k, SchoriVariant::Simplified).generators()).prop_shuffle())
        })
    ) {
        let s = schori_generator_sets(k, SchoriVariant::Simplified);
        let reference = stallings_fold(&s.alphabet, &s.generators());
        let folded = stallings_fold(&s.alphabet, &gens);
        prop_assert_eq!(folded.vertex_count(), reference.vertex_count());
        prop_assert!(labeled_iso(&folded, &reference).is_some());
    }

    #[test]
    fn folding_absorbs_redundant_generators(k in 1usize..=3, extra in prop::collection::vec(0usize..40, 1..4)) {
        let s = schori_generator_sets(k, SchoriVariant::Simplified);
        let gens = s.generators();
        let reference = stallings_fold(&s.alphabet, &gens);
        let mut more = gens.clone();
        for i in extra {
            let a = &gens[i % gens.len()];
            let b = &gens[(i / 3) % gens.len()];
            more.push(a.concat(b));
        }
        prop_assert!(labeled_iso(&stallings_fold(&s.alphabet, &more), &reference).is_some());
    }

    #[test]
    fn bonding_maps_are_coverings(which in 0u8..6, k in 0usize..5) {
        let t = tower(which);
        let k = k.min(t.depth() - 1);
        let map = t.bonding_map(k).unwrap();
        let check = is_covering(t.level(k + 1).unwrap(), t.level(k).unwrap(), &map);
        prop_assert_eq!(check.degree(), Some(t.degree(k) as usize));
    }
}
