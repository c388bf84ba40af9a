//! Acceptance suite. Each criterion prints one PASS or FAIL line.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! The process fails when the set of failing criteria differs from
//! `KNOWN_FAILURES`, so a regression and an unexpected fix are both loud.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schreier_tower::cli::run_cli;
use schreier_tower::graph::distances_from;
use schreier_tower::leaves::sample_seed;
use schreier_tower::towers::{default_mixed_degrees, trace_from_base};
use schreier_tower::*;

/// Criteria that fail for mathematical reasons. Criterion 6 asks for 2 ends
/// at the RT point with `ℓ_k = 1`, but that point is `a·x_k` on every level,
/// one edge from the basepoint, so it lies on the identity leaf, which has
/// 1 end. The 2-ended RT leaves are the non-integer ones (see tests/leaves.rs).
const KNOWN_FAILURES: &[u32] = &[6];

type Check = std::result::Result<String, String>;

/// `(number, name, time limit in seconds, check)`.
type Criterion = (u32, &'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ends_of(t: &Tower, policy: &str, params: &EndsParams) -> std::result::Result<EndsVerdict, String> {
    let mut p = FiberPoint::new(lib(Policy::parse(policy))?);
    Ok(lib(estimate_ends(t, &mut p, params))?.verdict)
}

fn expect_ends(t: &Tower, policy: &str, params: &EndsParams, want: usize) -> std::result::Result<String, String> {
    let got = ends_of(t, policy, params)?;
    ensure(got == EndsVerdict::Ends(want), || format!("{} {policy}: expected {want}, got {got}", t.name()))?;
    Ok(format!("{policy}={got}"))
}

fn c1() -> Check {
    for k in 0..=7 {
        let s = schori_generator_sets(k, SchoriVariant::Simplified);
        let g = stallings_fold(&s.alphabet, &s.generators());
        let n = lib(coset_count(&g))?;
        ensure(n == 3usize.pow(k as u32), || format!("folding k={k}: {n} cosets"))?;
    }
    let t = lib(build_schori_tower(12, SchoriMethod::Voltage))?;
    for k in 0..=12 {
        let n = lib(t.level(k))?.vertex_count();
        ensure(n == 3usize.pow(k as u32), || format!("voltage k={k}: {n} vertices"))?;
    }
    Ok(format!("folding k<=7 and voltage k<=12 give 3^k (largest {})", 3u64.pow(12)))
}

fn c2() -> Check {
    let voltage = lib(build_schori_tower(7, SchoriMethod::Voltage))?;
    for k in 0..=7 {
        let s = schori_generator_sets(k, SchoriVariant::Simplified);
        let folded = stallings_fold(&s.alphabet, &s.generators());
        ensure(labeled_iso(&folded, lib(voltage.level(k))?).is_some(), || format!("k={k}: not isomorphic"))?;
    }
    Ok("folded and voltage levels isomorphic for k=0..7".into())
}

fn c3() -> Check {
    let t = lib(build_schori_tower(10, SchoriMethod::Voltage))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pairs = 0u64;
    for k in 1..=10usize {
        let g = lib(t.level(k))?;
        let m = 1i64 << k;
        for label in 0..2 {
            let vertex: Vec<u32> = (0..m).map(|l| trace_from_base(&t, k, &Word::power(label, l)) as u32).collect();
            let sources: Vec<i64> =
                if k < 10 { (0..m).collect() } else { (0..10).map(|_| rng.gen_range(0..m)).collect() };
            for &l in &sources {
                let d = distances_from(g, vertex[l as usize]);
                for j in 0..m {
                    let diff = (j - l).abs();
                    let want = diff.min(m - diff) as u32;
                    let got = d[vertex[j as usize] as usize];
                    ensure(got == want, || format!("k={k} label {label}: d({l},{j}) = {got}, expected {want}"))?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("{pairs} pairs checked, k=1..10, a- and b-powers"))
}

fn c4() -> Check {
    let t = lib(build_schori_tower(6, SchoriMethod::Voltage))?;
    let d = EndsParams::default();
    let mut out = Vec::new();
    for (p, want) in [("id", 4), ("dyadic:1:1", 2), ("q", 1), ("qprime", 1)] {
        out.push(expect_ends(&t, p, &d, want)?);
    }
    Ok(out.join(" "))
}

fn c5() -> Check {
    // Degree 5 levels fit the vertex budget only up to level 9, which holds
    // stable balls of radius 3·8 but not 3·16.
    let g4n = lib(build_generalized_schori_tower(2, GeneralizedVariant::FourN, 3))?;
    let short = EndsParams { r_schedule: vec![2, 4, 8], ..EndsParams::default() };
    let a = expect_ends(&g4n, "id", &short, 8)?;
    let g4n2 = lib(build_generalized_schori_tower(1, GeneralizedVariant::FourNPlusTwo, 3))?;
    let b = expect_ends(&g4n2, "id", &EndsParams::default(), 6)?;
    Ok(format!("{}: {a}, {}: {b}", g4n.name(), g4n2.name()))
}

fn c6() -> Check {
    let t = lib(build_rt_tower(12))?;
    for k in 0..=12 {
        let g = lib(t.level(k))?;
        for v in 0..g.vertex_count() as u32 {
            let bab = [Letter::pos(1), Letter::pos(0), Letter::pos(1)]
                .iter()
                .fold(v, |x, &l| g.step(x, l).expect("complete"));
            let inv = g.step(v, Letter::neg(0)).expect("complete");
            ensure(bab == inv, || format!("k={k} v={v}: bab={bab}, a^-1={inv}"))?;
        }
    }
    let d = EndsParams::default();
    let id = expect_ends(&t, "id", &d, 1)?;
    // The point with ℓ_k = 1 at every level is the vertex a·x_k.
    let mut p = FiberPoint::new(lib(Policy::parse("word:a"))?);
    for k in 1..=12 {
        let v = lib(p.vertex(&t, k))?;
        ensure(v == 1, || format!("word:a sits at {v} on level {k}"))?;
    }
    let one = expect_ends(&t, "word:a", &d, 2)?;
    Ok(format!("bab = a^-1 for k<=12, {id}, {one}"))
}

fn c7() -> Check {
    let t = lib(build_mixed_tower(&default_mixed_degrees(10), 10))?;
    let d = EndsParams::default();
    let mut out = Vec::new();
    for (p, want, kind) in
        [("id", 4, Verdict::Special), ("thread:a-spread", 2, Verdict::Dyadic), ("q", 1, Verdict::Flipflopping)]
    {
        let mut fp = FiberPoint::new(lib(Policy::parse(p))?);
        let v = lib(classify_fiber_point(&t, &mut fp, 10))?.verdict;
        ensure(v == kind, || format!("{p} classified {v}, expected {kind}"))?;
        out.push(format!("{}/{v}", expect_ends(&t, p, &d, want)?));
    }
    Ok(format!("{}: {}", t.name(), out.join(" ")))
}

fn c8() -> Check {
    let d = EndsParams::default();
    for (t, want) in [(lib(build_dyadic_tower(6))?, 2), (lib(build_torus_tower(6))?, 1)] {
        for i in 0..20 {
            expect_ends(&t, &format!("random:{}", sample_seed(8, i)), &d, want)?;
        }
    }
    Ok("dyadic 20/20 two-ended, torus 20/20 one-ended".into())
}

fn c9() -> Check {
    let plain = lib(build_schori_tower(6, SchoriMethod::Voltage))?;
    let decorated = lib(plain.decorated(&["c", "e"]))?;
    let pruned = lib(decorated.pruned(&["c", "e"]))?;
    let d = EndsParams::default();
    let mut out = Vec::new();
    for p in ["id", "dyadic:1:1", "q", "qprime"] {
        let a = ends_of(&decorated, p, &d)?;
        let b = ends_of(&pruned, p, &d)?;
        let c = ends_of(&plain, p, &d)?;
        ensure(a == b && b == c, || format!("{p}: decorated {a}, pruned {b}, plain {c}"))?;
        out.push(format!("{p}={a}"));
    }
    Ok(out.join(" "))
}

fn c10() -> Check {
    let t = lib(build_schori_tower(6, SchoriMethod::Voltage))?;
    let mut out = Vec::new();
    for (p, want) in [("id", Verdict::Special), ("dyadic:1:1", Verdict::Dyadic), ("q", Verdict::Flipflopping)] {
        let mut fp = FiberPoint::new(lib(Policy::parse(p))?);
        let tr = lib(classify_fiber_point(&t, &mut fp, 20))?;
        ensure(tr.tags.len() == 20, || format!("{p}: {} levels tagged", tr.tags.len()))?;
        ensure(tr.verdict == want, || format!("{p}: {} instead of {want}", tr.verdict))?;
        out.push(format!("{p}={}", tr.verdict));
    }
    Ok(out.join(" "))
}

fn c11() -> Check {
    let t = lib(build_schori_tower(6, SchoriMethod::Voltage))?;
    let d = EndsParams::default();
    let first = lib(sample_fiber_points(&t, 1000, 42, 20, &d, Some(1)))?;
    let allowed = ["1", "2", "4", "unstable"];
    for k in first.ends_histogram.keys() {
        ensure(allowed.contains(&k.as_str()), || format!("verdict {k} outside {{1, 2, 4, unstable}}"))?;
    }
    for threads in [1, 2, 4] {
        let again = lib(sample_fiber_points(&t, 1000, 42, 20, &d, Some(threads)))?;
        ensure(again == first, || format!("report differs with {threads} threads"))?;
    }
    let hist: Vec<String> = first.ends_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    let tax: Vec<String> = first.classification_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    Ok(format!("ends {{{}}} taxonomy {{{}}}, identical for 1, 2, 4 threads", hist.join(" "), tax.join(" ")))
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(std::iter::once("schreier").chain(args.iter().copied()), &mut out, &mut err);
    (code, out)
}

fn c12() -> Check {
    let towers = [
        lib(build_schori_tower(7, SchoriMethod::Voltage))?,
        lib(build_schori_tower(7, SchoriMethod::Folding))?,
        lib(build_dyadic_tower(7))?,
        lib(build_torus_tower(7))?,
        lib(build_rt_tower(7))?,
        lib(build_generalized_schori_tower(2, GeneralizedVariant::FourN, 7))?,
        lib(build_generalized_schori_tower(1, GeneralizedVariant::FourNPlusTwo, 7))?,
        lib(build_mixed_tower(&default_mixed_degrees(10), 7))?,
    ];
    let mut levels = 0;
    for t in &towers {
        for k in 0..=7 {
            let g = lib(t.level(k))?;
            let text = lib(export_graph(g, GraphFormat::Json))?;
            let back = lib(parse_graph_json(&text))?;
            ensure(&back == g, || format!("{} level {k}: round-trip differs", t.name()))?;
            ensure(lib(export_graph(&back, GraphFormat::Json))? == text, || {
                format!("{} level {k}: bytes differ", t.name())
            })?;
            levels += 1;
        }
    }
    let runs: [&[&str]; 6] = [
        &["ends", "--tower", "schori", "--policy", "q"],
        &["ends", "--tower", "mixed", "--policy", "thread:a-spread", "--format", "json"],
        &["classify", "--tower", "schori", "--policy", "dyadic:1:1", "--format", "json"],
        &["sample", "--tower", "schori", "--n", "50", "--seed", "42"],
        &["export", "--tower", "schori", "--level", "3", "--format", "dot"],
        &["export", "--tower", "rt", "--level", "4"],
    ];
    for args in runs {
        let (c1, o1) = cli(args);
        let (c2, o2) = cli(args);
        ensure(c1 == 0 && c1 == c2, || format!("{args:?}: exit codes {c1}, {c2}"))?;
        ensure(o1 == o2 && !o1.is_empty(), || format!("{args:?}: outputs differ"))?;
    }
    Ok(format!("{levels} levels round-trip byte-identically, {} CLI invocations repeat exactly", runs.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "index law", 60, c1),
        (2, "folding vs voltage isomorphism", 30, c2),
        (3, "metric law on a- and b-orbits", 30, c3),
        (4, "Schori end counts", 120, c4),
        (5, "generalized towers", 180, c5),
        (6, "RT tower", 30, c6),
        (7, "mixed 3/5 tower", 180, c7),
        (8, "constant-answer towers", 60, c8),
        (9, "loop decoration invariance", 600, c9),
        (10, "taxonomy consistency", 600, c10),
        (11, "sampler integrity", 600, c11),
        (12, "determinism and round-trips", 600, c12),
    ];
    let mut failed = Vec::new();
    let mut summary = BTreeMap::new();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = match result {
            Ok(msg) if took > Duration::from_secs(limit) => Err(format!("{msg}; took {took:.1?}, limit {limit} s")),
            r => r,
        };
        match &result {
            Ok(msg) => println!("PASS criterion {id:>2} {name} ({took:.2?}): {msg}"),
            Err(msg) => {
                println!("FAIL criterion {id:>2} {name} ({took:.2?}): {msg}");
                failed.push(id);
            }
        }
        summary.insert(id, result.is_ok());
    }
    let passed = summary.values().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria pass; known failures {KNOWN_FAILURES:?}", summary.len());
    if failed != KNOWN_FAILURES {
        println!("failing set {failed:?} differs from the known failures");
        std::process::exit(1);
    }
}
