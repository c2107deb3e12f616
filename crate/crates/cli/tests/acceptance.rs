//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use expander_core::fourier::{fourier_coeff, fourier_transform, TorusMeasure};
use expander_core::grpenum::{crt_check, enumerate, lie_kernel_check, GeneratorSet, GroupTable};
use expander_core::modq::{FactoredModulus, Valuation};
use expander_core::padic::{
    conj_exp_check, property_sweep, verify_word, word_synthesize, PadicMat, SampleMode, WordTrial,
};
use expander_core::qr::{nonsplit_probe, NonsplitOutcome};
use expander_core::spectral::{is_bipartite, mean_zero_spectrum, Method, SolverOptions};
use expander_core::walk::SparseMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const CAP: usize = 1 << 22;

type Outcome = Result<String, String>;

/// Every CLI invocation made by the suite: arguments, exit code, stdout.
static RUNS: Mutex<Vec<(Vec<String>, i32, Vec<u8>)>> = Mutex::new(Vec::new());

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_expander-lab")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn exec(args: &[&str]) -> (i32, Vec<u8>, String) {
    let out = Command::new(bin()).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        out.stdout,
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let (code, stdout, stderr) = exec(args);
    RUNS.lock()
        .unwrap()
        .push((args.iter().map(|s| s.to_string()).collect(), code, stdout.clone()));
    if code != 0 {
        return Err(format!("`{}` exited {code}: {}", args.join(" "), stderr.trim()));
    }
    Ok(stdout)
}

fn cli_json(args: &[&str]) -> Result<Value, String> {
    let out = cli(args)?;
    serde_json::from_slice(&out).map_err(|e| format!("bad json from `{}`: {e}", args.join(" ")))
}

fn rows(doc: &Value) -> &[Value] {
    doc["rows"].as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn u(v: &Value) -> u64 {
    v.as_u64().unwrap_or(u64::MAX)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: u64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit as f64, || {
        format!("{what} took {:.1}s, limit {limit}s", elapsed.as_secs_f64())
    })
}

fn read_fixture(name: &str) -> Vec<HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(fixture(name)).expect("fixture exists");
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .zip(r.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

// Plain 2×2 arithmetic mod q, kept apart from the library.

type M2 = [u64; 4];

fn mul2(a: &M2, b: &M2, q: u64) -> M2 {
    [
        (a[0] * b[0] + a[1] * b[2]) % q,
        (a[0] * b[1] + a[1] * b[3]) % q,
        (a[2] * b[0] + a[3] * b[2]) % q,
        (a[2] * b[1] + a[3] * b[3]) % q,
    ]
}

fn gens2(q: u64) -> [M2; 4] {
    let m = q - 1;
    [[1, 1 % q, 0, 1], [1, m % q, 0, 1], [1, 0, 1 % q, 1], [1, 0, m % q, 1]].map(|g| g.map(|x| x % q))
}

fn bfs_order_and_diameter(q: u64) -> (usize, u32) {
    let id: M2 = [1 % q, 0, 0, 1 % q];
    let gens = gens2(q);
    let mut dist: HashMap<M2, u32> = HashMap::from([(id, 0)]);
    let mut frontier = vec![id];
    let mut depth = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for x in &frontier {
            for g in &gens {
                let y = mul2(g, x, q);
                if !dist.contains_key(&y) {
                    dist.insert(y, depth + 1);
                    next.push(y);
                }
            }
        }
        if !next.is_empty() {
            depth += 1;
        }
        frontier = next;
    }
    (dist.len(), depth)
}

fn det1_count(q: u64) -> usize {
    let mut n = 0;
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                for d in 0..q {
                    n += usize::from((a * d + q * q - b * c) % q == 1 % q);
                }
            }
        }
    }
    n
}

fn table(q: u64) -> Result<GroupTable, String> {
    let fq = FactoredModulus::new(q).map_err(|e| e.to_string())?;
    enumerate(&GeneratorSet::standard_sl2(), &fq, CAP).map_err(|e| e.to_string())
}

fn sl2_order(q: u64) -> usize {
    let fq = FactoredModulus::new(q).unwrap();
    let mut n = 1usize;
    for &(p, e) in fq.factors() {
        let pe = p.pow(e) as usize;
        n *= pe * pe * pe - pe * pe * pe / (p as usize * p as usize);
    }
    n
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut samples = 0;
    let mut bch = 0;
    for p in [2u64, 3, 5, 7, 11] {
        for m in 1..=10 {
            for d in [2usize, 3] {
                let c = property_sweep(p, m, d, 100, 1000 * p + 10 * m as u64 + d as u64).map_err(|e| e.to_string())?;
                ensure(c.failures() == 0, || format!("p={p} m={m} d={d}: {c:?}"))?;
                samples += c.samples;
                bch += c.bch_checked;
            }
        }
    }
    within(start.elapsed(), 60, "sweep")?;
    ensure(samples == 10_000, || format!("{samples} samples"))?;
    Ok(format!(
        "{samples} samples, {bch} BCH pairs, 0 failures in {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let mut checks = 0;
    for p in [3u64, 5, 7] {
        for v in [1u32, 2] {
            for s in 1..=3 {
                for k in 1..=3 {
                    let w = word_synthesize(s, k).map_err(|e| e.to_string())?;
                    let trial = WordTrial {
                        p,
                        r_valuation: v,
                        d: 2,
                        trials: 200,
                        mode: SampleMode::Generic,
                        seed: 97 * p + 13 * v as u64 + 5 * s as u64 + k as u64,
                    };
                    let c = verify_word(&w.word, w.d_const, s, k, &trial).map_err(|e| e.to_string())?;
                    ensure(c.passed && c.worst_defect.at_least(k * v), || {
                        format!("p={p} v={v} s={s} k={k}: defect {:?}", c.worst_defect)
                    })?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!("{checks} (p, R, s, k) cases x 200 samples, 0 failures"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23] {
        let t = table(p)?;
        let expected = (p * (p * p - 1)) as usize;
        ensure(t.len() == expected, || {
            format!("p={p}: order {} != {expected}", t.len())
        })?;
        if p <= 7 {
            let brute = det1_count(p);
            ensure(brute == t.len(), || format!("p={p}: brute-force scan found {brute}"))?;
            for x in t.elements() {
                let e = x.entries();
                ensure((e[0] * e[3] + p * p - e[1] * e[2]) % p == 1 % p, || {
                    format!("p={p}: det != 1")
                })?;
            }
        }
    }
    for (q1, q2) in [(3u64, 5u64), (5, 7), (7, 11), (11, 13)] {
        let t = table(q1 * q2)?;
        let out = crt_check(&t, q1, q2).map_err(|e| e.to_string())?;
        let expected = sl2_order(q1) * sl2_order(q2);
        ensure(out.holds && out.order == expected, || format!("q={}: {out:?}", q1 * q2))?;
    }
    within(start.elapsed(), 120, "enumeration")?;
    Ok(format!(
        "orders p(p^2-1) for p<=23, det-1 scans p<=7, CRT for 15,35,77,143 in {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_4() -> Outcome {
    let s = GeneratorSet::standard_sl2();
    for p in [5u64, 7] {
        let r = lie_kernel_check(&s, p, CAP).map_err(|e| e.to_string())?;
        ensure(r.kernel_size == (p * p * p) as usize && r.holds(), || {
            format!("p={p}: {r:?}")
        })?;
        // exp(a x a⁻¹) = a exp(x) a⁻¹ for every x = p·y with y ∈ sl_2(F_p)
        let mut checked = 0;
        for a in s.matrices() {
            for y0 in 0..p as i64 {
                for y1 in 0..p as i64 {
                    for y2 in 0..p as i64 {
                        let pi = p as i64;
                        let x = PadicMat::from_signed(p, 4, 2, &[pi * y0, pi * y1, pi * y2, -pi * y0])
                            .map_err(|e| e.to_string())?;
                        ensure(conj_exp_check(a, &x).map_err(|e| e.to_string())?, || {
                            format!("p={p}: conjugation")
                        })?;
                        checked += 1;
                    }
                }
            }
        }
        ensure(checked == 4 * p * p * p, || "count".into())?;
    }
    Ok("kernels of size 125 and 343, additive, Ad-equivariant, exp commutes with conjugation".into())
}

fn criterion_5() -> Outcome {
    let mut qs: Vec<u64> = (2..=16).collect();
    qs.push(18);
    let mut worst: f64 = 0.0;
    for &q in &qs {
        let t = table(q)?;
        ensure(t.len() <= 4096, || format!("q={q}: order {}", t.len()))?;
        let mu = SparseMeasure::uniform_on_generators(&t);
        let run = |method| {
            let opts = SolverOptions {
                method: Some(method),
                tol: 1e-10,
                ..SolverOptions::default()
            };
            mean_zero_spectrum(&t, &mu, &opts).map_err(|e| format!("q={q} {method}: {e}"))
        };
        let dense = run(Method::Dense)?;
        for method in [Method::Lanczos, Method::Power] {
            let other = run(method)?;
            let diff = (other.lambda2 - dense.lambda2).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-8, || {
                format!("q={q}: {method} lambda2 {} vs dense {}", other.lambda2, dense.lambda2)
            })?;
        }
        let gap = 1.0 - dense.lambda2;
        if q % 2 == 1 {
            ensure(dense.opnorm0() < 1.0, || format!("q={q}: opnorm0 {}", dense.opnorm0()))?;
        } else {
            // the sign character makes even quotients bipartite, so -1 is
            // in the spectrum; ergodicity shows as gap > 0 instead
            ensure(is_bipartite(&t, &mu) && gap > 0.0, || format!("q={q}: gap {gap}"))?;
        }
    }
    let doc = cli_json(&["gap", "--q", "primes:5..61"])?;
    let fix = read_fixture("gaps_primes_5_61.csv");
    ensure(rows(&doc).len() == fix.len(), || {
        "row count differs from fixture".into()
    })?;
    for (row, fx) in rows(&doc).iter().zip(&fix) {
        let q: u64 = fx["q"].parse().unwrap();
        let gap: f64 = fx["gap"].parse().unwrap();
        ensure(u(&row["q"]) == q && (f(&row["gap"]) - gap).abs() <= 1e-9, || {
            format!("q={q}: gap {} vs fixture {gap}", f(&row["gap"]))
        })?;
        ensure(f(&row["opnorm0"]) < 1.0, || format!("q={q}: opnorm0"))?;
    }
    let min_gap = f(&doc["summary"]["min_gap"]);
    let fix_min = fix
        .iter()
        .map(|r| r["gap"].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    ensure(min_gap > 0.0 && (min_gap - fix_min).abs() <= 1e-9, || {
        format!("min gap {min_gap} vs {fix_min}")
    })?;
    Ok(format!(
        "dense/Lanczos/power agree within {worst:.1e} for q=2..16,18; odd q opnorm0<1, even q bipartite with gap>0; min gap {min_gap:.6} over primes 5..61"
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let doc = cli_json(&["diameter", "--q", "primes:5..61"])?;
    let elapsed = start.elapsed();
    let fix = read_fixture("diameters_primes_5_61.csv");
    ensure(rows(&doc).len() == fix.len(), || {
        "row count differs from fixture".into()
    })?;
    let mut band = (f64::INFINITY, f64::NEG_INFINITY);
    for (row, fx) in rows(&doc).iter().zip(&fix) {
        let q: u64 = fx["q"].parse().unwrap();
        let d: u64 = fx["diameter"].parse().unwrap();
        ensure(u(&row["q"]) == q && u(&row["diameter"]) == d, || {
            format!("q={q}: diameter {} vs {d}", row["diameter"])
        })?;
        let ratio = d as f64 / (q as f64).ln();
        band = (band.0.min(ratio), band.1.max(ratio));
        ensure((f(&row["ratio"]) - ratio).abs() <= 1e-12, || format!("q={q}: ratio"))?;
        if q <= 31 {
            let (order, diam) = bfs_order_and_diameter(q);
            ensure(order == u(&row["order"]) as usize && diam as u64 == d, || {
                format!("q={q}: BFS oracle {order} {diam}")
            })?;
        }
    }
    let (lo, hi) = (f(&doc["summary"]["ratio_min"]), f(&doc["summary"]["ratio_max"]));
    ensure(lo >= band.0 - 1e-12 && hi <= band.1 + 1e-12, || {
        format!("ratios [{lo}, {hi}] outside [{}, {}]", band.0, band.1)
    })?;
    let small = cli(&["diameter", "--q", "primes:5..23", "--format", "csv"])?;
    let frozen = std::fs::read(fixture("diameter_primes_5_23.csv")).unwrap();
    ensure(small == frozen, || "csv differs from frozen fixture".into())?;
    within(elapsed, 300, "diameter scan")?;
    Ok(format!(
        "16 diameters match, BFS oracle agrees for q<=31, ratio band [{:.4}, {:.4}], scan {:.1}s",
        band.0,
        band.1,
        elapsed.as_secs_f64()
    ))
}

/// `N Σ ν(x)²` for the walk on `SL_2(Z/q)` after `n` steps, in floats.
fn walk_flatness_squared(q: u64, steps: usize) -> Vec<f64> {
    let n = sl2_order(q) as f64;
    let gens = gens2(q);
    let mut law: HashMap<M2, f64> = HashMap::from([([1, 0, 0, 1], 1.0)]);
    let mut out = vec![n];
    for _ in 0..steps {
        let mut next: HashMap<M2, f64> = HashMap::with_capacity(law.len() * 2);
        for (x, w) in &law {
            for g in &gens {
                *next.entry(mul2(g, x, q)).or_default() += w / 4.0;
            }
        }
        law = next;
        out.push(n * law.values().map(|w| w * w).sum::<f64>());
    }
    out
}

fn criterion_7() -> Outcome {
    let doc = cli_json(&["flatten", "--q", "25,27,49,121", "--set", "n_max=10"])?;
    let rs = rows(&doc);
    ensure(rs.len() == 4 * 11, || format!("{} rows", rs.len()))?;
    for r in rs {
        ensure(
            r["doubling_monotone"] == true && r["exact"] == true && r["symmetric"] == true,
            || format!("q={} n={}: {r}", r["q"], r["n"]),
        )?;
    }
    let oracle = walk_flatness_squared(25, 10);
    for r in rs.iter().filter(|r| u(&r["q"]) == 25) {
        let n = u(&r["n"]) as usize;
        let expect = oracle[n].sqrt();
        ensure((f(&r["flatness"]) - expect).abs() <= 1e-9 * expect, || {
            format!("q=25 n={n}: {} vs {expect}", r["flatness"])
        })?;
    }
    Ok("44 doubling comparisons exact and monotone; q=25 flatness matches float oracle".into())
}

fn word_ball_oracle(q: u64, radius: u32) -> (usize, bool) {
    let atoms: [[i64; 4]; 4] = [[1, 1, 0, 1], [1, -1, 0, 1], [1, 0, 1, 1], [1, 0, -1, 1]];
    let mul = |a: &[i64; 4], b: &[i64; 4]| {
        [
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ]
    };
    let mut layer: HashSet<[i64; 4]> = HashSet::from([[1, 0, 0, 1]]);
    let mut count = 0;
    for _ in 0..radius {
        layer = layer
            .iter()
            .flat_map(|x| atoms.iter().map(move |g| mul(g, x)))
            .collect();
        count += layer.len();
        for g in &layer {
            let congruent = g
                .iter()
                .zip([1i64, 0, 0, 1])
                .all(|(&a, b)| (a - b).rem_euclid(q as i64) == 0);
            if congruent && *g != [1, 0, 0, 1] {
                return (count, false);
            }
        }
    }
    (count, true)
}

fn criterion_8() -> Outcome {
    let doc = cli_json(&["dioph", "--q", "101,211"])?;
    for r in rows(&doc) {
        let q = u(&r["q"]);
        let m = ((q as f64).ln() / (2.0 * 2f64.ln())).floor() as u64;
        ensure(
            u(&r["norm_bound"]) == 2 && u(&r["m"]) == m && u(&r["radius"]) == 2 * m,
            || format!("q={q}: {r}"),
        )?;
        ensure(r["exact_support"] == true, || {
            format!("q={q}: exact_support {}", r["exact_support"])
        })?;
        let (_, clean) = word_ball_oracle(q, 2 * m as u32);
        ensure(clean, || format!("q={q}: oracle found a congruent word"))?;
    }
    ensure(rows(&doc).len() == 2, || "missing rows".into())?;
    Ok("radius-6 word balls meet the congruence kernel only at 1 for q=101,211".into())
}

/// `max |ν̂(b)|` over `b ≠ 0` for the law of `g_n⋯g_1·(1,0)` on `(Z/q)²`, `q`
/// prime, by a direct (separable) sum.
fn direct_decay(q: u64, n: usize) -> f64 {
    let qs = q as usize;
    let gens = gens2(q);
    let mut law = vec![0.0; qs * qs];
    // (x, y) sits at x·q + y; start at (1, 0)
    law[qs] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; qs * qs];
        for (i, &w) in law.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (x, y) = ((i / qs) as u64, (i % qs) as u64);
            for g in &gens {
                let (nx, ny) = ((g[0] * x + g[1] * y) % q, (g[2] * x + g[3] * y) % q);
                next[nx as usize * qs + ny as usize] += w / 4.0;
            }
        }
        law = next;
    }
    let tw: Vec<(f64, f64)> = (0..qs)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / q as f64;
            (a.cos(), a.sin())
        })
        .collect();
    // partial[x][b2] = Σ_y law(x, y) e(b2·y)
    let mut partial = vec![(0.0, 0.0); qs * qs];
    for x in 0..qs {
        for b2 in 0..qs {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..qs {
                let w = law[x * qs + y];
                let (c, s) = tw[b2 * y % qs];
                re += w * c;
                im += w * s;
            }
            partial[x * qs + b2] = (re, im);
        }
    }
    let mut best: f64 = 0.0;
    for b1 in 0..qs {
        for b2 in 0..qs {
            if b1 == 0 && b2 == 0 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..qs {
                let (pr, pi) = partial[x * qs + b2];
                let (c, s) = tw[b1 * x % qs];
                re += pr * c - pi * s;
                im += pr * s + pi * c;
            }
            best = best.max(re.hypot(im));
        }
    }
    best
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = rng.gen_range(2..=12u64);
        let dim = rng.gen_range(1..=3usize);
        let n = (q as usize).pow(dim as u32);
        let raw: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = if total > 0.0 {
            raw.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        let nu = TorusMeasure::from_weights(q, dim, weights).map_err(|e| e.to_string())?;
        let coeffs = fourier_transform(&nu);
        let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        let expected = nu.l2_squared() * n as f64;
        let rel = (energy - expected).abs() / expected;
        worst = worst.max(rel);
        ensure(rel <= 1e-9, || format!("q={q} dim={dim}: relative error {rel:e}"))?;
        let b: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..q as i64)).collect();
        let idx = b.iter().fold(0usize, |acc, &c| acc * q as usize + c as usize);
        let direct = fourier_coeff(&nu, &b);
        ensure((direct - coeffs[idx]).norm() <= 1e-9, || {
            format!("q={q} dim={dim}: transform layout")
        })?;
    }
    let doc = cli_json(&["fourier", "--q", "101", "--set", "steps=10,40"])?;
    let buckets: Vec<&Value> = rows(&doc).iter().filter(|r| r["kind"] == "bucket").collect();
    let fix = read_fixture("decay_q101.csv");
    ensure(buckets.len() == fix.len(), || {
        "bucket count differs from fixture".into()
    })?;
    for (r, fx) in buckets.iter().zip(&fix) {
        let want: f64 = fx["max_coeff"].parse().unwrap();
        ensure(
            u(&r["n"]).to_string() == fx["n"]
                && u(&r["s"]).to_string() == fx["s"]
                && (f(&r["max_coeff"]) - want).abs() <= 1e-9,
            || format!("bucket {r} vs fixture {want}"),
        )?;
    }
    let at = |n: u64| {
        buckets
            .iter()
            .find(|r| u(&r["n"]) == n && u(&r["s"]) == 101)
            .map(|r| f(&r["max_coeff"]))
    };
    let (early, late) = (at(10).ok_or("no n=10 bucket")?, at(40).ok_or("no n=40 bucket")?);
    ensure(late < early, || format!("no decay: {early} -> {late}"))?;
    for (n, got) in [(10, early), (40, late)] {
        let oracle = direct_decay(101, n);
        ensure((got - oracle).abs() <= 1e-9, || {
            format!("n={n}: {got} vs direct DFT {oracle}")
        })?;
    }
    Ok(format!(
        "Parseval worst {worst:.1e} over 1000 measures; s=101 bucket {early:.4} -> {late:.4}"
    ))
}

/// Conjugacy class count of `SL_2(Z/p)` by brute force.
fn class_count(p: u64) -> usize {
    let mut elems = Vec::new();
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                for d in 0..p {
                    if (a * d + p * p - b * c) % p == 1 {
                        elems.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    let mut seen = HashSet::new();
    let mut classes = 0;
    for x in &elems {
        if seen.contains(x) {
            continue;
        }
        classes += 1;
        for g in &elems {
            let gi = [g[3], (p - g[1]) % p, (p - g[2]) % p, g[0]];
            seen.insert(mul2(&mul2(g, x, p), &gi, p));
        }
    }
    classes
}

fn criterion_10() -> Outcome {
    let doc = cli_json(&["qr", "--q", "3,5,7,11,13"])?;
    let rs = rows(&doc);
    ensure(rs.len() == 5, || "missing rows".into())?;
    for r in rs {
        let p = u(&r["q"]);
        let degrees: Vec<u64> = r["degrees"].as_array().unwrap().iter().map(u).collect();
        let order = (p * (p * p - 1)) as usize;
        let sum_sq: u64 = degrees.iter().map(|d| d * d).sum();
        ensure(u(&r["order"]) as usize == order && sum_sq as usize == order, || {
            format!("p={p}: sum of squares {sum_sq}")
        })?;
        ensure(degrees.len() == class_count(p), || {
            format!("p={p}: {} degrees vs class count", degrees.len())
        })?;
        let min = u(&r["min_degree"]);
        ensure(min as f64 >= (p as f64 - 1.0) / 2.0 && r["bound_ok"] == true, || {
            format!("p={p}: min degree {min}")
        })?;
        match p {
            3 => ensure(degrees == [1, 1, 1, 2, 2, 2, 3], || format!("{degrees:?}"))?,
            5 => {
                ensure(degrees == [1, 2, 2, 3, 3, 4, 4, 5, 6], || format!("{degrees:?}"))?;
                ensure(u(&r["cover_trials"]) == 100 && u(&r["covered"]) == 100, || {
                    format!("covered {}", r["covered"])
                })?;
                let size = u(&r["cover_size"]);
                ensure(size.pow(3) * min > 120u64.pow(3), || {
                    "cover sets miss the size hypothesis".into()
                })?;
            }
            _ => {}
        }
    }
    Ok("degree lists, sum of squares, class counts, m(H) >= (p-1)/2, 100/100 covers mod 5".into())
}

fn criterion_11() -> Outcome {
    let s = GeneratorSet::standard_sl2();
    let mut witnesses = 0;
    for p in [5u64, 7] {
        for seed in 0..5 {
            match nonsplit_probe(&s, p, 1000, seed, CAP).map_err(|e| e.to_string())? {
                NonsplitOutcome::Witness { z, .. } => {
                    ensure(z.reduce(p).is_identity() && !z.is_identity(), || {
                        format!("p={p}: witness outside the layer")
                    })?;
                    ensure(z.minus_identity().vp(p) == Valuation::Finite(1), || {
                        format!("p={p}: valuation")
                    })?;
                    witnesses += 1;
                }
                NonsplitOutcome::Exhausted { trials } => return Err(format!("p={p} seed={seed}: none in {trials}")),
            }
        }
    }
    Ok(format!(
        "{witnesses}/10 seeded probes found z in ker pi_p minus ker pi_p^2"
    ))
}

fn criterion_12() -> Outcome {
    let extra: &[&[&str]] = &[
        &["gap", "--q", "5,7,8", "--format", "csv"],
        &["diameter", "--q", "3..9", "--seed", "4"],
        &["flatten", "--q", "25", "--set", "n_max=4", "--format", "csv"],
        &["dioph", "--q", "101", "--set", "dioph_n=3"],
        &["fourier", "--q", "31", "--set", "steps=5", "--format", "csv"],
        &[
            "exp",
            "--set",
            "samples=5",
            "--set",
            "m_max=4",
            "--set",
            "word_trials=10",
        ],
        &[
            "exp",
            "--set",
            "samples=5",
            "--set",
            "m_max=3",
            "--set",
            "word_trials=5",
            "--format",
            "csv",
        ],
        &["qr", "--q", "5", "--format", "csv"],
        &["profile", "--q", "25,35", "--set", "g=1,5,0,1"],
        &["profile", "--q", "25,35", "--set", "g=1,5,0,1", "--format", "csv"],
        &["gap", "--q", "1"],
    ];
    for args in extra {
        cli(args)?;
    }
    let gap1 = cli_json(&["gap", "--q", "1"])?;
    ensure(f(&rows(&gap1)[0]["gap"]) == 1.0, || "trivial quotient gap".into())?;
    let runs = RUNS.lock().unwrap().clone();
    let commands: HashSet<&str> = runs.iter().map(|(a, _, _)| a[0].as_str()).collect();
    ensure(commands.len() == 8, || format!("only {commands:?} exercised"))?;
    for (args, code, first) in &runs {
        ensure(*code != 4, || {
            format!("`{}` reported an invariant violation", args.join(" "))
        })?;
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (again_code, again, _) = exec(&argv);
        ensure(again_code == *code && &again == first, || {
            format!("`{}` is not reproducible", args.join(" "))
        })?;
    }
    Ok(format!(
        "{} invocations over 8 commands re-run byte-identical; exit 4 never seen",
        runs.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("p-adic exp/log/BCH sweep", criterion_1),
        ("word lemma", criterion_2),
        ("group enumeration and CRT", criterion_3),
        ("Lie kernel", criterion_4),
        ("spectral cross-validation", criterion_5),
        ("diameter law", criterion_6),
        ("flattening", criterion_7),
        ("word-ball exact support", criterion_8),
        ("torus Fourier", criterion_9),
        ("quasi-randomness", criterion_10),
        ("non-split extension", criterion_11),
        ("reproducibility", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS [{secs:6.1}s] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL [{secs:6.1}s] {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
