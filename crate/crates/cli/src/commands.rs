use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expander_core::fourier::{decay_profile, fourier_transform, push_linear, TauHat};
use expander_core::grpenum::{enumerate, GeneratorSet, GroupTable};
use expander_core::modq::{is_prime, vp_mat, FactoredModulus, IntMat, Valuation};
use expander_core::padic::{alpha, property_sweep, verify_word, word_synthesize, SampleMode, WordTrial};
use expander_core::qr::{gowers_cover_check, min_proper_index_probe, nonsplit_probe, qr_report, NonsplitOutcome};
use expander_core::spectral::{diameter, diameter_fit, family_scan, Method, SolverOptions};
use expander_core::walk::{almost_diophantine, diophantine_ball, flattening_curve, WordMeasure};

use crate::config::{derive_seed, Config};
use crate::error::CliError;
use crate::report::{Report, Row, Val};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Gap,
    Diameter,
    Flatten,
    Dioph,
    Fourier,
    Exp,
    Qr,
    Profile,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gap => "gap",
            Command::Diameter => "diameter",
            Command::Flatten => "flatten",
            Command::Dioph => "dioph",
            Command::Fourier => "fourier",
            Command::Exp => "exp",
            Command::Qr => "qr",
            Command::Profile => "profile",
        }
    }

    /// Experiment tag embedded in every output.
    pub fn tag(self) -> &'static str {
        match self {
            Command::Gap => "expander-family-gap",
            Command::Diameter => "cayley-diameter-log-law",
            Command::Flatten => "walk-flattening",
            Command::Dioph => "almost-diophantine-ball",
            Command::Fourier => "torus-fourier-decay",
            Command::Exp => "padic-exp-log-properties",
            Command::Qr => "quasirandom-degree-bound",
            Command::Profile => "valuation-profile-conditions",
        }
    }
}

/// Runs a command. Cap and computation failures abort; invariant failures
/// are recorded in the report.
pub fn run(cmd: Command, cfg: &Config) -> Result<Report, CliError> {
    let seed = cfg.u64("seed")?;
    let mut report = Report::new(cmd.name(), cmd.tag(), seed, cfg.hash());
    match cmd {
        Command::Gap => gap(cfg, seed, &mut report)?,
        Command::Diameter => diameter_scan(cfg, &mut report)?,
        Command::Flatten => flatten(cfg, &mut report)?,
        Command::Dioph => dioph(cfg, &mut report)?,
        Command::Fourier => fourier(cfg, &mut report)?,
        Command::Exp => exp(cfg, seed, &mut report)?,
        Command::Qr => qr(cfg, seed, &mut report)?,
        Command::Profile => profile(cfg, &mut report)?,
    }
    Ok(report)
}

fn generators(cfg: &Config) -> Result<GeneratorSet, CliError> {
    match cfg.string("generators").as_deref() {
        None | Some("standard") => Ok(GeneratorSet::standard_sl2()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read generators {path}: {e}")))?;
            Ok(GeneratorSet::parse(&text, cfg.bool("closure")?)?)
        }
    }
}

fn is_standard(cfg: &Config) -> bool {
    matches!(cfg.raw("generators"), None | Some("standard"))
}

fn measure(cfg: &Config, s: &GeneratorSet) -> Result<WordMeasure, CliError> {
    match cfg.string("measure").as_deref() {
        None | Some("uniform") => Ok(WordMeasure::uniform_on(s)),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read measure {path}: {e}")))?;
            Ok(WordMeasure::parse(&text, s.len())?)
        }
    }
}

fn table(s: &GeneratorSet, q: u64, cfg: &Config) -> Result<GroupTable, CliError> {
    let fq = FactoredModulus::new(q).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(enumerate(s, &fq, cfg.positive("max_order")?)?)
}

fn fmt_int_mat(m: &IntMat) -> String {
    m.entries().iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

fn gap(cfg: &Config, seed: u64, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let mu = measure(cfg, &s)?;
    let qs = cfg.q_list()?;
    let tol = cfg.f64("tol")?;
    let method = match cfg.raw("method") {
        None | Some("auto") => None,
        Some(m) => Some(m.parse::<Method>().map_err(CliError::Config)?),
    };
    let opts = SolverOptions {
        method,
        tol,
        max_basis: cfg.positive("max_basis")?,
        max_restarts: cfg.positive("max_restarts")?,
        power_iterations: cfg.positive("max_iterations")?,
        seed: derive_seed(seed, "gap"),
        cross_check: true,
    };
    let scan = family_scan(&s, &qs, &mu, &opts, cfg.positive("max_order")?);
    for result in scan.reports {
        let r = result?;
        let q = r.q;
        let residual_tol = if r.method == Method::Dense { tol.max(1e-9) } else { tol };
        report.check(r.lambda2.abs() <= 1.0 + 1e-9, || format!("q={q}: |lambda2| > 1"));
        report.check(r.residual <= residual_tol, || {
            format!("q={q}: residual {:e} above tolerance", r.residual)
        });
        if r.components == 1 {
            report.check(r.gap > 0.0, || format!("q={q}: gap {} is not positive", r.gap));
            report.check(r.bipartite || r.opnorm0 < 1.0, || {
                format!("q={q}: mean-zero norm {} is not below 1", r.opnorm0)
            });
        }
        report.rows.push(
            Row::new()
                .with("q", r.q)
                .with("order", r.order)
                .with("lambda2", r.lambda2)
                .with("lambda_min", r.lambda_min)
                .with("opnorm0", r.opnorm0)
                .with("gap", r.gap)
                .with("diameter", r.diameter)
                .with("method", r.method.as_str())
                .with("residual", r.residual)
                .with("cheeger", vec![r.cheeger.0, r.cheeger.1])
                .with("seed", r.seed)
                .with("components", r.components)
                .with("bipartite", r.bipartite)
                .with("cross_check", r.cross_check),
        );
    }
    report.summary.push("c_hat", scan.c_hat);
    report.summary.push("max_fit_residual", scan.max_fit_residual);
    report.summary.push("min_gap", scan.min_gap);
    report.summary.push(
        "certificate",
        "minimum gap over the tested window only; no asymptotic claim",
    );
    Ok(())
}

fn diameter_scan(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let mut points = Vec::new();
    for q in cfg.q_list()? {
        let t = table(&s, q, cfg)?;
        let d = diameter(&t)?;
        if is_standard(cfg) && is_prime(q) {
            let expected = q as u128 * (q as u128 * q as u128 - 1);
            report.check(t.len() as u128 == expected, || {
                format!("q={q}: order {} is not p(p^2-1)", t.len())
            });
        }
        let ratio = (q > 1).then(|| d as f64 / (q as f64).ln());
        report.rows.push(
            Row::new()
                .with("q", q)
                .with("order", t.len())
                .with("diameter", d)
                .with("ratio", ratio),
        );
        points.push((q, d));
    }
    let (c_hat, residual) = diameter_fit(points.iter().copied());
    let ratios: Vec<f64> = points
        .iter()
        .filter(|p| p.0 > 1)
        .map(|&(q, d)| d as f64 / (q as f64).ln())
        .collect();
    report.summary.push("c_hat", c_hat);
    report.summary.push("max_fit_residual", residual);
    report
        .summary
        .push("ratio_min", ratios.iter().copied().reduce(f64::min));
    report
        .summary
        .push("ratio_max", ratios.iter().copied().reduce(f64::max));
    Ok(())
}

fn flatten(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let mu = measure(cfg, &s)?;
    let n_max = cfg.positive("n_max")?;
    let tau = cfg.f64("tau")?;
    let mut crossings = Vec::new();
    for q in cfg.q_list()? {
        let t = table(&s, q, cfg)?;
        let q_prime = match cfg.raw("q_prime") {
            Some(_) => cfg.u64("q_prime")?,
            None => q,
        };
        let sparse = mu.on_table(&s, &t)?;
        let symmetric = sparse.is_symmetric(&t);
        let curve = flattening_curve(&sparse, &t, q_prime, n_max, tau)?;
        for row in &curve.rows {
            if symmetric {
                report.check(row.doubling_monotone, || {
                    format!("q={q} n={}: doubling increased the norm", row.n)
                });
            }
            report.rows.push(
                Row::new()
                    .with("q", q)
                    .with("q_prime", curve.q_prime)
                    .with("quotient_order", curve.quotient_order)
                    .with("n", row.n)
                    .with("flatness", row.flatness)
                    .with("doubling_ratio", row.doubling_ratio)
                    .with("doubling_monotone", row.doubling_monotone)
                    .with("exact", row.exact)
                    .with("symmetric", symmetric),
            );
        }
        crossings.push(Val::from(curve.crossing));
    }
    report.summary.push("crossings", Val::List(crossings));
    report.summary.push("tau", tau);
    Ok(())
}

fn dioph(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let mu = measure(cfg, &s)?;
    let n = cfg.usize("dioph_n")?;
    let node_cap = cfg.positive("node_cap")?;
    for q in cfg.q_list()? {
        let mut row = Row::new().with("q", q);
        let (ball_exact, violation) = if n > 0 {
            let t = table(&s, q, cfg)?;
            let r = almost_diophantine(&mu, &s, &t, n, node_cap)?;
            row = row
                .with("norm_bound", r.norm_bound)
                .with("m", r.m)
                .with("radius", r.radius)
                .with("words_checked", r.words_checked)
                .with("exact_support", r.exact_support)
                .with("violation", r.violation.as_ref().map(fmt_int_mat))
                .with("n", n)
                .with("mass", r.mass)
                .with("exact_mass", r.exact_mass.map(|m| m.to_string()));
            (r.exact_support, r.violation)
        } else {
            let b = diophantine_ball(&mu, &s, q, node_cap)?;
            row = row
                .with("norm_bound", b.norm_bound)
                .with("m", b.m)
                .with("radius", b.radius)
                .with("words_checked", b.check.words_checked)
                .with("exact_support", b.check.exact)
                .with("violation", b.check.violation.as_ref().map(fmt_int_mat));
            (b.check.exact, b.check.violation)
        };
        report.check(ball_exact != Some(false), || {
            format!(
                "q={q}: nontrivial word {} is congruent to 1",
                violation.as_ref().map(fmt_int_mat).unwrap_or_default()
            )
        });
        report.rows.push(row);
    }
    Ok(())
}

fn fourier(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let mu = measure(cfg, &s)?;
    let v = match cfg.i64_list("vector")? {
        Some(v) => v,
        None => {
            let mut v = vec![0; s.dim()];
            v[0] = 1;
            v
        }
    };
    let steps = cfg.u64_list("steps")?;
    let cap = cfg.positive("max_states")?;
    let parseval_tol = cfg.f64("parseval_tol")?;
    for q in cfg.q_list()? {
        for &n in &steps {
            let nu = push_linear(&mu, &s, &v, q, n as usize, cap)?;
            let profile = decay_profile(&nu);
            let energy: f64 = fourier_transform(&nu).iter().map(|c| c.norm_sqr()).sum();
            let expected = nu.l2_squared() * (q as f64).powi(nu.dim() as i32);
            let rel = (energy - expected).abs() / expected;
            report.check(rel <= parseval_tol, || format!("q={q} n={n}: Parseval error {rel:e}"));
            for &(bucket, max) in &profile.buckets {
                report.rows.push(
                    Row::new()
                        .with("kind", "bucket")
                        .with("q", q)
                        .with("n", n)
                        .with("s", bucket)
                        .with("max_coeff", max),
                );
            }
            let tau_hat = match profile.tau_hat {
                TauHat::Finite(t) => Val::Float(t),
                TauHat::Infinite => Val::Float(f64::INFINITY),
                TauHat::Undefined => Val::Null,
            };
            report.rows.push(
                Row::new()
                    .with("kind", "fit")
                    .with("q", q)
                    .with("n", n)
                    .with("tau_hat", tau_hat)
                    .with("parseval_rel_error", rel),
            );
        }
    }
    report.summary.push("vector", v);
    Ok(())
}

fn exp(cfg: &Config, seed: u64, report: &mut Report) -> Result<(), CliError> {
    let samples = cfg.positive("samples")?;
    let m_max = cfg.positive("m_max")? as u32;
    let mut totals = expander_core::padic::SweepCounts::default();
    for p in cfg.u64_list("primes")? {
        for m in 1..=m_max {
            for d in cfg.u64_list("dims")? {
                let c = property_sweep(
                    p,
                    m,
                    d as usize,
                    samples,
                    derive_seed(seed, &format!("exp/sweep/{p}/{m}/{d}")),
                )?;
                report.check(c.failures() == 0, || {
                    format!("p={p} m={m} d={d}: {} failures", c.failures())
                });
                totals = totals.merge(c);
                report.rows.push(
                    Row::new()
                        .with("kind", "sweep")
                        .with("p", p)
                        .with("m", m)
                        .with("d", d)
                        .with("samples", c.samples)
                        .with("roundtrip_failures", c.roundtrip_failures)
                        .with("isometry_failures", c.isometry_failures)
                        .with("bch_checked", c.bch_checked)
                        .with("bch_failures", c.bch_failures)
                        .with("bch_skipped", c.bch_skipped),
                );
            }
        }
    }
    let trials = cfg.usize("word_trials")?;
    let word_dim = cfg.positive("word_dim")?;
    let mut word_checks = 0usize;
    let mut word_failures = 0usize;
    if trials > 0 {
        for p in cfg.u64_list("word_primes")? {
            for v in cfg.u64_list("word_valuations")? {
                let v = v as u32;
                if v < alpha(p) {
                    return Err(CliError::Config(format!(
                        "word valuation {v} is below the convergence bound at p={p}"
                    )));
                }
                for s in 1..=cfg.positive("word_s_max")? {
                    for k in 1..=cfg.positive("word_k_max")? as u32 {
                        let w = word_synthesize(s, k)?;
                        let trial = WordTrial {
                            p,
                            r_valuation: v,
                            d: word_dim,
                            trials,
                            mode: SampleMode::Generic,
                            seed: derive_seed(seed, &format!("exp/word/{p}/{v}/{s}/{k}")),
                        };
                        let check = verify_word(&w.word, w.d_const, s, k, &trial)?;
                        word_checks += 1;
                        if !check.passed {
                            word_failures += 1;
                        }
                        report.check(check.passed, || format!("word p={p} v={v} s={s} k={k} failed"));
                        report.rows.push(
                            Row::new()
                                .with("kind", "word")
                                .with("p", p)
                                .with("v", v)
                                .with("s", s)
                                .with("k", k)
                                .with("d", word_dim)
                                .with("trials", trials)
                                .with("word", w.word.to_string())
                                .with("d_const", w.d_const)
                                .with("passed", check.passed)
                                .with("worst_defect", valuation_val(check.worst_defect))
                                .with("required", check.required)
                                .with("precision", check.precision),
                        );
                    }
                }
            }
        }
    }
    report.summary.push("samples", totals.samples);
    report.summary.push("failures", totals.failures());
    report.summary.push("bch_checked", totals.bch_checked);
    report.summary.push("word_checks", word_checks);
    report.summary.push("word_failures", word_failures);
    Ok(())
}

fn valuation_val(v: Valuation) -> Val {
    match v {
        Valuation::Finite(x) => Val::from(x),
        Valuation::Saturated { cap } => Val::from(format!(">={cap}")),
    }
}

fn qr(cfg: &Config, seed: u64, report: &mut Report) -> Result<(), CliError> {
    let s = generators(cfg)?;
    let degree_cap = cfg.positive("degree_cap")?;
    let cover_trials = cfg.usize("cover_trials")?;
    let cover_max = cfg.usize("cover_max_order")?;
    let index_trials = cfg.usize("index_trials")?;
    let nonsplit_trials = cfg.usize("nonsplit_trials")?;
    let mut degree_points = Vec::new();
    for q in cfg.q_list()? {
        let t = table(&s, q, cfg)?;
        let n = t.len();
        let r = qr_report(&t, degree_cap)?;
        let sum_sq: u64 = r.degrees.iter().map(|d| d * d).sum();
        report.check(sum_sq == n as u64, || {
            format!("q={q}: sum of squared degrees {sum_sq} != {n}")
        });
        if is_prime(q) {
            report.check(r.bound_ok, || format!("q={q}: minimal degree below (p-1)/2"));
        }
        if let Some(m) = r.min_degree {
            degree_points.push((q, m));
        }
        let mut row = Row::new()
            .with("q", q)
            .with("order", n)
            .with("classes", r.classes)
            .with("degrees", r.degrees.clone())
            .with("min_degree", r.min_degree)
            .with("frobenius_bound", r.frobenius_bound)
            .with("bound_ok", r.bound_ok)
            .with("sum_squares", sum_sq);

        if let Some(m) = r.min_degree.filter(|_| cover_trials > 0 && n <= cover_max) {
            // least size with size³·m > n³
            let size = (1..=n)
                .find(|&k| (k as u128).pow(3) * m as u128 > (n as u128).pow(3))
                .unwrap_or(n);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("qr/cover/{q}")));
            let mut covered = 0usize;
            let mut contradictions = 0usize;
            for _ in 0..cover_trials {
                let mut pick = || {
                    let mut all: Vec<u32> = (0..n as u32).collect();
                    for i in 0..size {
                        let j = rng.gen_range(i..n);
                        all.swap(i, j);
                    }
                    all.truncate(size);
                    all
                };
                let (a, b, c) = (pick(), pick(), pick());
                let check = gowers_cover_check(&a, &b, &c, &t, m);
                covered += usize::from(check.covers);
                contradictions += usize::from(check.contradiction());
            }
            report.check(contradictions == 0, || {
                format!("q={q}: {contradictions} triples failed to cover")
            });
            row = row
                .with("cover_size", size)
                .with("cover_trials", cover_trials)
                .with("covered", covered);
        }
        if index_trials > 0 {
            let probe = min_proper_index_probe(&t, index_trials, derive_seed(seed, &format!("qr/index/{q}")));
            report.check(probe.bound_ok, || format!("q={q}: proper subgroup index below (p-1)/2"));
            row = row
                .with("probe_index", probe.best_index)
                .with("probe_bound_ok", probe.bound_ok);
        }
        if nonsplit_trials > 0 && is_prime(q) && q > 2 * s.dim() as u64 {
            let out = nonsplit_probe(
                &s,
                q,
                nonsplit_trials,
                derive_seed(seed, &format!("qr/nonsplit/{q}")),
                cfg.positive("max_order")?,
            )?;
            match out {
                NonsplitOutcome::Witness { z, trial, .. } => {
                    let v = z.minus_identity().vp(q);
                    let ok = v == Valuation::Finite(1);
                    report.check(ok, || format!("q={q}: witness valuation {v}"));
                    row = row
                        .with("nonsplit", "witness")
                        .with("witness_trial", trial)
                        .with("witness", z.entries().to_vec())
                        .with("witness_valuation", valuation_val(v));
                }
                NonsplitOutcome::Exhausted { trials } => {
                    report.check(false, || {
                        format!("q={q}: no multiplicativity failure in {trials} trials")
                    });
                    row = row.with("nonsplit", "exhausted");
                }
            }
        }
        report.rows.push(row);
    }
    report.summary.push(
        "degree_exponent",
        expander_core::qr::degree_exponent_fit(&degree_points),
    );
    Ok(())
}

fn profile(cfg: &Config, report: &mut Report) -> Result<(), CliError> {
    let entries = cfg
        .i64_list("g")?
        .ok_or_else(|| CliError::Config("`g` is required for profile".into()))?;
    let d = (entries.len() as f64).sqrt().round() as usize;
    let g = IntMat::new(d, entries).map_err(|e| CliError::Config(e.to_string()))?;
    let tau = cfg.f64("profile_tau")?;
    let c = cfg.f64("c_const")?;
    let delta = cfg.ratio("delta")?;
    let shifted: Vec<i128> = g
        .entries()
        .iter()
        .enumerate()
        .map(|(i, &x)| x as i128 - i128::from(i % (d + 1) == 0))
        .collect();
    for q in cfg.q_list()? {
        let fq = FactoredModulus::new(q).map_err(|e| CliError::Config(e.to_string()))?;
        let mut gcd = 1u64;
        let mut in_i = Vec::new();
        for &(p, m_p) in fq.factors() {
            let v = vp_mat(shifted.iter().copied(), p, 64);
            let threshold = (delta * m_p as u64).to_integer().max(1) as u32;
            let member = v.at_least(threshold);
            let take = match v {
                Valuation::Finite(x) => x.min(m_p),
                Valuation::Saturated { .. } => m_p,
            };
            gcd *= p.pow(take);
            if member {
                in_i.push(p);
            }
            report.rows.push(
                Row::new()
                    .with("kind", "prime")
                    .with("q", q)
                    .with("p", p)
                    .with("m_p", m_p)
                    .with("v_p", valuation_val(v))
                    .with("threshold", threshold)
                    .with("in_i", member),
            );
        }
        let q_i = fq.q_subset(&in_i).map_err(|e| CliError::Compute(e.to_string()))?;
        let r = fq.radical();
        let lq = (q as f64).ln();
        let xgrand = (gcd as f64).ln() <= c * tau * lq + (r as f64).ln() + 1e-12;
        let xpetit = (q_i as f64).ln() + 1e-12 >= (1.0 - c * tau) * lq;
        report.rows.push(
            Row::new()
                .with("kind", "conditions")
                .with("q", q)
                .with("gcd", gcd)
                .with("r", r)
                .with("q_i", q_i)
                .with("gcd_bound_holds", xgrand)
                .with("q_i_bound_holds", xpetit),
        );
    }
    report.summary.push("tau", tau);
    report.summary.push("c_const", c);
    report.summary.push("delta", delta.to_string());
    Ok(())
}
