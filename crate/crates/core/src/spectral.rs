//! Spectrum of the random-walk operator `T_μ` on Cayley graphs of `π_q(Γ)`:
//! the top of the mean-zero spectrum, the operator norm on mean-zero
//! functions, diameters, Cheeger bounds and scans over families of moduli.

use std::collections::VecDeque;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grpenum::{enumerate, GeneratorSet, GroupError, GroupTable};
use crate::modq::FactoredModulus;
use crate::walk::{SparseMeasure, WalkError, Walker, WordMeasure};

/// Largest group order handled by the dense solver in automatic mode.
pub const DENSE_LIMIT: usize = 4096;
/// Orders from here up to [`DENSE_LIMIT`] run both solvers in automatic mode.
pub const OVERLAP_START: usize = 1024;
/// Allowed dense/Lanczos disagreement in the overlap band.
pub const CROSS_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("the measure is not symmetric")]
    NotSymmetric,
    #[error("{method} did not converge: best estimate {estimate} with residual {residual:e}")]
    NoConvergence {
        method: Method,
        estimate: f64,
        residual: f64,
    },
    #[error("the generators do not connect the table ({reached} of {order} elements reached)")]
    Disconnected { reached: usize, order: usize },
    #[error("dense solve requested for order {0} above the limit")]
    TooLarge(usize),
    #[error("dense and Lanczos disagree: {dense} vs {lanczos}")]
    CrossCheck { dense: f64, lanczos: f64 },
    #[error("eigensolver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dense,
    Lanczos,
    Power,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Lanczos => "lanczos",
            Method::Power => "power",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Method::Dense),
            "lanczos" => Ok(Method::Lanczos),
            "power" => Ok(Method::Power),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// `None` picks dense up to [`DENSE_LIMIT`] and Lanczos beyond.
    pub method: Option<Method>,
    pub tol: f64,
    pub max_basis: usize,
    pub max_restarts: usize,
    pub power_iterations: usize,
    pub seed: u64,
    /// Run Lanczos alongside the dense solve in the overlap band.
    pub cross_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: None,
            tol: 1e-7,
            max_basis: 64,
            max_restarts: 400,
            power_iterations: 200_000,
            seed: 0,
            cross_check: true,
        }
    }
}

/// Extremes of the spectrum of `T_μ` on mean-zero functions.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanZeroSpectrum {
    pub lambda2: f64,
    pub lambda_min: f64,
    pub residual: f64,
    pub method: Method,
    /// `|λ₂(dense) − λ₂(Lanczos)|` when both ran.
    pub cross_check: Option<f64>,
}

impl MeanZeroSpectrum {
    /// `‖T_μ⁰‖ = max(|λ_min|, λ₂)`.
    pub fn opnorm0(&self) -> f64 {
        self.lambda2.max(self.lambda_min.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub q: u64,
    pub order: usize,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub opnorm0: f64,
    pub gap: f64,
    pub diameter: u32,
    pub method: Method,
    pub residual: f64,
    pub cheeger: (f64, f64),
    pub seed: u64,
    pub components: usize,
    pub bipartite: bool,
    pub cross_check: Option<f64>,
}

/// `(T_μ f)(x) = Σ_g μ(g) f(g⁻¹x)`.
pub fn walk_operator_apply(t: &GroupTable, mu: &SparseMeasure, f: &[f64]) -> Vec<f64> {
    Walker::new(t, mu).apply(f)
}

fn mean_subtract(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖T v − λ v‖ / ‖v‖`.
pub fn residual(walker: &Walker, v: &[f64], lambda: f64) -> f64 {
    let tv = walker.apply(v);
    let r: f64 = tv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    r / norm(v)
}

/// Dense matrix of `T_μ` in the canonical basis.
pub fn dense_matrix(t: &GroupTable, mu: &SparseMeasure) -> Mat<f64> {
    let walker = Walker::new(t, mu);
    let n = t.len();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for y in 0..n {
        e[y] = 1.0;
        let col = walker.apply(&e);
        for (x, &v) in col.iter().enumerate() {
            m[(x, y)] = v;
        }
        e[y] = 0.0;
    }
    m
}

/// Full spectrum of `T_μ` (ascending) for symmetric `μ`.
pub fn dense_spectrum(t: &GroupTable, mu: &SparseMeasure) -> Result<Vec<f64>, SpectralError> {
    let m = dense_matrix(t, mu);
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SpectralError::Solver(format!("{e:?}")))?;
    let mut vals: Vec<f64> = (0..t.len()).map(|i| eig.S()[i]).collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

fn dense_mean_zero(t: &GroupTable, mu: &SparseMeasure) -> Result<MeanZeroSpectrum, SpectralError> {
    let n = t.len();
    let m = dense_matrix(t, mu);
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SpectralError::Solver(format!("{e:?}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.S()[a].total_cmp(&eig.S()[b]));
    // drop one copy of the top eigenvalue 1, whose eigenspace contains the constants
    let top = order.pop().expect("non-empty");
    let vec_of = |i: usize| -> Vec<f64> { (0..n).map(|r| eig.U()[(r, i)]).collect() };
    let walker = Walker::new(t, mu);
    let (i2, imin) = (*order.last().unwrap(), order[0]);
    let mut v2 = vec_of(i2);
    // the mean-zero representative of a possibly degenerate top eigenspace
    if (eig.S()[i2] - eig.S()[top]).abs() < 1e-9 {
        let vt = vec_of(top);
        let (c2, ct) = (v2.iter().sum::<f64>(), vt.iter().sum::<f64>());
        if ct.abs() > c2.abs() {
            v2.iter_mut().zip(&vt).for_each(|(a, b)| *a = *a * ct - b * c2);
        } else {
            v2 = vt.iter().zip(&v2).map(|(a, b)| a * c2 - b * ct).collect();
        }
    }
    let res = residual(&walker, &v2, eig.S()[i2]).max(residual(&walker, &vec_of(imin), eig.S()[imin]));
    Ok(MeanZeroSpectrum {
        lambda2: eig.S()[i2],
        lambda_min: eig.S()[imin],
        residual: res,
        method: Method::Dense,
        cross_check: None,
    })
}

fn random_mean_zero(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    mean_subtract(&mut v);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Symmetric eigen-decomposition of a small dense matrix, ascending.
fn small_eigen(h: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>), SpectralError> {
    let k = h.len();
    let m = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (h[i][j] + h[j][i]));
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SpectralError::Solver(format!("{e:?}")))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.S()[a].total_cmp(&eig.S()[b]));
    let vals = order.iter().map(|&i| eig.S()[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| (0..k).map(|r| eig.U()[(r, i)]).collect())
        .collect();
    Ok((vals, vecs))
}

/// Thick-restart Lanczos on the mean-zero subspace with full
/// reorthogonalization, targeting both ends of the spectrum.
fn lanczos_mean_zero(walker: &Walker, opts: &SolverOptions) -> Result<MeanZeroSpectrum, SpectralError> {
    let n = walker.table().len();
    let dim = n - 1;
    let max_basis = opts.max_basis.clamp(4, dim.max(1));
    let keep = (max_basis / 4).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = vec![random_mean_zero(n, &mut rng)];
    let mut h: Vec<Vec<f64>> = vec![vec![0.0; max_basis + 1]; max_basis + 1];
    let mut best = (f64::NAN, f64::INFINITY);
    for _restart in 0..=opts.max_restarts {
        let next_norm;
        let next_vec;
        let mut j = basis.len() - 1;
        loop {
            let mut w = walker.apply(&basis[j]);
            mean_subtract(&mut w);
            for pass in 0..2 {
                let coeffs: Vec<f64> = basis.iter().map(|v| dot(v, &w)).collect();
                for (i, (v, c)) in basis.iter().zip(&coeffs).enumerate() {
                    w.par_iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                    if pass == 0 {
                        h[i][j] = *c;
                    } else {
                        h[i][j] += *c;
                    }
                }
            }
            let beta = norm(&w);
            if basis.len() == max_basis || beta < 1e-13 || basis.len() == dim {
                next_norm = beta;
                next_vec = w;
                break;
            }
            w.iter_mut().for_each(|x| *x /= beta);
            h[j + 1][j] = beta;
            h[j][j + 1] = beta;
            basis.push(w);
            j += 1;
        }
        let k = basis.len();
        let hk: Vec<Vec<f64>> = (0..k).map(|i| h[i][..k].to_vec()).collect();
        let (vals, vecs) = small_eigen(&hk)?;
        let res_of = |i: usize| next_norm * vecs[i][k - 1].abs();
        let (ihi, ilo) = (k - 1, 0);
        let worst = res_of(ihi).max(res_of(ilo));
        if worst < best.1 {
            best = (vals[ihi], worst);
        }
        let ritz = |i: usize| -> Vec<f64> {
            let mut u = vec![0.0; n];
            for (b, &c) in basis.iter().zip(&vecs[i]) {
                u.par_iter_mut().zip(b).for_each(|(a, x)| *a += c * x);
            }
            u
        };
        if worst <= 0.1 * opts.tol || next_norm < 1e-13 || k == dim {
            let (u2, umin) = (ritz(ihi), ritz(ilo));
            let r = residual(walker, &u2, vals[ihi]).max(residual(walker, &umin, vals[ilo]));
            if r <= opts.tol || next_norm < 1e-13 || k == dim {
                return Ok(MeanZeroSpectrum {
                    lambda2: vals[ihi],
                    lambda_min: vals[ilo],
                    residual: r,
                    method: Method::Lanczos,
                    cross_check: None,
                });
            }
        }
        // keep the `keep` Ritz pairs at each end
        let kept: Vec<usize> = (0..k).filter(|&i| i < keep || i + keep >= k).collect();
        let new_basis: Vec<Vec<f64>> = kept.iter().map(|&i| ritz(i)).collect();
        for row in h.iter_mut() {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        let r = kept.len();
        for (a, &i) in kept.iter().enumerate() {
            h[a][a] = vals[i];
            let b = next_norm * vecs[i][k - 1];
            h[r][a] = b;
            h[a][r] = b;
        }
        basis = new_basis;
        let mut v = next_vec;
        v.iter_mut().for_each(|x| *x /= next_norm);
        basis.push(v);
    }
    Err(SpectralError::NoConvergence {
        method: Method::Lanczos,
        estimate: best.0,
        residual: best.1,
    })
}

/// Power iteration for the top of the mean-zero spectrum on `(T + I)/2`
/// and for the bottom on `(I − T)/2`, deflating constants by mean
/// subtraction at every step.
fn power_mean_zero(walker: &Walker, opts: &SolverOptions) -> Result<MeanZeroSpectrum, SpectralError> {
    let n = walker.table().len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut run = |sign: f64| -> Result<(f64, f64), SpectralError> {
        let mut v = random_mean_zero(n, &mut rng);
        let mut lambda = f64::NAN;
        let mut res = f64::INFINITY;
        for it in 0..opts.power_iterations {
            let tv = walker.apply(&v);
            let mut w: Vec<f64> = v.iter().zip(&tv).map(|(a, b)| 0.5 * (a + sign * b)).collect();
            mean_subtract(&mut w);
            if it % 16 == 0 || it + 1 == opts.power_iterations {
                lambda = dot(&v, &tv);
                res = tv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if res <= opts.tol {
                    return Ok((lambda, res));
                }
            }
            let nw = norm(&w);
            if nw < 1e-300 {
                return Ok((dot(&v, &tv), 0.0));
            }
            w.iter_mut().for_each(|x| *x /= nw);
            v = w;
        }
        Err(SpectralError::NoConvergence {
            method: Method::Power,
            estimate: lambda,
            residual: res,
        })
    };
    let (l2, r2) = run(1.0)?;
    let (lmin, rmin) = run(-1.0)?;
    Ok(MeanZeroSpectrum {
        lambda2: l2,
        lambda_min: lmin,
        residual: r2.max(rmin),
        method: Method::Power,
        cross_check: None,
    })
}

/// Extremes of the mean-zero spectrum of `T_μ`, for symmetric `μ`.
pub fn mean_zero_spectrum(
    t: &GroupTable,
    mu: &SparseMeasure,
    opts: &SolverOptions,
) -> Result<MeanZeroSpectrum, SpectralError> {
    if !mu.is_symmetric(t) {
        return Err(SpectralError::NotSymmetric);
    }
    let n = t.len();
    let method = opts.method.unwrap_or(if n <= DENSE_LIMIT {
        Method::Dense
    } else {
        Method::Lanczos
    });
    if n == 1 {
        return Ok(MeanZeroSpectrum {
            lambda2: 0.0,
            lambda_min: 0.0,
            residual: 0.0,
            method,
            cross_check: None,
        });
    }
    match method {
        Method::Dense if opts.method.is_none() && opts.cross_check && n >= OVERLAP_START => {
            let dense = dense_mean_zero(t, mu)?;
            let lanczos = lanczos_mean_zero(&Walker::new(t, mu), opts)?;
            let diff = (dense.lambda2 - lanczos.lambda2)
                .abs()
                .max((dense.lambda_min - lanczos.lambda_min).abs());
            if diff > CROSS_CHECK_TOL {
                return Err(SpectralError::CrossCheck {
                    dense: dense.lambda2,
                    lanczos: lanczos.lambda2,
                });
            }
            Ok(MeanZeroSpectrum {
                cross_check: Some(diff),
                ..dense
            })
        }
        Method::Dense => dense_mean_zero(t, mu),
        Method::Lanczos if n <= 3 => dense_mean_zero(t, mu).map(|s| MeanZeroSpectrum {
            method: Method::Lanczos,
            ..s
        }),
        Method::Lanczos => lanczos_mean_zero(&Walker::new(t, mu), opts),
        Method::Power => power_mean_zero(&Walker::new(t, mu), opts),
    }
}

/// Connected components of the Cayley graph of `T` with respect to `Supp(μ)`.
pub fn components(t: &GroupTable, mu: &SparseMeasure) -> usize {
    let n = t.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n as u32 {
        if seen[start as usize] {
            continue;
        }
        count += 1;
        seen[start as usize] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &g in mu.atoms() {
                for y in [t.mul(g, x), t.mul(t.inverse(g), x)] {
                    if !seen[y as usize] {
                        seen[y as usize] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
    }
    count
}

/// Whether the Cayley graph of `T` with respect to `Supp(μ)` is bipartite,
/// in which case `−1` lies in the mean-zero spectrum.
pub fn is_bipartite(t: &GroupTable, mu: &SparseMeasure) -> bool {
    let n = t.len();
    let mut color = vec![u8::MAX; n];
    for start in 0..n as u32 {
        if color[start as usize] != u8::MAX {
            continue;
        }
        color[start as usize] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            let c = color[x as usize];
            for &g in mu.atoms() {
                let y = t.mul(g, x) as usize;
                if color[y] == u8::MAX {
                    color[y] = 1 - c;
                    queue.push_back(y as u32);
                } else if color[y] == c {
                    return false;
                }
            }
        }
    }
    true
}

/// Diameter of the Cayley graph of `T` with respect to the table generators.
pub fn diameter(t: &GroupTable) -> Result<u32, SpectralError> {
    if !t.generators_symmetric() {
        let gens: Vec<u32> = t
            .generators()
            .iter()
            .map(|g| t.index_of(g).expect("generator in table"))
            .collect();
        return diameter_with(t, &gens);
    }
    Ok(t.word_length().iter().copied().max().unwrap_or(0))
}

/// Diameter with respect to an arbitrary symmetric subset `S ⊂ T`, by BFS
/// from the identity.
pub fn diameter_with(t: &GroupTable, s: &[u32]) -> Result<u32, SpectralError> {
    let n = t.len();
    let mut dist = vec![u32::MAX; n];
    dist[0] = 0;
    let mut queue = VecDeque::from([0u32]);
    let mut reached = 1;
    let mut max = 0;
    while let Some(x) = queue.pop_front() {
        for &g in s {
            let y = t.mul(g, x);
            if dist[y as usize] == u32::MAX {
                dist[y as usize] = dist[x as usize] + 1;
                max = max.max(dist[y as usize]);
                reached += 1;
                queue.push_back(y);
            }
        }
    }
    if reached < n {
        return Err(SpectralError::Disconnected { reached, order: n });
    }
    Ok(max)
}

/// `((1 − λ)/2, √(2(1 − λ)))`.
pub fn cheeger_bounds(lambda2: f64) -> (f64, f64) {
    let gap = (1.0 - lambda2).max(0.0);
    (gap / 2.0, (2.0 * gap).sqrt())
}

/// Full report for one modulus.
pub fn spectral_report(
    s: &GeneratorSet,
    q: u64,
    mu: &WordMeasure,
    opts: &SolverOptions,
    cap: usize,
) -> Result<SpectralReport, SpectralError> {
    let fq = FactoredModulus::new(q).map_err(GroupError::from)?;
    let t = enumerate(s, &fq, cap)?;
    let measure = mu.on_table(s, &t)?;
    let spec = mean_zero_spectrum(&t, &measure, opts)?;
    let comps = components(&t, &measure);
    let (lambda2, gap) = if t.len() == 1 {
        (0.0, 1.0)
    } else {
        (spec.lambda2, 1.0 - spec.lambda2)
    };
    Ok(SpectralReport {
        q,
        order: t.len(),
        lambda2,
        lambda_min: spec.lambda_min,
        opnorm0: spec.opnorm0(),
        gap,
        diameter: diameter(&t)?,
        method: spec.method,
        residual: spec.residual,
        cheeger: cheeger_bounds(lambda2),
        seed: opts.seed,
        components: comps,
        bipartite: is_bipartite(&t, &measure),
        cross_check: spec.cross_check,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScan {
    pub reports: Vec<Result<SpectralReport, SpectralError>>,
    /// Least-squares `Ĉ` in `diameter ≈ Ĉ log q` through the origin (`q > 1`).
    pub c_hat: Option<f64>,
    pub max_fit_residual: Option<f64>,
    pub min_gap: Option<f64>,
}

/// Per-modulus reports and the diameter-law fit. Failures are recorded and
/// the scan continues.
pub fn family_scan(s: &GeneratorSet, q_list: &[u64], mu: &WordMeasure, opts: &SolverOptions, cap: usize) -> FamilyScan {
    let reports: Vec<Result<SpectralReport, SpectralError>> = q_list
        .par_iter()
        .map(|&q| spectral_report(s, q, mu, opts, cap))
        .collect();
    let ok: Vec<&SpectralReport> = reports.iter().filter_map(|r| r.as_ref().ok()).collect();
    let (c_hat, max_fit_residual) = diameter_fit(ok.iter().map(|r| (r.q, r.diameter)));
    let min_gap = ok.iter().map(|r| r.gap).min_by(f64::total_cmp);
    FamilyScan {
        reports,
        c_hat,
        max_fit_residual,
        min_gap,
    }
}

/// `Ĉ = Σ d log q / Σ (log q)²` and `max |d − Ĉ log q|`, over `q > 1`.
pub fn diameter_fit(points: impl Iterator<Item = (u64, u32)>) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64)> = points
        .filter(|&(q, _)| q > 1)
        .map(|(q, d)| ((q as f64).ln(), d as f64))
        .collect();
    if pts.is_empty() {
        return (None, None);
    }
    let c = pts.iter().map(|(x, y)| x * y).sum::<f64>() / pts.iter().map(|(x, _)| x * x).sum::<f64>();
    let res = pts.iter().map(|(x, y)| (y - c * x).abs()).fold(0.0, f64::max);
    (Some(c), Some(res))
}

/// Exhaustive edge expansion `min_{|X| ≤ n/2} |∂X| / |X|` for tiny tables.
pub fn edge_expansion_bruteforce(t: &GroupTable, s: &[u32]) -> Option<f64> {
    let n = t.len();
    if n > 24 || n < 2 {
        return None;
    }
    let neighbors: Vec<Vec<usize>> = (0..n as u32)
        .map(|x| s.iter().map(|&g| t.mul(g, x) as usize).collect())
        .collect();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let size = mask.count_ones() as usize;
        if size > n / 2 {
            continue;
        }
        let boundary: usize = (0..n)
            .filter(|&x| mask >> x & 1 == 1)
            .map(|x| neighbors[x].iter().filter(|&&y| mask >> y & 1 == 0).count())
            .sum();
        best = best.min(boundary as f64 / size as f64);
    }
    Some(best)
}
