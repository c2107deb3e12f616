//! Fourier analysis of linear random walks on `(Z/qZ)^D`: exact laws of
//! `g_n⋯g_1·v mod q`, coefficient decay by denominator, sumset growth and
//! counts of products of conjugates.

use std::f64::consts::TAU;

use num_complex::Complex64;
use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use rustfft::FftPlanner;
use thiserror::Error;

use crate::grpenum::GeneratorSet;
use crate::modq::{floor_scaled, gcd, gcd_shift, FactoredModulus, MatModQ, Valuation};
use crate::padic::alpha;
use crate::walk::WordMeasure;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("state space q^dim = {q}^{dim} exceeds the cap of {cap} states; use sampling mode")]
    StateCap { q: u64, dim: usize, cap: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Default cap on `q^dim` for exact dynamic programming.
pub const DEFAULT_STATE_CAP: usize = 1 << 26;

fn state_count(q: u64, dim: usize, cap: usize) -> Result<usize, FourierError> {
    (0..dim)
        .try_fold(1usize, |acc, _| acc.checked_mul(q as usize).filter(|&n| n <= cap))
        .ok_or(FourierError::StateCap { q, dim, cap })
}

/// A probability measure on `(Z/qZ)^dim`, stored densely in row-major
/// order (`x_0` most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusMeasure {
    q: u64,
    dim: usize,
    weights: Vec<f64>,
}

impl TorusMeasure {
    pub fn from_weights(q: u64, dim: usize, weights: Vec<f64>) -> Result<Self, FourierError> {
        let n = state_count(q, dim, usize::MAX)?;
        if weights.len() != n {
            return Err(FourierError::Precondition(format!(
                "expected {n} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(FourierError::Precondition("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FourierError::Precondition(format!("total mass {total} differs from 1")));
        }
        Ok(Self { q, dim, weights })
    }

    pub fn delta(q: u64, dim: usize, x: &[u64]) -> Result<Self, FourierError> {
        let n = state_count(q, dim, DEFAULT_STATE_CAP)?;
        let mut weights = vec![0.0; n];
        weights[encode(x, q)] = 1.0;
        Ok(Self { q, dim, weights })
    }

    pub fn uniform(q: u64, dim: usize) -> Result<Self, FourierError> {
        let n = state_count(q, dim, DEFAULT_STATE_CAP)?;
        Ok(Self {
            q,
            dim,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: &[u64]) -> f64 {
        self.weights[encode(x, self.q)]
    }

    /// Sum of squared weights.
    pub fn l2_squared(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// `(ν₁ * ν₂)(x) = Σ_y ν₁(y) ν₂(x − y)`.
    pub fn convolve(&self, other: &TorusMeasure) -> Result<TorusMeasure, FourierError> {
        if self.q != other.q || self.dim != other.dim {
            return Err(FourierError::Precondition("measures live on different tori".into()));
        }
        let (q, dim) = (self.q, self.dim);
        let n = self.weights.len();
        let weights = (0..n)
            .into_par_iter()
            .map(|x| {
                let xv = decode(x, q, dim);
                self.weights
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(y, &w)| {
                        let yv = decode(y, q, dim);
                        let diff: Vec<u64> = xv.iter().zip(&yv).map(|(&a, &b)| (a + q - b) % q).collect();
                        w * other.weights[encode(&diff, q)]
                    })
                    .sum()
            })
            .collect();
        Ok(TorusMeasure { q, dim, weights })
    }
}

fn encode(x: &[u64], q: u64) -> usize {
    x.iter().fold(0usize, |acc, &c| acc * q as usize + (c % q) as usize)
}

fn decode(mut i: usize, q: u64, dim: usize) -> Vec<u64> {
    let mut x = vec![0u64; dim];
    for c in (0..dim).rev() {
        x[c] = (i % q as usize) as u64;
        i /= q as usize;
    }
    x
}

fn reduce_vector(v: &[i64], q: u64) -> Vec<u64> {
    v.iter().map(|&c| c.rem_euclid(q as i64) as u64).collect()
}

/// For each atom `g`, the map `x ↦ g⁻¹x` on encoded states.
fn inverse_state_maps(mats: &[MatModQ], q: u64, dim: usize, n: usize) -> Vec<Vec<u32>> {
    mats.iter()
        .map(|g| {
            let gi = g.inverse().expect("invertible atom");
            (0..n)
                .into_par_iter()
                .map(|x| encode(&gi.apply(&decode(x, q, dim)), q) as u32)
                .collect()
        })
        .collect()
}

/// The law of `g_n⋯g_1·v mod q` with `g_i` i.i.d. of law `μ`, by exact
/// dynamic programming over `(Z/qZ)^dim`.
pub fn push_linear(
    mu: &WordMeasure,
    s: &GeneratorSet,
    v: &[i64],
    q: u64,
    n: usize,
    cap: usize,
) -> Result<TorusMeasure, FourierError> {
    let dim = s.dim();
    if v.len() != dim {
        return Err(FourierError::Precondition(format!(
            "vector has length {}, expected {dim}",
            v.len()
        )));
    }
    let start = reduce_vector(v, q);
    if start.iter().all(|&c| c == 0) {
        return Err(FourierError::Precondition("v must be nonzero mod q".into()));
    }
    let states = state_count(q, dim, cap)?;
    let mats: Vec<MatModQ> = mu.words().iter().map(|w| WordMeasure::word_mod(w, s, q)).collect();
    let weights = mu.weights().to_f64();
    let maps = inverse_state_maps(&mats, q, dim, states);
    let mut law = vec![0.0; states];
    law[encode(&start, q)] = 1.0;
    for _ in 0..n {
        law = (0..states)
            .into_par_iter()
            .map(|y| maps.iter().zip(&weights).map(|(m, &w)| w * law[m[y] as usize]).sum())
            .collect();
    }
    Ok(TorusMeasure { q, dim, weights: law })
}

/// Empirical law of `g_n⋯g_1·v mod q` from independent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledLaw {
    pub q: u64,
    pub dim: usize,
    pub samples: usize,
    pub counts: FxHashMap<Vec<u64>, u64>,
}

impl SampledLaw {
    pub fn frequency(&self, x: &[u64]) -> f64 {
        self.counts.get(x).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    /// Binomial standard error of [`frequency`](Self::frequency).
    pub fn std_error(&self, x: &[u64]) -> f64 {
        let p = self.frequency(x);
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    /// Sample mean of `e^{2πi⟨b,x⟩/q}` and its standard error.
    pub fn fourier_coeff(&self, b: &[i64]) -> (Complex64, f64) {
        let bq = reduce_vector(b, self.q);
        let mut mean = Complex64::new(0.0, 0.0);
        for (x, &c) in &self.counts {
            mean += character(&bq, x, self.q) * c as f64;
        }
        mean /= self.samples as f64;
        // |e^{iθ}|² = 1
        let var = (1.0 - mean.norm_sqr()).max(0.0);
        (mean, (var / self.samples as f64).sqrt())
    }
}

/// Monte-Carlo counterpart of [`push_linear`] for state spaces beyond the cap.
pub fn sample_linear(
    mu: &WordMeasure,
    s: &GeneratorSet,
    v: &[i64],
    q: u64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<SampledLaw, FourierError> {
    let dim = s.dim();
    if v.len() != dim || samples == 0 {
        return Err(FourierError::Precondition("bad vector length or zero samples".into()));
    }
    let start = reduce_vector(v, q);
    let mats: Vec<MatModQ> = mu.words().iter().map(|w| WordMeasure::word_mod(w, s, q)).collect();
    let dist = WeightedIndex::new(mu.weights().to_f64()).map_err(|e| FourierError::Precondition(e.to_string()))?;
    const CHUNK: usize = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<FxHashMap<Vec<u64>, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut counts = FxHashMap::default();
            for _ in 0..CHUNK.min(samples - c * CHUNK) {
                let mut x = start.clone();
                for _ in 0..n {
                    x = mats[dist.sample(&mut rng)].apply(&x);
                }
                *counts.entry(x).or_insert(0) += 1;
            }
            counts
        })
        .collect();
    let mut counts: FxHashMap<Vec<u64>, u64> = FxHashMap::default();
    for part in partial {
        for (x, c) in part {
            *counts.entry(x).or_insert(0) += c;
        }
    }
    Ok(SampledLaw {
        q,
        dim,
        samples,
        counts,
    })
}

fn character(b: &[u64], x: &[u64], q: u64) -> Complex64 {
    let k = b
        .iter()
        .zip(x)
        .fold(0u128, |acc, (&bi, &xi)| (acc + bi as u128 * xi as u128) % q as u128);
    Complex64::from_polar(1.0, TAU * k as f64 / q as f64)
}

/// `ν̂(b) = Σ_x ν(x) e^{2πi⟨b,x⟩/q}`.
pub fn fourier_coeff(nu: &TorusMeasure, b: &[i64]) -> Complex64 {
    let (q, dim) = (nu.q, nu.dim);
    let bq = reduce_vector(b, q);
    if bq.iter().all(|&c| c == 0) {
        return Complex64::new(1.0, 0.0);
    }
    let twiddle: Vec<Complex64> = (0..q)
        .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / q as f64))
        .collect();
    nu.weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(i, &w)| {
            let x = decode(i, q, dim);
            let k = bq
                .iter()
                .zip(&x)
                .fold(0u128, |acc, (&bi, &xi)| (acc + bi as u128 * xi as u128) % q as u128);
            twiddle[k as usize] * w
        })
        .sum()
}

/// All coefficients `ν̂(b)`, indexed like the measure.
pub fn fourier_transform(nu: &TorusMeasure) -> Vec<Complex64> {
    let (q, dim) = (nu.q as usize, nu.dim);
    let mut data: Vec<Complex64> = nu.weights.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    // e^{+2πi jk/q} is the unnormalized inverse DFT
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(q);
    let n = data.len();
    let mut stride = 1usize;
    for _ in 0..dim {
        let block = stride * q;
        let mut line = vec![Complex64::new(0.0, 0.0); q];
        for base in (0..n).step_by(block) {
            for offset in 0..stride {
                for k in 0..q {
                    line[k] = data[base + offset + k * stride];
                }
                fft.process(&mut line);
                for k in 0..q {
                    data[base + offset + k * stride] = line[k];
                }
            }
        }
        stride = block;
    }
    data
}

/// Fitted decay exponent; `Infinite` when some bucket with `s > 1` has
/// maximal coefficient exactly `0`, `Undefined` without such buckets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauHat {
    Finite(f64),
    Infinite,
    Undefined,
}

impl TauHat {
    pub fn as_f64(self) -> f64 {
        match self {
            TauHat::Finite(t) => t,
            TauHat::Infinite => f64::INFINITY,
            TauHat::Undefined => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub q: u64,
    /// `(s, max |ν̂(b)|)` over `b` with `q / gcd(q, b) = s`, ascending in `s`.
    pub buckets: Vec<(u64, f64)>,
    /// `−slope` of `log max` against `log s` through the origin, `s > 1`.
    pub tau_hat: TauHat,
}

/// Coefficients below this are treated as exact zeros.
const ZERO_COEFF: f64 = 1e-12;

pub fn decay_profile(nu: &TorusMeasure) -> DecayProfile {
    let (q, dim) = (nu.q, nu.dim);
    let coeffs = fourier_transform(nu);
    let divisors = FactoredModulus::new(q).expect("q ≥ 1").divisors();
    let mut maxima: FxHashMap<u64, f64> = FxHashMap::default();
    let partial: Vec<FxHashMap<u64, f64>> = coeffs
        .par_chunks(4096)
        .enumerate()
        .map(|(chunk, cs)| {
            let mut local: FxHashMap<u64, f64> = FxHashMap::default();
            for (j, c) in cs.iter().enumerate() {
                let b = decode(chunk * 4096 + j, q, dim);
                let g = b.iter().fold(q, |acc, &bi| gcd(acc, bi));
                let e = local.entry(q / g).or_insert(0.0);
                *e = e.max(c.norm());
            }
            local
        })
        .collect();
    for local in partial {
        for (s, m) in local {
            let e = maxima.entry(s).or_insert(0.0);
            *e = e.max(m);
        }
    }
    let buckets: Vec<(u64, f64)> = divisors
        .iter()
        .filter_map(|&s| maxima.get(&s).map(|&m| (s, if m < ZERO_COEFF { 0.0 } else { m })))
        .collect();
    let fit: Vec<&(u64, f64)> = buckets.iter().filter(|(s, _)| *s > 1).collect();
    let tau_hat = if fit.is_empty() {
        TauHat::Undefined
    } else if fit.iter().any(|(_, m)| *m == 0.0) {
        TauHat::Infinite
    } else {
        let (sxy, sxx) = fit.iter().fold((0.0, 0.0), |(sxy, sxx), &&(s, m)| {
            let x = (s as f64).ln();
            (sxy + x * m.ln(), sxx + x * x)
        });
        TauHat::Finite(-sxy / sxx)
    };
    DecayProfile { q, buckets, tau_hat }
}

fn orbit_indicator(a: &[MatModQ], v: &[u64], q: u64, n: usize) -> Vec<bool> {
    let mut ind = vec![false; n];
    for g in a {
        ind[encode(&g.apply(v), q)] = true;
    }
    ind
}

fn naive_sum(x: &[bool], y: &[bool], q: u64, dim: usize) -> Vec<bool> {
    let n = x.len();
    let ys: Vec<Vec<u64>> = (0..n).filter(|&j| y[j]).map(|j| decode(j, q, dim)).collect();
    let mut out = vec![false; n];
    for i in (0..n).filter(|&i| x[i]) {
        let xi = decode(i, q, dim);
        for yj in &ys {
            let z: Vec<u64> = xi.iter().zip(yj).map(|(&a, &b)| (a + b) % q).collect();
            out[encode(&z, q)] = true;
        }
    }
    out
}

fn fft_sum(x: &[bool], y: &[bool], q: u64, dim: usize) -> Vec<bool> {
    let to_measure = |ind: &[bool]| TorusMeasure {
        q,
        dim,
        weights: ind.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    let (fx, fy) = (fourier_transform(&to_measure(x)), fourier_transform(&to_measure(y)));
    let n = x.len();
    let mut prod: Vec<Complex64> = fx.iter().zip(&fy).map(|(a, b)| a * b).collect();
    // transform back: the forward DFT e^{−2πi…} inverts the +i transform up to 1/n
    let fft = FftPlanner::<f64>::new().plan_fft_forward(q as usize);
    let qs = q as usize;
    let mut stride = 1usize;
    let mut line = vec![Complex64::new(0.0, 0.0); qs];
    for _ in 0..dim {
        let block = stride * qs;
        for base in (0..n).step_by(block) {
            for offset in 0..stride {
                for k in 0..qs {
                    line[k] = prod[base + offset + k * stride];
                }
                fft.process(&mut line);
                for k in 0..qs {
                    prod[base + offset + k * stride] = line[k];
                }
            }
        }
        stride = block;
    }
    prod.iter().map(|c| c.re / n as f64 > 0.5).collect()
}

/// `|{a_1 v + ⋯ + a_C v : a_i ∈ A}|` in `(Z/qZ)^dim`.
///
/// Uses FFT convolution of indicators when `q` is a power of two and
/// direct summation otherwise; both saturate to booleans after each fold.
pub fn sumset_count(a: &[MatModQ], v: &[i64], q: u64, c: usize, cap: usize) -> Result<usize, FourierError> {
    if c == 0 {
        return Err(FourierError::Precondition("fold count must be at least 1".into()));
    }
    let dim = v.len();
    let n = state_count(q, dim, cap)?;
    let ind = orbit_indicator(a, &reduce_vector(v, q), q, n);
    let use_fft = q.is_power_of_two() && q > 1;
    Ok(sumset_with(&ind, q, dim, c, use_fft).iter().filter(|&&b| b).count())
}

fn sumset_with(ind: &[bool], q: u64, dim: usize, c: usize, use_fft: bool) -> Vec<bool> {
    let mut acc = ind.to_vec();
    for _ in 1..c {
        acc = if use_fft {
            fft_sum(&acc, ind, q, dim)
        } else {
            naive_sum(&acc, ind, q, dim)
        };
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointCount {
    pub q_i: u64,
    /// Distinct residues of products of `1..=C` conjugates `a g a⁻¹`.
    pub count: usize,
    /// `(q_I / gcd(q_I, g − 1))^dim`.
    pub benchmark: f64,
    pub gcd: u64,
    /// `v_p(g − 1) ≥ max(1 + δ₂(p), ⌊δ m_p⌋)` for every `p | q_I`.
    pub precondition_ok: bool,
    pub failing_primes: Vec<u64>,
}

/// Counts `⋃_{k ≤ C} (A·g)^k mod q_I` where `A·g = {a g a⁻¹}`.
pub fn adjoint_orbit_count(
    a: &[MatModQ],
    g: &MatModQ,
    q_i: &FactoredModulus,
    c: usize,
    delta: Ratio<u64>,
    dim: u32,
) -> Result<AdjointCount, FourierError> {
    let qi = q_i.q();
    if g.modulus() % qi != 0 || a.iter().any(|x| x.modulus() % qi != 0) {
        return Err(FourierError::Precondition(format!("inputs are not defined mod {qi}")));
    }
    if c == 0 {
        return Err(FourierError::Precondition("fold count must be at least 1".into()));
    }
    let g = g.reduce(qi);
    let failing_primes: Vec<u64> = q_i
        .factors()
        .iter()
        .filter(|&&(p, m)| {
            let need = alpha(p).max(floor_scaled(delta, m));
            match g.minus_identity().vp(p) {
                Valuation::Saturated { .. } => false,
                v => !v.at_least(need),
            }
        })
        .map(|&(p, _)| p)
        .collect();
    let conjugates: Vec<MatModQ> = {
        let mut seen = FxHashSet::default();
        a.iter()
            .map(|x| {
                let x = x.reduce(qi);
                x.mul(&g).mul(&x.inverse().expect("invertible"))
            })
            .filter(|y| seen.insert(y.clone()))
            .collect()
    };
    let mut all: FxHashSet<MatModQ> = conjugates.iter().cloned().collect();
    let mut layer: Vec<MatModQ> = conjugates.clone();
    for _ in 1..c {
        let mut next: FxHashSet<MatModQ> = FxHashSet::default();
        for x in &layer {
            for y in &conjugates {
                next.insert(x.mul(y));
            }
        }
        layer = next.into_iter().collect();
        all.extend(layer.iter().cloned());
    }
    let gc = gcd_shift(q_i, &g);
    Ok(AdjointCount {
        q_i: qi,
        count: all.len(),
        benchmark: ((qi / gc) as f64).powi(dim as i32),
        gcd: gc,
        precondition_ok: failing_primes.is_empty(),
        failing_primes,
    })
}
