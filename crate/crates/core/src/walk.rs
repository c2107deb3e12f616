//! Probability measures on `π_q(Γ)`, convolution powers, flattening of the
//! walk against congruence quotients, the almost-diophantine check and
//! approximate-subgroup statistics.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::grpenum::{GeneratorSet, GroupError, GroupTable};
use crate::modq::{IntMat, MatModQ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("measure atom is not an element of the table")]
    NotInTable,
}

/// Weights of a finitely supported measure: exact integers over a common
/// denominator, or floating point once exact arithmetic would overflow.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Exact { num: Vec<u64>, den: u64 },
    Float(Vec<f64>),
}

impl Weights {
    pub fn len(&self) -> usize {
        match self {
            Weights::Exact { num, .. } => num.len(),
            Weights::Float(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Weights::Exact { .. })
    }

    pub fn get(&self, i: usize) -> f64 {
        match self {
            Weights::Exact { num, den } => num[i] as f64 / *den as f64,
            Weights::Float(w) => w[i],
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Normalizes nonnegative rationals to integers over their least common
    /// denominator; falls back to floats if that does not fit in `u64`.
    fn from_rationals(values: &[BigRational]) -> Weights {
        let total: BigRational = values.iter().cloned().sum();
        let normalized: Vec<BigRational> = values.iter().map(|v| v / &total).collect();
        let den = normalized
            .iter()
            .fold(num_bigint::BigInt::from(1), |acc, r| acc.lcm(r.denom()));
        let exact = den.to_u64().and_then(|d| {
            normalized
                .iter()
                .map(|r| (r.numer() * (&den / r.denom())).to_u64())
                .collect::<Option<Vec<u64>>>()
                .map(|num| Weights::Exact { num, den: d })
        });
        exact.unwrap_or_else(|| Weights::Float(normalized.iter().map(|r| r.to_f64().unwrap_or(0.0)).collect()))
    }

    fn from_floats(values: &[f64]) -> Weights {
        let total: f64 = values.iter().sum();
        Weights::Float(values.iter().map(|v| v / total).collect())
    }
}

/// A probability measure on words in a generator set. Index `i ≥ 1` stands
/// for the `i`-th matrix, `−i` for its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMeasure {
    words: Vec<Vec<i32>>,
    weights: Weights,
}

fn parse_weight(tok: &str) -> Option<Result<BigRational, f64>> {
    if let Ok(r) = tok.parse::<Ratio<num_bigint::BigInt>>() {
        return Some(Ok(r));
    }
    tok.parse::<f64>().ok().filter(|x| x.is_finite()).map(Err)
}

impl WordMeasure {
    /// Uniform measure on the single-letter words of `s`.
    pub fn uniform_on(s: &GeneratorSet) -> Self {
        let n = s.len();
        WordMeasure {
            words: (1..=n as i32).map(|i| vec![i]).collect(),
            weights: Weights::Exact {
                num: vec![1; n],
                den: n as u64,
            },
        }
    }

    pub fn new(words: Vec<Vec<i32>>, weights: Vec<BigRational>) -> Result<Self, WalkError> {
        if words.is_empty() || words.len() != weights.len() {
            return Err(WalkError::Precondition("one positive weight per word required".into()));
        }
        if weights.iter().any(|w| *w <= BigRational::zero()) {
            return Err(WalkError::Precondition("weights must be positive".into()));
        }
        Ok(WordMeasure {
            words,
            weights: Weights::from_rationals(&weights),
        })
    }

    /// Parses lines `weight w_1 … w_L`; weights are integers, fractions
    /// `a/b` or decimals and are normalized on load. Decimal weights make the
    /// measure floating point.
    pub fn parse(text: &str, num_generators: usize) -> Result<Self, WalkError> {
        let mut words = Vec::new();
        let mut exact = Vec::new();
        let mut floats = Vec::new();
        let mut all_exact = true;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let wtok = toks.next().expect("non-empty line");
            let w = parse_weight(wtok).ok_or_else(|| WalkError::Parse {
                line: line_no,
                msg: format!("bad weight `{wtok}`"),
            })?;
            let word: Vec<i32> = toks
                .map(|t| {
                    t.parse::<i32>()
                        .ok()
                        .filter(|&i| i != 0 && i.unsigned_abs() as usize <= num_generators)
                        .ok_or_else(|| WalkError::Parse {
                            line: line_no,
                            msg: format!("bad generator index `{t}`"),
                        })
                })
                .collect::<Result<_, _>>()?;
            match w {
                Ok(r) => {
                    floats.push(r.to_f64().unwrap_or(f64::NAN));
                    exact.push(r);
                }
                Err(x) => {
                    all_exact = false;
                    floats.push(x);
                }
            }
            if !(floats.last().copied().unwrap_or(0.0) > 0.0) {
                return Err(WalkError::Parse {
                    line: line_no,
                    msg: "weights must be positive".into(),
                });
            }
            words.push(word);
        }
        if words.is_empty() {
            return Err(WalkError::Parse {
                line: 0,
                msg: "empty measure".into(),
            });
        }
        let weights = if all_exact {
            Weights::from_rationals(&exact)
        } else {
            Weights::from_floats(&floats)
        };
        Ok(WordMeasure { words, weights })
    }

    pub fn words(&self) -> &[Vec<i32>] {
        &self.words
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// The word as an integer matrix, or `None` on `i64` overflow.
    pub fn word_int(word: &[i32], s: &GeneratorSet) -> Option<IntMat> {
        let inverses: Vec<IntMat> = s.matrices().iter().map(|m| m.inverse().expect("det 1")).collect();
        let mut acc = IntMat::identity(s.dim());
        for &i in word {
            let k = i.unsigned_abs() as usize - 1;
            let g = if i > 0 { &s.matrices()[k] } else { &inverses[k] };
            acc = acc.checked_mul(g)?;
        }
        Some(acc)
    }

    pub fn word_mod(word: &[i32], s: &GeneratorSet, q: u64) -> MatModQ {
        let mut acc = MatModQ::identity(q, s.dim());
        for &i in word {
            let k = i.unsigned_abs() as usize - 1;
            let g = s.matrices()[k].reduce(q);
            let g = if i > 0 { g } else { g.inverse().expect("det 1") };
            acc = acc.mul(&g);
        }
        acc
    }

    /// Pushforward to `T`, merging words with equal images.
    pub fn on_table(&self, s: &GeneratorSet, t: &GroupTable) -> Result<SparseMeasure, WalkError> {
        let atoms: Vec<u32> = self
            .words
            .iter()
            .map(|w| t.index_of(&Self::word_mod(w, s, t.q())).ok_or(WalkError::NotInTable))
            .collect::<Result<_, _>>()?;
        Ok(SparseMeasure::from_atoms(&atoms, &self.weights))
    }
}

/// A finitely supported probability measure on the elements of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMeasure {
    atoms: Vec<u32>,
    weights: Weights,
}

impl SparseMeasure {
    /// Merges repeated atoms and sorts by ordinal.
    pub fn from_atoms(atoms: &[u32], weights: &Weights) -> Self {
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by_key(|&i| atoms[i]);
        let mut merged_atoms: Vec<u32> = Vec::new();
        match weights {
            Weights::Exact { num, den } => {
                let mut merged: Vec<u64> = Vec::new();
                for i in order {
                    if merged_atoms.last() == Some(&atoms[i]) {
                        *merged.last_mut().unwrap() += num[i];
                    } else {
                        merged_atoms.push(atoms[i]);
                        merged.push(num[i]);
                    }
                }
                SparseMeasure {
                    atoms: merged_atoms,
                    weights: Weights::Exact { num: merged, den: *den },
                }
            }
            Weights::Float(w) => {
                let mut merged: Vec<f64> = Vec::new();
                for i in order {
                    if merged_atoms.last() == Some(&atoms[i]) {
                        *merged.last_mut().unwrap() += w[i];
                    } else {
                        merged_atoms.push(atoms[i]);
                        merged.push(w[i]);
                    }
                }
                SparseMeasure {
                    atoms: merged_atoms,
                    weights: Weights::Float(merged),
                }
            }
        }
    }

    pub fn delta(x: u32) -> Self {
        SparseMeasure {
            atoms: vec![x],
            weights: Weights::Exact { num: vec![1], den: 1 },
        }
    }

    pub fn uniform(elements: &[u32]) -> Self {
        Self::from_atoms(
            elements,
            &Weights::Exact {
                num: vec![1; elements.len()],
                den: elements.len() as u64,
            },
        )
    }

    /// Uniform measure on the generators of the table.
    pub fn uniform_on_generators(t: &GroupTable) -> Self {
        let atoms: Vec<u32> = t
            .generators()
            .iter()
            .map(|g| t.index_of(g).expect("generator in table"))
            .collect();
        let n = atoms.len() as u64;
        Self::from_atoms(
            &atoms,
            &Weights::Exact {
                num: vec![1; atoms.len()],
                den: n,
            },
        )
    }

    pub fn atoms(&self) -> &[u32] {
        &self.atoms
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn is_exact(&self) -> bool {
        self.weights.is_exact()
    }

    pub fn total(&self) -> f64 {
        self.weights.to_f64().iter().sum()
    }

    pub fn weight_of(&self, x: u32) -> f64 {
        self.atoms.binary_search(&x).map(|i| self.weights.get(i)).unwrap_or(0.0)
    }

    /// `μ(g) = μ(g⁻¹)` for every atom.
    pub fn is_symmetric(&self, t: &GroupTable) -> bool {
        self.atoms.iter().enumerate().all(|(i, &g)| {
            let inv = t.inverse(g);
            match self.atoms.binary_search(&inv) {
                Ok(j) => match &self.weights {
                    Weights::Exact { num, .. } => num[i] == num[j],
                    Weights::Float(w) => (w[i] - w[j]).abs() <= 1e-12,
                },
                Err(_) => false,
            }
        })
    }

    /// `(μ * ν)(x) = Σ_g μ(g) ν(g⁻¹x)`.
    pub fn convolve(&self, other: &SparseMeasure, t: &GroupTable) -> SparseMeasure {
        let exact = match (&self.weights, &other.weights) {
            (Weights::Exact { num: a, den: da }, Weights::Exact { num: b, den: db }) => {
                da.checked_mul(*db).and_then(|den| {
                    let mut acc: FxHashMap<u32, u64> = FxHashMap::default();
                    for (i, &g) in self.atoms.iter().enumerate() {
                        for (j, &y) in other.atoms.iter().enumerate() {
                            let w = a[i].checked_mul(b[j])?;
                            let e = acc.entry(t.mul(g, y)).or_insert(0);
                            *e = e.checked_add(w)?;
                        }
                    }
                    Some((acc, den))
                })
            }
            _ => None,
        };
        if let Some((acc, den)) = exact {
            let mut pairs: Vec<(u32, u64)> = acc.into_iter().collect();
            pairs.sort_unstable();
            let (atoms, num) = pairs.into_iter().unzip();
            return SparseMeasure {
                atoms,
                weights: Weights::Exact { num, den },
            };
        }
        let (a, b) = (self.weights.to_f64(), other.weights.to_f64());
        let mut acc: FxHashMap<u32, f64> = FxHashMap::default();
        let mut products: Vec<(u32, f64)> = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for (i, &g) in self.atoms.iter().enumerate() {
            for (j, &y) in other.atoms.iter().enumerate() {
                products.push((t.mul(g, y), a[i] * b[j]));
            }
        }
        // accumulate in ordinal order for reproducible rounding
        products.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        for (x, w) in products {
            *acc.entry(x).or_insert(0.0) += w;
        }
        let mut pairs: Vec<(u32, f64)> = acc.into_iter().collect();
        pairs.sort_unstable_by_key(|p| p.0);
        let (atoms, w) = pairs.into_iter().unzip();
        SparseMeasure {
            atoms,
            weights: Weights::Float(w),
        }
    }

    /// Left translate `δ_h * μ`.
    pub fn translate(&self, h: u32, t: &GroupTable) -> SparseMeasure {
        let atoms: Vec<u32> = self.atoms.iter().map(|&g| t.mul(h, g)).collect();
        Self::from_atoms(&atoms, &self.weights)
    }

    pub fn to_density(&self, n: usize) -> Density {
        match &self.weights {
            Weights::Exact { num, den } => {
                let mut v = vec![0u128; n];
                for (i, &x) in self.atoms.iter().enumerate() {
                    v[x as usize] = num[i] as u128;
                }
                Density::Exact {
                    num: v,
                    den: *den as u128,
                }
            }
            Weights::Float(w) => {
                let mut v = vec![0.0; n];
                for (i, &x) in self.atoms.iter().enumerate() {
                    v[x as usize] = w[i];
                }
                Density::Float(v)
            }
        }
    }
}

/// A measure on all of `T`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Exact { num: Vec<u128>, den: u128 },
    Float(Vec<f64>),
}

impl Density {
    pub fn delta(n: usize, x: u32) -> Density {
        let mut num = vec![0u128; n];
        num[x as usize] = 1;
        Density::Exact { num, den: 1 }
    }

    pub fn len(&self) -> usize {
        match self {
            Density::Exact { num, .. } => num.len(),
            Density::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Density::Exact { .. })
    }

    pub fn get(&self, x: u32) -> f64 {
        match self {
            Density::Exact { num, den } => num[x as usize] as f64 / *den as f64,
            Density::Float(v) => v[x as usize],
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Density::Exact { num, den } => num.iter().map(|&x| x as f64 / *den as f64).collect(),
            Density::Float(v) => v.clone(),
        }
    }

    /// Exact mass of `x`, when available.
    pub fn exact_mass(&self, x: u32) -> Option<BigRational> {
        match self {
            Density::Exact { num, den } => Some(BigRational::new(
                num_bigint::BigInt::from(num[x as usize]),
                num_bigint::BigInt::from(*den),
            )),
            Density::Float(_) => None,
        }
    }

    /// Pushforward onto classes `0..classes`.
    pub fn pushforward(&self, class_of: &[u32], classes: usize) -> Density {
        match self {
            Density::Exact { num, den } => {
                let mut out = vec![0u128; classes];
                for (x, &w) in num.iter().enumerate() {
                    out[class_of[x] as usize] += w;
                }
                Density::Exact { num: out, den: *den }
            }
            Density::Float(v) => {
                let mut out = vec![0.0; classes];
                for (x, &w) in v.iter().enumerate() {
                    out[class_of[x] as usize] += w;
                }
                Density::Float(out)
            }
        }
    }

    /// `N · Σ w²`, the squared L² norm of the density against the uniform
    /// probability on `N` points.
    pub fn flatness_squared(&self) -> FlatnessSquared {
        let n = self.len();
        match self {
            Density::Exact { num, den } => {
                let mut sum = BigUint::zero();
                let mut small: u128 = 0;
                for &w in num {
                    match w.checked_mul(w).and_then(|sq| small.checked_add(sq)) {
                        Some(v) => small = v,
                        None => {
                            sum += BigUint::from(small);
                            small = 0;
                            let wb = BigUint::from(w);
                            sum += &wb * &wb;
                        }
                    }
                }
                sum += BigUint::from(small);
                let den = BigUint::from(*den);
                let value = Ratio::new(sum * BigUint::from(n), &den * &den);
                FlatnessSquared::Exact(value)
            }
            Density::Float(v) => FlatnessSquared::Float(n as f64 * v.iter().map(|w| w * w).sum::<f64>()),
        }
    }

    fn into_float(self) -> Density {
        match self {
            Density::Exact { .. } => Density::Float(self.to_f64()),
            f => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlatnessSquared {
    Exact(Ratio<BigUint>),
    Float(f64),
}

impl FlatnessSquared {
    pub fn value(&self) -> f64 {
        match self {
            FlatnessSquared::Exact(r) => ratio_to_f64(r),
            FlatnessSquared::Float(x) => *x,
        }
    }

    pub fn flatness(&self) -> f64 {
        self.value().sqrt()
    }

    /// Exact comparison when both sides are exact.
    pub fn compare(&self, other: &FlatnessSquared) -> Option<Ordering> {
        match (self, other) {
            (FlatnessSquared::Exact(a), FlatnessSquared::Exact(b)) => Some(a.cmp(b)),
            _ => self.value().partial_cmp(&other.value()),
        }
    }
}

fn ratio_to_f64(r: &Ratio<BigUint>) -> f64 {
    // scale to keep 64 significant bits before converting
    let (n, d) = (r.numer(), r.denom());
    let shift = n.bits() as i64 - d.bits() as i64 - 64;
    let (n2, d2) = if shift > 0 {
        (n.clone(), d << shift as usize)
    } else {
        (n << (-shift) as usize, d.clone())
    };
    let q = (n2 / d2).to_f64().unwrap_or(f64::INFINITY);
    q * 2f64.powi(shift as i32)
}

/// Repeated convolution by a fixed measure on a table.
pub struct Walker<'a> {
    table: &'a GroupTable,
    measure: &'a SparseMeasure,
    /// Per atom `g`, the permutation `x ↦ g⁻¹x`.
    inverse_actions: Vec<Vec<u32>>,
}

impl<'a> Walker<'a> {
    pub fn new(table: &'a GroupTable, measure: &'a SparseMeasure) -> Self {
        let inverse_actions = measure
            .atoms
            .iter()
            .map(|&g| {
                let inv = table.element(table.inverse(g));
                table.left_mul_perm(&inv).expect("table closed under multiplication")
            })
            .collect();
        Walker {
            table,
            measure,
            inverse_actions,
        }
    }

    pub fn table(&self) -> &GroupTable {
        self.table
    }

    /// `μ * ν`, gathering `ν(g⁻¹x)` per target in atom order.
    pub fn step(&self, nu: &Density) -> Density {
        let n = self.table.len();
        if let (Weights::Exact { num: c, den: dm }, Density::Exact { num, den }) = (&self.measure.weights, nu) {
            let new_den = den.checked_mul(*dm as u128);
            let bound = num.iter().copied().max().unwrap_or(0).checked_mul(*dm as u128);
            if let (Some(new_den), Some(_)) = (new_den, bound) {
                let out: Vec<u128> = (0..n)
                    .into_par_iter()
                    .map(|x| {
                        self.inverse_actions
                            .iter()
                            .zip(c)
                            .map(|(perm, &w)| w as u128 * num[perm[x] as usize])
                            .sum()
                    })
                    .collect();
                return Density::Exact { num: out, den: new_den };
            }
        }
        let v = match nu.clone().into_float() {
            Density::Float(v) => v,
            Density::Exact { .. } => unreachable!(),
        };
        let w = self.measure.weights.to_f64();
        let out: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|x| {
                self.inverse_actions
                    .iter()
                    .zip(&w)
                    .map(|(perm, &c)| c * v[perm[x] as usize])
                    .sum()
            })
            .collect();
        Density::Float(out)
    }

    /// `μ^{*n} * δ_1`.
    pub fn power(&self, n: usize) -> Density {
        let mut d = Density::delta(self.table.len(), 0);
        for _ in 0..n {
            d = self.step(&d);
        }
        d
    }

    /// `(T_μ f)(x) = Σ_g μ(g) f(g⁻¹x)` on real functions.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let w = self.measure.weights.to_f64();
        (0..self.table.len())
            .into_par_iter()
            .map(|x| {
                self.inverse_actions
                    .iter()
                    .zip(&w)
                    .map(|(perm, &c)| c * f[perm[x] as usize])
                    .sum()
            })
            .collect()
    }
}

/// `‖π_{q'}(ν) * P_{q'}‖₂` for a density on `T`.
pub fn flatness(nu: &Density, t: &GroupTable, q_prime: u64) -> Result<FlatnessSquared, WalkError> {
    let (classes, count) = t.reduction_classes(q_prime)?;
    Ok(nu.pushforward(&classes, count).flatness_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatRow {
    pub n: usize,
    pub flatness: f64,
    /// `‖μ^{2n} * P‖₂ / ‖μ^n * P‖₂`.
    pub doubling_ratio: f64,
    /// Exact (or float, for float measures) check of `‖μ^{2n}‖ ≤ ‖μ^n‖`.
    pub doubling_monotone: bool,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatteningCurve {
    pub q_prime: u64,
    pub quotient_order: usize,
    pub rows: Vec<FlatRow>,
    /// First `n` with flatness below `q'^τ`.
    pub crossing: Option<usize>,
}

/// Flatness of `μ^{*n}` pushed to `π_{q'}(Γ)` for `n = 0..=n_max`, with the
/// doubling comparison against `μ^{*2n}`.
pub fn flattening_curve(
    mu: &SparseMeasure,
    t: &GroupTable,
    q_prime: u64,
    n_max: usize,
    tau: f64,
) -> Result<FlatteningCurve, WalkError> {
    if n_max == 0 {
        return Err(WalkError::Precondition("n_max must be at least 1".into()));
    }
    let (classes, count) = t.reduction_classes(q_prime)?;
    let walker = Walker::new(t, mu);
    let mut squares = Vec::with_capacity(2 * n_max + 1);
    let mut d = Density::delta(t.len(), 0);
    for n in 0..=2 * n_max {
        if n > 0 {
            d = walker.step(&d);
        }
        squares.push(d.pushforward(&classes, count).flatness_squared());
    }
    let threshold = (q_prime as f64).powf(tau);
    let crossing = squares.iter().position(|s| s.flatness() < threshold);
    let rows = (0..=n_max)
        .map(|n| {
            let (a, b) = (&squares[n], &squares[2 * n]);
            FlatRow {
                n,
                flatness: a.flatness(),
                doubling_ratio: b.flatness() / a.flatness(),
                doubling_monotone: b.compare(a) != Some(Ordering::Greater),
                exact: matches!((a, b), (FlatnessSquared::Exact(_), FlatnessSquared::Exact(_))),
            }
        })
        .collect();
    Ok(FlatteningCurve {
        q_prime,
        quotient_order: count,
        rows,
        crossing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineReport {
    pub q: u64,
    pub n: usize,
    /// `μ^{*n}(Ω_q)`.
    pub mass: f64,
    pub exact_mass: Option<BigRational>,
    /// Max row-sum norm over the support.
    pub norm_bound: u64,
    /// `⌊log q / (2 log M)⌋`.
    pub m: u32,
    pub radius: u32,
    pub words_checked: usize,
    /// `None` when the word ball was truncated by the node cap.
    pub exact_support: Option<bool>,
    /// A product `g ≠ 1` with `g ≡ 1 mod q`.
    pub violation: Option<IntMat>,
}

/// `μ^{*n}(Ω_q)` on `π_q` together with the check that products of at most
/// `2m` support elements are never congruent to `1` mod `q` unless equal to `1`.
pub fn almost_diophantine(
    mu: &WordMeasure,
    s: &GeneratorSet,
    t: &GroupTable,
    n: usize,
    node_cap: usize,
) -> Result<DiophantineReport, WalkError> {
    let ball = diophantine_ball(mu, s, t.q(), node_cap)?;
    let sparse = mu.on_table(s, t)?;
    let walker = Walker::new(t, &sparse);
    let density = walker.power(n);
    Ok(DiophantineReport {
        q: t.q(),
        n,
        mass: density.get(0),
        exact_mass: density.exact_mass(0),
        norm_bound: ball.norm_bound,
        m: ball.m,
        radius: ball.radius,
        words_checked: ball.check.words_checked,
        exact_support: ball.check.exact,
        violation: ball.check.violation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineBall {
    pub norm_bound: u64,
    pub m: u32,
    pub radius: u32,
    pub check: BallCheck,
}

/// The word-ball half of [`almost_diophantine`], which needs no table.
pub fn diophantine_ball(
    mu: &WordMeasure,
    s: &GeneratorSet,
    q: u64,
    node_cap: usize,
) -> Result<DiophantineBall, WalkError> {
    let atoms: Vec<IntMat> = {
        let mut seen = FxHashSet::default();
        let mut out = Vec::new();
        for w in mu.words() {
            let g = WordMeasure::word_int(w, s)
                .ok_or_else(|| WalkError::Precondition("support word overflows i64".into()))?;
            if seen.insert(g.clone()) {
                out.push(g);
            }
        }
        out
    };
    let norm_bound = atoms.iter().map(IntMat::row_sum_norm).max().unwrap_or(0);
    if norm_bound <= 1 {
        return Err(WalkError::Precondition(
            "support has norm at most 1; the radius is unbounded".into(),
        ));
    }
    let m = ((q as f64).ln() / (2.0 * (norm_bound as f64).ln())).floor().max(0.0) as u32;
    let radius = 2 * m;
    let check = word_ball_congruence(&atoms, q, radius, node_cap);
    Ok(DiophantineBall {
        norm_bound,
        m,
        radius,
        check,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallCheck {
    pub words_checked: usize,
    /// `Some(true)` when no nontrivial product is `≡ 1 mod q`, `None` when
    /// the search was truncated.
    pub exact: Option<bool>,
    pub violation: Option<IntMat>,
}

/// Searches products of `1..=radius` atoms (as integer matrices) for some
/// `g ≠ 1` with `g ≡ 1 mod q`.
pub fn word_ball_congruence(atoms: &[IntMat], q: u64, radius: u32, node_cap: usize) -> BallCheck {
    let Some(first) = atoms.first() else {
        return BallCheck {
            words_checked: 0,
            exact: Some(true),
            violation: None,
        };
    };
    let mut layer: FxHashSet<IntMat> = FxHashSet::default();
    layer.insert(IntMat::identity(first.dim()));
    let mut words_checked = 0usize;
    let mut truncated = false;
    'layers: for _ in 0..radius {
        let mut next: FxHashSet<IntMat> = FxHashSet::default();
        for g in &layer {
            for a in atoms {
                let Some(h) = g.checked_mul(a) else {
                    truncated = true;
                    continue;
                };
                if next.contains(&h) {
                    continue;
                }
                words_checked += 1;
                if !h.is_identity() && h.reduce(q).is_identity() {
                    return BallCheck {
                        words_checked,
                        exact: Some(false),
                        violation: Some(h),
                    };
                }
                next.insert(h);
                if words_checked >= node_cap {
                    truncated = true;
                    break 'layers;
                }
            }
        }
        layer = next;
    }
    BallCheck {
        words_checked,
        exact: if truncated { None } else { Some(true) },
        violation: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxGroupStats {
    pub size: usize,
    pub product2: usize,
    pub product3: usize,
    /// `|AAA| / |A|`.
    pub tripling: f64,
    /// Size of a greedy `X` with `AA ⊆ AX`; an upper bound on the minimal `K`.
    pub k_cover: usize,
    pub cover: Vec<u32>,
    /// `|Π_k A| ≤ K^{k−1}|A|` for `k = 2, 3`.
    pub growth_ok: bool,
}

fn product_set(a: &[u32], b: &[u32], t: &GroupTable) -> Vec<u32> {
    let mut seen = vec![false; t.len()];
    for &x in a {
        for &y in b {
            seen[t.mul(x, y) as usize] = true;
        }
    }
    (0..t.len() as u32).filter(|&x| seen[x as usize]).collect()
}

/// Tripling constant and a greedy covering certificate for a symmetric set
/// containing the identity.
pub fn approx_group_stats(a: &[u32], t: &GroupTable) -> Result<ApproxGroupStats, WalkError> {
    let mut set: Vec<u32> = a.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.first() != Some(&0) {
        return Err(WalkError::Precondition("set must contain the identity".into()));
    }
    if set.iter().any(|&x| set.binary_search(&t.inverse(x)).is_err()) {
        return Err(WalkError::Precondition("set must be symmetric".into()));
    }
    let aa = product_set(&set, &set, t);
    let aaa = product_set(&aa, &set, t);
    let mut uncovered = vec![false; t.len()];
    for &x in &aa {
        uncovered[x as usize] = true;
    }
    let mut remaining = aa.len();
    let mut cover = Vec::new();
    while remaining > 0 {
        let (best, gain) = aa
            .par_iter()
            .map(|&y| (y, set.iter().filter(|&&x| uncovered[t.mul(x, y) as usize]).count()))
            .reduce(
                || (u32::MAX, 0),
                |p, c| {
                    if c.1 > p.1 || (c.1 == p.1 && c.0 < p.0) {
                        c
                    } else {
                        p
                    }
                },
            );
        debug_assert!(gain > 0);
        for &x in &set {
            let z = t.mul(x, best) as usize;
            if uncovered[z] {
                uncovered[z] = false;
                remaining -= 1;
            }
        }
        cover.push(best);
    }
    let k = cover.len();
    let growth_ok = aa.len() <= k * set.len() && aaa.len() <= k * k * set.len();
    Ok(ApproxGroupStats {
        size: set.len(),
        product2: aa.len(),
        product3: aaa.len(),
        tripling: aaa.len() as f64 / set.len() as f64,
        k_cover: k,
        cover,
        growth_ok,
    })
}

/// Elements at word distance at most `r` from the identity.
pub fn ball(t: &GroupTable, r: u32) -> Vec<u32> {
    (0..t.len() as u32)
        .filter(|&x| t.word_length()[x as usize] <= r)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grpenum::enumerate;
    use crate::modq::FactoredModulus;

    fn table(q: u64) -> GroupTable {
        enumerate(
            &GeneratorSet::standard_sl2(),
            &FactoredModulus::new(q).unwrap(),
            1 << 22,
        )
        .unwrap()
    }

    #[test]
    fn parse_measure_file() {
        let m = WordMeasure::parse("# lazy walk\n2\n1 1\n1 -1\n1 2\n1 -2\n", 4).unwrap();
        assert_eq!(m.words().len(), 5);
        assert_eq!(
            m.weights(),
            &Weights::Exact {
                num: vec![2, 1, 1, 1, 1],
                den: 6
            }
        );
        let f = WordMeasure::parse("0.5 1\n0.5 2\n", 4).unwrap();
        assert!(!f.weights().is_exact());
        let r = WordMeasure::parse("1/3 1\n2/3 2 2\n", 4).unwrap();
        assert_eq!(
            r.weights(),
            &Weights::Exact {
                num: vec![1, 2],
                den: 3
            }
        );
        assert!(matches!(
            WordMeasure::parse("1 5\n", 4),
            Err(WalkError::Parse { line: 1, .. })
        ));
        assert!(matches!(WordMeasure::parse("0 1\n", 4), Err(WalkError::Parse { .. })));
        assert!(matches!(WordMeasure::parse("x 1\n", 4), Err(WalkError::Parse { .. })));
    }

    #[test]
    fn convolution_identities() {
        let t = table(3);
        let mu = SparseMeasure::uniform_on_generators(&t);
        assert_eq!(SparseMeasure::delta(0).convolve(&mu, &t), mu);
        let all: Vec<u32> = (0..t.len() as u32).collect();
        let uniform = SparseMeasure::uniform(&all);
        let u = uniform.convolve(&mu, &t);
        let expected = 1.0 / 24.0;
        assert!(u.atoms().len() == 24 && (0..24).all(|x| (u.weight_of(x) - expected).abs() < 1e-15));
    }

    #[test]
    fn convolution_square_matches_double_sum() {
        let t = table(3);
        let mu = SparseMeasure::uniform_on_generators(&t);
        let sq = mu.convolve(&mu, &t);
        let gens: Vec<MatModQ> = t.generators().to_vec();
        let mut oracle: std::collections::BTreeMap<Vec<u64>, f64> = Default::default();
        for a in &gens {
            for b in &gens {
                *oracle.entry(a.mul(b).entries().to_vec()).or_default() += 1.0 / 16.0;
            }
        }
        assert_eq!(sq.atoms().len(), oracle.len());
        for (key, w) in oracle {
            let x = t.index_of_entries(&key).unwrap();
            assert!((sq.weight_of(x) - w).abs() < 1e-15);
        }
        let walker = Walker::new(&t, &mu);
        let d = walker.power(2);
        for x in 0..t.len() as u32 {
            assert!((d.get(x) - sq.weight_of(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn convolution_is_associative() {
        let t = table(5);
        let mu = SparseMeasure::uniform_on_generators(&t);
        let nu = SparseMeasure::from_atoms(
            &[0, 7, 19],
            &Weights::Exact {
                num: vec![1, 2, 3],
                den: 6,
            },
        );
        let rho = SparseMeasure::from_atoms(&[3, 50], &Weights::Float(vec![0.25, 0.75]));
        let left = mu.convolve(&nu, &t).convolve(&rho, &t);
        let right = mu.convolve(&nu.convolve(&rho, &t), &t);
        assert_eq!(left.atoms(), right.atoms());
        for &x in left.atoms() {
            assert!((left.weight_of(x) - right.weight_of(x)).abs() < 1e-15);
        }
        assert!((left.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flatness_examples() {
        let t = table(6);
        let point = Density::delta(t.len(), 0);
        assert!((flatness(&point, &t, 3).unwrap().flatness() - 24f64.sqrt()).abs() < 1e-12);
        let uniform = SparseMeasure::uniform(&(0..t.len() as u32).collect::<Vec<_>>()).to_density(t.len());
        assert_eq!(
            flatness(&uniform, &t, 6).unwrap(),
            FlatnessSquared::Exact(Ratio::from_integer(BigUint::from(1u32)))
        );
        assert!(flatness(&point, &t, 4).is_err());
    }

    #[test]
    fn flattening_curve_is_monotone_and_tends_to_one() {
        let t = table(7);
        // lazy walk: aperiodic
        let s = GeneratorSet::standard_sl2();
        let lazy = WordMeasure::parse("4\n1 1\n1 2\n1 3\n1 4\n", 4)
            .unwrap()
            .on_table(&s, &t)
            .unwrap();
        let curve = flattening_curve(&lazy, &t, 7, 20, 0.01).unwrap();
        assert!((curve.rows[0].flatness - (t.len() as f64).sqrt()).abs() < 1e-9);
        assert!(curve
            .rows
            .iter()
            .all(|r| r.doubling_monotone && r.exact && r.doubling_ratio <= 1.0 + 1e-15));
        let float_lazy = WordMeasure::parse("0.2\n0.2 1\n0.2 2\n0.2 3\n0.2 4\n", 4)
            .unwrap()
            .on_table(&s, &t)
            .unwrap();
        let long = flattening_curve(&float_lazy, &t, 7, 150, 0.01).unwrap();
        assert!(!long.rows[1].exact);
        let last = long.rows.last().unwrap().flatness;
        assert!(last < 1.0 + 1e-6, "{last} {:?}", &long.rows[..5]);
        assert!(long.crossing.is_some());
    }

    #[test]
    fn flatness_is_translation_invariant() {
        let t = table(5);
        let mu = SparseMeasure::uniform_on_generators(&t).convolve(&SparseMeasure::uniform_on_generators(&t), &t);
        for h in [1u32, 17, 88] {
            let a = flatness(&mu.to_density(t.len()), &t, 5).unwrap();
            let b = flatness(&mu.translate(h, &t).to_density(t.len()), &t, 5).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn exact_step_falls_back_to_float_on_overflow() {
        let t = table(3);
        let w = Weights::Exact {
            num: vec![1, u64::MAX - 1],
            den: u64::MAX,
        };
        let mu = SparseMeasure::from_atoms(&[1, 2], &w);
        let walker = Walker::new(&t, &mu);
        let d = walker.power(3);
        assert!(!d.is_exact());
        assert!((d.to_f64().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn almost_diophantine_trivial_cases() {
        let s = GeneratorSet::standard_sl2();
        let mu = WordMeasure::uniform_on(&s);
        let t1 = table(1);
        let r = almost_diophantine(&mu, &s, &t1, 5, 1 << 20).unwrap();
        assert_eq!(r.mass, 1.0);
        let t = table(13);
        let r = almost_diophantine(&mu, &s, &t, 0, 1 << 20).unwrap();
        assert_eq!(r.mass, 1.0);
        assert_eq!(r.norm_bound, 2);
        assert_eq!(r.m, 1);
        assert_eq!(r.exact_support, Some(true));
    }

    #[test]
    fn almost_diophantine_detects_small_modulus_collisions() {
        // A^q ≡ 1 mod q: with radius ≥ q the check must fail
        let s = GeneratorSet::standard_sl2();
        let mu = WordMeasure::uniform_on(&s);
        let t = table(2);
        let r = almost_diophantine(&mu, &s, &t, 1, 1 << 20).unwrap();
        assert_eq!(r.m, 0);
        assert_eq!(r.exact_support, Some(true));
        let atoms: Vec<IntMat> = s.matrices().to_vec();
        let check = word_ball_congruence(&atoms, 3, 3, 1 << 20);
        assert_eq!(check.exact, Some(false));
        let v = check.violation.unwrap();
        assert!(!v.is_identity() && v.reduce(3).is_identity());
        assert_eq!(word_ball_congruence(&atoms, 3, 2, 1 << 20).exact, Some(true));
        assert_eq!(word_ball_congruence(&atoms, 1000, 6, 10).exact, None);
    }

    #[test]
    fn approx_group_examples() {
        let t = table(5);
        let all: Vec<u32> = (0..t.len() as u32).collect();
        let stats = approx_group_stats(&all, &t).unwrap();
        assert_eq!((stats.tripling, stats.k_cover), (1.0, 1));
        // the cyclic subgroup generated by A
        let a = t.index_of(&t.generators()[0]).unwrap();
        let sub = t.closure(&[a]);
        let stats = approx_group_stats(&sub, &t).unwrap();
        assert_eq!((stats.tripling, stats.k_cover), (1.0, 1));
        let t17 = table(17);
        let b = ball(&t17, 2);
        let stats = approx_group_stats(&b, &t17).unwrap();
        assert!(stats.tripling > 1.0 && stats.growth_ok);
        assert_eq!(b.len(), 17);
        assert!(approx_group_stats(&[1], &t).is_err());
        assert!(approx_group_stats(&[0, a], &t).is_err());
    }

    #[test]
    fn greedy_cover_covers_square() {
        let t = table(7);
        let b = ball(&t, 2);
        let stats = approx_group_stats(&b, &t).unwrap();
        let covered = product_set(&b, &stats.cover, &t);
        let aa = product_set(&b, &b, &t);
        assert!(aa.iter().all(|x| covered.binary_search(x).is_ok()));
    }

    #[test]
    fn symmetric_measures() {
        let t = table(5);
        assert!(SparseMeasure::uniform_on_generators(&t).is_symmetric(&t));
        let a = t.index_of(&t.generators()[0]).unwrap();
        assert!(!SparseMeasure::delta(a).is_symmetric(&t));
    }
}
