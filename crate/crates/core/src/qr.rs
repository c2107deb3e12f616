//! Quasi-randomness of finite quotients: conjugacy classes, irreducible
//! character degrees over a splitting field `F_ℓ`, the minimal nontrivial
//! degree `m(H)`, the product-covering test for triples of large subsets,
//! a probe for small-index subgroups and a search for failures of
//! multiplicativity of a section `π_p(Γ) → π_{p²}(Γ)`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::grpenum::{enumerate, GeneratorSet, GroupError, GroupTable};
use crate::modq::{gcd, inv_mod, is_prime, mul_mod, FactoredModulus, MatModQ};

/// Default cap on the order of tables handled by [`conjugacy_classes`].
pub const CLASS_ORDER_CAP: usize = 100_000;
/// Default cap on the order of tables handled by [`character_degrees`].
pub const DEGREE_ORDER_CAP: usize = 20_000;
/// Largest class count accepted by [`character_degrees`].
pub const MAX_CLASSES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrError {
    #[error("table of order {order} exceeds the cap {cap}")]
    OrderCap { order: usize, cap: usize },
    #[error("{classes} conjugacy classes exceed the limit {MAX_CLASSES}")]
    TooManyClasses { classes: usize },
    #[error("joint eigenspaces over F_{ell} did not split into lines (dimensions {dims:?}); retry with another prime")]
    NoSplit { ell: u64, dims: Vec<usize> },
    #[error("no integer degree matches the residue {residue} mod {ell}")]
    NoDegree { residue: u64, ell: u64 },
    #[error("nonsplit probe needs p > 2d, got p = {p}, d = {d}")]
    PrimeTooSmall { p: u64, d: usize },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Conjugacy classes of a table. Classes are ordered by representative, the
/// least ordinal in each class, so the identity class comes first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassData {
    pub class_of: Vec<u32>,
    pub class_sizes: Vec<usize>,
    pub representatives: Vec<u32>,
}

impl ClassData {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    pub fn members(&self, class: usize) -> Vec<u32> {
        (0..self.class_of.len() as u32)
            .filter(|&x| self.class_of[x as usize] as usize == class)
            .collect()
    }
}

fn inverse_table(t: &GroupTable) -> Vec<u32> {
    (0..t.len() as u32).into_par_iter().map(|x| t.inverse(x)).collect()
}

/// Orbits under conjugation by the table generators.
pub fn conjugacy_classes(t: &GroupTable, cap: usize) -> Result<ClassData, QrError> {
    let n = t.len();
    if n > cap {
        return Err(QrError::OrderCap { order: n, cap });
    }
    let gens: Vec<u32> = t
        .generators()
        .iter()
        .map(|g| t.index_of(g).expect("generator in table"))
        .collect();
    let gen_inv: Vec<u32> = gens.iter().map(|&g| t.inverse(g)).collect();
    let mut class_of = vec![u32::MAX; n];
    let mut class_sizes = Vec::new();
    let mut representatives = Vec::new();
    for start in 0..n as u32 {
        if class_of[start as usize] != u32::MAX {
            continue;
        }
        let id = representatives.len() as u32;
        representatives.push(start);
        class_of[start as usize] = id;
        let mut size = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for (&g, &gi) in gens.iter().zip(&gen_inv) {
                let y = t.mul(t.mul(g, x), gi);
                if class_of[y as usize] == u32::MAX {
                    class_of[y as usize] = id;
                    size += 1;
                    queue.push_back(y);
                }
            }
        }
        class_sizes.push(size);
    }
    Ok(ClassData {
        class_of,
        class_sizes,
        representatives,
    })
}

fn element_order(t: &GroupTable, x: u32) -> u64 {
    let mut k = 1;
    let mut y = x;
    while y != 0 {
        y = t.mul(x, y);
        k += 1;
    }
    k
}

/// Least common multiple of element orders.
pub fn exponent(t: &GroupTable, classes: &ClassData) -> u64 {
    classes.representatives.iter().fold(1u64, |acc, &x| {
        let o = element_order(t, x);
        acc / gcd(acc, o) * o
    })
}

/// Smallest prime `ℓ ≡ 1 mod e` with `ℓ > 2√|T|` and `ℓ > r`.
pub fn splitting_prime(exponent: u64, order: usize, classes: usize) -> u64 {
    let floor = ((order as f64).sqrt() * 2.0).ceil() as u64;
    let floor = floor.max(classes as u64);
    let mut ell = exponent + 1;
    while ell <= floor || !is_prime(ell) {
        ell += exponent;
    }
    ell
}

/// Row-reduces in place over `F_ℓ`; returns pivot columns.
fn rref(rows: &mut Vec<Vec<u64>>, ell: u64) -> Vec<usize> {
    let cols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else {
            continue;
        };
        rows.swap(r, p);
        let inv = inv_mod(rows[r][c], ell).expect("nonzero in a field");
        rows[r].iter_mut().for_each(|x| *x = mul_mod(*x, inv, ell));
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[c] != 0 {
                let f = row[c];
                for (a, &b) in row.iter_mut().zip(&pivot_row) {
                    *a = (*a + ell - mul_mod(f, b, ell)) % ell;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

/// Basis of `{v : M v = 0}` for a square matrix over `F_ℓ`.
fn nullspace(m: &[Vec<u64>], ell: u64) -> Vec<Vec<u64>> {
    let k = m.len();
    let mut rows = m.to_vec();
    let pivots = rref(&mut rows, ell);
    let free: Vec<usize> = (0..k).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![0u64; k];
            v[f] = 1;
            for (row, &pc) in rows.iter().zip(&pivots) {
                v[pc] = (ell - row[f]) % ell;
            }
            v
        })
        .collect()
}

/// Characteristic polynomial (coefficients in ascending degree) via
/// Hessenberg reduction over `F_ℓ`.
fn charpoly(m: &[Vec<u64>], ell: u64) -> Vec<u64> {
    let n = m.len();
    let mut h = m.to_vec();
    for j in 0..n.saturating_sub(2) {
        let Some(i) = (j + 1..n).find(|&i| h[i][j] != 0) else {
            continue;
        };
        if i != j + 1 {
            h.swap(i, j + 1);
            for row in h.iter_mut() {
                row.swap(i, j + 1);
            }
        }
        let inv = inv_mod(h[j + 1][j], ell).expect("nonzero in a field");
        for k in j + 2..n {
            let u = mul_mod(h[k][j], inv, ell);
            if u == 0 {
                continue;
            }
            for c in 0..n {
                h[k][c] = (h[k][c] + ell - mul_mod(u, h[j + 1][c], ell)) % ell;
            }
            for row in h.iter_mut() {
                row[j + 1] = (row[j + 1] + mul_mod(u, row[k], ell)) % ell;
            }
        }
    }
    let mut p: Vec<Vec<u64>> = vec![vec![1]];
    for m in 1..=n {
        let prev = &p[m - 1];
        let mut next = vec![0u64; m + 1];
        for (d, &c) in prev.iter().enumerate() {
            next[d + 1] = (next[d + 1] + c) % ell;
            next[d] = (next[d] + ell - mul_mod(h[m - 1][m - 1], c, ell)) % ell;
        }
        let mut t = 1u64;
        for i in (1..m).rev() {
            t = mul_mod(t, h[i][i - 1], ell);
            let f = mul_mod(t, h[i - 1][m - 1], ell);
            for (d, &c) in p[i - 1].iter().enumerate() {
                next[d] = (next[d] + ell - mul_mod(f, c, ell)) % ell;
            }
        }
        p.push(next);
    }
    p.pop().expect("non-empty")
}

fn roots(poly: &[u64], ell: u64) -> Vec<u64> {
    (0..ell)
        .into_par_iter()
        .filter(|&x| poly.iter().rev().fold(0u64, |acc, &c| (mul_mod(acc, x, ell) + c) % ell) == 0)
        .collect()
}

/// Class-multiplication coefficients `c[i][j][k]`: the number of `x ∈ C_i`
/// with `x⁻¹ z_k ∈ C_j`, where `z_k` is the representative of `C_k`.
pub fn class_coefficients(t: &GroupTable, classes: &ClassData) -> Vec<Vec<Vec<u64>>> {
    let r = classes.len();
    let inv = inverse_table(t);
    let per_k: Vec<Vec<Vec<u64>>> = classes
        .representatives
        .par_iter()
        .map(|&z| {
            let mut c = vec![vec![0u64; r]; r];
            for x in 0..t.len() as u32 {
                let i = classes.class_of[x as usize] as usize;
                let j = classes.class_of[t.mul(inv[x as usize], z) as usize] as usize;
                c[i][j] += 1;
            }
            c
        })
        .collect();
    (0..r)
        .map(|i| (0..r).map(|j| (0..r).map(|k| per_k[k][i][j]).collect()).collect())
        .collect()
}

/// Degrees of the complex irreducible characters, ascending, via the
/// Burnside–Dixon joint eigenvectors of the class-sum matrices over `F_ℓ`.
pub fn character_degrees(t: &GroupTable, cap: usize) -> Result<Vec<u64>, QrError> {
    let order = t.len();
    if order > cap {
        return Err(QrError::OrderCap { order, cap });
    }
    let classes = conjugacy_classes(t, cap)?;
    let r = classes.len();
    if r > MAX_CLASSES {
        return Err(QrError::TooManyClasses { classes: r });
    }
    if r == 1 {
        return Ok(vec![1]);
    }
    let ell = splitting_prime(exponent(t, &classes), order, r);
    let coeff = class_coefficients(t, &classes);
    // A_i[j][k] = c[i][j][k], acting on column vectors indexed by classes
    let mut spaces: Vec<Vec<Vec<u64>>> = vec![(0..r).map(|i| (0..r).map(|j| u64::from(i == j)).collect()).collect()];
    for a in coeff.iter().skip(1) {
        if spaces.iter().all(|s| s.len() == 1) {
            break;
        }
        let mut next = Vec::new();
        for basis in spaces {
            if basis.len() == 1 {
                next.push(basis);
                continue;
            }
            let mut basis = basis;
            let pivots = rref(&mut basis, ell);
            let k = basis.len();
            // restriction R with A v_j = Σ_i R[i][j] v_i, read off at pivots
            let images: Vec<Vec<u64>> = basis
                .iter()
                .map(|v| {
                    (0..r)
                        .map(|row| {
                            a[row]
                                .iter()
                                .zip(v)
                                .fold(0, |s, (&x, &y)| (s + mul_mod(x % ell, y, ell)) % ell)
                        })
                        .collect()
                })
                .collect();
            let rmat: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| images[j][pivots[i]]).collect()).collect();
            for lambda in roots(&charpoly(&rmat, ell), ell) {
                let shifted: Vec<Vec<u64>> = rmat
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, &x)| if i == j { (x + ell - lambda) % ell } else { x })
                            .collect()
                    })
                    .collect();
                let mut sub: Vec<Vec<u64>> = nullspace(&shifted, ell)
                    .iter()
                    .map(|c| {
                        (0..r)
                            .map(|col| {
                                basis
                                    .iter()
                                    .zip(c)
                                    .fold(0, |s, (v, &ci)| (s + mul_mod(ci, v[col], ell)) % ell)
                            })
                            .collect()
                    })
                    .collect();
                rref(&mut sub, ell);
                next.push(sub);
            }
        }
        spaces = next;
    }
    if spaces.len() != r || spaces.iter().any(|s| s.len() != 1) {
        return Err(QrError::NoSplit {
            ell,
            dims: spaces.iter().map(Vec::len).collect(),
        });
    }
    let inv = inverse_table(t);
    let inverse_class: Vec<usize> = classes
        .representatives
        .iter()
        .map(|&x| classes.class_of[inv[x as usize] as usize] as usize)
        .collect();
    let max_degree = (order as f64).sqrt() as u64 + 1;
    let mut degrees = Vec::with_capacity(r);
    for space in &spaces {
        let w = &space[0];
        let scale = inv_mod(w[0], ell).ok_or(QrError::NoSplit { ell, dims: vec![1; r] })?;
        let w: Vec<u64> = w.iter().map(|&x| mul_mod(x, scale, ell)).collect();
        // Σ_k ω_k ω_{k*} / h_k = |T| / χ(1)²
        let s = (0..r).fold(0u64, |acc, k| {
            let h_inv = inv_mod(classes.class_sizes[k] as u64 % ell, ell).expect("ℓ does not divide |T|");
            (acc + mul_mod(mul_mod(w[k], w[inverse_class[k]], ell), h_inv, ell)) % ell
        });
        let residue = inv_mod(s, ell)
            .map(|si| mul_mod(order as u64 % ell, si, ell))
            .unwrap_or(0);
        let d = (1..=max_degree)
            .find(|&d| mul_mod(d, d, ell) == residue && order as u64 % d == 0)
            .ok_or(QrError::NoDegree { residue, ell })?;
        degrees.push(d);
    }
    degrees.sort_unstable();
    Ok(degrees)
}

/// Smallest degree of a nontrivial irreducible representation (`m(H)`):
/// one copy of the trivial character is removed from the degree list.
pub fn min_degree(degrees: &[u64]) -> Option<u64> {
    degrees.iter().skip(1).copied().min()
}

/// `(p − 1)/2` for the smallest prime `p | q`, or `None` for `q = 1`.
pub fn frobenius_bound(q: u64) -> Option<f64> {
    let fq = FactoredModulus::new(q).ok()?;
    let p = fq.primes().min()?;
    Some((p as f64 - 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QrReport {
    pub q: u64,
    pub classes: usize,
    pub degrees: Vec<u64>,
    pub min_degree: Option<u64>,
    pub frobenius_bound: Option<f64>,
    pub bound_ok: bool,
}

pub fn qr_report(t: &GroupTable, cap: usize) -> Result<QrReport, QrError> {
    let degrees = character_degrees(t, cap)?;
    let classes = degrees.len();
    let m = min_degree(&degrees);
    let bound = frobenius_bound(t.q());
    let bound_ok = match (m, bound) {
        (Some(m), Some(b)) => m as f64 >= b,
        _ => true,
    };
    Ok(QrReport {
        q: t.q(),
        classes,
        degrees,
        min_degree: m,
        frobenius_bound: bound,
        bound_ok,
    })
}

/// Least-squares slope of `log m` against `log q` over `q > 1`.
pub fn degree_exponent_fit(points: &[(u64, u64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(q, m)| q > 1 && m > 0)
        .map(|&(q, m)| ((q as f64).ln(), (m as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverCheck {
    pub covers: bool,
    pub product_size: usize,
    /// `|A₁||A₂||A₃| > |H|³ / m`.
    pub hypothesis: bool,
}

impl CoverCheck {
    /// A failure to cover under the size hypothesis.
    pub fn contradiction(&self) -> bool {
        self.hypothesis && !self.covers
    }
}

fn product_set(t: &GroupTable, a: &[bool], b: &[u32]) -> Vec<bool> {
    let members: Vec<u32> = (0..t.len() as u32).filter(|&x| a[x as usize]).collect();
    let hits: Vec<u32> = members
        .par_iter()
        .flat_map_iter(|&x| b.iter().map(move |&y| t.mul(x, y)))
        .collect();
    let mut out = vec![false; t.len()];
    hits.into_iter().for_each(|z| out[z as usize] = true);
    out
}

/// Computes `A₁A₂A₃` exactly.
pub fn gowers_cover_check(a1: &[u32], a2: &[u32], a3: &[u32], t: &GroupTable, m: u64) -> CoverCheck {
    let n = t.len();
    let mut set1 = vec![false; n];
    a1.iter().for_each(|&x| set1[x as usize] = true);
    let set12 = product_set(t, &set1, a2);
    let set123 = product_set(t, &set12, a3);
    let product_size = set123.iter().filter(|&&b| b).count();
    let lhs = a1.len() as u128 * a2.len() as u128 * a3.len() as u128 * m as u128;
    CoverCheck {
        covers: product_size == n,
        product_size,
        hypothesis: lhs > (n as u128).pow(3),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexProbe {
    /// Smallest proper index found, `None` for the trivial group.
    pub best_index: Option<usize>,
    pub trials: usize,
    pub bound: Option<f64>,
    pub bound_ok: bool,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Upper bound on the least index of a proper subgroup, from subgroups
/// generated by random tuples of one to three elements. The trivial
/// subgroup is always a candidate.
pub fn min_proper_index_probe(t: &GroupTable, trials: usize, seed: u64) -> IndexProbe {
    let n = t.len();
    let bound = if is_prime(t.q()) { frobenius_bound(t.q()) } else { None };
    if n == 1 {
        return IndexProbe {
            best_index: None,
            trials,
            bound,
            bound_ok: true,
        };
    }
    let best = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let k = rng.gen_range(1..=3);
            let gens: Vec<u32> = (0..k).map(|_| rng.gen_range(0..n as u32)).collect();
            let size = t.closure(&gens).len();
            if size < n {
                n / size
            } else {
                usize::MAX
            }
        })
        .min()
        .unwrap_or(usize::MAX)
        .min(n);
    let bound_ok = bound.map_or(true, |b| best as f64 >= b);
    IndexProbe {
        best_index: Some(best),
        trials,
        bound,
        bound_ok,
    }
}

/// Least index of a proper subgroup generated by at most two elements,
/// by closing every pair. Only for tiny tables.
pub fn min_proper_index_two_generated(t: &GroupTable) -> Option<usize> {
    let n = t.len() as u32;
    if n == 1 {
        return None;
    }
    (0..n)
        .into_par_iter()
        .map(|x| {
            (x..n)
                .map(|y| t.closure(&[x, y]).len())
                .filter(|&s| s < n as usize)
                .map(|s| n as usize / s)
                .min()
                .unwrap_or(n as usize)
        })
        .min()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NonsplitOutcome {
    /// `ψ(xy) ≠ ψ(x)ψ(y)` with `z = ψ(xy) ψ(y)⁻¹ ψ(x)⁻¹`.
    Witness {
        x: u32,
        y: u32,
        z: MatModQ,
        trial: usize,
    },
    Exhausted {
        trials: usize,
    },
}

/// Searches random pairs of `T` for a failure of multiplicativity of the
/// section sending `x` to its BFS word evaluated on `lifts`, the images of
/// the table generators in a larger quotient.
pub fn nonsplit_search(t: &GroupTable, lifts: &[MatModQ], trials: usize, seed: u64) -> NonsplitOutcome {
    let section: Vec<MatModQ> = (0..t.len() as u32)
        .into_par_iter()
        .map(|x| {
            t.word_of(x)
                .iter()
                .fold(MatModQ::identity(lifts[0].modulus(), lifts[0].dim()), |acc, &g| {
                    lifts[g].mul(&acc)
                })
        })
        .collect();
    let n = t.len() as u32;
    (0..trials)
        .into_par_iter()
        .find_map_first(|trial| {
            let mut rng = trial_rng(seed, trial);
            let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let psi_xy = &section[t.mul(x, y) as usize];
            let prod = section[x as usize].mul(&section[y as usize]);
            (psi_xy != &prod).then(|| {
                let z = psi_xy
                    .mul(&section[y as usize].inverse().expect("invertible"))
                    .mul(&section[x as usize].inverse().expect("invertible"));
                NonsplitOutcome::Witness { x, y, z, trial }
            })
        })
        .unwrap_or(NonsplitOutcome::Exhausted { trials })
}

/// [`nonsplit_search`] on `π_p(Γ)` with lifts to `π_{p²}(Γ)`.
pub fn nonsplit_probe(
    s: &GeneratorSet,
    p: u64,
    trials: usize,
    seed: u64,
    cap: usize,
) -> Result<NonsplitOutcome, QrError> {
    if !is_prime(p) {
        return Err(QrError::NotPrime(p));
    }
    if p <= 2 * s.dim() as u64 {
        return Err(QrError::PrimeTooSmall { p, d: s.dim() });
    }
    let t = enumerate(s, &FactoredModulus::new(p).map_err(GroupError::from)?, cap)?;
    Ok(nonsplit_search(&t, &s.reduce(p * p), trials, seed))
}
