//! Exact modular arithmetic: factored moduli, p-adic valuations, and
//! square matrices over `Z/qZ`.
//!
//! Every modulus used with [`MatModQ`] must stay below `2^62`, so products of
//! two reduced entries fit in a `u128` before reduction.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

/// Largest admissible modulus (exclusive).
pub const MODULUS_LIMIT: u64 = 1 << 62;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModqError {
    #[error("modulus must be positive")]
    ZeroModulus,
    #[error("modulus {0} exceeds the 2^62 arithmetic limit")]
    ModulusTooLarge(u128),
    #[error("prime {0} does not divide the modulus")]
    PrimeNotInModulus(u64),
    #[error("unsupported modulus {q}: the 2-adic exponent is exactly 1")]
    UnsupportedModulus { q: u64 },
    #[error("{divisor} does not divide {q}")]
    NotADivisor { divisor: u64, q: u64 },
    #[error("delta must lie strictly between 0 and 1")]
    DeltaOutOfRange,
    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[inline]
pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse of `a` modulo `q`, if `gcd(a, q) = 1`.
pub fn inv_mod(a: u64, q: u64) -> Option<u64> {
    if q == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = (a as i128 % q as i128, q as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let quot = old_r / r;
        (old_r, r) = (r, old_r - quot * r);
        (old_s, s) = (s, old_s - quot * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(q as i128) as u64)
}

/// Reduces a signed integer into `[0, q)`.
#[inline]
pub fn reduce_signed(x: i128, q: u64) -> u64 {
    x.rem_euclid(q as i128) as u64
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut f = 3u64;
    while f.saturating_mul(f) <= n {
        if n % f == 0 {
            return false;
        }
        f += 2;
    }
    true
}

pub fn ipow(p: u64, e: u32) -> u128 {
    (p as u128).pow(e)
}

/// Combines residues `r_i mod m_i` (pairwise coprime moduli) into one residue
/// modulo the product.
pub fn crt_combine(residues: &[(u64, u64)]) -> (u64, u64) {
    let mut acc = 0u64;
    let mut modulus = 1u64;
    for &(r, m) in residues {
        // acc + modulus * t ≡ r (mod m)
        let inv = inv_mod(modulus % m, m).expect("CRT moduli must be coprime");
        let diff = (r as i128 - acc as i128).rem_euclid(m as i128) as u64;
        let t = mul_mod(diff, inv, m);
        let next = modulus as u128 * m as u128;
        acc = ((acc as u128 + modulus as u128 * t as u128) % next) as u64;
        modulus = next as u64;
    }
    (acc, modulus)
}

/// An integer `q ≥ 1` together with its factorization `q = ∏ p^{m_p}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredModulus {
    q: u64,
    factors: Vec<(u64, u32)>,
    radical: u64,
}

/// Output of [`FactoredModulus::derived_moduli`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedModuli {
    pub q_i: u64,
    pub r_i: u64,
    pub q_delta: u64,
    pub r_dot: u64,
}

impl FactoredModulus {
    /// Factorizes `q` by trial division.
    pub fn new(q: u64) -> Result<Self, ModqError> {
        if q == 0 {
            return Err(ModqError::ZeroModulus);
        }
        let mut n = q;
        let mut factors = Vec::new();
        let mut p = 2u64;
        while p.saturating_mul(p) <= n {
            if n % p == 0 {
                let mut e = 0;
                while n % p == 0 {
                    n /= p;
                    e += 1;
                }
                factors.push((p, e));
            }
            p += if p == 2 { 1 } else { 2 };
        }
        if n > 1 {
            factors.push((n, 1));
        }
        let radical = factors.iter().map(|&(p, _)| p).product();
        Ok(Self { q, factors, radical })
    }

    pub fn from_factors(factors: &[(u64, u32)]) -> Result<Self, ModqError> {
        let mut q: u128 = 1;
        for &(p, e) in factors {
            q *= ipow(p, e);
            if q >= MODULUS_LIMIT as u128 {
                return Err(ModqError::ModulusTooLarge(q));
            }
        }
        Self::new(q as u64)
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn radical(&self) -> u64 {
        self.radical
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    /// Exponent of `p` in `q` (0 when `p ∤ q`).
    pub fn exponent(&self, p: u64) -> u32 {
        self.factors.iter().find(|&&(f, _)| f == p).map_or(0, |&(_, e)| e)
    }

    pub fn is_prime(&self) -> bool {
        self.factors.len() == 1 && self.factors[0].1 == 1
    }

    pub fn divides(&self, other: u64) -> bool {
        other % self.q == 0
    }

    /// `q_I = ∏_{p ∈ I} p^{m_p}`.
    pub fn q_subset(&self, primes: &[u64]) -> Result<u64, ModqError> {
        let mut acc = 1u64;
        for &p in primes {
            let e = self.exponent(p);
            if e == 0 {
                return Err(ModqError::PrimeNotInModulus(p));
            }
            acc *= p.pow(e);
        }
        Ok(acc)
    }

    /// `r_I = ∏_{p ∈ I} p`.
    pub fn r_subset(&self, primes: &[u64]) -> Result<u64, ModqError> {
        let mut acc = 1u64;
        for &p in primes {
            if self.exponent(p) == 0 {
                return Err(ModqError::PrimeNotInModulus(p));
            }
            acc *= p;
        }
        Ok(acc)
    }

    /// `q_δ = ∏ p^{⌊δ m_p⌋}`.
    pub fn q_delta(&self, delta: Ratio<u64>) -> Result<u64, ModqError> {
        if *delta.numer() == 0 || delta >= Ratio::from_integer(1) {
            return Err(ModqError::DeltaOutOfRange);
        }
        Ok(self
            .factors
            .iter()
            .map(|&(p, e)| p.pow(floor_scaled(delta, e)))
            .product())
    }

    /// `ṙ = ∏ p^{1 + δ₂(p)}`; undefined when `m_2 = 1`.
    pub fn r_dot(&self) -> Result<u64, ModqError> {
        if self.exponent(2) == 1 {
            return Err(ModqError::UnsupportedModulus { q: self.q });
        }
        Ok(self.factors.iter().map(|&(p, _)| if p == 2 { 4 } else { p }).product())
    }

    pub fn derived_moduli(&self, primes: &[u64], delta: Ratio<u64>) -> Result<DerivedModuli, ModqError> {
        Ok(DerivedModuli {
            q_i: self.q_subset(primes)?,
            r_i: self.r_subset(primes)?,
            q_delta: self.q_delta(delta)?,
            r_dot: self.r_dot()?,
        })
    }

    /// All positive divisors of `q`, ascending.
    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let current = divs.clone();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                divs.extend(current.iter().map(|d| d * pk));
            }
        }
        divs.sort_unstable();
        divs
    }
}

impl fmt::Display for FactoredModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.q)
    }
}

/// `⌊δ·m⌋` for rational `δ`.
pub fn floor_scaled(delta: Ratio<u64>, m: u32) -> u32 {
    ((*delta.numer() * m as u64) / *delta.denom()) as u32
}

/// A p-adic valuation computed at bounded precision.
///
/// `Saturated` means every examined entry vanished modulo `p^cap`; the true
/// valuation is at least `cap` but unknown beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(u32),
    Saturated { cap: u32 },
}

impl Valuation {
    pub fn finite(self) -> Option<u32> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Saturated { .. } => None,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, Valuation::Saturated { .. })
    }

    /// Whether the valuation is provably at least `k`. Saturation only
    /// certifies bounds up to its cap.
    pub fn at_least(self, k: u32) -> bool {
        match self {
            Valuation::Finite(v) => v >= k,
            Valuation::Saturated { cap } => k <= cap,
        }
    }

    /// The finite value, or the cap for a saturated valuation.
    pub fn lower_bound(self) -> u32 {
        match self {
            Valuation::Finite(v) => v,
            Valuation::Saturated { cap } => cap,
        }
    }

    /// Minimum of two valuations.
    pub fn min(self, other: Valuation) -> Valuation {
        match (self, other) {
            (Valuation::Finite(a), Valuation::Finite(b)) => Valuation::Finite(a.min(b)),
            (Valuation::Finite(a), Valuation::Saturated { .. })
            | (Valuation::Saturated { .. }, Valuation::Finite(a)) => Valuation::Finite(a),
            (Valuation::Saturated { cap: a }, Valuation::Saturated { cap: b }) => {
                Valuation::Saturated { cap: a.min(b) }
            }
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Saturated { cap } => write!(f, ">={cap}"),
        }
    }
}

/// `v_p(x)` for an integer, saturating at `cap`.
pub fn vp_int(x: i128, p: u64, cap: u32) -> Valuation {
    if x == 0 {
        return Valuation::Saturated { cap };
    }
    let p = p as i128;
    let mut x = x;
    let mut v = 0;
    while x % p == 0 && v < cap {
        x /= p;
        v += 1;
    }
    if v >= cap {
        Valuation::Saturated { cap }
    } else {
        Valuation::Finite(v)
    }
}

/// Minimum valuation over matrix entries; the zero matrix saturates.
pub fn vp_mat<I: IntoIterator<Item = i128>>(entries: I, p: u64, cap: u32) -> Valuation {
    entries
        .into_iter()
        .fold(Valuation::Saturated { cap }, |acc, x| acc.min(vp_int(x, p, cap)))
}

/// `v_p(n!) = ⌊n/p⌋ + ⌊n/p²⌋ + ⋯`.
pub fn vp_factorial(n: u64, p: u64) -> u64 {
    let mut acc = 0;
    let mut pk = p;
    while pk <= n {
        acc += n / pk;
        pk = match pk.checked_mul(p) {
            Some(v) => v,
            None => break,
        };
    }
    acc
}

/// A square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntMat {
    d: usize,
    entries: Vec<i64>,
}

impl IntMat {
    pub fn new(d: usize, entries: Vec<i64>) -> Result<Self, ModqError> {
        if entries.len() != d * d || d == 0 {
            return Err(ModqError::Shape {
                expected: d * d,
                got: entries.len(),
            });
        }
        Ok(Self { d, entries })
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1;
        }
        Self { d, entries }
    }

    /// The elementary matrix `scale · E_{ij}` (0-based indices).
    pub fn elementary(d: usize, i: usize, j: usize, scale: i64) -> Self {
        let mut entries = vec![0; d * d];
        entries[i * d + j] = scale;
        Self { d, entries }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.d + j]
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.d)
    }

    /// Product, or `None` on `i64` overflow.
    pub fn checked_mul(&self, other: &IntMat) -> Option<IntMat> {
        let d = self.d;
        let mut out = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc: i128 = 0;
                for k in 0..d {
                    acc += self.entries[i * d + k] as i128 * other.entries[k * d + j] as i128;
                }
                out[i * d + j] = i64::try_from(acc).ok()?;
            }
        }
        Some(IntMat { d, entries: out })
    }

    pub fn scaled(&self, k: i64) -> IntMat {
        IntMat {
            d: self.d,
            entries: self.entries.iter().map(|&x| x * k).collect(),
        }
    }

    /// Maximum absolute row sum, a submultiplicative norm.
    pub fn row_sum_norm(&self) -> u64 {
        self.entries
            .chunks(self.d)
            .map(|row| row.iter().map(|x| x.unsigned_abs()).sum::<u64>())
            .max()
            .unwrap_or(0)
    }

    /// Exact determinant by fraction-free elimination.
    pub fn det(&self) -> i128 {
        det_bareiss(self.d, self.entries.iter().map(|&x| x as i128).collect())
    }

    /// Inverse over the integers; exists iff `det = ±1`.
    pub fn inverse(&self) -> Option<IntMat> {
        let det = self.det();
        if det != 1 && det != -1 {
            return None;
        }
        let d = self.d;
        if d == 1 {
            return Some(IntMat {
                d,
                entries: vec![(det as i64) * 1],
            });
        }
        let mut out = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let minor: Vec<i128> = (0..d)
                    .filter(|&r| r != j)
                    .flat_map(|r| (0..d).filter(move |&c| c != i).map(move |c| (r, c)))
                    .map(|(r, c)| self.entries[r * d + c] as i128)
                    .collect();
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                let cof = sign * det_bareiss(d - 1, minor) * det;
                out[i * d + j] = i64::try_from(cof).ok()?;
            }
        }
        Some(IntMat { d, entries: out })
    }

    pub fn reduce(&self, q: u64) -> MatModQ {
        MatModQ::from_signed(q, self.d, &self.entries)
    }
}

fn det_bareiss(d: usize, mut a: Vec<i128>) -> i128 {
    if d == 0 {
        return 1;
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d {
        if a[k * d + k] == 0 {
            let Some(swap) = (k + 1..d).find(|&r| a[r * d + k] != 0) else {
                return 0;
            };
            for c in 0..d {
                a.swap(k * d + c, swap * d + c);
            }
            sign = -sign;
        }
        for i in k + 1..d {
            for j in k + 1..d {
                a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
            }
        }
        prev = a[k * d + k];
    }
    sign * a[d * d - 1]
}

impl fmt::Display for IntMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_rows(f, self.d, self.entries.iter())
    }
}

fn fmt_rows<T: fmt::Display>(f: &mut fmt::Formatter<'_>, d: usize, entries: impl Iterator<Item = T>) -> fmt::Result {
    write!(f, "(")?;
    for (k, x) in entries.enumerate() {
        if k > 0 {
            write!(f, "{}", if k % d == 0 { "; " } else { "," })?;
        }
        write!(f, "{x}")?;
    }
    write!(f, ")")
}

/// A `d×d` matrix with entries in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatModQ {
    q: u64,
    d: usize,
    entries: Vec<u64>,
}

impl MatModQ {
    /// Builds a matrix, reducing every entry mod `q`.
    pub fn new(q: u64, d: usize, entries: Vec<u64>) -> Self {
        assert!(q > 0 && q < MODULUS_LIMIT, "modulus out of range: {q}");
        assert_eq!(entries.len(), d * d, "matrix shape");
        let entries = entries.into_iter().map(|x| x % q).collect();
        Self { q, d, entries }
    }

    pub fn from_signed(q: u64, d: usize, entries: &[i64]) -> Self {
        assert!(q > 0 && q < MODULUS_LIMIT, "modulus out of range: {q}");
        assert_eq!(entries.len(), d * d, "matrix shape");
        Self {
            q,
            d,
            entries: entries.iter().map(|&x| reduce_signed(x as i128, q)).collect(),
        }
    }

    pub fn identity(q: u64, d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1 % q;
        }
        Self { q, d, entries }
    }

    pub fn zero(q: u64, d: usize) -> Self {
        Self {
            q,
            d,
            entries: vec![0; d * d],
        }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.d + j]
    }

    pub fn is_identity(&self) -> bool {
        self.entries
            .iter()
            .enumerate()
            .all(|(k, &x)| x == if k / self.d == k % self.d { 1 % self.q } else { 0 })
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0)
    }

    /// Row-major big-endian byte encoding; lexicographic byte order agrees
    /// with lexicographic order on entries.
    pub fn canonical_key(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|x| x.to_be_bytes()).collect()
    }

    /// Entries as centered integers in `(-q/2, q/2]`.
    pub fn centered(&self) -> Vec<i64> {
        self.entries
            .iter()
            .map(|&x| {
                if x > self.q / 2 {
                    x as i64 - self.q as i64
                } else {
                    x as i64
                }
            })
            .collect()
    }

    pub fn mul(&self, other: &MatModQ) -> MatModQ {
        debug_assert_eq!(self.q, other.q);
        debug_assert_eq!(self.d, other.d);
        let mut out = vec![0u64; self.d * self.d];
        mat_mul_into(self.q, self.d, &self.entries, &other.entries, &mut out);
        MatModQ {
            q: self.q,
            d: self.d,
            entries: out,
        }
    }

    pub fn add(&self, other: &MatModQ) -> MatModQ {
        let q = self.q;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| ((a as u128 + b as u128) % q as u128) as u64)
            .collect();
        MatModQ { q, d: self.d, entries }
    }

    pub fn sub(&self, other: &MatModQ) -> MatModQ {
        let q = self.q;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| if a >= b { a - b } else { q - b + a })
            .collect();
        MatModQ { q, d: self.d, entries }
    }

    pub fn neg(&self) -> MatModQ {
        let q = self.q;
        MatModQ {
            q,
            d: self.d,
            entries: self.entries.iter().map(|&a| (q - a) % q).collect(),
        }
    }

    pub fn scale(&self, k: u64) -> MatModQ {
        let q = self.q;
        MatModQ {
            q,
            d: self.d,
            entries: self.entries.iter().map(|&a| mul_mod(a, k % q, q)).collect(),
        }
    }

    pub fn scale_signed(&self, k: i64) -> MatModQ {
        self.scale(reduce_signed(k as i128, self.q))
    }

    /// `self − 1`.
    pub fn minus_identity(&self) -> MatModQ {
        self.sub(&MatModQ::identity(self.q, self.d))
    }

    pub fn pow(&self, mut n: u64) -> MatModQ {
        let mut acc = MatModQ::identity(self.q, self.d);
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    /// Integer power; negative exponents use the inverse.
    pub fn pow_signed(&self, n: i64) -> Option<MatModQ> {
        if n >= 0 {
            Some(self.pow(n as u64))
        } else {
            Some(self.inverse()?.pow(n.unsigned_abs()))
        }
    }

    /// Reduction to a divisor `q' | q`.
    pub fn reduce(&self, q_prime: u64) -> MatModQ {
        assert!(self.q % q_prime == 0, "{q_prime} does not divide {}", self.q);
        MatModQ {
            q: q_prime,
            d: self.d,
            entries: self.entries.iter().map(|&x| x % q_prime).collect(),
        }
    }

    /// Reinterprets the entries modulo a multiple of `q` (lifting by the
    /// representatives in `[0, q)`).
    pub fn lift(&self, q_big: u64) -> MatModQ {
        assert!(q_big % self.q == 0);
        MatModQ {
            q: q_big,
            d: self.d,
            entries: self.entries.clone(),
        }
    }

    pub fn trace(&self) -> u64 {
        (0..self.d).fold(0u64, |acc, i| {
            ((acc as u128 + self.get(i, i) as u128) % self.q as u128) as u64
        })
    }

    /// Determinant and inverse via Euclidean row reduction, which works over
    /// any `Z/qZ` (no unit pivot needs to exist a priori).
    fn euclid_reduce(&self) -> (u64, Option<MatModQ>) {
        let (q, d) = (self.q, self.d);
        let mut a = self.entries.clone();
        let mut inv = MatModQ::identity(q, d).entries;
        let mut det = 1u64 % q;
        let mut negate = false;
        for c in 0..d {
            for r in c + 1..d {
                while a[r * d + c] != 0 {
                    let t = a[c * d + c] / a[r * d + c];
                    if t != 0 {
                        let tq = t % q;
                        for k in 0..d {
                            a[c * d + k] = sub_mod(a[c * d + k], mul_mod(tq, a[r * d + k], q), q);
                            inv[c * d + k] = sub_mod(inv[c * d + k], mul_mod(tq, inv[r * d + k], q), q);
                        }
                    }
                    for k in 0..d {
                        a.swap(c * d + k, r * d + k);
                        inv.swap(c * d + k, r * d + k);
                    }
                    negate = !negate;
                }
            }
            det = mul_mod(det, a[c * d + c], q);
        }
        if negate {
            det = (q - det) % q;
        }
        if inv_mod(det, q).is_none() {
            return (det, None);
        }
        // back substitution on the upper-triangular system
        for c in (0..d).rev() {
            let pivot_inv = inv_mod(a[c * d + c], q).expect("unit pivot in invertible matrix");
            for k in 0..d {
                a[c * d + k] = mul_mod(a[c * d + k], pivot_inv, q);
                inv[c * d + k] = mul_mod(inv[c * d + k], pivot_inv, q);
            }
            for r in 0..c {
                let f = a[r * d + c];
                if f != 0 {
                    for k in 0..d {
                        a[r * d + k] = sub_mod(a[r * d + k], mul_mod(f, a[c * d + k], q), q);
                        inv[r * d + k] = sub_mod(inv[r * d + k], mul_mod(f, inv[c * d + k], q), q);
                    }
                }
            }
        }
        (det, Some(MatModQ { q, d, entries: inv }))
    }

    pub fn det(&self) -> u64 {
        self.euclid_reduce().0
    }

    pub fn inverse(&self) -> Option<MatModQ> {
        self.euclid_reduce().1
    }

    /// `v_p` of the residue matrix, saturating at the exponent of `p` in `q`.
    pub fn vp(&self, p: u64) -> Valuation {
        let cap = exponent_of(self.q, p);
        let pc = p.pow(cap);
        vp_mat(self.entries.iter().map(|&x| (x % pc) as i128), p, cap)
    }

    /// Matrix-vector product modulo `q`.
    pub fn apply(&self, v: &[u64]) -> Vec<u64> {
        let (q, d) = (self.q, self.d);
        (0..d)
            .map(|i| {
                (0..d).fold(0u128, |acc, k| {
                    (acc + self.entries[i * d + k] as u128 * v[k] as u128) % q as u128
                }) as u64
            })
            .collect()
    }
}

impl fmt::Display for MatModQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_rows(f, self.d, self.entries.iter())?;
        write!(f, " mod {}", self.q)
    }
}

#[inline]
fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        q - b + a
    }
}

/// `out = a·b mod q` for row-major `d×d` slices.
#[inline]
pub fn mat_mul_into(q: u64, d: usize, a: &[u64], b: &[u64], out: &mut [u64]) {
    if q <= 1 << 29 && d <= 8 {
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0u64;
                for k in 0..d {
                    acc += a[i * d + k] * b[k * d + j];
                }
                out[i * d + j] = acc % q;
            }
        }
    } else {
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0u128;
                for k in 0..d {
                    acc += a[i * d + k] as u128 * b[k * d + j] as u128;
                }
                out[i * d + j] = (acc % q as u128) as u64;
            }
        }
    }
}

fn exponent_of(mut q: u64, p: u64) -> u32 {
    let mut e = 0;
    while q % p == 0 {
        q /= p;
        e += 1;
    }
    e
}

/// `gcd(q, g − 1) = ∏ p^{min(m_p, v_p(g − 1))}`.
pub fn gcd_shift(q: &FactoredModulus, g: &MatModQ) -> u64 {
    assert_eq!(q.q(), g.modulus());
    let shifted = g.minus_identity();
    q.factors()
        .iter()
        .map(|&(p, m)| p.pow(shifted.vp(p).lower_bound().min(m)))
        .product()
}
