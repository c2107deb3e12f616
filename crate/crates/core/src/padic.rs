//! Truncated p-adic exponential and logarithm on matrices, the mod-`q`
//! exponential obtained by CRT, BCH defect measurement and the word
//! construction that turns `e^{D(x_1+⋯+x_s)}` into a group word.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::modq::{crt_combine, ipow, is_prime, FactoredModulus, IntMat, MatModQ, ModqError, Valuation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PadicError {
    #[error("series does not converge: valuation {got} is below the required {needed}")]
    Domain { needed: u32, got: Valuation },
    #[error("prime {p} does not satisfy the divisibility requirement (need valuation {needed}, found {got})")]
    Divisibility { p: u64, needed: u32, got: Valuation },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("precision p^{m} with p = {p} is out of range")]
    Precision { p: u64, m: u32 },
    #[error("precision {m} must exceed {needed}")]
    InsufficientPrecision { m: u32, needed: u32 },
    #[error("operands live in different rings")]
    Mismatch,
    #[error("word synthesis is implemented for 1 ≤ k ≤ 3, got k = {0}")]
    UnsupportedOrder(u32),
    #[error("word uses generator {index} but only {available} were supplied")]
    MissingGenerator { index: usize, available: usize },
    #[error(transparent)]
    Modq(#[from] ModqError),
}

fn delta2(p: u64) -> u32 {
    u32::from(p == 2)
}

/// Minimal valuation on which `exp` and `log` converge.
pub fn alpha(p: u64) -> u32 {
    1 + delta2(p)
}

/// Minimal valuation for the BCH estimate.
pub fn beta(p: u64) -> u32 {
    match p {
        2 => 3,
        3 => 2,
        _ => 1,
    }
}

/// A `d×d` matrix over `Z/p^m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PadicMat {
    p: u64,
    m: u32,
    mat: MatModQ,
}

fn checked_prime_power(p: u64, m: u32) -> Result<u64, PadicError> {
    if !is_prime(p) {
        return Err(PadicError::NotPrime(p));
    }
    if m == 0 {
        return Err(PadicError::Precision { p, m });
    }
    match u64::try_from(ipow(p, m)) {
        Ok(q) if q < 1 << 62 => Ok(q),
        _ => Err(PadicError::Precision { p, m }),
    }
}

impl PadicMat {
    pub fn new(p: u64, m: u32, mat: MatModQ) -> Result<Self, PadicError> {
        let q = checked_prime_power(p, m)?;
        if mat.modulus() != q {
            return Err(PadicError::Mismatch);
        }
        Ok(Self { p, m, mat })
    }

    pub fn from_int(p: u64, m: u32, x: &IntMat) -> Result<Self, PadicError> {
        let q = checked_prime_power(p, m)?;
        Ok(Self { p, m, mat: x.reduce(q) })
    }

    pub fn from_signed(p: u64, m: u32, d: usize, entries: &[i64]) -> Result<Self, PadicError> {
        let q = checked_prime_power(p, m)?;
        if entries.len() != d * d {
            return Err(ModqError::Shape {
                expected: d * d,
                got: entries.len(),
            }
            .into());
        }
        Ok(Self {
            p,
            m,
            mat: MatModQ::from_signed(q, d, entries),
        })
    }

    pub fn zero(p: u64, m: u32, d: usize) -> Result<Self, PadicError> {
        let q = checked_prime_power(p, m)?;
        Ok(Self {
            p,
            m,
            mat: MatModQ::zero(q, d),
        })
    }

    pub fn identity(p: u64, m: u32, d: usize) -> Result<Self, PadicError> {
        let q = checked_prime_power(p, m)?;
        Ok(Self {
            p,
            m,
            mat: MatModQ::identity(q, d),
        })
    }

    /// `scale · E_ij`.
    pub fn elementary(p: u64, m: u32, d: usize, i: usize, j: usize, scale: i64) -> Result<Self, PadicError> {
        let mut entries = vec![0i64; d * d];
        entries[i * d + j] = scale;
        Self::from_signed(p, m, d, &entries)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn as_mat(&self) -> &MatModQ {
        &self.mat
    }

    pub fn vp(&self) -> Valuation {
        self.mat.vp(self.p)
    }

    /// Valuation of `self − 1`.
    pub fn vp_shift(&self) -> Valuation {
        self.mat.minus_identity().vp(self.p)
    }

    fn same_ring(&self, other: &PadicMat) -> Result<(), PadicError> {
        if self.p != other.p || self.m != other.m || self.dim() != other.dim() {
            return Err(PadicError::Mismatch);
        }
        Ok(())
    }

    fn with(&self, mat: MatModQ) -> PadicMat {
        PadicMat {
            p: self.p,
            m: self.m,
            mat,
        }
    }

    pub fn mul(&self, other: &PadicMat) -> Result<PadicMat, PadicError> {
        self.same_ring(other)?;
        Ok(self.with(self.mat.mul(&other.mat)))
    }

    pub fn add(&self, other: &PadicMat) -> Result<PadicMat, PadicError> {
        self.same_ring(other)?;
        Ok(self.with(self.mat.add(&other.mat)))
    }

    pub fn sub(&self, other: &PadicMat) -> Result<PadicMat, PadicError> {
        self.same_ring(other)?;
        Ok(self.with(self.mat.sub(&other.mat)))
    }

    pub fn scale(&self, k: i64) -> PadicMat {
        self.with(self.mat.scale_signed(k))
    }

    pub fn inverse(&self) -> Option<PadicMat> {
        Some(self.with(self.mat.inverse()?))
    }

    pub fn pow_signed(&self, n: i64) -> Option<PadicMat> {
        Some(self.with(self.mat.pow_signed(n)?))
    }

    /// `a x a⁻¹` for an integer matrix of determinant ±1.
    pub fn conjugate(&self, a: &IntMat) -> Result<PadicMat, PadicError> {
        let q = self.mat.modulus();
        let a_inv = a.inverse().ok_or(PadicError::Mismatch)?;
        Ok(self.with(a.reduce(q).mul(&self.mat).mul(&a_inv.reduce(q))))
    }

    /// Reduction to a lower precision `m' ≤ m`.
    pub fn truncate(&self, m_prime: u32) -> Result<PadicMat, PadicError> {
        if m_prime > self.m {
            return Err(PadicError::InsufficientPrecision {
                m: self.m,
                needed: m_prime,
            });
        }
        let q = checked_prime_power(self.p, m_prime)?;
        Ok(PadicMat {
            p: self.p,
            m: m_prime,
            mat: self.mat.reduce(q),
        })
    }

    pub fn exp(&self) -> Result<PadicMat, PadicError> {
        exp_trunc(self)
    }

    pub fn log(&self) -> Result<PadicMat, PadicError> {
        log_trunc(self)
    }
}

impl fmt::Display for PadicMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} mod {}^{}", self.mat.centered(), self.p, self.m)
    }
}

fn check_domain(v: Valuation, needed: u32) -> Result<(), PadicError> {
    if v.is_saturated() || v.at_least(needed) {
        Ok(())
    } else {
        Err(PadicError::Domain { needed, got: v })
    }
}

/// Number of exp terms kept: the smallest `N` with `N·α − N/(p−1) ≥ m`.
fn exp_terms(p: u64, m: u32) -> u64 {
    let slope = alpha(p) as u64 * (p - 1) - 1;
    let need = m as u64 * (p - 1);
    need.div_ceil(slope).max(1)
}

/// Number of log terms kept: the smallest `N` with `N·α − ⌊log_p N⌋ ≥ m`.
fn log_terms(p: u64, m: u32) -> u64 {
    let a = alpha(p) as u64;
    (1u64..)
        .find(|&n| n * a >= m as u64 + n.ilog(p) as u64)
        .expect("unbounded search")
}

fn vp_u64(mut n: u64, p: u64) -> u32 {
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// Dense matrix arithmetic with big entries, used only inside the series.
struct WideMat {
    d: usize,
    e: Vec<BigUint>,
}

impl WideMat {
    fn from_mat(x: &MatModQ) -> Self {
        WideMat {
            d: x.dim(),
            e: x.entries().iter().map(|&v| BigUint::from(v)).collect(),
        }
    }

    fn identity(d: usize) -> Self {
        let mut e = vec![BigUint::zero(); d * d];
        for i in 0..d {
            e[i * d + i] = BigUint::one();
        }
        WideMat { d, e }
    }

    fn mul_mod(&self, other: &WideMat, modulus: &BigUint) -> WideMat {
        let d = self.d;
        let mut e = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = BigUint::zero();
                for k in 0..d {
                    acc += &self.e[i * d + k] * &other.e[k * d + j];
                }
                e.push(acc % modulus);
            }
        }
        WideMat { d, e }
    }
}

/// `Σ_{1≤n<N} c_n · y^n` where `c_n = sign_n · unit_n⁻¹ / p^{shift_n}`,
/// evaluated at working precision `p^{m + extra}` and returned mod `p^m`.
fn series<F>(y: &MatModQ, p: u64, m: u32, terms: u64, extra: u32, coeff: F) -> MatModQ
where
    F: Fn(u64) -> (bool, BigUint, u32),
{
    let d = y.dim();
    let q = y.modulus();
    let big_mod = BigUint::from(p).pow(m + extra);
    let yw = WideMat::from_mat(y);
    let mut power = WideMat::identity(d);
    let mut acc = MatModQ::zero(q, d);
    for n in 1..terms {
        power = power.mul_mod(&yw, &big_mod);
        let (negative, unit, shift) = coeff(n);
        let inv = unit.modinv(&big_mod).expect("unit part is invertible");
        let pshift = BigUint::from(p).pow(shift);
        let qb = BigUint::from(q);
        let entries: Vec<u64> = power
            .e
            .iter()
            .map(|x| {
                let t = (x * &inv) % &big_mod;
                debug_assert!((&t % &pshift).is_zero(), "term not divisible by p^{shift}");
                ((t / &pshift) % &qb).to_u64().expect("reduced below q")
            })
            .collect();
        let term = MatModQ::new(q, d, entries);
        acc = if negative { acc.sub(&term) } else { acc.add(&term) };
    }
    acc
}

/// `exp(x) = Σ x^n/n!` truncated at precision `p^m`.
pub fn exp_trunc(x: &PadicMat) -> Result<PadicMat, PadicError> {
    let (p, m) = (x.p, x.m);
    check_domain(x.vp(), alpha(p))?;
    let terms = exp_terms(p, m);
    let extra = crate::modq::vp_factorial(terms.saturating_sub(1), p) as u32;
    let factorial_units: Vec<BigUint> = (1..terms)
        .scan(BigUint::one(), |acc, n| {
            *acc *= n / p.pow(vp_u64(n, p));
            Some(acc.clone())
        })
        .collect();
    let sum = series(&x.mat, p, m, terms, extra, |n| {
        (
            false,
            factorial_units[n as usize - 1].clone(),
            crate::modq::vp_factorial(n, p) as u32,
        )
    });
    Ok(x.with(sum.add(&MatModQ::identity(sum.modulus(), x.dim()))))
}

/// `log(g) = Σ (−1)^{n−1} (g−1)^n / n` truncated at precision `p^m`.
pub fn log_trunc(g: &PadicMat) -> Result<PadicMat, PadicError> {
    let (p, m) = (g.p, g.m);
    let y = g.mat.minus_identity();
    check_domain(y.vp(p), alpha(p))?;
    let terms = log_terms(p, m);
    let extra = (1..terms).map(|n| vp_u64(n, p)).max().unwrap_or(0);
    let sum = series(&y, p, m, terms, extra, |n| {
        let shift = vp_u64(n, p);
        (n % 2 == 0, BigUint::from(n / p.pow(shift)), shift)
    });
    Ok(g.with(sum))
}

/// `v_p(log(exp x · exp y) − x − y)`; saturation signals exact additivity at
/// the working precision.
pub fn bch_defect(x: &PadicMat, y: &PadicMat) -> Result<Valuation, PadicError> {
    x.same_ring(y)?;
    let b = beta(x.p);
    let (vx, vy) = (x.vp(), y.vp());
    check_domain(vx, b)?;
    check_domain(vy, b)?;
    if let (Some(a), Some(c)) = (vx.finite(), vy.finite()) {
        if x.m <= a + c {
            return Err(PadicError::InsufficientPrecision { m: x.m, needed: a + c });
        }
    }
    let z = log_trunc(&exp_trunc(x)?.mul(&exp_trunc(y)?)?)?;
    Ok(z.sub(x)?.sub(y)?.vp())
}

/// The lower bound `v_p(x) + v_p(y) − 2δ₂(p)` on the BCH defect.
pub fn bch_bound(x: &PadicMat, y: &PadicMat) -> Option<u32> {
    Some(x.vp().finite()? + y.vp().finite()? - 2 * delta2(x.p))
}

/// Whether `a · exp(x) · a⁻¹ = exp(a x a⁻¹)` at working precision.
pub fn conj_exp_check(a: &IntMat, x: &PadicMat) -> Result<bool, PadicError> {
    let lhs = exp_trunc(x)?.conjugate(a)?;
    let rhs = exp_trunc(&x.conjugate(a)?)?;
    Ok(lhs == rhs)
}

/// Whether `trace(log g) ≡ 0`, the check available for `log g ∈ sl_d`.
pub fn log_is_traceless(g: &PadicMat) -> Result<bool, PadicError> {
    Ok(log_trunc(g)?.mat.trace() == 0)
}

/// `exp(x) mod q`, computed prime by prime and recombined by CRT.
pub fn exp_mod_q(x: &IntMat, q: &FactoredModulus) -> Result<MatModQ, PadicError> {
    if q.exponent(2) == 1 {
        return Err(ModqError::UnsupportedModulus { q: q.q() }.into());
    }
    let d = x.dim();
    let mut parts = Vec::with_capacity(q.factors().len());
    for &(p, e) in q.factors() {
        let local = PadicMat::from_int(p, e, x)?;
        let needed = alpha(p);
        let v = local.vp();
        if !(v.is_saturated() || v.at_least(needed)) {
            return Err(PadicError::Divisibility { p, needed, got: v });
        }
        parts.push((ipow(p, e) as u64, exp_trunc(&local)?.mat));
    }
    let entries = (0..d * d)
        .map(|i| {
            crt_combine(
                &parts
                    .iter()
                    .map(|(pe, mat)| (mat.entries()[i], *pe))
                    .collect::<Vec<_>>(),
            )
            .0
        })
        .collect();
    Ok(MatModQ::new(q.q(), d, entries))
}

/// A word in the free group on `a_1, …, a_s` (generators are 0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Word {
    Gen(usize),
    Mul(Vec<Word>),
    Pow(Box<Word>, i64),
    /// `[u, v] = u v u⁻¹ v⁻¹`.
    Comm(Box<Word>, Box<Word>),
}

impl Word {
    pub fn pow(self, n: i64) -> Word {
        Word::Pow(Box::new(self), n)
    }

    pub fn comm(u: Word, v: Word) -> Word {
        Word::Comm(Box::new(u), Box::new(v))
    }

    pub fn eval(&self, gens: &[PadicMat]) -> Result<PadicMat, PadicError> {
        match self {
            Word::Gen(i) => gens.get(*i).cloned().ok_or(PadicError::MissingGenerator {
                index: *i,
                available: gens.len(),
            }),
            Word::Mul(parts) => {
                let first = gens
                    .first()
                    .ok_or(PadicError::MissingGenerator { index: 0, available: 0 })?;
                let mut acc = PadicMat::identity(first.p, first.m, first.dim())?;
                for w in parts {
                    acc = acc.mul(&w.eval(gens)?)?;
                }
                Ok(acc)
            }
            Word::Pow(w, n) => w.eval(gens)?.pow_signed(*n).ok_or(PadicError::Mismatch),
            Word::Comm(u, v) => {
                let (a, b) = (u.eval(gens)?, v.eval(gens)?);
                let (ai, bi) = (
                    a.inverse().ok_or(PadicError::Mismatch)?,
                    b.inverse().ok_or(PadicError::Mismatch)?,
                );
                a.mul(&b)?.mul(&ai)?.mul(&bi)
            }
        }
    }

    /// Largest generator index used plus one.
    pub fn arity(&self) -> usize {
        match self {
            Word::Gen(i) => i + 1,
            Word::Mul(parts) => parts.iter().map(Word::arity).max().unwrap_or(0),
            Word::Pow(w, _) => w.arity(),
            Word::Comm(u, v) => u.arity().max(v.arity()),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Gen(i) => write!(f, "a{}", i + 1),
            Word::Mul(parts) if parts.is_empty() => write!(f, "1"),
            Word::Mul(parts) => {
                for (i, w) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    match w {
                        Word::Mul(_) => write!(f, "({w})")?,
                        _ => write!(f, "{w}")?,
                    }
                }
                Ok(())
            }
            Word::Pow(w, n) => match **w {
                Word::Gen(_) | Word::Comm(..) => write!(f, "{w}^{n}"),
                _ => write!(f, "({w})^{n}"),
            },
            Word::Comm(u, v) => write!(f, "[{u},{v}]"),
        }
    }
}

/// A word `w` and constant `D` with `e^{D(x_1+⋯+x_s)} ≡ w(e^{x_1},…,e^{x_s}) mod R^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesizedWord {
    pub word: Word,
    pub d_const: u64,
    pub s: usize,
    pub k: u32,
}

/// Builds the word for `k ≤ 3`.
///
/// - `k = 1`: `a_1⋯a_s`, `D = 1`.
/// - `k = 2`: `a_1²⋯a_s²`, `D = 2`. The factor 2 absorbs the `½[x, y]`
///   term at `p = 2`, where it only has valuation `2v − 1`.
/// - `k = 3`: `∏ a_i⁶ · ∏_{i<j} [a_j, a_i]^18`, `D = 6`. The powers make the
///   degree-3 BCH coefficients (denominator 12) integral and the commutators
///   cancel the degree-2 term `18 Σ_{i<j} [x_i, x_j]`.
pub fn word_synthesize(s: usize, k: u32) -> Result<SynthesizedWord, PadicError> {
    if s == 0 {
        return Err(PadicError::MissingGenerator { index: 0, available: 0 });
    }
    let gens = || (0..s).map(Word::Gen);
    let (word, d_const) = match k {
        1 => (Word::Mul(gens().collect()), 1),
        2 => (Word::Mul(gens().map(|g| g.pow(2)).collect()), 2),
        3 => {
            let mut parts: Vec<Word> = gens().map(|g| g.pow(6)).collect();
            for i in 0..s {
                for j in i + 1..s {
                    parts.push(Word::comm(Word::Gen(j), Word::Gen(i)).pow(18));
                }
            }
            (Word::Mul(parts), 6)
        }
        _ => return Err(PadicError::UnsupportedOrder(k)),
    };
    Ok(SynthesizedWord { word, d_const, s, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Independent random matrices.
    Generic,
    /// Scalar multiples of one random matrix, hence pairwise commuting.
    Commuting,
    /// All `x_i = 0`.
    Zero,
}

#[derive(Debug, Clone)]
pub struct WordTrial {
    pub p: u64,
    /// `v_p(R)`.
    pub r_valuation: u32,
    pub d: usize,
    pub trials: usize,
    pub mode: SampleMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordCheck {
    pub passed: bool,
    /// Minimum over trials of `v_p(e^{DΣx} − w(e^x))`.
    pub worst_defect: Valuation,
    /// `k · v_p(R)`.
    pub required: u32,
    pub precision: u32,
}

/// Samples `x_i ∈ p^v·gl_d` and checks the word congruence modulo `p^{kv}`,
/// at precision `(k+1)v + 1` so that defects above the target stay visible.
pub fn verify_word(word: &Word, d_const: u64, s: usize, k: u32, trial: &WordTrial) -> Result<WordCheck, PadicError> {
    let (p, v) = (trial.p, trial.r_valuation);
    if v < alpha(p) {
        return Err(PadicError::Domain {
            needed: alpha(p),
            got: Valuation::Finite(v),
        });
    }
    if word.arity() > s {
        return Err(PadicError::MissingGenerator {
            index: word.arity() - 1,
            available: s,
        });
    }
    let m = (k + 1) * v + 1;
    let q = checked_prime_power(p, m)?;
    let pv = p.pow(v);
    let mut rng = ChaCha8Rng::seed_from_u64(trial.seed);
    let d = trial.d;
    let random_mat = |rng: &mut ChaCha8Rng| {
        let entries = (0..d * d).map(|_| rng.gen_range(0..q / pv) * pv).collect();
        PadicMat {
            p,
            m,
            mat: MatModQ::new(q, d, entries),
        }
    };
    let required = k * v;
    let mut worst = Valuation::Saturated { cap: m };
    for _ in 0..trial.trials {
        let xs: Vec<PadicMat> = match trial.mode {
            SampleMode::Generic => (0..s).map(|_| random_mat(&mut rng)).collect(),
            SampleMode::Commuting => {
                let base = random_mat(&mut rng);
                (0..s).map(|_| base.scale(rng.gen_range(0..p as i64 * 8))).collect()
            }
            SampleMode::Zero => (0..s).map(|_| PadicMat::zero(p, m, d)).collect::<Result<_, _>>()?,
        };
        let mut total = PadicMat::zero(p, m, d)?;
        for x in &xs {
            total = total.add(x)?;
        }
        let lhs = exp_trunc(&total.scale(d_const as i64))?;
        let exps: Vec<PadicMat> = xs.iter().map(exp_trunc).collect::<Result<_, _>>()?;
        let rhs = word.eval(&exps)?;
        worst = worst.min(lhs.sub(&rhs)?.vp());
    }
    Ok(WordCheck {
        passed: worst.at_least(required),
        worst_defect: worst,
        required,
        precision: m,
    })
}

/// Random `x ∈ p^v · gl_d` at precision `m`.
pub fn random_padic<R: Rng>(p: u64, m: u32, d: usize, v: u32, rng: &mut R) -> Result<PadicMat, PadicError> {
    let q = checked_prime_power(p, m)?;
    if v > m {
        return Err(PadicError::InsufficientPrecision { m, needed: v });
    }
    let pv = p.pow(v);
    let entries = (0..d * d).map(|_| rng.gen_range(0..q / pv) * pv).collect();
    Ok(PadicMat {
        p,
        m,
        mat: MatModQ::new(q, d, entries),
    })
}

/// Failure counts of the exp/log identities over random admissible inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepCounts {
    pub samples: usize,
    pub roundtrip_failures: usize,
    pub isometry_failures: usize,
    pub bch_checked: usize,
    pub bch_failures: usize,
    /// Pairs whose valuations leave no room for the BCH bound at precision `m`.
    pub bch_skipped: usize,
}

impl SweepCounts {
    pub fn failures(&self) -> usize {
        self.roundtrip_failures + self.isometry_failures + self.bch_failures
    }

    pub fn merge(self, other: SweepCounts) -> SweepCounts {
        SweepCounts {
            samples: self.samples + other.samples,
            roundtrip_failures: self.roundtrip_failures + other.roundtrip_failures,
            isometry_failures: self.isometry_failures + other.isometry_failures,
            bch_checked: self.bch_checked + other.bch_checked,
            bch_failures: self.bch_failures + other.bch_failures,
            bch_skipped: self.bch_skipped + other.bch_skipped,
        }
    }
}

/// Random `x` with `v_p(x) = v` exactly (for `v < m`).
fn random_exact_valuation<R: Rng>(p: u64, m: u32, d: usize, v: u32, rng: &mut R) -> Result<PadicMat, PadicError> {
    let mut x = random_padic(p, m, d, v, rng)?;
    if v < m {
        let q = x.mat.modulus();
        let pv = p.pow(v);
        let unit = loop {
            let u = rng.gen_range(1..q / pv);
            if u % p != 0 {
                break u;
            }
        };
        let mut entries = x.mat.entries().to_vec();
        entries[rng.gen_range(0..d * d)] = unit * pv;
        x = x.with(MatModQ::new(q, d, entries));
    }
    Ok(x)
}

/// Checks `log(exp x) = x`, `v_p(exp x − 1) = v_p(x)` and the BCH bound on
/// `samples` random inputs with valuations drawn from the admissible range.
pub fn property_sweep(p: u64, m: u32, d: usize, samples: usize, seed: u64) -> Result<SweepCounts, PadicError> {
    checked_prime_power(p, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = SweepCounts {
        samples,
        ..Default::default()
    };
    let a = alpha(p);
    let b = beta(p);
    for _ in 0..samples {
        let v = rng.gen_range(a..=m.max(a));
        let x = random_exact_valuation(p, m.max(v), d, v, &mut rng)?
            .truncate(m)
            .unwrap_or(PadicMat::zero(p, m, d)?);
        let e = exp_trunc(&x)?;
        if log_trunc(&e)? != x {
            counts.roundtrip_failures += 1;
        }
        if e.vp_shift() != x.vp() {
            counts.isometry_failures += 1;
        }
        if m <= 2 * b {
            counts.bch_skipped += 1;
            continue;
        }
        let vx = rng.gen_range(b..m - b);
        let vy = rng.gen_range(b..m - vx);
        let x = random_exact_valuation(p, m, d, vx, &mut rng)?;
        let y = random_exact_valuation(p, m, d, vy, &mut rng)?;
        match bch_defect(&x, &y) {
            Ok(defect) => {
                counts.bch_checked += 1;
                let bound = bch_bound(&x, &y).expect("finite valuations");
                if !defect.at_least(bound) {
                    counts.bch_failures += 1;
                }
            }
            Err(PadicError::InsufficientPrecision { .. }) => counts.bch_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(counts)
}
