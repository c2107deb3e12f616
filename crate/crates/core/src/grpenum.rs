//! Enumeration of finite quotients `π_q(Γ)` of finitely generated subgroups
//! of `SL_d(Z)`, with the congruence filtration, CRT splitting, fiber
//! regularization and the first-congruence-kernel checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::modq::{gcd, mat_mul_into, FactoredModulus, IntMat, MatModQ, ModqError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("group order exceeded the cap of {cap} (reached {reached} elements)")]
    Overflow { cap: usize, reached: usize },
    #[error(transparent)]
    Modq(#[from] ModqError),
    #[error("generator {index} has determinant {det}, expected 1")]
    NotSpecialLinear { index: usize, det: i128 },
    #[error("generator {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{q1}·{q2} is not a coprime factorization of {q}")]
    NotCoprimeSplit { q1: u64, q2: u64, q: u64 },
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("prime {p} must exceed {bound}")]
    PrimeTooSmall { p: u64, bound: u64 },
    #[error("invalid regularization input: {0}")]
    Regularize(String),
    #[error("element is not in the table")]
    NotInTable,
}

/// A finite set of integer matrices of determinant 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSet {
    d: usize,
    matrices: Vec<IntMat>,
    symmetric: bool,
}

impl GeneratorSet {
    /// Validates the matrices; with `symmetric_closure` each missing inverse
    /// is inserted right after its matrix.
    pub fn new(d: usize, matrices: Vec<IntMat>, symmetric_closure: bool) -> Result<Self, GroupError> {
        for (index, m) in matrices.iter().enumerate() {
            if m.dim() != d {
                return Err(GroupError::Dimension {
                    index,
                    expected: d,
                    got: m.dim(),
                });
            }
            let det = m.det();
            if det != 1 {
                return Err(GroupError::NotSpecialLinear { index, det });
            }
        }
        let matrices = if symmetric_closure {
            let mut out: Vec<IntMat> = Vec::with_capacity(2 * matrices.len());
            for m in &matrices {
                if !out.contains(m) {
                    out.push(m.clone());
                }
                let inv = m.inverse().expect("determinant 1");
                if !out.contains(&inv) && !matrices.contains(&inv) {
                    out.push(inv);
                }
            }
            out
        } else {
            matrices
        };
        let symmetric = matrices.iter().all(|m| matrices.contains(&m.inverse().expect("det 1")));
        Ok(Self { d, matrices, symmetric })
    }

    /// `{A^{±1}, B^{±1}}` with `A = (1,1;0,1)`, `B = (1,0;1,1)`.
    pub fn standard_sl2() -> Self {
        let a = IntMat::new(2, vec![1, 1, 0, 1]).unwrap();
        let b = IntMat::new(2, vec![1, 0, 1, 1]).unwrap();
        Self::new(2, vec![a, b], true).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrices(&self) -> &[IntMat] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Closed under matrix inverse.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn reduce(&self, q: u64) -> Vec<MatModQ> {
        self.matrices.iter().map(|m| m.reduce(q)).collect()
    }

    /// Parses the text format: `d <dimension>` on the first non-comment
    /// line, then one row-major matrix per line. `#` starts a comment line.
    pub fn parse(text: &str, symmetric_closure: bool) -> Result<Self, GroupError> {
        let mut d = None;
        let mut matrices = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(dim) = d else {
                let mut it = line.split_whitespace();
                if it.next() != Some("d") {
                    return Err(GroupError::Parse {
                        line: line_no,
                        msg: "expected `d <dimension>`".into(),
                    });
                }
                let dim: usize = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| GroupError::Parse {
                        line: line_no,
                        msg: "bad dimension".into(),
                    })?;
                d = Some(dim);
                continue;
            };
            let entries: Vec<i64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|e| GroupError::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
            if entries.len() != dim * dim {
                return Err(GroupError::Parse {
                    line: line_no,
                    msg: format!("expected {} entries, found {}", dim * dim, entries.len()),
                });
            }
            matrices.push(IntMat::new(dim, entries)?);
        }
        let d = d.ok_or(GroupError::Parse {
            line: 0,
            msg: "missing dimension line".into(),
        })?;
        Self::new(d, matrices, symmetric_closure)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("d {}\n", self.d);
        for m in &self.matrices {
            let row: Vec<String> = m.entries().iter().map(|x| x.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

#[derive(Debug, Clone)]
enum ElementIndex {
    Packed { bits: u32, map: FxHashMap<u128, u32> },
    Wide(FxHashMap<Box<[u64]>, u32>),
}

impl ElementIndex {
    fn new(q: u64, d: usize) -> Self {
        let bits = 64 - q.saturating_sub(1).leading_zeros();
        if (d * d) as u32 * bits <= 128 {
            ElementIndex::Packed {
                bits,
                map: FxHashMap::default(),
            }
        } else {
            ElementIndex::Wide(FxHashMap::default())
        }
    }

    fn get(&self, entries: &[u64]) -> Option<u32> {
        match self {
            ElementIndex::Packed { bits, map } => map.get(&pack(entries, *bits)).copied(),
            ElementIndex::Wide(map) => map.get(entries).copied(),
        }
    }

    fn insert(&mut self, entries: &[u64], ordinal: u32) {
        match self {
            ElementIndex::Packed { bits, map } => {
                map.insert(pack(entries, *bits), ordinal);
            }
            ElementIndex::Wide(map) => {
                map.insert(entries.into(), ordinal);
            }
        }
    }
}

#[inline]
fn pack(entries: &[u64], bits: u32) -> u128 {
    entries.iter().fold(0u128, |acc, &x| (acc << bits) | x as u128)
}

/// The enumerated group `π_q(Γ)` in canonical order.
///
/// Ordinals follow BFS discovery from the identity under left multiplication
/// by the generators, each BFS layer sorted by canonical key.
#[derive(Debug, Clone)]
pub struct GroupTable {
    modulus: FactoredModulus,
    d: usize,
    generators: Vec<MatModQ>,
    symmetric: bool,
    entries: Vec<u64>,
    index: ElementIndex,
    gen_action: Vec<Vec<u32>>,
    word_length: Vec<u32>,
    parent: Vec<Option<(u32, u32)>>,
}

/// BFS closure of `{1}` under left multiplication by `S mod q`.
pub fn enumerate(s: &GeneratorSet, q: &FactoredModulus, cap: usize) -> Result<GroupTable, GroupError> {
    GroupTable::from_generators(s.reduce(q.q()), q.clone(), s.dim(), s.is_symmetric(), cap)
}

impl GroupTable {
    /// Enumerates the group generated by arbitrary matrices mod `q`.
    pub fn from_generators(
        generators: Vec<MatModQ>,
        modulus: FactoredModulus,
        d: usize,
        symmetric: bool,
        cap: usize,
    ) -> Result<Self, GroupError> {
        let q = modulus.q();
        let dd = d * d;
        let identity = MatModQ::identity(q, d);
        let mut index = ElementIndex::new(q, d);
        let mut entries: Vec<u64> = identity.entries().to_vec();
        index.insert(identity.entries(), 0);
        let mut word_length = vec![0u32];
        let mut parent = vec![None];
        let mut layer_start = 0usize;
        let mut depth = 0u32;
        let mut buf = vec![0u64; dd];
        loop {
            let layer_end = word_length.len();
            if layer_start == layer_end {
                break;
            }
            depth += 1;
            let mut pending: FxHashMap<Box<[u64]>, (u32, u32)> = FxHashMap::default();
            let mut order: Vec<Box<[u64]>> = Vec::new();
            for x in layer_start..layer_end {
                for (gi, g) in generators.iter().enumerate() {
                    mat_mul_into(q, d, g.entries(), &entries[x * dd..(x + 1) * dd], &mut buf);
                    if index.get(&buf).is_some() || pending.contains_key(&buf[..]) {
                        continue;
                    }
                    let key: Box<[u64]> = buf.clone().into_boxed_slice();
                    pending.insert(key.clone(), (x as u32, gi as u32));
                    order.push(key);
                }
            }
            if word_length.len() + order.len() > cap {
                return Err(GroupError::Overflow {
                    cap,
                    reached: word_length.len() + order.len(),
                });
            }
            order.sort_unstable();
            for key in order {
                let ordinal = word_length.len() as u32;
                index.insert(&key, ordinal);
                entries.extend_from_slice(&key);
                word_length.push(depth);
                parent.push(Some(pending[&key]));
            }
            layer_start = layer_end;
        }
        let n = word_length.len();
        let gen_action: Vec<Vec<u32>> = generators
            .iter()
            .map(|g| {
                (0..n)
                    .into_par_iter()
                    .map_init(
                        || vec![0u64; dd],
                        |buf, x| {
                            mat_mul_into(q, d, g.entries(), &entries[x * dd..(x + 1) * dd], buf);
                            index.get(buf).expect("closure under generators")
                        },
                    )
                    .collect()
            })
            .collect();
        Ok(Self {
            modulus,
            d,
            generators,
            symmetric,
            entries,
            index,
            gen_action,
            word_length,
            parent,
        })
    }

    pub fn len(&self) -> usize {
        self.word_length.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_length.is_empty()
    }

    pub fn modulus(&self) -> &FactoredModulus {
        &self.modulus
    }

    pub fn q(&self) -> u64 {
        self.modulus.q()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn generators(&self) -> &[MatModQ] {
        &self.generators
    }

    pub fn generators_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn element_entries(&self, x: u32) -> &[u64] {
        let dd = self.d * self.d;
        &self.entries[x as usize * dd..(x as usize + 1) * dd]
    }

    pub fn element(&self, x: u32) -> MatModQ {
        MatModQ::new(self.q(), self.d, self.element_entries(x).to_vec())
    }

    pub fn elements(&self) -> impl Iterator<Item = MatModQ> + '_ {
        (0..self.len() as u32).map(|x| self.element(x))
    }

    pub fn index_of(&self, m: &MatModQ) -> Option<u32> {
        if m.modulus() != self.q() || m.dim() != self.d {
            return None;
        }
        self.index.get(m.entries())
    }

    pub fn index_of_entries(&self, entries: &[u64]) -> Option<u32> {
        self.index.get(entries)
    }

    /// Left multiplication by generator `g`, as a permutation of ordinals.
    pub fn gen_action(&self, g: usize) -> &[u32] {
        &self.gen_action[g]
    }

    pub fn word_length(&self) -> &[u32] {
        &self.word_length
    }

    /// Generator indices `[s_1, …, s_k]` with `x = s_k ⋯ s_1` along the BFS tree.
    pub fn word_of(&self, x: u32) -> Vec<usize> {
        let mut word = Vec::new();
        let mut cur = x;
        while let Some((p, g)) = self.parent[cur as usize] {
            word.push(g as usize);
            cur = p;
        }
        word.reverse();
        word
    }

    pub fn mul(&self, x: u32, y: u32) -> u32 {
        let dd = self.d * self.d;
        let mut buf = vec![0u64; dd];
        mat_mul_into(
            self.q(),
            self.d,
            self.element_entries(x),
            self.element_entries(y),
            &mut buf,
        );
        self.index.get(&buf).expect("table is closed under multiplication")
    }

    pub fn inverse(&self, x: u32) -> u32 {
        let inv = self.element(x).inverse().expect("group elements are invertible");
        self.index_of(&inv).expect("table is closed under inverses")
    }

    /// The permutation `y ↦ h·y`, or `None` if `h·T ⊄ T`.
    pub fn left_mul_perm(&self, h: &MatModQ) -> Option<Vec<u32>> {
        let dd = self.d * self.d;
        let q = self.q();
        (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0u64; dd],
                |buf, y| {
                    mat_mul_into(q, self.d, h.entries(), self.element_entries(y as u32), buf);
                    self.index.get(buf)
                },
            )
            .collect()
    }

    /// Subgroup generated by the given elements (closure under left
    /// multiplication), as sorted ordinals.
    pub fn closure(&self, gens: &[u32]) -> Vec<u32> {
        let mut seen = vec![false; self.len()];
        seen[0] = true;
        let mut queue = VecDeque::from([0u32]);
        let mut members = vec![0u32];
        while let Some(x) = queue.pop_front() {
            for &g in gens {
                let y = self.mul(g, x);
                if !seen[y as usize] {
                    seen[y as usize] = true;
                    members.push(y);
                    queue.push_back(y);
                }
            }
        }
        members.sort_unstable();
        members
    }

    /// Class id of every element under reduction mod `q'`, plus the number of
    /// distinct images. Class ids follow first occurrence in canonical order.
    pub fn reduction_classes(&self, q_prime: u64) -> Result<(Vec<u32>, usize), GroupError> {
        if q_prime == 0 || self.q() % q_prime != 0 {
            return Err(ModqError::NotADivisor {
                divisor: q_prime,
                q: self.q(),
            }
            .into());
        }
        let mut ids: FxHashMap<Vec<u64>, u32> = FxHashMap::default();
        let classes = (0..self.len() as u32)
            .map(|x| {
                let key: Vec<u64> = self.element_entries(x).iter().map(|e| e % q_prime).collect();
                let next = ids.len() as u32;
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Ok((classes, ids.len()))
    }
}

/// `[π_q(Γ) : ker(π_q → π_{q'})] = |π_{q'}(Γ)|`.
pub fn congruence_index(t: &GroupTable, q_prime: u64) -> Result<usize, GroupError> {
    Ok(t.reduction_classes(q_prime)?.1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrtOutcome {
    pub holds: bool,
    pub order: usize,
    pub order_q1: usize,
    pub order_q2: usize,
    /// Two distinct ordinals with equal images mod `q1` and mod `q2`.
    pub collision: Option<(u32, u32)>,
}

/// Whether `x ↦ (π_{q1}(x), π_{q2}(x))` is a bijection `T → π_{q1}(T) × π_{q2}(T)`.
pub fn crt_check(t: &GroupTable, q1: u64, q2: u64) -> Result<CrtOutcome, GroupError> {
    let q = t.q();
    if q1 == 0 || q2 == 0 || gcd(q1, q2) != 1 || q1 as u128 * q2 as u128 != q as u128 {
        return Err(GroupError::NotCoprimeSplit { q1, q2, q });
    }
    let (c1, n1) = t.reduction_classes(q1)?;
    let (c2, n2) = t.reduction_classes(q2)?;
    let mut seen: FxHashMap<(u32, u32), u32> = FxHashMap::default();
    let mut collision = None;
    for x in 0..t.len() as u32 {
        if let Some(&y) = seen.get(&(c1[x as usize], c2[x as usize])) {
            collision = Some((y, x));
            break;
        }
        seen.insert((c1[x as usize], c2[x as usize]), x);
    }
    let holds = collision.is_none() && t.len() == n1 * n2;
    Ok(CrtOutcome {
        holds,
        order: t.len(),
        order_q1: n1,
        order_q2: n2,
        collision,
    })
}

/// A fiber-regular subset together with its fiber sizes `K_1, …, K_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regularized {
    pub points: Vec<Vec<u32>>,
    pub fiber_sizes: Vec<usize>,
}

/// Extracts a subset `A'` of `A ⊂ ∏_i π_{p_i}(Γ)` whose coordinate fibers
/// have constant size `K_i` at every level, working backwards from the last
/// coordinate.
///
/// At each level the fiber threshold `K` maximizes `K · #{fibers of size ≥ K}`
/// (the dyadic bucket choice is one of the candidates), every surviving fiber
/// is trimmed to its first `K` values in canonical order, and ties prefer the
/// larger `K`.
pub fn regularize(points: &[Vec<u32>], coordinate_orders: &[usize]) -> Result<Regularized, GroupError> {
    let m = coordinate_orders.len();
    if m == 0 {
        return Err(GroupError::Regularize("at least one coordinate required".into()));
    }
    if points.is_empty() {
        return Err(GroupError::Regularize("empty point set".into()));
    }
    if let Some(&n) = coordinate_orders.iter().find(|&&n| n < 3) {
        return Err(GroupError::Regularize(format!("coordinate group of order {n} < 3")));
    }
    for p in points {
        if p.len() != m || p.iter().zip(coordinate_orders).any(|(&c, &n)| c as usize >= n) {
            return Err(GroupError::Regularize(format!("point {p:?} out of range")));
        }
    }
    let mut current: BTreeSet<Vec<u32>> = points.iter().cloned().collect();
    let mut fiber_sizes = vec![0usize; m];
    for level in (0..m).rev() {
        let mut fibers: BTreeMap<&[u32], BTreeSet<u32>> = BTreeMap::new();
        for p in &current {
            fibers.entry(&p[..level]).or_default().insert(p[level]);
        }
        let mut sizes: Vec<usize> = fibers.values().map(|f| f.len()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        // sizes descending: keeping the first j fibers at threshold sizes[j-1]
        let (best_k, _) = sizes
            .iter()
            .enumerate()
            .map(|(j, &k)| (k, k * (j + 1)))
            .fold((0, 0), |best, cand| if cand.1 >= best.1 { cand } else { best });
        let keep: BTreeMap<Vec<u32>, BTreeSet<u32>> = fibers
            .into_iter()
            .filter(|(_, f)| f.len() >= best_k)
            .map(|(prefix, f)| (prefix.to_vec(), f.into_iter().take(best_k).collect()))
            .collect();
        current.retain(|p| keep.get(&p[..level]).is_some_and(|vals| vals.contains(&p[level])));
        fiber_sizes[level] = best_k;
    }
    Ok(Regularized {
        points: current.into_iter().collect(),
        fiber_sizes,
    })
}

/// Checks the exact-fiber property of a regularized set.
pub fn is_fiber_regular(points: &[Vec<u32>], fiber_sizes: &[usize]) -> bool {
    let m = fiber_sizes.len();
    for level in 0..m {
        let mut fibers: BTreeMap<&[u32], BTreeSet<u32>> = BTreeMap::new();
        for p in points {
            fibers.entry(&p[..level]).or_default().insert(p[level]);
        }
        if fibers.values().any(|f| f.len() != fiber_sizes[level]) {
            return false;
        }
    }
    points.len() == fiber_sizes.iter().product::<usize>()
}

/// Coordinates of selected elements of `T` (with `q = p_1⋯p_m` squarefree)
/// in the tables `π_{p_i}(Γ)`, and the orders of those tables.
pub fn prime_coordinates(
    t: &GroupTable,
    subset: &[u32],
    s: &GeneratorSet,
    cap: usize,
) -> Result<(Vec<Vec<u32>>, Vec<usize>), GroupError> {
    let q = t.modulus();
    if q.factors().iter().any(|&(_, e)| e > 1) {
        return Err(GroupError::Regularize(format!("modulus {q} is not squarefree")));
    }
    let tables: Vec<GroupTable> = q
        .primes()
        .map(|p| enumerate(s, &FactoredModulus::new(p)?, cap))
        .collect::<Result<_, _>>()?;
    let points = subset
        .iter()
        .map(|&x| {
            let g = t.element(x);
            tables
                .iter()
                .map(|tp| tp.index_of(&g.reduce(tp.q())).ok_or(GroupError::NotInTable))
                .collect::<Result<Vec<u32>, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok((points, tables.iter().map(|tp| tp.len()).collect()))
}

/// Whether the unipotent elements (`(g − 1)^d ≡ 0 mod p`) generate `T`.
pub fn unipotent_span_check(t: &GroupTable) -> Result<bool, GroupError> {
    let q = t.modulus();
    if !q.is_prime() {
        return Err(GroupError::NotPrime(q.q()));
    }
    let p = q.q();
    if p <= t.dim() as u64 {
        return Err(GroupError::PrimeTooSmall {
            p,
            bound: t.dim() as u64,
        });
    }
    let unipotents: Vec<u32> = (0..t.len() as u32)
        .filter(|&x| t.element(x).minus_identity().pow(t.dim() as u64).is_zero())
        .collect();
    Ok(t.closure(&unipotents).len() == t.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LieKernelReport {
    pub kernel_size: usize,
    /// `g ↦ (g − 1)/p mod p` is injective and additive on the kernel.
    pub additive: bool,
    /// `a(1 + px)a⁻¹ = 1 + p·(a x a⁻¹)` for every `a` in the table.
    pub adjoint: bool,
    pub witness: Option<MatModQ>,
}

impl LieKernelReport {
    pub fn holds(&self) -> bool {
        self.additive && self.adjoint
    }
}

/// Exhaustive check of the structure of `ker(π_{p²} → π_p)`.
pub fn lie_kernel_check(s: &GeneratorSet, p: u64, cap: usize) -> Result<LieKernelReport, GroupError> {
    let d = s.dim();
    if !crate::modq::is_prime(p) {
        return Err(GroupError::NotPrime(p));
    }
    if p <= d as u64 {
        return Err(GroupError::PrimeTooSmall { p, bound: d as u64 });
    }
    let p2 = p * p;
    let t = enumerate(s, &FactoredModulus::new(p2)?, cap)?;
    let kernel: Vec<u32> = (0..t.len() as u32)
        .filter(|&x| t.element(x).reduce(p).is_identity())
        .collect();
    // x = (g − 1)/p mod p
    let lie = |g: &MatModQ| -> MatModQ {
        let shifted = g.minus_identity();
        MatModQ::new(p, d, shifted.entries().iter().map(|&e| e / p).collect())
    };
    let images: Vec<MatModQ> = kernel.iter().map(|&x| lie(&t.element(x))).collect();
    let mut witness = None;
    let distinct: FxHashSet<&MatModQ> = images.iter().collect();
    let mut additive = distinct.len() == images.len() && images[0].is_zero();
    if !additive {
        witness = Some(t.element(kernel[0]));
    }
    'pairs: for (i, &x) in kernel.iter().enumerate() {
        if !additive {
            break;
        }
        for (j, &y) in kernel.iter().enumerate() {
            let prod = t.element(x).mul(&t.element(y));
            if lie(&prod) != images[i].add(&images[j]) {
                additive = false;
                witness = Some(prod);
                break 'pairs;
            }
        }
    }
    let one = MatModQ::identity(p2, d);
    let adjoint_failure = (0..t.len() as u32).into_par_iter().find_map_first(|a| {
        let am = t.element(a);
        let ai = am.inverse().expect("invertible");
        let (am_p, ai_p) = (am.reduce(p), ai.reduce(p));
        kernel.iter().zip(&images).find_map(|(&x, img)| {
            let lhs = am.mul(&t.element(x)).mul(&ai);
            let ad = am_p.mul(img).mul(&ai_p);
            let rhs = one.add(&ad.lift(p2).scale(p));
            (lhs != rhs).then_some(lhs)
        })
    });
    let adjoint = adjoint_failure.is_none();
    if witness.is_none() {
        witness = adjoint_failure;
    }
    Ok(LieKernelReport {
        kernel_size: kernel.len(),
        additive,
        adjoint,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force count of `d = 2` matrices with determinant 1 mod `q`.
    fn brute_sl2_order(q: u64) -> usize {
        let mut count = 0;
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    for d in 0..q {
                        if (a * d + q * q - b * c) % q == 1 % q {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    fn table(q: u64) -> GroupTable {
        enumerate(
            &GeneratorSet::standard_sl2(),
            &FactoredModulus::new(q).unwrap(),
            1 << 22,
        )
        .unwrap()
    }

    #[test]
    fn enumerate_small_moduli() {
        assert_eq!(brute_sl2_order(2), 6);
        assert_eq!(brute_sl2_order(3), 24);
        assert_eq!(table(2).len(), 6);
        assert_eq!(table(3).len(), 24);
        let t1 = table(1);
        assert_eq!(t1.len(), 1);
        assert!(t1.element(0).is_identity());
    }

    #[test]
    fn enumeration_overflow_reports_size() {
        let err = enumerate(&GeneratorSet::standard_sl2(), &FactoredModulus::new(7).unwrap(), 100).unwrap_err();
        match err {
            GroupError::Overflow { cap: 100, reached } => assert!(reached > 100),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn table_invariants() {
        let t = table(5);
        assert!(t.element(0).is_identity());
        for g in 0..t.generators().len() {
            let mut seen = vec![false; t.len()];
            for &y in t.gen_action(g) {
                assert!(!seen[y as usize]);
                seen[y as usize] = true;
            }
            for x in 0..t.len() {
                let y = t.gen_action(g)[x] as usize;
                assert!(t.word_length()[x] <= t.word_length()[y] + 1);
            }
        }
        for x in 0..t.len() as u32 {
            let word = t.word_of(x);
            assert_eq!(word.len() as u32, t.word_length()[x as usize]);
            let mut m = MatModQ::identity(5, 2);
            for g in word {
                m = t.generators()[g].mul(&m);
            }
            assert_eq!(t.index_of(&m), Some(x));
        }
    }

    #[test]
    fn canonical_order_is_deterministic() {
        let a = table(7);
        let b = table(7);
        assert!((0..a.len() as u32).all(|x| a.element(x) == b.element(x)));
        // layers are sorted by key
        for x in 1..a.len() as u32 {
            if a.word_length()[x as usize] == a.word_length()[x as usize - 1] {
                assert!(a.element(x - 1).canonical_key() < a.element(x).canonical_key());
            }
        }
    }

    #[test]
    fn congruence_index_examples() {
        let t = table(6);
        assert_eq!(t.len(), 144);
        assert_eq!(congruence_index(&t, 1).unwrap(), 1);
        assert_eq!(congruence_index(&t, 6).unwrap(), 144);
        assert_eq!(congruence_index(&t, 2).unwrap(), 6);
        assert!(congruence_index(&t, 4).is_err());
    }

    #[test]
    fn crt_examples() {
        let t = table(6);
        let out = crt_check(&t, 2, 3).unwrap();
        assert!(out.holds);
        assert_eq!((out.order, out.order_q1, out.order_q2), (144, 6, 24));
        assert!(crt_check(&t, 1, 6).unwrap().holds);
        let t4 = table(4);
        assert!(matches!(crt_check(&t4, 2, 2), Err(GroupError::NotCoprimeSplit { .. })));
    }

    #[test]
    fn crt_failure_reports_collision() {
        // cyclic group of order 6 generated by diag-free order-6 matrix mod 7·... use
        // a one-generator group mod 15 whose projections are not independent
        let g = IntMat::new(2, vec![1, 1, 0, 1]).unwrap();
        let s = GeneratorSet::new(2, vec![g], true).unwrap();
        let t = enumerate(&s, &FactoredModulus::new(15).unwrap(), 1000).unwrap();
        // unipotent cyclic group: Z/15 ≅ Z/3 × Z/5, so CRT holds
        assert!(crt_check(&t, 3, 5).unwrap().holds);
        // diagonal embedding of Z/3 in Z/3 × Z/3 (mod 9 is not coprime; use 3·7 with g of order 3 mod 7)
        let h = IntMat::new(2, vec![0, -1, 1, -1]).unwrap(); // order 3 in SL_2(Z)
        let s = GeneratorSet::new(2, vec![h], true).unwrap();
        let t = enumerate(&s, &FactoredModulus::new(35).unwrap(), 1000).unwrap();
        let out = crt_check(&t, 5, 7).unwrap();
        assert!(!out.holds);
        assert_eq!((out.order, out.order_q1, out.order_q2), (3, 3, 3));
    }

    #[test]
    fn generator_file_roundtrip() {
        let text = "# standard generators\nd 2\n1 1 0 1\n\n1 0 1 1\n";
        let s = GeneratorSet::parse(text, true).unwrap();
        assert_eq!(s, GeneratorSet::standard_sl2());
        assert!(s.is_symmetric());
        let again = GeneratorSet::parse(&s.to_text(), false).unwrap();
        assert_eq!(again, s);
        assert!(matches!(
            GeneratorSet::parse("d 2\n2 0 0 1\n", false),
            Err(GroupError::NotSpecialLinear { .. })
        ));
        assert!(matches!(
            GeneratorSet::parse("d 2\n1 1 0\n", false),
            Err(GroupError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            GeneratorSet::parse("2 2\n", false),
            Err(GroupError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn regularize_examples() {
        let whole: Vec<Vec<u32>> = (0..24).map(|x| vec![x]).collect();
        let r = regularize(&whole, &[24]).unwrap();
        assert_eq!(r.points, whole);
        assert_eq!(r.fiber_sizes, vec![24]);

        let single = vec![vec![3, 4]];
        let r = regularize(&single, &[6, 24]).unwrap();
        assert_eq!(r.points, single);
        assert_eq!(r.fiber_sizes, vec![1, 1]);

        let b = [0u32, 2, 5];
        let c = [1u32, 3, 7, 11, 20];
        let product: Vec<Vec<u32>> = b.iter().flat_map(|&x| c.iter().map(move |&y| vec![x, y])).collect();
        let r = regularize(&product, &[6, 24]).unwrap();
        assert_eq!(r.points.len(), product.len());
        assert_eq!(r.fiber_sizes, vec![3, 5]);
        assert!(is_fiber_regular(&r.points, &r.fiber_sizes));
    }

    #[test]
    fn regularize_rejects_bad_input() {
        assert!(regularize(&[], &[6]).is_err());
        assert!(regularize(&[vec![0]], &[2]).is_err());
        assert!(regularize(&[vec![7]], &[6]).is_err());
    }

    #[test]
    fn unipotent_span_examples() {
        assert!(unipotent_span_check(&table(5)).unwrap());
        assert!(unipotent_span_check(&table(7)).unwrap());
        let j = IntMat::new(2, vec![0, -1, 1, 0]).unwrap();
        let s = GeneratorSet::new(2, vec![j], true).unwrap();
        let t = enumerate(&s, &FactoredModulus::new(5).unwrap(), 100).unwrap();
        assert_eq!(t.len(), 4);
        assert!(!unipotent_span_check(&t).unwrap());
        assert!(matches!(unipotent_span_check(&table(6)), Err(GroupError::NotPrime(6))));
    }

    #[test]
    fn lie_kernel_sl2_mod_5() {
        let report = lie_kernel_check(&GeneratorSet::standard_sl2(), 5, 1 << 20).unwrap();
        assert_eq!(report.kernel_size, 125);
        assert!(report.holds(), "{report:?}");
        assert!(matches!(
            lie_kernel_check(&GeneratorSet::standard_sl2(), 2, 1 << 20),
            Err(GroupError::PrimeTooSmall { .. })
        ));
    }
}
