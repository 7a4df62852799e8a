//! Arithmetic in `GF(q)` for prime powers `q = p^k`, vectors of `F_q^n`, and
//! rank / affine-dimension computations.
//!
//! Field elements are integers in `[0, q)`. For extension fields the base-`p`
//! digits of an element are the coefficients of its polynomial representative
//! (lowest degree first), reduced modulo the lexicographically smallest monic
//! irreducible polynomial of degree `k`. Orders up to 256 use full lookup
//! tables; larger orders compute on the fly.
//!
//! Points of `F_q^n` are encoded as `Σ coords[i] · q^i`, so the hot paths in the
//! rest of the crate work on plain `usize` indices through [`Space`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const MAX_ORDER: u64 = 1 << 16;
const TABLE_LIMIT: u32 = 256;
const MAX_DEGREE: usize = 16;

#[derive(Debug)]
struct Tables {
    add: Vec<u16>,
    mul: Vec<u16>,
    neg: Vec<u16>,
    inv: Vec<u16>,
}

/// Arithmetic context for `GF(q)`. Immutable after construction.
pub struct FieldCtx {
    p: u32,
    k: u32,
    q: u32,
    /// Monic reduction polynomial, lowest degree first (`k + 1` entries). Empty for prime fields.
    reduction_poly: Vec<u32>,
    tables: Option<Tables>,
}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldCtx")
            .field("p", &self.p)
            .field("k", &self.k)
            .field("q", &self.q)
            .field("reduction_poly", &self.reduction_poly)
            .field("tables", &self.tables.is_some())
            .finish()
    }
}

/// Builds the arithmetic context for `GF(q)`.
pub fn make_field(q: u64) -> Result<Arc<FieldCtx>> {
    FieldCtx::new(q).map(Arc::new)
}

fn prime_power(q: u64) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let mut p = 2;
    while p * p <= q && !q.is_multiple_of(p) {
        p += 1;
    }
    if !q.is_multiple_of(p) {
        // q itself is prime
        return Some((q as u32, 1));
    }
    let (mut rest, mut k) = (q, 0);
    while rest % p == 0 {
        rest /= p;
        k += 1;
    }
    (rest == 1).then_some((p as u32, k))
}

/// Remainder of `num` modulo the monic polynomial `den` over `GF(p)`; both lowest degree first.
fn poly_rem(num: &[u32], den: &[u32], p: u32) -> Vec<u32> {
    let mut r = num.to_vec();
    let dd = den.len() - 1;
    while r.len() > dd {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - dd;
        if lead != 0 {
            for (i, &c) in den.iter().enumerate() {
                let sub = (lead as u64 * c as u64 % p as u64) as u32;
                r[shift + i] = (r[shift + i] + p - sub) % p;
            }
        }
        r.pop();
    }
    r
}

/// Monic polynomial of degree `deg` whose lower coefficients are the base-`p` digits of `code`.
fn monic_from_code(code: u64, deg: usize, p: u32) -> Vec<u32> {
    let mut c = code;
    let mut poly = Vec::with_capacity(deg + 1);
    for _ in 0..deg {
        poly.push((c % p as u64) as u32);
        c /= p as u64;
    }
    poly.push(1);
    poly
}

fn is_irreducible(poly: &[u32], p: u32) -> bool {
    let deg = poly.len() - 1;
    for d in 1..=deg / 2 {
        for code in 0..(p as u64).pow(d as u32) {
            let divisor = monic_from_code(code, d, p);
            if poly_rem(poly, &divisor, p).iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

/// Lexicographically smallest monic irreducible polynomial of degree `k` over `GF(p)`,
/// comparing coefficients from degree `k - 1` down to the constant term.
pub fn smallest_irreducible(p: u32, k: u32) -> Vec<u32> {
    let deg = k as usize;
    (0..(p as u64).pow(k))
        .map(|code| monic_from_code(code, deg, p))
        .find(|poly| is_irreducible(poly, p))
        .expect("an irreducible polynomial exists in every degree")
}

impl FieldCtx {
    pub fn new(q: u64) -> Result<Self> {
        Self::build(q, true)
    }

    pub(crate) fn build(q: u64, allow_tables: bool) -> Result<Self> {
        if q > MAX_ORDER {
            return Err(Error::NotAPrimePower(q));
        }
        let (p, k) = prime_power(q).ok_or(Error::NotAPrimePower(q))?;
        let reduction_poly = if k > 1 { smallest_irreducible(p, k) } else { Vec::new() };
        let mut ctx = FieldCtx {
            p,
            k,
            q: q as u32,
            reduction_poly,
            tables: None,
        };
        if allow_tables && ctx.q <= TABLE_LIMIT {
            ctx.tables = Some(ctx.build_tables());
        }
        Ok(ctx)
    }

    fn build_tables(&self) -> Tables {
        let q = self.q as usize;
        let mut add = vec![0u16; q * q];
        let mut mul = vec![0u16; q * q];
        for a in 0..q {
            for b in 0..q {
                add[a * q + b] = self.add_slow(a as u32, b as u32) as u16;
                mul[a * q + b] = self.mul_slow(a as u32, b as u32) as u16;
            }
        }
        let neg = (0..q).map(|a| self.neg_slow(a as u32) as u16).collect();
        let mut inv = vec![0u16; q];
        for a in 1..q {
            for b in 1..q {
                if mul[a * q + b] == 1 {
                    inv[a] = b as u16;
                    break;
                }
            }
        }
        Tables { add, mul, neg, inv }
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn order(&self) -> u32 {
        self.q
    }

    pub fn reduction_poly(&self) -> &[u32] {
        &self.reduction_poly
    }

    pub fn is_prime_field(&self) -> bool {
        self.k == 1
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    fn digits(&self, mut a: u32) -> [u32; MAX_DEGREE] {
        let mut d = [0u32; MAX_DEGREE];
        for slot in d.iter_mut().take(self.k as usize) {
            *slot = a % self.p;
            a /= self.p;
        }
        d
    }

    fn undigits(&self, d: &[u32]) -> u32 {
        d.iter().take(self.k as usize).rev().fold(0, |acc, &c| acc * self.p + c)
    }

    fn add_slow(&self, a: u32, b: u32) -> u32 {
        if self.k == 1 {
            return (a + b) % self.p;
        }
        let (da, db) = (self.digits(a), self.digits(b));
        let mut s = [0u32; MAX_DEGREE];
        for i in 0..self.k as usize {
            s[i] = (da[i] + db[i]) % self.p;
        }
        self.undigits(&s)
    }

    fn neg_slow(&self, a: u32) -> u32 {
        if self.k == 1 {
            return (self.p - a) % self.p;
        }
        let da = self.digits(a);
        let mut s = [0u32; MAX_DEGREE];
        for i in 0..self.k as usize {
            s[i] = (self.p - da[i]) % self.p;
        }
        self.undigits(&s)
    }

    fn mul_slow(&self, a: u32, b: u32) -> u32 {
        if self.k == 1 {
            return (a as u64 * b as u64 % self.p as u64) as u32;
        }
        let k = self.k as usize;
        let p = self.p as u64;
        let (da, db) = (self.digits(a), self.digits(b));
        let mut prod = [0u64; 2 * MAX_DEGREE];
        for i in 0..k {
            if da[i] == 0 {
                continue;
            }
            for j in 0..k {
                prod[i + j] = (prod[i + j] + da[i] as u64 * db[j] as u64) % p;
            }
        }
        for d in (k..2 * k - 1).rev() {
            let c = prod[d];
            if c == 0 {
                continue;
            }
            // x^k = -(lower terms of the reduction polynomial)
            for (i, &r) in self.reduction_poly.iter().take(k).enumerate() {
                let idx = d - k + i;
                prod[idx] = (prod[idx] + p - c * r as u64 % p) % p;
            }
            prod[d] = 0;
        }
        let mut out = [0u32; MAX_DEGREE];
        for i in 0..k {
            out[i] = prod[i] as u32;
        }
        self.undigits(&out)
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        match &self.tables {
            Some(t) => t.add[(a * self.q + b) as usize] as u32,
            None => self.add_slow(a, b),
        }
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        match &self.tables {
            Some(t) => t.neg[a as usize] as u32,
            None => self.neg_slow(a),
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        match &self.tables {
            Some(t) => t.mul[(a * self.q + b) as usize] as u32,
            None => self.mul_slow(a, b),
        }
    }

    pub fn pow(&self, mut a: u32, mut e: u64) -> u32 {
        let mut acc = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: u32) -> Option<u32> {
        if a == 0 {
            return None;
        }
        Some(match &self.tables {
            Some(t) => t.inv[a as usize] as u32,
            None => self.pow(a, self.q as u64 - 2),
        })
    }

    /// Image of the integer `i` in the prime subfield.
    pub fn from_int(&self, i: i64) -> u32 {
        i.rem_euclid(self.p as i64) as u32
    }
}

/// A point of `F_q^n` given by its coordinates.
#[derive(Clone, Debug)]
pub struct Vector {
    field: Arc<FieldCtx>,
    coords: Vec<u32>,
}

impl PartialEq for Vector {
    fn eq(&self, other: &Self) -> bool {
        self.field.q == other.field.q && self.coords == other.coords
    }
}

impl Eq for Vector {}

impl Vector {
    pub fn new(field: Arc<FieldCtx>, coords: Vec<u32>) -> Result<Self> {
        if let Some(&c) = coords.iter().find(|&&c| c >= field.q) {
            return Err(Error::bad(format!("coordinate {c} outside GF({})", field.q)));
        }
        Ok(Vector { field, coords })
    }

    pub fn from_index(space: &Space, index: usize) -> Self {
        Vector {
            field: space.field.clone(),
            coords: space.coords(index),
        }
    }

    pub fn field(&self) -> &Arc<FieldCtx> {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    /// Canonical index `Σ coords[i] · q^i`.
    pub fn index(&self) -> usize {
        let q = self.field.q as usize;
        self.coords.iter().rev().fold(0, |acc, &c| acc * q + c as usize)
    }

    fn check_compatible(&self, other: &Vector) -> Result<()> {
        if self.field.q != other.field.q {
            return Err(Error::FieldMismatch(self.field.q, other.field.q));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Vector, f: impl Fn(u32, u32) -> u32) -> Result<Vector> {
        self.check_compatible(other)?;
        let coords = self.coords.iter().zip(&other.coords).map(|(&a, &b)| f(a, b)).collect();
        Ok(Vector {
            field: self.field.clone(),
            coords,
        })
    }
}

pub fn vec_add(u: &Vector, v: &Vector) -> Result<Vector> {
    u.zip_with(v, |a, b| u.field.add(a, b))
}

pub fn vec_sub(u: &Vector, v: &Vector) -> Result<Vector> {
    u.zip_with(v, |a, b| u.field.sub(a, b))
}

pub fn scalar_mul(c: u32, v: &Vector) -> Result<Vector> {
    if c >= v.field.q {
        return Err(Error::bad(format!("scalar {c} outside GF({})", v.field.q)));
    }
    Ok(Vector {
        field: v.field.clone(),
        coords: v.coords.iter().map(|&a| v.field.mul(c, a)).collect(),
    })
}

/// Standard bilinear form `Σ u_i v_i`.
pub fn dot(u: &Vector, v: &Vector) -> Result<u32> {
    u.check_compatible(v)?;
    Ok(u.coords
        .iter()
        .zip(&v.coords)
        .fold(0, |acc, (&a, &b)| u.field.add(acc, u.field.mul(a, b))))
}

/// Rank of the span of `vectors`.
pub fn rank(vectors: &[Vector]) -> Result<usize> {
    let first = vectors.first().ok_or(Error::EmptySet)?;
    for v in &vectors[1..] {
        first.check_compatible(v)?;
    }
    let rows = vectors.iter().map(|v| v.coords.clone()).collect();
    Ok(row_reduce(&first.field, rows).pivots.len())
}

/// `d(F)`: the smallest dimension of an affine plane containing every point of `points`.
pub fn affine_dim(points: &[Vector]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptySet)?;
    if points.len() == 1 {
        return Ok(0);
    }
    let diffs = points[1..]
        .iter()
        .map(|x| vec_sub(x, first))
        .collect::<Result<Vec<_>>>()?;
    rank(&diffs)
}

/// Reduced row echelon form of a matrix over `GF(q)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Echelon {
    /// Nonzero rows only, each with a leading 1.
    pub rows: Vec<Vec<u32>>,
    pub pivots: Vec<usize>,
}

pub fn row_reduce(field: &FieldCtx, mut rows: Vec<Vec<u32>>) -> Echelon {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(sel) = (r..rows.len()).find(|&i| rows[i][col] != 0) else {
            continue;
        };
        rows.swap(r, sel);
        let inv = field.inv(rows[r][col]).expect("pivot is nonzero");
        for c in rows[r].iter_mut() {
            *c = field.mul(*c, inv);
        }
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            let f = row[col];
            if i == r || f == 0 {
                continue;
            }
            for (x, &p) in row.iter_mut().zip(&pivot).take(ncols) {
                *x = field.sub(*x, field.mul(f, p));
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    Echelon { rows, pivots }
}

/// The point set `F_q^n` with index-level vector arithmetic.
#[derive(Clone, Debug)]
pub struct Space {
    field: Arc<FieldCtx>,
    n: usize,
    size: usize,
    // characteristic 2: coordinate digits are bit groups and addition is XOR
    xor: bool,
}

impl Space {
    pub fn new(field: Arc<FieldCtx>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::bad("dimension n must be at least 1"));
        }
        let size = u32::try_from(n)
            .ok()
            .and_then(|n| (field.q as usize).checked_pow(n))
            .filter(|&s| s <= 1 << 40)
            .ok_or_else(|| Error::too_large("q^n", u128::MAX, 1u128 << 40))?;
        let xor = field.p == 2;
        Ok(Space { field, n, size, xor })
    }

    pub fn field(&self) -> &Arc<FieldCtx> {
        &self.field
    }

    pub fn q(&self) -> u32 {
        self.field.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of points, `q^n`.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn decode(&self, mut index: usize, out: &mut [u32]) {
        let q = self.field.q as usize;
        for c in out.iter_mut().take(self.n) {
            *c = (index % q) as u32;
            index /= q;
        }
    }

    pub fn coords(&self, index: usize) -> Vec<u32> {
        let mut out = vec![0; self.n];
        self.decode(index, &mut out);
        out
    }

    #[inline]
    pub fn encode(&self, coords: &[u32]) -> usize {
        let q = self.field.q as usize;
        coords.iter().rev().fold(0, |acc, &c| acc * q + c as usize)
    }

    #[inline]
    fn combine(&self, a: usize, b: usize, f: impl Fn(u32, u32) -> u32) -> usize {
        let q = self.field.q as usize;
        let (mut a, mut b) = (a, b);
        let (mut out, mut place) = (0, 1);
        for _ in 0..self.n {
            out += f((a % q) as u32, (b % q) as u32) as usize * place;
            a /= q;
            b /= q;
            place *= q;
        }
        out
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        if self.xor {
            return a ^ b;
        }
        self.combine(a, b, |x, y| self.field.add(x, y))
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        if self.xor {
            return a ^ b;
        }
        self.combine(a, b, |x, y| self.field.sub(x, y))
    }

    /// `a + c·b`.
    #[inline]
    pub fn axpy(&self, a: usize, c: u32, b: usize) -> usize {
        match c {
            0 => return a,
            1 => return self.add(a, b),
            _ => {}
        }
        self.combine(a, b, |x, y| self.field.add(x, self.field.mul(c, y)))
    }

    #[inline]
    pub fn scale(&self, c: u32, a: usize) -> usize {
        self.combine(0, a, |_, y| self.field.mul(c, y))
    }

    #[inline]
    pub fn dot(&self, a: usize, b: usize) -> u32 {
        let q = self.field.q as usize;
        let (mut a, mut b) = (a, b);
        let mut acc = 0;
        for _ in 0..self.n {
            acc = self.field.add(acc, self.field.mul((a % q) as u32, (b % q) as u32));
            a /= q;
            b /= q;
        }
        acc
    }

    /// Affine dimension of a set of point indices.
    pub fn affine_dim(&self, points: &[usize]) -> Result<usize> {
        let (&first, rest) = points.split_first().ok_or(Error::EmptySet)?;
        if rest.is_empty() {
            return Ok(0);
        }
        let rows = rest.iter().map(|&x| self.coords(self.sub(x, first))).collect();
        Ok(row_reduce(&self.field, rows).pivots.len())
    }
}
