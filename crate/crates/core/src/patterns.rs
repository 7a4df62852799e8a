//! The four pattern families and the counting variables `X` and `Y`.
//!
//! Patterns are unordered point sets, stored as sorted index vectors. Several
//! parameterisations of the same set (for example a 3-AP read in both
//! directions, or a parallelogram valid under more than one pairing) count once.

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::plane_count;
use crate::error::{Error, Result};
use crate::field::Space;
use crate::sampler::SampleSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    ThreeAp,
    Parallelogram,
    RightTriangle,
    Plane { m: usize },
}

impl PatternKind {
    /// Short name used on the command line and in output files.
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::ThreeAp => "3ap",
            PatternKind::Parallelogram => "pg",
            PatternKind::RightTriangle => "rt",
            PatternKind::Plane { .. } => "plane",
        }
    }

    pub fn m(&self) -> Option<usize> {
        match self {
            PatternKind::Plane { m } => Some(*m),
            _ => None,
        }
    }

    /// Parse a short name; `m` is required for planes and ignored otherwise.
    pub fn parse(name: &str, m: Option<usize>) -> Result<Self> {
        match name {
            "3ap" => Ok(PatternKind::ThreeAp),
            "pg" => Ok(PatternKind::Parallelogram),
            "rt" => Ok(PatternKind::RightTriangle),
            "plane" => m
                .map(|m| PatternKind::Plane { m })
                .ok_or_else(|| Error::bad("planes need --m")),
            other => Err(Error::bad(format!("unknown family '{other}'"))),
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("plane", m)) => {
                let m = m.parse().map_err(|_| Error::bad(format!("bad plane dimension '{m}'")))?;
                Ok(PatternKind::Plane { m })
            }
            _ => PatternKind::parse(s, None),
        }
    }
}

/// Resource limits for enumeration and exact censuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Largest `q^n` (and largest `|E|`) for brute-force kinds.
    pub max_points: usize,
    /// Largest family materialised or streamed by an enumerator.
    pub max_patterns: u64,
    /// Largest `|A|` for pairwise intersection censuses.
    pub max_pairwise: u64,
    /// Largest number of linear subspaces cached for plane counting.
    pub max_subspaces: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_points: 10_000,
            max_patterns: 50_000_000,
            max_pairwise: 20_000,
            max_subspaces: 2_000_000,
        }
    }
}

/// A pattern: its distinct points in ascending index order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pattern(pub Vec<usize>);

impl Pattern {
    pub fn points(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// An `m`-dimensional linear subspace in reduced row echelon form.
#[derive(Clone, Debug)]
pub struct Subspace {
    pub pivots: Vec<usize>,
    /// RREF basis rows as point indices.
    pub basis: Vec<usize>,
    /// All `q^m` elements, zero first.
    pub span: Vec<usize>,
    /// Place values `q^j` of the non-pivot coordinates.
    free_places: Vec<usize>,
}

impl Subspace {
    fn new(space: &Space, pivots: Vec<usize>, rows: Vec<Vec<u32>>) -> Self {
        let basis: Vec<usize> = rows.iter().map(|r| space.encode(r)).collect();
        let q = space.q();
        let mut span = vec![0usize];
        for &b in &basis {
            let mut next = Vec::with_capacity(span.len() * q as usize);
            for c in 0..q {
                next.extend(span.iter().map(|&v| space.axpy(v, c, b)));
            }
            span = next;
        }
        let free_places = (0..space.n())
            .filter(|j| !pivots.contains(j))
            .map(|j| (q as usize).pow(j as u32))
            .collect();
        Subspace {
            pivots,
            basis,
            span,
            free_places,
        }
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    /// Coset representatives with zeros in every pivot coordinate, one per coset.
    pub fn coset_reps(&self, q: u32) -> impl Iterator<Item = usize> + '_ {
        let q = q as usize;
        let count = q.pow(self.free_places.len() as u32);
        (0..count).map(move |mut c| {
            let mut idx = 0;
            for &place in &self.free_places {
                idx += (c % q) * place;
                c /= q;
            }
            idx
        })
    }

    /// The plane `rep + V` as a sorted pattern.
    pub fn plane(&self, space: &Space, rep: usize) -> Pattern {
        let mut pts: Vec<usize> = self.span.iter().map(|&v| space.add(rep, v)).collect();
        pts.sort_unstable();
        Pattern(pts)
    }
}

/// Enumerates the `m`-dimensional subspaces of `F_q^n`, one RREF basis each.
pub struct SubspaceIter<'a> {
    space: &'a Space,
    m: usize,
    pivots: Option<Vec<usize>>,
    free: Vec<(usize, usize)>,
    odometer: Vec<u32>,
}

fn free_entries(pivots: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut free = Vec::new();
    for (row, &c) in pivots.iter().enumerate() {
        for col in c + 1..n {
            if !pivots.contains(&col) {
                free.push((row, col));
            }
        }
    }
    free
}

fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let m = comb.len();
    for i in (0..m).rev() {
        if comb[i] < n - m + i {
            comb[i] += 1;
            for j in i + 1..m {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Linear subspaces of dimension `m` (0 ≤ m ≤ n) in deterministic RREF order.
pub fn subspaces(space: &Space, m: usize) -> SubspaceIter<'_> {
    let n = space.n();
    let pivots = (m <= n).then(|| (0..m).collect::<Vec<_>>());
    let free = pivots.as_deref().map_or(Vec::new(), |p| free_entries(p, n));
    SubspaceIter {
        space,
        m,
        odometer: vec![0; free.len()],
        pivots,
        free,
    }
}

impl Iterator for SubspaceIter<'_> {
    type Item = Subspace;

    fn next(&mut self) -> Option<Subspace> {
        let pivots = self.pivots.as_ref()?;
        let n = self.space.n();
        let mut rows = vec![vec![0u32; n]; self.m];
        for (row, &c) in pivots.iter().enumerate() {
            rows[row][c] = 1;
        }
        for (&(row, col), &v) in self.free.iter().zip(&self.odometer) {
            rows[row][col] = v;
        }
        let sub = Subspace::new(self.space, pivots.clone(), rows);

        let q = self.space.q();
        let mut carried = true;
        for digit in self.odometer.iter_mut() {
            *digit += 1;
            if *digit < q {
                carried = false;
                break;
            }
            *digit = 0;
        }
        if carried {
            let mut next = pivots.clone();
            if next_combination(&mut next, n) {
                self.free = free_entries(&next, n);
                self.odometer = vec![0; self.free.len()];
                self.pivots = Some(next);
            } else {
                self.pivots = None;
            }
        }
        Some(sub)
    }
}

/// All affine planes of dimension `m` (0 ≤ m ≤ n), subspace by subspace, without caps.
pub fn affine_planes(space: &Space, m: usize) -> impl Iterator<Item = Pattern> + '_ {
    subspaces(space, m).flat_map(move |sub| {
        let reps: Vec<usize> = sub.coset_reps(space.q()).collect();
        reps.into_iter().map(move |r| sub.plane(space, r))
    })
}

/// Streams every `m`-plane of `F_q^n` exactly once (1 ≤ m ≤ n − 1).
pub fn enumerate_planes<'a>(space: &'a Space, m: usize, caps: &Caps) -> Result<impl Iterator<Item = Pattern> + 'a> {
    if space.n() < 2 || m == 0 || m >= space.n() {
        return Err(Error::bad(format!("planes need 1 <= m <= n - 1 (m = {m}, n = {})", space.n())));
    }
    let count = plane_count(space.q() as u64, space.n() as u64, m as u64);
    check_count("|A(n,m)|", &count, caps.max_patterns)?;
    Ok(affine_planes(space, m))
}

fn check_count(what: &'static str, count: &num_bigint::BigUint, cap: u64) -> Result<u64> {
    match count.to_u64() {
        Some(c) if c <= cap => Ok(c),
        other => Err(Error::too_large(what, other.map_or(u128::MAX, u128::from), cap)),
    }
}

fn check_distinct(points: &[usize]) -> Result<()> {
    let duplicate = if points.len() <= 8 {
        (0..points.len()).any(|i| points[i + 1..].contains(&points[i]))
    } else {
        let mut sorted = points.to_vec();
        sorted.sort_unstable();
        sorted.windows(2).any(|w| w[0] == w[1])
    };
    if duplicate {
        return Err(Error::DuplicatePoints);
    }
    Ok(())
}

fn check_len(points: &[usize], expected: usize) -> Result<()> {
    if points.len() != expected {
        return Err(Error::WrongCardinality {
            expected,
            got: points.len(),
        });
    }
    check_distinct(points)
}

/// Some element of the 3-set is the average of the other two.
pub fn is_3ap(space: &Space, points: &[usize]) -> Result<bool> {
    if space.field().characteristic() == 2 {
        return Err(Error::CharTwo(space.q()));
    }
    check_len(points, 3)?;
    let [x, y, z] = [points[0], points[1], points[2]];
    let twice = |a| space.add(a, a);
    Ok(twice(y) == space.add(x, z) || twice(x) == space.add(y, z) || twice(z) == space.add(x, y))
}

/// Some pairing of the four points into diagonals has equal sums.
pub fn is_parallelogram(space: &Space, points: &[usize]) -> Result<bool> {
    check_len(points, 4)?;
    let [a, b, c, d] = [points[0], points[1], points[2], points[3]];
    Ok(space.add(a, b) == space.add(c, d)
        || space.add(a, c) == space.add(b, d)
        || space.add(a, d) == space.add(b, c))
}

/// Some vertex `v` has `(u − v)·(w − v) = 0` for the other two points `u, w`.
pub fn is_right_triangle(space: &Space, points: &[usize]) -> Result<bool> {
    if space.n() < 2 {
        return Err(Error::bad("right triangles need n >= 2"));
    }
    check_len(points, 3)?;
    let angle = |v, u, w| space.dot(space.sub(u, v), space.sub(w, v)) == 0;
    let [x, y, z] = [points[0], points[1], points[2]];
    Ok(angle(x, y, z) || angle(y, x, z) || angle(z, x, y))
}

/// `q^m` distinct points whose affine hull has dimension `m`.
pub fn is_plane(space: &Space, m: usize, points: &[usize]) -> Result<bool> {
    if space.n() < 2 || m == 0 || m >= space.n() {
        return Err(Error::bad(format!("planes need 1 <= m <= n - 1 (m = {m}, n = {})", space.n())));
    }
    check_len(points, (space.q() as usize).pow(m as u32))?;
    Ok(space.affine_dim(points)? == m)
}

/// Ordered-pair counts `|I_k|` (k = 0..=a) for a list of distinct `a`-point patterns,
/// including the diagonal pairs `(T, T)` in class `a`.
pub fn intersection_profile(patterns: &[Pattern], a: usize) -> Vec<u64> {
    let total = patterns.len();
    let mut incidence: HashMap<usize, Vec<u32>> = HashMap::new();
    for (id, t) in patterns.iter().enumerate() {
        for &x in t.points() {
            incidence.entry(x).or_default().push(id as u32);
        }
    }
    let mut profile = (0..total)
        .into_par_iter()
        .fold(
            || (vec![0u32; total], Vec::<u32>::new(), vec![0u64; a + 1]),
            |(mut shared, mut touched, mut hist), id| {
                for x in patterns[id].points() {
                    for &other in &incidence[x] {
                        if shared[other as usize] == 0 {
                            touched.push(other);
                        }
                        shared[other as usize] += 1;
                    }
                }
                for &other in &touched {
                    hist[shared[other as usize] as usize] += 1;
                    shared[other as usize] = 0;
                }
                touched.clear();
                (shared, touched, hist)
            },
        )
        .map(|(_, _, hist)| hist)
        .reduce(
            || vec![0u64; a + 1],
            |mut acc, h| {
                for (s, v) in acc.iter_mut().zip(h) {
                    *s += v;
                }
                acc
            },
        );
    let intersecting: u64 = profile[1..].iter().sum();
    profile[0] = (total as u64) * (total as u64) - intersecting;
    profile
}

/// One pattern family over `F_q^n`.
pub struct PatternFamily {
    space: Arc<Space>,
    kind: PatternKind,
    a: usize,
    caps: Caps,
    half: u32,
    subspaces: OnceLock<Vec<Subspace>>,
    pub(crate) size: OnceLock<num_bigint::BigUint>,
}

impl fmt::Debug for PatternFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PatternFamily")
            .field("kind", &self.kind)
            .field("q", &self.space.q())
            .field("n", &self.space.n())
            .field("a", &self.a)
            .finish()
    }
}

impl PatternFamily {
    pub fn new(space: Arc<Space>, kind: PatternKind) -> Result<Self> {
        Self::with_caps(space, kind, Caps::default())
    }

    pub fn with_caps(space: Arc<Space>, kind: PatternKind, caps: Caps) -> Result<Self> {
        let n = space.n();
        let q = space.q();
        let a = match kind {
            PatternKind::ThreeAp => {
                if space.field().characteristic() == 2 {
                    return Err(Error::CharTwo(q));
                }
                3
            }
            PatternKind::Parallelogram => 4,
            PatternKind::RightTriangle => {
                if n < 2 {
                    return Err(Error::bad("right triangles need n >= 2"));
                }
                3
            }
            PatternKind::Plane { m } => {
                if n < 2 || m == 0 || m >= n {
                    return Err(Error::bad(format!("planes need n >= 2 and 1 <= m <= n - 1 (m = {m}, n = {n})")));
                }
                (q as usize)
                    .checked_pow(m as u32)
                    .ok_or_else(|| Error::too_large("q^m", u128::MAX, usize::MAX as u128))?
            }
        };
        let half = space.field().inv(space.field().from_int(2)).unwrap_or(0);
        Ok(PatternFamily {
            space,
            kind,
            a,
            caps,
            half,
            subspaces: OnceLock::new(),
            size: OnceLock::new(),
        })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }

    pub fn q(&self) -> u32 {
        self.space.q()
    }

    pub fn n(&self) -> usize {
        self.space.n()
    }

    /// Points per pattern.
    pub fn a(&self) -> usize {
        self.a
    }

    /// `(b, c)` of the general counting framework, where it applies.
    pub fn framework_params(&self) -> Option<(u32, u32)> {
        match self.kind {
            PatternKind::ThreeAp => Some((2, 0)),
            PatternKind::Parallelogram => Some((3, 0)),
            PatternKind::RightTriangle => Some((3, 1)),
            PatternKind::Plane { .. } => None,
        }
    }

    /// Membership test for a candidate point set.
    pub fn is_member(&self, points: &[usize]) -> Result<bool> {
        match self.kind {
            PatternKind::ThreeAp => is_3ap(&self.space, points),
            PatternKind::Parallelogram => is_parallelogram(&self.space, points),
            PatternKind::RightTriangle => is_right_triangle(&self.space, points),
            PatternKind::Plane { m } => is_plane(&self.space, m, points),
        }
    }

    fn check_set(&self, set: &SampleSet) -> Result<()> {
        let s = set.space();
        if s.q() != self.q() || s.n() != self.n() {
            return Err(Error::bad(format!(
                "sample over F_{}^{} does not match family over F_{}^{}",
                s.q(),
                s.n(),
                self.q(),
                self.n()
            )));
        }
        Ok(())
    }

    fn check_brute_force(&self, len: usize) -> Result<()> {
        if len > self.caps.max_points {
            return Err(Error::too_large("|E|", len as u64, self.caps.max_points as u64));
        }
        Ok(())
    }

    /// Cached RREF subspaces for plane families.
    pub fn subspaces(&self) -> Result<&[Subspace]> {
        let PatternKind::Plane { m } = self.kind else {
            return Err(Error::bad("only plane families have subspaces"));
        };
        if let Some(s) = self.subspaces.get() {
            return Ok(s);
        }
        let g = crate::census::gaussian_binomial(self.n() as u64, m as u64, self.q() as u64)?;
        check_count("|G(n,m)|", &g, self.caps.max_subspaces)?;
        Ok(self.subspaces.get_or_init(|| subspaces(&self.space, m).collect()))
    }

    /// Calls `visit` with every pattern contained in `set`, each exactly once.
    pub fn for_each_contained(
        &self,
        set: &SampleSet,
        mut visit: impl FnMut(&[usize]) -> ControlFlow<()>,
    ) -> Result<()> {
        self.check_set(set)?;
        match self.kind {
            PatternKind::ThreeAp => self.visit_3aps(set, &mut visit),
            PatternKind::Parallelogram => self.visit_parallelograms(set, &mut visit),
            PatternKind::RightTriangle => self.visit_right_triangles(set, &mut visit),
            PatternKind::Plane { .. } => self.visit_planes(set, &mut visit),
        }
    }

    fn visit_3aps(&self, set: &SampleSet, visit: &mut impl FnMut(&[usize]) -> ControlFlow<()>) -> Result<()> {
        let pts = set.points();
        self.check_brute_force(pts.len())?;
        let space = &self.space;
        let f = space.field();
        let n = space.n();
        let coords: Vec<u32> = pts.iter().flat_map(|&x| space.coords(x)).collect();
        let mut mid = vec![0u32; n];
        let is_middle = |y: usize, x: usize, z: usize| space.add(y, y) == space.add(x, z);
        for i in 0..pts.len() {
            let ci = &coords[i * n..(i + 1) * n];
            for j in i + 1..pts.len() {
                let cj = &coords[j * n..(j + 1) * n];
                for t in 0..n {
                    mid[t] = f.mul(f.add(ci[t], cj[t]), self.half);
                }
                let y = space.encode(&mid);
                if !set.contains(y) {
                    continue;
                }
                let (x, z) = (pts[i], pts[j]);
                // count the set once, from its smallest-index middle point
                if (x < y && is_middle(x, y, z)) || (z < y && is_middle(z, x, y)) {
                    continue;
                }
                let mut tri = [x, y, z];
                tri.sort_unstable();
                if visit(&tri).is_break() {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn visit_parallelograms(
        &self,
        set: &SampleSet,
        visit: &mut impl FnMut(&[usize]) -> ControlFlow<()>,
    ) -> Result<()> {
        let pts = set.points();
        self.check_brute_force(pts.len())?;
        let space = &self.space;
        let mut pairs: Vec<(usize, usize, usize)> = Vec::with_capacity(pts.len() * pts.len() / 2);
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                pairs.push((space.add(pts[i], pts[j]), pts[i], pts[j]));
            }
        }
        pairs.sort_unstable();
        let sum = |a, b| space.add(a, b);
        for group in pairs.chunk_by(|l, r| l.0 == r.0) {
            for (g, &(_, a, b)) in group.iter().enumerate() {
                for &(_, c, d) in &group[g + 1..] {
                    // pairs sharing a sum are disjoint, so {a, b, c, d} has four points
                    let mut quad = [a, b, c, d];
                    quad.sort_unstable();
                    let [p0, p1, p2, p3] = quad;
                    // pairings: 0 = {p0p1|p2p3}, 1 = {p0p2|p1p3}, 2 = {p0p3|p1p2}
                    let partner = if a == p0 { b } else if b == p0 { a } else if c == p0 { d } else { c };
                    let found = if partner == p1 {
                        0
                    } else if partner == p2 {
                        1
                    } else {
                        2
                    };
                    let valid0 = found > 0 && sum(p0, p1) == sum(p2, p3);
                    let valid1 = found > 1 && sum(p0, p2) == sum(p1, p3);
                    if valid0 || valid1 {
                        continue;
                    }
                    if visit(&quad).is_break() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    fn visit_right_triangles(
        &self,
        set: &SampleSet,
        visit: &mut impl FnMut(&[usize]) -> ControlFlow<()>,
    ) -> Result<()> {
        let pts = set.points();
        self.check_brute_force(pts.len())?;
        let space = &self.space;
        let f = space.field();
        let n = space.n();
        let len = pts.len();
        let coords: Vec<u32> = pts.iter().flat_map(|&x| space.coords(x)).collect();
        let c = |i: usize| &coords[i * n..(i + 1) * n];
        let right_at = |v: usize, u: usize, w: usize| {
            let (cv, cu, cw) = (c(v), c(u), c(w));
            let mut acc = 0;
            for t in 0..n {
                acc = f.add(acc, f.mul(f.sub(cu[t], cv[t]), f.sub(cw[t], cv[t])));
            }
            acc == 0
        };
        let mut diffs = vec![0u32; len * n];
        for v in 0..len {
            for u in 0..len {
                for t in 0..n {
                    diffs[u * n + t] = f.sub(c(u)[t], c(v)[t]);
                }
            }
            for u in 0..len {
                if u == v {
                    continue;
                }
                let du = &diffs[u * n..(u + 1) * n];
                for w in u + 1..len {
                    if w == v {
                        continue;
                    }
                    let dw = &diffs[w * n..(w + 1) * n];
                    let mut acc = 0;
                    for t in 0..n {
                        acc = f.add(acc, f.mul(du[t], dw[t]));
                    }
                    if acc != 0 {
                        continue;
                    }
                    // count the set once, from its smallest-index right-angle vertex
                    if (u < v && right_at(u, v, w)) || (w < v && right_at(w, u, v)) {
                        continue;
                    }
                    let mut tri = [pts[v], pts[u], pts[w]];
                    tri.sort_unstable();
                    if visit(&tri).is_break() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    fn visit_planes(&self, set: &SampleSet, visit: &mut impl FnMut(&[usize]) -> ControlFlow<()>) -> Result<()> {
        let subs = self.subspaces()?;
        let space = &self.space;
        let len = set.len();
        if len < self.a {
            return Ok(());
        }
        let reps_per_subspace = space.size() / self.a;
        if len <= reps_per_subspace {
            // anchor each contained plane at its smallest point
            for x in set.points() {
                for sub in subs {
                    let inside = sub.span[1..].iter().all(|&v| {
                        let y = space.add(x, v);
                        y > x && set.contains(y)
                    });
                    if inside && visit(sub.plane(space, x).points()).is_break() {
                        return Ok(());
                    }
                }
            }
        } else {
            for sub in subs {
                for rep in sub.coset_reps(space.q()) {
                    let inside = sub.span.iter().all(|&v| set.contains(space.add(rep, v)));
                    if inside && visit(sub.plane(space, rep).points()).is_break() {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// `X`: the number of patterns contained in `set`.
    pub fn count_x(&self, set: &SampleSet) -> Result<u64> {
        let mut count = 0;
        self.for_each_contained(set, |_| {
            count += 1;
            ControlFlow::Continue(())
        })?;
        Ok(count)
    }

    /// Whether `set` contains at least one pattern.
    pub fn contains_any(&self, set: &SampleSet) -> Result<bool> {
        let mut found = false;
        self.for_each_contained(set, |_| {
            found = true;
            ControlFlow::Break(())
        })?;
        Ok(found)
    }

    /// Contained patterns in ascending lexicographic order.
    pub fn contained(&self, set: &SampleSet) -> Result<Vec<Pattern>> {
        let mut out = Vec::new();
        self.for_each_contained(set, |t| {
            out.push(Pattern(t.to_vec()));
            ControlFlow::Continue(())
        })?;
        out.sort_unstable();
        Ok(out)
    }

    /// `Y`: ordered pairs of distinct contained patterns sharing between 1 and `a − 1` points.
    pub fn count_y(&self, set: &SampleSet) -> Result<u64> {
        let inside = self.contained(set)?;
        if inside.len() < 2 {
            return Ok(0);
        }
        let profile = intersection_profile(&inside, self.a);
        Ok(profile[1..self.a].iter().sum())
    }

    /// Upper bound on `|A|` used to refuse oversized enumerations up front.
    fn size_bound(&self) -> u128 {
        let n = self.space.size() as u128;
        let q = self.q() as u128;
        match self.kind {
            PatternKind::ThreeAp => n * n.saturating_sub(1) / 2,
            PatternKind::Parallelogram => n * n.saturating_sub(1) / 2 * (n / 2) / 2 + 1,
            PatternKind::RightTriangle => n * n.saturating_sub(1) * (n / q) / 2,
            PatternKind::Plane { m } => plane_count(self.q() as u64, self.n() as u64, m as u64)
                .to_u128()
                .unwrap_or(u128::MAX),
        }
    }

    /// Every member of the family, deduplicated, in ascending lexicographic order.
    pub fn enumerate(&self) -> Result<Vec<Pattern>> {
        let bound = self.size_bound();
        if bound > self.caps.max_patterns as u128 {
            return Err(Error::too_large("|A| bound", bound, self.caps.max_patterns));
        }
        if let PatternKind::Plane { .. } = self.kind {
            let subs = self.subspaces()?;
            let mut all: Vec<Pattern> = subs
                .iter()
                .flat_map(|sub| sub.coset_reps(self.q()).map(move |r| sub.plane(&self.space, r)))
                .collect();
            all.sort_unstable();
            return Ok(all);
        }
        if self.space.size() > self.caps.max_points {
            return Err(Error::too_large("q^n", self.space.size() as u64, self.caps.max_points as u64));
        }
        self.contained(&SampleSet::full(self.space.clone())?)
    }

    /// Number of patterns through the origin, by enumeration.
    ///
    /// Every family is translation invariant, so `|A| = q^n · N_0 / a`.
    pub fn patterns_through_origin(&self) -> Result<u64> {
        let size = self.space.size();
        if let PatternKind::Plane { .. } = self.kind {
            let subs = self.subspaces()?;
            return Ok(subs.len() as u64);
        }
        if size > self.caps.max_points {
            return Err(Error::too_large("q^n", size as u64, self.caps.max_points as u64));
        }
        let space = &self.space;
        let f = space.field();
        let n = space.n();
        let (coords, norms) = if self.kind == PatternKind::RightTriangle {
            let coords: Vec<u32> = (0..size).flat_map(|x| space.coords(x)).collect();
            let norms = (0..size).map(|x| space.dot(x, x)).collect();
            (coords, norms)
        } else {
            (Vec::new(), Vec::new())
        };
        let count = (1..size)
            .into_par_iter()
            .map(|y| {
                let mut local = 0u64;
                match self.kind {
                    PatternKind::ThreeAp => {
                        for z in y + 1..size {
                            if self.is_member(&[0, y, z]).expect("distinct points") {
                                local += 1;
                            }
                        }
                    }
                    PatternKind::RightTriangle => {
                        // right angle at 0: y·z = 0; at y: y·z = y·y; at z: y·z = z·z
                        let cy = &coords[y * n..(y + 1) * n];
                        let yy: u32 = norms[y];
                        for z in y + 1..size {
                            let cz = &coords[z * n..(z + 1) * n];
                            let yz = cy.iter().zip(cz).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)));
                            if yz == 0 || yz == yy || yz == norms[z] {
                                local += 1;
                            }
                        }
                    }
                    PatternKind::Parallelogram => {
                        // y is the diagonal partner of 0; {u, w} is the other diagonal
                        for u in 1..size {
                            let w = space.sub(y, u);
                            if u == y || w <= u || w == y {
                                continue;
                            }
                            let mut quad = [0, y, u, w];
                            quad.sort_unstable();
                            let [p0, p1, p2, p3] = quad;
                            let found = if y == p1 {
                                0
                            } else if y == p2 {
                                1
                            } else {
                                2
                            };
                            let s = |a, b| space.add(a, b);
                            if (found > 0 && s(p0, p1) == s(p2, p3)) || (found > 1 && s(p0, p2) == s(p1, p3)) {
                                continue;
                            }
                            local += 1;
                        }
                    }
                    PatternKind::Plane { .. } => unreachable!(),
                }
                local
            })
            .sum();
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_field;
    use itertools::Itertools;
    use proptest::prelude::*;

    fn space(q: u64, n: usize) -> Arc<Space> {
        Arc::new(Space::new(make_field(q).unwrap(), n).unwrap())
    }

    fn idx(space: &Space, coords: &[u32]) -> usize {
        space.encode(coords)
    }

    fn pts(space: &Space, list: &[&[u32]]) -> Vec<usize> {
        list.iter().map(|c| idx(space, c)).collect()
    }

    fn family(q: u64, n: usize, kind: PatternKind) -> PatternFamily {
        PatternFamily::new(space(q, n), kind).unwrap()
    }

    fn brute_force(fam: &PatternFamily, set: &SampleSet) -> Vec<Pattern> {
        set.points()
            .into_iter()
            .combinations(fam.a())
            .filter(|c| fam.is_member(c).unwrap())
            .map(Pattern)
            .collect()
    }

    #[test]
    fn family_validation() {
        assert_eq!(
            PatternFamily::new(space(4, 2), PatternKind::ThreeAp).unwrap_err(),
            Error::CharTwo(4)
        );
        assert!(PatternFamily::new(space(3, 1), PatternKind::RightTriangle).is_err());
        assert!(PatternFamily::new(space(2, 2), PatternKind::Plane { m: 2 }).is_err());
        assert!(PatternFamily::new(space(2, 2), PatternKind::Plane { m: 0 }).is_err());
        let pl = family(3, 3, PatternKind::Plane { m: 2 });
        assert_eq!(pl.a(), 9);
        assert_eq!(pl.framework_params(), None);
        assert_eq!(family(3, 2, PatternKind::ThreeAp).framework_params(), Some((2, 0)));
        assert_eq!(family(3, 2, PatternKind::Parallelogram).framework_params(), Some((3, 0)));
        assert_eq!(family(3, 2, PatternKind::RightTriangle).framework_params(), Some((3, 1)));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("3ap".parse::<PatternKind>().unwrap(), PatternKind::ThreeAp);
        assert_eq!("plane:2".parse::<PatternKind>().unwrap(), PatternKind::Plane { m: 2 });
        assert_eq!(PatternKind::parse("plane", Some(1)).unwrap(), PatternKind::Plane { m: 1 });
        assert!(PatternKind::parse("plane", None).is_err());
        assert!("square".parse::<PatternKind>().is_err());
    }

    #[test]
    fn three_ap_predicate() {
        let s3 = space(3, 2);
        assert!(is_3ap(&s3, &pts(&s3, &[&[0, 0], &[1, 1], &[2, 2]])).unwrap());
        assert!(!is_3ap(&s3, &pts(&s3, &[&[0, 0], &[1, 0], &[0, 1]])).unwrap());
        let s5 = space(5, 2);
        assert!(is_3ap(&s5, &pts(&s5, &[&[0, 0], &[1, 0], &[2, 0]])).unwrap());
        assert_eq!(is_3ap(&space(2, 2), &[0, 1, 2]).unwrap_err(), Error::CharTwo(2));
        assert_eq!(is_3ap(&s3, &[0, 1, 1]).unwrap_err(), Error::DuplicatePoints);
    }

    #[test]
    fn parallelogram_predicate() {
        let s3 = space(3, 2);
        assert!(is_parallelogram(&s3, &pts(&s3, &[&[0, 0], &[1, 0], &[0, 1], &[1, 1]])).unwrap());
        let s2 = space(2, 2);
        assert!(is_parallelogram(&s2, &pts(&s2, &[&[0, 0], &[0, 1], &[1, 0], &[1, 1]])).unwrap());
        let s5 = space(5, 2);
        assert!(!is_parallelogram(&s5, &pts(&s5, &[&[0, 0], &[1, 0], &[2, 0], &[0, 1]])).unwrap());
        assert_eq!(is_parallelogram(&s5, &[0, 1, 2, 2]).unwrap_err(), Error::DuplicatePoints);
    }

    #[test]
    fn right_triangle_predicate() {
        let s3 = space(3, 2);
        assert!(is_right_triangle(&s3, &pts(&s3, &[&[0, 0], &[1, 0], &[0, 1]])).unwrap());
        // {(0,0),(1,1),(2,0)} over F_5: at (1,1) the edges are (-1,-1),(1,-1), dot = -1 + 1 = 0.
        let s5 = space(5, 2);
        assert!(is_right_triangle(&s5, &pts(&s5, &[&[0, 0], &[1, 1], &[2, 0]])).unwrap());
        assert!(!is_right_triangle(&s5, &pts(&s5, &[&[0, 0], &[1, 0], &[2, 1]])).unwrap());
        assert!(is_right_triangle(&space(5, 1), &[0, 1, 2]).is_err());
    }

    #[test]
    fn plane_predicate() {
        let s3 = space(3, 2);
        assert!(is_plane(&s3, 1, &pts(&s3, &[&[0, 0], &[1, 0], &[2, 0]])).unwrap());
        assert!(!is_plane(&s3, 1, &pts(&s3, &[&[0, 0], &[1, 0], &[0, 1]])).unwrap());
        assert!(is_plane(&space(2, 2), 2, &[0, 1, 2, 3]).is_err());
        assert_eq!(
            is_plane(&s3, 1, &[0, 1]).unwrap_err(),
            Error::WrongCardinality { expected: 3, got: 2 }
        );
    }

    #[test]
    fn small_family_enumerations() {
        let pg = family(2, 2, PatternKind::Parallelogram).enumerate().unwrap();
        assert_eq!(pg, vec![Pattern(vec![0, 1, 2, 3])]);
        let aps = family(3, 2, PatternKind::ThreeAp).enumerate().unwrap();
        assert_eq!(aps.len(), 12);
        let lines = family(2, 2, PatternKind::Plane { m: 1 }).enumerate().unwrap();
        assert_eq!(lines.len(), 6);
        assert!(lines.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn plane_enumeration_counts() {
        let caps = Caps::default();
        let s = space(2, 2);
        let planes: Vec<Pattern> = enumerate_planes(&s, 1, &caps).unwrap().collect();
        assert_eq!(planes.len(), 6);
        assert!(planes.iter().all(|p| p.len() == 2));
        assert_eq!(enumerate_planes(&space(3, 2), 1, &caps).unwrap().count(), 12);
        let s = space(2, 4);
        let all: Vec<Pattern> = enumerate_planes(&s, 2, &caps).unwrap().collect();
        assert_eq!(all.len(), 140);
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 140);
        for p in &all {
            assert_eq!(p.len(), 4);
            assert_eq!(s.affine_dim(p.points()).unwrap(), 2);
        }
        assert!(enumerate_planes(&s, 4, &caps).is_err());
        let tight = Caps {
            max_patterns: 100,
            ..caps
        };
        assert!(enumerate_planes(&s, 2, &tight).is_err_and(|e| e.is_cap()));
    }

    #[test]
    fn subspace_counts_small() {
        let s = space(2, 4);
        assert_eq!(subspaces(&s, 0).count(), 1);
        assert_eq!(subspaces(&s, 1).count(), 15);
        assert_eq!(subspaces(&s, 2).count(), 35);
        assert_eq!(subspaces(&s, 4).count(), 1);
        assert_eq!(subspaces(&s, 5).count(), 0);
    }

    #[test]
    fn count_x_examples() {
        let s2 = space(2, 2);
        let pg = PatternFamily::new(s2.clone(), PatternKind::Parallelogram).unwrap();
        assert_eq!(pg.count_x(&SampleSet::empty(s2.clone()).unwrap()).unwrap(), 0);
        assert_eq!(pg.count_x(&SampleSet::full(s2).unwrap()).unwrap(), 1);
        let s3 = space(3, 2);
        let ap = PatternFamily::new(s3.clone(), PatternKind::ThreeAp).unwrap();
        let e = SampleSet::from_points(s3.clone(), pts(&s3, &[&[0, 0], &[1, 1], &[2, 2]])).unwrap();
        assert_eq!(ap.count_x(&e).unwrap(), 1);
        assert_eq!(ap.count_y(&e).unwrap(), 0);
        let other = SampleSet::empty(space(3, 3)).unwrap();
        assert!(ap.count_x(&other).is_err());
    }

    #[test]
    fn count_y_full_plane_of_3aps() {
        // Oracle: the 12 lines of F_3^2, pairs sharing exactly one point.
        let s3 = space(3, 2);
        let ap = PatternFamily::new(s3.clone(), PatternKind::ThreeAp).unwrap();
        let lines = brute_force(&ap, &SampleSet::full(s3.clone()).unwrap());
        let mut oracle = 0;
        for t in &lines {
            for u in &lines {
                let shared = t.points().iter().filter(|x| u.points().contains(x)).count();
                if (1..3).contains(&shared) {
                    oracle += 1;
                }
            }
        }
        // Each line meets the 9 lines of the other three directions in one point.
        assert_eq!(oracle, 12 * 9);
        assert_eq!(ap.count_y(&SampleSet::full(s3).unwrap()).unwrap(), oracle);
    }

    #[test]
    fn intersection_profile_matches_pairwise_scan() {
        for (q, n, kind) in [
            (3u64, 2usize, PatternKind::ThreeAp),
            (2, 3, PatternKind::Parallelogram),
            (3, 2, PatternKind::RightTriangle),
            (2, 4, PatternKind::Plane { m: 2 }),
        ] {
            let fam = family(q, n, kind);
            let all = fam.enumerate().unwrap();
            let mut oracle = vec![0u64; fam.a() + 1];
            for t in &all {
                for u in &all {
                    oracle[t.points().iter().filter(|x| u.points().contains(x)).count()] += 1;
                }
            }
            assert_eq!(intersection_profile(&all, fam.a()), oracle);
        }
    }

    fn all_configs() -> Vec<(u64, usize, PatternKind)> {
        let mut out = Vec::new();
        for q in [2u64, 3, 4, 5, 7, 8, 9] {
            for n in 1..=6usize {
                if (q as usize).pow(n as u32) > 81 {
                    break;
                }
                if q % 2 == 1 {
                    out.push((q, n, PatternKind::ThreeAp));
                }
                out.push((q, n, PatternKind::Parallelogram));
                if n >= 2 {
                    out.push((q, n, PatternKind::RightTriangle));
                    for m in 1..n {
                        if (q as usize).pow(m as u32) <= 4 {
                            out.push((q, n, PatternKind::Plane { m }));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn enumeration_equals_filtered_subsets() {
        for (q, n, kind) in all_configs() {
            let fam = family(q, n, kind);
            if (q as usize).pow(n as u32) > 27 && fam.a() == 4 {
                continue;
            }
            let full = SampleSet::full(fam.space().clone()).unwrap();
            assert_eq!(fam.enumerate().unwrap(), brute_force(&fam, &full), "q={q} n={n} {kind}");
        }
    }

    #[test]
    fn origin_count_matches_enumeration() {
        for (q, n, kind) in all_configs() {
            let fam = family(q, n, kind);
            let Ok(all) = fam.enumerate() else { continue };
            let through_origin = all.iter().filter(|t| t.points()[0] == 0).count() as u64;
            assert_eq!(fam.patterns_through_origin().unwrap(), through_origin, "q={q} n={n} {kind}");
            assert_eq!(
                fam.space().size() as u64 * through_origin,
                fam.a() as u64 * all.len() as u64
            );
        }
    }

    #[test]
    fn anchored_and_full_plane_counts_agree() {
        let fam = family(2, 5, PatternKind::Plane { m: 2 });
        let s = fam.space().clone();
        for t in 0..30 {
            let e = crate::sampler::sample_bernoulli(s.clone(), 0.6, 4, t).unwrap();
            let anchored = fam.count_x(&e).unwrap();
            let oracle = fam
                .enumerate()
                .unwrap()
                .iter()
                .filter(|p| p.points().iter().all(|&x| e.contains(x)))
                .count() as u64;
            assert_eq!(anchored, oracle);
            // small sets take the anchored path
            let few = SampleSet::from_points(s.clone(), e.points().into_iter().take(7)).unwrap();
            let oracle_few = fam
                .enumerate()
                .unwrap()
                .iter()
                .filter(|p| p.points().iter().all(|&x| few.contains(x)))
                .count() as u64;
            assert_eq!(fam.count_x(&few).unwrap(), oracle_few);
        }
    }

    #[test]
    fn contains_any_matches_count() {
        let fam = family(5, 2, PatternKind::ThreeAp);
        for t in 0..40 {
            let e = crate::sampler::sample_bernoulli(fam.space().clone(), 0.15, 9, t).unwrap();
            assert_eq!(fam.contains_any(&e).unwrap(), fam.count_x(&e).unwrap() > 0);
        }
    }

    fn random_invertible(space: &Space, seed: u64) -> Vec<Vec<u32>> {
        let n = space.n();
        let q = space.q() as u64;
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        loop {
            let m: Vec<Vec<u32>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            state ^= state << 13;
                            state ^= state >> 7;
                            state ^= state << 17;
                            (state % q) as u32
                        })
                        .collect()
                })
                .collect();
            if crate::field::row_reduce(space.field(), m.clone()).pivots.len() == n {
                return m;
            }
        }
    }

    fn apply(space: &Space, mat: &[Vec<u32>], shift: usize, x: usize) -> usize {
        let f = space.field();
        let c = space.coords(x);
        let y: Vec<u32> = mat
            .iter()
            .map(|row| row.iter().zip(&c).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b))))
            .collect();
        space.add(space.encode(&y), shift)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn affine_maps_preserve_aps_and_parallelograms(
            q in prop::sample::select(vec![3u64, 5, 7, 9]),
            seed in any::<u64>(),
            raw in prop::collection::vec(any::<u32>(), 4),
            shift in any::<u32>(),
        ) {
            let s = space(q, 2);
            let size = s.size();
            let mut p: Vec<usize> = raw.iter().map(|&r| r as usize % size).collect();
            p.sort_unstable();
            p.dedup();
            prop_assume!(p.len() == 4);
            let mat = random_invertible(&s, seed);
            let w = shift as usize % size;
            let img: Vec<usize> = p.iter().map(|&x| apply(&s, &mat, w, x)).collect();
            prop_assert_eq!(is_3ap(&s, &p[..3]).unwrap(), is_3ap(&s, &img[..3]).unwrap());
            prop_assert_eq!(is_parallelogram(&s, &p).unwrap(), is_parallelogram(&s, &img).unwrap());
        }

        #[test]
        fn right_triangles_invariant_under_translation_and_permutation(
            q in prop::sample::select(vec![2u64, 3, 4, 5, 7]),
            raw in prop::collection::vec(any::<u32>(), 3),
            shift in any::<u32>(),
        ) {
            let s = space(q, 3);
            let size = s.size();
            let mut p: Vec<usize> = raw.iter().map(|&r| r as usize % size).collect();
            p.sort_unstable();
            p.dedup();
            prop_assume!(p.len() == 3);
            let w = shift as usize % size;
            let moved: Vec<usize> = p.iter().map(|&x| s.add(x, w)).collect();
            let rt = is_right_triangle(&s, &p).unwrap();
            prop_assert_eq!(rt, is_right_triangle(&s, &moved).unwrap());
            // cyclic coordinate permutation
            let perm: Vec<usize> = p
                .iter()
                .map(|&x| {
                    let mut c = s.coords(x);
                    c.rotate_left(1);
                    s.encode(&c)
                })
                .collect();
            prop_assert_eq!(rt, is_right_triangle(&s, &perm).unwrap());
        }

        #[test]
        fn count_x_is_monotone(
            q in prop::sample::select(vec![3u64, 5]),
            seed in any::<u64>(),
            d in 0.05f64..0.6,
        ) {
            for kind in [PatternKind::ThreeAp, PatternKind::Parallelogram, PatternKind::RightTriangle] {
                let fam = family(q, 2, kind);
                let sets = crate::sampler::coupled_sweep(fam.space().clone(), &[d, (d + 0.3).min(1.0)], seed, 0).unwrap();
                prop_assert!(fam.count_x(&sets[0]).unwrap() <= fam.count_x(&sets[1]).unwrap());
            }
        }
    }
}
