//! Exact counts: family sizes, Gaussian binomials, intersection classes `I_k`,
//! expectations, threshold functions and second-moment diagnostics.

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::patterns::{intersection_profile, PatternFamily, PatternKind};

/// Number of `m`-dimensional linear subspaces of `F_q^n`.
pub fn gaussian_binomial(n: u64, m: u64, q: u64) -> Result<BigUint> {
    if m > n {
        return Err(Error::bad(format!("gaussian binomial needs m <= n (m = {m}, n = {n})")));
    }
    if q < 2 {
        return Err(Error::bad(format!("gaussian binomial needs q >= 2 (q = {q})")));
    }
    let q = BigUint::from(q);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..m as u32 {
        let qi = q.pow(i);
        num *= q.pow(n as u32) - &qi;
        den *= q.pow(m as u32) - &qi;
    }
    debug_assert!((&num % &den).is_zero());
    Ok(num / den)
}

/// `|A(n,m)| = |G(n,m)| q^{n−m}`, zero when `m > n`.
pub fn plane_count(q: u64, n: u64, m: u64) -> BigUint {
    match gaussian_binomial(n, m, q) {
        Ok(g) => g * BigUint::from(q).pow((n - m) as u32),
        Err(_) => BigUint::zero(),
    }
}

/// Exact `|A|`.
///
/// Planes use the closed formula. The other families are translation invariant,
/// so `|A| = q^n · N_0 / a` with `N_0` the patterns through the origin.
pub fn family_size(family: &PatternFamily) -> Result<BigUint> {
    if let Some(size) = family.size.get() {
        return Ok(size.clone());
    }
    let size = count_family(family)?;
    Ok(family.size.get_or_init(|| size).clone())
}

fn count_family(family: &PatternFamily) -> Result<BigUint> {
    let (q, n) = (family.q() as u64, family.n() as u64);
    if let PatternKind::Plane { m } = family.kind() {
        return Ok(plane_count(q, n, m as u64));
    }
    let through_origin = family.patterns_through_origin()?;
    let total = BigUint::from(family.space().size()) * through_origin;
    debug_assert!((&total % family.a()).is_zero());
    Ok(total / family.a())
}

/// Ordered-pair counts `|I_k|` for `k = 0..=a` over the whole family.
pub fn intersection_census(family: &PatternFamily) -> Result<Vec<u64>> {
    let size = family_size(family)?;
    let cap = family.caps().max_pairwise;
    match size.to_u64() {
        Some(s) if s <= cap => {}
        other => return Err(Error::too_large("|A| for pairwise census", other.map_or(u128::MAX, u128::from), cap)),
    }
    let all = family.enumerate()?;
    Ok(intersection_profile(&all, family.a()))
}

/// `E(X) = |A| δ^a`.
pub fn expected_x(size: &BigUint, a: usize, delta: f64) -> f64 {
    size.to_f64().unwrap_or(f64::INFINITY) * delta.powi(a as i32)
}

/// `E(Y) = Σ_{k=1}^{a−1} |I_k| δ^{2a−k}`.
pub fn expected_y(census: &[u64], delta: f64) -> f64 {
    let a = census.len() - 1;
    (1..a)
        .map(|k| census[k] as f64 * delta.powi((2 * a - k) as i32))
        .sum()
}

/// `E(X)` for a family, computing `|A|` on the way.
pub fn family_expected_x(family: &PatternFamily, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(expected_x(&family_size(family)?, family.a(), delta))
}

/// `E(Y)` for a family, computing the intersection census on the way.
pub fn family_expected_y(family: &PatternFamily, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(expected_y(&intersection_census(family)?, delta))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::bad(format!("delta must lie in [0, 1] (got {delta})")));
    }
    Ok(())
}

/// Threshold function `t(n,q)`.
pub fn threshold(kind: PatternKind, q: u32, n: usize) -> f64 {
    let (q, n) = (q as f64, n as f64);
    let exponent = match kind {
        PatternKind::ThreeAp => -2.0 * n / 3.0,
        PatternKind::RightTriangle => -n + 1.0 / 3.0,
        PatternKind::Parallelogram => -3.0 * n / 4.0,
        PatternKind::Plane { m } => -((m + 1) as f64) * n / q.powi(m as i32),
    };
    q.powf(exponent)
}

/// `δ` at which `E(X) = λ`.
pub fn delta_for_mean(size: &BigUint, a: usize, lambda: f64) -> f64 {
    (lambda / size.to_f64().unwrap_or(f64::INFINITY)).powf(1.0 / a as f64)
}

fn ser_big<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v.to_u64() {
        Some(x) => s.serialize_u64(x),
        None => s.serialize_str(&v.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ratios {
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    /// `q^{−n(k+1)} δ^{−q^k}` for `k = 0..m−1`; planes only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plane_terms: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusReport {
    pub family: String,
    pub q: u32,
    pub n: usize,
    pub m: Option<usize>,
    pub a: usize,
    pub b: Option<u32>,
    pub c: Option<u32>,
    pub delta: f64,
    #[serde(rename = "A_size", serialize_with = "ser_big")]
    pub a_size: BigUint,
    #[serde(rename = "I")]
    pub intersections: Vec<u64>,
    #[serde(rename = "E_X")]
    pub e_x: f64,
    #[serde(rename = "E_Y")]
    pub e_y: f64,
    pub t: f64,
    pub ratios: Ratios,
}

impl CensusReport {
    /// One `(k, |I_k|)` row per intersection size.
    pub fn csv_rows(&self) -> Vec<[String; 6]> {
        let m = self.m.map(|m| m.to_string()).unwrap_or_default();
        self.intersections
            .iter()
            .enumerate()
            .map(|(k, v)| {
                [
                    self.family.clone(),
                    self.q.to_string(),
                    self.n.to_string(),
                    m.clone(),
                    k.to_string(),
                    v.to_string(),
                ]
            })
            .collect()
    }

    pub const CSV_HEADER: [&'static str; 6] = ["family", "q", "n", "m", "k", "I_k"];
}

/// Full census with second-moment ratios at `δ`.
pub fn condition_report(family: &PatternFamily, delta: f64) -> Result<CensusReport> {
    check_delta(delta)?;
    let a_size = family_size(family)?;
    let census = intersection_census(family)?;
    let a = family.a();
    let (q, n) = (family.q(), family.n());
    let e_x = expected_x(&a_size, a, delta);
    let e_y = expected_y(&census, delta);
    let total = a_size.to_f64().unwrap_or(f64::INFINITY);
    let plane_terms = family.kind().m().map(|m| {
        (0..m)
            .map(|k| {
                let qk = (q as f64).powi(k as i32);
                (q as f64).powf(-((n * (k + 1)) as f64)) * delta.powf(-qk)
            })
            .collect()
    });
    let (b, c) = family.framework_params().unzip();
    Ok(CensusReport {
        family: family.kind().name().to_string(),
        q,
        n,
        m: family.kind().m(),
        a,
        b,
        c,
        delta,
        a_size,
        ratios: Ratios {
            c1: census[0] as f64 / (total * total),
            c2: if e_x > 0.0 { e_y / (e_x * e_x) } else { f64::NAN },
            plane_terms,
        },
        intersections: census,
        e_x,
        e_y,
        t: threshold(family.kind(), q, n),
    })
}

/// Probability that a fixed `f`-point set lies in a uniform random `M`-subset of `F_q^n`.
pub fn er_containment_prob(q: u64, n: u32, big_m: u64, f: u64) -> Result<Ratio<BigUint>> {
    let size = BigUint::from(q).pow(n);
    let big_m_b = BigUint::from(big_m);
    if big_m_b > size || f > big_m {
        return Err(Error::bad(format!(
            "containment probability needs f <= M <= q^n (f = {f}, M = {big_m}, q^n = {size})"
        )));
    }
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..f {
        num *= &big_m_b - i;
        den *= &size - i;
    }
    Ok(Ratio::new(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_field, Space};
    use crate::patterns::{affine_planes, subspaces, Caps, Pattern};
    use itertools::Itertools;
    use std::sync::Arc;

    fn family(q: u64, n: usize, kind: PatternKind) -> PatternFamily {
        let space = Arc::new(Space::new(make_field(q).unwrap(), n).unwrap());
        PatternFamily::new(space, kind).unwrap()
    }

    fn big(x: u64) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_binomial(2, 1, 2).unwrap(), big(3));
        assert_eq!(gaussian_binomial(4, 2, 2).unwrap(), big(35));
        assert_eq!(gaussian_binomial(7, 0, 5).unwrap(), big(1));
        assert_eq!(gaussian_binomial(2, 1, 3).unwrap(), big(4));
        assert!(gaussian_binomial(2, 3, 2).is_err());
        // beyond 64 bits
        let huge = gaussian_binomial(40, 20, 2).unwrap();
        assert!(huge.bits() > 64);
        assert_eq!(huge, gaussian_binomial(40, 20, 2).unwrap());
    }

    #[test]
    fn gaussian_symmetry_and_rref() {
        for q in [2u64, 3, 4, 5] {
            for n in 0..=6u64 {
                for m in 0..=n {
                    let g = gaussian_binomial(n, m, q).unwrap();
                    assert_eq!(g, gaussian_binomial(n, n - m, q).unwrap());
                    if n >= 1 && g <= big(20_000) {
                        let space = Space::new(make_field(q).unwrap(), n as usize).unwrap();
                        assert_eq!(big(subspaces(&space, m as usize).count() as u64), g, "q={q} n={n} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn family_size_examples() {
        assert_eq!(family_size(&family(3, 2, PatternKind::Plane { m: 1 })).unwrap(), big(12));
        assert_eq!(family_size(&family(3, 2, PatternKind::ThreeAp)).unwrap(), big(12));
        assert_eq!(family_size(&family(2, 4, PatternKind::Plane { m: 2 })).unwrap(), big(140));
        assert_eq!(family_size(&family(2, 2, PatternKind::Parallelogram)).unwrap(), big(1));
    }

    #[test]
    fn three_ap_closed_form() {
        // Lines through pairs: N(N-1)/2 ordered midpoints, or N(N-1)/6 in characteristic 3.
        for (q, n) in [(5u64, 2usize), (5, 3), (7, 2), (3, 2), (3, 3), (9, 2)] {
            let size = q.pow(n as u32);
            let expected = if q % 3 == 0 { size * (size - 1) / 6 } else { size * (size - 1) / 2 };
            assert_eq!(family_size(&family(q, n, PatternKind::ThreeAp)).unwrap(), big(expected));
        }
    }

    #[test]
    fn right_triangles_f7_squared() {
        // No isotropic vectors in F_7^2: at each vertex v and each u != v the orthogonal
        // line through v meets 6 further points, so 49·48·6/2 triangles, none counted twice.
        assert_eq!(family_size(&family(7, 2, PatternKind::RightTriangle)).unwrap(), big(49 * 48 * 6 / 2));
    }

    #[test]
    fn family_size_matches_enumeration() {
        for (q, n, kind) in [
            (3u64, 3usize, PatternKind::ThreeAp),
            (5, 2, PatternKind::ThreeAp),
            (2, 4, PatternKind::Parallelogram),
            (3, 3, PatternKind::Parallelogram),
            (4, 2, PatternKind::Parallelogram),
            (2, 4, PatternKind::RightTriangle),
            (4, 2, PatternKind::RightTriangle),
            (3, 3, PatternKind::RightTriangle),
            (3, 3, PatternKind::Plane { m: 1 }),
        ] {
            let fam = family(q, n, kind);
            assert_eq!(family_size(&fam).unwrap(), big(fam.enumerate().unwrap().len() as u64));
        }
    }

    #[test]
    fn plane_formula_matches_enumeration() {
        for q in [2u64, 3, 4, 5] {
            for n in 2..=6usize {
                for m in 1..n {
                    let count = plane_count(q, n as u64, m as u64);
                    if count > big(100_000) {
                        continue;
                    }
                    let space = Space::new(make_field(q).unwrap(), n).unwrap();
                    let listed = crate::patterns::enumerate_planes(&space, m, &Caps::default()).unwrap().count();
                    assert_eq!(big(listed as u64), count, "q={q} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn intersection_census_examples() {
        let ap = family(3, 2, PatternKind::ThreeAp);
        let census = intersection_census(&ap).unwrap();
        assert_eq!(census, vec![12 * 2, 12 * 9, 0, 12]);
        let lines = family(2, 3, PatternKind::Plane { m: 1 });
        let census = intersection_census(&lines).unwrap();
        // 28 lines of F_2^3 are the 28 pairs; two pairs share 0, 1 or 2 points.
        assert_eq!(census, vec![28 * 15, 28 * 12, 28]);
        for fam in [ap, lines, family(2, 3, PatternKind::Parallelogram), family(3, 2, PatternKind::RightTriangle)] {
            let census = intersection_census(&fam).unwrap();
            let size = family_size(&fam).unwrap().to_u64().unwrap();
            assert_eq!(census.iter().sum::<u64>(), size * size);
            assert_eq!(census[fam.a()], size);
        }
    }

    #[test]
    fn intersection_census_cap() {
        let space = Arc::new(Space::new(make_field(5).unwrap(), 3).unwrap());
        let caps = Caps {
            max_pairwise: 1000,
            ..Caps::default()
        };
        let fam = PatternFamily::with_caps(space, PatternKind::ThreeAp, caps).unwrap();
        assert!(intersection_census(&fam).unwrap_err().is_cap());
    }

    #[test]
    fn expectation_examples() {
        let ap = family(3, 2, PatternKind::ThreeAp);
        assert_eq!(family_expected_x(&ap, 1.0).unwrap(), 12.0);
        assert_eq!(family_expected_x(&ap, 0.5).unwrap(), 1.5);
        assert_eq!(family_expected_x(&ap, 0.0).unwrap(), 0.0);
        assert_eq!(family_expected_y(&ap, 0.0).unwrap(), 0.0);
        // |I_1| = 108, δ^5
        assert!((family_expected_y(&ap, 0.5).unwrap() - 108.0 / 32.0).abs() < 1e-12);
        assert!(family_expected_x(&ap, 1.5).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold(PatternKind::ThreeAp, 3, 3) - 1.0 / 9.0).abs() < 1e-12);
        assert!((threshold(PatternKind::Parallelogram, 2, 4) - 0.125).abs() < 1e-12);
        assert!((threshold(PatternKind::Plane { m: 1 }, 3, 3) - 1.0 / 9.0).abs() < 1e-12);
        assert!((threshold(PatternKind::RightTriangle, 8, 2) - 8f64.powf(-5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn report_ratios() {
        let mut c1 = Vec::new();
        for n in 3..=5 {
            let fam = family(2, n, PatternKind::Plane { m: 1 });
            let t = threshold(fam.kind(), 2, n);
            let report = condition_report(&fam, (4.0 * t).min(1.0)).unwrap();
            assert!((0.0..=1.0).contains(&report.ratios.c1));
            assert_eq!(report.ratios.plane_terms.as_ref().unwrap().len(), 1);
            // lines of F_2^n are the pairs: I_0 / |A|^2 = C(N-2,2)/C(N,2), C2 = (N-2)/(N-1)
            let big_n = (1u64 << n) as f64;
            let pairs = |k: f64| k * (k - 1.0) / 2.0;
            assert!((report.ratios.c1 - pairs(big_n - 2.0) / pairs(big_n)).abs() < 1e-12);
            assert!((report.ratios.c2 - (big_n - 2.0) / (big_n - 1.0)).abs() < 1e-12);
            c1.push(report.ratios.c1);
        }
        assert!(c1.windows(2).all(|w| w[0] < w[1]), "{c1:?}");
        let c2: Vec<f64> = (3..=5)
            .map(|n| {
                let fam = family(3, n, PatternKind::Plane { m: 1 });
                let t = threshold(fam.kind(), 3, n);
                condition_report(&fam, (4.0 * t).min(1.0)).unwrap().ratios.c2
            })
            .collect();
        assert!(c2.windows(2).all(|w| w[0] > w[1]), "{c2:?}");
    }

    #[test]
    fn report_json_keys() {
        let report = condition_report(&family(3, 2, PatternKind::ThreeAp), 0.5).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        for key in ["family", "q", "n", "m", "A_size", "I", "E_X", "E_Y", "t", "ratios"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["A_size"], 12);
        assert_eq!(report.csv_rows().len(), 4);
    }

    #[test]
    fn er_examples() {
        assert_eq!(er_containment_prob(2, 2, 2, 1).unwrap(), Ratio::new(big(1), big(2)));
        assert_eq!(er_containment_prob(3, 2, 5, 0).unwrap(), Ratio::from_integer(big(1)));
        assert_eq!(er_containment_prob(3, 2, 3, 2).unwrap(), Ratio::new(big(1), big(12)));
        assert!(er_containment_prob(2, 2, 5, 1).is_err());
        assert!(er_containment_prob(2, 2, 2, 3).is_err());
    }

    #[test]
    fn er_matches_subset_enumeration() {
        // all C(9,3) three-subsets of 9 points, fixed pair {0, 1}
        let subsets = (0..9).combinations(3).collect::<Vec<_>>();
        let hits = subsets.iter().filter(|s| s.contains(&0) && s.contains(&1)).count();
        assert_eq!(Ratio::new(big(hits as u64), big(subsets.len() as u64)), er_containment_prob(3, 2, 3, 2).unwrap());
    }

    fn planes_containing(all: &[Pattern], inner: &Pattern) -> usize {
        all.iter()
            .filter(|w| inner.points().iter().all(|x| w.points().binary_search(x).is_ok()))
            .count()
    }

    #[test]
    fn extension_counts() {
        for (q, n, m) in [(2u64, 4usize, 2usize), (3, 3, 2), (2, 5, 3), (4, 3, 2)] {
            let space = Space::new(make_field(q).unwrap(), n).unwrap();
            let outer: Vec<Pattern> = affine_planes(&space, m).collect();
            for k in 0..m {
                let expected = gaussian_binomial((n - k) as u64, (m - k) as u64, q).unwrap();
                for inner in affine_planes(&space, k).step_by(7) {
                    assert_eq!(big(planes_containing(&outer, &inner) as u64), expected);
                }
            }
        }
    }

    #[test]
    fn intersection_bound_small_instances() {
        for (q, n, m) in [(2u64, 3usize, 1usize), (2, 4, 2), (3, 3, 1), (3, 3, 2), (2, 5, 2), (4, 3, 1)] {
            let fam = family(q, n, PatternKind::Plane { m });
            let census = intersection_census(&fam).unwrap();
            for k in 0..=m {
                let size = (q as usize).pow(k as u32);
                let bound = plane_count(q, n as u64, k as u64)
                    * gaussian_binomial((n - k) as u64, (m - k) as u64, q).unwrap().pow(2);
                assert!(big(census[size]) <= bound, "q={q} n={n} m={m} k={k}");
            }
            // two planes meet in the empty set or in a plane
            for (s, &v) in census.iter().enumerate() {
                if s > 0 && !s.is_power_of_two() && q == 2 {
                    assert_eq!(v, 0);
                }
            }
        }
    }

    #[test]
    fn framework_scaling() {
        // Patterns through a fixed k-point set grow by at most a constant times q^{b-k}
        // when n increases by one.
        for (kind, q) in [
            (PatternKind::ThreeAp, 3u64),
            (PatternKind::Parallelogram, 2),
            (PatternKind::Parallelogram, 3),
            (PatternKind::RightTriangle, 3),
            (PatternKind::RightTriangle, 2),
        ] {
            let small = family(q, 2, kind);
            let large = family(q, 3, kind);
            let (b, _) = small.framework_params().unwrap();
            let through = |fam: &PatternFamily, k: usize| -> f64 {
                let all = fam.enumerate().unwrap();
                let mut total = 0usize;
                let mut sets = 0usize;
                for s in (0..fam.space().size()).combinations(k).step_by(3) {
                    sets += 1;
                    total += all.iter().filter(|t| s.iter().all(|x| t.points().contains(x))).count();
                }
                total as f64 / sets as f64
            };
            for k in 1..=2usize {
                let ratio = through(&large, k) / through(&small, k).max(1e-9);
                let scale = (q as f64).powi(b as i32 - k as i32);
                assert!(ratio <= 4.0 * scale, "{kind} q={q} k={k}: {ratio} vs {scale}");
            }
        }
    }
}
