//! Certified covering numbers of finite metric spaces.
//!
//! The covering number at scale `eps` is the minimum number of parts of
//! strict diameter `< eps` needed to cover the space. Distances are
//! certified intervals, and decisions are conservative: a pair may share a
//! part only when its distance is certainly below `eps`, and counts toward a
//! separated certificate only when certainly at least `eps`. Upper bounds
//! therefore come from explicit valid covers, lower bounds from explicit
//! separated families (or exhaustive search when every pair is decided).

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{CovdimError, Result};
use crate::geometry::{linf_dist, DyadicVec};
use crate::numeric::{biguint_string, BoundedValue, Rat};
use crate::word::{metric_dn, LatticeWord};

/// A finite metric space with certified interval distances.
///
/// Construction validates symmetry, a zero diagonal, nonnegativity, and
/// interval realizability of the triangle inequality
/// (`lo(i,k) <= hi(i,j) + hi(j,k)`).
#[derive(Clone, Debug)]
pub struct FiniteMetricSpace {
    n: usize,
    dist: Vec<BoundedValue>,
}

impl FiniteMetricSpace {
    /// Builds a space from a full interval distance matrix.
    pub fn from_intervals(matrix: Vec<Vec<BoundedValue>>) -> Result<Self> {
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(CovdimError::DimensionMismatch(format!(
                    "distance row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
        }
        for (i, row) in matrix.iter().enumerate() {
            if !row[i].is_point() || !row[i].lo().is_zero() {
                return Err(CovdimError::InvalidParameter(format!(
                    "diagonal entry {i} is not exactly zero"
                )));
            }
            for (j, entry) in row.iter().enumerate() {
                if *entry != matrix[j][i] {
                    return Err(CovdimError::InvalidParameter(format!(
                        "distance matrix not symmetric at ({i}, {j})"
                    )));
                }
                if entry.lo() < &Rat::zero() {
                    return Err(CovdimError::InvalidParameter(format!(
                        "negative distance bound at ({i}, {j})"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let bound = matrix[i][j].hi() + matrix[j][k].hi();
                    if matrix[i][k].lo() > &bound {
                        return Err(CovdimError::InvalidParameter(format!(
                            "triangle inequality unrealizable at ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        let mut dist = Vec::with_capacity(n * n);
        for row in matrix {
            dist.extend(row);
        }
        Ok(Self { n, dist })
    }

    /// Builds a space from an exact rational distance matrix.
    pub fn from_exact(matrix: Vec<Vec<Rat>>) -> Result<Self> {
        let intervals = matrix
            .into_iter()
            .map(|row| row.into_iter().map(BoundedValue::point).collect())
            .collect();
        Self::from_intervals(intervals)
    }

    /// The sup-norm space on a list of dyadic points of equal dimension.
    pub fn from_points_linf(points: &[DyadicVec]) -> Result<Self> {
        let n = points.len();
        let mut matrix = vec![vec![BoundedValue::zero(); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = BoundedValue::point(linf_dist(&points[i], &points[j])?.value());
                matrix[i][j] = d.clone();
                matrix[j][i] = d;
            }
        }
        Self::from_intervals(matrix)
    }

    /// The orbit-segment metric space on a list of words at the given
    /// horizon and tail horizon.
    pub fn from_words_orbit(words: &[LatticeWord], horizon: u32, tail: u32) -> Result<Self> {
        let n = words.len();
        let mut matrix = vec![vec![BoundedValue::zero(); n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric_dn(&words[i], &words[j], horizon, tail)?;
                matrix[i][j] = d.clone();
                matrix[j][i] = d;
            }
        }
        Self::from_intervals(matrix)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, i: usize, j: usize) -> &BoundedValue {
        &self.dist[i * self.n + j]
    }
}

/// Budget knobs for the exact solvers.
#[derive(Clone, Copy, Debug)]
pub struct CoverConfig {
    /// Largest point count the exact branch-and-bound accepts.
    pub exact_cap: usize,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self { exact_cap: 24 }
    }
}

impl CoverConfig {
    pub fn with_cap(exact_cap: usize) -> Self {
        Self { exact_cap }
    }
}

/// Certified covering bounds with optional explicit certificates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverResult {
    /// Sound lower bound on the covering number.
    #[serde(with = "biguint_string")]
    pub lower: BigUint,
    /// Sound upper bound on the covering number.
    #[serde(with = "biguint_string")]
    pub upper: BigUint,
    /// True when lower and upper provably coincide.
    pub exact: bool,
    /// Disjoint parts of certified diameter `< eps` covering every point.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cover_certificate: Option<Vec<Vec<usize>>>,
    /// Points with pairwise certified distance `>= eps`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub separated_certificate: Option<Vec<usize>>,
}

impl CoverResult {
    /// A bare result carrying counts only (no certificates).
    pub fn from_counts(lower: u64, upper: u64, exact: bool) -> Self {
        Self {
            lower: BigUint::from(lower),
            upper: BigUint::from(upper),
            exact,
            cover_certificate: None,
            separated_certificate: None,
        }
    }

    /// Checks every structural promise this result makes about `space` at
    /// scale `eps`: bound order, certificate validity, and consistency of
    /// certificate sizes with the reported bounds.
    pub fn verify(&self, space: &FiniteMetricSpace, eps: &Rat) -> Result<()> {
        if self.lower > self.upper {
            return Err(CovdimError::Internal("lower bound exceeds upper".into()));
        }
        if self.exact && self.lower != self.upper {
            return Err(CovdimError::Internal("exact result with a gap".into()));
        }
        if let Some(parts) = &self.cover_certificate {
            let mut seen = vec![false; space.len()];
            for part in parts {
                for (a, &i) in part.iter().enumerate() {
                    if i >= space.len() {
                        return Err(CovdimError::Internal("certificate point out of range".into()));
                    }
                    if seen[i] {
                        return Err(CovdimError::Internal("cover parts overlap".into()));
                    }
                    seen[i] = true;
                    for &j in part.iter().skip(a + 1) {
                        if !space.dist(i, j).certainly_lt(eps) {
                            return Err(CovdimError::Internal(format!(
                                "cover part pair ({i}, {j}) not certified below eps"
                            )));
                        }
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(CovdimError::Internal("cover certificate misses a point".into()));
            }
            if BigUint::from(parts.len()) < self.upper {
                return Err(CovdimError::Internal(
                    "cover certificate smaller than reported upper bound".into(),
                ));
            }
        }
        if let Some(sep) = &self.separated_certificate {
            for (a, &i) in sep.iter().enumerate() {
                for &j in sep.iter().skip(a + 1) {
                    if !space.dist(i, j).certainly_ge(eps) {
                        return Err(CovdimError::Internal(format!(
                            "separated pair ({i}, {j}) not certified at or above eps"
                        )));
                    }
                }
            }
            if BigUint::from(sep.len()) > self.lower {
                return Err(CovdimError::Internal(
                    "separated certificate larger than reported lower bound".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pairwise decisions at scale `eps` as adjacency bitmasks.
struct Classified {
    /// Bit `j` of `lt[i]`: distance (i, j) certainly `< eps`.
    lt: Vec<u64>,
    /// Bit `j` of `ge[i]`: distance (i, j) certainly `>= eps`.
    ge: Vec<u64>,
    all_decided: bool,
}

fn classify(space: &FiniteMetricSpace, eps: &Rat) -> Result<Classified> {
    if !eps.is_positive() {
        return Err(CovdimError::InvalidParameter(
            "covering scale must be positive".into(),
        ));
    }
    let n = space.len();
    if n > 64 {
        return Err(CovdimError::BudgetExceeded(format!(
            "bitmask solvers accept at most 64 points, got {n}"
        )));
    }
    let mut lt = vec![0u64; n];
    let mut ge = vec![0u64; n];
    let mut all_decided = true;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = space.dist(i, j);
            if d.certainly_lt(eps) {
                lt[i] |= 1 << j;
                lt[j] |= 1 << i;
            } else if d.certainly_ge(eps) {
                ge[i] |= 1 << j;
                ge[j] |= 1 << i;
            } else {
                all_decided = false;
            }
        }
    }
    Ok(Classified { lt, ge, all_decided })
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn mask_to_vec(mask: u64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut m = mask;
    while m != 0 {
        let v = m.trailing_zeros() as usize;
        out.push(v);
        m &= m - 1;
    }
    out
}

/// All maximal cliques of the graph, in a canonical order (sorted by their
/// member lists).
fn maximal_cliques(adj: &[u64], n: usize) -> Vec<u64> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    fn bk(adj: &[u64], r: u64, mut p: u64, mut x: u64, out: &mut Vec<u64>) {
        if p == 0 && x == 0 {
            out.push(r);
            return;
        }
        // Pivot on the vertex of p|x with the most neighbors in p.
        let mut pivot = usize::MAX;
        let mut best = -1i64;
        let mut scan = p | x;
        while scan != 0 {
            let u = scan.trailing_zeros() as usize;
            scan &= scan - 1;
            let deg = (p & adj[u]).count_ones() as i64;
            if deg > best {
                best = deg;
                pivot = u;
            }
        }
        let mut candidates = p & !adj[pivot];
        while candidates != 0 {
            let v = candidates.trailing_zeros() as usize;
            candidates &= candidates - 1;
            let bit = 1u64 << v;
            bk(adj, r | bit, p & adj[v], x & adj[v], out);
            p &= !bit;
            x |= bit;
        }
    }
    bk(adj, 0, full_mask(n), 0, &mut out);
    out.sort_by_key(|&m| mask_to_vec(m));
    out
}

/// Size of a greedy independent set in the graph restricted to `mask`:
/// a quick lower bound on how many cliques are needed to cover `mask`.
fn greedy_independent(adj: &[u64], mut mask: u64) -> u32 {
    let mut count = 0;
    while mask != 0 {
        let v = mask.trailing_zeros() as usize;
        count += 1;
        mask &= !(adj[v] | (1 << v));
    }
    count
}

/// Greedy cover: seed each part with the smallest uncovered point and grow
/// it over uncovered compatible points in id order.
fn greedy_cover_masks(lt: &[u64], n: usize) -> Vec<u64> {
    let mut parts = Vec::new();
    let mut uncovered = full_mask(n);
    while uncovered != 0 {
        let v = uncovered.trailing_zeros() as usize;
        let mut part = 1u64 << v;
        let mut candidates = uncovered & lt[v] & !(1u64 << v);
        while candidates != 0 {
            let u = candidates.trailing_zeros() as usize;
            candidates &= candidates - 1;
            if part & !lt[u] == 0 {
                part |= 1 << u;
            }
        }
        parts.push(part);
        uncovered &= !part;
    }
    parts
}

/// Exact minimum clique cover by branch and bound over maximal cliques,
/// pruned by the greedy-independent-set bound. Deterministic: candidates
/// are explored in canonical clique order and only strict improvements are
/// recorded.
fn min_clique_cover(lt: &[u64], n: usize) -> (u32, Vec<u64>) {
    if n == 0 {
        return (0, Vec::new());
    }
    let cliques = maximal_cliques(lt, n);
    let mut by_vertex: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ci, &c) in cliques.iter().enumerate() {
        let mut m = c;
        while m != 0 {
            let v = m.trailing_zeros() as usize;
            m &= m - 1;
            by_vertex[v].push(ci);
        }
    }
    let greedy = greedy_cover_masks(lt, n);
    let mut best_count = greedy.len() as u32;
    let mut best_parts = greedy;

    struct Ctx<'a> {
        lt: &'a [u64],
        cliques: &'a [u64],
        by_vertex: &'a [Vec<usize>],
        best_count: u32,
        best_parts: Vec<u64>,
        chosen: Vec<u64>,
    }
    fn search(ctx: &mut Ctx, uncovered: u64, used: u32) {
        if uncovered == 0 {
            if used < ctx.best_count {
                ctx.best_count = used;
                ctx.best_parts = ctx.chosen.clone();
            }
            return;
        }
        if used + greedy_independent(ctx.lt, uncovered) >= ctx.best_count {
            return;
        }
        let v = uncovered.trailing_zeros() as usize;
        for &ci in &ctx.by_vertex[v] {
            let c = ctx.cliques[ci];
            ctx.chosen.push(c);
            search(ctx, uncovered & !c, used + 1);
            ctx.chosen.pop();
        }
    }
    let mut ctx = Ctx {
        lt,
        cliques: &cliques,
        by_vertex: &by_vertex,
        best_count,
        best_parts: best_parts.clone(),
        chosen: Vec::new(),
    };
    search(&mut ctx, full_mask(n), 0);
    best_count = ctx.best_count;
    best_parts = ctx.best_parts;
    (best_count, best_parts)
}

/// Exact maximum clique (used on the `>= eps` graph for separated sets).
fn max_clique(adj: &[u64], n: usize) -> u64 {
    if n == 0 {
        return 0;
    }
    struct Ctx<'a> {
        adj: &'a [u64],
        best: u64,
    }
    fn extend(ctx: &mut Ctx, current: u64, candidates: u64) {
        if current.count_ones() > ctx.best.count_ones() {
            ctx.best = current;
        }
        if current.count_ones() + candidates.count_ones() <= ctx.best.count_ones() {
            return;
        }
        let mut cands = candidates;
        while cands != 0 {
            let v = cands.trailing_zeros() as usize;
            cands &= cands - 1;
            // Taking v plus everything after it is the most this branch and
            // its siblings can still reach.
            if current.count_ones() + 1 + cands.count_ones() <= ctx.best.count_ones() {
                return;
            }
            extend(ctx, current | (1 << v), cands & ctx.adj[v]);
        }
    }
    let mut ctx = Ctx { adj, best: 0 };
    extend(&mut ctx, 0, full_mask(n));
    ctx.best
}

/// Turns possibly overlapping parts into a partition by assigning each
/// point to its first containing part, dropping emptied parts.
fn partitionize(parts: &[u64]) -> Vec<Vec<usize>> {
    let mut assigned = 0u64;
    let mut out = Vec::new();
    for &p in parts {
        let fresh = p & !assigned;
        if fresh != 0 {
            out.push(mask_to_vec(fresh));
            assigned |= fresh;
        }
    }
    out
}

fn empty_result() -> CoverResult {
    CoverResult {
        lower: BigUint::zero(),
        upper: BigUint::zero(),
        exact: true,
        cover_certificate: Some(Vec::new()),
        separated_certificate: Some(Vec::new()),
    }
}

/// Exact covering number for spaces within the configured cap.
///
/// When every pairwise comparison against `eps` is decided, the result is
/// the true covering number with a certificate partition. Undecided pairs
/// (interval distances straddling `eps`) degrade gracefully to a certified
/// bracket with `exact = false`.
pub fn cover_number_exact(
    space: &FiniteMetricSpace,
    eps: &Rat,
    config: &CoverConfig,
) -> Result<CoverResult> {
    if space.is_empty() {
        if !eps.is_positive() {
            return Err(CovdimError::InvalidParameter(
                "covering scale must be positive".into(),
            ));
        }
        return Ok(empty_result());
    }
    if space.len() > config.exact_cap {
        return Err(CovdimError::BudgetExceeded(format!(
            "exact cover on {} points exceeds cap {}",
            space.len(),
            config.exact_cap
        )));
    }
    let cls = classify(space, eps)?;
    let n = space.len();
    let (count, parts) = min_clique_cover(&cls.lt, n);
    let cover_certificate = partitionize(&parts);
    let sep_mask = max_clique(&cls.ge, n);
    let separated = mask_to_vec(sep_mask);

    let upper = BigUint::from(count);
    let lower = if cls.all_decided {
        // Every pair is decided, so the clique-cover optimum is the true
        // covering number.
        upper.clone()
    } else {
        BigUint::from(separated.len().max(1))
    };
    let exact = lower == upper;
    Ok(CoverResult {
        lower,
        upper,
        exact,
        cover_certificate: Some(cover_certificate),
        separated_certificate: Some(separated),
    })
}

/// Greedy cover: a sound upper bound with a certificate, at any size up
/// to 64 points.
pub fn cover_number_greedy(space: &FiniteMetricSpace, eps: &Rat) -> Result<CoverResult> {
    if space.is_empty() {
        if !eps.is_positive() {
            return Err(CovdimError::InvalidParameter(
                "covering scale must be positive".into(),
            ));
        }
        return Ok(empty_result());
    }
    let cls = classify(space, eps)?;
    let parts = greedy_cover_masks(&cls.lt, space.len());
    let cover_certificate = partitionize(&parts);
    let upper = BigUint::from(cover_certificate.len());
    Ok(CoverResult {
        lower: BigUint::one(),
        upper: upper.clone(),
        exact: upper.is_one(),
        cover_certificate: Some(cover_certificate),
        separated_certificate: None,
    })
}

/// Separated-set lower bound: exact maximum on small instances, greedy
/// otherwise. The trivial singleton cover supplies the paired upper bound.
pub fn separated_lower_bound(
    space: &FiniteMetricSpace,
    eps: &Rat,
    config: &CoverConfig,
) -> Result<CoverResult> {
    if space.is_empty() {
        if !eps.is_positive() {
            return Err(CovdimError::InvalidParameter(
                "covering scale must be positive".into(),
            ));
        }
        return Ok(empty_result());
    }
    let cls = classify(space, eps)?;
    let n = space.len();
    let separated = if n <= config.exact_cap {
        mask_to_vec(max_clique(&cls.ge, n))
    } else {
        // Greedy: keep each point compatible with everything kept so far.
        let mut kept: Vec<usize> = Vec::new();
        let mut kept_mask = 0u64;
        for v in 0..n {
            if kept_mask & !cls.ge[v] == 0 {
                kept.push(v);
                kept_mask |= 1 << v;
            }
        }
        kept
    };
    let lower = BigUint::from(separated.len().max(1));
    let upper = BigUint::from(n);
    Ok(CoverResult {
        exact: lower == upper,
        lower,
        upper,
        cover_certificate: None,
        separated_certificate: Some(separated),
    })
}

/// Product-cover composition under the max metric: covers of factors
/// multiply into a cover of the product, and separated sets multiply too,
/// so both bounds are products. An empty factor list is the neutral
/// one-point product.
pub fn product_cover_bounds(factors: &[CoverResult]) -> CoverResult {
    let mut lower = BigUint::one();
    let mut upper = BigUint::one();
    let mut exact = true;
    for f in factors {
        lower *= &f.lower;
        upper *= &f.upper;
        exact &= f.exact;
    }
    CoverResult {
        lower,
        upper,
        exact,
        cover_certificate: None,
        separated_certificate: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dyadic;
    use crate::numeric::rat;
    use crate::word::Extension;

    fn dy(n: u64, q: u32) -> Dyadic {
        Dyadic::new(n, q).unwrap()
    }

    fn grid_1d(nums: &[u64], q: u32) -> FiniteMetricSpace {
        let pts: Vec<DyadicVec> = nums.iter().map(|&n| DyadicVec::new(vec![dy(n, q)])).collect();
        FiniteMetricSpace::from_points_linf(&pts).unwrap()
    }

    /// Exhaustive minimum set cover over all diameter-< eps subsets.
    fn brute_min_cover(space: &FiniteMetricSpace, eps: &Rat) -> u32 {
        let n = space.len();
        assert!(n <= 12);
        if n == 0 {
            return 0;
        }
        let full = (1u32 << n) - 1;
        let mut valid = vec![false; 1 << n];
        'mask: for mask in 1u32..=full {
            let pts = (0..n).filter(|&i| mask & (1 << i) != 0).collect::<Vec<_>>();
            for (a, &i) in pts.iter().enumerate() {
                for &j in pts.iter().skip(a + 1) {
                    if !space.dist(i, j).certainly_lt(eps) {
                        continue 'mask;
                    }
                }
            }
            valid[mask as usize] = true;
        }
        let mut dp = vec![u32::MAX; (full as usize) + 1];
        dp[0] = 0;
        for mask in 1u32..=full {
            let v = mask.trailing_zeros();
            let vbit = 1u32 << v;
            let mut sub = mask;
            let mut best = u32::MAX;
            while sub > 0 {
                if sub & vbit != 0 && valid[sub as usize] {
                    let rest = dp[(mask & !sub) as usize];
                    if rest != u32::MAX {
                        best = best.min(rest + 1);
                    }
                }
                sub = (sub - 1) & mask;
            }
            dp[mask as usize] = best;
        }
        dp[full as usize]
    }

    /// Exhaustive maximum eps-separated subset.
    fn brute_max_separated(space: &FiniteMetricSpace, eps: &Rat) -> u32 {
        let n = space.len();
        assert!(n <= 12);
        let mut best = 0;
        'mask: for mask in 0u32..(1 << n) {
            let pts = (0..n).filter(|&i| mask & (1 << i) != 0).collect::<Vec<_>>();
            for (a, &i) in pts.iter().enumerate() {
                for &j in pts.iter().skip(a + 1) {
                    if !space.dist(i, j).certainly_ge(eps) {
                        continue 'mask;
                    }
                }
            }
            best = best.max(mask.count_ones());
        }
        best
    }

    #[test]
    fn five_point_grid_frozen_values() {
        // {0, 1/4, 1/2, 3/4, 1} at eps = 1/2 needs exactly 3 parts.
        let s = grid_1d(&[0, 1, 2, 3, 4], 2);
        let eps = rat(1, 2);
        let cfg = CoverConfig::default();
        let exact = cover_number_exact(&s, &eps, &cfg).unwrap();
        assert_eq!(exact.lower, BigUint::from(3u32));
        assert_eq!(exact.upper, BigUint::from(3u32));
        assert!(exact.exact);
        exact.verify(&s, &eps).unwrap();

        let greedy = cover_number_greedy(&s, &eps).unwrap();
        assert!(greedy.upper >= BigUint::from(3u32));
        assert!(greedy.upper <= BigUint::from(4u32));
        assert_eq!(greedy.upper, BigUint::from(3u32));
        greedy.verify(&s, &eps).unwrap();

        let sep = separated_lower_bound(&s, &eps, &cfg).unwrap();
        assert_eq!(sep.lower, BigUint::from(3u32));
        sep.verify(&s, &eps).unwrap();
        // {0, 1/2, 1} is the canonical witness.
        assert_eq!(sep.separated_certificate.as_deref(), Some(&[0usize, 2, 4][..]));
    }

    #[test]
    fn trivial_spaces() {
        let cfg = CoverConfig::default();
        let empty = FiniteMetricSpace::from_exact(vec![]).unwrap();
        let r = cover_number_exact(&empty, &rat(1, 2), &cfg).unwrap();
        assert_eq!((r.lower, r.upper, r.exact), (BigUint::zero(), BigUint::zero(), true));

        let single = grid_1d(&[2], 2);
        for res in [
            cover_number_exact(&single, &rat(1, 100), &cfg).unwrap(),
            cover_number_greedy(&single, &rat(1, 100)).unwrap(),
            separated_lower_bound(&single, &rat(1, 100), &cfg).unwrap(),
        ] {
            assert_eq!(res.lower, BigUint::one());
            assert_eq!(res.upper, BigUint::one());
            assert!(res.exact);
        }

        // eps above the diameter: one part suffices, no two points separate.
        let s = grid_1d(&[0, 1, 2], 2);
        let r = cover_number_exact(&s, &rat(3, 1), &cfg).unwrap();
        assert_eq!(r.upper, BigUint::one());
        let sep = separated_lower_bound(&s, &rat(3, 1), &cfg).unwrap();
        assert_eq!(sep.lower, BigUint::one());
    }

    #[test]
    fn construction_validates_matrices() {
        // Asymmetric.
        assert!(FiniteMetricSpace::from_exact(vec![
            vec![rat(0, 1), rat(1, 2)],
            vec![rat(1, 3), rat(0, 1)],
        ])
        .is_err());
        // Nonzero diagonal.
        assert!(FiniteMetricSpace::from_exact(vec![vec![rat(1, 4)]]).is_err());
        // Triangle violation: d(0,2) = 3 > 1 + 1.
        assert!(FiniteMetricSpace::from_exact(vec![
            vec![rat(0, 1), rat(1, 1), rat(3, 1)],
            vec![rat(1, 1), rat(0, 1), rat(1, 1)],
            vec![rat(3, 1), rat(1, 1), rat(0, 1)],
        ])
        .is_err());
        // Negative distance.
        assert!(FiniteMetricSpace::from_exact(vec![
            vec![rat(0, 1), rat(-1, 2)],
            vec![rat(-1, 2), rat(0, 1)],
        ])
        .is_err());
        // Interval realizability is laxer than exact triangle: lo(0,2) must
        // only stay below hi(0,1) + hi(1,2).
        let iv = |a: i64, b: i64, c: i64, d: i64| BoundedValue::new(rat(a, b), rat(c, d)).unwrap();
        let z = BoundedValue::zero();
        assert!(FiniteMetricSpace::from_intervals(vec![
            vec![z.clone(), iv(1, 2, 3, 4), iv(1, 1, 3, 2)],
            vec![iv(1, 2, 3, 4), z.clone(), iv(1, 2, 3, 4)],
            vec![iv(1, 1, 3, 2), iv(1, 2, 3, 4), z.clone()],
        ])
        .is_ok());
    }

    #[test]
    fn exact_matches_exhaustive_oracle_on_random_instances() {
        let cfg = CoverConfig::default();
        let mut seed: u64 = 0x243f6a8885a308d3;
        for trial in 0..40 {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let n = 2 + (seed >> 59) as usize % 8; // 2..=9 points
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let x = (seed >> 40) % 17;
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let y = (seed >> 40) % 17;
                pts.push(DyadicVec::new(vec![dy(x, 4), dy(y, 4)]));
            }
            let s = FiniteMetricSpace::from_points_linf(&pts).unwrap();
            for eps in [rat(1, 4), rat(3, 8), rat(1, 2)] {
                let got = cover_number_exact(&s, &eps, &cfg).unwrap();
                let want_cover = brute_min_cover(&s, &eps);
                let want_sep = brute_max_separated(&s, &eps);
                assert_eq!(got.upper, BigUint::from(want_cover), "trial {trial}");
                assert_eq!(got.lower, BigUint::from(want_cover), "trial {trial}");
                assert!(got.exact);
                got.verify(&s, &eps).unwrap();
                assert_eq!(
                    got.separated_certificate.as_ref().unwrap().len(),
                    want_sep as usize,
                    "trial {trial}"
                );
                let greedy = cover_number_greedy(&s, &eps).unwrap();
                greedy.verify(&s, &eps).unwrap();
                assert!(greedy.upper >= got.upper);
                let sep = separated_lower_bound(&s, &eps, &cfg).unwrap();
                sep.verify(&s, &eps).unwrap();
                assert!(sep.lower <= got.lower);
            }
        }
    }

    #[test]
    fn monotone_in_scale_and_metric() {
        let s = grid_1d(&[0, 1, 2, 3, 4, 5, 6, 7, 8], 3);
        let cfg = CoverConfig::default();
        let scales = [rat(1, 8), rat(1, 4), rat(3, 8), rat(1, 2), rat(1, 1)];
        let mut prev: Option<CoverResult> = None;
        for eps in &scales {
            let cur = cover_number_exact(&s, eps, &cfg).unwrap();
            if let Some(p) = prev {
                assert!(cur.upper <= p.upper);
                assert!(cur.lower <= p.lower);
            }
            prev = Some(cur);
        }
        // Halving every distance cannot increase any bound.
        let n = s.len();
        let mut halved = vec![vec![rat(0, 1); n]; n];
        for (i, row) in halved.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = s.dist(i, j).lo() / rat(2, 1);
            }
        }
        let s_half = FiniteMetricSpace::from_exact(halved).unwrap();
        for eps in &scales {
            let big = cover_number_exact(&s, eps, &cfg).unwrap();
            let small = cover_number_exact(&s_half, eps, &cfg).unwrap();
            assert!(small.upper <= big.upper);
        }
    }

    #[test]
    fn ambiguous_intervals_widen_but_stay_sound() {
        // One pair straddles eps: cover cannot merge it, separated cannot
        // certify it, so the bracket opens to [1, 2].
        let z = BoundedValue::zero();
        let amb = BoundedValue::new(rat(2, 5), rat(3, 5)).unwrap();
        let s = FiniteMetricSpace::from_intervals(vec![
            vec![z.clone(), amb.clone()],
            vec![amb, z.clone()],
        ])
        .unwrap();
        let r = cover_number_exact(&s, &rat(1, 2), &CoverConfig::default()).unwrap();
        assert_eq!(r.lower, BigUint::one());
        assert_eq!(r.upper, BigUint::from(2u32));
        assert!(!r.exact);
        r.verify(&s, &rat(1, 2)).unwrap();
    }

    #[test]
    fn product_bounds_multiply_and_match_2d_grid() {
        let axis = grid_1d(&[0, 1, 2, 3, 4], 2);
        let eps = rat(1, 2);
        let cfg = CoverConfig::with_cap(25);
        let axis_res = cover_number_exact(&axis, &eps, &CoverConfig::default()).unwrap();
        let prod = product_cover_bounds(&[axis_res.clone(), axis_res.clone()]);
        assert_eq!(prod.lower, BigUint::from(9u32));
        assert_eq!(prod.upper, BigUint::from(9u32));
        assert!(prod.exact);

        // The true 25-point product grid agrees.
        let mut pts = Vec::new();
        for x in 0..=4u64 {
            for y in 0..=4u64 {
                pts.push(DyadicVec::new(vec![dy(x, 2), dy(y, 2)]));
            }
        }
        let grid2 = FiniteMetricSpace::from_points_linf(&pts).unwrap();
        let direct = cover_number_exact(&grid2, &eps, &cfg).unwrap();
        assert_eq!(direct.upper, BigUint::from(9u32));
        assert!(direct.exact);
        direct.verify(&grid2, &eps).unwrap();

        // Neutral and absorbing factors.
        let one = CoverResult::from_counts(1, 1, true);
        let with_one = product_cover_bounds(&[axis_res.clone(), one]);
        assert_eq!(with_one.lower, axis_res.lower);
        assert_eq!(with_one.upper, axis_res.upper);
        let zero = CoverResult::from_counts(0, 0, true);
        let with_zero = product_cover_bounds(&[axis_res, zero]);
        assert_eq!(with_zero.upper, BigUint::zero());
        assert_eq!(product_cover_bounds(&[]).upper, BigUint::one());
    }

    #[test]
    fn orbit_space_constructor_round_trips() {
        let words = vec![
            LatticeWord::zero(1).unwrap(),
            LatticeWord::new(1, 0, vec![DyadicVec::new(vec![dy(1, 0)])], Extension::Zero).unwrap(),
            LatticeWord::new(1, 0, vec![DyadicVec::new(vec![dy(1, 1)])], Extension::Zero).unwrap(),
        ];
        let s = FiniteMetricSpace::from_words_orbit(&words, 2, 3).unwrap();
        assert_eq!(s.len(), 3);
        // Words 0 and 1 differ by the unit spike: d_2 = 1 exactly.
        assert_eq!(s.dist(0, 1), &BoundedValue::point(rat(1, 1)));
        let r = cover_number_exact(&s, &rat(3, 4), &CoverConfig::default()).unwrap();
        assert_eq!(r.upper, BigUint::from(2u32));
        assert!(r.exact);
    }

    #[test]
    fn exact_respects_cap() {
        let s = grid_1d(&[0, 1, 2, 3, 4], 2);
        let err = cover_number_exact(&s, &rat(1, 2), &CoverConfig::with_cap(3));
        assert!(matches!(err, Err(CovdimError::BudgetExceeded(_))));
        assert!(cover_number_exact(&s, &rat(0, 1), &CoverConfig::default()).is_err());
    }

    #[test]
    fn serde_shape() {
        let r = CoverResult::from_counts(3, 4, false);
        let js = serde_json::to_value(&r).unwrap();
        assert_eq!(js["lower"], "3");
        assert_eq!(js["upper"], "4");
        assert_eq!(js["exact"], false);
        assert!(js.get("cover_certificate").is_none());
        let back: CoverResult = serde_json::from_value(js).unwrap();
        assert_eq!(back.lower, BigUint::from(3u32));
    }
}
