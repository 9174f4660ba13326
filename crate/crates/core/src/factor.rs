//! Coordinatewise projection factors between full shifts, certified
//! fiber-slope brackets, and the expansion-hypothesis checker.
//!
//! The projection drops all but the first `b` of `a` cube coordinates,
//! symbol by symbol. Its fibers are products of free-coordinate cubes, so
//! their covering numbers obey closed product formulas: a separated family
//! on the free window `[0, N-1]` gives the lower bound, and a mesh cover of
//! the free window `[-m, N+m-1]` at scale `eps/6` gives the upper bound via
//! window control. No fiber is ever enumerated.

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{CovdimError, Result};
use crate::geometry::{Dyadic, DyadicVec};
use crate::numeric::{
    biguint_pow, log2_bracket, rat_string, tail_horizon, Rat,
};
use crate::word::{metric_dn, LatticeWord};

/// Projection of `([0,1]^a)^Z` onto `([0,1]^b)^Z`, first `b` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ProjectionFactor {
    a: u32,
    b: u32,
}

impl ProjectionFactor {
    pub fn new(a: u32, b: u32) -> Result<Self> {
        if b == 0 || b > a {
            return Err(CovdimError::InvalidParameter(format!(
                "projection needs 1 <= b <= a, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Free (dropped) coordinates per symbol.
    pub fn free_dims(&self) -> u32 {
        self.a - self.b
    }

    /// Applies the factor map to a word: coordinatewise truncation, window
    /// and extension preserved.
    pub fn apply(&self, x: &LatticeWord) -> Result<LatticeWord> {
        if x.a() != self.a {
            return Err(CovdimError::DimensionMismatch(format!(
                "word has dimension {}, projection domain is {}",
                x.a(),
                self.a
            )));
        }
        let symbols = x
            .symbols()
            .iter()
            .map(|s| DyadicVec::new(s.coords()[..self.b as usize].to_vec()))
            .collect();
        LatticeWord::new(self.b, x.lo(), symbols, x.extension())
    }
}

/// Certified bracket on `sup_y log #(fiber(y), d_N, eps) / (N log(1/eps))`.
#[derive(Clone, Debug, Serialize)]
pub struct SlopeBracket {
    pub eps: Dyadic,
    #[serde(rename = "N")]
    pub n: u32,
    pub m: u32,
    #[serde(with = "rat_string")]
    pub lower: Rat,
    #[serde(with = "rat_string")]
    pub upper: Rat,
}

/// Closed-form fiber covering bracket for the projection at horizon `n` and
/// scale `eps = 2^-k` (resolution `q >= k+1` keeps the quantized grid as
/// rich as the continuum on every axis).
///
/// Every fiber is isometric to every other, so the sup over base points is
/// attained structurally. Lower bound: `(2^k + 1)` separated values per free
/// coordinate on the window `[0, N-1]`. Upper bound: `(6·2^k + 1)` mesh
/// intervals per free coordinate on the window `[-m, N+m-1]`, where `m` is
/// the tail horizon for `eps` — sound by window control of the metric.
pub fn fiber_cover_bracket(
    p: &ProjectionFactor,
    n: u32,
    eps: &Dyadic,
    q: u32,
) -> Result<SlopeBracket> {
    if n == 0 {
        return Err(CovdimError::InvalidParameter(
            "horizon must be at least 1".into(),
        ));
    }
    if eps.num() != 1 || eps.exp() == 0 {
        return Err(CovdimError::InvalidParameter(format!(
            "scale must be 2^-k with k >= 1, got {eps}"
        )));
    }
    let k = eps.exp();
    if q < k + 1 {
        return Err(CovdimError::InvalidParameter(format!(
            "resolution q={q} too coarse for eps=2^-{k}; need q >= {}",
            k + 1
        )));
    }
    let m = tail_horizon(&eps.value())?;
    let free = p.free_dims() as u64;
    let sep_axis = BigUint::from((1u64 << k) + 1);
    let mesh_axis = BigUint::from(6u64 * (1u64 << k) + 1);
    let count_lower = biguint_pow(&sep_axis, free * n as u64);
    let count_upper = biguint_pow(&mesh_axis, free * (n as u64 + 2 * m as u64));
    let (log_lo, _) = log2_bracket(&count_lower)?;
    let (_, log_hi) = log2_bracket(&count_upper)?;
    let denom = Rat::from_integer((n as u64 * k as u64).into());
    Ok(SlopeBracket {
        eps: *eps,
        n,
        m,
        lower: log_lo / &denom,
        upper: log_hi / &denom,
    })
}

/// A sampler for one level of an embedding family: a map from flat cube
/// coordinates into words.
pub struct PsiMap {
    label: String,
    domain_dim: u32,
    horizon: u32,
    #[allow(clippy::type_complexity)]
    map: Box<dyn Fn(&[Dyadic]) -> Result<LatticeWord> + Send + Sync>,
}

impl PsiMap {
    pub fn new(
        label: impl Into<String>,
        domain_dim: u32,
        horizon: u32,
        map: impl Fn(&[Dyadic]) -> Result<LatticeWord> + Send + Sync + 'static,
    ) -> Result<Self> {
        if domain_dim == 0 || horizon == 0 {
            return Err(CovdimError::InvalidParameter(
                "sampler needs positive domain dimension and horizon".into(),
            ));
        }
        Ok(Self { label: label.into(), domain_dim, horizon, map: Box::new(map) })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain_dim(&self) -> u32 {
        self.domain_dim
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Cube dimension per horizon step.
    pub fn ratio(&self) -> Rat {
        Rat::new((self.domain_dim as i64).into(), (self.horizon as i64).into())
    }

    pub fn eval(&self, x: &[Dyadic]) -> Result<LatticeWord> {
        if x.len() != self.domain_dim as usize {
            return Err(CovdimError::DimensionMismatch(format!(
                "sampler input has {} coordinates, expected {}",
                x.len(),
                self.domain_dim
            )));
        }
        for (i, c) in x.iter().enumerate() {
            if !c.in_unit_interval() {
                return Err(CovdimError::InvalidParameter(format!(
                    "coordinate {i} outside [0, 1]"
                )));
            }
        }
        (self.map)(x)
    }

    /// The cube-window embedding into the full shift on `[0,1]^a`: the `a·n`
    /// input coordinates become `n` symbols placed on `[0, n-1]`, zero
    /// elsewhere.
    pub fn full_shift_embedding(a: u32, n: u32) -> Result<Self> {
        if a == 0 || n == 0 {
            return Err(CovdimError::InvalidParameter(
                "embedding needs positive dimension and horizon".into(),
            ));
        }
        Self::new(
            format!("full-shift(a={a}, N={n})"),
            a * n,
            n,
            move |x: &[Dyadic]| {
                let symbols = x
                    .chunks(a as usize)
                    .map(|c| DyadicVec::new(c.to_vec()))
                    .collect();
                LatticeWord::new(a, 0, symbols, crate::word::Extension::Zero)
            },
        )
    }

    /// The product-with-fixed-point refit: `x ↦ (ψ(x), p)`, appending the
    /// coordinates of the fixed word `p` to every symbol. Metric lower
    /// bounds between two refitted images equal those between the originals
    /// because the appended component cancels pairwise.
    pub fn product_with_fixed_point(self, p: LatticeWord) -> Result<PsiMap> {
        let label = format!("{} x fixed(dim {})", self.label, p.a());
        let inner = self.map;
        let horizon = self.horizon;
        let domain_dim = self.domain_dim;
        let map = move |x: &[Dyadic]| -> Result<LatticeWord> {
            let w = inner(x)?;
            let lo = w.lo().min(p.lo());
            let hi = w.hi().max(p.hi());
            let mut symbols = Vec::with_capacity((hi - lo + 1) as usize);
            for idx in lo..=hi {
                let mut coords = w.symbol_at(idx).coords().to_vec();
                coords.extend_from_slice(p.symbol_at(idx).coords());
                symbols.push(DyadicVec::new(coords));
            }
            // Zero-fill is exact for pair metrics: outside the union window
            // both images carry the same fixed symbols, which cancel.
            LatticeWord::new(w.a() + p.a(), lo, symbols, crate::word::Extension::Zero)
        };
        Ok(PsiMap { label, domain_dim, horizon, map: Box::new(map) })
    }
}

/// One violated pair: the inputs, their cube distance, and the certified
/// metric lower bound that failed to dominate it.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisViolation {
    pub x: Vec<Dyadic>,
    pub y: Vec<Dyadic>,
    #[serde(with = "rat_string")]
    pub input_dist: Rat,
    #[serde(with = "rat_string")]
    pub image_dist_lower: Rat,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelCheck {
    pub label: String,
    pub domain_dim: u32,
    pub horizon: u32,
    #[serde(with = "rat_string")]
    pub ratio: Rat,
    pub pairs_checked: usize,
    pub violations: Vec<HypothesisViolation>,
}

/// Result of checking the expansion hypothesis across a family of levels.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub levels: Vec<LevelCheck>,
    pub pass: bool,
}

impl HypothesisReport {
    /// The `M_n / N_n` dimension-per-step sequence of the family.
    pub fn ratios(&self) -> Vec<Rat> {
        self.levels.iter().map(|l| l.ratio.clone()).collect()
    }
}

/// Verifies `‖x - y‖∞ <= d_{N_n}(ψ_n x, ψ_n y)` (via the certified lower
/// bound) on every supplied pair of every level, and reports the
/// dimension-per-step ratios of the family.
pub fn hypothesis_check(
    family: &[PsiMap],
    pairs: &[Vec<(Vec<Dyadic>, Vec<Dyadic>)>],
    tail: u32,
) -> Result<HypothesisReport> {
    if family.len() != pairs.len() {
        return Err(CovdimError::DimensionMismatch(format!(
            "{} levels but {} pair lists",
            family.len(),
            pairs.len()
        )));
    }
    let mut levels = Vec::with_capacity(family.len());
    let mut pass = true;
    for (psi, level_pairs) in family.iter().zip(pairs) {
        let mut violations = Vec::new();
        for (x, y) in level_pairs {
            let wx = psi.eval(x)?;
            let wy = psi.eval(y)?;
            let mut input_dist = Dyadic::zero();
            if x.len() != y.len() {
                return Err(CovdimError::DimensionMismatch(
                    "pair members have different dimensions".into(),
                ));
            }
            for (cx, cy) in x.iter().zip(y) {
                let d = cx.abs_diff(cy)?;
                if d > input_dist {
                    input_dist = d;
                }
            }
            let rhs = metric_dn(&wx, &wy, psi.horizon(), tail)?;
            if &input_dist.value() > rhs.lo() {
                violations.push(HypothesisViolation {
                    x: x.clone(),
                    y: y.clone(),
                    input_dist: input_dist.value(),
                    image_dist_lower: rhs.lo().clone(),
                });
            }
        }
        pass &= violations.is_empty();
        levels.push(LevelCheck {
            label: psi.label().to_string(),
            domain_dim: psi.domain_dim(),
            horizon: psi.horizon(),
            ratio: psi.ratio(),
            pairs_checked: level_pairs.len(),
            violations,
        });
    }
    Ok(HypothesisReport { levels, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;
    use crate::word::Extension;

    fn dy(n: u64, q: u32) -> Dyadic {
        Dyadic::new(n, q).unwrap()
    }

    fn vec2(c: [(u64, u32); 2]) -> DyadicVec {
        DyadicVec::new(vec![dy(c[0].0, c[0].1), dy(c[1].0, c[1].1)])
    }

    #[test]
    fn projection_applies_coordinatewise() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let w = LatticeWord::new(
            2,
            0,
            vec![vec2([(1, 1), (3, 2)]), vec2([(0, 0), (1, 0)])],
            Extension::Periodic,
        )
        .unwrap();
        let img = p.apply(&w).unwrap();
        assert_eq!(img.a(), 1);
        assert_eq!(img.symbol_at(0).coords(), &[dy(1, 1)]);
        assert_eq!(img.symbol_at(1).coords(), &[dy(0, 0)]);
        assert_eq!(img.extension(), Extension::Periodic);

        // Identity when a = b.
        let id = ProjectionFactor::new(2, 2).unwrap();
        assert_eq!(id.apply(&w).unwrap(), w);

        assert!(ProjectionFactor::new(1, 2).is_err());
        assert!(ProjectionFactor::new(2, 0).is_err());
        let w1 = LatticeWord::zero(1).unwrap();
        assert!(p.apply(&w1).is_err());
    }

    #[test]
    fn projection_commutes_with_shift() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let w = LatticeWord::new(
            2,
            -1,
            vec![vec2([(1, 2), (1, 1)]), vec2([(1, 0), (0, 0)]), vec2([(3, 2), (1, 2)])],
            Extension::Periodic,
        )
        .unwrap();
        for k in [-3i64, -1, 0, 2, 5] {
            let a = p.apply(&w.shift(k).unwrap()).unwrap();
            let b = p.apply(&w).unwrap().shift(k).unwrap();
            assert_eq!(a, b, "shift {k}");
        }
    }

    #[test]
    fn projection_is_short_for_the_metric() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let x = LatticeWord::new(
            2,
            0,
            vec![vec2([(1, 1), (3, 2)]), vec2([(1, 0), (1, 2)])],
            Extension::Periodic,
        )
        .unwrap();
        let y = LatticeWord::new(2, 0, vec![vec2([(0, 0), (1, 1)])], Extension::Zero).unwrap();
        let src = crate::word::metric_d(&x, &y, 4).unwrap();
        let img = crate::word::metric_d(&p.apply(&x).unwrap(), &p.apply(&y).unwrap(), 4).unwrap();
        assert!(img.lo() <= src.lo());
        assert!(img.hi() <= src.hi());
    }

    #[test]
    fn fiber_bracket_frozen_small_case() {
        // a=2, b=1, N=1, eps=1/2, q=2: count lower = 3, so the lower slope
        // is log2(3) regardless of the tail horizon.
        let p = ProjectionFactor::new(2, 1).unwrap();
        let b = fiber_cover_bracket(&p, 1, &dy(1, 1), 2).unwrap();
        assert_eq!(b.m, 3);
        let log3 = 1.584962500721156f64;
        let lo = crate::numeric::rat_to_f64(&b.lower);
        assert!((lo - log3).abs() < 1e-9);
        assert!(b.lower >= rat(1, 1), "finite-scale slope clears a - b = 1");
        assert!(b.lower <= b.upper);
        // Upper counts (6·2+1)^(1+2m) mesh cells: log2(13^7)/1.
        let hi = crate::numeric::rat_to_f64(&b.upper);
        assert!((hi - 7.0 * 13f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn fiber_bracket_degenerate_and_invalid() {
        let id = ProjectionFactor::new(3, 3).unwrap();
        let b = fiber_cover_bracket(&id, 4, &dy(1, 2), 4).unwrap();
        assert_eq!(b.lower, rat(0, 1));
        assert_eq!(b.upper, rat(0, 1));

        let p = ProjectionFactor::new(2, 1).unwrap();
        // eps not a power of two.
        assert!(fiber_cover_bracket(&p, 1, &dy(3, 2), 4).is_err());
        // eps = 1 (k = 0) rejected.
        assert!(fiber_cover_bracket(&p, 1, &dy(1, 0), 4).is_err());
        // q too coarse.
        assert!(fiber_cover_bracket(&p, 1, &dy(1, 3), 3).is_err());
        // zero horizon.
        assert!(fiber_cover_bracket(&p, 0, &dy(1, 1), 2).is_err());
    }

    #[test]
    fn fiber_bracket_lower_clears_free_dimension() {
        for (a, b) in [(2u32, 1u32), (3, 1), (4, 2)] {
            let p = ProjectionFactor::new(a, b).unwrap();
            for k in [1u32, 2, 4] {
                for n in [1u32, 3, 8] {
                    let br = fiber_cover_bracket(&p, n, &dy(1, k), k + 1).unwrap();
                    let free = Rat::from_integer(((a - b) as i64).into());
                    assert!(br.lower >= free, "a={a} b={b} k={k} n={n}");
                    assert!(br.lower <= br.upper);
                }
            }
        }
    }

    #[test]
    fn fiber_bracket_upper_descends_along_matched_scales() {
        // eps = 2^-k with N = 8k: the normalized upper bound tightens as the
        // scale refines (the sharpness trend of the projection example).
        let p = ProjectionFactor::new(2, 1).unwrap();
        let mut prev: Option<Rat> = None;
        for k in [4u32, 6, 8] {
            let br = fiber_cover_bracket(&p, 8 * k, &dy(1, k), k + 1).unwrap();
            if let Some(prev) = &prev {
                assert!(&br.upper < prev, "upper bound must strictly decrease");
            }
            prev = Some(br.upper.clone());
        }
        // And it stays within a factor ~2.2 of the limiting value 1 by k=8.
        assert!(prev.unwrap() <= rat(22, 10));
    }

    #[test]
    fn full_shift_embedding_passes_hypothesis() {
        let mut family = Vec::new();
        let mut pairs = Vec::new();
        let mut seed: u64 = 0xb5297a4d5be6c883;
        for n in [1u32, 2, 4] {
            let psi = PsiMap::full_shift_embedding(2, n).unwrap();
            assert_eq!(psi.ratio(), rat(2, 1));
            let dim = psi.domain_dim() as usize;
            let mut level_pairs = Vec::new();
            for _ in 0..25 {
                let mk = |seed: &mut u64| {
                    (0..dim)
                        .map(|_| {
                            *seed = seed
                                .wrapping_mul(6364136223846793005)
                                .wrapping_add(1442695040888963407);
                            dy((*seed >> 45) % 17, 4)
                        })
                        .collect::<Vec<_>>()
                };
                level_pairs.push((mk(&mut seed), mk(&mut seed)));
            }
            // Include the corner pair: all zeros against all ones.
            level_pairs.push((
                vec![Dyadic::zero(); dim],
                vec![Dyadic::one(); dim],
            ));
            family.push(psi);
            pairs.push(level_pairs);
        }
        let report = hypothesis_check(&family, &pairs, 3).unwrap();
        assert!(report.pass);
        assert_eq!(report.ratios(), vec![rat(2, 1); 3]);
        for level in &report.levels {
            assert!(level.violations.is_empty());
            assert_eq!(level.pairs_checked, 26);
        }
    }

    #[test]
    fn corrupted_sampler_fails_with_witness() {
        // Collapse every input to the zero word: any distinct pair violates.
        let psi = PsiMap::new("collapsed", 1, 1, |_| LatticeWord::zero(1)).unwrap();
        let pairs = vec![vec![(vec![dy(0, 0)], vec![dy(1, 0)])]];
        let report = hypothesis_check(&[psi], &pairs, 3).unwrap();
        assert!(!report.pass);
        let v = &report.levels[0].violations[0];
        assert_eq!(v.input_dist, rat(1, 1));
        assert_eq!(v.image_dist_lower, rat(0, 1));
    }

    #[test]
    fn fixed_point_product_preserves_the_check() {
        let fixed = LatticeWord::new(
            1,
            0,
            vec![DyadicVec::new(vec![dy(1, 1)])],
            Extension::Periodic,
        )
        .unwrap();
        let psi = PsiMap::full_shift_embedding(1, 2)
            .unwrap()
            .product_with_fixed_point(fixed)
            .unwrap();
        assert_eq!(psi.domain_dim(), 2);
        let w = psi.eval(&[dy(1, 1), dy(3, 2)]).unwrap();
        assert_eq!(w.a(), 2);
        assert_eq!(w.symbol_at(0).coords(), &[dy(1, 1), dy(1, 1)]);
        assert_eq!(w.symbol_at(1).coords(), &[dy(3, 2), dy(1, 1)]);

        let pairs = vec![vec![
            (vec![dy(0, 0), dy(0, 0)], vec![dy(1, 0), dy(1, 1)]),
            (vec![dy(1, 2), dy(1, 1)], vec![dy(1, 2), dy(1, 1)]),
        ]];
        let report = hypothesis_check(&[psi], &pairs, 4).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn slope_bracket_serializes_with_exact_strings() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let b = fiber_cover_bracket(&p, 2, &dy(1, 1), 2).unwrap();
        let js = serde_json::to_value(&b).unwrap();
        assert_eq!(js["eps"], "1/2");
        assert_eq!(js["N"], 2);
        assert_eq!(js["m"], 3);
        assert!(js["lower"].is_string());
        assert!(b.upper >= b.lower);
    }
}
