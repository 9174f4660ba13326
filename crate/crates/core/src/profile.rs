//! Finite-scale covering profiles, their certified slope brackets, and
//! subadditivity checks.
//!
//! A profile tabulates, per horizon `N` and scale `eps`, a certified bracket
//! `[log_lower, log_upper]` on the base-2 log of an `N`-window covering
//! count, together with the same bracket divided by `N·log2(1/eps)`. For
//! systems with declared product structure the counts come from closed
//! per-axis formulas; otherwise the finite system is enumerated through the
//! covering engine. Tables never report limits — only finite-scale brackets
//! and, via Fekete's bound for subadditive sequences, a certified rate
//! bracket.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::cover::{cover_number_exact, CoverConfig, FiniteMetricSpace};
use crate::error::{CovdimError, Result};
use crate::factor::ProjectionFactor;
use crate::geometry::{axis_cover_count, Dyadic};
use crate::numeric::{
    biguint_pow, interval_cover_count, log2_bracket, log2_slack, pow2, rat,
    rat_string, rat_to_string, tail_horizon, Rat,
};
use crate::word::LatticeWord;

/// How the table's lower counts relate to horizons, which decides the sound
/// denominator when turning them into a rate.
///
/// `WindowProduct` tables have superadditive lower logs (window
/// configurations on disjoint horizons concatenate), so `log_lower(N)/N`
/// lower-bounds the rate. `WindowConverted` tables come from enumerating a
/// system under the genuine metric; a separated set there is only a window
/// pattern count after padding by the tail horizon `m`, so the sound
/// denominator is `N + 2m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerRateMode {
    WindowProduct,
    WindowConverted,
}

/// One profile cell: certified log-count bracket and its normalization.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    #[serde(rename = "N")]
    pub n: u32,
    pub eps: Dyadic,
    #[serde(with = "rat_string")]
    pub log_lower: Rat,
    #[serde(with = "rat_string")]
    pub log_upper: Rat,
    #[serde(with = "rat_string")]
    pub normalized_lower: Rat,
    #[serde(with = "rat_string")]
    pub normalized_upper: Rat,
}

/// A finite-scale profile: rows sorted by `(N, eps)`, plus provenance flags.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileTable {
    pub system_id: String,
    pub lower_mode: LowerRateMode,
    /// True when the table's sup ranges only over a restricted (quantized)
    /// family of base points, so upper bounds hold for that restricted sup.
    pub restricted_sup: bool,
    pub rows: Vec<ProfileRow>,
}

impl ProfileTable {
    /// CSV rendering with exact rational strings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "N,eps,log_lower,log_upper,normalized_lower,normalized_upper\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                r.eps,
                rat_to_string(&r.log_lower),
                rat_to_string(&r.log_upper),
                rat_to_string(&r.normalized_lower),
                rat_to_string(&r.normalized_upper),
            )
            .expect("string writes cannot fail");
        }
        out
    }

    /// The rows at one scale, in increasing horizon order.
    pub fn rows_at(&self, eps: &Dyadic) -> Vec<&ProfileRow> {
        self.rows.iter().filter(|r| &r.eps == eps).collect()
    }
}

/// Certified slope bracket of one profile at one scale.
#[derive(Clone, Debug, Serialize)]
pub struct RateEstimate {
    pub eps: Dyadic,
    #[serde(with = "rat_string")]
    pub rate_lower: Rat,
    #[serde(with = "rat_string")]
    pub rate_upper: Rat,
    #[serde(with = "rat_string")]
    pub normalized_lower: Rat,
    #[serde(with = "rat_string")]
    pub normalized_upper: Rat,
}

/// The systems a profile can be computed for.
pub enum SystemSpec {
    /// The full shift on `[0,1]^a` quantized at resolution `q`: closed
    /// product formulas, no enumeration.
    FullShift { a: u32, q: u32 },
    /// A one-point system: every count is 1.
    Singleton { a: u32 },
    /// A finite set of words profiled by direct enumeration under the
    /// certified metric.
    Explicit { words: Vec<LatticeWord> },
}

impl SystemSpec {
    fn id(&self) -> String {
        match self {
            SystemSpec::FullShift { a, q } => format!("full-shift(a={a}, q={q})"),
            SystemSpec::Singleton { a } => format!("singleton(a={a})"),
            SystemSpec::Explicit { words } => format!("explicit({} words)", words.len()),
        }
    }

    fn lower_mode(&self) -> LowerRateMode {
        match self {
            SystemSpec::Explicit { .. } => LowerRateMode::WindowConverted,
            _ => LowerRateMode::WindowProduct,
        }
    }
}

/// Certified bracket on `log2(1/eps)` for `eps` in `(0, 1)`.
fn log_inv_eps_bracket(eps: &Dyadic) -> Result<(Rat, Rat)> {
    let one = rat(1, 1);
    if eps.value() >= one || eps.num() == 0 {
        return Err(CovdimError::InvalidParameter(format!(
            "normalized profiles need a scale in (0, 1), got {eps}"
        )));
    }
    // eps = p / 2^e reduced, so log2(1/eps) = e - log2(p).
    let e = Rat::from_integer((eps.exp() as i64).into());
    let (plo, phi) = log2_bracket(&BigUint::from(eps.num()))?;
    let lo = &e - &phi;
    let hi = &e - &plo;
    if !lo.is_positive() {
        return Err(CovdimError::InvalidParameter(format!(
            "scale {eps} too close to 1 for a certified normalization"
        )));
    }
    Ok((lo, hi))
}

fn make_row(
    n: u32,
    eps: Dyadic,
    count_lower: &BigUint,
    count_upper: &BigUint,
) -> Result<ProfileRow> {
    if count_lower > count_upper {
        return Err(CovdimError::Internal(
            "count lower bound exceeds upper bound".into(),
        ));
    }
    let (log_lower, _) = log2_bracket(count_lower)?;
    let (_, log_upper) = log2_bracket(count_upper)?;
    let (linv_lo, linv_hi) = log_inv_eps_bracket(&eps)?;
    let horizon = Rat::from_integer((n as i64).into());
    // Outward rounding: the lower log is divided by the larger denominator
    // bracket, the upper by the smaller one.
    let normalized_lower = &log_lower / &(&horizon * &linv_hi);
    let normalized_upper = &log_upper / &(&horizon * &linv_lo);
    Ok(ProfileRow {
        n,
        eps,
        log_lower,
        log_upper,
        normalized_lower,
        normalized_upper,
    })
}

fn sorted_cells(ns: &[u32], epss: &[Dyadic]) -> Result<Vec<(u32, Dyadic)>> {
    if ns.is_empty() || epss.is_empty() {
        return Err(CovdimError::InvalidParameter(
            "profile needs at least one horizon and one scale".into(),
        ));
    }
    let mut ns_sorted: BTreeSet<u32> = BTreeSet::new();
    for &n in ns {
        if n == 0 {
            return Err(CovdimError::InvalidParameter(
                "horizons must be at least 1".into(),
            ));
        }
        ns_sorted.insert(n);
    }
    let mut eps_sorted: BTreeSet<Dyadic> = BTreeSet::new();
    for e in epss {
        eps_sorted.insert(*e);
    }
    let mut cells = Vec::with_capacity(ns_sorted.len() * eps_sorted.len());
    for &n in &ns_sorted {
        for e in &eps_sorted {
            cells.push((n, *e));
        }
    }
    Ok(cells)
}

fn require_resolution(q: u32, eps: &Dyadic) -> Result<()> {
    if pow2(-(q as i64)) > eps.value() / rat(2, 1) {
        return Err(CovdimError::InvalidParameter(format!(
            "resolution 2^-{q} too coarse for scale {eps}; need 2^-q <= eps/2"
        )));
    }
    Ok(())
}

/// Finite-scale window-count profile of a system over a grid of horizons
/// and scales.
///
/// Full-shift cells use the exact per-axis grid count raised to the window
/// size — both bracket ends coincide up to log-bracket slack. Explicit
/// systems are enumerated through the covering engine under the certified
/// word metric with the tail horizon taken from each scale; that path fails
/// with a budget error beyond the covering cap.
pub fn profile_s(
    system: &SystemSpec,
    ns: &[u32],
    epss: &[Dyadic],
    config: &CoverConfig,
) -> Result<ProfileTable> {
    let cells = sorted_cells(ns, epss)?;
    let mut rows = Vec::with_capacity(cells.len());
    for (n, eps) in cells {
        let (count_lower, count_upper) = match system {
            SystemSpec::FullShift { a, q } => {
                if *a == 0 {
                    return Err(CovdimError::InvalidParameter(
                        "full shift needs a >= 1".into(),
                    ));
                }
                require_resolution(*q, &eps)?;
                let axis = BigUint::from(axis_cover_count(*q, &eps)?);
                let count = biguint_pow(&axis, *a as u64 * n as u64);
                (count.clone(), count)
            }
            SystemSpec::Singleton { a } => {
                if *a == 0 {
                    return Err(CovdimError::InvalidParameter(
                        "singleton needs a >= 1".into(),
                    ));
                }
                (BigUint::one(), BigUint::one())
            }
            SystemSpec::Explicit { words } => {
                if words.is_empty() {
                    return Err(CovdimError::InvalidParameter(
                        "explicit system needs at least one word".into(),
                    ));
                }
                let m = tail_horizon(&eps.value())?;
                let space = FiniteMetricSpace::from_words_orbit(words, n, m)?;
                let res = cover_number_exact(&space, &eps.value(), config)?;
                (res.lower.clone(), res.upper.clone())
            }
        };
        rows.push(make_row(n, eps, &count_lower, &count_upper)?);
    }
    Ok(ProfileTable {
        system_id: system.id(),
        lower_mode: system.lower_mode(),
        restricted_sup: false,
        rows,
    })
}

/// Conditional window-count profile of the coordinate projection: per cell,
/// a certified bracket on the largest `N`-window count carried by the
/// preimage of a `delta`-ball around a quantized base point.
///
/// Free coordinates contribute the full per-axis grid count. Each
/// constrained coordinate contributes between the count of an interval of
/// length `delta/6` (configurations that certifiably stay inside the ball)
/// and the count of an interval of length `min(2·delta, 1)` (the ball
/// confines window symbols no more tightly). A `delta` at or beyond the
/// metric's diameter 3 makes the constraint vacuous and the cell equals the
/// unconditioned full-shift cell.
pub fn conditional_profile(
    map: &ProjectionFactor,
    q: u32,
    delta: &Dyadic,
    ns: &[u32],
    epss: &[Dyadic],
) -> Result<ProfileTable> {
    if delta.num() == 0 {
        return Err(CovdimError::InvalidParameter(
            "ball radius must be positive".into(),
        ));
    }
    let cells = sorted_cells(ns, epss)?;
    let mut rows = Vec::with_capacity(cells.len());
    for (n, eps) in cells {
        if eps.num() != 1 || eps.exp() == 0 {
            return Err(CovdimError::InvalidParameter(format!(
                "conditional cells need a scale 2^-k with k >= 1, got {eps}"
            )));
        }
        require_resolution(q, &eps)?;
        let axis = BigUint::from(axis_cover_count(q, &eps)?);
        let vacuous = delta.value() >= rat(3, 1);
        let c_lo = if vacuous {
            axis.clone()
        } else {
            interval_cover_count(&(delta.value() / rat(6, 1)), &eps.value())?
        };
        let c_up = if vacuous {
            axis.clone()
        } else {
            let span = (delta.value() * rat(2, 1)).min(rat(1, 1));
            interval_cover_count(&span, &eps.value())?
        };
        let free = map.free_dims() as u64;
        let fixed = map.b() as u64;
        let axis_part = biguint_pow(&axis, free * n as u64);
        let count_lower = &axis_part * biguint_pow(&c_lo, fixed * n as u64);
        let count_upper = &axis_part * biguint_pow(&c_up, fixed * n as u64);
        rows.push(make_row(n, eps, &count_lower, &count_upper)?);
    }
    Ok(ProfileTable {
        system_id: format!(
            "conditional(projection a={}->b={}, delta={})",
            map.a(),
            map.b(),
            delta
        ),
        lower_mode: LowerRateMode::WindowProduct,
        restricted_sup: true,
        rows,
    })
}

/// Fekete-style rate bracket from a profile at one scale.
///
/// The upper rate is `min_N log_upper(N)/N`, sound because the true log
/// counts are subadditive in `N`. The lower rate divides each `log_lower`
/// by the denominator the table's `lower_mode` justifies. Normalized values
/// divide by a certified bracket of `log2(1/eps)`, rounded outward.
pub fn rate_estimate(table: &ProfileTable, eps: &Dyadic) -> Result<RateEstimate> {
    let rows = table.rows_at(eps);
    let horizons: BTreeSet<u32> = rows.iter().map(|r| r.n).collect();
    if horizons.len() < 2 {
        return Err(CovdimError::InvalidParameter(format!(
            "rate estimate at {eps} needs rows at two or more horizons, found {}",
            horizons.len()
        )));
    }
    let mut rate_upper: Option<Rat> = None;
    let mut rate_lower: Option<Rat> = None;
    for row in &rows {
        let horizon = Rat::from_integer((row.n as i64).into());
        let up = &row.log_upper / &horizon;
        if rate_upper.as_ref().is_none_or(|b| &up < b) {
            rate_upper = Some(up);
        }
        let denom = match table.lower_mode {
            LowerRateMode::WindowProduct => horizon,
            LowerRateMode::WindowConverted => {
                let m = tail_horizon(&eps.value())?;
                &horizon + rat(2 * m as i64, 1)
            }
        };
        let lo = &row.log_lower / &denom;
        if rate_lower.as_ref().is_none_or(|b| &lo > b) {
            rate_lower = Some(lo);
        }
    }
    let rate_upper = rate_upper.expect("at least two rows");
    let rate_lower = rate_lower.expect("at least two rows");
    let (linv_lo, linv_hi) = log_inv_eps_bracket(eps)?;
    Ok(RateEstimate {
        eps: *eps,
        normalized_lower: &rate_lower / &linv_hi,
        normalized_upper: &rate_upper / &linv_lo,
        rate_lower,
        rate_upper,
    })
}

/// One subadditivity failure: the value at `n1 + n2` exceeded the sum at
/// `n1` and `n2` by more than the allowed slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubadditivityViolation {
    pub n1: u32,
    pub n2: u32,
    #[serde(with = "rat_string")]
    pub value_at_sum: Rat,
    #[serde(with = "rat_string")]
    pub allowed: Rat,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubadditivityReport {
    pub triples_checked: usize,
    #[serde(with = "rat_string")]
    pub slack: Rat,
    pub violations: Vec<SubadditivityViolation>,
}

impl SubadditivityReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Slack that absorbs the log-bracket error of the three terms in one
/// subadditivity comparison on computed tables.
pub fn default_subadditivity_slack() -> Rat {
    rat(3, 1) * log2_slack()
}

/// Checks `a(n1+n2) <= a(n1) + a(n2) + slack` for every pair `n1 <= n2`
/// whose sum is also present. Violations are listed in `(n1, n2)` order.
pub fn check_subadditivity(
    seq: &[(u32, Rat)],
    slack: &Rat,
) -> Result<SubadditivityReport> {
    let mut values: BTreeMap<u32, Rat> = BTreeMap::new();
    for (n, v) in seq {
        if *n == 0 {
            return Err(CovdimError::InvalidParameter(
                "horizons must be at least 1".into(),
            ));
        }
        if values.insert(*n, v.clone()).is_some() {
            return Err(CovdimError::InvalidParameter(format!(
                "duplicate horizon {n} in sequence"
            )));
        }
    }
    let keys: Vec<u32> = values.keys().copied().collect();
    let mut violations = Vec::new();
    let mut triples_checked = 0usize;
    for (i, &n1) in keys.iter().enumerate() {
        for &n2 in &keys[i..] {
            let Some(sum) = n1.checked_add(n2) else { continue };
            let Some(v_sum) = values.get(&sum) else { continue };
            triples_checked += 1;
            let allowed = &values[&n1] + &values[&n2] + slack;
            if v_sum > &allowed {
                violations.push(SubadditivityViolation {
                    n1,
                    n2,
                    value_at_sum: v_sum.clone(),
                    allowed,
                });
            }
        }
    }
    Ok(SubadditivityReport {
        triples_checked,
        slack: slack.clone(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DyadicVec;
    use crate::numeric::rat_to_f64;
    use crate::word::Extension;

    fn dy(n: u64, q: u32) -> Dyadic {
        Dyadic::new(n, q).unwrap()
    }

    fn full_shift(a: u32, q: u32) -> SystemSpec {
        SystemSpec::FullShift { a, q }
    }

    const LOG2_3: f64 = 1.584962500721156;

    #[test]
    fn full_shift_axis_oracle_cells() {
        let t = profile_s(&full_shift(1, 2), &[1], &[dy(1, 1)], &CoverConfig::default())
            .unwrap();
        assert_eq!(t.rows.len(), 1);
        let r = &t.rows[0];
        // Three axis points at eps = 1/2, so both bracket ends sit at log2(3).
        assert!((rat_to_f64(&r.log_lower) - LOG2_3).abs() < 1e-9);
        assert!((rat_to_f64(&r.log_upper) - LOG2_3).abs() < 1e-9);
        assert!(&r.log_upper - &r.log_lower <= rat(2, 1) * log2_slack());
        assert_eq!(r.normalized_lower, r.log_lower);
        assert!(!t.restricted_sup);
        assert_eq!(t.lower_mode, LowerRateMode::WindowProduct);

        // Two dimensions square the count: log2(9) = 2 log2(3).
        let t2 = profile_s(&full_shift(2, 2), &[1], &[dy(1, 1)], &CoverConfig::default())
            .unwrap();
        assert!((rat_to_f64(&t2.rows[0].log_lower) - 2.0 * LOG2_3).abs() < 1e-9);
    }

    #[test]
    fn full_shift_requires_fine_resolution() {
        // 2^-q <= eps/2 fails for q = 2, eps = 1/4.
        let err = profile_s(&full_shift(1, 2), &[1], &[dy(1, 2)], &CoverConfig::default());
        assert!(err.is_err());
        assert!(profile_s(&full_shift(1, 3), &[1], &[dy(1, 2)], &CoverConfig::default())
            .is_ok());
    }

    #[test]
    fn singleton_profile_is_zero() {
        let t = profile_s(
            &SystemSpec::Singleton { a: 3 },
            &[1, 2, 5],
            &[dy(1, 1), dy(1, 3)],
            &CoverConfig::default(),
        )
        .unwrap();
        assert_eq!(t.rows.len(), 6);
        for r in &t.rows {
            assert_eq!(r.log_lower, rat(0, 1));
            assert_eq!(r.log_upper, rat(0, 1));
            assert_eq!(r.normalized_upper, rat(0, 1));
        }
    }

    #[test]
    fn explicit_two_word_cell_and_budget_error() {
        let zero = LatticeWord::zero(1).unwrap();
        let one = LatticeWord::new(
            1,
            0,
            vec![DyadicVec::new(vec![dy(1, 0)])],
            Extension::Zero,
        )
        .unwrap();
        let t = profile_s(
            &SystemSpec::Explicit { words: vec![zero.clone(), one] },
            &[1],
            &[dy(1, 1)],
            &CoverConfig::default(),
        )
        .unwrap();
        // The two words are at distance >= 1 > eps, so the count is exactly 2.
        let r = &t.rows[0];
        assert!((rat_to_f64(&r.log_lower) - 1.0).abs() < 1e-9);
        assert!((rat_to_f64(&r.log_upper) - 1.0).abs() < 1e-9);
        assert_eq!(t.lower_mode, LowerRateMode::WindowConverted);

        let many: Vec<LatticeWord> = (0..30)
            .map(|i| {
                LatticeWord::new(
                    1,
                    0,
                    vec![DyadicVec::new(vec![dy(i, 5)])],
                    Extension::Zero,
                )
                .unwrap()
            })
            .collect();
        let err = profile_s(
            &SystemSpec::Explicit { words: many },
            &[1],
            &[dy(1, 1)],
            &CoverConfig::default(),
        );
        assert!(matches!(err, Err(CovdimError::BudgetExceeded(_))));
    }

    #[test]
    fn rate_from_full_shift_profile() {
        let eps = dy(1, 1);
        let t = profile_s(&full_shift(1, 3), &[1, 2, 3], &[eps], &CoverConfig::default())
            .unwrap();
        let r = rate_estimate(&t, &eps).unwrap();
        assert!((rat_to_f64(&r.rate_upper) - LOG2_3).abs() < 1e-9);
        assert!((rat_to_f64(&r.rate_lower) - LOG2_3).abs() < 1e-9);
        assert!(r.rate_lower <= r.rate_upper);
        // Normalization divides by log2(2) = 1 exactly.
        assert_eq!(r.normalized_upper, r.rate_upper);
        assert!(r.normalized_lower >= rat(1, 1), "clears the dimension a = 1");
    }

    #[test]
    fn rate_requires_two_horizons() {
        let eps = dy(1, 1);
        let t = profile_s(&full_shift(1, 3), &[2], &[eps], &CoverConfig::default()).unwrap();
        assert!(rate_estimate(&t, &eps).is_err());
    }

    #[test]
    fn synthetic_fekete_minimum() {
        // Upper logs N+1 at N in {1, 2, 4}: the Fekete bound is min(2, 3/2,
        // 5/4) = 5/4, hit at the largest horizon.
        let eps = dy(1, 1);
        let rows: Vec<ProfileRow> = [1u32, 2, 4]
            .iter()
            .map(|&n| ProfileRow {
                n,
                eps,
                log_lower: rat(0, 1),
                log_upper: rat(n as i64 + 1, 1),
                normalized_lower: rat(0, 1),
                normalized_upper: rat(n as i64 + 1, 1),
            })
            .collect();
        let t = ProfileTable {
            system_id: "synthetic".into(),
            lower_mode: LowerRateMode::WindowProduct,
            restricted_sup: false,
            rows,
        };
        let r = rate_estimate(&t, &eps).unwrap();
        assert_eq!(r.rate_upper, rat(5, 4));
        assert_eq!(r.rate_lower, rat(0, 1));
        assert_eq!(r.normalized_upper, rat(5, 4));
    }

    #[test]
    fn rate_upper_never_increases_with_more_rows() {
        let eps = dy(1, 2);
        let wide = profile_s(&full_shift(2, 4), &[1, 2, 3, 5], &[eps], &CoverConfig::default())
            .unwrap();
        let narrow = ProfileTable {
            rows: wide.rows[..2].to_vec(),
            ..wide.clone()
        };
        let r_narrow = rate_estimate(&narrow, &eps).unwrap();
        let r_wide = rate_estimate(&wide, &eps).unwrap();
        assert!(r_wide.rate_upper <= r_narrow.rate_upper);
    }

    #[test]
    fn window_converted_rate_uses_padded_denominator() {
        let zero = LatticeWord::zero(1).unwrap();
        let one = LatticeWord::new(
            1,
            0,
            vec![DyadicVec::new(vec![dy(1, 0)])],
            Extension::Zero,
        )
        .unwrap();
        let eps = dy(1, 1);
        let t = profile_s(
            &SystemSpec::Explicit { words: vec![zero, one] },
            &[1, 2],
            &[eps],
            &CoverConfig::default(),
        )
        .unwrap();
        let r = rate_estimate(&t, &eps).unwrap();
        // Counts stay 2 at both horizons; tail horizon is 3, so the sound
        // lower rate is log2(2)/(1 + 6) = 1/7 up to bracket slack.
        assert!((rat_to_f64(&r.rate_lower) - 1.0 / 7.0).abs() < 1e-9);
        assert!((rat_to_f64(&r.rate_upper) - 0.5).abs() < 1e-9);
        assert!(r.rate_lower <= r.rate_upper);
    }

    #[test]
    fn conditional_small_ball_keeps_free_axis() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let t = conditional_profile(&p, 3, &dy(1, 3), &[1], &[dy(1, 1)]).unwrap();
        let r = &t.rows[0];
        // delta = 1/8: constrained coordinate pinned (count 1), free axis
        // contributes 3 — the cell equals log2(3) on both ends.
        assert!((rat_to_f64(&r.log_lower) - LOG2_3).abs() < 1e-9);
        assert!((rat_to_f64(&r.log_upper) - LOG2_3).abs() < 1e-9);
        assert!(r.log_lower >= rat(1, 1), "free axis is worth at least 1 bit");
        assert!(t.restricted_sup);
    }

    #[test]
    fn conditional_vacuous_ball_matches_unconditioned_profile() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let ns = [1u32, 2, 3];
        let eps = [dy(1, 1), dy(1, 2)];
        let cond = conditional_profile(&p, 4, &dy(3, 0), &ns, &eps).unwrap();
        let full = profile_s(&full_shift(2, 4), &ns, &eps, &CoverConfig::default()).unwrap();
        assert_eq!(cond.rows.len(), full.rows.len());
        for (c, f) in cond.rows.iter().zip(&full.rows) {
            assert_eq!(c.log_lower, f.log_lower);
            assert_eq!(c.log_upper, f.log_upper);
        }
    }

    #[test]
    fn conditional_identity_tiny_ball_is_zero() {
        let id = ProjectionFactor::new(1, 1).unwrap();
        let t = conditional_profile(&id, 4, &dy(1, 4), &[1, 2, 4], &[dy(1, 1)]).unwrap();
        for r in &t.rows {
            assert_eq!(r.log_lower, rat(0, 1));
            assert_eq!(r.log_upper, rat(0, 1));
        }
    }

    #[test]
    fn conditional_monotone_in_delta() {
        let p = ProjectionFactor::new(3, 2).unwrap();
        let deltas = [dy(1, 4), dy(1, 2), dy(3, 1), dy(3, 0)];
        let ns = [1u32, 2];
        let eps = [dy(1, 2)];
        let mut prev: Option<ProfileTable> = None;
        for d in deltas {
            let t = conditional_profile(&p, 4, &d, &ns, &eps).unwrap();
            if let Some(prev) = &prev {
                for (small, big) in prev.rows.iter().zip(&t.rows) {
                    assert!(small.log_lower <= big.log_lower);
                    assert!(small.log_upper <= big.log_upper);
                }
            }
            prev = Some(t);
        }
    }

    #[test]
    fn conditional_rejects_coarse_or_odd_scales() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        // Non power-of-two scale.
        assert!(conditional_profile(&p, 4, &dy(1, 1), &[1], &[dy(3, 2)]).is_err());
        // Resolution coarser than eps/2.
        assert!(conditional_profile(&p, 1, &dy(1, 1), &[1], &[dy(1, 1)]).is_err());
    }

    #[test]
    fn subadditivity_frozen_examples() {
        let zero = rat(0, 1);
        let seq: Vec<(u32, Rat)> = vec![(1, rat(0, 1)), (2, rat(1, 1)), (3, rat(2, 1))];
        let rep = check_subadditivity(&seq, &zero).unwrap();
        assert_eq!(
            rep.violations.iter().map(|v| (v.n1, v.n2)).collect::<Vec<_>>(),
            vec![(1, 1), (1, 2)]
        );
        assert!(!rep.pass());

        let seq: Vec<(u32, Rat)> = (1..=4).map(|n| (n, rat(n as i64 + 1, 1))).collect();
        let rep = check_subadditivity(&seq, &zero).unwrap();
        assert!(rep.pass());
        assert_eq!(rep.triples_checked, 4);

        assert!(check_subadditivity(&[(1, rat(0, 1)), (1, rat(1, 1))], &zero).is_err());
    }

    #[test]
    fn computed_conditional_profile_is_subadditive() {
        let p = ProjectionFactor::new(2, 1).unwrap();
        let t = conditional_profile(&p, 4, &dy(1, 2), &[1, 2, 3, 4], &[dy(1, 1)]).unwrap();
        let seq: Vec<(u32, Rat)> =
            t.rows.iter().map(|r| (r.n, r.log_upper.clone())).collect();
        let rep = check_subadditivity(&seq, &default_subadditivity_slack()).unwrap();
        assert!(rep.pass(), "violations: {:?}", rep.violations);
    }

    #[test]
    fn table_serialization_shapes() {
        let t = profile_s(&full_shift(1, 2), &[1, 2], &[dy(1, 1)], &CoverConfig::default())
            .unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "N,eps,log_lower,log_upper,normalized_lower,normalized_upper"
        );
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1/2,"));

        let js = serde_json::to_value(&t).unwrap();
        assert_eq!(js["lower_mode"], "window-product");
        assert_eq!(js["restricted_sup"], false);
        assert_eq!(js["rows"][0]["N"], 1);
        assert_eq!(js["rows"][0]["eps"], "1/2");
        assert!(js["rows"][0]["log_lower"].is_string());
    }
}
