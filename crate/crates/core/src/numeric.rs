//! Exact rational scalars, certified interval values, and certified
//! base-2 logarithm brackets for big-integer counts.
//!
//! All quantities that enter a decision are exact rationals. Where a value
//! cannot be represented exactly (a metric with an infinite tail, the log of
//! a count), it is carried as a closed interval `[lo, hi]` that provably
//! contains the true value, and comparisons are made conservatively.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{CovdimError, Result};

/// Exact rational scalar used throughout the crate.
pub type Rat = BigRational;

/// Convenience constructor for small rationals.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// 2^e as an exact rational, for any integer exponent.
pub fn pow2(e: i64) -> Rat {
    if e >= 0 {
        Rat::from_integer(BigInt::one() << e as usize)
    } else {
        Rat::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// Floor of a rational as a big integer.
pub fn rat_floor(r: &Rat) -> BigInt {
    r.floor().to_integer()
}

/// Ceiling of a rational as a big integer.
pub fn rat_ceil(r: &Rat) -> BigInt {
    r.ceil().to_integer()
}

/// Renders a rational as `num` (integral) or `num/den` (otherwise).
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        let mut s = String::new();
        let _ = write!(s, "{}/{}", r.numer(), r.denom());
        s
    }
}

/// Parses a rational from `num`, `num/den`, or a finite decimal like `0.25`.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let t = s.trim();
    if t.is_empty() {
        return Err(CovdimError::Parse("empty rational literal".into()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let numer = BigInt::from_str(n.trim())
            .map_err(|e| CovdimError::Parse(format!("bad numerator {n:?}: {e}")))?;
        let denom = BigInt::from_str(d.trim())
            .map_err(|e| CovdimError::Parse(format!("bad denominator {d:?}: {e}")))?;
        if denom.is_zero() {
            return Err(CovdimError::Parse(format!("zero denominator in {t:?}")));
        }
        return Ok(Rat::new(numer, denom));
    }
    if let Some((whole, frac)) = t.split_once('.') {
        let sign = if whole.trim_start().starts_with('-') { -1 } else { 1 };
        let whole_int = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            BigInt::from_str(whole)
                .map_err(|e| CovdimError::Parse(format!("bad decimal {t:?}: {e}")))?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(CovdimError::Parse(format!("bad decimal {t:?}")));
        }
        let frac_int = BigInt::from_str(frac)
            .map_err(|e| CovdimError::Parse(format!("bad decimal {t:?}: {e}")))?;
        let scale = BigInt::from(10u8).pow(frac.len() as u32);
        let magnitude = whole_int.abs() * &scale + frac_int;
        return Ok(Rat::new(magnitude * BigInt::from(sign), scale));
    }
    let numer =
        BigInt::from_str(t).map_err(|e| CovdimError::Parse(format!("bad rational {t:?}: {e}")))?;
    Ok(Rat::from_integer(numer))
}

/// Serde adapter: rationals as reduced `num/den` strings.
pub mod rat_string {
    use super::{parse_rat, rat_to_string, Rat};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rat_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rat, D::Error> {
        let raw = String::deserialize(d)?;
        parse_rat(&raw).map_err(de::Error::custom)
    }
}

/// Serde adapter: optional rationals as strings; `None` stays `null`.
pub mod rat_opt_string {
    use super::{parse_rat, rat_to_string, Rat};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        r: &Option<Rat>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(v) => s.serialize_some(&rat_to_string(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Rat>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw {
            Some(t) => parse_rat(&t).map(Some).map_err(de::Error::custom),
            None => Ok(None),
        }
    }
}

/// Serde adapter: unsigned big integers as decimal strings (counts routinely
/// exceed `u64`).
pub mod biguint_string {
    use num_bigint::BigUint;
    use serde::{de, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(n: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BigUint, D::Error> {
        let raw = String::deserialize(d)?;
        BigUint::from_str(raw.trim()).map_err(de::Error::custom)
    }
}

/// A closed interval `[lo, hi]` certified to contain a real value.
///
/// Intervals propagate outward: every arithmetic helper returns an interval
/// that contains the exact result whenever the inputs do. Decisions against a
/// threshold are made only when the whole interval is on one side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundedValue {
    #[serde(with = "rat_string")]
    lo: Rat,
    #[serde(with = "rat_string")]
    hi: Rat,
}

impl BoundedValue {
    pub fn new(lo: Rat, hi: Rat) -> Result<Self> {
        if lo > hi {
            return Err(CovdimError::InvalidParameter(format!(
                "interval lower bound {} exceeds upper bound {}",
                rat_to_string(&lo),
                rat_to_string(&hi)
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The degenerate interval `[v, v]`.
    pub fn point(v: Rat) -> Self {
        Self { lo: v.clone(), hi: v }
    }

    pub fn zero() -> Self {
        Self::point(Rat::zero())
    }

    pub fn lo(&self) -> &Rat {
        &self.lo
    }

    pub fn hi(&self) -> &Rat {
        &self.hi
    }

    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: &Rat) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    /// Interval sum.
    pub fn add(&self, other: &Self) -> Self {
        Self { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi }
    }

    /// Interval join for maxima: contains `max(x, y)` whenever the inputs
    /// contain `x` and `y`.
    pub fn max(&self, other: &Self) -> Self {
        Self {
            lo: if self.lo >= other.lo { self.lo.clone() } else { other.lo.clone() },
            hi: if self.hi >= other.hi { self.hi.clone() } else { other.hi.clone() },
        }
    }

    /// Scales by a nonnegative exact factor.
    pub fn scale(&self, k: &Rat) -> Result<Self> {
        if k.is_negative() {
            return Err(CovdimError::InvalidParameter(
                "interval scale factor must be nonnegative".into(),
            ));
        }
        Ok(Self { lo: &self.lo * k, hi: &self.hi * k })
    }

    /// Certified strict comparison: true only if the whole interval lies
    /// below `threshold`.
    pub fn certainly_lt(&self, threshold: &Rat) -> bool {
        &self.hi < threshold
    }

    /// Certified comparison: true only if the whole interval lies at or
    /// above `threshold`.
    pub fn certainly_ge(&self, threshold: &Rat) -> bool {
        &self.lo >= threshold
    }
}

/// Number of fractional bits kept by [`log2_bracket`].
pub const LOG2_FRACTION_BITS: u32 = 40;

/// Outward slack applied on each side of a [`log2_bracket`] result: `2^-38`.
///
/// The internal computation is accurate to better than `2^-39`, so this
/// slack strictly dominates every rounding made on the way.
pub fn log2_slack() -> Rat {
    pow2(-38)
}

/// Certified bracket `[lo, hi]` with `lo <= log2(n) <= hi`.
///
/// Powers of two return an exact point. Other inputs get a dyadic-rational
/// bracket of width at most `2^-37`, computed by square-and-shift on a
/// 128-bit mantissa with every rounding absorbed into [`log2_slack`].
pub fn log2_bracket(n: &BigUint) -> Result<(Rat, Rat)> {
    if n.is_zero() {
        return Err(CovdimError::InvalidParameter("log2 of zero".into()));
    }
    let bits = n.bits();
    let e = bits - 1;
    if n.count_ones() == 1 {
        let v = Rat::from_integer(BigInt::from(e));
        return Ok((v.clone(), v));
    }

    // Mantissa at scale 2^(W-1): an integer in [2^(W-1), 2^W) representing a
    // real value in [1, 2). Each step squares it (value in [1, 4)), extracts
    // the integer bit of the log, and renormalizes back into [1, 2).
    const W: u64 = 128;
    let mut mantissa: BigUint = if bits <= W {
        n << (W - bits) as usize
    } else {
        n >> (bits - W) as usize
    };
    let mut frac: u64 = 0;
    for _ in 0..LOG2_FRACTION_BITS {
        let sq = &mantissa * &mantissa;
        frac <<= 1;
        if sq.bits() == 2 * W {
            // Squared value is at least 2: log gains a set bit.
            frac |= 1;
            mantissa = sq >> W as usize;
        } else {
            mantissa = sq >> (W - 1) as usize;
        }
    }

    let scale = BigInt::one() << LOG2_FRACTION_BITS as usize;
    let centre = Rat::new(BigInt::from(e) * &scale + BigInt::from(frac), scale);
    let slack = log2_slack();
    let floor_e = Rat::from_integer(BigInt::from(e));
    let ceil_e = Rat::from_integer(BigInt::from(e + 1));
    let lo_raw = &centre - &slack;
    let hi_raw = &centre + &slack;
    // log2(n) lies strictly between e and e+1 here, so clamping stays sound
    // and keeps brackets inside the a-priori unit window.
    let lo = if lo_raw > floor_e { lo_raw } else { floor_e };
    let hi = if hi_raw < ceil_e { hi_raw } else { ceil_e };
    Ok((lo, hi))
}

/// Smallest tail horizon `m >= 0` with `2^(1-m) <= eps/2`, i.e. the point
/// beyond which the geometric tail of the coordinate weights is negligible
/// at scale `eps`.
pub fn tail_horizon(eps: &Rat) -> Result<u32> {
    if !eps.is_positive() {
        return Err(CovdimError::InvalidParameter(
            "tail horizon requires a positive scale".into(),
        ));
    }
    let mut m: u32 = 0;
    let mut pw = rat(4, 1); // 2^(2-m) at m = 0
    while &pw > eps {
        pw /= rat(2, 1);
        m += 1;
        if m > 4096 {
            return Err(CovdimError::InvalidParameter(
                "scale too small: tail horizon exceeds 4096".into(),
            ));
        }
    }
    Ok(m)
}

/// Minimum number of parts of diameter `< eps` needed to cover `[0, 1]`,
/// which equals the maximum size of an `eps`-separated subset of `[0, 1]`:
/// `floor(1/eps) + 1` for `eps <= 1`, and `1` for `eps > 1`.
pub fn unit_cover_count(eps: &Rat) -> Result<BigUint> {
    if !eps.is_positive() {
        return Err(CovdimError::InvalidParameter(
            "covering scale must be positive".into(),
        ));
    }
    if eps > &Rat::one() {
        return Ok(BigUint::one());
    }
    let f = rat_floor(&(Rat::one() / eps));
    Ok(f.to_biguint().expect("floor of positive rational") + BigUint::one())
}

/// Minimum number of parts of diameter `< eps` needed to cover a closed
/// interval of length `len >= 0`: `floor(len/eps) + 1`.
pub fn interval_cover_count(len: &Rat, eps: &Rat) -> Result<BigUint> {
    if len.is_negative() {
        return Err(CovdimError::InvalidParameter(
            "interval length must be nonnegative".into(),
        ));
    }
    if !eps.is_positive() {
        return Err(CovdimError::InvalidParameter(
            "covering scale must be positive".into(),
        ));
    }
    let f = rat_floor(&(len / eps));
    Ok(f.to_biguint().expect("floor of nonnegative rational") + BigUint::one())
}

/// `base^exp` for big-integer bases and u64 exponents.
pub fn biguint_pow(base: &BigUint, exp: u64) -> BigUint {
    let mut acc = BigUint::one();
    let mut b = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &b;
        }
        e >>= 1;
        if e > 0 {
            b = &b * &b;
        }
    }
    acc
}

/// Converts a nonnegative rational count bound to f64 for display only.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;

    fn bu(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["3/8", "-7/2", "42", "0", "-1"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(rat_to_string(&r), s);
        }
        assert_eq!(parse_rat("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("-1.5").unwrap(), rat(-3, 2));
        assert_eq!(parse_rat("6/8").unwrap(), rat(3, 4));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn pow2_matches_direct_computation() {
        assert_eq!(pow2(0), rat(1, 1));
        assert_eq!(pow2(5), rat(32, 1));
        assert_eq!(pow2(-3), rat(1, 8));
        assert_eq!(pow2(-1) * pow2(-1), pow2(-2));
    }

    #[test]
    fn tail_horizon_frozen_values() {
        // eps = 4 is already absorbed at m = 0; the interesting pins below
        // come from the dyadic scales the profile code uses.
        assert_eq!(tail_horizon(&rat(4, 1)).unwrap(), 0);
        assert_eq!(tail_horizon(&rat(2, 1)).unwrap(), 1);
        assert_eq!(tail_horizon(&rat(1, 1)).unwrap(), 2);
        assert_eq!(tail_horizon(&rat(1, 2)).unwrap(), 3);
        assert_eq!(tail_horizon(&rat(1, 4)).unwrap(), 4);
        assert_eq!(tail_horizon(&rat(1, 16)).unwrap(), 6);
        assert_eq!(tail_horizon(&rat(1, 256)).unwrap(), 10);
        // Non-dyadic scales round the horizon upward.
        assert_eq!(tail_horizon(&rat(1, 3)).unwrap(), 4);
        assert_eq!(tail_horizon(&rat(3, 4)).unwrap(), 3);
        assert!(tail_horizon(&rat(0, 1)).is_err());
    }

    #[test]
    fn tail_horizon_is_minimal() {
        for k in 0..20i64 {
            let eps = pow2(-k);
            let m = tail_horizon(&eps).unwrap() as i64;
            assert!(pow2(1 - m) <= &eps / rat(2, 1));
            if m > 0 {
                assert!(pow2(1 - (m - 1)) > &eps / rat(2, 1));
            }
        }
    }

    #[test]
    fn unit_cover_count_frozen_values() {
        assert_eq!(unit_cover_count(&rat(1, 2)).unwrap(), bu(3));
        assert_eq!(unit_cover_count(&rat(1, 3)).unwrap(), bu(4));
        assert_eq!(unit_cover_count(&rat(2, 3)).unwrap(), bu(2));
        assert_eq!(unit_cover_count(&rat(1, 1)).unwrap(), bu(2));
        assert_eq!(unit_cover_count(&rat(3, 1)).unwrap(), bu(1));
        assert_eq!(unit_cover_count(&rat(1, 16)).unwrap(), bu(17));
        assert!(unit_cover_count(&rat(0, 1)).is_err());
    }

    #[test]
    fn interval_cover_count_frozen_values() {
        assert_eq!(interval_cover_count(&rat(0, 1), &rat(1, 2)).unwrap(), bu(1));
        assert_eq!(interval_cover_count(&rat(1, 1), &rat(1, 2)).unwrap(), bu(3));
        assert_eq!(interval_cover_count(&rat(1, 12), &rat(1, 16)).unwrap(), bu(2));
        assert_eq!(interval_cover_count(&rat(1, 2), &rat(1, 16)).unwrap(), bu(9));
        assert!(interval_cover_count(&rat(-1, 2), &rat(1, 2)).is_err());
    }

    #[test]
    fn bounded_value_basics() {
        let v = BoundedValue::new(rat(1, 4), rat(1, 2)).unwrap();
        assert!(BoundedValue::new(rat(1, 2), rat(1, 4)).is_err());
        assert_eq!(v.width(), rat(1, 4));
        assert!(v.contains(&rat(1, 3)));
        assert!(!v.contains(&rat(2, 3)));
        assert!(v.certainly_lt(&rat(3, 4)));
        assert!(!v.certainly_lt(&rat(1, 2)));
        assert!(v.certainly_ge(&rat(1, 4)));
        assert!(!v.certainly_ge(&rat(1, 3)));

        let w = BoundedValue::new(rat(1, 3), rat(2, 5)).unwrap();
        let sum = v.add(&w);
        assert_eq!(sum.lo(), &rat(7, 12));
        assert_eq!(sum.hi(), &rat(9, 10));
        let mx = v.max(&w);
        assert_eq!(mx.lo(), &rat(1, 3));
        assert_eq!(mx.hi(), &rat(1, 2));
        let sc = v.scale(&rat(2, 1)).unwrap();
        assert_eq!(sc.lo(), &rat(1, 2));
        assert!(v.scale(&rat(-1, 1)).is_err());
    }

    #[test]
    fn log2_bracket_exact_on_powers_of_two() {
        for k in [0u64, 1, 5, 17, 63, 200] {
            let n = BigUint::one() << k as usize;
            let (lo, hi) = log2_bracket(&n).unwrap();
            assert_eq!(lo, hi);
            assert_eq!(lo, Rat::from_integer(BigInt::from(k)));
        }
        assert!(log2_bracket(&BigUint::zero()).is_err());
    }

    #[test]
    fn log2_bracket_contains_true_value_small_inputs() {
        // Sanity against f64: the bracket is far wider than f64 error here.
        for n in [3u64, 5, 6, 7, 9, 10, 100, 118098, 1_000_003] {
            let (lo, hi) = log2_bracket(&bu(n)).unwrap();
            let f = (n as f64).log2();
            let lo_f = lo.to_f64().unwrap();
            let hi_f = hi.to_f64().unwrap();
            assert!(lo_f <= f + 1e-9, "lo too high for {n}");
            assert!(hi_f >= f - 1e-9, "hi too low for {n}");
            assert!(&hi - &lo <= pow2(-37), "bracket too wide for {n}");
            assert!(lo < hi);
        }
    }

    #[test]
    fn log2_bracket_certified_by_integer_powers() {
        // Exact cross-check without floats: lo <= log2(n) <= hi implies
        // 2^floor(k*lo) <= n^k <= 2^ceil(k*hi) for every positive k.
        for n in [3u64, 7, 11, 1009] {
            let (lo, hi) = log2_bracket(&bu(n)).unwrap();
            let k = 4096u64;
            let nk = biguint_pow(&bu(n), k);
            let e_lo = rat_floor(&(&lo * Rat::from_u64(k).unwrap()))
                .to_biguint()
                .unwrap();
            let e_hi = rat_ceil(&(&hi * Rat::from_u64(k).unwrap()))
                .to_biguint()
                .unwrap();
            let lo_pow = BigUint::one() << e_lo.to_u64().unwrap() as usize;
            let hi_pow = BigUint::one() << e_hi.to_u64().unwrap() as usize;
            assert!(lo_pow <= nk, "lower power exceeds n^k for {n}");
            assert!(nk <= hi_pow, "n^k exceeds upper power for {n}");
        }
    }

    #[test]
    fn log2_bracket_handles_wide_integers() {
        // 3^400 has about 634 bits, well beyond the 128-bit mantissa window.
        let n = biguint_pow(&bu(3), 400);
        let (lo, hi) = log2_bracket(&n).unwrap();
        let (l3, h3) = log2_bracket(&bu(3)).unwrap();
        let four_hundred = Rat::from_integer(BigInt::from(400));
        // log2(3^400) = 400*log2(3); both brackets must overlap there.
        assert!(lo <= &h3 * &four_hundred);
        assert!(hi >= &l3 * &four_hundred);
        assert!(&hi - &lo <= pow2(-37));
    }

    #[test]
    fn biguint_pow_matches_repeated_multiplication() {
        let mut acc = BigUint::one();
        for e in 0..20u64 {
            assert_eq!(biguint_pow(&bu(7), e), acc);
            acc *= bu(7);
        }
        assert_eq!(biguint_pow(&bu(0), 0), BigUint::one());
        assert_eq!(biguint_pow(&bu(0), 5), BigUint::zero());
    }
}
