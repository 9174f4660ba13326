//! Dyadic coordinates, dyadic vectors, and quantized unit-cube grids.
//!
//! Coordinates are nonnegative dyadic rationals `num / 2^q` stored reduced.
//! They are the working currency of the crate: every point of a quantized
//! system, every grid node, and every covering scale that needs to be exact
//! under halving lives here. Arbitrary rationals ([`crate::numeric::Rat`])
//! are used for aggregated quantities.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

use crate::error::{CovdimError, Result};
use crate::numeric::Rat;

/// Maximum resolution exponent a [`Dyadic`] may carry after reduction.
pub const MAX_DYADIC_EXP: u32 = 62;

/// A nonnegative dyadic rational `num / 2^q`, stored reduced (odd numerator
/// unless the value is an integer).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: u64,
    q: u32,
}

impl Dyadic {
    /// Builds `num / 2^q`, reducing to the lowest exponent.
    pub fn new(num: u64, q: u32) -> Result<Self> {
        if q > MAX_DYADIC_EXP {
            return Err(CovdimError::InvalidParameter(format!(
                "dyadic exponent {q} exceeds maximum {MAX_DYADIC_EXP}"
            )));
        }
        let mut num = num;
        let mut q = q;
        while q > 0 && num.is_multiple_of(2) {
            num /= 2;
            q -= 1;
        }
        if num > (1u64 << MAX_DYADIC_EXP) {
            return Err(CovdimError::InvalidParameter(format!(
                "dyadic numerator {num} exceeds supported range"
            )));
        }
        Ok(Self { num, q })
    }

    pub fn zero() -> Self {
        Self { num: 0, q: 0 }
    }

    pub fn one() -> Self {
        Self { num: 1, q: 0 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn exp(&self) -> u32 {
        self.q
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Exact value as a rational.
    pub fn value(&self) -> Rat {
        Rat::new(BigInt::from(self.num), BigInt::one() << self.q as usize)
    }

    /// True when the value lies in `[0, 1]`.
    pub fn in_unit_interval(&self) -> bool {
        self.num <= (1u64 << self.q)
    }

    /// Exact absolute difference, still dyadic.
    pub fn abs_diff(&self, other: &Self) -> Result<Self> {
        let q = self.q.max(other.q);
        let a = (self.num as u128) << (q - self.q);
        let b = (other.num as u128) << (q - other.q);
        let d = a.abs_diff(b);
        let num = u64::try_from(d).map_err(|_| {
            CovdimError::InvalidParameter("dyadic difference exceeds supported range".into())
        })?;
        Self::new(num, q)
    }

    /// Builds the dyadic equal to `r`, if `r` is a nonnegative dyadic
    /// rational within range.
    pub fn from_rat(r: &Rat) -> Result<Self> {
        if r < &Rat::from_integer(BigInt::from(0)) {
            return Err(CovdimError::InvalidParameter(
                "dyadic values are nonnegative".into(),
            ));
        }
        let denom = r.denom();
        let mut q = 0u32;
        let mut d = denom.clone();
        let two = BigInt::from(2);
        while d.is_even() {
            d /= &two;
            q += 1;
            if q > MAX_DYADIC_EXP {
                return Err(CovdimError::InvalidParameter(format!(
                    "denominator of {} is not a power of two within range",
                    r
                )));
            }
        }
        if !d.is_one() {
            return Err(CovdimError::InvalidParameter(format!(
                "{} is not a dyadic rational",
                r
            )));
        }
        let num = r.numer().try_into().map_err(|_| {
            CovdimError::InvalidParameter(format!("numerator of {} out of range", r))
        })?;
        Self::new(num, q)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        // Cross-multiply at the common exponent; exponents stay <= 62 and
        // numerators < 2^63, so u128 cannot overflow.
        let a = (self.num as u128) << other.q;
        let b = (other.num as u128) << self.q;
        a.cmp(&b)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, 1u64 << self.q)
        }
    }
}

impl std::str::FromStr for Dyadic {
    type Err = CovdimError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let num: u64 = n
                .trim()
                .parse()
                .map_err(|e| CovdimError::Parse(format!("bad dyadic numerator {n:?}: {e}")))?;
            let den: u64 = d
                .trim()
                .parse()
                .map_err(|e| CovdimError::Parse(format!("bad dyadic denominator {d:?}: {e}")))?;
            if den == 0 || !den.is_power_of_two() {
                return Err(CovdimError::Parse(format!(
                    "dyadic denominator must be a power of two, got {den}"
                )));
            }
            Dyadic::new(num, den.trailing_zeros())
        } else {
            let num: u64 = t
                .parse()
                .map_err(|e| CovdimError::Parse(format!("bad dyadic {t:?}: {e}")))?;
            Dyadic::new(num, 0)
        }
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(de::Error::custom)
    }
}

/// A point of `[0, 1]^dim` (or more generally a finite dyadic vector).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicVec {
    coords: Vec<Dyadic>,
}

impl DyadicVec {
    pub fn new(coords: Vec<Dyadic>) -> Self {
        Self { coords }
    }

    /// The origin of `[0, 1]^dim`.
    pub fn zeros(dim: u32) -> Self {
        Self { coords: vec![Dyadic::zero(); dim as usize] }
    }

    pub fn dim(&self) -> u32 {
        self.coords.len() as u32
    }

    pub fn coords(&self) -> &[Dyadic] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> Option<&Dyadic> {
        self.coords.get(i)
    }

    /// True when every coordinate lies in `[0, 1]`.
    pub fn in_unit_cube(&self) -> bool {
        self.coords.iter().all(Dyadic::in_unit_interval)
    }

    /// Largest coordinate (sup norm against the origin); zero for dim 0.
    pub fn sup_norm(&self) -> Dyadic {
        self.coords.iter().copied().max().unwrap_or_else(Dyadic::zero)
    }
}

impl Serialize for DyadicVec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<Dyadic>::deserialize(d)?;
        Ok(Self { coords })
    }
}

/// Exact sup-norm distance between two dyadic vectors of equal dimension.
pub fn linf_dist(x: &DyadicVec, y: &DyadicVec) -> Result<Dyadic> {
    if x.dim() != y.dim() {
        return Err(CovdimError::DimensionMismatch(format!(
            "sup-norm distance of vectors with dims {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let mut best = Dyadic::zero();
    for (a, b) in x.coords().iter().zip(y.coords()) {
        let d = a.abs_diff(b)?;
        if d > best {
            best = d;
        }
    }
    Ok(best)
}

/// The grid of dyadic points `{0, 1/2^q, ..., 1}^dim` inside the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QGrid {
    pub dim: u32,
    pub q: u32,
}

impl QGrid {
    pub fn new(dim: u32, q: u32) -> Result<Self> {
        if q > MAX_DYADIC_EXP {
            return Err(CovdimError::InvalidParameter(format!(
                "grid exponent {q} exceeds maximum {MAX_DYADIC_EXP}"
            )));
        }
        Ok(Self { dim, q })
    }

    /// Points per axis: `2^q + 1`.
    pub fn axis_points(&self) -> u64 {
        (1u64 << self.q) + 1
    }

    /// Total point count `(2^q + 1)^dim`, if it fits in u128.
    pub fn points_total(&self) -> Option<u128> {
        let per = self.axis_points() as u128;
        let mut acc: u128 = 1;
        for _ in 0..self.dim {
            acc = acc.checked_mul(per)?;
        }
        Some(acc)
    }

    /// Grid spacing `2^-q` as an exact rational.
    pub fn spacing(&self) -> Rat {
        crate::numeric::pow2(-(self.q as i64))
    }
}

/// Enumerates all grid points in lexicographic order of numerators (first
/// coordinate most significant), refusing to blow the `cap`.
pub fn enumerate_grid(grid: &QGrid, cap: u64) -> Result<Vec<DyadicVec>> {
    let total = grid.points_total().ok_or_else(|| {
        CovdimError::BudgetExceeded("grid point count overflows u128".into())
    })?;
    if total > cap as u128 {
        return Err(CovdimError::BudgetExceeded(format!(
            "grid has {total} points, cap is {cap}"
        )));
    }
    let per_axis = grid.axis_points();
    let dim = grid.dim as usize;
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0u64; dim];
    loop {
        let coords = idx
            .iter()
            .map(|&n| Dyadic::new(n, grid.q))
            .collect::<Result<Vec<_>>>()?;
        out.push(DyadicVec::new(coords));
        // Odometer with the last coordinate fastest.
        let mut pos = dim;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if idx[pos] + 1 < per_axis {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Minimum number of parts of diameter `< eps` needed to cover one grid
/// axis `{0, 1/2^q, ..., 1}`, which equals the maximum size of an
/// `eps`-separated subset of the axis.
///
/// With `s = ceil(eps * 2^q)` grid steps per part, the count is
/// `floor(2^q / s) + 1`; it coincides with the continuum count
/// `floor(1/eps) + 1` as soon as `2^-q <= eps/4`.
pub fn axis_cover_count(q: u32, eps: &Dyadic) -> Result<u64> {
    if eps.is_zero() {
        return Err(CovdimError::InvalidParameter(
            "covering scale must be positive".into(),
        ));
    }
    if q > MAX_DYADIC_EXP {
        return Err(CovdimError::InvalidParameter(format!(
            "grid exponent {q} exceeds maximum {MAX_DYADIC_EXP}"
        )));
    }
    let pow = 1u128 << q;
    // s = ceil(num * 2^q / 2^eq), computed exactly in u128.
    let scaled = (eps.num() as u128) << q;
    let den = 1u128 << eps.exp();
    let s = scaled.div_ceil(den);
    if s > pow {
        return Ok(1);
    }
    Ok((pow / s) as u64 + 1)
}
