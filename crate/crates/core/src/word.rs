//! Finitely-windowed points of the full shift `([0,1]^a)^Z` and the
//! associated base and orbit-segment metrics with certified truncation.
//!
//! A [`LatticeWord`] stores explicit symbols on a window `[lo, hi]` and a
//! rule for the rest of the lattice: zero-fill or periodic repetition of the
//! stored window. The base metric weights coordinate differences by
//! `2^-|n|`; its value is computed exactly on a reach that contains both
//! windows and the requested tail horizon, and the remaining geometric tail
//! is enclosed by an interval using the exact supremum of the residual
//! symbol differences (zero for matching zero-fill tails).

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{CovdimError, Result};
use crate::geometry::{linf_dist, Dyadic, DyadicVec};
use crate::numeric::{pow2, BoundedValue, Rat};

/// How a word continues beyond its stored window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    /// All symbols outside the window are the origin of `[0,1]^a`.
    Zero,
    /// The stored window repeats with period equal to its length.
    Periodic,
}

/// Cap on the combined period used when taking exact suprema over the tails
/// of two periodic words; beyond it the sup is soundly replaced by 1.
const PERIOD_SUP_CAP: u128 = 1_000_000;

/// A finitely-windowed point of `([0,1]^a)^Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeWordRepr")]
pub struct LatticeWord {
    a: u32,
    lo: i64,
    hi: i64,
    extension: Extension,
    symbols: Vec<DyadicVec>,
}

#[derive(Deserialize)]
struct LatticeWordRepr {
    a: u32,
    lo: i64,
    hi: i64,
    extension: Extension,
    symbols: Vec<DyadicVec>,
}

impl TryFrom<LatticeWordRepr> for LatticeWord {
    type Error = CovdimError;

    fn try_from(r: LatticeWordRepr) -> Result<Self> {
        let w = LatticeWord::new(r.a, r.lo, r.symbols, r.extension)?;
        if w.hi != r.hi {
            return Err(CovdimError::InvalidParameter(format!(
                "window upper bound {} does not match {} symbols from {}",
                r.hi,
                w.symbols.len(),
                r.lo
            )));
        }
        Ok(w)
    }
}

impl LatticeWord {
    /// Builds a word with symbols on `[lo, lo + symbols.len() - 1]`.
    pub fn new(a: u32, lo: i64, symbols: Vec<DyadicVec>, extension: Extension) -> Result<Self> {
        if a == 0 {
            return Err(CovdimError::InvalidParameter(
                "alphabet dimension must be at least 1".into(),
            ));
        }
        if symbols.is_empty() {
            return Err(CovdimError::InvalidParameter(
                "a word stores at least one symbol".into(),
            ));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.dim() != a {
                return Err(CovdimError::DimensionMismatch(format!(
                    "symbol {i} has dimension {}, expected {a}",
                    s.dim()
                )));
            }
            if !s.in_unit_cube() {
                return Err(CovdimError::InvalidParameter(format!(
                    "symbol {i} has a coordinate outside [0, 1]"
                )));
            }
        }
        let hi = lo
            .checked_add(symbols.len() as i64 - 1)
            .ok_or_else(|| CovdimError::InvalidParameter("window bounds overflow".into()))?;
        Ok(Self { a, lo, hi, extension, symbols })
    }

    /// The all-zero point, stored as a single symbol with zero-fill.
    pub fn zero(a: u32) -> Result<Self> {
        Self::new(a, 0, vec![DyadicVec::zeros(a)], Extension::Zero)
    }

    /// A periodic word whose stored window is exactly one period starting
    /// at index 0.
    pub fn periodic(a: u32, symbols: Vec<DyadicVec>) -> Result<Self> {
        Self::new(a, 0, symbols, Extension::Periodic)
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn symbols(&self) -> &[DyadicVec] {
        &self.symbols
    }

    /// Stored window length; for periodic words this is the period.
    pub fn window_len(&self) -> u64 {
        self.symbols.len() as u64
    }

    /// The symbol at lattice index `n`, applying the extension rule.
    pub fn symbol_at(&self, n: i64) -> DyadicVec {
        if n >= self.lo && n <= self.hi {
            return self.symbols[(n - self.lo) as usize].clone();
        }
        match self.extension {
            Extension::Zero => DyadicVec::zeros(self.a),
            Extension::Periodic => {
                let p = self.symbols.len() as i64;
                let idx = (n - self.lo).rem_euclid(p);
                self.symbols[idx as usize].clone()
            }
        }
    }

    /// The shift `σ^k`: `(σ^k x)_n = x_{n+k}`, so the window translates
    /// by `-k`.
    pub fn shift(&self, k: i64) -> Result<Self> {
        let lo = self
            .lo
            .checked_sub(k)
            .ok_or_else(|| CovdimError::InvalidParameter("shift overflows window".into()))?;
        let hi = self
            .hi
            .checked_sub(k)
            .ok_or_else(|| CovdimError::InvalidParameter("shift overflows window".into()))?;
        Ok(Self {
            a: self.a,
            lo,
            hi,
            extension: self.extension,
            symbols: self.symbols.clone(),
        })
    }

    /// The symbols `(x_from, ..., x_to)` with the extension rule applied
    /// outside the stored window.
    pub fn window(&self, from: i64, to: i64) -> Result<Vec<DyadicVec>> {
        if from > to {
            return Err(CovdimError::InvalidParameter(format!(
                "window bounds out of order: [{from}, {to}]"
            )));
        }
        Ok((from..=to).map(|n| self.symbol_at(n)).collect())
    }
}

/// Largest sup-norm symbol difference over the index range `[from, to]`.
pub fn window_linf_dist(x: &LatticeWord, y: &LatticeWord, from: i64, to: i64) -> Result<Dyadic> {
    if x.a() != y.a() {
        return Err(CovdimError::DimensionMismatch(format!(
            "words have alphabet dimensions {} and {}",
            x.a(),
            y.a()
        )));
    }
    let mut best = Dyadic::zero();
    for n in from..=to {
        let d = linf_dist(&x.symbol_at(n), &y.symbol_at(n))?;
        if d > best {
            best = d;
        }
    }
    Ok(best)
}

/// Exact supremum of `‖x_n - y_n‖∞` over all `|n| > reach`, or a sound
/// overestimate (1) past the period cap.
fn tail_sup(x: &LatticeWord, y: &LatticeWord, reach: i64) -> Result<Dyadic> {
    match (x.extension, y.extension) {
        (Extension::Zero, Extension::Zero) => Ok(Dyadic::zero()),
        (Extension::Zero, Extension::Periodic) | (Extension::Periodic, Extension::Zero) => {
            // The zero-fill side vanishes beyond the reach (callers always
            // pass a reach containing both windows), so the sup is the
            // largest symbol norm of the periodic side; every residue class
            // of its period appears beyond any finite reach.
            let p = if x.extension == Extension::Periodic { x } else { y };
            let mut best = Dyadic::zero();
            for s in &p.symbols {
                let n = s.sup_norm();
                if n > best {
                    best = n;
                }
            }
            Ok(best)
        }
        (Extension::Periodic, Extension::Periodic) => {
            let px = x.symbols.len() as u128;
            let py = y.symbols.len() as u128;
            let l = px.lcm(&py);
            if l > PERIOD_SUP_CAP {
                return Ok(Dyadic::one());
            }
            // Beyond the reach every residue class modulo the joint period
            // appears, so one window of that length is an exact supremum.
            let mut best = Dyadic::zero();
            for t in 1..=l as i64 {
                let n = reach + t;
                let d = linf_dist(&x.symbol_at(n), &y.symbol_at(n))?;
                if d > best {
                    best = d;
                }
            }
            Ok(best)
        }
    }
}

/// Certified interval for the base metric
/// `D(x, y) = Σ_n 2^-|n| ‖x_n - y_n‖∞`.
///
/// The sum is computed exactly on the reach
/// `R = max(m, |window bounds|)`; the tail beyond `R` is enclosed by
/// `[0, T · 2^(1-R)]` where `T` is the exact supremum of the remaining
/// symbol differences. Pairs whose difference vanishes beyond the reach
/// (for instance two zero-fill words) therefore get a point interval.
pub fn metric_d(x: &LatticeWord, y: &LatticeWord, m: u32) -> Result<BoundedValue> {
    if x.a() != y.a() {
        return Err(CovdimError::DimensionMismatch(format!(
            "words have alphabet dimensions {} and {}",
            x.a(),
            y.a()
        )));
    }
    let reach = (m as i64)
        .max(x.lo.abs())
        .max(x.hi.abs())
        .max(y.lo.abs())
        .max(y.hi.abs());
    let mut exact = Rat::from_integer(0.into());
    for n in -reach..=reach {
        let d = linf_dist(&x.symbol_at(n), &y.symbol_at(n))?;
        if !d.is_zero() {
            exact += d.value() * pow2(-n.abs());
        }
    }
    let t = tail_sup(x, y, reach)?;
    if t.is_zero() {
        return Ok(BoundedValue::point(exact));
    }
    let tail_hi = t.value() * pow2(1 - reach);
    let hi = &exact + tail_hi;
    BoundedValue::new(exact, hi)
}

/// Certified interval for the orbit-segment metric
/// `d_N(x, y) = max_{0 <= j < N} D(σ^j x, σ^j y)`, computed as the interval
/// join of the per-shift base-metric intervals.
pub fn metric_dn(x: &LatticeWord, y: &LatticeWord, n: u32, m: u32) -> Result<BoundedValue> {
    if n == 0 {
        return Err(CovdimError::InvalidParameter(
            "orbit-segment metric needs a horizon of at least 1".into(),
        ));
    }
    let mut acc = metric_d(x, y, m)?;
    for j in 1..n {
        let dx = x.shift(j as i64)?;
        let dy = y.shift(j as i64)?;
        acc = acc.max(&metric_d(&dx, &dy, m)?);
    }
    Ok(acc)
}
