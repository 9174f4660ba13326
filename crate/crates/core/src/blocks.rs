//! Block systems: shift spaces whose points are, up to a phase, bi-infinite
//! concatenations of length-`N` blocks from a fixed set `K`, together with
//! the phase-decomposition covering bound and a direct-cover cross check.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::cover::{
    cover_number_exact, cover_number_greedy, CoverConfig, FiniteMetricSpace,
};
use crate::error::{CovdimError, Result};
use crate::geometry::{Dyadic, DyadicVec};
use crate::numeric::{biguint_string, interval_cover_count, tail_horizon, Rat};
use crate::word::{Extension, LatticeWord};

/// Block representation: an explicit finite list, or a box product with one
/// sub-interval per slot and coordinate (closed-form covering counts).
#[derive(Clone, Debug, PartialEq)]
pub enum BlockRep {
    Explicit(Vec<Vec<DyadicVec>>),
    Box(Vec<Vec<(Dyadic, Dyadic)>>),
}

/// A set of length-`N` blocks over symbols in `[0,1]^a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockSetRepr", into = "BlockSetRepr")]
pub struct BlockSet {
    a: u32,
    n: u32,
    rep: BlockRep,
}

#[derive(Serialize, Deserialize)]
struct BlockSetRepr {
    a: u32,
    #[serde(rename = "N")]
    n: u32,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<Vec<DyadicVec>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slots: Option<Vec<Vec<(Dyadic, Dyadic)>>>,
}

impl From<BlockSet> for BlockSetRepr {
    fn from(k: BlockSet) -> Self {
        match k.rep {
            BlockRep::Explicit(blocks) => BlockSetRepr {
                a: k.a,
                n: k.n,
                kind: "explicit".into(),
                blocks: Some(blocks),
                slots: None,
            },
            BlockRep::Box(slots) => BlockSetRepr {
                a: k.a,
                n: k.n,
                kind: "box".into(),
                blocks: None,
                slots: Some(slots),
            },
        }
    }
}

impl TryFrom<BlockSetRepr> for BlockSet {
    type Error = CovdimError;

    fn try_from(r: BlockSetRepr) -> Result<Self> {
        match (r.kind.as_str(), r.blocks, r.slots) {
            ("explicit", Some(blocks), None) => BlockSet::new_explicit(r.a, r.n, blocks),
            ("box", None, Some(slots)) => BlockSet::new_box(r.a, r.n, slots),
            (kind, _, _) => Err(CovdimError::Parse(format!(
                "block set kind {kind:?} does not match its payload"
            ))),
        }
    }
}

impl BlockSet {
    pub fn new_explicit(a: u32, n: u32, blocks: Vec<Vec<DyadicVec>>) -> Result<Self> {
        if a == 0 || n == 0 {
            return Err(CovdimError::InvalidParameter(
                "block sets need a >= 1 and N >= 1".into(),
            ));
        }
        if blocks.is_empty() {
            return Err(CovdimError::InvalidParameter(
                "explicit block set must be non-empty".into(),
            ));
        }
        for (bi, block) in blocks.iter().enumerate() {
            if block.len() != n as usize {
                return Err(CovdimError::DimensionMismatch(format!(
                    "block {bi} has {} symbols, expected {n}",
                    block.len()
                )));
            }
            for (si, sym) in block.iter().enumerate() {
                if sym.dim() != a {
                    return Err(CovdimError::DimensionMismatch(format!(
                        "block {bi} symbol {si} has dimension {}, expected {a}",
                        sym.dim()
                    )));
                }
                if !sym.in_unit_cube() {
                    return Err(CovdimError::InvalidParameter(format!(
                        "block {bi} symbol {si} leaves the unit cube"
                    )));
                }
            }
        }
        Ok(Self { a, n, rep: BlockRep::Explicit(blocks) })
    }

    pub fn new_box(a: u32, n: u32, slots: Vec<Vec<(Dyadic, Dyadic)>>) -> Result<Self> {
        if a == 0 || n == 0 {
            return Err(CovdimError::InvalidParameter(
                "block sets need a >= 1 and N >= 1".into(),
            ));
        }
        if slots.len() != n as usize {
            return Err(CovdimError::DimensionMismatch(format!(
                "box block set has {} slots, expected {n}",
                slots.len()
            )));
        }
        for (si, slot) in slots.iter().enumerate() {
            if slot.len() != a as usize {
                return Err(CovdimError::DimensionMismatch(format!(
                    "slot {si} has {} intervals, expected {a}",
                    slot.len()
                )));
            }
            for (ci, (lo, hi)) in slot.iter().enumerate() {
                if lo > hi {
                    return Err(CovdimError::InvalidParameter(format!(
                        "slot {si} coordinate {ci}: interval is reversed"
                    )));
                }
                if !hi.in_unit_interval() {
                    return Err(CovdimError::InvalidParameter(format!(
                        "slot {si} coordinate {ci}: interval leaves [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { a, n, rep: BlockRep::Box(slots) })
    }

    /// The full block cube `([0,1]^a)^N`: every word belongs to its system.
    pub fn full_cube(a: u32, n: u32) -> Result<Self> {
        let slot = vec![(Dyadic::zero(), Dyadic::one()); a as usize];
        Self::new_box(a, n, vec![slot; n as usize])
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn block_len(&self) -> u32 {
        self.n
    }

    pub fn rep(&self) -> &BlockRep {
        &self.rep
    }

    /// Exact membership of one block.
    pub fn contains_block(&self, block: &[DyadicVec]) -> bool {
        if block.len() != self.n as usize {
            return false;
        }
        match &self.rep {
            BlockRep::Explicit(blocks) => blocks.iter().any(|b| b.as_slice() == block),
            BlockRep::Box(slots) => slots.iter().zip(block).all(|(slot, sym)| {
                sym.dim() == self.a
                    && slot
                        .iter()
                        .zip(sym.coords())
                        .all(|((lo, hi), c)| lo <= c && c <= hi)
            }),
        }
    }

    /// Certified upper bound on the `l∞` covering number of the block set
    /// at the given scale: closed per-coordinate product for boxes, exact
    /// enumeration (within the cap) for explicit sets.
    pub fn cover_count_upper(&self, eps: &Rat, config: &CoverConfig) -> Result<BigUint> {
        match &self.rep {
            BlockRep::Box(slots) => {
                let mut count = BigUint::one();
                for slot in slots {
                    for (lo, hi) in slot {
                        let len = hi.value() - lo.value();
                        count *= interval_cover_count(&len, eps)?;
                    }
                }
                Ok(count)
            }
            BlockRep::Explicit(blocks) => {
                let points: Vec<DyadicVec> = blocks
                    .iter()
                    .map(|b| {
                        DyadicVec::new(
                            b.iter().flat_map(|s| s.coords().iter().copied()).collect(),
                        )
                    })
                    .collect();
                let space = FiniteMetricSpace::from_points_linf(&points)?;
                let res = cover_number_exact(&space, eps, config)?;
                Ok(res.upper.clone())
            }
        }
    }

    /// A small deterministic selection of member blocks, used to seed
    /// direct-cover samples.
    fn sample_blocks(&self) -> Vec<Vec<DyadicVec>> {
        match &self.rep {
            BlockRep::Explicit(blocks) => blocks.iter().take(8).cloned().collect(),
            BlockRep::Box(slots) => {
                let corner = |hi: bool| -> Vec<DyadicVec> {
                    slots
                        .iter()
                        .map(|slot| {
                            DyadicVec::new(
                                slot.iter()
                                    .map(|(l, h)| if hi { *h } else { *l })
                                    .collect(),
                            )
                        })
                        .collect()
                };
                let lo = corner(false);
                let hi = corner(true);
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            }
        }
    }
}

/// The shift space generated by a block set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSystem {
    pub k: BlockSet,
}

impl BlockSystem {
    pub fn new(k: BlockSet) -> Self {
        Self { k }
    }
}

/// Decides membership of a periodic word in the block system: scans every
/// phase `l` in `{0, …, N-1}` and accepts at the first one whose aligned
/// length-`N` windows all lie in `K` across the horizon. Returns the
/// accepting phase.
///
/// The horizon must be a positive multiple of `lcm(period, N)`, so the
/// scanned windows repeat verbatim beyond it and the finite scan decides
/// the full quantifier. Non-periodic words are refused: their membership is
/// not determined by any finite window.
pub fn block_membership(x: &LatticeWord, k: &BlockSet, horizon: u64) -> Result<Option<u32>> {
    if x.extension() != Extension::Periodic {
        return Err(CovdimError::Unsupported(
            "block membership is decided for periodic words only".into(),
        ));
    }
    if x.a() != k.a() {
        return Err(CovdimError::DimensionMismatch(format!(
            "word dimension {} vs block alphabet {}",
            x.a(),
            k.a()
        )));
    }
    let n = k.block_len() as u64;
    let cycle = x.window_len().lcm(&n);
    if horizon == 0 || !horizon.is_multiple_of(cycle) {
        return Err(CovdimError::InvalidParameter(format!(
            "horizon {horizon} must be a positive multiple of lcm(period, N) = {cycle}"
        )));
    }
    let windows = horizon / n;
    for phase in 0..k.block_len() {
        let mut all_in = true;
        'scan: for t in 0..windows {
            let start = phase as i64 + (t * n) as i64;
            let block: Vec<DyadicVec> =
                (0..k.block_len()).map(|j| x.symbol_at(start + j as i64)).collect();
            if !k.contains_block(&block) {
                all_in = false;
                break 'scan;
            }
        }
        if all_in {
            return Ok(Some(phase));
        }
    }
    Ok(None)
}

/// The phase-decomposition covering bound: `N · c^(ceil((L+2m)/N) + 2)`,
/// where `c` upper-bounds the block-set covering number at scale `eps/9`
/// and `m` is the tail horizon for `eps`. Rounding the exponent up keeps it
/// an upper bound, since `c >= 1`.
pub fn lemma51_bound(cover_count_k: &BigUint, n: u32, l: u64, eps: &Rat) -> Result<BigUint> {
    if n == 0 || l == 0 {
        return Err(CovdimError::InvalidParameter(
            "block length and horizon must be at least 1".into(),
        ));
    }
    if cover_count_k < &BigUint::one() {
        return Err(CovdimError::InvalidParameter(
            "block cover count must be at least 1".into(),
        ));
    }
    let m = tail_horizon(eps)? as u64;
    let exponent = (l + 2 * m).div_ceil(n as u64) + 2;
    Ok(BigUint::from(n) * cover_count_k.pow(exponent as u32))
}

/// Certified covering report for a block system at horizon `L`.
#[derive(Clone, Debug, Serialize)]
pub struct BlockCoverReport {
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "L")]
    pub l: u64,
    pub m: u32,
    #[serde(with = "biguint_string")]
    pub count_k: BigUint,
    #[serde(with = "biguint_string")]
    pub formula: BigUint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct: Option<u64>,
}

/// Upper bound on the covering number of the block system at horizon `L`
/// and scale `eps`, by the phase-decomposition formula. With `direct` set,
/// also covers a small periodic sample of the system under the certified
/// metric and checks it never exceeds the formula.
pub fn block_cover_upper(
    k: &BlockSet,
    l: u64,
    eps: &Rat,
    config: &CoverConfig,
    direct: bool,
) -> Result<BlockCoverReport> {
    let nine = Rat::from_integer(9.into());
    let fine = eps / nine;
    let count_k = k.cover_count_upper(&fine, config)?;
    let formula = lemma51_bound(&count_k, k.block_len(), l, eps)?;
    let m = tail_horizon(eps)?;
    let direct_count = if direct {
        let mut words: Vec<LatticeWord> = Vec::new();
        'outer: for block in k.sample_blocks() {
            let base = LatticeWord::new(k.a(), 0, block, Extension::Periodic)?;
            for phase in 0..k.block_len() {
                let w = base.shift(phase as i64)?;
                if !words.contains(&w) {
                    words.push(w);
                }
                if words.len() == 64 {
                    break 'outer;
                }
            }
        }
        let space = FiniteMetricSpace::from_words_orbit(&words, l as u32, m)?;
        let res = cover_number_greedy(&space, eps)?;
        let n_parts: u64 = res.upper.clone().try_into().map_err(|_| {
            CovdimError::Internal("direct cover count exceeds u64".into())
        })?;
        if BigUint::from(n_parts) > formula {
            return Err(CovdimError::Internal(format!(
                "direct sample cover {n_parts} exceeds formula bound {formula}"
            )));
        }
        Some(n_parts)
    } else {
        None
    };
    Ok(BlockCoverReport {
        n: k.block_len(),
        l,
        m,
        count_k,
        formula,
        direct: direct_count,
    })
}
