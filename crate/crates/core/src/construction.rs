//! The inductive minimal-subshift construction: a tower of block sets whose
//! free-slot density converges onto a target ratio, waypoint sequences that
//! realize every coarse pattern pair consecutively, cube embeddings into the
//! resulting system, and the expansivity / recurrence verifications.
//!
//! Level 1 is the full symbol cube. Each transition `n -> n+1` chooses a
//! waypoint sequence `w_1, …, w_q` through a finite net of the level-`n`
//! blocks (an Eulerian circuit over the complete net digraph, so every
//! ordered net pair occurs consecutively), then forms the level-`n+1` blocks
//! as `p - q` free level-`n` blocks followed by the `q` pinned waypoints.
//! All bookkeeping is exact rational arithmetic.

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::blocks::{BlockRep, BlockSet};
use crate::error::{CovdimError, Result};
use crate::geometry::{linf_dist, Dyadic, DyadicVec};
use crate::numeric::{rat, rat_ceil, rat_string, Rat};
use crate::word::{metric_dn, Extension, LatticeWord};

/// Largest net size (node count) the waypoint builder will enumerate; the
/// waypoint count is the square of this plus one.
pub const NET_CAP: u64 = 128;

/// Largest block length a transition may produce.
const BLOCK_LEN_CAP: u64 = 1 << 31;

/// One level of the tower: its block set, and — once the next level has
/// been built — the transition data `(p, q, r, waypoints)` leading out of
/// it.
#[derive(Clone, Debug, Serialize)]
pub struct Level {
    pub n: u32,
    #[serde(rename = "N")]
    pub block_len: u64,
    #[serde(rename = "M")]
    pub free_slots: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(with = "crate::numeric::rat_opt_string", skip_serializing_if = "Option::is_none")]
    pub r: Option<Rat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Vec<DyadicVec>>>,
    #[serde(skip)]
    k: BlockSet,
    #[serde(skip)]
    free_positions: Vec<u64>,
}

impl Level {
    /// Level 1: the full cube, one free slot.
    pub fn base(a: u32) -> Result<Self> {
        let k = BlockSet::full_cube(a, 1)?;
        Ok(Self {
            n: 1,
            block_len: 1,
            free_slots: 1,
            p: None,
            q: None,
            r: None,
            waypoints: None,
            free_positions: vec![0],
            k,
        })
    }

    pub fn block_set(&self) -> &BlockSet {
        &self.k
    }

    pub fn free_positions(&self) -> &[u64] {
        &self.free_positions
    }

    /// Free-slot density `M_n / N_n`.
    pub fn density(&self) -> Rat {
        rat(self.free_slots as i64, self.block_len as i64)
    }

    fn from_block_set(n: u32, k: BlockSet) -> Result<Self> {
        let (free_positions, _) = classify_slots(&k)?;
        Ok(Self {
            n,
            block_len: slot_count(&k),
            free_slots: free_positions.len() as u64,
            p: None,
            q: None,
            r: None,
            waypoints: None,
            free_positions,
            k,
        })
    }

    /// The block carrying `x` in the free slots and the pinned values
    /// elsewhere. `x` has `a · M_n` coordinates, free slots in order.
    pub fn fill_block(&self, x: &[Dyadic]) -> Result<Vec<DyadicVec>> {
        let a = self.k.a() as usize;
        if x.len() != a * self.free_slots as usize {
            return Err(CovdimError::DimensionMismatch(format!(
                "level {} expects {} coordinates, got {}",
                self.n,
                a * self.free_slots as usize,
                x.len()
            )));
        }
        for (i, c) in x.iter().enumerate() {
            if !c.in_unit_interval() {
                return Err(CovdimError::InvalidParameter(format!(
                    "coordinate {i} outside [0, 1]"
                )));
            }
        }
        let BlockRep::Box(slots) = self.k.rep() else {
            return Err(CovdimError::Internal("level block set must be a box".into()));
        };
        let mut block = Vec::with_capacity(slots.len());
        let mut next_free = 0usize;
        for (pos, slot) in slots.iter().enumerate() {
            if self.free_positions.binary_search(&(pos as u64)).is_ok() {
                let coords = x[next_free * a..(next_free + 1) * a].to_vec();
                block.push(DyadicVec::new(coords));
                next_free += 1;
            } else {
                block.push(DyadicVec::new(slot.iter().map(|(lo, _)| *lo).collect()));
            }
        }
        Ok(block)
    }
}

fn slot_count(k: &BlockSet) -> u64 {
    match k.rep() {
        BlockRep::Box(slots) => slots.len() as u64,
        BlockRep::Explicit(_) => 0,
    }
}

/// Splits a box block set into free slots (full unit cubes) and pinned
/// slots (degenerate intervals). Anything else is not a tower block set.
fn classify_slots(k: &BlockSet) -> Result<(Vec<u64>, Vec<u64>)> {
    let BlockRep::Box(slots) = k.rep() else {
        return Err(CovdimError::Unsupported(
            "waypoint construction needs a box block set".into(),
        ));
    };
    let mut free = Vec::new();
    let mut pinned = Vec::new();
    for (i, slot) in slots.iter().enumerate() {
        if slot.iter().all(|(lo, hi)| lo.is_zero() && *hi == Dyadic::one()) {
            free.push(i as u64);
        } else if slot.iter().all(|(lo, hi)| lo == hi) {
            pinned.push(i as u64);
        } else {
            return Err(CovdimError::Unsupported(format!(
                "slot {i} is neither a free cube nor a pinned point"
            )));
        }
    }
    Ok((free, pinned))
}

/// Smallest power of two `nu` with `2·nu > n`, so axis centers at spacing
/// `1/nu` are strictly within `1/(2n) < 1/n` of every point of `[0, 1]`.
fn net_resolution(n: u32) -> u64 {
    let mut nu = 1u64;
    while 2 * nu <= n as u64 {
        nu *= 2;
    }
    nu
}

/// The level-`n` net of a tower block set: every combination of axis
/// centers `(2j+1)/(2·nu)` in the free slots, pinned values elsewhere.
/// Returned in lexicographic order (first free coordinate most
/// significant).
fn net_blocks(k: &BlockSet, n: u32) -> Result<Vec<Vec<DyadicVec>>> {
    if n == 0 {
        return Err(CovdimError::InvalidParameter(
            "net tolerance level must be at least 1".into(),
        ));
    }
    let (free, _) = classify_slots(k)?;
    let a = k.a();
    let digits = a as u64 * free.len() as u64;
    let nu = net_resolution(n);
    let mut size = 1u64;
    for _ in 0..digits {
        size = size.checked_mul(nu).filter(|&s| s <= NET_CAP).ok_or_else(|| {
            CovdimError::BudgetExceeded(format!(
                "net of {digits} coordinates at {nu} values per axis exceeds cap {NET_CAP}"
            ))
        })?;
    }
    let two_nu_exp = (nu * 2).trailing_zeros();
    let axis: Vec<Dyadic> = (0..nu)
        .map(|j| Dyadic::new(2 * j + 1, two_nu_exp))
        .collect::<Result<_>>()?;
    // The axis centers must sit strictly within 1/(2n) of every point.
    if rat(1, 2 * nu as i64) >= rat(1, n as i64) {
        return Err(CovdimError::Internal(
            "net resolution fails its tolerance bound".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(size as usize);
    for node in 0..size {
        let mut digits_rev = Vec::with_capacity(digits as usize);
        let mut rest = node;
        for _ in 0..digits {
            digits_rev.push((rest % nu) as usize);
            rest /= nu;
        }
        digits_rev.reverse();
        let coords: Vec<Dyadic> = digits_rev.iter().map(|&d| axis[d]).collect();
        blocks.push(fill_with_free_coords(k, &free, &coords)?);
    }
    Ok(blocks)
}

fn fill_with_free_coords(
    k: &BlockSet,
    free: &[u64],
    coords: &[Dyadic],
) -> Result<Vec<DyadicVec>> {
    let BlockRep::Box(slots) = k.rep() else {
        return Err(CovdimError::Internal("tower block set must be a box".into()));
    };
    let a = k.a() as usize;
    let mut block = Vec::with_capacity(slots.len());
    let mut next_free = 0usize;
    for (pos, slot) in slots.iter().enumerate() {
        if free.binary_search(&(pos as u64)).is_ok() {
            block.push(DyadicVec::new(coords[next_free * a..(next_free + 1) * a].to_vec()));
            next_free += 1;
        } else {
            block.push(DyadicVec::new(slot.iter().map(|(lo, _)| *lo).collect()));
        }
    }
    Ok(block)
}

/// Lexicographic Eulerian circuit over the complete digraph with loops on
/// `g` nodes: a node sequence of length `g² + 1` in which every ordered
/// pair of nodes occurs consecutively exactly once.
fn eulerian_circuit(g: u64) -> Vec<u64> {
    let mut next_out = vec![0u64; g as usize];
    let mut stack = vec![0u64];
    let mut circuit = Vec::with_capacity((g * g + 1) as usize);
    while let Some(&v) = stack.last() {
        if next_out[v as usize] < g {
            let w = next_out[v as usize];
            next_out[v as usize] += 1;
            stack.push(w);
        } else {
            circuit.push(v);
            stack.pop();
        }
    }
    circuit.reverse();
    circuit
}

/// ℓ∞ distance between two blocks of equal length.
fn block_linf(u: &[DyadicVec], v: &[DyadicVec]) -> Result<Dyadic> {
    if u.len() != v.len() {
        return Err(CovdimError::DimensionMismatch(
            "blocks have different lengths".into(),
        ));
    }
    let mut best = Dyadic::zero();
    for (a, b) in u.iter().zip(v) {
        let d = linf_dist(a, b)?;
        if d > best {
            best = d;
        }
    }
    Ok(best)
}

/// Builds the waypoint sequence for one transition: net blocks of the
/// level-`n` block set joined by a lexicographic Eulerian circuit, so every
/// ordered net pair appears consecutively. The density property (every pair
/// of net blocks approximated within `1/n` by a consecutive waypoint pair)
/// is re-verified exhaustively before returning.
pub fn build_waypoints(k: &BlockSet, n: u32) -> Result<Vec<Vec<DyadicVec>>> {
    let nodes = net_blocks(k, n)?;
    let g = nodes.len() as u64;
    let circuit = eulerian_circuit(g);
    if circuit.len() as u64 != g * g + 1 {
        return Err(CovdimError::Internal(
            "Eulerian circuit has the wrong length".into(),
        ));
    }
    // Exhaustive density check over the net: every ordered pair must occur
    // consecutively (with exact equality, distance 0 < 1/n).
    let mut seen = vec![false; (g * g) as usize];
    for w in circuit.windows(2) {
        seen[(w[0] * g + w[1]) as usize] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(CovdimError::Internal(
            "waypoint circuit misses an ordered net pair".into(),
        ));
    }
    Ok(circuit.into_iter().map(|v| nodes[v as usize].clone()).collect())
}

/// Builds the next level from `prev` at the given ratio target. Returns the
/// completed previous level (transition data filled in) and the new level.
///
/// `q` is the waypoint count; `p` is the smallest integer above `q` with
/// `q/p <= r_target`, so the density shrink factor `1 - q/p` stays at least
/// `1 - r_target`.
pub fn build_level(prev: &Level, r_target: &Rat) -> Result<(Level, Level)> {
    if !r_target.is_positive() || r_target > &rat(1, 1) {
        return Err(CovdimError::InvalidParameter(format!(
            "ratio target must lie in (0, 1], got {r_target}"
        )));
    }
    let waypoints = build_waypoints(&prev.k, prev.n)?;
    let q = waypoints.len() as u64;
    let ceil_qr = rat_ceil(&(rat(q as i64, 1) / r_target));
    let ceil_qr: u64 = ceil_qr.try_into().map_err(|_| {
        CovdimError::BudgetExceeded("transition multiplier out of range".into())
    })?;
    let p = ceil_qr.max(q + 1);
    let next_len = p.checked_mul(prev.block_len).filter(|&l| l <= BLOCK_LEN_CAP);
    let Some(_) = next_len else {
        return Err(CovdimError::BudgetExceeded(format!(
            "next block length {p} x {} exceeds cap {BLOCK_LEN_CAP}",
            prev.block_len
        )));
    };

    let BlockRep::Box(prev_slots) = prev.k.rep() else {
        return Err(CovdimError::Internal("tower block set must be a box".into()));
    };
    let mut slots = Vec::with_capacity((p * prev.block_len) as usize);
    for _ in 0..(p - q) {
        slots.extend(prev_slots.iter().cloned());
    }
    for block in &waypoints {
        for sym in block {
            slots.push(sym.coords().iter().map(|c| (*c, *c)).collect());
        }
    }
    let next_k = BlockSet::new_box(prev.k.a(), (p * prev.block_len) as u32, slots)?;
    let next = Level::from_block_set(prev.n + 1, next_k)?;
    if next.free_slots != (p - q) * prev.free_slots {
        return Err(CovdimError::Internal(
            "free-slot bookkeeping does not match the transition".into(),
        ));
    }

    let mut completed = prev.clone();
    completed.p = Some(p);
    completed.q = Some(q);
    completed.r = Some(rat(q as i64, p as i64));
    completed.waypoints = Some(waypoints);
    Ok((completed, next))
}

/// A built tower with its achieved free-coordinate density.
#[derive(Clone, Debug, Serialize)]
pub struct Construction {
    pub a: u32,
    #[serde(with = "rat_string")]
    pub s_target: Rat,
    pub depth: u32,
    pub levels: Vec<Level>,
    #[serde(with = "rat_string")]
    pub achieved_ratio: Rat,
}

impl Construction {
    /// Builds `depth` levels targeting the density `s_target` in `[0, a)`.
    ///
    /// Each transition gets the ratio target `(current - s) / (current · L)`
    /// over the `L` transitions still to come; by Bernoulli's inequality
    /// the product of the remaining shrink factors then stays at or above
    /// `s / current`, so the achieved ratio never drops below the target.
    pub fn build(a: u32, s_target: &Rat, depth: u32) -> Result<Self> {
        if a == 0 || depth == 0 {
            return Err(CovdimError::InvalidParameter(
                "construction needs a >= 1 and depth >= 1".into(),
            ));
        }
        let a_rat = rat(a as i64, 1);
        if s_target.is_negative() || s_target >= &a_rat {
            return Err(CovdimError::InvalidParameter(format!(
                "density target must lie in [0, {a}), got {s_target}"
            )));
        }
        let mut levels = vec![Level::base(a)?];
        while (levels.len() as u32) < depth {
            let prev = levels.last().expect("non-empty");
            let current = &a_rat * prev.density();
            let remaining = rat((depth - prev.n) as i64, 1);
            let r_target = (&current - s_target) / (&current * &remaining);
            let (completed, next) = build_level(prev, &r_target)?;
            *levels.last_mut().expect("non-empty") = completed;
            levels.push(next);
        }
        let achieved_ratio = &a_rat * levels.last().expect("non-empty").density();
        if &achieved_ratio < s_target {
            return Err(CovdimError::Internal(
                "achieved density fell below its target".into(),
            ));
        }
        Ok(Self {
            a,
            s_target: s_target.clone(),
            depth,
            levels,
            achieved_ratio,
        })
    }

    /// The level with index `n` (1-based).
    pub fn level(&self, n: u32) -> Result<&Level> {
        if n == 0 || n as usize > self.levels.len() {
            return Err(CovdimError::InvalidParameter(format!(
                "level {n} out of range 1..={}",
                self.levels.len()
            )));
        }
        Ok(&self.levels[n as usize - 1])
    }
}

/// The default blocks `δ_1, …, δ_top`: `δ_1` is the zero block, and each
/// `δ_{m+1}` chains `p_m - q_m` copies of `δ_m` followed by the level-`m`
/// waypoints — a concrete member of every level's block set.
fn default_blocks(c: &Construction, top: u32) -> Result<Vec<Vec<DyadicVec>>> {
    let mut deltas: Vec<Vec<DyadicVec>> = vec![vec![DyadicVec::zeros(c.a)]];
    for m in 1..top {
        let lvl = c.level(m)?;
        let (Some(p), Some(q), Some(wps)) = (lvl.p, lvl.q, lvl.waypoints.as_ref()) else {
            return Err(CovdimError::Internal(format!(
                "level {m} is missing its transition data"
            )));
        };
        let prev = &deltas[m as usize - 1];
        let mut next = Vec::with_capacity((lvl.block_len * p) as usize);
        for _ in 0..(p - q) {
            next.extend(prev.iter().cloned());
        }
        for w in wps {
            next.extend(w.iter().cloned());
        }
        deltas.push(next);
    }
    Ok(deltas)
}

/// The cube embedding: maps `x` in `([0,1]^a)^{M_n}` (flattened to
/// `a · M_n` coordinates) to the point of the depth-level system whose
/// level-`n` block at `[0, N_n - 1]` carries `x` in its free slots.
///
/// At each level the designated block sits first inside its parent, the
/// remaining free sub-blocks carry the default block, and the waypoints sit
/// in their pinned tail slots. The result is the `N_depth`-periodic point
/// of that top block, represented exactly: three periods on the window
/// `[-N_depth, 2·N_depth - 1]` with periodic extension.
pub fn psi_n(c: &Construction, n: u32, x: &[Dyadic], depth: u32) -> Result<LatticeWord> {
    if n == 0 || n > depth || depth as usize > c.levels.len() {
        return Err(CovdimError::InvalidParameter(format!(
            "need 1 <= n <= depth <= {}, got n={n}, depth={depth}",
            c.levels.len()
        )));
    }
    let deltas = default_blocks(c, depth)?;
    let mut block = c.level(n)?.fill_block(x)?;
    for m in n..depth {
        let lvl = c.level(m)?;
        let (Some(p), Some(q), Some(wps)) = (lvl.p, lvl.q, lvl.waypoints.as_ref()) else {
            return Err(CovdimError::Internal(format!(
                "level {m} is missing its transition data"
            )));
        };
        let delta = &deltas[m as usize - 1];
        let mut parent = block;
        for _ in 0..(p - q - 1) {
            parent.extend(delta.iter().cloned());
        }
        for w in wps {
            parent.extend(w.iter().cloned());
        }
        block = parent;
    }
    let period = block.len() as i64;
    let mut symbols = Vec::with_capacity(3 * block.len());
    symbols.extend(block.iter().cloned());
    symbols.extend(block.iter().cloned());
    symbols.extend(block);
    LatticeWord::new(c.a, -period, symbols, Extension::Periodic)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansivityViolation {
    pub x: Vec<Dyadic>,
    pub y: Vec<Dyadic>,
    #[serde(with = "rat_string")]
    pub input_dist: Rat,
    #[serde(with = "rat_string")]
    pub image_dist_lower: Rat,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansivityReport {
    pub level: u32,
    pub horizon: u64,
    pub pairs_checked: usize,
    pub violations: Vec<ExpansivityViolation>,
    pub pass: bool,
}

/// Checks `‖x - y‖∞ <= d_{N_n}(ψ_n x, ψ_n y)` through the certified metric
/// lower bound on every supplied pair, at the full construction depth.
pub fn verify_expansivity(
    c: &Construction,
    n: u32,
    pairs: &[(Vec<Dyadic>, Vec<Dyadic>)],
) -> Result<ExpansivityReport> {
    let horizon = c.level(n)?.block_len;
    let horizon_u32: u32 = horizon.try_into().map_err(|_| {
        CovdimError::BudgetExceeded("horizon too large for metric evaluation".into())
    })?;
    let mut violations = Vec::new();
    for (x, y) in pairs {
        if x.len() != y.len() {
            return Err(CovdimError::DimensionMismatch(
                "pair members have different dimensions".into(),
            ));
        }
        let wx = psi_n(c, n, x, c.depth)?;
        let wy = psi_n(c, n, y, c.depth)?;
        let mut input_dist = Dyadic::zero();
        for (cx, cy) in x.iter().zip(y) {
            let d = cx.abs_diff(cy)?;
            if d > input_dist {
                input_dist = d;
            }
        }
        // Tail horizon 1 suffices: the certified lower bound is the exact
        // window sum, which already reaches past the stored windows.
        let dist = metric_dn(&wx, &wy, horizon_u32, 1)?;
        if &input_dist.value() > dist.lo() {
            violations.push(ExpansivityViolation {
                x: x.clone(),
                y: y.clone(),
                input_dist: input_dist.value(),
                image_dist_lower: dist.lo().clone(),
            });
        }
    }
    Ok(ExpansivityReport {
        level: n,
        horizon,
        pairs_checked: pairs.len(),
        pass: violations.is_empty(),
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SyndeticReport {
    pub n: u32,
    pub gap_bound: u64,
    pub net_pairs: usize,
    #[serde(with = "rat_string")]
    pub worst_error: Rat,
    #[serde(with = "rat_string")]
    pub tolerance: Rat,
    pub pass: bool,
}

/// Recurrence evidence for minimality: re-verifies that the level-`(n+1)`
/// blocks end with the level-`n` waypoint tail, then checks exhaustively
/// that every ordered pair of level-`n` net blocks is approximated within
/// `1/n` by some consecutive waypoint pair. Every level-`n` net pattern
/// therefore recurs in every point with gap at most `2·N_{n+1}`.
pub fn syndetic_check(c: &Construction, n: u32, depth: u32) -> Result<SyndeticReport> {
    if n == 0 || depth < n + 1 || depth as usize > c.levels.len() {
        return Err(CovdimError::InvalidParameter(format!(
            "need 1 <= n < depth <= {}, got n={n}, depth={depth}",
            c.levels.len()
        )));
    }
    let lvl = c.level(n)?;
    let next = c.level(n + 1)?;
    let (Some(p), Some(q), Some(wps)) = (lvl.p, lvl.q, lvl.waypoints.as_ref()) else {
        return Err(CovdimError::Internal(format!(
            "level {n} is missing its transition data"
        )));
    };
    // Structural re-verification: the waypoint blocks are pinned, verbatim,
    // in the tail slots of the next level's block set.
    let BlockRep::Box(next_slots) = next.block_set().rep() else {
        return Err(CovdimError::Internal("tower block set must be a box".into()));
    };
    let tail_start = ((p - q) * lvl.block_len) as usize;
    for (k_idx, w) in wps.iter().enumerate() {
        for (j, sym) in w.iter().enumerate() {
            let slot = &next_slots[tail_start + k_idx * lvl.block_len as usize + j];
            let pinned =
                slot.len() == sym.dim() as usize && slot.iter().zip(sym.coords()).all(
                    |((lo, hi), c)| lo == c && hi == c,
                );
            if !pinned {
                return Err(CovdimError::Internal(format!(
                    "waypoint {k_idx} is not pinned in the next level's tail"
                )));
            }
        }
    }

    let nodes = net_blocks(lvl.block_set(), n)?;
    let tolerance = rat(1, n as i64);
    let mut worst_error = Rat::zero();
    let mut net_pairs = 0usize;
    for u in &nodes {
        for v in &nodes {
            net_pairs += 1;
            let mut best: Option<Rat> = None;
            for w in wps.windows(2) {
                let e = block_linf(u, &w[0])?.value().max(block_linf(v, &w[1])?.value());
                if best.as_ref().is_none_or(|b| &e < b) {
                    best = Some(e);
                }
            }
            let best = best.ok_or_else(|| {
                CovdimError::Internal("waypoint sequence too short for pairs".into())
            })?;
            if best > worst_error {
                worst_error = best;
            }
        }
    }
    let pass = worst_error < tolerance;
    Ok(SyndeticReport {
        n,
        gap_bound: 2 * next.block_len,
        net_pairs,
        worst_error,
        tolerance,
        pass,
    })
}

/// Exact product identity check used in tests and the verification CLI:
/// the density at the deepest level equals `a · Π (1 - r_k)`.
pub fn bookkeeping_product(c: &Construction) -> Result<Rat> {
    let mut acc = rat(c.a as i64, 1);
    for lvl in &c.levels[..c.levels.len() - 1] {
        let r = lvl.r.as_ref().ok_or_else(|| {
            CovdimError::Internal(format!("level {} is missing r", lvl.n))
        })?;
        acc *= rat(1, 1) - r;
    }
    Ok(acc)
}
