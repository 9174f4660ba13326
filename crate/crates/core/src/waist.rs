//! Numerical verification of the cube waist inequalities for
//! grid-interpolated continuous maps `f: [0,1]^n -> R^m`: the measure form
//! (some fiber's `r`-neighborhood has Lebesgue measure at least `(r/2)^m`)
//! and the covering form (some fiber needs at least `8^-n (1/r)^(n-m)`
//! sets of diameter below `r` to cover).
//!
//! Maps are ingested as complete value grids and evaluated by multilinear
//! interpolation in exact rational arithmetic. Fibers are enclosed from
//! outside by grid cells whose per-coordinate corner range contains the
//! target (exact for multilinear interpolants), so every reported upper
//! bound is certified. A check that comes out below the bound is reported
//! as a grid-resolution artifact, never as a counterexample.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{CovdimError, Result};
use crate::geometry::{Dyadic, DyadicVec};
use crate::numeric::{parse_rat, rat, rat_ceil, rat_floor, rat_to_string, BoundedValue, Rat};

/// Hard ceiling on stored node values (`(2^q+1)^n * m`).
const VALUE_CAP: u64 = 1 << 21;
/// Hard ceiling on the fiber-candidate count per map.
const CANDIDATE_CAP: usize = 4096;
/// Hard ceiling on elementary boxes in a union-measure computation.
const ELEMENTARY_CAP: u64 = 1 << 21;

/// A continuous map `[0,1]^n -> R^m` given by target vectors at every node
/// of the dyadic grid of resolution `2^-q`, extended by multilinear
/// interpolation on each cell. Node order is lexicographic with the first
/// coordinate most significant; each node contributes `m` consecutive
/// values.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GridMapRepr", into = "GridMapRepr")]
pub struct GridMap {
    n: u32,
    m: u32,
    q: u32,
    values: Vec<Rat>,
}

#[derive(Serialize, Deserialize)]
struct GridMapRepr {
    n: u32,
    m: u32,
    q: u32,
    values: Vec<String>,
}

impl TryFrom<GridMapRepr> for GridMap {
    type Error = CovdimError;

    fn try_from(repr: GridMapRepr) -> Result<Self> {
        let values = repr
            .values
            .iter()
            .map(|s| parse_rat(s))
            .collect::<Result<Vec<Rat>>>()?;
        GridMap::new(repr.n, repr.m, repr.q, values)
    }
}

impl From<GridMap> for GridMapRepr {
    fn from(map: GridMap) -> Self {
        Self {
            n: map.n,
            m: map.m,
            q: map.q,
            values: map.values.iter().map(rat_to_string).collect(),
        }
    }
}

impl GridMap {
    pub fn new(n: u32, m: u32, q: u32, values: Vec<Rat>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(CovdimError::InvalidParameter(
                "grid map needs n >= 1 and m >= 1".into(),
            ));
        }
        if n > 8 || q > 12 {
            return Err(CovdimError::BudgetExceeded(format!(
                "grid map with n={n}, q={q} is beyond the supported range"
            )));
        }
        let side = (1u64 << q) + 1;
        let mut expected = m as u64;
        for _ in 0..n {
            expected = expected.checked_mul(side).filter(|&v| v <= VALUE_CAP).ok_or_else(
                || {
                    CovdimError::BudgetExceeded(format!(
                        "value grid with n={n}, q={q} exceeds {VALUE_CAP} entries"
                    ))
                },
            )?;
        }
        if values.len() as u64 != expected {
            return Err(CovdimError::DimensionMismatch(format!(
                "value grid must hold {expected} rationals, got {}",
                values.len()
            )));
        }
        Ok(Self { n, m, q, values })
    }

    /// Builds the map by sampling a formula at every grid node.
    pub fn from_fn<F>(n: u32, m: u32, q: u32, f: F) -> Result<Self>
    where
        F: Fn(&[Rat]) -> Vec<Rat>,
    {
        let side = (1usize << q) + 1;
        let mut values = Vec::new();
        for_each_index(&vec![side; n as usize], |idx| {
            let point: Vec<Rat> = idx.iter().map(|&i| rat(i as i64, 1 << q)).collect();
            let v = f(&point);
            if v.len() != m as usize {
                return Err(CovdimError::DimensionMismatch(format!(
                    "formula returned {} coordinates, expected {m}",
                    v.len()
                )));
            }
            values.extend(v);
            Ok(())
        })?;
        Self::new(n, m, q, values)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    fn side(&self) -> usize {
        (1usize << self.q) + 1
    }

    fn node_value(&self, idx: &[usize]) -> &[Rat] {
        let mut flat = 0usize;
        for &i in idx {
            flat = flat * self.side() + i;
        }
        &self.values[flat * self.m as usize..(flat + 1) * self.m as usize]
    }
}

/// Visits every index vector in `0..dims[j]` per axis, last axis fastest
/// (lexicographic order).
fn for_each_index<F>(dims: &[usize], mut f: F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    if dims.is_empty() || dims.contains(&0) {
        return Ok(());
    }
    let mut idx = vec![0usize; dims.len()];
    'outer: loop {
        f(&idx)?;
        for j in (0..dims.len()).rev() {
            idx[j] += 1;
            if idx[j] < dims[j] {
                continue 'outer;
            }
            idx[j] = 0;
        }
        return Ok(());
    }
}

/// Evaluates the multilinear interpolant at `x`, exactly.
pub fn eval_map(f: &GridMap, x: &DyadicVec) -> Result<Vec<Rat>> {
    if x.dim() != f.n {
        return Err(CovdimError::DimensionMismatch(format!(
            "point has dimension {}, map domain has {}",
            x.dim(),
            f.n
        )));
    }
    if !x.in_unit_cube() {
        return Err(CovdimError::InvalidParameter(
            "evaluation point must lie in the unit cube".into(),
        ));
    }
    let cells = 1i64 << f.q;
    let mut cell = Vec::with_capacity(f.n as usize);
    let mut local = Vec::with_capacity(f.n as usize);
    for c in x.coords() {
        let scaled = c.value() * rat(cells, 1);
        let mut floor = rat_floor(&scaled);
        if floor >= cells.into() {
            floor = (cells - 1).into();
        }
        let floor_i: i64 = floor.try_into().expect("cell index fits i64");
        cell.push(floor_i as usize);
        local.push(&scaled - rat(floor_i, 1));
    }
    let mut out = vec![Rat::zero(); f.m as usize];
    for corner in 0u32..(1 << f.n) {
        let mut weight = Rat::one();
        let mut node = Vec::with_capacity(f.n as usize);
        for j in 0..f.n as usize {
            let bit = (corner >> j) & 1 == 1;
            weight *= if bit {
                local[j].clone()
            } else {
                Rat::one() - &local[j]
            };
            node.push(cell[j] + bit as usize);
        }
        if weight.is_zero() {
            continue;
        }
        for (acc, v) in out.iter_mut().zip(f.node_value(&node)) {
            *acc += &weight * v;
        }
    }
    Ok(out)
}

/// An outer enclosure of a fiber `f^{-1}(t)` by grid cells, together with
/// the cells and exact points that certifiably meet the fiber.
#[derive(Clone, Debug)]
pub struct FiberApprox {
    pub t: Vec<Rat>,
    pub n: u32,
    pub q: u32,
    /// Cells (per-axis indices) whose per-coordinate corner range contains
    /// `t`; every true fiber point lies in one of them.
    pub cells: Vec<Vec<usize>>,
    /// Cells guaranteed to contain a fiber point: scalar targets inside the
    /// corner range (intermediate value theorem), or an exact hit at a
    /// corner or the cell center.
    pub certified_cells: Vec<Vec<usize>>,
    /// Grid nodes and cell centers whose value is exactly `t`.
    pub certified_points: Vec<Vec<Rat>>,
    /// Always true: the cell list is an outer approximation.
    pub outer: bool,
}

/// Encloses `f^{-1}(t)` from outside: a cell is kept when, in every target
/// coordinate, `t` lies within the min/max of the corner values — exact
/// per-coordinate bounds for a multilinear interpolant.
pub fn fiber_cells(f: &GridMap, t: &[Rat]) -> Result<FiberApprox> {
    if t.len() != f.m as usize {
        return Err(CovdimError::DimensionMismatch(format!(
            "target has dimension {}, map range has {}",
            t.len(),
            f.m
        )));
    }
    let n = f.n as usize;
    let m = f.m as usize;
    let cells_per_axis = 1usize << f.q;
    let mut cells = Vec::new();
    let mut certified_cells = Vec::new();
    let mut certified_points = Vec::new();

    // Exact hits at grid nodes.
    for_each_index(&vec![f.side(); n], |idx| {
        if f.node_value(idx) == t {
            certified_points.push(idx.iter().map(|&i| rat(i as i64, 1i64 << f.q)).collect());
        }
        Ok(())
    })?;

    for_each_index(&vec![cells_per_axis; n], |cell| {
        let mut lo = vec![Option::<Rat>::None; m];
        let mut hi = vec![Option::<Rat>::None; m];
        let mut corner_hit = false;
        let mut center = vec![Rat::zero(); m];
        for corner in 0u32..(1 << n) {
            let node: Vec<usize> = (0..n)
                .map(|j| cell[j] + ((corner >> j) & 1) as usize)
                .collect();
            let v = f.node_value(&node);
            if v == t {
                corner_hit = true;
            }
            for k in 0..m {
                if lo[k].as_ref().is_none_or(|l| &v[k] < l) {
                    lo[k] = Some(v[k].clone());
                }
                if hi[k].as_ref().is_none_or(|h| &v[k] > h) {
                    hi[k] = Some(v[k].clone());
                }
                center[k] += &v[k];
            }
        }
        let corner_count = rat(1 << n, 1);
        for c in center.iter_mut() {
            *c /= &corner_count;
        }
        let contains = (0..m).all(|k| {
            lo[k].as_ref().expect("corner seen") <= &t[k]
                && &t[k] <= hi[k].as_ref().expect("corner seen")
        });
        if contains {
            cells.push(cell.to_vec());
            let center_hit = center == t;
            if m == 1 || corner_hit || center_hit {
                certified_cells.push(cell.to_vec());
            }
            if center_hit {
                certified_points.push(
                    cell.iter()
                        .map(|&i| rat(2 * i as i64 + 1, 1i64 << (f.q + 1)))
                        .collect(),
                );
            }
        }
        Ok(())
    })?;
    certified_points.sort();
    certified_points.dedup();
    Ok(FiberApprox {
        t: t.to_vec(),
        n: f.n,
        q: f.q,
        cells,
        certified_cells,
        certified_points,
        outer: true,
    })
}

/// Axis-aligned box as per-axis closed intervals.
type RatBox = Vec<(Rat, Rat)>;

/// Coalesces unit cells into maximal axis-aligned runs (half-open index
/// ranges per axis), merging along the last axis first. The union is
/// unchanged; only the box count shrinks.
fn merge_cells(cells: &[Vec<usize>], n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut boxes: Vec<Vec<(usize, usize)>> = cells
        .iter()
        .map(|c| c.iter().map(|&i| (i, i + 1)).collect())
        .collect();
    for axis in (0..n).rev() {
        boxes.sort_by(|a, b| {
            for j in 0..n {
                if j != axis {
                    match a[j].cmp(&b[j]) {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
            }
            a[axis].0.cmp(&b[axis].0)
        });
        let mut merged: Vec<Vec<(usize, usize)>> = Vec::new();
        for bx in boxes {
            if let Some(last) = merged.last_mut() {
                let same_elsewhere = (0..n).all(|j| j == axis || last[j] == bx[j]);
                if same_elsewhere && last[axis].1 == bx[axis].0 {
                    last[axis].1 = bx[axis].1;
                    continue;
                }
            }
            merged.push(bx);
        }
        boxes = merged;
    }
    boxes
}

fn range_box(ranges: &[(usize, usize)], q: u32, radius: &Rat) -> RatBox {
    ranges
        .iter()
        .map(|&(lo, hi)| {
            let lo = rat(lo as i64, 1i64 << q) - radius;
            let hi = rat(hi as i64, 1i64 << q) + radius;
            (clamp_unit(lo), clamp_unit(hi))
        })
        .collect()
}

/// Measure of the union of the given cells, inflated by `radius` and
/// clamped to the unit cube.
fn inflated_cells_measure(cells: &[Vec<usize>], n: usize, q: u32, radius: &Rat) -> Result<Rat> {
    let boxes: Vec<RatBox> = merge_cells(cells, n)
        .iter()
        .map(|ranges| range_box(ranges, q, radius))
        .collect();
    union_measure(&boxes, n)
}

fn clamp_unit(v: Rat) -> Rat {
    if v.is_negative() {
        Rat::zero()
    } else if v > Rat::one() {
        Rat::one()
    } else {
        v
    }
}

/// Exact Lebesgue measure of a union of axis-aligned boxes inside the unit
/// cube, by coordinate compression into elementary boxes.
fn union_measure(boxes: &[RatBox], n: usize) -> Result<Rat> {
    if boxes.is_empty() {
        return Ok(Rat::zero());
    }
    let mut cuts: Vec<Vec<Rat>> = Vec::with_capacity(n);
    for j in 0..n {
        let set: BTreeSet<Rat> = boxes
            .iter()
            .flat_map(|b| [b[j].0.clone(), b[j].1.clone()])
            .collect();
        cuts.push(set.into_iter().collect());
    }
    let dims: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let mut total_cells = 1u64;
    for &d in &dims {
        total_cells = total_cells
            .checked_mul(d.max(1) as u64)
            .filter(|&t| t <= ELEMENTARY_CAP)
            .ok_or_else(|| {
                CovdimError::BudgetExceeded("union measure grid too fine".into())
            })?;
    }
    if dims.contains(&0) {
        return Ok(Rat::zero());
    }
    let mut covered = vec![false; total_cells as usize];
    let strides: Vec<usize> = {
        let mut s = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            s[j] = s[j + 1] * dims[j + 1];
        }
        s
    };
    for b in boxes {
        let spans: Vec<std::ops::Range<usize>> = (0..n)
            .map(|j| {
                let lo = cuts[j].binary_search(&b[j].0).expect("endpoint is a cut");
                let hi = cuts[j].binary_search(&b[j].1).expect("endpoint is a cut");
                lo..hi
            })
            .collect();
        if spans.iter().any(|s| s.is_empty()) {
            continue;
        }
        let span_dims: Vec<usize> = spans.iter().map(|s| s.len()).collect();
        for_each_index(&span_dims, |offset| {
            let flat: usize = (0..n)
                .map(|j| (spans[j].start + offset[j]) * strides[j])
                .sum();
            covered[flat] = true;
            Ok(())
        })?;
    }
    let widths: Vec<Vec<Rat>> = cuts
        .iter()
        .map(|c| c.windows(2).map(|w| &w[1] - &w[0]).collect())
        .collect();
    let mut total = Rat::zero();
    for_each_index(&dims, |idx| {
        let flat: usize = (0..n).map(|j| idx[j] * strides[j]).sum();
        if covered[flat] {
            let mut vol = Rat::one();
            for j in 0..n {
                vol *= &widths[j][idx[j]];
            }
            total += vol;
        }
        Ok(())
    })?;
    Ok(total)
}

/// Certified two-sided bounds on the Lebesgue measure of the closed
/// `l∞` `r`-neighborhood of the fiber, intersected with the unit cube.
///
/// Upper bound: the enclosing cells inflated by `r`. Lower bound: each
/// certified cell contains some fiber point, whose `r`-ball contains the
/// cell inflated by `r` minus the cell diameter; nothing is claimed when
/// `r` is below the cell width.
pub fn neighborhood_measure(fa: &FiberApprox, r: &Dyadic) -> Result<BoundedValue> {
    let rv = r.value();
    if !rv.is_positive() || rv >= rat(1, 2) {
        return Err(CovdimError::InvalidParameter(format!(
            "neighborhood radius must lie in (0, 1/2), got {r}"
        )));
    }
    let n = fa.n as usize;
    let upper = inflated_cells_measure(&fa.cells, n, fa.q, &rv)?;
    let w = rat(1, 1i64 << fa.q);
    let lower = if rv >= w && !fa.certified_cells.is_empty() {
        inflated_cells_measure(&fa.certified_cells, n, fa.q, &(&rv - &w))?
    } else {
        Rat::zero()
    };
    BoundedValue::new(lower, upper)
}

/// The finite target-candidate set: every node value, every cell-center
/// value, and the image-space grid of resolution `2^-q` over the bounding
/// box of the node values. The true optimum `t` of the waist inequality is
/// not locatable exactly; this set makes the check decidable, and misses
/// are reported as resolution artifacts.
fn t_candidates(f: &GridMap) -> Result<Vec<Vec<Rat>>> {
    let n = f.n as usize;
    let m = f.m as usize;
    let mut set: BTreeSet<Vec<Rat>> = BTreeSet::new();
    for_each_index(&vec![f.side(); n], |idx| {
        set.insert(f.node_value(idx).to_vec());
        Ok(())
    })?;
    let cells_per_axis = 1usize << f.q;
    for_each_index(&vec![cells_per_axis; n], |cell| {
        let mut center = vec![Rat::zero(); m];
        for corner in 0u32..(1 << n) {
            let node: Vec<usize> = (0..n)
                .map(|j| cell[j] + ((corner >> j) & 1) as usize)
                .collect();
            for (acc, v) in center.iter_mut().zip(f.node_value(&node)) {
                *acc += v;
            }
        }
        let corner_count = rat(1 << n, 1);
        for c in center.iter_mut() {
            *c /= &corner_count;
        }
        set.insert(center);
        Ok(())
    })?;
    // Image-space grid over the per-coordinate value range.
    let mut axes: Vec<Vec<Rat>> = Vec::with_capacity(m);
    for k in 0..m {
        let vals = f.values.iter().skip(k).step_by(m);
        let lo = vals.clone().min().expect("nonempty grid").clone();
        let hi = vals.max().expect("nonempty grid").clone();
        let scale = rat(1i64 << f.q, 1);
        let jlo = rat_ceil(&(&lo * &scale));
        let jhi = rat_floor(&(&hi * &scale));
        let mut axis = Vec::new();
        if jlo <= jhi {
            let span: u64 = (&jhi - &jlo).try_into().map_err(|_| {
                CovdimError::BudgetExceeded("image grid too large for candidate search".into())
            })?;
            if span as usize >= CANDIDATE_CAP {
                return Err(CovdimError::BudgetExceeded(
                    "image grid too large for candidate search".into(),
                ));
            }
            for off in 0..=span {
                axis.push(Rat::new(&jlo + off, (1i64 << f.q).into()));
            }
        }
        axes.push(axis);
    }
    let grid_dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    if grid_dims.iter().all(|&d| d > 0) {
        let mut count = 1usize;
        for &d in &grid_dims {
            count = count.saturating_mul(d);
        }
        if count <= CANDIDATE_CAP {
            for_each_index(&grid_dims, |idx| {
                set.insert((0..m).map(|k| axes[k][idx[k]].clone()).collect());
                Ok(())
            })?;
        }
    }
    if set.len() > CANDIDATE_CAP {
        return Err(CovdimError::BudgetExceeded(format!(
            "candidate set of {} targets exceeds cap {CANDIDATE_CAP}",
            set.len()
        )));
    }
    Ok(set.into_iter().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct WaistMeasureRow {
    pub r: Dyadic,
    #[serde(with = "crate::numeric::rat_string")]
    pub required: Rat,
    #[serde(with = "crate::numeric::rat_string")]
    pub measure_lower: Rat,
    #[serde(with = "crate::numeric::rat_string")]
    pub measure_upper: Rat,
    #[serde(with = "crate::numeric::rat_string")]
    pub ratio_upper: Rat,
    #[serde(with = "crate::numeric::rat_string")]
    pub ratio_lower: Rat,
    /// The certified upper bound clears the required measure.
    pub pass: bool,
    /// Even the certified lower bound clears it.
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaistMeasureReport {
    pub n: u32,
    pub m: u32,
    pub q: u32,
    pub best_t: Vec<String>,
    pub candidates_checked: usize,
    pub rows: Vec<WaistMeasureRow>,
    pub pass: bool,
    /// Set when `pass` is false: the miss is a grid-resolution refutation
    /// candidate, not a disproof of the inequality.
    pub resolution_limited: bool,
}

fn required_measure(r: &Dyadic, m: u32) -> Rat {
    let half_r = r.value() / rat(2, 1);
    rat_pow(&half_r, m)
}

fn rat_pow(base: &Rat, e: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..e {
        acc *= base;
    }
    acc
}

fn validate_radii(rs: &[Dyadic]) -> Result<()> {
    if rs.is_empty() {
        return Err(CovdimError::InvalidParameter(
            "need at least one radius".into(),
        ));
    }
    for r in rs {
        let v = r.value();
        if !v.is_positive() || v >= rat(1, 2) {
            return Err(CovdimError::InvalidParameter(format!(
                "radius must lie in (0, 1/2), got {r}"
            )));
        }
    }
    Ok(())
}

/// Per-coordinate rank coding of the map's node values: each cell's corner
/// range and each candidate target become small integer codes whose order
/// agrees with the exact rational order, so the candidate scan needs no
/// rational arithmetic.
struct RankTables {
    /// Sorted distinct node values per target coordinate.
    values: Vec<Vec<Rat>>,
    /// Per cell (lexicographic flat order), per coordinate: the corner
    /// range as inclusive codes `(2·rank_lo + 1, 2·rank_hi + 1)`.
    cell_codes: Vec<(u32, u32)>,
    cell_count: usize,
}

fn rank_tables(f: &GridMap) -> Result<RankTables> {
    let n = f.n as usize;
    let m = f.m as usize;
    let mut values: Vec<Vec<Rat>> = Vec::with_capacity(m);
    for k in 0..m {
        let mut v: Vec<Rat> = f.values.iter().skip(k).step_by(m).cloned().collect();
        v.sort();
        v.dedup();
        values.push(v);
    }
    let cells_per_axis = 1usize << f.q;
    let cell_count = cells_per_axis.pow(n as u32);
    let mut cell_codes = Vec::with_capacity(cell_count * m);
    for_each_index(&vec![cells_per_axis; n], |cell| {
        let mut lo = vec![Option::<&Rat>::None; m];
        let mut hi = vec![Option::<&Rat>::None; m];
        for corner in 0u32..(1 << n) {
            let node: Vec<usize> = (0..n)
                .map(|j| cell[j] + ((corner >> j) & 1) as usize)
                .collect();
            let v = f.node_value(&node);
            for k in 0..m {
                if lo[k].is_none_or(|l| &v[k] < l) {
                    lo[k] = Some(&v[k]);
                }
                if hi[k].is_none_or(|h| &v[k] > h) {
                    hi[k] = Some(&v[k]);
                }
            }
        }
        for k in 0..m {
            let rank_lo = values[k]
                .binary_search(lo[k].expect("corner seen"))
                .expect("corner value is a node value");
            let rank_hi = values[k]
                .binary_search(hi[k].expect("corner seen"))
                .expect("corner value is a node value");
            cell_codes.push((2 * rank_lo as u32 + 1, 2 * rank_hi as u32 + 1));
        }
        Ok(())
    })?;
    Ok(RankTables {
        values,
        cell_codes,
        cell_count,
    })
}

/// Code of an arbitrary rational against a sorted value table: exact
/// matches get odd codes `2·rank + 1`, gaps get the even code of their
/// insertion point. Order of codes matches order of rationals.
fn t_code(values: &[Rat], t: &Rat) -> u32 {
    match values.binary_search(t) {
        Ok(r) => 2 * r as u32 + 1,
        Err(p) => 2 * p as u32,
    }
}

fn decode_cell(mut flat: usize, n: usize, cells_per_axis: usize) -> Vec<usize> {
    let mut idx = vec![0usize; n];
    for j in (0..n).rev() {
        idx[j] = flat % cells_per_axis;
        flat /= cells_per_axis;
    }
    idx
}

/// Searches the candidate targets for the one maximizing the worst-case
/// (over the radii) ratio of certified neighborhood-measure upper bound to
/// required measure. Candidates are scanned in ascending lexicographic
/// order and replaced only on strict improvement, so ties resolve to the
/// lexicographically smallest target.
fn measure_search(f: &GridMap, rs: &[Dyadic]) -> Result<(Vec<Rat>, Vec<WaistMeasureRow>, usize)> {
    validate_radii(rs)?;
    let candidates = t_candidates(f)?;
    let required: Vec<Rat> = rs.iter().map(|r| required_measure(r, f.m)).collect();
    let tables = rank_tables(f)?;
    let n = f.n as usize;
    let m = f.m as usize;
    let cells_per_axis = 1usize << f.q;
    let radii: Vec<Rat> = rs.iter().map(|r| r.value()).collect();
    let mut memo: BTreeMap<Vec<u32>, Vec<Rat>> = BTreeMap::new();
    let mut best: Option<(Rat, Vec<Rat>)> = None;
    for t in &candidates {
        let t_codes: Vec<u32> = (0..m).map(|k| t_code(&tables.values[k], &t[k])).collect();
        let mut flats: Vec<u32> = Vec::new();
        for cell in 0..tables.cell_count {
            let base = cell * m;
            let hit = (0..m).all(|k| {
                let (clo, chi) = tables.cell_codes[base + k];
                clo <= t_codes[k] && t_codes[k] <= chi
            });
            if hit {
                flats.push(cell as u32);
            }
        }
        let uppers = match memo.get(&flats) {
            Some(u) => u.clone(),
            None => {
                let cells: Vec<Vec<usize>> = flats
                    .iter()
                    .map(|&fl| decode_cell(fl as usize, n, cells_per_axis))
                    .collect();
                let mut u = Vec::with_capacity(radii.len());
                for rv in &radii {
                    u.push(inflated_cells_measure(&cells, n, f.q, rv)?);
                }
                memo.insert(flats, u.clone());
                u
            }
        };
        let score = uppers
            .iter()
            .zip(&required)
            .map(|(u, req)| u / req)
            .min()
            .expect("nonempty radii");
        if best.as_ref().is_none_or(|(s, _)| &score > s) {
            best = Some((score, t.clone()));
        }
    }
    let (_, best_t) = best.expect("candidate set is nonempty");
    let fa = fiber_cells(f, &best_t)?;
    let mut rows = Vec::with_capacity(rs.len());
    for (r, req) in rs.iter().zip(&required) {
        let measure = neighborhood_measure(&fa, r)?;
        let ratio_upper = measure.hi() / req;
        let ratio_lower = measure.lo() / req;
        rows.push(WaistMeasureRow {
            r: *r,
            required: req.clone(),
            measure_lower: measure.lo().clone(),
            measure_upper: measure.hi().clone(),
            pass: ratio_upper >= Rat::one(),
            certified: ratio_lower >= Rat::one(),
            ratio_upper,
            ratio_lower,
        });
    }
    Ok((best_t, rows, candidates.len()))
}

/// The measure-form waist check: reports the best candidate target and,
/// per radius, whether the certified neighborhood measure clears
/// `(r/2)^m`.
pub fn waist_check_measure(f: &GridMap, rs: &[Dyadic]) -> Result<WaistMeasureReport> {
    let (best_t, rows, candidates_checked) = measure_search(f, rs)?;
    let pass = rows.iter().all(|row| row.pass);
    Ok(WaistMeasureReport {
        n: f.n,
        m: f.m,
        q: f.q,
        best_t: best_t.iter().map(rat_to_string).collect(),
        candidates_checked,
        rows,
        pass,
        resolution_limited: !pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WaistCoverRow {
    pub r: Dyadic,
    #[serde(with = "crate::numeric::rat_string")]
    pub required: Rat,
    pub separated_count: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaistCoverReport {
    pub n: u32,
    pub m: u32,
    pub q: u32,
    pub best_t: Vec<String>,
    pub rows: Vec<WaistCoverRow>,
    pub pass: bool,
    pub resolution_limited: bool,
}

/// `l∞` gap between two integer-unit boxes (zero when they touch or
/// overlap).
fn box_gap_units(a: &[(i128, i128)], b: &[(i128, i128)]) -> i128 {
    let mut gap = 0i128;
    for ((alo, ahi), (blo, bhi)) in a.iter().zip(b) {
        let d = (blo - ahi).max(alo - bhi).max(0);
        if d > gap {
            gap = d;
        }
    }
    gap
}

/// The covering-form waist check: at the measure search's best target,
/// builds an `r`-separated family of certified fiber witnesses (exact-hit
/// points first, then certified cells, greedily by gap) and compares its
/// size against `8^-n (1/r)^(n-m)`. Distinct witnesses at box gap `>= r`
/// carry fiber points at distance `>= r`, so the count is a certified
/// lower bound on the fiber's covering number at diameter `r`.
pub fn waist_check_cover(f: &GridMap, rs: &[Dyadic]) -> Result<WaistCoverReport> {
    if f.m > f.n {
        return Err(CovdimError::Unsupported(format!(
            "covering bound needs m <= n, got n={}, m={}",
            f.n, f.m
        )));
    }
    let (best_t, _, _) = measure_search(f, rs)?;
    let fa = fiber_cells(f, &best_t)?;
    // All witnesses live on the half-cell lattice: encode boxes in units of
    // 2^-(q+1) so the greedy separation runs on integers.
    let half_scale = rat(1i64 << (f.q + 1), 1);
    let mut objects: Vec<Vec<(i128, i128)>> = Vec::new();
    for p in &fa.certified_points {
        let mut coords = Vec::with_capacity(p.len());
        for c in p {
            let scaled = c * &half_scale;
            if !scaled.is_integer() {
                return Err(CovdimError::Internal(
                    "certified point off the half-cell lattice".into(),
                ));
            }
            let v: i128 = scaled.to_integer().try_into().map_err(|_| {
                CovdimError::Internal("certified point out of range".into())
            })?;
            coords.push((v, v));
        }
        objects.push(coords);
    }
    for cell in &fa.certified_cells {
        objects.push(
            cell.iter()
                .map(|&i| (2 * i as i128, 2 * (i + 1) as i128))
                .collect(),
        );
    }
    let base = rat_pow(&rat(1, 8), f.n);
    let mut rows = Vec::with_capacity(rs.len());
    for r in rs {
        let unit_exp = (f.q + 1).max(r.exp());
        let shift = unit_exp - (f.q + 1);
        let r_units = (r.num() as i128) << (unit_exp - r.exp());
        let mut kept: Vec<&Vec<(i128, i128)>> = Vec::new();
        for obj in &objects {
            if kept
                .iter()
                .all(|k| (box_gap_units(k, obj) << shift) >= r_units)
            {
                kept.push(obj);
            }
        }
        let required = &base * rat_pow(&(Rat::one() / &r.value()), f.n - f.m);
        let count = kept.len() as u64;
        rows.push(WaistCoverRow {
            r: *r,
            pass: rat(count as i64, 1) >= required,
            required,
            separated_count: count,
        });
    }
    let pass = rows.iter().all(|row| row.pass);
    Ok(WaistCoverReport {
        n: f.n,
        m: f.m,
        q: f.q,
        best_t: best_t.iter().map(rat_to_string).collect(),
        rows,
        pass,
        resolution_limited: !pass,
    })
}

/// Names of the bundled verification corpus.
pub const BUILTIN_MAPS: [&str; 8] = [
    "proj_2_1",
    "proj_3_1",
    "proj_3_2",
    "identity_1",
    "identity_2",
    "constant_2_1",
    "constant_3_2",
    "saddle_2_1",
];

/// Builds one of the bundled maps at grid resolution `2^-q`: coordinate
/// projections, identities, constants at 1/2, and the saddle
/// `(x, y) -> x·y` (multilinear, so the grid reproduces it exactly).
pub fn builtin_map(name: &str, q: u32) -> Result<GridMap> {
    match name {
        "proj_2_1" => GridMap::from_fn(2, 1, q, |x| vec![x[0].clone()]),
        "proj_3_1" => GridMap::from_fn(3, 1, q, |x| vec![x[0].clone()]),
        "proj_3_2" => GridMap::from_fn(3, 2, q, |x| vec![x[0].clone(), x[1].clone()]),
        "identity_1" => GridMap::from_fn(1, 1, q, |x| vec![x[0].clone()]),
        "identity_2" => GridMap::from_fn(2, 2, q, |x| x.to_vec()),
        "constant_2_1" => GridMap::from_fn(2, 1, q, |_| vec![rat(1, 2)]),
        "constant_3_2" => GridMap::from_fn(3, 2, q, |_| vec![rat(1, 2), rat(1, 2)]),
        "saddle_2_1" => GridMap::from_fn(2, 1, q, |x| vec![&x[0] * &x[1]]),
        _ => Err(CovdimError::InvalidParameter(format!(
            "unknown builtin map '{name}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dy(n: u64, q: u32) -> Dyadic {
        Dyadic::new(n, q).unwrap()
    }

    fn dv(coords: &[(u64, u32)]) -> DyadicVec {
        DyadicVec::new(coords.iter().map(|&(n, q)| dy(n, q)).collect())
    }

    fn lcg(seed: &mut u64) -> u64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *seed
    }

    #[test]
    fn interpolation_reproduces_grid_nodes() {
        let f = builtin_map("saddle_2_1", 2).unwrap();
        let x = dv(&[(3, 2), (1, 2)]);
        assert_eq!(eval_map(&f, &x).unwrap(), vec![rat(3, 16)]);
        let g = builtin_map("proj_2_1", 2).unwrap();
        assert_eq!(eval_map(&g, &x).unwrap(), vec![rat(3, 4)]);
    }

    #[test]
    fn linear_interpolation_at_midpoint() {
        let f = builtin_map("identity_1", 1).unwrap();
        assert_eq!(eval_map(&f, &dv(&[(1, 1)])).unwrap(), vec![rat(1, 2)]);
        assert_eq!(eval_map(&f, &dv(&[(3, 3)])).unwrap(), vec![rat(3, 8)]);
    }

    #[test]
    fn constant_grid_is_constant_everywhere() {
        let f = builtin_map("constant_2_1", 2).unwrap();
        let mut seed = 0x1234_5678_9abc_def0_u64;
        for _ in 0..20 {
            let x = dv(&[(lcg(&mut seed) % 33, 5), (lcg(&mut seed) % 33, 5)]);
            assert_eq!(eval_map(&f, &x).unwrap(), vec![rat(1, 2)]);
        }
    }

    #[test]
    fn evaluation_validates_inputs() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        assert!(matches!(
            eval_map(&f, &dv(&[(1, 1)])),
            Err(CovdimError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn projection_fiber_is_two_columns() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 2)]).unwrap();
        assert!(fa.outer);
        assert_eq!(fa.cells.len(), 8, "two columns of four cells");
        for cell in &fa.cells {
            assert!(cell[0] == 1 || cell[0] == 2);
        }
        // Scalar target inside the corner range: all eight are certified.
        assert_eq!(fa.certified_cells.len(), 8);
        // The five nodes on the fiber line are exact hits.
        let line: Vec<Vec<Rat>> = (0..=4).map(|j| vec![rat(1, 2), rat(j, 4)]).collect();
        assert_eq!(fa.certified_points, line);
    }

    #[test]
    fn fiber_outside_image_is_empty() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(3, 1)]).unwrap();
        assert!(fa.cells.is_empty());
        assert!(fa.certified_points.is_empty());
        let m = neighborhood_measure(&fa, &dy(1, 2)).unwrap();
        assert_eq!((m.lo(), m.hi()), (&rat(0, 1), &rat(0, 1)));
    }

    #[test]
    fn constant_fiber_is_every_cell() {
        let f = builtin_map("constant_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 2)]).unwrap();
        assert_eq!(fa.cells.len(), 16);
        assert_eq!(fa.certified_cells.len(), 16);
    }

    #[test]
    fn outer_soundness_on_random_points() {
        let mut seed = 0xfeed_beef_cafe_f00d_u64;
        for name in ["proj_2_1", "saddle_2_1"] {
            let f = builtin_map(name, 2).unwrap();
            for _ in 0..25 {
                let x = dv(&[(lcg(&mut seed) % 65, 6), (lcg(&mut seed) % 65, 6)]);
                let t = eval_map(&f, &x).unwrap();
                let fa = fiber_cells(&f, &t).unwrap();
                let containing: Vec<usize> = x
                    .coords()
                    .iter()
                    .map(|c| {
                        let scaled = c.value() * rat(4, 1);
                        let fl: i64 = rat_floor(&scaled).try_into().unwrap();
                        (fl as usize).min(3)
                    })
                    .collect();
                assert!(
                    fa.cells.contains(&containing),
                    "{name}: cell of the witness point must be enclosed"
                );
            }
        }
    }

    #[test]
    fn slab_neighborhood_measures_are_frozen() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 2)]).unwrap();
        // r = 1/4: cells span [1/4, 3/4], inflate by 1/4 -> full cube.
        let m = neighborhood_measure(&fa, &dy(1, 2)).unwrap();
        assert_eq!(m.hi(), &rat(1, 1));
        // Certified cells inflated by r - w = 0: the slab of width 1/2.
        assert_eq!(m.lo(), &rat(1, 2));
        // r = 1/8 is below the cell width: upper shrinks, lower vacuous.
        let m8 = neighborhood_measure(&fa, &dy(1, 3)).unwrap();
        assert_eq!(m8.hi(), &rat(3, 4));
        assert_eq!(m8.lo(), &rat(0, 1));
        // The true slab measure min(1, 2r) sits inside both brackets.
        assert!(m.lo() <= &rat(1, 2) && &rat(1, 2) <= m.hi());
        assert!(m8.lo() <= &rat(1, 4) && &rat(1, 4) <= m8.hi());
    }

    #[test]
    fn saturated_neighborhood_has_measure_one() {
        let f = builtin_map("identity_2", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 2), rat(1, 2)]).unwrap();
        assert_eq!(fa.cells.len(), 4);
        let m = neighborhood_measure(&fa, &dy(7, 4)).unwrap();
        assert_eq!(m.hi(), &rat(1, 1), "radius 7/16 saturates the cube");
    }

    #[test]
    fn neighborhood_measure_is_monotone_in_r() {
        let f = builtin_map("saddle_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 4)]).unwrap();
        let radii = [dy(1, 4), dy(5, 4), dy(3, 3), dy(7, 4)];
        let mut prev: Option<BoundedValue> = None;
        for r in &radii {
            let m = neighborhood_measure(&fa, r).unwrap();
            assert!(m.lo() <= m.hi());
            assert!(m.lo() >= &rat(0, 1) && m.hi() <= &rat(1, 1));
            if let Some(p) = prev {
                assert!(m.hi() >= p.hi());
                assert!(m.lo() >= p.lo());
            }
            prev = Some(m);
        }
    }

    #[test]
    fn radius_preconditions_are_enforced() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let fa = fiber_cells(&f, &[rat(1, 2)]).unwrap();
        assert!(neighborhood_measure(&fa, &dy(1, 1)).is_err());
        assert!(neighborhood_measure(&fa, &dy(0, 0)).is_err());
        assert!(waist_check_measure(&f, &[]).is_err());
    }

    #[test]
    fn projection_measure_check_frozen() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let report = waist_check_measure(&f, &[dy(1, 3), dy(1, 2)]).unwrap();
        assert!(report.pass);
        assert!(!report.resolution_limited);
        assert_eq!(report.best_t, vec!["1/2"]);
        assert_eq!(report.rows[0].measure_upper, rat(3, 4));
        assert_eq!(report.rows[0].ratio_upper, rat(12, 1));
        assert_eq!(report.rows[1].measure_upper, rat(1, 1));
        assert_eq!(report.rows[1].ratio_upper, rat(8, 1));
        assert!(report.rows[1].certified, "lower bound 1/2 over required 1/8");
        assert_eq!(report.rows[1].ratio_lower, rat(4, 1));
    }

    #[test]
    fn identity_measure_check_frozen() {
        let f = builtin_map("identity_2", 2).unwrap();
        let report = waist_check_measure(&f, &[dy(1, 2)]).unwrap();
        assert!(report.pass);
        assert_eq!(report.best_t, vec!["1/2", "1/2"]);
        assert_eq!(report.rows[0].measure_upper, rat(1, 1));
        assert_eq!(report.rows[0].ratio_upper, rat(64, 1));
        // Certified: the four center cells carry an exact corner hit.
        assert_eq!(report.rows[0].measure_lower, rat(1, 4));
        assert!(report.rows[0].certified);
    }

    #[test]
    fn constant_measure_check_is_certified() {
        let f = builtin_map("constant_2_1", 2).unwrap();
        let report = waist_check_measure(&f, &[dy(1, 2)]).unwrap();
        assert!(report.pass);
        assert_eq!(report.best_t, vec!["1/2"]);
        assert_eq!(report.rows[0].measure_upper, rat(1, 1));
        assert_eq!(report.rows[0].measure_lower, rat(1, 1));
        assert_eq!(report.rows[0].ratio_upper, rat(8, 1));
        assert!(report.rows[0].certified);
    }

    #[test]
    fn whole_corpus_passes_the_measure_check() {
        for name in BUILTIN_MAPS {
            let f = builtin_map(name, 2).unwrap();
            let report = waist_check_measure(&f, &[dy(1, 3), dy(1, 2)]).unwrap();
            assert!(report.pass, "{name} must pass at q=2");
        }
    }

    #[test]
    fn refining_the_grid_preserves_passes() {
        for name in BUILTIN_MAPS {
            let (q0, q1) = if name.starts_with("proj_3") || name.starts_with("constant_3") {
                (1, 2)
            } else {
                (2, 3)
            };
            let coarse = waist_check_measure(&builtin_map(name, q0).unwrap(), &[dy(1, 2)]).unwrap();
            let fine = waist_check_measure(&builtin_map(name, q1).unwrap(), &[dy(1, 2)]).unwrap();
            assert!(coarse.pass, "{name} at q={q0}");
            assert!(fine.pass, "{name} at q={q1}");
        }
    }

    #[test]
    fn projection_cover_check_counts_five_witnesses() {
        let f = builtin_map("proj_2_1", 2).unwrap();
        let report = waist_check_cover(&f, &[dy(1, 2)]).unwrap();
        assert!(report.pass);
        assert_eq!(report.best_t, vec!["1/2"]);
        // The five exact fiber nodes are pairwise 1/4 apart.
        assert_eq!(report.rows[0].separated_count, 5);
        assert_eq!(report.rows[0].required, rat(1, 16));
    }

    #[test]
    fn equidimensional_cover_check_needs_one_point() {
        let f = builtin_map("identity_2", 2).unwrap();
        let report = waist_check_cover(&f, &[dy(1, 2)]).unwrap();
        assert!(report.pass);
        assert_eq!(report.rows[0].separated_count, 1);
        assert_eq!(report.rows[0].required, rat(1, 64));
    }

    #[test]
    fn constant_cover_check_packs_the_grid() {
        let f = builtin_map("constant_2_1", 2).unwrap();
        let report = waist_check_cover(&f, &[dy(1, 2)]).unwrap();
        assert!(report.pass);
        // All 25 grid nodes are exact hits, pairwise >= 1/4 apart.
        assert_eq!(report.rows[0].separated_count, 25);
        // At least the coarse packing bound from the statement.
        assert!(report.rows[0].separated_count >= 9);
        assert_eq!(report.rows[0].required, rat(1, 16));
    }

    #[test]
    fn cover_check_rejects_expanding_maps() {
        let f = GridMap::from_fn(1, 2, 1, |x| vec![x[0].clone(), x[0].clone()]).unwrap();
        assert!(matches!(
            waist_check_cover(&f, &[dy(1, 2)]),
            Err(CovdimError::Unsupported(_))
        ));
    }

    #[test]
    fn whole_corpus_passes_the_cover_check() {
        for name in BUILTIN_MAPS {
            let f = builtin_map(name, 2).unwrap();
            let report = waist_check_cover(&f, &[dy(1, 2)]).unwrap();
            assert!(report.pass, "{name} must pass the covering bound");
        }
    }

    #[test]
    fn grid_map_json_round_trip() {
        let f = builtin_map("identity_1", 1).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["values"], serde_json::json!(["0", "1/2", "1"]));
        let back: GridMap = serde_json::from_str(&json).unwrap();
        assert_eq!(eval_map(&back, &dv(&[(1, 2)])).unwrap(), vec![rat(1, 4)]);

        let bad = r#"{"n":1,"m":1,"q":1,"values":["0","1/2"]}"#;
        assert!(serde_json::from_str::<GridMap>(bad).is_err());
        let unparsable = r#"{"n":1,"m":1,"q":0,"values":["0","x"]}"#;
        assert!(serde_json::from_str::<GridMap>(unparsable).is_err());
    }

    #[test]
    fn builtin_names_are_exhaustive() {
        for name in BUILTIN_MAPS {
            assert!(builtin_map(name, 1).is_ok());
        }
        assert!(builtin_map("unknown", 1).is_err());
    }
}
