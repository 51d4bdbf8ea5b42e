//! Prefix/suffix scans, tuple scans, reductions and the fused
//! scan → broadcast → transform → reduce kernel behind every gradient and
//! Hessian evaluation.
//!
//! Parallel scans use a two-phase reduce-then-scan scheme over fixed-size
//! chunks:
//!
//! 1. every chunk sums its elements (in scan direction),
//! 2. the chunk totals are scanned serially into per-chunk carries,
//! 3. every chunk re-scans its elements starting from its carry.
//!
//! Element `i` of a scan is always `carry + local_running_sum`, so results
//! depend on the chunk size only. A single chunk reproduces the plain serial
//! scan bit for bit.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::par::{for_each_chunk_mut, for_each_chunk_mut3, map_chunks};

/// Chunking of an index space among scan workers.
///
/// `worker_count` only affects scheduling; numerical results are a function
/// of `chunk_size` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    chunk_size: usize,
    worker_count: usize,
}

impl ChunkPlan {
    pub const DEFAULT_CHUNK_SIZE: usize = 65_536;

    pub fn new(chunk_size: usize, worker_count: usize) -> Result<Self> {
        if chunk_size == 0 || worker_count == 0 {
            return Err(Error::InvalidConfig(
                "chunk size and worker count must be positive".into(),
            ));
        }
        Ok(Self {
            chunk_size,
            worker_count,
        })
    }

    /// One chunk spanning any input, one worker: the plain serial scan.
    pub const fn serial() -> Self {
        Self {
            chunk_size: usize::MAX,
            worker_count: 1,
        }
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn worker_count(&self) -> usize {
        self.worker_count
    }

    pub fn with_workers(mut self, worker_count: usize) -> Self {
        self.worker_count = worker_count.max(1);
        self
    }

    pub fn chunk_count(&self, len: usize) -> usize {
        if len == 0 {
            0
        } else {
            (len - 1) / self.chunk_size + 1
        }
    }
}

impl Default for ChunkPlan {
    fn default() -> Self {
        Self {
            chunk_size: Self::DEFAULT_CHUNK_SIZE,
            worker_count: default_workers(),
        }
    }
}

#[cfg(feature = "std")]
fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(not(feature = "std"))]
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Three equally long lanes scanned together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tuple3Buffer {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Tuple3Buffer {
    pub fn zeros(len: usize) -> Self {
        Self {
            a: vec![0.0; len],
            b: vec![0.0; len],
            c: vec![0.0; len],
        }
    }

    pub fn from_lanes(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        check_len(a.len(), b.len())?;
        check_len(a.len(), c.len())?;
        Ok(Self { a, b, c })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn view(&self) -> Tuple3<'_> {
        Tuple3 {
            a: &self.a,
            b: &self.b,
            c: &self.c,
        }
    }
}

/// Borrowed three-lane input.
#[derive(Debug, Clone, Copy)]
pub struct Tuple3<'a> {
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub c: &'a [f64],
}

impl<'a> Tuple3<'a> {
    pub fn new(a: &'a [f64], b: &'a [f64], c: &'a [f64]) -> Result<Self> {
        check_len(a.len(), b.len())?;
        check_len(a.len(), c.len())?;
        Ok(Self { a, b, c })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// Maximal runs of equal times in a time-sorted array, stored as exclusive
/// end offsets in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TiedBlocks {
    ends: Vec<usize>,
}

impl TiedBlocks {
    /// Groups consecutive equal keys.
    pub fn from_sorted_keys(keys: &[f64]) -> Self {
        let mut ends = Vec::new();
        for i in 1..keys.len() {
            if keys[i] != keys[i - 1] {
                ends.push(i);
            }
        }
        if !keys.is_empty() {
            ends.push(keys.len());
        }
        Self { ends }
    }

    /// Every element in its own block.
    pub fn singletons(len: usize) -> Self {
        Self {
            ends: (1..=len).collect(),
        }
    }

    pub fn from_ends(ends: Vec<usize>) -> Result<Self> {
        if ends.windows(2).any(|w| w[0] >= w[1]) || ends.first() == Some(&0) {
            return Err(Error::InvalidConfig(
                "block ends must be strictly ascending and positive".into(),
            ));
        }
        Ok(Self { ends })
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Total number of elements covered.
    pub fn span(&self) -> usize {
        self.ends.last().copied().unwrap_or(0)
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let starts = core::iter::once(0).chain(self.ends.iter().copied());
        starts.zip(self.ends.iter().copied()).map(|(s, e)| s..e)
    }

    /// Replaces every element of a forward scan by the value at the end of
    /// its block, so tied subjects share one risk set.
    pub fn broadcast_last(&self, values: &mut [f64]) {
        for r in self.ranges() {
            let v = values[r.end - 1];
            values[r.clone()].fill(v);
        }
    }

    /// Replaces every element of an inclusive suffix scan by the suffix that
    /// starts right after its block (zero for the final block), i.e. the sum
    /// over strictly later positions.
    pub fn broadcast_after(&self, values: &mut [f64]) {
        let n = values.len();
        for r in self.ranges() {
            let v = if r.end < n { values[r.end] } else { 0.0 };
            values[r.clone()].fill(v);
        }
    }
}

/// Event weights aggregated per tied block, keeping only blocks that carry
/// events. Precomputed once per dataset and reused by every fused call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventBlocks {
    len: usize,
    ends: Vec<usize>,
    weights: Vec<f64>,
}

impl EventBlocks {
    pub fn new(event_mask: &[f64], blocks: &TiedBlocks) -> Result<Self> {
        check_len(event_mask.len(), blocks.span())?;
        let mut ends = Vec::new();
        let mut weights = Vec::new();
        for r in blocks.ranges() {
            let w: f64 = event_mask[r.clone()].iter().sum();
            if w != 0.0 {
                ends.push(r.end);
                weights.push(w);
            }
        }
        Ok(Self {
            len: event_mask.len(),
            ends,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Exclusive ends of the blocks that contain events.
    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    /// Summed event mask of each block in [`ends`](Self::ends).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Event blocks whose last element lies in `range`.
    fn within(&self, range: &Range<usize>) -> Range<usize> {
        let lo = self.ends.partition_point(|&e| e <= range.start);
        let hi = self.ends.partition_point(|&e| e <= range.end);
        lo..hi
    }
}

/// Per-subject factors that extend the risk set with competing-event
/// subjects: lanes are additionally suffix-scanned after multiplication by
/// `u`, and the suffix sums enter scaled by the block's `g`.
///
/// `g` is read at the last position of each tied block, so it must be
/// constant within blocks.
#[derive(Debug, Clone, Copy)]
pub struct CompetingWeights<'a> {
    pub u: &'a [f64],
    pub g: &'a [f64],
}

/// Result of a scan-transform-reduce: `δᵀG` and `δᵀ(H − G×G)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScanReduction {
    pub grad_sum: f64,
    pub hess_sum: f64,
}

// ---------------------------------------------------------------------------
// Single-lane scans and reductions

fn sum_forward(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    s
}

fn sum_backward(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs.iter().rev() {
        s += x;
    }
    s
}

/// Exclusive carries: `carry[c] = Σ_{c' < c} totals[c']` (forward) or
/// `Σ_{c' > c}` (backward).
fn chunk_carries(totals: &[f64], direction: Direction) -> Vec<f64> {
    let mut carries = vec![0.0; totals.len()];
    let mut acc = 0.0;
    match direction {
        Direction::Forward => {
            for (c, t) in carries.iter_mut().zip(totals) {
                *c = acc;
                acc += t;
            }
        }
        Direction::Backward => {
            for (c, t) in carries.iter_mut().zip(totals).rev() {
                *c = acc;
                acc += t;
            }
        }
    }
    carries
}

fn scan_chunk_into(input: &[f64], out: &mut [f64], carry: f64, direction: Direction) {
    let mut s = 0.0;
    match direction {
        Direction::Forward => {
            for (o, &x) in out.iter_mut().zip(input) {
                s += x;
                *o = carry + s;
            }
        }
        Direction::Backward => {
            for (o, &x) in out.iter_mut().zip(input).rev() {
                s += x;
                *o = carry + s;
            }
        }
    }
}

fn scan(input: &[f64], direction: Direction, plan: &ChunkPlan) -> Vec<f64> {
    let n = input.len();
    let totals = map_chunks(plan, n, |_, r| match direction {
        Direction::Forward => sum_forward(&input[r]),
        Direction::Backward => sum_backward(&input[r]),
    });
    let carries = chunk_carries(&totals, direction);
    let mut out = vec![0.0; n];
    for_each_chunk_mut(plan, &mut out, |c, lo, slice| {
        scan_chunk_into(&input[lo..lo + slice.len()], slice, carries[c], direction);
    });
    out
}

/// `out[i] = Σ_{k ≤ i} input[k]`.
pub fn prefix_scan(input: &[f64], plan: &ChunkPlan) -> Vec<f64> {
    scan(input, Direction::Forward, plan)
}

/// `out[i] = Σ_{k ≥ i} input[k]`.
pub fn suffix_scan(input: &[f64], plan: &ChunkPlan) -> Vec<f64> {
    scan(input, Direction::Backward, plan)
}

/// Sum of all elements; chunk totals are combined in chunk order.
pub fn reduce(input: &[f64], plan: &ChunkPlan) -> f64 {
    let totals = map_chunks(plan, input.len(), |_, r| sum_forward(&input[r]));
    sum_forward(&totals)
}

/// Scans the three lanes independently in a single pass over the input.
pub fn tuple3_scan(input: Tuple3<'_>, direction: Direction, plan: &ChunkPlan) -> Tuple3Buffer {
    let n = input.len();
    let totals = map_chunks(plan, n, |_, r| match direction {
        Direction::Forward => sum3_forward(input, r),
        Direction::Backward => sum3_backward(input, r),
    });
    let carries = carries3(&totals, direction);
    let mut out = Tuple3Buffer::zeros(n);
    let Tuple3Buffer { a, b, c } = &mut out;
    for_each_chunk_mut3(plan, a, b, c, |k, lo, oa, ob, oc| {
        let hi = lo + oa.len();
        let (ca, cb, cc) = carries[k];
        let (xa, xb, xc) = (&input.a[lo..hi], &input.b[lo..hi], &input.c[lo..hi]);
        let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
        let mut step = |i: usize| {
            sa += xa[i];
            sb += xb[i];
            sc += xc[i];
            oa[i] = ca + sa;
            ob[i] = cb + sb;
            oc[i] = cc + sc;
        };
        match direction {
            Direction::Forward => (0..xa.len()).for_each(&mut step),
            Direction::Backward => (0..xa.len()).rev().for_each(&mut step),
        }
    });
    out
}

type Triple = (f64, f64, f64);

fn sum3_forward(t: Tuple3<'_>, r: Range<usize>) -> Triple {
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    for i in r {
        sa += t.a[i];
        sb += t.b[i];
        sc += t.c[i];
    }
    (sa, sb, sc)
}

fn sum3_backward(t: Tuple3<'_>, r: Range<usize>) -> Triple {
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    for i in r.rev() {
        sa += t.a[i];
        sb += t.b[i];
        sc += t.c[i];
    }
    (sa, sb, sc)
}

/// Backward sums of the `u`-weighted lanes.
fn sum3_weighted_backward(t: Tuple3<'_>, u: &[f64], r: Range<usize>) -> Triple {
    let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
    for i in r.rev() {
        let w = u[i];
        sa += w * t.a[i];
        sb += w * t.b[i];
        sc += w * t.c[i];
    }
    (sa, sb, sc)
}

fn carries3(totals: &[Triple], direction: Direction) -> Vec<Triple> {
    let mut carries = vec![(0.0, 0.0, 0.0); totals.len()];
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    let mut step = |k: usize| {
        carries[k] = (a, b, c);
        a += totals[k].0;
        b += totals[k].1;
        c += totals[k].2;
    };
    match direction {
        Direction::Forward => (0..totals.len()).for_each(&mut step),
        Direction::Backward => (0..totals.len()).rev().for_each(&mut step),
    }
    carries
}

// ---------------------------------------------------------------------------
// Transform + reduce

/// Risk-set ratios `G` and `H` from accumulated lane sums and their
/// contribution to the gradient and Hessian reductions.
#[inline]
fn transform(
    position: usize,
    weight: f64,
    prefix: Triple,
    suffix: Triple,
    g: f64,
) -> Result<(f64, f64)> {
    let den = prefix.0 + g * suffix.0;
    if !(den > 0.0) {
        return Err(Error::NonPositiveDenominator {
            position,
            value: den,
        });
    }
    let gg = (prefix.1 + g * suffix.1) / den;
    let hh = (prefix.2 + g * suffix.2) / den;
    Ok((weight * gg, weight * (hh - gg * gg)))
}

fn check_inputs(
    input: Tuple3<'_>,
    competing: Option<CompetingWeights<'_>>,
    events: &EventBlocks,
) -> Result<()> {
    let n = input.len();
    check_len(n, input.b.len())?;
    check_len(n, input.c.len())?;
    check_len(n, events.len())?;
    if let Some(cw) = competing {
        check_len(n, cw.u.len())?;
        check_len(n, cw.g.len())?;
    }
    Ok(())
}

/// Scan, tied-block broadcast, elementwise transform and both reductions in
/// one kernel.
///
/// Equivalent to [`separated_scan_transform_reduce`] but never materializes
/// the scanned lanes: each chunk walks its elements once (twice with
/// competing weights, the backward walk staying in a chunk-local buffer) and
/// emits partial sums at the ends of event-carrying blocks.
pub fn fused_scan_transform_reduce(
    input: Tuple3<'_>,
    competing: Option<CompetingWeights<'_>>,
    event_mask: &[f64],
    blocks: &TiedBlocks,
    plan: &ChunkPlan,
) -> Result<ScanReduction> {
    let events = EventBlocks::new(event_mask, blocks)?;
    fused_with_events(input, competing, &events, plan)
}

/// [`fused_scan_transform_reduce`] with precomputed event blocks.
pub fn fused_with_events(
    input: Tuple3<'_>,
    competing: Option<CompetingWeights<'_>>,
    events: &EventBlocks,
    plan: &ChunkPlan,
) -> Result<ScanReduction> {
    check_inputs(input, competing, events)?;
    let n = input.len();
    if events.ends.is_empty() {
        return Ok(ScanReduction::default());
    }

    // Phase 1: chunk totals of the forward lanes and the u-weighted backward lanes.
    let totals = map_chunks(plan, n, |_, r| {
        let fwd = sum3_forward(input, r.clone());
        let bwd = match competing {
            Some(cw) => sum3_weighted_backward(input, cw.u, r),
            None => (0.0, 0.0, 0.0),
        };
        (fwd, bwd)
    });
    // Phase 2: carries.
    let fwd_totals: Vec<Triple> = totals.iter().map(|t| t.0).collect();
    let fwd_carries = carries3(&fwd_totals, Direction::Forward);
    let bwd_carries = competing.map(|_| {
        let bwd_totals: Vec<Triple> = totals.iter().map(|t| t.1).collect();
        carries3(&bwd_totals, Direction::Backward)
    });

    // Phase 3: rescan each chunk, transform at event-block ends, reduce locally.
    let partials = map_chunks(plan, n, |k, r| -> Result<(f64, f64)> {
        let blocks = events.within(&r);
        if blocks.is_empty() {
            return Ok((0.0, 0.0));
        }
        let lo = r.start;
        // Inclusive suffix sums inside the chunk, relative to the chunk carry.
        let local_suffix = competing.map(|cw| {
            let mut buf = vec![(0.0, 0.0, 0.0); r.len()];
            let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
            for i in r.clone().rev() {
                let w = cw.u[i];
                sa += w * input.a[i];
                sb += w * input.b[i];
                sc += w * input.c[i];
                buf[i - lo] = (sa, sb, sc);
            }
            buf
        });
        let (ca, cb, cc) = fwd_carries[k];
        let (mut sa, mut sb, mut sc) = (0.0, 0.0, 0.0);
        let mut next = r.start;
        let (mut grad, mut hess) = (0.0, 0.0);
        for b in blocks {
            let end = events.ends[b];
            for i in next..end {
                sa += input.a[i];
                sb += input.b[i];
                sc += input.c[i];
            }
            next = end;
            let prefix = (ca + sa, cb + sb, cc + sc);
            let (suffix, g) = match (competing, &local_suffix, &bwd_carries) {
                (Some(cw), Some(buf), Some(bc)) => {
                    let carry = bc[k];
                    let s = if end < r.end {
                        let l = buf[end - lo];
                        (carry.0 + l.0, carry.1 + l.1, carry.2 + l.2)
                    } else {
                        carry
                    };
                    (s, cw.g[end - 1])
                }
                _ => ((0.0, 0.0, 0.0), 0.0),
            };
            let (dg, dh) = transform(end - 1, events.weights[b], prefix, suffix, g)?;
            grad += dg;
            hess += dh;
        }
        Ok((grad, hess))
    });

    let mut out = ScanReduction::default();
    for p in partials {
        let (g, h) = p?;
        out.grad_sum += g;
        out.hess_sum += h;
    }
    Ok(out)
}

/// Tuple scans are materialized, then broadcast, transform and reduce run as
/// one fused pass over the event blocks.
pub fn partially_fused_scan_transform_reduce(
    input: Tuple3<'_>,
    competing: Option<CompetingWeights<'_>>,
    events: &EventBlocks,
    plan: &ChunkPlan,
) -> Result<ScanReduction> {
    check_inputs(input, competing, events)?;
    let n = input.len();
    let prefix = tuple3_scan(input, Direction::Forward, plan);
    let suffix = competing.map(|cw| {
        let weighted = weighted_lanes(input, cw.u, plan);
        tuple3_scan(weighted.view(), Direction::Backward, plan)
    });
    let mut out = ScanReduction::default();
    for (&end, &w) in events.ends.iter().zip(&events.weights) {
        let i = end - 1;
        let p = (prefix.a[i], prefix.b[i], prefix.c[i]);
        let (s, g) = match (&suffix, competing) {
            (Some(s), Some(cw)) if end < n => ((s.a[end], s.b[end], s.c[end]), cw.g[i]),
            (Some(_), Some(cw)) => ((0.0, 0.0, 0.0), cw.g[i]),
            _ => ((0.0, 0.0, 0.0), 0.0),
        };
        let (dg, dh) = transform(i, w, p, s, g)?;
        out.grad_sum += dg;
        out.hess_sum += dh;
    }
    Ok(out)
}

fn weighted_lanes(input: Tuple3<'_>, u: &[f64], plan: &ChunkPlan) -> Tuple3Buffer {
    let mut out = Tuple3Buffer::zeros(input.len());
    let Tuple3Buffer { a, b, c } = &mut out;
    for_each_chunk_mut3(plan, a, b, c, |_, lo, oa, ob, oc| {
        for j in 0..oa.len() {
            let i = lo + j;
            oa[j] = u[i] * input.a[i];
            ob[j] = u[i] * input.b[i];
            oc[j] = u[i] * input.c[i];
        }
    });
    out
}

/// Reference path built from separate kernels: one scan per lane, a
/// broadcast pass over tied blocks, an elementwise transform writing two
/// full-length vectors, and two reductions.
pub fn separated_scan_transform_reduce(
    input: Tuple3<'_>,
    competing: Option<CompetingWeights<'_>>,
    event_mask: &[f64],
    blocks: &TiedBlocks,
    plan: &ChunkPlan,
) -> Result<ScanReduction> {
    let n = input.len();
    check_len(n, input.b.len())?;
    check_len(n, input.c.len())?;
    check_len(n, event_mask.len())?;
    check_len(n, blocks.span())?;

    let mut pa = prefix_scan(input.a, plan);
    let mut pb = prefix_scan(input.b, plan);
    let mut pc = prefix_scan(input.c, plan);
    blocks.broadcast_last(&mut pa);
    blocks.broadcast_last(&mut pb);
    blocks.broadcast_last(&mut pc);

    let suffix = match competing {
        Some(cw) => {
            check_len(n, cw.u.len())?;
            check_len(n, cw.g.len())?;
            let weighted = weighted_lanes(input, cw.u, plan);
            let mut sa = suffix_scan(&weighted.a, plan);
            let mut sb = suffix_scan(&weighted.b, plan);
            let mut sc = suffix_scan(&weighted.c, plan);
            blocks.broadcast_after(&mut sa);
            blocks.broadcast_after(&mut sb);
            blocks.broadcast_after(&mut sc);
            Some((sa, sb, sc, cw.g))
        }
        None => None,
    };

    let mut dg = vec![0.0; n];
    let mut dh = vec![0.0; n];
    for i in 0..n {
        let w = event_mask[i];
        if w == 0.0 {
            continue;
        }
        let (s, g) = match &suffix {
            Some((sa, sb, sc, g)) => ((sa[i], sb[i], sc[i]), g[i]),
            None => ((0.0, 0.0, 0.0), 0.0),
        };
        let (x, y) = transform(i, w, (pa[i], pb[i], pc[i]), s, g)?;
        dg[i] = x;
        dh[i] = y;
    }
    Ok(ScanReduction {
        grad_sum: reduce(&dg, plan),
        hess_sum: reduce(&dh, plan),
    })
}
