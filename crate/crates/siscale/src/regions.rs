//! Rate regions for two-decoder scalable coding with side information.
//!
//! A region is reported as its lower envelope: for each `r1` on a grid, the
//! smallest sum rate `r1 + r2` found with `R1 <= r1`. Points of achievable
//! regions carry the witness channel that attains them.
//!
//! The regions nest (`hat ⊆ inner ⊆ out ⊆ cap` as sets of rate pairs), so a
//! witness of a smaller region is also a candidate for every larger one.
//! [`region_battery`] exploits that: each bound is seeded with the witnesses
//! of the bounds inside it, which keeps the heuristic frontiers ordered.

use serde::{Deserialize, Serialize};

use crate::dsbs::{self, DsbsRegion};
use crate::error::{Error, Result};
use crate::probcore::{format_sig, hb, DistortionMeasure, JointSource, JointTable, Matrix, Side};
use crate::rdopt::eval::SourceCache;
use crate::rdopt::search::{Layout, Score, CONSTRAINT_SLACK};
use crate::rdopt::{self, AuxChannel, OptimizerConfig};

/// Slack on the `R1 <= grid value` constraint.
const RATE_SLACK: f64 = 1e-12;

/// A source with two distortion targets.
#[derive(Clone, Copy, Debug)]
pub struct Instance<'a> {
    pub src: &'a JointSource,
    pub d1: &'a DistortionMeasure,
    pub d2: &'a DistortionMeasure,
    pub level1: f64,
    pub level2: f64,
}

impl Instance<'_> {
    fn check(&self) -> Result<()> {
        rdopt::check_measure(self.src, self.d1, "d1")?;
        rdopt::check_measure(self.src, self.d2, "d2")?;
        rdopt::check_level(self.src, self.d1, self.level1, "D1")?;
        rdopt::check_level(self.src, self.d2, self.level2, "D2")
    }

    /// Both decoders meet their targets from side information alone.
    fn trivial(&self) -> bool {
        rdopt::zero_rate_distortion(self.src, Side::First, self.d1) <= self.level1 + CONSTRAINT_SLACK
            && rdopt::zero_rate_distortion(self.src, Side::Second, self.d2) <= self.level2 + CONSTRAINT_SLACK
    }

    fn meets(&self, w: &Witness) -> bool {
        w.d1 <= self.level1 + CONSTRAINT_SLACK && w.d2 <= self.level2 + CONSTRAINT_SLACK
    }
}

/// Which bound produced a frontier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTag {
    Inner,
    InnerHat,
    OuterCap,
    /// Heuristic minimization of an outer bound: an inner approximation of it.
    OuterOutApprox,
    Lossless,
    Deterministic,
    /// Converse expressions only; not known to be achievable.
    ConverseOnly,
}

impl BoundTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundTag::Inner => "inner",
            BoundTag::InnerHat => "inner_hat",
            BoundTag::OuterCap => "outer_cap",
            BoundTag::OuterOutApprox => "outer_out_approx",
            BoundTag::Lossless => "lossless",
            BoundTag::Deterministic => "deterministic",
            BoundTag::ConverseOnly => "converse_only",
        }
    }
}

/// A channel together with the rates and distortions it attains.
///
/// Pair channels (`dims = [|W1|, |W2|]`) are re-evaluated with
/// [`AuxChannel::hb_terms`], `(V, W1, W2)` channels with
/// [`AuxChannel::inner_terms`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub channel: AuxChannel,
    pub r1: f64,
    pub sum: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub r1: f64,
    /// `R1 + R2`; at least `r1`.
    pub r_sum: f64,
    /// Channel attaining the point: its own `r1` is at most the point's and
    /// `r_sum = max(r1, witness.sum)`.
    pub witness: Option<Witness>,
}

/// Sampled lower envelope of a rate region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionFrontier {
    pub tag: BoundTag,
    /// Sorted by `r1`; `r_sum` is non-increasing.
    pub points: Vec<FrontierPoint>,
    /// Channels behind points without a single witness (the outer corner).
    pub support: Vec<AuxChannel>,
}

impl RegionFrontier {
    fn new(tag: BoundTag, points: Vec<FrontierPoint>) -> Self {
        RegionFrontier { tag, points, support: Vec::new() }
    }

    /// Smallest sum rate at `R1 <= r1`, or `+inf` when no point qualifies.
    pub fn value_at(&self, r1: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.r1 <= r1 + 1e-12)
            .map(|p| p.r_sum)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn corner(&self) -> Option<&FrontierPoint> {
        self.points.first()
    }

    /// Sorted in `r1`, non-increasing in `r_sum`, finite, nonnegative, `r_sum >= r1`.
    pub fn is_well_formed(&self) -> bool {
        self.points.iter().all(|p| p.r1.is_finite() && p.r_sum.is_finite() && p.r1 >= 0.0 && p.r_sum >= p.r1)
            && self.points.windows(2).all(|w| w[0].r1 <= w[1].r1 && w[1].r_sum <= w[0].r_sum)
    }

    /// CSV with header `r1,r_sum,bound_tag`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r1,r_sum,bound_tag\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", format_sig(p.r1), format_sig(p.r_sum), self.tag.as_str()));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// The `r1` grid a frontier is sampled on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionGrid {
    /// Evenly spaced points between the Wyner-Ziv corner and the first
    /// rate of the best Heegard-Berger witness.
    Auto(usize),
    Explicit(Vec<f64>),
}

impl Default for RegionGrid {
    fn default() -> Self {
        RegionGrid::Auto(33)
    }
}

/// Wyner-Ziv and Heegard-Berger solutions the outer corner is built from.
struct CapBase {
    wz: Witness,
    hb: Witness,
}

fn cap_base(inst: &Instance, cfg: &OptimizerConfig) -> Result<CapBase> {
    let wz = rdopt::wyner_ziv_rate(inst.src, inst.d1, inst.level1, cfg)?;
    let hbr = rdopt::heegard_berger_rate(inst.src, inst.d1, inst.d2, inst.level1, inst.level2, cfg)?;
    let t = hbr.witness.hb_terms(inst.src, inst.d1, inst.d2)?;
    Ok(CapBase {
        wz: Witness { channel: wz.witness, r1: wz.rate, sum: f64::INFINITY, d1: wz.distortions[0], d2: f64::INFINITY },
        hb: Witness { channel: hbr.witness, r1: t.r1, sum: hbr.rate, d1: t.d1, d2: t.d2 },
    })
}

fn resolve_grid(grid: &RegionGrid, base: &CapBase) -> Result<Vec<f64>> {
    let mut g = match grid {
        RegionGrid::Auto(n) => {
            if *n == 0 {
                return Err(Error::Config("grid needs at least one point".into()));
            }
            let lo = base.wz.r1;
            let hi = base.hb.r1.max(lo);
            if *n == 1 || hi - lo < 1e-9 {
                vec![lo]
            } else {
                (0..*n).map(|i| lo + (hi - lo) * i as f64 / (*n - 1) as f64).collect()
            }
        }
        RegionGrid::Explicit(v) => {
            if v.is_empty() || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Config("explicit grid values must be finite and nonnegative".into()));
            }
            v.clone()
        }
    };
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    g.dedup();
    Ok(g)
}

fn stream(bound: u64, index: usize, sub: u64) -> u64 {
    (bound << 32) | ((index as u64) << 4) | sub
}

/// Best feasible candidate with `r1 <= g`; ties keep the earliest.
fn best_at(inst: &Instance, g: f64, cands: Vec<Witness>) -> Option<Witness> {
    let mut best: Option<Witness> = None;
    for c in cands {
        if !inst.meets(&c) || c.r1 > g + RATE_SLACK {
            continue;
        }
        if best.as_ref().map_or(true, |b| c.sum < b.sum - 1e-14) {
            best = Some(c);
        }
    }
    best
}

/// Turns per-grid-point winners into a monotone frontier. A witness found at
/// a smaller grid value stays valid at every larger one.
fn assemble(tag: BoundTag, grid: &[f64], winners: Vec<Option<Witness>>) -> RegionFrontier {
    let mut running: Option<Witness> = None;
    let mut points = Vec::new();
    for (g, w) in grid.iter().zip(winners) {
        if let Some(w) = w {
            if running.as_ref().map_or(true, |r| w.sum < r.sum - 1e-14) {
                running = Some(w);
            }
        }
        if let Some(r) = &running {
            points.push(FrontierPoint { r1: *g, r_sum: g.max(r.sum), witness: Some(r.clone()) });
        }
    }
    RegionFrontier::new(tag, points)
}

// ---------- pair channels ----------

/// Flat pair channel `P(w1, w2 | x)`, index `x * a * b + w1 * b + w2`.
#[derive(Clone, Debug)]
struct Pair {
    q: Vec<f64>,
    a: usize,
    b: usize,
}

impl Pair {
    fn from_channel(c: &AuxChannel) -> Option<Pair> {
        (c.dims.len() == 2).then(|| Pair { q: c.cond.data().to_vec(), a: c.dims[0], b: c.dims[1] })
    }

    /// Drops auxiliary values that never occur.
    fn compact(&self, nx: usize) -> Pair {
        let (a, b) = (self.a, self.b);
        let used1: Vec<usize> =
            (0..a).filter(|&w1| (0..nx).any(|x| (0..b).any(|w2| self.q[x * a * b + w1 * b + w2] > 0.0))).collect();
        let used2: Vec<usize> =
            (0..b).filter(|&w2| (0..nx).any(|x| (0..a).any(|w1| self.q[x * a * b + w1 * b + w2] > 0.0))).collect();
        let (na, nb) = (used1.len().max(1), used2.len().max(1));
        if used1.is_empty() || used2.is_empty() {
            return Pair { q: vec![1.0; nx], a: 1, b: 1 };
        }
        let mut q = vec![0.0; nx * na * nb];
        for x in 0..nx {
            for (i, &w1) in used1.iter().enumerate() {
                for (j, &w2) in used2.iter().enumerate() {
                    q[x * na * nb + i * nb + j] = self.q[x * a * b + w1 * b + w2];
                }
            }
        }
        Pair { q, a: na, b: nb }
    }

    /// Places the channel into larger alphabets.
    fn pad(&self, nx: usize, a: usize, b: usize) -> Option<Vec<f64>> {
        if self.a > a || self.b > b {
            return None;
        }
        let mut q = vec![0.0; nx * a * b];
        for x in 0..nx {
            for w1 in 0..self.a {
                for w2 in 0..self.b {
                    q[x * a * b + w1 * b + w2] = self.q[x * self.a * self.b + w1 * self.b + w2];
                }
            }
        }
        Some(q)
    }

    fn marginal(&self, nx: usize, axis: usize) -> Vec<f64> {
        let k = if axis == 0 { self.a } else { self.b };
        let mut m = vec![0.0; nx * k];
        for x in 0..nx {
            for w1 in 0..self.a {
                for w2 in 0..self.b {
                    m[x * k + if axis == 0 { w1 } else { w2 }] += self.q[x * self.a * self.b + w1 * self.b + w2];
                }
            }
        }
        m
    }
}

fn pair_witness(cache: &SourceCache, inst: &Instance, q: &[f64], a: usize, b: usize) -> Result<Witness> {
    let t = cache.pair(q, a, b, inst.d1, inst.d2);
    let channel = cache.pair_witness(q, a, b, inst.d1, inst.d2)?;
    Ok(Witness { channel, r1: t.r1, sum: t.sum, d1: t.d1, d2: t.d2 })
}

// ---------- structured (V, W1, W2) channels ----------

type InnerDims = (usize, usize, usize);

fn inner_layout(nx: usize, (nv, n1, n2): InnerDims) -> Layout {
    let mut sizes = vec![nv; nx];
    sizes.extend(std::iter::repeat(n1).take(nx * nv));
    sizes.extend(std::iter::repeat(n2).take(nx * nv));
    Layout::new(sizes)
}

fn inner_witness(cache: &SourceCache, inst: &Instance, point: &[f64], dims: InnerDims) -> Result<Witness> {
    let t = cache.inner(point, dims, inst.d1, inst.d2);
    let channel = cache.inner_witness(point, dims, inst.d1, inst.d2)?;
    Ok(Witness { channel, r1: t.r1, sum: t.sum, d1: t.d1, d2: t.d2 })
}

/// Products of identity and constant choices for `V`, `W1` and `W2`.
fn inner_structural_seeds(nx: usize, (nv, n1, n2): InnerDims) -> Vec<Vec<f64>> {
    let mut seeds = Vec::new();
    for flags in 0..8u8 {
        let (v_id, w1_id, w2_id) = (flags & 1 != 0, flags & 2 != 0, flags & 4 != 0);
        let mut pt = vec![0.0; nx * nv + nx * nv * (n1 + n2)];
        for x in 0..nx {
            pt[x * nv + if v_id { x.min(nv - 1) } else { 0 }] = 1.0;
            for v in 0..nv {
                let row = x * nv + v;
                pt[nx * nv + row * n1 + if w1_id { x.min(n1 - 1) } else { 0 }] = 1.0;
                pt[nx * nv * (1 + n1) + row * n2 + if w2_id { x.min(n2 - 1) } else { 0 }] = 1.0;
            }
        }
        seeds.push(pt);
    }
    seeds
}

/// Embeds a pair channel as a structured point, with `V` a copy of `W2`
/// (`v_is_w2`) or of `W1`. Returns `None` when the alphabets do not fit.
fn embed_pair(p: &Pair, nx: usize, (nv, n1, n2): InnerDims, v_is_w2: bool) -> Option<Vec<f64>> {
    let (a, b) = (p.a, p.b);
    let kv = if v_is_w2 { b } else { a };
    if kv > nv || a > n1 || b > n2 {
        return None;
    }
    let qv = p.marginal(nx, if v_is_w2 { 1 } else { 0 });
    let mut pt = vec![0.0; nx * nv + nx * nv * (n1 + n2)];
    let off1 = nx * nv;
    let off2 = nx * nv * (1 + n1);
    for x in 0..nx {
        for v in 0..nv {
            let row = x * nv + v;
            let mass = if v < kv { qv[x * kv + v] } else { 0.0 };
            if v < kv {
                pt[x * nv + v] = mass;
            }
            // The copied component is deterministic given V; the other is
            // its conditional given (x, v), or a fixed symbol when v has no mass.
            let (own, other_off, other_n, other_k) =
                if v_is_w2 { (off2 + row * n2, off1 + row * n1, n1, a) } else { (off1 + row * n1, off2 + row * n2, n2, b) };
            pt[own + v.min(if v_is_w2 { n2 } else { n1 } - 1)] = 1.0;
            if mass > 0.0 {
                for w in 0..other_k {
                    let joint = if v_is_w2 { p.q[x * a * b + w * b + v] } else { p.q[x * a * b + v * b + w] };
                    pt[other_off + w] = joint / mass;
                }
                let s: f64 = pt[other_off..other_off + other_n].iter().sum();
                for w in 0..other_n {
                    pt[other_off + w] /= s;
                }
            } else {
                pt[other_off] = 1.0;
            }
        }
    }
    Some(pt)
}

/// Views a structured witness as the pair `W1' = (V, W1)`, `W2' = (V, W2)`.
/// The pair's first rate is unchanged and its sum rate is no larger.
fn inner_to_pair(c: &AuxChannel) -> Pair {
    let (nv, n1, n2) = (c.dims[0], c.dims[1], c.dims[2]);
    let nx = c.cond.rows();
    let (a, b) = (nv * n1, nv * n2);
    let mut q = vec![0.0; nx * a * b];
    for x in 0..nx {
        for v in 0..nv {
            for w1 in 0..n1 {
                for w2 in 0..n2 {
                    q[x * a * b + (v * n1 + w1) * b + (v * n2 + w2)] = c.cond.get(x, (v * n1 + w1) * n2 + w2);
                }
            }
        }
    }
    Pair { q, a, b }.compact(nx)
}

// ---------- cascades ----------

/// `W1 - W2 - X` (`first_is_w2`) or `W2 - W1 - X`, as the rows of the
/// channel from `X` followed by the rows of the channel between the auxiliaries.
fn cascade_layout(nx: usize, a: usize, b: usize, first_is_w2: bool) -> Layout {
    let (k_in, k_out) = if first_is_w2 { (b, a) } else { (a, b) };
    let mut sizes = vec![k_in; nx];
    sizes.extend(std::iter::repeat(k_out).take(k_in));
    Layout::new(sizes)
}

fn cascade_compose(pt: &[f64], nx: usize, a: usize, b: usize, first_is_w2: bool) -> Vec<f64> {
    let mut q = vec![0.0; nx * a * b];
    let (k_in, k_out) = if first_is_w2 { (b, a) } else { (a, b) };
    let link = &pt[nx * k_in..];
    for x in 0..nx {
        for u in 0..k_in {
            let m = pt[x * k_in + u];
            if m == 0.0 {
                continue;
            }
            for w in 0..k_out {
                let (w1, w2) = if first_is_w2 { (w, u) } else { (u, w) };
                q[x * a * b + w1 * b + w2] += m * link[u * k_out + w];
            }
        }
    }
    q
}

fn cascade_seeds(nx: usize, k_in: usize, k_out: usize) -> Vec<Vec<f64>> {
    let mut seeds = Vec::new();
    for head in rdopt::single_seeds(nx, k_in) {
        for link_id in [true, false] {
            let mut pt = head.clone();
            for u in 0..k_in {
                let mut row = vec![0.0; k_out];
                row[if link_id { u.min(k_out - 1) } else { 0 }] = 1.0;
                pt.extend(row);
            }
            seeds.push(pt);
        }
    }
    seeds
}

/// `(|V|, |W1|, |W2|)` caps for structured channels.
fn inner_dims(nx: usize, cfg: &OptimizerConfig) -> InnerDims {
    let w = nx * (nx + 3) + 1;
    (cfg.cap(nx + 3), cfg.cap(w), cfg.cap(w))
}

/// Symmetric cap for both auxiliaries of a cascade.
fn hat_size(nx: usize, cfg: &OptimizerConfig) -> usize {
    cfg.cap((nx + 3) * (nx * (nx + 3) + 1))
}

// ---------- the four bounds ----------

fn hat_frontier(cache: &SourceCache, inst: &Instance, cfg: &OptimizerConfig, grid: &[f64]) -> Result<RegionFrontier> {
    let nx = inst.src.nx();
    let k = hat_size(nx, cfg);
    let layouts = [cascade_layout(nx, k, k, true), cascade_layout(nx, k, k, false)];
    let mut prev: [Option<Vec<f64>>; 2] = [None, None];
    let mut winners = Vec::with_capacity(grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let mut cands = Vec::new();
        for (order, layout) in layouts.iter().enumerate() {
            let first_is_w2 = order == 0;
            let f = |pt: &[f64]| {
                let q = cascade_compose(pt, nx, k, k, first_is_w2);
                let t = cache.pair(&q, k, k, inst.d1, inst.d2);
                Score::from_constraints(t.sum, &[(t.r1, g), (t.d1, inst.level1), (t.d2, inst.level2)])
            };
            let mut seeds: Vec<Vec<f64>> = prev[order].iter().cloned().collect();
            seeds.extend(cascade_seeds(nx, k, k));
            let out = cfg.multistart(layout, seeds, stream(10, i, order as u64)).run(&f);
            if out.score.feasible() {
                let q = cascade_compose(&out.point, nx, k, k, first_is_w2);
                cands.push(pair_witness(cache, inst, &q, k, k)?);
            }
            prev[order] = Some(out.point);
        }
        winners.push(best_at(inst, g, cands));
    }
    Ok(assemble(BoundTag::InnerHat, grid, winners))
}

fn inner_frontier(
    cache: &SourceCache,
    inst: &Instance,
    cfg: &OptimizerConfig,
    grid: &[f64],
    hat: Option<&RegionFrontier>,
) -> Result<RegionFrontier> {
    let nx = inst.src.nx();
    let dims = inner_dims(nx, cfg);
    let layout = inner_layout(nx, dims);
    let mut prev: Option<Vec<f64>> = None;
    let mut winners = Vec::with_capacity(grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let mut cands = Vec::new();
        let mut seeds: Vec<Vec<f64>> = prev.iter().cloned().collect();
        if let Some(w) = hat.and_then(|h| h.points.iter().find(|p| p.r1 == g)).and_then(|p| p.witness.as_ref()) {
            if let Some(pair) = Pair::from_channel(&w.channel).map(|p| p.compact(nx)) {
                for v_is_w2 in [true, false] {
                    if let Some(pt) = embed_pair(&pair, nx, dims, v_is_w2) {
                        seeds.push(pt);
                    }
                    // Also evaluated as-is with the smallest alphabets that hold it.
                    let own = if v_is_w2 { (pair.b, pair.a, pair.b) } else { (pair.a, pair.a, pair.b) };
                    if let Some(pt) = embed_pair(&pair, nx, own, v_is_w2) {
                        cands.push(inner_witness(cache, inst, &pt, own)?);
                    }
                }
            }
        }
        seeds.extend(inner_structural_seeds(nx, dims));
        let f = |pt: &[f64]| {
            let t = cache.inner(pt, dims, inst.d1, inst.d2);
            Score::from_constraints(t.sum, &[(t.r1, g), (t.d1, inst.level1), (t.d2, inst.level2)])
        };
        let out = cfg.multistart(&layout, seeds, stream(20, i, 0)).run(&f);
        if out.score.feasible() {
            cands.insert(0, inner_witness(cache, inst, &out.point, dims)?);
        }
        prev = Some(out.point);
        winners.push(best_at(inst, g, cands));
    }
    Ok(assemble(BoundTag::Inner, grid, winners))
}

fn out_frontier(
    cache: &SourceCache,
    inst: &Instance,
    cfg: &OptimizerConfig,
    grid: &[f64],
    inside: &[&RegionFrontier],
    base: &CapBase,
) -> Result<RegionFrontier> {
    let nx = inst.src.nx();
    let (b1, b2) = rdopt::pair_bounds(nx);
    let (a, b) = (cfg.cap(b1), cfg.cap(b2));
    let layout = Layout::new(vec![a * b; nx]);
    let corner = corner_pair(cache, inst, cfg, base, b);
    let mut prev: Option<Vec<f64>> = None;
    let mut winners = Vec::with_capacity(grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let mut cands = Vec::new();
        let mut seeds: Vec<Vec<f64>> = prev.iter().cloned().collect();
        for fr in inside {
            let Some(w) = fr.points.iter().find(|p| p.r1 == g).and_then(|p| p.witness.as_ref()) else {
                continue;
            };
            let pair = match w.channel.dims.len() {
                2 => Pair::from_channel(&w.channel).expect("pair").compact(nx),
                _ => inner_to_pair(&w.channel),
            };
            if let Some(q) = pair.pad(nx, a, b) {
                seeds.push(q);
            }
            cands.push(pair_witness(cache, inst, &pair.q, pair.a, pair.b)?);
        }
        if let Some(pair) = &corner {
            if let Some(q) = pair.pad(nx, a, b) {
                seeds.push(q);
            }
            cands.push(pair_witness(cache, inst, &pair.q, pair.a, pair.b)?);
        }
        seeds.extend(rdopt::pair_seeds(nx, a, b));
        let f = |q: &[f64]| {
            let t = cache.pair(q, a, b, inst.d1, inst.d2);
            Score::from_constraints(t.sum, &[(t.r1, g), (t.d1, inst.level1), (t.d2, inst.level2)])
        };
        let out = cfg.multistart(&layout, seeds, stream(30, i, 0)).run(&f);
        if out.score.feasible() {
            cands.insert(0, pair_witness(cache, inst, &out.point, a, b)?);
        }
        prev = Some(out.point);
        winners.push(best_at(inst, g, cands));
    }
    Ok(assemble(BoundTag::OuterOutApprox, grid, winners))
}

/// Best pair with `W1` pinned to the Wyner-Ziv witness, searching only
/// `P(w2 | x, w1)`. Near `r1 = WZ(D1)` the joint pair search can barely move
/// without breaking the rate constraint; this search cannot.
fn corner_pair(cache: &SourceCache, inst: &Instance, cfg: &OptimizerConfig, base: &CapBase, b: usize) -> Option<Pair> {
    let nx = inst.src.nx();
    let w1 = &base.wz.channel;
    if w1.dims.len() != 1 || w1.cond.rows() != nx {
        return None;
    }
    let a = w1.dims[0];
    let q1 = w1.cond.data().to_vec();
    let hb = Pair::from_channel(&base.hb.channel)?;
    let compose = |r: &[f64]| {
        let mut q = vec![0.0; nx * a * b];
        for x in 0..nx {
            for w in 0..a {
                for w2 in 0..b {
                    q[x * a * b + w * b + w2] = q1[x * a + w] * r[(x * a + w) * b + w2];
                }
            }
        }
        q
    };
    // Seed: the Heegard-Berger second layer, ignoring W1.
    let mut seed = vec![0.0; nx * a * b];
    if hb.b <= b {
        for x in 0..nx {
            let m: Vec<f64> = (0..hb.b).map(|w2| (0..hb.a).map(|v| hb.q[x * hb.a * hb.b + v * hb.b + w2]).sum()).collect();
            for w in 0..a {
                seed[(x * a + w) * b..(x * a + w) * b + hb.b].copy_from_slice(&m);
            }
        }
    } else {
        seed.iter_mut().step_by(b).for_each(|v| *v = 1.0);
    }
    let layout = Layout::new(vec![b; nx * a]);
    let f = |r: &[f64]| {
        let t = cache.pair(&compose(r), a, b, inst.d1, inst.d2);
        Score::from_constraints(t.sum, &[(t.d1, inst.level1), (t.d2, inst.level2)])
    };
    let out = cfg.multistart(&layout, vec![seed], stream(31, 0, 0)).run(&f);
    out.score.feasible().then(|| Pair { q: compose(&out.point), a, b }.compact(nx))
}

/// `r1 >= WZ(D1)`, `r_sum >= max(r1, HB(D1, D2))`. Witnesses of inner
/// regions lower either value when they beat the direct searches.
fn cap_frontier(inst: &Instance, grid: &[f64], base: &CapBase, inside: &[&RegionFrontier]) -> RegionFrontier {
    let mut wz = base.wz.clone();
    let mut hbw = base.hb.clone();
    for fr in inside {
        for w in fr.points.iter().filter_map(|p| p.witness.as_ref()) {
            if w.d1 <= inst.level1 + CONSTRAINT_SLACK && w.r1 < wz.r1 - 1e-14 {
                wz = w.clone();
            }
            if inst.meets(w) && w.sum < hbw.sum - 1e-14 {
                hbw = w.clone();
            }
        }
    }
    let corner = wz.r1;
    let mut points = vec![FrontierPoint { r1: corner, r_sum: corner.max(hbw.sum), witness: None }];
    for &g in grid.iter().filter(|&&g| g > corner + 1e-12) {
        points.push(FrontierPoint { r1: g, r_sum: g.max(hbw.sum), witness: None });
    }
    RegionFrontier { tag: BoundTag::OuterCap, points, support: vec![wz.channel, hbw.channel] }
}

/// Single point `(0, 0)` with constant auxiliaries.
fn trivial_frontier(inst: &Instance, tag: BoundTag, structured: bool) -> Result<RegionFrontier> {
    let nx = inst.src.nx();
    let (f1, e1) = rdopt::zero_rate_decoder(inst.src, Side::First, inst.d1);
    let (f2, e2) = rdopt::zero_rate_decoder(inst.src, Side::Second, inst.d2);
    let dims = if structured { vec![1, 1, 1] } else { vec![1, 1] };
    let channel = AuxChannel { cond: Matrix::from_vec(nx, 1, vec![1.0; nx])?, dims, decoders: vec![f1, f2] };
    let witness = Witness { channel, r1: 0.0, sum: 0.0, d1: e1, d2: e2 };
    Ok(RegionFrontier::new(tag, vec![FrontierPoint { r1: 0.0, r_sum: 0.0, witness: Some(witness) }]))
}

/// All four bounds on a shared grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionBattery {
    pub grid: Vec<f64>,
    pub inner_hat: RegionFrontier,
    pub inner: RegionFrontier,
    pub outer_out: RegionFrontier,
    pub outer_cap: RegionFrontier,
}

/// Computes the cascade, structured, pair and corner bounds, each seeded
/// with the witnesses of the bounds it contains.
pub fn region_battery(inst: &Instance, cfg: &OptimizerConfig, grid: &RegionGrid) -> Result<RegionBattery> {
    cfg.validate()?;
    inst.check()?;
    if inst.trivial() {
        return Ok(RegionBattery {
            grid: vec![0.0],
            inner_hat: trivial_frontier(inst, BoundTag::InnerHat, false)?,
            inner: trivial_frontier(inst, BoundTag::Inner, true)?,
            outer_out: trivial_frontier(inst, BoundTag::OuterOutApprox, false)?,
            outer_cap: trivial_frontier(inst, BoundTag::OuterCap, false)?,
        });
    }
    let base = cap_base(inst, cfg)?;
    let g = resolve_grid(grid, &base)?;
    let cache = SourceCache::new(inst.src);
    let inner_hat = hat_frontier(&cache, inst, cfg, &g)?;
    let inner = inner_frontier(&cache, inst, cfg, &g, Some(&inner_hat))?;
    let outer_out = out_frontier(&cache, inst, cfg, &g, &[&inner_hat, &inner], &base)?;
    let outer_cap = cap_frontier(inst, &g, &base, &[&inner_hat, &inner, &outer_out]);
    Ok(RegionBattery { grid: g, inner_hat, inner, outer_out, outer_cap })
}

/// Achievable region over structured channels `(V, W1, W2)` with
/// `W1` and `W2` conditionally independent given `(X, V)`.
pub fn inner_region(inst: &Instance, cfg: &OptimizerConfig, grid: &RegionGrid) -> Result<RegionFrontier> {
    cfg.validate()?;
    inst.check()?;
    if inst.trivial() {
        return trivial_frontier(inst, BoundTag::Inner, true);
    }
    let base = cap_base(inst, cfg)?;
    let g = resolve_grid(grid, &base)?;
    let cache = SourceCache::new(inst.src);
    let hat = hat_frontier(&cache, inst, cfg, &g)?;
    inner_frontier(&cache, inst, cfg, &g, Some(&hat))
}

/// Achievable region restricted to cascades `W1 - W2 - X` or `W2 - W1 - X`.
pub fn inner_region_hat(inst: &Instance, cfg: &OptimizerConfig, grid: &RegionGrid) -> Result<RegionFrontier> {
    cfg.validate()?;
    inst.check()?;
    if inst.trivial() {
        return trivial_frontier(inst, BoundTag::InnerHat, false);
    }
    let base = cap_base(inst, cfg)?;
    let g = resolve_grid(grid, &base)?;
    hat_frontier(&SourceCache::new(inst.src), inst, cfg, &g)
}

/// Heuristic minimization over unrestricted pairs `(W1, W2)`.
pub fn outer_region_out(inst: &Instance, cfg: &OptimizerConfig, grid: &RegionGrid) -> Result<RegionFrontier> {
    cfg.validate()?;
    inst.check()?;
    if inst.trivial() {
        return trivial_frontier(inst, BoundTag::OuterOutApprox, false);
    }
    let base = cap_base(inst, cfg)?;
    let g = resolve_grid(grid, &base)?;
    out_frontier(&SourceCache::new(inst.src), inst, cfg, &g, &[], &base)
}

/// The corner bound `r1 >= WZ(D1)`, `r_sum >= max(r1, HB(D1, D2))`.
pub fn outer_region_cap(inst: &Instance, cfg: &OptimizerConfig, grid: &RegionGrid) -> Result<RegionFrontier> {
    cfg.validate()?;
    inst.check()?;
    if inst.trivial() {
        return trivial_frontier(inst, BoundTag::OuterCap, false);
    }
    let base = cap_base(inst, cfg)?;
    let g = resolve_grid(grid, &base)?;
    Ok(cap_frontier(inst, &g, &base, &[]))
}

// ---------- closed-form regions ----------

/// Which decoder must reconstruct losslessly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosslessMode {
    First,
    Second,
}

/// Region when one decoder is lossless under a measure with a unique
/// zero-distortion reconstruction per symbol.
///
/// `First`: `r1 >= H(X|Y1)`, `r_sum >= min over W2 of I(X;W2|Y2) + H(X|Y1,W2)`.
/// `Second`: `r1 >= WZ(D1)`, `r_sum >= H(X|Y2)`.
pub fn lossless_region(
    src: &JointSource,
    mode: LosslessMode,
    lossless_d: &DistortionMeasure,
    other_d: &DistortionMeasure,
    other_level: f64,
    cfg: &OptimizerConfig,
) -> Result<RegionFrontier> {
    cfg.validate()?;
    if !lossless_d.in_gamma_d() {
        return Err(Error::Domain(
            "the lossless decoder needs a square measure that is zero exactly on the diagonal".into(),
        ));
    }
    rdopt::check_measure(src, lossless_d, "lossless measure")?;
    let nx = src.nx();
    let cache = SourceCache::new(src);
    let (r1, sum, witness) = match mode {
        LosslessMode::First => {
            let r1 = rdopt::slepian_wolf_rate(src, Side::First);
            let w2 = rdopt::hb_lossless_first(src, other_d, other_level, cfg)?;
            let k = w2.witness.cond.cols();
            let mut q = vec![0.0; nx * nx * k];
            for x in 0..nx {
                for w in 0..k {
                    q[x * nx * k + x * k + w] = w2.witness.cond.get(x, w);
                }
            }
            let inst = Instance { src, d1: lossless_d, d2: other_d, level1: 0.0, level2: other_level };
            (r1, w2.rate, pair_witness(&cache, &inst, &q, nx, k)?)
        }
        LosslessMode::Second => {
            let w1 = rdopt::wyner_ziv_rate(src, other_d, other_level, cfg)?;
            let k = w1.witness.cond.cols();
            let mut q = vec![0.0; nx * k * nx];
            for x in 0..nx {
                for w in 0..k {
                    q[x * k * nx + w * nx + x] = w1.witness.cond.get(x, w);
                }
            }
            let sum = rdopt::slepian_wolf_rate(src, Side::Second);
            let inst = Instance { src, d1: other_d, d2: lossless_d, level1: other_level, level2: 0.0 };
            (w1.rate, sum, pair_witness(&cache, &inst, &q, k, nx)?)
        }
    };
    Ok(RegionFrontier::new(BoundTag::Lossless, corner_points(r1, sum, Some(witness))))
}

/// Corner `(r1, max(r1, sum))`, plus the point where the sum constraint
/// stops binding.
fn corner_points(r1: f64, sum: f64, witness: Option<Witness>) -> Vec<FrontierPoint> {
    let mut pts = vec![FrontierPoint { r1, r_sum: r1.max(sum), witness: witness.clone() }];
    if sum > r1 + 1e-12 {
        pts.push(FrontierPoint { r1: sum, r_sum: sum, witness });
    }
    pts
}

fn check_map(q: &[usize], nx: usize, name: &str) -> Result<usize> {
    if q.len() != nx {
        return Err(Error::ShapeMismatch(format!("{name} has {} entries but X has {nx} symbols", q.len())));
    }
    Ok(q.iter().max().map_or(1, |m| m + 1))
}

/// `true` when `to(x)` is determined by `from(x)`.
fn is_function_of(to: &[usize], from: &[usize]) -> bool {
    (0..from.len()).all(|i| (0..from.len()).all(|j| from[i] != from[j] || to[i] == to[j]))
}

/// `(H(Z1|Y1), H(Z2|Y2), H(Z1|Y1,Z2))`.
fn function_entropies(src: &JointSource, q1: &[usize], q2: &[usize], nz1: usize, nz2: usize) -> Result<(f64, f64, f64)> {
    let t = JointTable::from_fn(vec![nz1, nz2, src.ny1(), src.ny2()], |i| {
        (0..src.nx()).filter(|&x| q1[x] == i[0] && q2[x] == i[1]).map(|x| src.p(x, i[2], i[3])).sum()
    })?;
    Ok((t.conditional_entropy(&[0], &[2]), t.conditional_entropy(&[1], &[3]), t.conditional_entropy(&[0], &[2, 1])))
}

/// Exact region when decoder `j` must recover `Zj = qj(X)` and one function
/// is determined by the other.
///
/// `Z2 = g(Z1)`: `r1 >= H(Z1|Y1)`, `r_sum >= H(Z2|Y2) + H(Z1|Y1,Z2)`.
/// `Z1 = g(Z2)`: `r1 >= H(Z1|Y1)`, `r_sum >= H(Z2|Y2)`.
pub fn deterministic_region(src: &JointSource, q1: &[usize], q2: &[usize]) -> Result<RegionFrontier> {
    let nx = src.nx();
    let nz1 = check_map(q1, nx, "q1")?;
    let nz2 = check_map(q2, nx, "q2")?;
    let z2_of_z1 = is_function_of(q2, q1);
    let z1_of_z2 = is_function_of(q1, q2);
    if !z2_of_z1 && !z1_of_z2 {
        return Err(Error::Region {
            label: "deterministic".into(),
            message: "neither function determines the other; only the converse expressions apply \
                      (see deterministic_converse)"
                .into(),
        });
    }
    let (h1, h2, h12) = function_entropies(src, q1, q2, nz1, nz2)?;
    let sum = if z2_of_z1 { h2 + h12 } else { h2 };
    let mut q = vec![0.0; nx * nz1 * nz2];
    for x in 0..nx {
        q[x * nz1 * nz2 + q1[x] * nz2 + q2[x]] = 1.0;
    }
    let (d1, d2) = (DistortionMeasure::hamming_on(q1), DistortionMeasure::hamming_on(q2));
    let inst = Instance { src, d1: &d1, d2: &d2, level1: 0.0, level2: 0.0 };
    let witness = pair_witness(&SourceCache::new(src), &inst, &q, nz1, nz2)?;
    Ok(RegionFrontier::new(BoundTag::Deterministic, corner_points(h1, sum, Some(witness))))
}

/// Converse expressions `r1 >= H(Z1|Y1)`, `r_sum >= H(Z2|Y2) + H(Z1|Y1,Z2)`
/// for arbitrary functions. Labelled [`BoundTag::ConverseOnly`]: without a
/// degradedness relation these are lower bounds, not an achievable region.
pub fn deterministic_converse(src: &JointSource, q1: &[usize], q2: &[usize]) -> Result<RegionFrontier> {
    let nx = src.nx();
    let nz1 = check_map(q1, nx, "q1")?;
    let nz2 = check_map(q2, nx, "q2")?;
    let (h1, h2, h12) = function_entropies(src, q1, q2, nz1, nz2)?;
    Ok(RegionFrontier::new(BoundTag::ConverseOnly, corner_points(h1, h2 + h12, None)))
}

// ---------- perfect scalability ----------

/// Outcome of the perfect-scalability search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Certificate {
    /// A cascade `W1 - W2 - X` whose layer rates match the Wyner-Ziv rates.
    Certified {
        witness: AuxChannel,
        /// `I(X; W1 | Y1)`.
        r1: f64,
        /// `I(X; W2 | Y2)`.
        r2: f64,
        wz1: f64,
        wz2: f64,
        support_condition: bool,
    },
    /// Proven impossible by a closed form.
    Impossible { reason: String, hb_rate: f64, wz2: f64 },
    /// Nothing found; this proves nothing.
    Inconclusive { best_r1: f64, best_r2: f64, wz1: f64, wz2: f64, support_condition: bool },
}

impl Certificate {
    pub fn label(&self) -> &'static str {
        match self {
            Certificate::Certified { .. } => "certified",
            Certificate::Impossible { .. } => "impossible",
            Certificate::Inconclusive { .. } => "inconclusive",
        }
    }
}

/// Some `y1` has `P(x, y1) > 0` for every `x`.
pub fn support_condition(src: &JointSource) -> bool {
    let m = src.px_y1();
    (0..src.ny1()).any(|y| (0..src.nx()).all(|x| m.get(x, y) > 0.0))
}

/// Crossover `p` when the instance is a doubly symmetric binary source with
/// Hamming distortions and no second side information.
fn dsbs_parameter(inst: &Instance) -> Option<f64> {
    let src = inst.src;
    if src.nx() != 2 || src.ny1() != 2 || src.ny2() != 1 {
        return None;
    }
    let h = DistortionMeasure::hamming(2);
    if inst.d1.matrix() != h.matrix() || inst.d2.matrix() != h.matrix() {
        return None;
    }
    let m = src.px_y1();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let p = 2.0 * m.get(0, 1);
    (close(m.get(0, 0), m.get(1, 1)) && close(m.get(0, 1), m.get(1, 0)) && close(m.get(0, 0) + m.get(0, 1), 0.5) && p > 0.0 && p < 0.5)
        .then_some(p)
}

/// Searches for a degraded pair `W1 - W2 - X` with `I(X;W1|Y1)` and
/// `I(X;W2|Y2)` both at their Wyner-Ziv values, within `cfg.tolerance`.
pub fn perfect_scalability_certificate(inst: &Instance, cfg: &OptimizerConfig) -> Result<Certificate> {
    cfg.validate()?;
    inst.check()?;
    if let Some(p) = dsbs_parameter(inst) {
        if dsbs::classify_region(p, inst.level1, inst.level2)? == DsbsRegion::ID {
            let excess = dsbs::id_scalability_excess(p, inst.level1, inst.level2)?;
            if excess > 1e-9 {
                let sol = dsbs::hb_dsbs_region_id(p, inst.level1, inst.level2)?;
                return Ok(Certificate::Impossible {
                    reason: format!("R_HB exceeds the decoder-two rate 1 - h_b(D2) by {excess:.6} bits"),
                    hb_rate: sol.rate,
                    wz2: 1.0 - hb(inst.level2),
                });
            }
        }
    }
    let support = support_condition(inst.src);
    let wz1 = rdopt::wyner_ziv_rate_side(inst.src, Side::First, inst.d1, inst.level1, cfg, &[])?;
    let wz2 = rdopt::wyner_ziv_rate_side(inst.src, Side::Second, inst.d2, inst.level2, cfg, &[])?;
    let nx = inst.src.nx();
    let k = hat_size(nx, cfg);
    let cache = SourceCache::new(inst.src);
    let layout = cascade_layout(nx, k, k, true);
    let terms = |pt: &[f64]| {
        let q2 = &pt[..nx * k];
        let link = &pt[nx * k..];
        let mut q1 = vec![0.0; nx * k];
        for x in 0..nx {
            for u in 0..k {
                for w in 0..k {
                    q1[x * k + w] += q2[x * k + u] * link[u * k + w];
                }
            }
        }
        let (r1, e1) = cache.side(Side::First).wz(&q1, k, inst.d1);
        let (r2, e2) = cache.side(Side::Second).wz(q2, k, inst.d2);
        (r1, r2, e1, e2)
    };
    let f = |pt: &[f64]| {
        let (r1, r2, e1, e2) = terms(pt);
        Score::from_constraints(r1 + r2, &[(e1, inst.level1), (e2, inst.level2)])
    };
    let mut seeds = Vec::new();
    let kw = wz2.witness.cond.cols();
    if kw <= k {
        // Decoder two's optimal channel followed by an identity link.
        let mut pt = vec![0.0; nx * k];
        for x in 0..nx {
            for w in 0..kw {
                pt[x * k + w] = wz2.witness.cond.get(x, w);
            }
        }
        for u in 0..k {
            let mut row = vec![0.0; k];
            row[u] = 1.0;
            pt.extend(row);
        }
        seeds.push(pt);
    }
    seeds.extend(cascade_seeds(nx, k, k));
    let out = cfg.multistart(&layout, seeds, stream(40, 0, 0)).run(&f);
    let (r1, r2, _, _) = terms(&out.point);
    let tol = cfg.tolerance;
    if out.score.feasible() && r1 <= wz1.rate + tol && r2 <= wz2.rate + tol {
        let q = cascade_compose(&out.point, nx, k, k, true);
        let witness = cache.pair_witness(&q, k, k, inst.d1, inst.d2)?;
        return Ok(Certificate::Certified { witness, r1, r2, wz1: wz1.rate, wz2: wz2.rate, support_condition: support });
    }
    Ok(Certificate::Inconclusive { best_r1: r1, best_r2: r2, wz1: wz1.rate, wz2: wz2.rate, support_condition: support })
}
