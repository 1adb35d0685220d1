//! Discrete optimizers for the Wyner-Ziv and Heegard-Berger functions.
//!
//! Every optimizer returns a witness channel together with the rate; the
//! rate can be reproduced from the witness with [`AuxChannel::wz_terms`] or
//! [`AuxChannel::hb_terms`], which recompute everything from the full joint
//! distribution.

pub mod eval;
pub mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{DistortionMeasure, JointSource, JointTable, Matrix, Side};
use eval::{SideCache, SourceCache};
use search::{Layout, MultiStart, Score, SearchSettings};

/// Knobs shared by every optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Simplex quantization: the initial search step is `1/grid_resolution`
    /// and the exhaustive grid uses this many steps per row.
    pub grid_resolution: usize,
    /// Random starts in addition to the structured ones.
    pub restarts: usize,
    /// Maximum pattern-search sweeps per start.
    pub descent_iterations: usize,
    /// Comparison tolerance in bits for certificates and cross-checks.
    pub tolerance: f64,
    pub seed: u64,
    /// Optional cap applied on top of the default cardinality bounds.
    pub aux_cap: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_resolution: 16,
            restarts: 4,
            descent_iterations: 400,
            tolerance: 5e-3,
            seed: 20_060_118,
            aux_cap: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid_resolution must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.descent_iterations == 0 {
            return Err(Error::Config("descent_iterations must be positive".into()));
        }
        if self.aux_cap == Some(0) {
            return Err(Error::Config("aux_cap must be positive".into()));
        }
        Ok(())
    }

    /// Applies the optional override to a default bound.
    pub fn cap(&self, default_bound: usize) -> usize {
        match self.aux_cap {
            Some(c) => c.min(default_bound).max(1),
            None => default_bound,
        }
    }

    pub(crate) fn settings(&self) -> SearchSettings {
        SearchSettings {
            initial_step: 1.0 / self.grid_resolution as f64,
            min_step: 1e-7,
            max_sweeps: self.descent_iterations,
            random_directions: 6,
            lagrangian_rounds: 4,
        }
    }

    pub(crate) fn multistart<'a>(&self, layout: &'a Layout, seeds: Vec<Vec<f64>>, stream: u64) -> MultiStart<'a> {
        MultiStart {
            layout,
            settings: self.settings(),
            seeds,
            random_starts: self.restarts,
            vertex_limit: 1 << 16,
            vertex_starts: 3,
            seed: search::stream_seed(self.seed, stream),
        }
    }
}

/// Deterministic decoder table `f(aux, side) -> reconstruction`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderTable {
    pub aux_size: usize,
    pub side_size: usize,
    pub map: Vec<usize>,
}

impl DecoderTable {
    #[inline]
    pub fn get(&self, aux: usize, side: usize) -> usize {
        self.map[aux * self.side_size + side]
    }

    /// Constant decoder.
    pub fn constant(aux_size: usize, side_size: usize, value: usize) -> Self {
        DecoderTable { aux_size, side_size, map: vec![value; aux_size * side_size] }
    }
}

/// Auxiliary channel `P(aux | x)` with decoder tables.
///
/// `dims` factorizes the auxiliary index: a single entry for one auxiliary,
/// `[|W1|, |W2|]` for a pair (index `w1 * |W2| + w2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxChannel {
    pub cond: Matrix,
    pub dims: Vec<usize>,
    pub decoders: Vec<DecoderTable>,
}

/// Information terms of a single-auxiliary witness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WzTerms {
    pub rate: f64,
    pub distortion: f64,
}

/// Information terms of a two-auxiliary witness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HbTerms {
    /// `I(X; W1 | Y1)`.
    pub r1: f64,
    /// `I(X; W2 | Y2) + I(X; W1 | W2, Y1)`.
    pub sum: f64,
    pub d1: f64,
    pub d2: f64,
}

impl AuxChannel {
    pub fn validate(&self) -> Result<()> {
        if !self.cond.is_row_stochastic() {
            return Err(Error::InvalidDistribution("auxiliary channel rows must sum to one".into()));
        }
        if self.dims.iter().product::<usize>() != self.cond.cols() {
            return Err(Error::ShapeMismatch("auxiliary dims do not match the channel".into()));
        }
        Ok(())
    }

    /// Marginal channel `P(w_axis | x)`.
    pub fn marginal(&self, axis: usize) -> Matrix {
        let nx = self.cond.rows();
        let mut m = Matrix::zeros(nx, self.dims[axis]);
        for x in 0..nx {
            for k in 0..self.cond.cols() {
                let w = component(k, &self.dims, axis);
                m.set(x, w, m.get(x, w) + self.cond.get(x, k));
            }
        }
        m
    }

    /// Recomputes `I(X; W | Y_side)` and the distortion of decoder 0 from the full joint.
    pub fn wz_terms(&self, src: &JointSource, side: Side, d: &DistortionMeasure) -> Result<WzTerms> {
        self.validate()?;
        let pxy = src.px_side(side);
        let nw = self.cond.cols();
        let t = JointTable::from_fn(vec![src.nx(), pxy.cols(), nw], |i| pxy.get(i[0], i[1]) * self.cond.get(i[0], i[2]))?;
        let rate = t.mutual_information(&[0], &[2], &[1]).max(0.0);
        let dec = self.decoders.first().ok_or_else(|| Error::Config("witness has no decoder".into()))?;
        let mut dist = 0.0;
        for x in 0..src.nx() {
            for y in 0..pxy.cols() {
                for w in 0..nw {
                    dist += pxy.get(x, y) * self.cond.get(x, w) * d.get(x, dec.get(w, y));
                }
            }
        }
        Ok(WzTerms { rate, distortion: dist })
    }

    /// Recomputes the Heegard-Berger terms of a pair witness from the full joint.
    pub fn hb_terms(&self, src: &JointSource, d1: &DistortionMeasure, d2: &DistortionMeasure) -> Result<HbTerms> {
        self.validate()?;
        if self.dims.len() != 2 || self.decoders.len() != 2 {
            return Err(Error::ShapeMismatch("pair witness needs two auxiliaries and two decoders".into()));
        }
        let (a, b) = (self.dims[0], self.dims[1]);
        let t = JointTable::from_fn(vec![src.nx(), src.ny1(), src.ny2(), a, b], |i| {
            src.p(i[0], i[1], i[2]) * self.cond.get(i[0], i[3] * b + i[4])
        })?;
        let r1 = t.mutual_information(&[0], &[3], &[1]).max(0.0);
        let sum = t.mutual_information(&[0], &[4], &[2]) + t.mutual_information(&[0], &[3], &[4, 1]);
        let (mut e1, mut e2) = (0.0, 0.0);
        for x in 0..src.nx() {
            for y1 in 0..src.ny1() {
                for y2 in 0..src.ny2() {
                    let p = src.p(x, y1, y2);
                    if p == 0.0 {
                        continue;
                    }
                    for w1 in 0..a {
                        for w2 in 0..b {
                            let q = self.cond.get(x, w1 * b + w2);
                            e1 += p * q * d1.get(x, self.decoders[0].get(w1, y1));
                            e2 += p * q * d2.get(x, self.decoders[1].get(w2, y2));
                        }
                    }
                }
            }
        }
        Ok(HbTerms { r1, sum: sum.max(0.0), d1: e1, d2: e2 })
    }

    /// Recomputes the terms of a `(V, W1, W2)` witness from the full joint:
    /// `r1 = I(X; V W1 | Y1)` and `sum = I(X; V W2 | Y2) + I(X; W1 | Y1, V)`.
    /// Decoder one reads `(w1, y1)`, decoder two reads `(w2, y2)`.
    pub fn inner_terms(&self, src: &JointSource, d1: &DistortionMeasure, d2: &DistortionMeasure) -> Result<HbTerms> {
        self.validate()?;
        if self.dims.len() != 3 || self.decoders.len() != 2 {
            return Err(Error::ShapeMismatch("inner witness needs three auxiliaries and two decoders".into()));
        }
        let (nv, n1, n2) = (self.dims[0], self.dims[1], self.dims[2]);
        let t = JointTable::from_fn(vec![src.nx(), src.ny1(), src.ny2(), nv, n1, n2], |i| {
            src.p(i[0], i[1], i[2]) * self.cond.get(i[0], (i[3] * n1 + i[4]) * n2 + i[5])
        })?;
        let r1 = t.mutual_information(&[0], &[3, 4], &[1]).max(0.0);
        let sum = t.mutual_information(&[0], &[3, 5], &[2]) + t.mutual_information(&[0], &[4], &[1, 3]);
        let q1 = self.marginal(1);
        let q2 = self.marginal(2);
        let (mut e1, mut e2) = (0.0, 0.0);
        for x in 0..src.nx() {
            for y1 in 0..src.ny1() {
                for y2 in 0..src.ny2() {
                    let p = src.p(x, y1, y2);
                    for w in 0..n1 {
                        e1 += p * q1.get(x, w) * d1.get(x, self.decoders[0].get(w, y1));
                    }
                    for w in 0..n2 {
                        e2 += p * q2.get(x, w) * d2.get(x, self.decoders[1].get(w, y2));
                    }
                }
            }
        }
        Ok(HbTerms { r1, sum: sum.max(0.0), d1: e1, d2: e2 })
    }

    /// Dispatches to [`AuxChannel::hb_terms`] or [`AuxChannel::inner_terms`] by shape.
    pub fn scalable_terms(&self, src: &JointSource, d1: &DistortionMeasure, d2: &DistortionMeasure) -> Result<HbTerms> {
        match self.dims.len() {
            2 => self.hb_terms(src, d1, d2),
            3 => self.inner_terms(src, d1, d2),
            _ => Err(Error::ShapeMismatch("witness must have two or three auxiliaries".into())),
        }
    }
}

pub(crate) fn component(k: usize, dims: &[usize], axis: usize) -> usize {
    let stride: usize = dims[axis + 1..].iter().product();
    (k / stride) % dims[axis]
}

/// Optimizer output: rate, achieved distortions and the witness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdResult {
    pub rate: f64,
    pub distortions: Vec<f64>,
    pub witness: AuxChannel,
}

/// Smallest distortion any code can reach: `Σ_x P(x) min_x̂ d(x, x̂)`.
pub fn min_distortion(src: &JointSource, d: &DistortionMeasure) -> f64 {
    let px = src.px();
    (0..src.nx())
        .map(|x| px[x] * (0..d.reconstruction_size()).map(|xh| d.get(x, xh)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Distortion reachable at zero rate from the side information alone.
pub fn zero_rate_distortion(src: &JointSource, side: Side, d: &DistortionMeasure) -> f64 {
    zero_rate_decoder(src, side, d).1
}

pub(crate) fn zero_rate_decoder(src: &JointSource, side: Side, d: &DistortionMeasure) -> (DecoderTable, f64) {
    let pxy = src.px_side(side);
    let mut weights = vec![0.0; pxy.cols() * src.nx()];
    for y in 0..pxy.cols() {
        for x in 0..src.nx() {
            weights[y * src.nx() + x] = pxy.get(x, y);
        }
    }
    eval::decoder_table(&weights, 1, pxy.cols(), src.nx(), d)
}

pub(crate) fn check_measure(src: &JointSource, d: &DistortionMeasure, name: &str) -> Result<()> {
    if d.source_size() != src.nx() {
        return Err(Error::ShapeMismatch(format!(
            "{name} has {} rows but X has {} symbols",
            d.source_size(),
            src.nx()
        )));
    }
    Ok(())
}

pub(crate) fn check_level(src: &JointSource, d: &DistortionMeasure, level: f64, name: &str) -> Result<()> {
    if !(level >= 0.0) {
        return Err(Error::Domain(format!("{name} must be nonnegative")));
    }
    let floor = min_distortion(src, d);
    if level < floor - search::CONSTRAINT_SLACK {
        return Err(Error::Infeasible(format!("{name}={level} is below the minimum achievable distortion {floor}")));
    }
    Ok(())
}

/// Single-auxiliary channel seeds: identity, constant, and identity mixed with constant.
pub(crate) fn single_seeds(nx: usize, k: usize) -> Vec<Vec<f64>> {
    let mut ident = vec![0.0; nx * k];
    let mut constant = vec![0.0; nx * k];
    let mut mixed = vec![0.0; nx * k];
    for x in 0..nx {
        ident[x * k + x.min(k - 1)] = 1.0;
        constant[x * k] = 1.0;
        if k > nx {
            mixed[x * k + x] = 0.5;
            mixed[x * k + nx] = 0.5;
        } else {
            mixed[x * k + x.min(k - 1)] = 1.0;
        }
    }
    vec![ident, constant, mixed]
}

/// Exhaustive quantized grid over binary-input channels with at most three outputs.
fn grid_seeds<F: Fn(&[f64]) -> Score>(f: &F, k: usize, res: usize, keep: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for i in 0..=res {
        for j in 0..=(res - i) {
            let l = res - i - j;
            let r = [i as f64 / res as f64, j as f64 / res as f64, l as f64 / res as f64];
            if k == 2 && l != 0 {
                continue;
            }
            rows.push(r[..k].to_vec());
        }
    }
    let mut scored: Vec<(Score, Vec<f64>)> = Vec::new();
    for r0 in &rows {
        for r1 in &rows {
            let x: Vec<f64> = r0.iter().chain(r1.iter()).cloned().collect();
            let s = f(&x);
            scored.push((s, x));
        }
    }
    scored.sort_by(|a, b| {
        if a.0.better_than(&b.0) {
            std::cmp::Ordering::Less
        } else if b.0.better_than(&a.0) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    scored.into_iter().take(keep).map(|(_, x)| x).collect()
}

/// Wyner-Ziv rate with side information `Y1`.
pub fn wyner_ziv_rate(src: &JointSource, d: &DistortionMeasure, level: f64, cfg: &OptimizerConfig) -> Result<RdResult> {
    wyner_ziv_rate_side(src, Side::First, d, level, cfg, &[])
}

/// Wyner-Ziv rate with the chosen side information, optionally warm-started.
pub fn wyner_ziv_rate_side(
    src: &JointSource,
    side: Side,
    d: &DistortionMeasure,
    level: f64,
    cfg: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Result<RdResult> {
    cfg.validate()?;
    check_measure(src, d, "distortion")?;
    check_level(src, d, level, "D")?;
    let nx = src.nx();
    let k = cfg.cap(nx + 1);
    let (dec0, d0) = zero_rate_decoder(src, side, d);
    if d0 <= level + search::CONSTRAINT_SLACK {
        let mut cond = Matrix::zeros(nx, k);
        for x in 0..nx {
            cond.set(x, 0, 1.0);
        }
        let map: Vec<usize> = (0..k).flat_map(|_| (0..dec0.side_size).map(|y| dec0.get(0, y))).collect();
        let witness = AuxChannel {
            cond,
            dims: vec![k],
            decoders: vec![DecoderTable { aux_size: k, side_size: dec0.side_size, map }],
        };
        return Ok(RdResult { rate: 0.0, distortions: vec![d0], witness });
    }
    let cache = SideCache::new(src, side);
    let f = |q: &[f64]| {
        let (rate, dist) = cache.wz(q, k, d);
        Score::from_constraints(rate, &[(dist, level)])
    };
    let layout = Layout::new(vec![k; nx]);
    let mut seeds: Vec<Vec<f64>> = warm.iter().filter(|w| w.len() == nx * k).cloned().collect();
    seeds.extend(single_seeds(nx, k));
    if nx == 2 && k <= 3 {
        seeds.extend(grid_seeds(&f, k, cfg.grid_resolution, 3));
    }
    let out = cfg.multistart(&layout, seeds, 1).run(&f);
    if !out.score.feasible() {
        return Err(Error::Infeasible(format!("no channel found meeting D={level}")));
    }
    let cond = Matrix::from_vec(nx, k, out.point.clone())?;
    let (table, dist) = cache.wz_decoder(&out.point, k, d);
    Ok(RdResult {
        rate: out.score.value.max(0.0),
        distortions: vec![dist],
        witness: AuxChannel { cond, dims: vec![k], decoders: vec![table] },
    })
}

/// Wyner-Ziv rates over a sweep of distortion levels.
///
/// Levels are processed in increasing order; each search is warm-started
/// with the previous witness and the best-so-far rate is carried forward,
/// so the returned rates are non-increasing in the level. Output order
/// matches the input order.
pub fn wyner_ziv_sweep(
    src: &JointSource,
    side: Side,
    d: &DistortionMeasure,
    levels: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<RdResult>> {
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].partial_cmp(&levels[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<Option<RdResult>> = vec![None; levels.len()];
    let mut prev: Option<RdResult> = None;
    for i in order {
        let warm: Vec<Vec<f64>> = prev.iter().map(|r| r.witness.cond.data().to_vec()).collect();
        let mut r = wyner_ziv_rate_side(src, side, d, levels[i], cfg, &warm)?;
        if let Some(p) = &prev {
            if p.rate < r.rate && p.witness.cond.cols() == r.witness.cond.cols() {
                r = p.clone();
            }
        }
        prev = Some(r.clone());
        out[i] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("filled")).collect())
}

/// Pair-channel seeds: products of identity and constant marginals.
pub(crate) fn pair_seeds(nx: usize, a: usize, b: usize) -> Vec<Vec<f64>> {
    let mut seeds = Vec::new();
    for (id1, id2) in [(true, true), (true, false), (false, true), (false, false)] {
        let mut q = vec![0.0; nx * a * b];
        for x in 0..nx {
            let w1 = if id1 { x.min(a - 1) } else { 0 };
            let w2 = if id2 { x.min(b - 1) } else { 0 };
            q[x * a * b + w1 * b + w2] = 1.0;
        }
        seeds.push(q);
    }
    seeds
}

/// Default cardinality bounds `(|W1|, |W2|)` for pair channels.
pub fn pair_bounds(nx: usize) -> (usize, usize) {
    (nx * (nx + 3) + 2, nx + 3)
}

/// Heegard-Berger rate `min I(X;W2|Y2) + I(X;W1|W2,Y1)`.
pub fn heegard_berger_rate(
    src: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    level1: f64,
    level2: f64,
    cfg: &OptimizerConfig,
) -> Result<RdResult> {
    heegard_berger_rate_warm(src, d1, d2, level1, level2, cfg, &[])
}

/// Heegard-Berger rate with extra warm starts (flat `P(w1,w2|x)` rows).
pub fn heegard_berger_rate_warm(
    src: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    level1: f64,
    level2: f64,
    cfg: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Result<RdResult> {
    cfg.validate()?;
    check_measure(src, d1, "d1")?;
    check_measure(src, d2, "d2")?;
    check_level(src, d1, level1, "D1")?;
    check_level(src, d2, level2, "D2")?;
    let nx = src.nx();
    let (b1, b2) = pair_bounds(nx);
    let (a, b) = (cfg.cap(b1), cfg.cap(b2));
    let cache = SourceCache::new(src);
    let f = |q: &[f64]| {
        let t = cache.pair(q, a, b, d1, d2);
        Score::from_constraints(t.sum, &[(t.d1, level1), (t.d2, level2)])
    };
    let layout = Layout::new(vec![a * b; nx]);
    let mut seeds: Vec<Vec<f64>> = warm.iter().filter(|w| w.len() == nx * a * b).cloned().collect();
    seeds.extend(pair_seeds(nx, a, b));
    let out = cfg.multistart(&layout, seeds, 2).run(&f);
    if !out.score.feasible() {
        return Err(Error::Infeasible(format!("no channel found meeting D1={level1}, D2={level2}")));
    }
    let witness = cache.pair_witness(&out.point, a, b, d1, d2)?;
    let t = cache.pair(&out.point, a, b, d1, d2);
    Ok(RdResult { rate: out.score.value.max(0.0), distortions: vec![t.d1, t.d2], witness })
}

/// `min over W2 of I(X;W2|Y2) + H(X|W2,Y1)`: the Heegard-Berger rate when
/// decoder one must be lossless.
pub fn hb_lossless_first(src: &JointSource, d2: &DistortionMeasure, level2: f64, cfg: &OptimizerConfig) -> Result<RdResult> {
    cfg.validate()?;
    check_measure(src, d2, "d2")?;
    check_level(src, d2, level2, "D2")?;
    let nx = src.nx();
    let k = cfg.cap(nx + 3);
    let cache = SourceCache::new(src);
    let f = |q: &[f64]| {
        let (rate, dist) = cache.lossless_first(q, k, d2);
        Score::from_constraints(rate, &[(dist, level2)])
    };
    let layout = Layout::new(vec![k; nx]);
    let out = cfg.multistart(&layout, single_seeds(nx, k), 3).run(&f);
    if !out.score.feasible() {
        return Err(Error::Infeasible(format!("no channel found meeting D2={level2}")));
    }
    let cond = Matrix::from_vec(nx, k, out.point.clone())?;
    let (table, dist) = cache.side(Side::Second).wz_decoder(&out.point, k, d2);
    Ok(RdResult {
        rate: out.score.value.max(0.0),
        distortions: vec![dist],
        witness: AuxChannel { cond, dims: vec![k], decoders: vec![table] },
    })
}

/// Exact `H(X | Y_side)`.
pub fn slepian_wolf_rate(src: &JointSource, side: Side) -> f64 {
    crate::probcore::conditional_entropy(&src.px_side(side)).expect("source joint is valid")
}
