//! Monte Carlo simulation of the nested-binning scheme for two-stage coding
//! with side information.
//!
//! Sequences are stored as one bit plane per symbol, so joint type counts
//! are popcounts of plane intersections. Codebooks are drawn from a master
//! seed; each trial draws its source block from its own derived stream, so
//! summaries are reproducible regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{format_sig, DistortionMeasure, JointSource, JointTable, Pmf};
use crate::rdopt::search::stream_seed;
use crate::rdopt::AuxChannel;

/// Default typicality slack.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Largest total number of codewords a suite may hold.
pub const MAX_CODEWORDS: u64 = 1 << 24;
/// Default memory budget for codeword storage, bytes.
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

/// Length-`n` sequence over `{0, .., k-1}` as `k` bit planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seq {
    n: usize,
    planes: Vec<Vec<u64>>,
}

impl Seq {
    pub fn from_symbols(symbols: &[usize], k: usize) -> Result<Seq> {
        if k == 0 {
            return Err(Error::Domain("alphabet must be nonempty".into()));
        }
        let words = symbols.len().div_ceil(64);
        let mut planes = vec![vec![0u64; words]; k];
        for (i, &s) in symbols.iter().enumerate() {
            if s >= k {
                return Err(Error::Domain(format!("symbol {s} outside an alphabet of size {k}")));
            }
            planes[s][i / 64] |= 1 << (i % 64);
        }
        Ok(Seq { n: symbols.len(), planes })
    }

    fn sample(n: usize, k: usize, mut dist: impl FnMut(usize) -> usize) -> Seq {
        let words = n.div_ceil(64);
        let mut planes = vec![vec![0u64; words]; k];
        for i in 0..n {
            planes[dist(i)][i / 64] |= 1 << (i % 64);
        }
        Seq { n, planes }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alphabet(&self) -> usize {
        self.planes.len()
    }

    pub fn symbol(&self, i: usize) -> usize {
        (0..self.planes.len()).find(|&a| self.planes[a][i / 64] >> (i % 64) & 1 == 1).expect("one plane per position")
    }

    pub fn symbols(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.symbol(i)).collect()
    }

    fn words(&self) -> usize {
        self.planes.first().map_or(0, |p| p.len())
    }
}

/// Draws a symbol from cumulative probabilities.
fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn cdf_of(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Strong typicality of `x` against `p`: every positive-mass symbol has
/// empirical frequency within `delta`, every zero-mass symbol is absent.
pub fn strongly_typical(x: &[usize], p: &Pmf, delta: f64) -> Result<bool> {
    let seq = Seq::from_symbols(x, p.len())?;
    Ok(jointly_typical(&[&seq], p.probs(), delta))
}

/// Joint strong typicality; `joint` is row-major over the sequences'
/// alphabets (first sequence slowest).
pub fn jointly_typical(seqs: &[&Seq], joint: &[f64], slack: f64) -> bool {
    let n = seqs[0].len();
    let dims: Vec<usize> = seqs.iter().map(|s| s.alphabet()).collect();
    debug_assert_eq!(dims.iter().product::<usize>(), joint.len());
    let words = seqs[0].words();
    let mut idx = vec![0usize; seqs.len()];
    for &p in joint {
        let mut count = 0u64;
        for w in 0..words {
            let mut m = u64::MAX;
            for (s, &a) in seqs.iter().zip(idx.iter()) {
                m &= s.planes[a][w];
            }
            count += m.count_ones() as u64;
        }
        let ok = if p <= 0.0 { count == 0 } else { (count as f64 / n as f64 - p).abs() < slack };
        if !ok {
            return false;
        }
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    true
}

/// Codebook and binning rates, bits per symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r_v: f64,
    pub r_w1: f64,
    pub r_w2: f64,
    /// Coarse bins, sent to both decoders.
    pub r_a: f64,
    /// Refinement of the coarse bins, sent to decoder two.
    pub r_a_prime: f64,
    pub r_b: f64,
    pub r_c: f64,
}

impl Rates {
    /// `R1 = R_A + R_B`.
    pub fn r1(&self) -> f64 {
        self.r_a + self.r_b
    }

    /// `R1 + R2 = R_A + R_A' + R_B + R_C`.
    pub fn sum(&self) -> f64 {
        self.r_a + self.r_a_prime + self.r_b + self.r_c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookSpec {
    pub n: usize,
    pub delta: f64,
    pub rates: Rates,
    pub seed: u64,
    #[serde(default = "default_max_codewords")]
    pub max_codewords: u64,
    #[serde(default = "default_memory_budget")]
    pub memory_budget: u64,
}

fn default_max_codewords() -> u64 {
    MAX_CODEWORDS
}

fn default_memory_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

impl CodebookSpec {
    pub fn new(n: usize, delta: f64, rates: Rates, seed: u64) -> Self {
        CodebookSpec { n, delta, rates, seed, max_codewords: MAX_CODEWORDS, memory_budget: DEFAULT_MEMORY_BUDGET }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("blocklength must be positive".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config("typicality slack must be positive".into()));
        }
        let r = &self.rates;
        if [r.r_v, r.r_w1, r.r_w2, r.r_a, r.r_a_prime, r.r_b, r.r_c].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("rates must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// `ceil(n R)`, the base-2 exponent of a codebook or bin count.
    fn exponent(&self, rate: f64) -> u32 {
        let e = (self.n as f64 * rate - 1e-9).ceil().max(0.0);
        e.min(u32::MAX as f64) as u32
    }
}

/// Distributions of `(X, Y1, Y2, V, W1, W2)` derived from a source and a
/// structured channel `P(v, w1, w2 | x)`.
#[derive(Clone, Debug)]
struct Model {
    nx: usize,
    ny1: usize,
    ny2: usize,
    nv: usize,
    n1: usize,
    n2: usize,
    table: JointTable,
    px_cdf: Vec<f64>,
    y1_cdf: Vec<Vec<f64>>,
    y2_cdf: Vec<Vec<f64>>,
    v_cdf: Vec<f64>,
    w1_cdf: Vec<Vec<f64>>,
    w2_cdf: Vec<Vec<f64>>,
    f1: Vec<usize>,
    f2: Vec<usize>,
}

// Axis order of the joint table.
const AX: usize = 0;
const AY1: usize = 1;
const AY2: usize = 2;
const AV: usize = 3;
const AW1: usize = 4;
const AW2: usize = 5;

impl Model {
    fn new(src: &JointSource, aux: &AuxChannel) -> Result<Model> {
        aux.validate()?;
        if aux.dims.len() != 3 || aux.decoders.len() != 2 {
            return Err(Error::ShapeMismatch("simulator needs a (V, W1, W2) channel with two decoders".into()));
        }
        if aux.cond.rows() != src.nx() {
            return Err(Error::ShapeMismatch("channel rows do not match the source alphabet".into()));
        }
        let (nv, n1, n2) = (aux.dims[0], aux.dims[1], aux.dims[2]);
        if aux.decoders[0].side_size != src.ny1() || aux.decoders[1].side_size != src.ny2() {
            return Err(Error::ShapeMismatch("decoder tables do not match the side-information alphabets".into()));
        }
        let table = JointTable::from_fn(vec![src.nx(), src.ny1(), src.ny2(), nv, n1, n2], |i| {
            src.p(i[0], i[1], i[2]) * aux.cond.get(i[0], (i[3] * n1 + i[4]) * n2 + i[5])
        })?;
        let px = src.px();
        let pxy1 = src.px_y1();
        let y1_cdf =
            (0..src.nx()).map(|x| cdf_of(&(0..src.ny1()).map(|y| pxy1.get(x, y) / px[x].max(1e-300)).collect::<Vec<_>>())).collect();
        let y2_cdf = (0..src.ny1()).map(|y| cdf_of(src.py2_given_y1().row(y))).collect();
        let pv = table.marginal(&[AV]);
        let pvw1 = table.marginal(&[AV, AW1]);
        let pvw2 = table.marginal(&[AV, AW2]);
        let cond_rows = |pvw: &[f64], k: usize| -> Vec<Vec<f64>> {
            (0..nv)
                .map(|v| {
                    let row: Vec<f64> = (0..k).map(|w| if pv[v] > 0.0 { pvw[v * k + w] / pv[v] } else { 0.0 }).collect();
                    if pv[v] > 0.0 {
                        cdf_of(&row)
                    } else {
                        vec![1.0; k]
                    }
                })
                .collect()
        };
        Ok(Model {
            nx: src.nx(),
            ny1: src.ny1(),
            ny2: src.ny2(),
            nv,
            n1,
            n2,
            px_cdf: cdf_of(&px),
            y1_cdf,
            y2_cdf,
            v_cdf: cdf_of(&pv),
            w1_cdf: cond_rows(&pvw1, n1),
            w2_cdf: cond_rows(&pvw2, n2),
            f1: aux.decoders[0].map.clone(),
            f2: aux.decoders[1].map.clone(),
            table,
        })
    }

    fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        self.table.marginal(axes)
    }

    fn mi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        self.table.mutual_information(a, b, c).max(0.0)
    }
}

/// The six sufficient rate conditions and the stage totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    /// `(name, rate, threshold, satisfied)`.
    pub conditions: Vec<(String, f64, f64, bool)>,
    pub r1: f64,
    pub sum: f64,
    /// `I(X; V W1 | Y1)`.
    pub target_r1: f64,
    /// `I(X; V W2 | Y2) + I(X; W1 | Y1, V)`.
    pub target_sum: f64,
    /// All conditions hold strictly.
    pub guaranteed: bool,
}

/// Information quantities behind the rate conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub i_xv: f64,
    pub i_xw1_v: f64,
    pub i_xw2_v: f64,
    pub i_y1v: f64,
    pub i_y2v: f64,
    pub i_y1w1_v: f64,
    pub i_y2w2_v: f64,
}

fn scheme_info(m: &Model) -> SchemeInfo {
    SchemeInfo {
        i_xv: m.mi(&[AX], &[AV], &[]),
        i_xw1_v: m.mi(&[AX], &[AW1], &[AV]),
        i_xw2_v: m.mi(&[AX], &[AW2], &[AV]),
        i_y1v: m.mi(&[AY1], &[AV], &[]),
        i_y2v: m.mi(&[AY2], &[AV], &[]),
        i_y1w1_v: m.mi(&[AY1], &[AW1], &[AV]),
        i_y2w2_v: m.mi(&[AY2], &[AW2], &[AV]),
    }
}

/// Rates a factor `1 + margin` above each sufficient condition.
pub fn rates_with_margin(src: &JointSource, aux: &AuxChannel, margin: f64) -> Result<Rates> {
    if !(margin >= 0.0) {
        return Err(Error::Config("margin must be nonnegative".into()));
    }
    let m = Model::new(src, aux)?;
    let s = scheme_info(&m);
    let f = 1.0 + margin;
    let r_v = f * s.i_xv;
    let r_w1 = f * s.i_xw1_v;
    let r_w2 = f * s.i_xw2_v;
    let r_a = f * (r_v - s.i_y1v).max(0.0);
    let fine = f * (r_v - s.i_y2v).max(0.0);
    Ok(Rates {
        r_v,
        r_w1,
        r_w2,
        r_a,
        r_a_prime: (fine - r_a).max(0.0),
        r_b: f * (r_w1 - s.i_y1w1_v).max(0.0),
        r_c: f * (r_w2 - s.i_y2w2_v).max(0.0),
    })
}

/// Checks the sufficient conditions; a zero threshold is met by a zero rate.
pub fn rate_check(src: &JointSource, aux: &AuxChannel, rates: &Rates) -> Result<RateCheck> {
    let m = Model::new(src, aux)?;
    let s = scheme_info(&m);
    let holds = |lhs: f64, rhs: f64| lhs > rhs || (rhs <= 1e-15 && lhs >= 0.0);
    let rows = [
        ("R_V > I(X;V)", rates.r_v, s.i_xv),
        ("R_W1 > I(X;W1|V)", rates.r_w1, s.i_xw1_v),
        ("R_W2 > I(X;W2|V)", rates.r_w2, s.i_xw2_v),
        ("R_A > R_V - I(Y1;V)", rates.r_a, rates.r_v - s.i_y1v),
        ("R_A + R_A' > R_V - I(Y2;V)", rates.r_a + rates.r_a_prime, rates.r_v - s.i_y2v),
        ("R_B > R_W1 - I(Y1;W1|V)", rates.r_b, rates.r_w1 - s.i_y1w1_v),
        ("R_C > R_W2 - I(Y2;W2|V)", rates.r_c, rates.r_w2 - s.i_y2w2_v),
    ];
    let conditions: Vec<(String, f64, f64, bool)> =
        rows.iter().map(|(n, l, r)| (n.to_string(), *l, *r, holds(*l, *r))).collect();
    let guaranteed = conditions.iter().all(|c| c.3);
    Ok(RateCheck {
        r1: rates.r1(),
        sum: rates.sum(),
        target_r1: m.mi(&[AX], &[AV, AW1], &[AY1]),
        target_sum: m.mi(&[AX], &[AV, AW2], &[AY2]) + m.mi(&[AX], &[AW1], &[AY1, AV]),
        conditions,
        guaranteed,
    })
}

/// Codewords with their bins, searchable by bin.
#[derive(Clone, Debug)]
struct Book {
    words: Vec<Seq>,
    /// `(bin, index)` sorted by bin, then index.
    by_bin: Vec<(u64, u64, u32)>,
    bins: Vec<(u64, u64)>,
}

impl Book {
    fn new(words: Vec<Seq>, bins: Vec<(u64, u64)>) -> Book {
        let mut by_bin: Vec<(u64, u64, u32)> = bins.iter().enumerate().map(|(i, b)| (b.0, b.1, i as u32)).collect();
        by_bin.sort_unstable();
        Book { words, by_bin, bins }
    }

    /// Codeword indices whose coarse bin is `a` (and fine bin `b`, if given), ascending.
    fn members(&self, a: u64, b: Option<u64>) -> &[(u64, u64, u32)] {
        let key_lo = (a, b.unwrap_or(0), 0);
        let key_hi = (a, b.unwrap_or(u64::MAX), u32::MAX);
        let lo = self.by_bin.partition_point(|e| *e < key_lo);
        let hi = self.by_bin.partition_point(|e| *e <= key_hi);
        &self.by_bin[lo..hi]
    }
}

/// Uniform draw from `2^e` values (`e >= 64` uses all of `u64`).
fn draw_bin<R: Rng>(rng: &mut R, e: u32) -> u64 {
    if e == 0 {
        0
    } else if e >= 64 {
        rng.gen()
    } else {
        rng.gen_range(0..(1u64 << e))
    }
}

/// Immutable codebooks shared by all trials.
#[derive(Clone, Debug)]
pub struct CodebookSuite {
    spec: CodebookSpec,
    model: Model,
    v: Book,
    w1: Vec<Book>,
    w2: Vec<Book>,
}

/// Sizes of a suite before it is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSize {
    pub v_codewords: u64,
    pub w1_per_v: u64,
    pub w2_per_v: u64,
    pub total_codewords: u64,
    pub bytes: u64,
}

fn pow2(e: u32) -> Option<u64> {
    (e < 63).then(|| 1u64 << e)
}

/// Codebook sizes implied by a spec, or a resource error with the sizes.
pub fn suite_size(spec: &CodebookSpec, nv: usize, n1: usize, n2: usize) -> Result<SuiteSize> {
    let (ev, e1, e2) = (spec.exponent(spec.rates.r_v), spec.exponent(spec.rates.r_w1), spec.exponent(spec.rates.r_w2));
    let too_big = || {
        Error::Resource(format!(
            "codebooks need 2^{ev} x (1 + 2^{e1} + 2^{e2}) codewords at n={}; the cap is {} codewords",
            spec.n, spec.max_codewords
        ))
    };
    let (Some(cv), Some(c1), Some(c2)) = (pow2(ev), pow2(e1), pow2(e2)) else {
        return Err(too_big());
    };
    let total = cv.checked_mul(1 + c1 + c2).ok_or_else(too_big)?;
    if total > spec.max_codewords {
        return Err(too_big());
    }
    let words = spec.n.div_ceil(64) as u64 * 8;
    let bytes = words * (cv * nv as u64 + cv * c1 * n1 as u64 + cv * c2 * n2 as u64);
    if bytes > spec.memory_budget {
        return Err(Error::Resource(format!(
            "codebooks need {bytes} bytes; the budget is {} bytes",
            spec.memory_budget
        )));
    }
    Ok(SuiteSize { v_codewords: cv, w1_per_v: c1, w2_per_v: c2, total_codewords: total, bytes })
}

/// Draws all codebooks and bin assignments from `spec.seed`.
pub fn build_codebooks(spec: &CodebookSpec, src: &JointSource, aux: &AuxChannel) -> Result<CodebookSuite> {
    spec.validate()?;
    let model = Model::new(src, aux)?;
    let size = suite_size(spec, model.nv, model.n1, model.n2)?;
    let n = spec.n;
    let ea = spec.exponent(spec.rates.r_a);
    let ea2 = spec.exponent(spec.rates.r_a_prime);
    let (eb, ec) = (spec.exponent(spec.rates.r_b), spec.exponent(spec.rates.r_c));

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0));
    let mut v_words = Vec::with_capacity(size.v_codewords as usize);
    let mut v_bins = Vec::with_capacity(size.v_codewords as usize);
    for _ in 0..size.v_codewords {
        v_words.push(Seq::sample(n, model.nv, |_| draw(&model.v_cdf, rng.gen())));
        v_bins.push((draw_bin(&mut rng, ea), draw_bin(&mut rng, ea2)));
    }
    let cond_book = |tag: u64, v: &Seq, vi: usize, count: u64, cdfs: &[Vec<f64>], k: usize, e: u32| -> Book {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, (tag << 40) | vi as u64));
        let vs = v.symbols();
        let mut words = Vec::with_capacity(count as usize);
        let mut bins = Vec::with_capacity(count as usize);
        for _ in 0..count {
            words.push(Seq::sample(n, k, |i| draw(&cdfs[vs[i]], rng.gen())));
            bins.push((draw_bin(&mut rng, e), 0));
        }
        Book::new(words, bins)
    };
    let w1: Vec<Book> = v_words
        .par_iter()
        .enumerate()
        .map(|(vi, v)| cond_book(1, v, vi, size.w1_per_v, &model.w1_cdf, model.n1, eb))
        .collect();
    let w2: Vec<Book> = v_words
        .par_iter()
        .enumerate()
        .map(|(vi, v)| cond_book(2, v, vi, size.w2_per_v, &model.w2_cdf, model.n2, ec))
        .collect();
    Ok(CodebookSuite { spec: spec.clone(), model, v: Book::new(v_words, v_bins), w1, w2 })
}

impl CodebookSuite {
    pub fn spec(&self) -> &CodebookSpec {
        &self.spec
    }

    pub fn v_codewords(&self) -> usize {
        self.v.words.len()
    }

    /// Bin pair `(coarse, fine-within-coarse)` of a `V` codeword.
    pub fn v_bin(&self, v: usize) -> (u64, u64) {
        self.v.bins[v]
    }

    /// Bin of codeword `w` in `C_W1(v)`.
    pub fn w1_bin(&self, v: usize, w: usize) -> u64 {
        self.w1[v].bins[w].0
    }

    /// Coarse bin occupancy counts (empty bins omitted).
    pub fn coarse_loads(&self) -> Vec<usize> {
        let mut loads = Vec::new();
        let mut last: Option<u64> = None;
        for e in &self.v.by_bin {
            if Some(e.0) == last {
                *loads.last_mut().expect("started") += 1;
            } else {
                loads.push(1);
                last = Some(e.0);
            }
        }
        loads
    }

    fn slack(&self, mult: f64) -> f64 {
        mult * self.spec.delta
    }

    fn nx_slack(&self, mult: f64) -> f64 {
        mult * self.model.nx as f64 * self.spec.delta
    }
}

/// Message `(i, j, k, l)`: coarse bin, fine bin within it, `W1` bin, `W2` bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub i: u64,
    pub j: u64,
    pub k: u64,
    pub l: u64,
}

/// Encoder output with the chosen codeword indices and encoder-side events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub message: Message,
    pub v: usize,
    pub w1: usize,
    pub w2: usize,
    /// `X` not typical (the side-information checks are made by the trial).
    pub x_atypical: bool,
    /// No `V` codeword typical with `x`.
    pub no_v: bool,
    pub no_w1: bool,
    pub no_w2: bool,
}

impl Encoding {
    pub fn failed(&self) -> bool {
        self.x_atypical || self.no_v || self.no_w1 || self.no_w2
    }
}

/// Least-index search; codeword 0 when nothing qualifies.
fn least<F: Fn(usize) -> bool>(count: usize, ok: F) -> (usize, bool) {
    (0..count).find(|&i| ok(i)).map_or((0, false), |i| (i, true))
}

/// Encodes `x`: the first `V` codeword typical with `x` at `2δ`, then the
/// first `W1` and `W2` codewords typical with `(v, x)` at `3δ`.
pub fn encode(suite: &CodebookSuite, x: &Seq) -> Result<Encoding> {
    let m = &suite.model;
    if x.len() != suite.spec.n || x.alphabet() != m.nx {
        return Err(Error::ShapeMismatch("source block does not match the codebook".into()));
    }
    let px = m.marginal(&[AX]);
    let x_atypical = !jointly_typical(&[x], &px, suite.slack(1.0));
    let pxv = m.marginal(&[AX, AV]);
    let (v, found_v) = least(suite.v.words.len(), |i| jointly_typical(&[x, &suite.v.words[i]], &pxv, suite.slack(2.0)));
    let vw = &suite.v.words[v];
    let pw1vx = m.marginal(&[AW1, AV, AX]);
    let pw2vx = m.marginal(&[AW2, AV, AX]);
    let b1 = &suite.w1[v];
    let b2 = &suite.w2[v];
    let (w1, found_w1) = least(b1.words.len(), |i| jointly_typical(&[&b1.words[i], vw, x], &pw1vx, suite.slack(3.0)));
    let (w2, found_w2) = least(b2.words.len(), |i| jointly_typical(&[&b2.words[i], vw, x], &pw2vx, suite.slack(3.0)));
    let (i, j) = suite.v.bins[v];
    Ok(Encoding {
        message: Message { i, j, k: b1.bins[w1].0, l: b2.bins[w2].0 },
        v,
        w1,
        w2,
        x_atypical,
        no_v: !found_v,
        no_w1: !found_w1,
        no_w2: !found_w2,
    })
}

/// Why a decoder stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeFailure {
    NoneFound,
    Ambiguous,
}

/// Decoded codeword indices and the letterwise reconstruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub v: usize,
    pub w: usize,
    pub reconstruction: Vec<usize>,
}

fn unique(cands: &[usize]) -> std::result::Result<usize, DecodeFailure> {
    match cands {
        [] => Err(DecodeFailure::NoneFound),
        [one] => Ok(*one),
        _ => Err(DecodeFailure::Ambiguous),
    }
}

/// `V` codewords in the given bin typical with the side information.
fn v_candidates(suite: &CodebookSuite, a: u64, b: Option<u64>, y: &Seq, side_axis: usize) -> Vec<usize> {
    let pvy = suite.model.marginal(&[AV, side_axis]);
    let slack = suite.nx_slack(3.0);
    suite
        .v
        .members(a, b)
        .iter()
        .map(|e| e.2 as usize)
        .filter(|&i| jointly_typical(&[&suite.v.words[i], y], &pvy, slack))
        .collect()
}

/// `W` codewords of `book` in bin `bin` typical with `(v, y)`.
fn w_candidates(suite: &CodebookSuite, book: &Book, w_axis: usize, v: &Seq, bin: u64, y: &Seq, side_axis: usize) -> Vec<usize> {
    let p = suite.model.marginal(&[w_axis, AV, side_axis]);
    let slack = suite.nx_slack(4.0);
    book.members(bin, Some(0))
        .iter()
        .map(|e| e.2 as usize)
        .filter(|&i| jointly_typical(&[&book.words[i], v, y], &p, slack))
        .collect()
}

fn reconstruct(table: &[usize], side_size: usize, w: &Seq, y: &Seq) -> Vec<usize> {
    (0..w.len()).map(|t| table[w.symbol(t) * side_size + y.symbol(t)]).collect()
}

/// Stage-one decoding from the coarse bin `i` and `W1` bin `k`.
pub fn decode_stage1(suite: &CodebookSuite, i: u64, k: u64, y1: &Seq) -> std::result::Result<Decoded, DecodeFailure> {
    let v = unique(&v_candidates(suite, i, None, y1, AY1))?;
    let book = &suite.w1[v];
    let w = unique(&w_candidates(suite, book, AW1, &suite.v.words[v], k, y1, AY1))?;
    let reconstruction = reconstruct(&suite.model.f1, suite.model.ny1, &book.words[w], y1);
    Ok(Decoded { v, w, reconstruction })
}

/// Stage-two decoding from the fine bin `(i, j)` and `W2` bin `l`.
pub fn decode_stage2(suite: &CodebookSuite, i: u64, j: u64, l: u64, y2: &Seq) -> std::result::Result<Decoded, DecodeFailure> {
    let v = unique(&v_candidates(suite, i, Some(j), y2, AY2))?;
    let book = &suite.w2[v];
    let w = unique(&w_candidates(suite, book, AW2, &suite.v.words[v], l, y2, AY2))?;
    let reconstruction = reconstruct(&suite.model.f2, suite.model.ny2, &book.words[w], y2);
    Ok(Decoded { v, w, reconstruction })
}

/// Number of error events tracked.
pub const EVENTS: usize = 12;

/// One simulated block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// `events[e]` is event `E_e`.
    pub events: [bool; EVENTS],
    pub message: Message,
    pub stage1: Option<DecodeFailure>,
    pub stage2: Option<DecodeFailure>,
    /// Empirical distortions (present when the stage decoded).
    pub distortion1: Option<f64>,
    pub distortion2: Option<f64>,
    /// Some event fired or a decoder missed the encoder's codewords.
    pub error: bool,
}

fn distortion(d: &DistortionMeasure, x: &[usize], xh: &[usize]) -> f64 {
    x.iter().zip(xh).map(|(&a, &b)| d.get(a, b)).sum::<f64>() / x.len() as f64
}

/// Samples one source block from `seed` and runs the whole scheme.
pub fn run_trial(
    suite: &CodebookSuite,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    seed: u64,
) -> Result<TrialRecord> {
    let m = &suite.model;
    let n = suite.spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut y1s = Vec::with_capacity(n);
    let mut y2s = Vec::with_capacity(n);
    for _ in 0..n {
        let x = draw(&m.px_cdf, rng.gen());
        let y1 = draw(&m.y1_cdf[x], rng.gen());
        let y2 = draw(&m.y2_cdf[y1], rng.gen());
        xs.push(x);
        y1s.push(y1);
        y2s.push(y2);
    }
    let x = Seq::from_symbols(&xs, m.nx)?;
    let y1 = Seq::from_symbols(&y1s, m.ny1)?;
    let y2 = Seq::from_symbols(&y2s, m.ny2)?;

    let enc = encode(suite, &x)?;
    let mut ev = [false; EVENTS];
    ev[0] = enc.x_atypical
        || !jointly_typical(&[&y1], &m.marginal(&[AY1]), suite.slack(1.0))
        || !jointly_typical(&[&y2], &m.marginal(&[AY2]), suite.slack(1.0));
    let ok01 = !ev[0] && !enc.no_v;
    ev[1] = !ev[0] && enc.no_v;
    ev[2] = ok01 && enc.no_w1;
    ev[3] = ok01 && enc.no_w2;
    let v = &suite.v.words[enc.v];
    let w1 = &suite.w1[enc.v].words[enc.w1];
    let w2 = &suite.w2[enc.v].words[enc.w2];
    ev[4] = ok01 && !jointly_typical(&[v, &x, &y1], &m.marginal(&[AV, AX, AY1]), suite.slack(2.0));
    ev[5] = ok01 && !jointly_typical(&[v, &x, &y2], &m.marginal(&[AV, AX, AY2]), suite.slack(2.0));
    let (i, j) = suite.v.bins[enc.v];
    let c1 = v_candidates(suite, i, None, &y1, AY1);
    let c2 = v_candidates(suite, i, Some(j), &y2, AY2);
    ev[6] = ok01 && c1.iter().any(|&c| c != enc.v);
    ev[7] = ok01 && c2.iter().any(|&c| c != enc.v);
    let ok1 = ok01 && !ev[2] && !ev[4] && !ev[6];
    let ok2 = ok01 && !ev[3] && !ev[5] && !ev[7];
    ev[8] = ok1 && !jointly_typical(&[w1, v, &x, &y1], &m.marginal(&[AW1, AV, AX, AY1]), suite.slack(3.0));
    ev[9] = ok2 && !jointly_typical(&[w2, v, &x, &y2], &m.marginal(&[AW2, AV, AX, AY2]), suite.slack(3.0));
    ev[10] = ok1
        && w_candidates(suite, &suite.w1[enc.v], AW1, v, enc.message.k, &y1, AY1).iter().any(|&c| c != enc.w1);
    ev[11] = ok2
        && w_candidates(suite, &suite.w2[enc.v], AW2, v, enc.message.l, &y2, AY2).iter().any(|&c| c != enc.w2);

    let s1 = decode_stage1(suite, i, enc.message.k, &y1);
    let s2 = decode_stage2(suite, i, j, enc.message.l, &y2);
    let hit1 = s1.as_ref().map_or(false, |d| d.v == enc.v && d.w == enc.w1);
    let hit2 = s2.as_ref().map_or(false, |d| d.v == enc.v && d.w == enc.w2);
    let error = ev.iter().any(|&e| e) || !hit1 || !hit2;
    Ok(TrialRecord {
        events: ev,
        message: enc.message,
        stage1: s1.as_ref().err().copied(),
        stage2: s2.as_ref().err().copied(),
        distortion1: s1.as_ref().ok().map(|d| distortion(d1, &xs, &d.reconstruction)),
        distortion2: s2.as_ref().ok().map(|d| distortion(d2, &xs, &d.reconstruction)),
        error,
    })
}

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

fn mean_ci(v: &[f64]) -> Option<MeanCi> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some(MeanCi { mean, half_width: 1.96 * (var / n).sqrt(), count: v.len() })
}

/// Aggregated results of a batch of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub spec: CodebookSpec,
    pub trials: usize,
    pub source_seed: u64,
    pub event_counts: [usize; EVENTS],
    pub event_frequencies: [f64; EVENTS],
    pub error_count: usize,
    pub error_frequency: f64,
    /// Over trials without any error.
    pub distortion1: Option<MeanCi>,
    pub distortion2: Option<MeanCi>,
    /// Single-letter `E d(X, f_j(W_j, Y_j))`.
    pub design_distortion1: f64,
    pub design_distortion2: f64,
    /// Allowance `max d * (3 |V x Wj x X x Yj| δ + P_e)` on the block distortion.
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub rate_check: RateCheck,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub const CSV_HEADER: &'static str = "n,trials,error_frequency,e0,e1,e2,e3,e4,e5,e6,e7,e8,e9,e10,e11,distortion1,distortion2";

    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{},{}", self.spec.n, self.trials, format_sig(self.error_frequency));
        for f in self.event_frequencies {
            s.push(',');
            s.push_str(&format_sig(f));
        }
        let d = |m: &Option<MeanCi>| m.map_or_else(|| "nan".to_string(), |m| format_sig(m.mean));
        s.push_str(&format!(",{},{}", d(&self.distortion1), d(&self.distortion2)));
        s
    }
}

fn design_distortion(m: &Model, d: &DistortionMeasure, first: bool) -> f64 {
    let (w_axis, y_axis, table, ny) = if first { (AW1, AY1, &m.f1, m.ny1) } else { (AW2, AY2, &m.f2, m.ny2) };
    let nw = if first { m.n1 } else { m.n2 };
    let p = m.marginal(&[AX, w_axis, y_axis]);
    let mut total = 0.0;
    for x in 0..m.nx {
        for w in 0..nw {
            for y in 0..ny {
                total += p[(x * nw + w) * ny + y] * d.get(x, table[w * ny + y]);
            }
        }
    }
    total
}

/// Runs `trials` blocks; trial `t` uses `stream_seed(source_seed, t)`.
pub fn run_trials(
    suite: &CodebookSuite,
    src: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    trials: usize,
    source_seed: u64,
    aux: &AuxChannel,
) -> Result<Summary> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(suite, d1, d2, stream_seed(source_seed, t as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut event_counts = [0usize; EVENTS];
    let (mut dist1, mut dist2) = (Vec::new(), Vec::new());
    let mut error_count = 0;
    for r in &records {
        for (c, &e) in event_counts.iter_mut().zip(r.events.iter()) {
            *c += e as usize;
        }
        if r.error {
            error_count += 1;
        } else {
            dist1.extend(r.distortion1);
            dist2.extend(r.distortion2);
        }
    }
    let m = &suite.model;
    let pe = error_count as f64 / trials as f64;
    let delta = suite.spec.delta;
    let eps = |d: &DistortionMeasure, nw: usize, ny: usize| d.max_value() * (3.0 * (m.nv * nw * m.nx * ny) as f64 * delta + pe);
    Ok(Summary {
        spec: suite.spec.clone(),
        trials,
        source_seed,
        event_frequencies: event_counts.map(|c| c as f64 / trials as f64),
        event_counts,
        error_count,
        error_frequency: pe,
        distortion1: mean_ci(&dist1),
        distortion2: mean_ci(&dist2),
        design_distortion1: design_distortion(m, d1, true),
        design_distortion2: design_distortion(m, d2, false),
        epsilon1: eps(d1, m.n1, m.ny1),
        epsilon2: eps(d2, m.n2, m.ny2),
        rate_check: rate_check(src, aux, &suite.spec.rates)?,
    })
}
