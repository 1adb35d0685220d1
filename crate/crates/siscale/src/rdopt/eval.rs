//! Objective evaluators used inside the searches.
//!
//! These work on flat channel rows and cached source marginals, avoiding the
//! generic joint-table machinery; witnesses are always re-checked with the
//! slow path in [`super::AuxChannel`].

use super::{AuxChannel, DecoderTable};
use crate::error::Result;
use crate::probcore::{entropy_of, DistortionMeasure, JointSource, Matrix, Side};

/// Cheapest reconstruction for one weight vector over `x`; ties go to the lowest index.
#[inline]
fn best_reconstruction(w: &[f64], d: &DistortionMeasure) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for xh in 0..d.reconstruction_size() {
        let mut c = 0.0;
        for (x, &m) in w.iter().enumerate() {
            if m != 0.0 {
                c += m * d.get(x, xh);
            }
        }
        if c < best.1 {
            best = (xh, c);
        }
    }
    best
}

/// Optimal decoder for weights laid out as `weights[(a * ny + y) * nx + x]`.
pub fn decoder_table(weights: &[f64], na: usize, ny: usize, nx: usize, d: &DistortionMeasure) -> (DecoderTable, f64) {
    let mut map = Vec::with_capacity(na * ny);
    let mut total = 0.0;
    for cell in 0..na * ny {
        let (xh, c) = best_reconstruction(&weights[cell * nx..(cell + 1) * nx], d);
        map.push(xh);
        total += c;
    }
    (DecoderTable { aux_size: na, side_size: ny, map }, total)
}

fn weighted_row_entropy(px: &[f64], q: &[f64], k: usize) -> f64 {
    px.iter().enumerate().map(|(x, p)| p * entropy_of(&q[x * k..(x + 1) * k])).sum()
}

/// Cached marginals of `(X, Y_j)` for one side.
#[derive(Clone, Debug)]
pub struct SideCache {
    nx: usize,
    ny: usize,
    pxy: Vec<f64>,
    px: Vec<f64>,
    h_y: f64,
}

impl SideCache {
    pub fn new(src: &JointSource, side: Side) -> Self {
        let m = src.px_side(side);
        SideCache {
            nx: m.rows(),
            ny: m.cols(),
            pxy: m.data().to_vec(),
            px: m.row_sums(),
            h_y: entropy_of(&m.col_sums()),
        }
    }

    fn weights(&self, q: &[f64], k: usize) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut w = vec![0.0; k * ny * nx];
        for x in 0..nx {
            for a in 0..k {
                let qa = q[x * k + a];
                if qa == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    w[(a * ny + y) * nx + x] = self.pxy[x * ny + y] * qa;
                }
            }
        }
        w
    }

    /// `I(X; A | Y)` for a channel with `k` outputs.
    pub fn rate(&self, q: &[f64], k: usize) -> f64 {
        let (nx, ny) = (self.nx, self.ny);
        let mut pay = vec![0.0; k * ny];
        for x in 0..nx {
            for a in 0..k {
                let qa = q[x * k + a];
                if qa == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    pay[a * ny + y] += self.pxy[x * ny + y] * qa;
                }
            }
        }
        (entropy_of(&pay) - self.h_y - weighted_row_entropy(&self.px, q, k)).max(0.0)
    }

    /// Distortion of the optimal decoder `f(A, Y)`.
    pub fn distortion(&self, q: &[f64], k: usize, d: &DistortionMeasure) -> f64 {
        let w = self.weights(q, k);
        (0..k * self.ny).map(|c| best_reconstruction(&w[c * self.nx..(c + 1) * self.nx], d).1).sum()
    }

    /// Wyner-Ziv objective: rate and optimal-decoder distortion.
    pub fn wz(&self, q: &[f64], k: usize, d: &DistortionMeasure) -> (f64, f64) {
        (self.rate(q, k), self.distortion(q, k, d))
    }

    pub fn wz_decoder(&self, q: &[f64], k: usize, d: &DistortionMeasure) -> (DecoderTable, f64) {
        decoder_table(&self.weights(q, k), k, self.ny, self.nx, d)
    }
}

/// Rates and distortions of a two-auxiliary channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerms {
    pub r1: f64,
    pub sum: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Cached marginals of the whole source.
#[derive(Clone, Debug)]
pub struct SourceCache {
    nx: usize,
    ny1: usize,
    pxy1: Vec<f64>,
    h_xy1: f64,
    first: SideCache,
    second: SideCache,
}

/// Sums a pair channel over one component: `axis = 0` keeps `w1`, `axis = 1` keeps `w2`.
fn pair_marginal(q: &[f64], nx: usize, a: usize, b: usize, axis: usize) -> Vec<f64> {
    let k = if axis == 0 { a } else { b };
    let mut m = vec![0.0; nx * k];
    for x in 0..nx {
        for w1 in 0..a {
            for w2 in 0..b {
                let w = if axis == 0 { w1 } else { w2 };
                m[x * k + w] += q[x * a * b + w1 * b + w2];
            }
        }
    }
    m
}

impl SourceCache {
    pub fn new(src: &JointSource) -> Self {
        let m = src.px_y1();
        SourceCache {
            nx: src.nx(),
            ny1: src.ny1(),
            pxy1: m.data().to_vec(),
            h_xy1: entropy_of(m.data()),
            first: SideCache::new(src, Side::First),
            second: SideCache::new(src, Side::Second),
        }
    }

    pub fn side(&self, side: Side) -> &SideCache {
        match side {
            Side::First => &self.first,
            Side::Second => &self.second,
        }
    }

    /// `H(A, Y1)` for a channel with `k` outputs.
    fn h_with_y1(&self, q: &[f64], k: usize) -> f64 {
        let (nx, ny) = (self.nx, self.ny1);
        let mut pay = vec![0.0; k * ny];
        for x in 0..nx {
            for a in 0..k {
                let qa = q[x * k + a];
                if qa == 0.0 {
                    continue;
                }
                for y in 0..ny {
                    pay[a * ny + y] += self.pxy1[x * ny + y] * qa;
                }
            }
        }
        entropy_of(&pay)
    }

    /// Pair channel `P(w1, w2 | x)` with index `w1 * b + w2`.
    pub fn pair(&self, q: &[f64], a: usize, b: usize, d1: &DistortionMeasure, d2: &DistortionMeasure) -> PairTerms {
        let nx = self.nx;
        let q1 = pair_marginal(q, nx, a, b, 0);
        let q2 = pair_marginal(q, nx, a, b, 1);
        let (r1, e1) = self.first.wz(&q1, a, d1);
        let (r2, e2) = self.second.wz(&q2, b, d2);
        let px = &self.first.px;
        // I(X; W1 | W2, Y1) = H(W1 W2 Y1) - H(W2 Y1) - H(W1 W2 | X) + H(W2 | X)
        let cond = self.h_with_y1(q, a * b) - self.h_with_y1(&q2, b) - weighted_row_entropy(px, q, a * b)
            + weighted_row_entropy(px, &q2, b);
        PairTerms { r1, sum: (r2 + cond.max(0.0)).max(0.0), d1: e1, d2: e2 }
    }

    pub fn pair_witness(
        &self,
        q: &[f64],
        a: usize,
        b: usize,
        d1: &DistortionMeasure,
        d2: &DistortionMeasure,
    ) -> Result<AuxChannel> {
        let nx = self.nx;
        let q1 = pair_marginal(q, nx, a, b, 0);
        let q2 = pair_marginal(q, nx, a, b, 1);
        let f1 = self.first.wz_decoder(&q1, a, d1).0;
        let f2 = self.second.wz_decoder(&q2, b, d2).0;
        Ok(AuxChannel { cond: Matrix::from_vec(nx, a * b, q.to_vec())?, dims: vec![a, b], decoders: vec![f1, f2] })
    }

    /// `I(X; W2 | Y2) + H(X | W2, Y1)` and the distortion at decoder two.
    pub fn lossless_first(&self, q: &[f64], k: usize, d2: &DistortionMeasure) -> (f64, f64) {
        let (r2, e2) = self.second.wz(q, k, d2);
        // H(X, W2, Y1) = H(X, Y1) + H(W2 | X)
        let h_x_w_y1 = self.h_xy1 + weighted_row_entropy(&self.first.px, q, k);
        let residual = (h_x_w_y1 - self.h_with_y1(q, k)).max(0.0);
        (r2 + residual, e2)
    }

    /// Channels of a structured point `(P(v|x), P(w1|x,v), P(w2|x,v))`.
    fn inner_parts(&self, point: &[f64], nv: usize, n1: usize, n2: usize) -> InnerParts {
        let nx = self.nx;
        let pv = &point[..nx * nv];
        let p1 = &point[nx * nv..nx * nv * (1 + n1)];
        let p2 = &point[nx * nv * (1 + n1)..];
        let mut qv1 = vec![0.0; nx * nv * n1];
        let mut qv2 = vec![0.0; nx * nv * n2];
        let mut q1 = vec![0.0; nx * n1];
        let mut q2 = vec![0.0; nx * n2];
        for x in 0..nx {
            for v in 0..nv {
                let m = pv[x * nv + v];
                let row = x * nv + v;
                for w in 0..n1 {
                    let t = m * p1[row * n1 + w];
                    qv1[x * nv * n1 + v * n1 + w] = t;
                    q1[x * n1 + w] += t;
                }
                for w in 0..n2 {
                    let t = m * p2[row * n2 + w];
                    qv2[x * nv * n2 + v * n2 + w] = t;
                    q2[x * n2 + w] += t;
                }
            }
        }
        InnerParts { pv: pv.to_vec(), qv1, qv2, q1, q2 }
    }

    /// Rates of a structured point: `r1 = I(X; V W1 | Y1)` and
    /// `sum = I(X; V W2 | Y2) + I(X; W1 | Y1, V)`.
    pub fn inner(
        &self,
        point: &[f64],
        dims: (usize, usize, usize),
        d1: &DistortionMeasure,
        d2: &DistortionMeasure,
    ) -> PairTerms {
        let (nv, n1, n2) = dims;
        let p = self.inner_parts(point, nv, n1, n2);
        let r1 = self.first.rate(&p.qv1, nv * n1);
        let iv1 = self.first.rate(&p.pv, nv);
        let sum = self.second.rate(&p.qv2, nv * n2) + (r1 - iv1).max(0.0);
        let e1 = self.first.distortion(&p.q1, n1, d1);
        let e2 = self.second.distortion(&p.q2, n2, d2);
        PairTerms { r1, sum, d1: e1, d2: e2 }
    }

    /// Witness of a structured point as a three-component channel `P(v, w1, w2 | x)`.
    pub fn inner_witness(
        &self,
        point: &[f64],
        dims: (usize, usize, usize),
        d1: &DistortionMeasure,
        d2: &DistortionMeasure,
    ) -> Result<AuxChannel> {
        let (nv, n1, n2) = dims;
        let nx = self.nx;
        let p = self.inner_parts(point, nv, n1, n2);
        let p1 = &point[nx * nv..nx * nv * (1 + n1)];
        let p2 = &point[nx * nv * (1 + n1)..];
        let mut cond = Matrix::zeros(nx, nv * n1 * n2);
        for x in 0..nx {
            for v in 0..nv {
                let row = x * nv + v;
                for w1 in 0..n1 {
                    for w2 in 0..n2 {
                        let t = p.pv[row] * p1[row * n1 + w1] * p2[row * n2 + w2];
                        cond.set(x, (v * n1 + w1) * n2 + w2, t);
                    }
                }
            }
        }
        let f1 = self.first.wz_decoder(&p.q1, n1, d1).0;
        let f2 = self.second.wz_decoder(&p.q2, n2, d2).0;
        Ok(AuxChannel { cond, dims: vec![nv, n1, n2], decoders: vec![f1, f2] })
    }
}

struct InnerParts {
    pv: Vec<f64>,
    qv1: Vec<f64>,
    qv2: Vec<f64>,
    q1: Vec<f64>,
    q2: Vec<f64>,
}
