//! Closed forms for the doubly symmetric binary source with Hamming
//! distortion, side information `Y1 = X ⊕ Bern(p)` at decoder one and none
//! at decoder two.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{conv, hb, Matrix};
use crate::rdopt::{AuxChannel, DecoderTable};

const LN2: f64 = std::f64::consts::LN_2;

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Domain(format!("crossover p={p} must lie in (0, 0.5)")));
    }
    Ok(())
}

fn check_half(name: &str, u: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&u) {
        return Err(Error::Domain(format!("{name}={u} must lie in [0, 0.5]")));
    }
    Ok(())
}

/// `G(u) = h_b(p * u) - h_b(u)`, evaluated as written.
pub fn g_function(p: f64, u: f64) -> Result<f64> {
    check_p(p)?;
    check_half("u", u)?;
    Ok(g(p, u))
}

#[inline]
fn g(p: f64, u: f64) -> f64 {
    hb(conv(p, u)) - hb(u)
}

/// Analytic derivative of `G` on the open interval `(0, 0.5)`.
fn g_prime(p: f64, u: f64) -> f64 {
    let a = conv(p, u);
    (1.0 - 2.0 * p) * ((1.0 - a) / a).log2() - ((1.0 - u) / u).log2()
}

fn g_second(p: f64, u: f64) -> f64 {
    let a = conv(p, u);
    let k = 1.0 - 2.0 * p;
    -k * k / (LN2 * a * (1.0 - a)) + 1.0 / (LN2 * u * (1.0 - u))
}

/// Tangency residual `G(d) - (d - p) G'(d)`; zero at the critical distortion.
pub fn tangent_residual(p: f64, d: f64) -> f64 {
    g(p, d) - (d - p) * g_prime(p, d)
}

/// The critical distortion `d_c`: the tangent from `(p, 0)` to `G` touches at `d_c`.
pub fn critical_distortion(p: f64) -> Result<f64> {
    check_p(p)?;
    let (mut lo, mut hi) = (1e-9, p - 1e-9);
    let (flo, fhi) = (tangent_residual(p, lo), tangent_residual(p, hi));
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::Infeasible(format!("tangent condition not bracketed for p={p}")));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if tangent_residual(p, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut d = 0.5 * (lo + hi);
    let slope = -(d - p) * g_second(p, d);
    if slope != 0.0 && slope.is_finite() {
        let polished = d - tangent_residual(p, d) / slope;
        if polished > 0.0 && polished < p && tangent_residual(p, polished).abs() <= tangent_residual(p, d).abs() {
            d = polished;
        }
    }
    Ok(d)
}

/// Wyner-Ziv rate of the DSBS: `G(D)` below `d_c`, then the straight line to `(p, 0)`.
pub fn wz_dsbs(p: f64, level: f64) -> Result<f64> {
    check_p(p)?;
    check_half("D", level)?;
    let dc = critical_distortion(p)?;
    Ok(wz_with_dc(p, dc, level))
}

fn wz_with_dc(p: f64, dc: f64, level: f64) -> f64 {
    if level <= dc {
        g(p, level)
    } else if level < p {
        g(p, dc) * (p - level) / (p - dc)
    } else {
        0.0
    }
}

/// Partition of the distortion square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DsbsRegion {
    /// `D1 <= min(d_c, D2)`: closed-form Heegard-Berger rate, not perfectly scalable.
    ID,
    /// `D2 <= min(D1, d_c)` with `D1 < p`: perfectly scalable via time-shared cascades.
    IC,
    /// Nondegenerate points with no closed form here.
    Unresolved,
    /// At least one decoder is served at zero rate.
    Degenerate,
}

impl DsbsRegion {
    pub fn label(&self) -> &'static str {
        match self {
            DsbsRegion::ID => "I-D",
            DsbsRegion::IC => "I-C",
            DsbsRegion::Unresolved => "UNRESOLVED(I-A/I-B)",
            DsbsRegion::Degenerate => "DEGENERATE",
        }
    }
}

/// Labels a distortion pair.
///
/// The cascade label is checked first; among the remaining points, those
/// where a decoder needs no rate are degenerate. The time-shared cascade
/// label requires a crossover `η' = min(D1, d_c)` with `D2 <= η'`.
pub fn classify_region(p: f64, d1: f64, d2: f64) -> Result<DsbsRegion> {
    check_p(p)?;
    check_half("D1", d1)?;
    check_half("D2", d2)?;
    let dc = critical_distortion(p)?;
    Ok(if d1 <= dc.min(d2) {
        DsbsRegion::ID
    } else if d1 >= p || d2 >= 0.5 {
        DsbsRegion::Degenerate
    } else if d2 <= d1.min(dc) {
        DsbsRegion::IC
    } else {
        DsbsRegion::Unresolved
    })
}

fn bsc(e: f64) -> [[f64; 2]; 2] {
    [[1.0 - e, e], [e, 1.0 - e]]
}

/// Closed-form Heegard-Berger solution in the cascade region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeSolution {
    pub rate: f64,
    /// Crossover of the second BSC, `D1 * eta = D2`.
    pub eta: f64,
    /// `P(w1, w2 | x)` with identity decoders.
    pub witness: AuxChannel,
}

/// `R_HB(D1, D2) = 1 - h_b(D2 * p) + G(D1)` with its cascade witness `X -> BSC(D1) -> W1 -> BSC(eta) -> W2`.
pub fn hb_dsbs_region_id(p: f64, d1: f64, d2: f64) -> Result<CascadeSolution> {
    check_p(p)?;
    check_half("D1", d1)?;
    check_half("D2", d2)?;
    let dc = critical_distortion(p)?;
    if d1 > dc.min(d2) {
        return Err(Error::Region {
            label: "I-D".into(),
            message: format!("need D1 <= min(d_c={dc}, D2={d2}), got D1={d1}"),
        });
    }
    let eta = if d1 >= 0.5 { 0.0 } else { (d2 - d1) / (1.0 - 2.0 * d1) };
    let rate = 1.0 - hb(conv(d2, p)) + g(p, d1);
    let (c1, c2) = (bsc(d1), bsc(eta));
    let mut cond = Matrix::zeros(2, 4);
    for x in 0..2 {
        for w1 in 0..2 {
            for w2 in 0..2 {
                cond.set(x, w1 * 2 + w2, c1[x][w1] * c2[w1][w2]);
            }
        }
    }
    let witness = AuxChannel {
        cond,
        dims: vec![2, 2],
        decoders: vec![
            DecoderTable { aux_size: 2, side_size: 2, map: vec![0, 0, 1, 1] },
            DecoderTable { aux_size: 2, side_size: 1, map: vec![0, 1] },
        ],
    };
    Ok(CascadeSolution { rate, eta, witness })
}

/// How far the closed-form rate sits above `1 - h_b(D2)`, the rate a
/// perfectly scalable code would need at decoder two.
pub fn id_scalability_excess(p: f64, d1: f64, d2: f64) -> Result<f64> {
    let s = hb_dsbs_region_id(p, d1, d2)?;
    Ok(s.rate - (1.0 - hb(d2)))
}

/// Perfectly scalable test channel for the time-sharing region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeShareSolution {
    /// `I(X; W1 | Y1)`, equal to the Wyner-Ziv rate at `D1`.
    pub r1: f64,
    /// `I(X; W2)`, equal to `1 - h_b(D2)`.
    pub r2: f64,
    /// Fraction of time the refinement cascade is used.
    pub theta: f64,
    /// Crossover of the BSC from `W2` to `W1` when in use.
    pub eta: f64,
    /// `P(w1, w2 | x)`, `w1` in `{0, 1, erased}`; decoder one falls back to `Y1` on erasures.
    pub witness: AuxChannel,
}

/// Builds `W2 = X ⊕ Bern(D2)` and `W1` equal to `W2 ⊕ Bern(eta)` with
/// probability `theta` and erased otherwise, so that `W1 - W2 - X` holds.
pub fn ic_time_share(p: f64, d1: f64, d2: f64) -> Result<TimeShareSolution> {
    let region = classify_region(p, d1, d2)?;
    if region != DsbsRegion::IC {
        return Err(Error::Region {
            label: "I-C".into(),
            message: format!("({d1}, {d2}) is labelled {}", region.label()),
        });
    }
    let dc = critical_distortion(p)?;
    let target = d1.min(dc);
    let eta = if d2 >= 0.5 { 0.0 } else { (target - d2) / (1.0 - 2.0 * d2) };
    let theta = if d1 <= dc { 1.0 } else { (p - d1) / (p - dc) };
    let (c2, c21) = (bsc(d2), bsc(eta));
    let mut cond = Matrix::zeros(2, 6);
    for x in 0..2 {
        for w2 in 0..2 {
            let base = c2[x][w2];
            for w1 in 0..2 {
                cond.set(x, w1 * 2 + w2, base * theta * c21[w2][w1]);
            }
            cond.set(x, 2 * 2 + w2, base * (1.0 - theta));
        }
    }
    let witness = AuxChannel {
        cond,
        dims: vec![3, 2],
        decoders: vec![
            DecoderTable { aux_size: 3, side_size: 2, map: vec![0, 0, 1, 1, 0, 1] },
            DecoderTable { aux_size: 2, side_size: 1, map: vec![0, 1] },
        ],
    };
    Ok(TimeShareSolution { r1: theta * g(p, target), r2: 1.0 - hb(d2), theta, eta, witness })
}
