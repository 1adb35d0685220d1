//! Rate loss of additive Gaussian test channels under squared error.
//!
//! The scheme describes `X` through `X + N` with Gaussian `N` whose variance
//! equals the target distortion. Its rates are compared with the Wyner-Ziv
//! rate at decoder one and the Heegard-Berger sum rate; the loss is at most
//! half a bit for `R1` and one bit for the sum rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianChain, NO_SIDE_INFO_SCALE};
use crate::probcore::{format_sig, DistortionMeasure, JointSource, Side};
use crate::rdopt::{self, OptimizerConfig};

/// Budget for the first-stage loss, bits.
pub const R1_BUDGET: f64 = 0.5;
/// Budget for the sum-rate loss, bits.
pub const SUM_BUDGET: f64 = 1.0;
/// Slack on the budgets for closed-form (Gaussian) certificates.
pub const GAUSSIAN_TOL: f64 = 1e-6;

/// Source model for squared-error coding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MseSource {
    /// `X ~ N(0, var_x)`, `Y1 = X + N(0, noise1)`, `Y2 = Y1 + N(0, noise2)`;
    /// `noise2 = None` means decoder two has no side information.
    Gaussian { var_x: f64, noise1: f64, noise2: Option<f64> },
    /// Discrete `X` on real `levels` with a discrete side-information model.
    /// `quantization_mse` records the error made when the levels stand in
    /// for a continuous density (0 for a genuinely discrete source).
    Quantized { levels: Vec<f64>, source: JointSource, quantization_mse: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseInstance {
    pub source: MseSource,
    pub d1: f64,
    pub d2: f64,
}

/// Which nesting of the two test noises is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCase {
    /// `D1 >= D2`: `W1 = X + N1 + N2`, `W2 = X + N2`.
    CoarseFirst,
    /// `D1 < D2`: `W1 = X + N1`, `W2 = X + N1 + N2`.
    FineFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRates {
    pub case: NoiseCase,
    /// Variance of `N1`.
    pub sigma1_sq: f64,
    /// Variance of `N2`.
    pub sigma2_sq: f64,
    pub r1: f64,
    pub r_sum: f64,
}

impl MseInstance {
    fn check(&self) -> Result<()> {
        if !(self.d1 > 0.0 && self.d1.is_finite() && self.d2 > 0.0 && self.d2.is_finite()) {
            return Err(Error::Domain(format!("distortions must be positive, got D1={}, D2={}", self.d1, self.d2)));
        }
        match &self.source {
            MseSource::Gaussian { var_x, noise1, noise2 } => {
                let ok = |v: f64| v > 0.0 && v.is_finite();
                if !ok(*var_x) || !ok(*noise1) || noise2.is_some_and(|v| !ok(v)) {
                    return Err(Error::Domain("variances must be finite and positive".into()));
                }
            }
            MseSource::Quantized { levels, source, quantization_mse } => {
                if levels.len() != source.nx() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} levels for a source with {} symbols",
                        levels.len(),
                        source.nx()
                    )));
                }
                if levels.iter().any(|v| !v.is_finite()) || !(*quantization_mse >= 0.0) {
                    return Err(Error::Domain("levels must be finite and the quantization error nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// `I(X; X + N(0, tau) | Y_side)`.
    fn info(&self, side: Side, tau: f64) -> f64 {
        match &self.source {
            MseSource::Gaussian { var_x, noise1, noise2 } => {
                let s = match side {
                    Side::First => Some(*noise1),
                    Side::Second => noise2.map(|n| noise1 + n),
                };
                let c = match s {
                    Some(s) => 1.0 / (1.0 / var_x + 1.0 / s),
                    None => *var_x,
                };
                0.5 * (1.0 + c / tau).log2()
            }
            MseSource::Quantized { levels, source, .. } => gaussian_channel_info(levels, &source.px_side(side), tau),
        }
    }
}

/// `I(X; X + N(0, tau) | Y)` for discrete `X` on `levels` with joint `P(x, y)`,
/// by numerical integration of the mixture entropies `h(W | Y = y)`.
fn gaussian_channel_info(levels: &[f64], pxy: &crate::probcore::Matrix, tau: f64) -> f64 {
    let sd = tau.sqrt();
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * sd;
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd;
    let n = (((hi - lo) / (sd / 40.0)).ceil() as usize).clamp(2000, 400_000) & !1;
    let step = (hi - lo) / n as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * tau).sqrt();
    let mut total = 0.0;
    for y in 0..pxy.cols() {
        let py: f64 = (0..levels.len()).map(|x| pxy.get(x, y)).sum();
        if py <= 0.0 {
            continue;
        }
        let w: Vec<(f64, f64)> =
            (0..levels.len()).filter(|&x| pxy.get(x, y) > 0.0).map(|x| (levels[x], pxy.get(x, y) / py)).collect();
        // Simpson's rule on -p log2 p.
        let mut h = 0.0;
        for i in 0..=n {
            let t = lo + step * i as f64;
            let dens: f64 = w.iter().map(|(m, p)| p * norm * (-(t - m) * (t - m) / (2.0 * tau)).exp()).sum();
            let v = if dens > 0.0 { -dens * dens.log2() } else { 0.0 };
            let coef = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            h += coef * v;
        }
        h *= step / 3.0;
        total += py * h;
    }
    let noise_entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * tau).log2();
    (total - noise_entropy).max(0.0)
}

/// Rates of the nested additive-noise construction.
pub fn inner_rates_mse(inst: &MseInstance) -> Result<InnerRates> {
    inst.check()?;
    let (d1, d2) = (inst.d1, inst.d2);
    let r1 = inst.info(Side::First, d1);
    Ok(if d1 >= d2 {
        InnerRates {
            case: NoiseCase::CoarseFirst,
            sigma1_sq: d1 - d2,
            sigma2_sq: d2,
            r1,
            r_sum: inst.info(Side::Second, d2).max(r1),
        }
    } else {
        // The refinement term I(X; W1 | Y1, W2) equals I(X; W1 | Y1) - I(X; W2 | Y1)
        // because W2 is W1 plus independent noise.
        let sum = inst.info(Side::Second, d2) + r1 - inst.info(Side::First, d2);
        InnerRates { case: NoiseCase::FineFirst, sigma1_sq: d1, sigma2_sq: d2 - d1, r1, r_sum: sum.max(r1) }
    })
}

/// Inner rates against the Wyner-Ziv and Heegard-Berger references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub inner: InnerRates,
    pub wz1: f64,
    pub hb: f64,
    pub gap_r1: f64,
    pub gap_sum: f64,
    /// Slack applied to the budgets.
    pub tolerance: f64,
    /// Error of the level set against the continuous source, when quantized.
    pub quantization_mse: Option<f64>,
    pub within_budget: bool,
}

impl GapCertificate {
    pub const CSV_HEADER: &'static str = "d1,d2,case,r1_inner,sum_inner,wz1,hb,gap_r1,gap_sum,within_budget";

    pub fn csv_row(&self, d1: f64, d2: f64) -> String {
        let case = match self.inner.case {
            NoiseCase::CoarseFirst => "coarse_first",
            NoiseCase::FineFirst => "fine_first",
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            format_sig(d1),
            format_sig(d2),
            case,
            format_sig(self.inner.r1),
            format_sig(self.inner.r_sum),
            format_sig(self.wz1),
            format_sig(self.hb),
            format_sig(self.gap_r1),
            format_sig(self.gap_sum),
            self.within_budget
        )
    }
}

/// Computes both gaps. Gaussian references are closed forms; quantized
/// references come from the discrete optimizers (with reconstructions
/// restricted to the level set) and are therefore approximate.
pub fn gap_certificate(inst: &MseInstance, cfg: &OptimizerConfig) -> Result<GapCertificate> {
    let inner = inner_rates_mse(inst)?;
    let (wz1, hb, tolerance, quantization_mse) = match &inst.source {
        MseSource::Gaussian { var_x, noise1, noise2 } => {
            let inc = noise2.unwrap_or(NO_SIDE_INFO_SCALE * var_x);
            let chain = GaussianChain::new(*var_x, vec![*noise1, inc])?;
            let wz1 = chain.wz_rate(0, inst.d1)?;
            let (hb, _) = gaussian::hb_rate_gaussian(&chain, &[inst.d1, inst.d2])?;
            (wz1, hb, GAUSSIAN_TOL, None)
        }
        MseSource::Quantized { levels, source, quantization_mse } => {
            let d = DistortionMeasure::squared_error(levels);
            let wz1 = rdopt::wyner_ziv_rate(source, &d, inst.d1, cfg)?.rate;
            let hb = rdopt::heegard_berger_rate(source, &d, &d, inst.d1, inst.d2, cfg)?.rate;
            (wz1, hb, cfg.tolerance, Some(*quantization_mse))
        }
    };
    let gap_r1 = inner.r1 - wz1;
    let gap_sum = inner.r_sum - hb;
    let within_budget = gap_r1 <= R1_BUDGET + tolerance && gap_sum <= SUM_BUDGET + tolerance;
    Ok(GapCertificate { inner, wz1, hb, gap_r1, gap_sum, tolerance, quantization_mse, within_budget })
}

/// Midpoint quantization of a density on `[lo, hi]` into `n` equal cells.
///
/// Returns `(levels, probabilities, mse)`, where `mse` is the mean squared
/// distance from the source to its cell midpoint (mass outside the interval
/// is folded into the end cells). Cell integrals use Simpson's rule.
pub fn quantize_density<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if n == 0 || !(hi > lo) {
        return Err(Error::Domain("need at least one cell on a nonempty interval".into()));
    }
    let width = (hi - lo) / n as f64;
    let sub = 64;
    let mut levels = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    let mut mse = 0.0;
    for c in 0..n {
        let a = lo + width * c as f64;
        let mid = a + width / 2.0;
        let h = width / sub as f64;
        let (mut m, mut e) = (0.0, 0.0);
        for i in 0..=sub {
            let t = a + h * i as f64;
            let coef = if i == 0 || i == sub {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let f = pdf(t);
            m += coef * f;
            e += coef * f * (t - mid) * (t - mid);
        }
        levels.push(mid);
        mass.push(m * h / 3.0);
        mse += e * h / 3.0;
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("density has no mass on the interval".into()));
    }
    let probs = mass.iter().map(|m| m / total).collect();
    Ok((levels, probs, mse / total))
}
