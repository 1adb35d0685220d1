//! Quadratic-Gaussian source with physically degraded side informations
//! `Y_k = X + N_1 + ... + N_k`.
//!
//! Decoders are indexed from 0. A distortion of `f64::INFINITY` means the
//! decoder has no constraint; distortions at or above the side-information
//! MMSE are equivalent to no constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stand-in variance for "no side information", relative to `var_x`.
pub const NO_SIDE_INFO_SCALE: f64 = 1e12;

/// `σ_x²` and the noise increments of the degraded chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr")]
pub struct GaussianChain {
    var_x: f64,
    noise_increments: Vec<f64>,
    #[serde(skip_serializing)]
    cumulative: Vec<f64>,
}

#[derive(Deserialize)]
struct ChainRepr {
    var_x: f64,
    noise_increments: Vec<f64>,
}

impl TryFrom<ChainRepr> for GaussianChain {
    type Error = Error;

    fn try_from(r: ChainRepr) -> Result<Self> {
        GaussianChain::new(r.var_x, r.noise_increments)
    }
}

impl GaussianChain {
    pub fn new(var_x: f64, noise_increments: Vec<f64>) -> Result<Self> {
        if !(var_x > 0.0 && var_x.is_finite()) {
            return Err(Error::Domain(format!("var_x={var_x} must be finite and positive")));
        }
        if noise_increments.is_empty() {
            return Err(Error::Domain("chain needs at least one decoder".into()));
        }
        if noise_increments.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("noise increments must be finite and positive".into()));
        }
        let cumulative = noise_increments
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        Ok(GaussianChain { var_x, noise_increments, cumulative })
    }

    pub fn var_x(&self) -> f64 {
        self.var_x
    }

    pub fn noise_increments(&self) -> &[f64] {
        &self.noise_increments
    }

    pub fn len(&self) -> usize {
        self.noise_increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise_increments.is_empty()
    }

    /// Total noise variance `s_k` of `Y_k`.
    pub fn cumulative(&self, k: usize) -> f64 {
        self.cumulative[k]
    }

    /// `Var(X | Y_k) = (1/σ_x² + 1/s_k)⁻¹`.
    pub fn conditional_variance(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(mmse(&[self.var_x, self.cumulative[k]]))
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::Domain(format!("decoder {k} outside a chain of {}", self.len())));
        }
        Ok(())
    }

    fn check_levels(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.len() {
            return Err(Error::ShapeMismatch(format!("{} distortions for {} decoders", d.len(), self.len())));
        }
        for (k, &v) in d.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("D[{k}]={v} must be positive")));
            }
        }
        Ok(())
    }

    /// Test-noise variance `t` with `Var(X | Y_k, X + Z) = D` for `Z ~ N(0, t)`.
    ///
    /// Returns infinity when `D` is at or above `Var(X | Y_k)`: the
    /// constraint is then met without any description.
    pub fn solve_test_noise(&self, k: usize, level: f64) -> Result<f64> {
        self.check_index(k)?;
        if !(level > 0.0) {
            return Err(Error::Domain(format!("D={level} must be positive")));
        }
        let inv = 1.0 / level - 1.0 / self.var_x - 1.0 / self.cumulative[k];
        if inv <= 1e-12 / level {
            Ok(f64::INFINITY)
        } else {
            Ok(1.0 / inv)
        }
    }

    /// Gaussian Wyner-Ziv rate `½ log₂(Var(X|Y_k)/D)⁺`.
    pub fn wz_rate(&self, k: usize, level: f64) -> Result<f64> {
        let c = self.conditional_variance(k)?;
        if !(level > 0.0) {
            return Err(Error::Domain(format!("D={level} must be positive")));
        }
        Ok((0.5 * (c / level).log2()).max(0.0))
    }
}

/// Combined MMSE of observations with the given independent noise
/// variances (the first entry is the prior variance).
fn mmse(vars: &[f64]) -> f64 {
    1.0 / vars.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// The optimal jointly Gaussian auxiliaries `W_k = X + Z_k` (nested noises).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WStarConstruction {
    /// Test-noise variance per decoder (infinite when unconstrained).
    pub test_noise: Vec<f64>,
    /// `rank[k]`: position of decoder `k` when test noises are sorted ascending (ties by index).
    pub rank: Vec<usize>,
    /// Noise increments in rank order; their prefix sums are the sorted test noises.
    pub increments: Vec<f64>,
    /// Decoders whose rank is below that of every later decoder.
    pub active: Vec<usize>,
}

impl WStarConstruction {
    /// Decoder holding rank `r`.
    pub fn decoder_at_rank(&self, r: usize) -> usize {
        self.rank.iter().position(|&x| x == r).expect("rank is a permutation")
    }
}

pub fn construct_w_star(chain: &GaussianChain, d: &[f64]) -> Result<WStarConstruction> {
    chain.check_levels(d)?;
    let n = chain.len();
    let test_noise: Vec<f64> = (0..n).map(|k| chain.solve_test_noise(k, d[k])).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| test_noise[a].partial_cmp(&test_noise[b]).expect("no NaN").then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    let mut increments = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &k in &order {
        let t = test_noise[k];
        increments.push(if t == prev { 0.0 } else { t - prev });
        prev = t;
    }
    let active = (0..n).filter(|&k| (k + 1..n).all(|j| rank[k] < rank[j])).collect();
    Ok(WStarConstruction { test_noise, rank, increments, active })
}

/// Lower bound obtained by enforcing only the decoders in `subset`.
///
/// The bound is evaluated on the sub-chain of the retained decoders, whose
/// noise increments merge the dropped ones.
pub fn hb_lower_bound_subset(chain: &GaussianChain, d: &[f64], subset: &[usize]) -> Result<f64> {
    chain.check_levels(d)?;
    if subset.is_empty() {
        return Err(Error::Domain("subset of constrained decoders is empty".into()));
    }
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    for &k in &idx {
        chain.check_index(k)?;
    }
    let vx = chain.var_x;
    let s: Vec<f64> = idx.iter().map(|&k| chain.cumulative[k]).collect();
    let level = |l: usize| d[idx[l]].min(mmse(&[vx, s[l]]));
    let m = idx.len();
    let mut total = (mmse(&[vx, s[m - 1]]) / level(0)).log2();
    for l in 1..m {
        let inc = s[l] - s[l - 1];
        let gamma = s[l - 1] / s[l];
        let k = s[l - 1] * inc / s[l];
        let dhat = (1.0 - gamma).powi(2) * (level(l) + s[l - 1]) + gamma * gamma * inc;
        total += (k / dhat).log2();
    }
    Ok(0.5 * total)
}

/// Heegard-Berger rate and its active set.
pub fn hb_rate_gaussian(chain: &GaussianChain, d: &[f64]) -> Result<(f64, Vec<usize>)> {
    let w = construct_w_star(chain, d)?;
    let rate = hb_lower_bound_subset(chain, d, &w.active)?;
    Ok((rate.max(0.0), w.active))
}

/// The same rate as the telescoping sum of conditional mutual informations
/// of the constructed auxiliaries.
pub fn hb_rate_mutual_information(chain: &GaussianChain, d: &[f64]) -> Result<f64> {
    let w = construct_w_star(chain, d)?;
    let vx = chain.var_x;
    let a = &w.active;
    let mut total = 0.0;
    for (j, &k) in a.iter().enumerate() {
        let s = chain.cumulative[k];
        let t_next = a.get(j + 1).map_or(f64::INFINITY, |&n| w.test_noise[n]);
        total += 0.5 * (mmse(&[vx, s, t_next]) / mmse(&[vx, s, w.test_noise[k]])).log2();
    }
    Ok(total)
}

/// Cell rates `R[i][j]` of the rank × side-information grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverGrid {
    /// `cells[i][j]`: rank `i`, side-information level `j`.
    pub cells: Vec<Vec<f64>>,
    pub construction: WStarConstruction,
}

impl CoverGrid {
    /// Cells covered by decoder `k`: ranks at or above its own, levels up to `k`.
    fn covers(&self, k: usize, i: usize, j: usize) -> bool {
        i >= self.construction.rank[k] && j <= k
    }

    /// Total rate of the union of the rectangles of `decoders`.
    pub fn covered_rate(&self, decoders: &[usize]) -> f64 {
        let n = self.cells.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if decoders.iter().any(|&k| self.covers(k, i, j)) {
                    total += self.cells[i][j];
                }
            }
        }
        total
    }

    /// `Σ_{j ≤ k} R[i][j]`.
    pub fn column_prefix(&self, i: usize, k: usize) -> f64 {
        self.cells[i][..=k].iter().sum()
    }
}

pub fn cover_grid(chain: &GaussianChain, d: &[f64]) -> Result<CoverGrid> {
    let w = construct_w_star(chain, d)?;
    let n = chain.len();
    let vx = chain.var_x;
    let sorted: Vec<f64> = (0..n).map(|r| w.test_noise[w.decoder_at_rank(r)]).collect();
    // I(W_(i); X | Y_j, W_(i+1)) with Y_{-1} = X, so the value at level -1 is zero.
    let slice = |i: usize, j: usize| -> f64 {
        let s = chain.cumulative[j];
        let next = sorted.get(i + 1).copied().unwrap_or(f64::INFINITY);
        0.5 * (mmse(&[vx, s, next]) / mmse(&[vx, s, sorted[i]])).log2()
    };
    let mut cells = vec![vec![0.0; n]; n];
    for (i, row) in cells.iter_mut().enumerate() {
        let mut prev = 0.0;
        for (j, cell) in row.iter_mut().enumerate() {
            let cur = slice(i, j);
            *cell = (cur - prev).max(0.0);
            prev = cur;
        }
    }
    Ok(CoverGrid { cells, construction: w })
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Domain(format!("order has {} entries for {n} decoders", order.len())));
    }
    for &k in order {
        if k >= n || seen[k] {
            return Err(Error::Domain(format!("order {order:?} is not a permutation")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Per-stage rates when the decoders are served in the order `order`:
/// stage `k` pays for the grid area its rectangle adds to the already
/// covered area.
pub fn scalable_rates(chain: &GaussianChain, d: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    check_permutation(order, chain.len())?;
    let grid = cover_grid(chain, d)?;
    let mut out = Vec::with_capacity(order.len());
    let mut covered = 0.0;
    for k in 1..=order.len() {
        let area = grid.covered_rate(&order[..k]);
        out.push((area - covered).max(0.0));
        covered = covered.max(area);
    }
    Ok(out)
}

/// Heegard-Berger rate with only the decoders in `subset` constrained.
pub fn hb_rate_prefix(chain: &GaussianChain, d: &[f64], subset: &[usize]) -> Result<f64> {
    chain.check_levels(d)?;
    let mut dd = vec![f64::INFINITY; chain.len()];
    for &k in subset {
        chain.check_index(k)?;
        dd[k] = d[k];
    }
    Ok(hb_rate_gaussian(chain, &dd)?.0)
}

/// Stage-by-stage perfect-scalability check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityReport {
    /// `stages[k]`: whether the prefix rate equals the Wyner-Ziv rate of decoder `order[k]`.
    pub stages: Vec<bool>,
    pub first_violation: Option<usize>,
}

impl ScalabilityReport {
    pub fn all(&self) -> bool {
        self.first_violation.is_none()
    }
}

pub fn perfect_scalability_gaussian(chain: &GaussianChain, d: &[f64], order: &[usize]) -> Result<ScalabilityReport> {
    chain.check_levels(d)?;
    check_permutation(order, chain.len())?;
    let mut stages = Vec::with_capacity(order.len());
    for k in 0..order.len() {
        let hb = hb_rate_prefix(chain, d, &order[..=k])?;
        let wz = chain.wz_rate(order[k], d[order[k]])?;
        stages.push((hb - wz).abs() <= 1e-9);
    }
    let first_violation = stages.iter().position(|s| !s);
    Ok(ScalabilityReport { stages, first_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (GaussianChain, Vec<f64>) {
        let vx = rng.gen_range(0.5..3.0);
        let inc: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let chain = GaussianChain::new(vx, inc).unwrap();
        let d = (0..n)
            .map(|k| chain.conditional_variance(k).unwrap() * rng.gen_range(0.05..1.2))
            .collect();
        (chain, d)
    }

    /// Generic conditional mutual information of jointly Gaussian scalars,
    /// from covariance determinants.
    fn gaussian_cmi(cov: &[Vec<f64>], a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        fn logdet(cov: &[Vec<f64>], idx: &[usize]) -> f64 {
            let n = idx.len();
            if n == 0 {
                return 0.0;
            }
            let mut m: Vec<Vec<f64>> = idx.iter().map(|&i| idx.iter().map(|&j| cov[i][j]).collect()).collect();
            let mut ld = 0.0;
            for col in 0..n {
                let piv = m[col][col];
                ld += piv.ln();
                for r in col + 1..n {
                    let f = m[r][col] / piv;
                    for c2 in col..n {
                        m[r][c2] -= f * m[col][c2];
                    }
                }
            }
            ld
        }
        let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).cloned().collect() };
        let ac = cat(a, c);
        let bc = cat(b, c);
        let abc = cat(&ac, b);
        0.5 * (logdet(cov, &ac) + logdet(cov, &bc) - logdet(cov, &abc) - logdet(cov, c)) / std::f64::consts::LN_2
    }

    #[test]
    fn chain_json_round_trip() {
        let c = GaussianChain::new(1.5, vec![0.2, 0.3]).unwrap();
        let back: GaussianChain = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<GaussianChain>(r#"{"var_x":1,"noise_increments":[-1]}"#).is_err());
    }

    #[test]
    fn conditional_variance_examples() {
        let c = GaussianChain::new(1.0, vec![1.0]).unwrap();
        assert!((c.conditional_variance(0).unwrap() - 0.5).abs() < 1e-15);
        let far = GaussianChain::new(2.0, vec![2.0 * NO_SIDE_INFO_SCALE]).unwrap();
        assert!((far.conditional_variance(0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_variance_matches_sampling() {
        let c = GaussianChain::new(1.5, vec![0.7, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut sxy, mut syy, mut sxx) = (0.0, 0.0, 0.0);
        let gauss = |rng: &mut ChaCha8Rng| -> f64 {
            let u: f64 = rng.gen::<f64>().max(1e-300);
            let v: f64 = rng.gen();
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        };
        for _ in 0..n {
            let x = 1.5f64.sqrt() * gauss(&mut rng);
            let y = x + 0.7f64.sqrt() * gauss(&mut rng) + 0.4f64.sqrt() * gauss(&mut rng);
            sxy += x * y;
            syy += y * y;
            sxx += x * x;
        }
        let mse = (sxx - sxy * sxy / syy) / n as f64;
        let exact = c.conditional_variance(1).unwrap();
        assert!((mse - exact).abs() / exact < 5e-3, "{mse} vs {exact}");
    }

    #[test]
    fn test_noise_examples() {
        let c = GaussianChain::new(1.0, vec![1.0]).unwrap();
        assert!((c.solve_test_noise(0, 0.25).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c.solve_test_noise(0, 0.5).unwrap(), f64::INFINITY);
        assert_eq!(c.solve_test_noise(0, 0.9).unwrap(), f64::INFINITY);
        assert!(c.solve_test_noise(0, 0.0).is_err());
        let t = c.solve_test_noise(0, 0.3).unwrap();
        assert!((mmse(&[1.0, 1.0, t]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn construction_invariants() {
        let c = GaussianChain::new(1.0, vec![0.5]).unwrap();
        let w = construct_w_star(&c, &[0.2]).unwrap();
        assert_eq!((w.rank.clone(), w.active.clone()), (vec![0], vec![0]));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let (chain, d) = random_instance(&mut rng, n);
            let w = construct_w_star(&chain, &d).unwrap();
            assert!(w.increments.iter().all(|v| *v >= 0.0));
            for k in 0..n {
                let s: f64 = w.increments[..=w.rank[k]].iter().sum();
                let t = w.test_noise[k];
                assert!(t.is_infinite() && s.is_infinite() || (s - t).abs() <= 1e-9 * t);
            }
        }
    }

    #[test]
    fn equal_distortions_activate_only_the_weakest_decoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..6);
            let (chain, _) = random_instance(&mut rng, n);
            let level = chain.conditional_variance(0).unwrap() * 0.3;
            let w = construct_w_star(&chain, &vec![level; n]).unwrap();
            for k in 1..n {
                assert!(w.test_noise[k] < w.test_noise[k - 1]);
            }
            assert_eq!(w.active, vec![n - 1]);
        }
    }

    #[test]
    fn singleton_subset_is_wyner_ziv() {
        let chain = GaussianChain::new(2.0, vec![0.3, 0.9, 1.4]).unwrap();
        let d = [0.1, 0.2, 0.3];
        for k in 0..3 {
            let b = hb_lower_bound_subset(&chain, &d, &[k]).unwrap();
            assert!((b - chain.wz_rate(k, d[k]).unwrap()).abs() < 1e-12);
        }
        assert!(hb_lower_bound_subset(&chain, &d, &[]).is_err());
    }

    #[test]
    fn full_set_at_threshold_is_free() {
        let chain = GaussianChain::new(1.3, vec![0.4, 0.8, 0.2]).unwrap();
        let d: Vec<f64> = (0..3).map(|k| chain.conditional_variance(k).unwrap()).collect();
        assert!(hb_lower_bound_subset(&chain, &d, &[0, 1, 2]).unwrap().abs() < 1e-12);
        assert_eq!(hb_rate_gaussian(&chain, &d).unwrap().0, 0.0);
    }

    #[test]
    fn active_set_rate_is_subset_max_and_matches_telescoping() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..60 {
            let n = rng.gen_range(1..6);
            let (chain, d) = random_instance(&mut rng, n);
            let (rate, _) = hb_rate_gaussian(&chain, &d).unwrap();
            let mut best = 0.0f64;
            for mask in 1..(1usize << n) {
                let s: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
                best = best.max(hb_lower_bound_subset(&chain, &d, &s).unwrap());
            }
            assert!((rate - best).abs() < 1e-9, "{rate} vs {best}");
            assert!((rate - hb_rate_mutual_information(&chain, &d).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_requirements_collapse_to_one_decoder() {
        // Decreasing targets along the chain: the last decoder's auxiliary serves everyone.
        let chain = GaussianChain::new(1.0, vec![0.5, 0.5, 0.5]).unwrap();
        let d = [0.3, 0.2, 0.1];
        let w = construct_w_star(&chain, &d).unwrap();
        assert_eq!(w.active, vec![2]);
        assert!((hb_rate_gaussian(&chain, &d).unwrap().0 - chain.wz_rate(2, 0.1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn grid_cells_match_generic_gaussian_information() {
        let chain = GaussianChain::new(1.2, vec![0.6, 0.9, 1.1]).unwrap();
        let d = [0.2, 0.35, 0.3];
        let grid = cover_grid(&chain, &d).unwrap();
        let w = &grid.construction;
        // Variables: X, Y_0..Y_2, then W in rank order.
        let n = 3;
        let sorted: Vec<f64> = (0..n).map(|r| w.test_noise[w.decoder_at_rank(r)]).collect();
        assert!(sorted.iter().all(|t| t.is_finite()));
        let dim = 1 + 2 * n;
        let mut cov = vec![vec![chain.var_x(); dim]; dim];
        for a in 0..n {
            for b in 0..n {
                cov[1 + a][1 + b] += chain.cumulative(a.min(b));
                cov[1 + n + a][1 + n + b] += sorted[a.min(b)];
            }
        }
        for i in 0..n {
            for j in 0..n {
                // Level j - 1 of the chain, with X standing in below level 0.
                let prev_var = if j == 0 { 0 } else { j };
                let mut cond = vec![1 + j];
                if i + 1 < n {
                    cond.push(1 + n + i + 1);
                }
                let expect = gaussian_cmi(&cov, &[1 + n + i], &[prev_var], &cond);
                assert!((grid.cells[i][j] - expect).abs() < 1e-9, "cell {i},{j}");
            }
        }
        for i in 0..n {
            for k in 0..n {
                let mut cond = vec![1 + k];
                if i + 1 < n {
                    cond.push(1 + n + i + 1);
                }
                let expect = gaussian_cmi(&cov, &[1 + n + i], &[0], &cond);
                assert!((grid.column_prefix(i, k) - expect).abs() < 1e-9);
            }
        }
        let all: Vec<usize> = (0..n).collect();
        let (rate, _) = hb_rate_gaussian(&chain, &d).unwrap();
        assert!((grid.covered_rate(&all) - rate).abs() < 1e-9);
    }

    #[test]
    fn scalable_rates_follow_prefix_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let n = rng.gen_range(2..5);
            let (chain, d) = random_instance(&mut rng, n);
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let r = scalable_rates(&chain, &d, &order).unwrap();
            let mut acc = 0.0;
            for k in 0..n {
                acc += r[k];
                let hb = hb_rate_prefix(&chain, &d, &order[..=k]).unwrap();
                assert!((acc - hb).abs() < 1e-9, "{acc} vs {hb}");
            }
        }
        assert!(scalable_rates(&GaussianChain::new(1.0, vec![1.0, 1.0]).unwrap(), &[0.3, 0.3], &[0, 0]).is_err());
    }

    #[test]
    fn covered_stage_needs_no_rate() {
        // Decoder 0 asks for less than decoder 1 already delivers.
        let chain = GaussianChain::new(1.0, vec![0.5, 0.5]).unwrap();
        let d = [0.3, 0.1];
        let r = scalable_rates(&chain, &d, &[1, 0]).unwrap();
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn perfect_scalability_cases() {
        let one = GaussianChain::new(1.0, vec![0.7]).unwrap();
        assert!(perfect_scalability_gaussian(&one, &[0.2], &[0]).unwrap().all());
        let chain = GaussianChain::new(1.0, vec![0.3, 0.6, 1.0]).unwrap();
        assert!(perfect_scalability_gaussian(&chain, &[0.1; 3], &[0, 1, 2]).unwrap().all());
        // A demanding first stage makes the second stage pay more than its own Wyner-Ziv rate.
        let rep = perfect_scalability_gaussian(&chain, &[0.05, 0.2, 0.2], &[0, 1, 2]).unwrap();
        assert!(!rep.all());
        assert_eq!(rep.first_violation, Some(1));
    }
}
