//! Multi-start pattern search over products of probability simplices.
//!
//! A point is a flat vector made of rows; each row is a probability vector.
//! Candidates are ranked lexicographically by constraint violation and then
//! by objective value, so feasible points always beat infeasible ones and a
//! returned point with zero violation is primal-feasible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Slack added to every inequality constraint.
pub const CONSTRAINT_SLACK: f64 = 1e-12;

/// Most constraints a score tracks individually.
pub const MAX_CONSTRAINTS: usize = 4;

/// Objective value plus total constraint violation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub violation: f64,
    pub value: f64,
    /// Signed gaps `achieved - bound - slack`; only the first `n_gaps` are used.
    gaps: [f64; MAX_CONSTRAINTS],
    n_gaps: usize,
}

impl Score {
    pub fn unconstrained(value: f64) -> Score {
        Score { violation: 0.0, value, gaps: [0.0; MAX_CONSTRAINTS], n_gaps: 0 }
    }

    /// Builds a score from an objective and `(achieved, bound)` pairs.
    pub fn from_constraints(value: f64, constraints: &[(f64, f64)]) -> Score {
        assert!(constraints.len() <= MAX_CONSTRAINTS, "too many constraints");
        let mut gaps = [0.0; MAX_CONSTRAINTS];
        let mut violation = 0.0;
        for (g, (got, bound)) in gaps.iter_mut().zip(constraints) {
            *g = got - bound - CONSTRAINT_SLACK;
            violation += g.max(0.0);
        }
        Score { violation, value, gaps, n_gaps: constraints.len() }
    }

    pub fn feasible(&self) -> bool {
        self.violation == 0.0
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps[..self.n_gaps]
    }

    pub fn better_than(&self, other: &Score) -> bool {
        if self.violation < other.violation - 1e-15 {
            return true;
        }
        if self.violation > other.violation + 1e-15 {
            return false;
        }
        self.value < other.value - 1e-14
    }

    /// Augmented Lagrangian for inequality constraints.
    fn merit(&self, mu: &[f64; MAX_CONSTRAINTS], rho: f64) -> f64 {
        let mut m = self.value;
        for (g, u) in self.gaps().iter().zip(mu) {
            let t = (u + rho * g).max(0.0);
            m += (t * t - u * u) / (2.0 * rho);
        }
        m
    }
}

/// Row structure of the search space.
#[derive(Clone, Debug)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(sizes: Vec<usize>) -> Layout {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Layout { sizes, offsets, len: acc }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn rows(&self) -> usize {
        self.sizes.len()
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r] + self.sizes[r]
    }

    /// Number of deterministic points (every row a vertex), saturating.
    pub fn vertex_count(&self) -> usize {
        self.sizes.iter().fold(1usize, |acc, s| acc.saturating_mul(*s))
    }

    /// The `idx`-th deterministic point in mixed-radix order.
    pub fn vertex(&self, mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for r in 0..self.rows() {
            let s = self.sizes[r];
            x[self.offsets[r] + idx % s] = 1.0;
            idx /= s;
        }
        x
    }

    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        let vertex_rows = rng.gen_bool(0.5);
        for r in 0..self.rows() {
            let range = self.row_range(r);
            if vertex_rows && rng.gen_bool(0.5) {
                let k = rng.gen_range(0..self.sizes[r]);
                x[range.start + k] = 1.0;
            } else {
                let mut total = 0.0;
                for i in range.clone() {
                    let e: f64 = -rng.gen::<f64>().max(1e-300).ln();
                    x[i] = e;
                    total += e;
                }
                for i in range {
                    x[i] /= total;
                }
            }
        }
        x
    }
}

/// Settings for one local search.
#[derive(Clone, Debug)]
pub struct SearchSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_sweeps: usize,
    pub random_directions: usize,
    /// Augmented-Lagrangian rounds after the first descent (constrained objectives only).
    pub lagrangian_rounds: usize,
}

/// Result of a search.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub point: Vec<f64>,
    pub score: Score,
    pub start_index: usize,
}

fn clean_row(x: &mut [f64]) {
    let mut total = 0.0;
    for v in x.iter_mut() {
        if *v < 1e-16 {
            *v = 0.0;
        }
        total += *v;
    }
    if total > 0.0 {
        for v in x.iter_mut() {
            *v /= total;
        }
    }
}

/// Best point seen under the lexicographic order, whatever order drives the search.
struct Record {
    point: Vec<f64>,
    score: Score,
}

impl Record {
    fn offer(&mut self, x: &[f64], s: &Score) {
        if s.better_than(&self.score) {
            self.score = *s;
            self.point.copy_from_slice(x);
        }
    }
}

/// Coordinate-transfer pattern search with random directions, started at `x0`.
///
/// A lexicographic descent is followed, for constrained objectives, by a few
/// rounds of augmented-Lagrangian descent (which can slide along active
/// constraints) and a final lexicographic polish. The best point seen under
/// the lexicographic order is returned.
pub fn local_search<F>(f: &F, layout: &Layout, x0: Vec<f64>, settings: &SearchSettings, rng: &mut ChaCha8Rng) -> (Vec<f64>, Score)
where
    F: Fn(&[f64]) -> Score,
{
    let s0 = f(&x0);
    let mut rec = Record { point: x0.clone(), score: s0 };
    let lex = |a: &Score, b: &Score| a.better_than(b);
    let (mut x, mut cur) =
        descend(f, layout, x0, s0, settings.initial_step, settings.max_sweeps, settings, rng, &lex, &mut rec);
    if cur.n_gaps == 0 || settings.lagrangian_rounds == 0 {
        return (rec.point, rec.score);
    }
    let mut mu = [0.0; MAX_CONSTRAINTS];
    let mut rho = 8.0;
    let sweeps = (settings.max_sweeps / 8).max(10);
    let mut step = settings.initial_step / 4.0;
    for _ in 0..settings.lagrangian_rounds {
        // Estimate multipliers from the current point before moving.
        for (u, g) in mu.iter_mut().zip(cur.gaps()) {
            *u = (*u + rho * g).max(0.0);
        }
        if mu.iter().all(|u| *u == 0.0) {
            mu.iter_mut().take(cur.n_gaps).for_each(|u| *u = 1.0);
        }
        let (m, r) = (mu, rho);
        let al = move |a: &Score, b: &Score| a.merit(&m, r) < b.merit(&m, r) - 1e-14;
        let before = cur.violation;
        (x, cur) = descend(f, layout, x, cur, step, sweeps, settings, rng, &al, &mut rec);
        if cur.violation > 0.25 * before && cur.violation > 1e-9 {
            rho *= 4.0;
        }
        step = (step * 0.5).max(settings.min_step * 16.0);
    }
    let start = rec.point.clone();
    let s = rec.score;
    descend(f, layout, start, s, step, settings.max_sweeps, settings, rng, &lex, &mut rec);
    (rec.point, rec.score)
}

#[allow(clippy::too_many_arguments)]
fn descend<F, B>(
    f: &F,
    layout: &Layout,
    x0: Vec<f64>,
    s0: Score,
    initial_step: f64,
    max_sweeps: usize,
    settings: &SearchSettings,
    rng: &mut ChaCha8Rng,
    better: &B,
    rec: &mut Record,
) -> (Vec<f64>, Score)
where
    F: Fn(&[f64]) -> Score,
    B: Fn(&Score, &Score) -> bool,
{
    let mut x = x0;
    let mut best = s0;
    let mut step = initial_step;
    let mut trial = x.clone();
    let n_transfers: usize = (0..layout.rows()).map(|r| layout.sizes[r] * (layout.sizes[r] - 1)).sum();
    let pair_moves = n_transfers > 0 && n_transfers <= 24;
    let mut sweeps = 0;
    while sweeps < max_sweeps && step >= settings.min_step {
        sweeps += 1;
        let mut improved = false;

        for r in 0..layout.rows() {
            let range = layout.row_range(r);
            for a in range.clone() {
                for b in range.clone() {
                    if a == b || x[a] <= 0.0 {
                        continue;
                    }
                    for full in [false, true] {
                        if x[a] <= 0.0 || (full && x[a] <= step) {
                            continue;
                        }
                        let amt = if full { x[a] } else { step.min(x[a]) };
                        trial.copy_from_slice(&x);
                        trial[a] -= amt;
                        trial[b] += amt;
                        if trial[a] < 1e-16 {
                            trial[a] = 0.0;
                        }
                        let s = f(&trial);
                        rec.offer(&trial, &s);
                        if better(&s, &best) {
                            best = s;
                            x.copy_from_slice(&trial);
                            improved = true;
                        }
                    }
                }
            }
        }

        if pair_moves {
            let mut singles = Vec::new();
            for r in 0..layout.rows() {
                let range = layout.row_range(r);
                for a in range.clone() {
                    for b in range.clone() {
                        if a != b {
                            singles.push((r, a, b));
                        }
                    }
                }
            }
            for i in 0..singles.len() {
                for j in 0..singles.len() {
                    let (r1, a1, b1) = singles[i];
                    let (r2, a2, b2) = singles[j];
                    if r1 >= r2 {
                        continue;
                    }
                    for scale in [1.0, 0.5, 2.0] {
                        let amt2 = step * scale;
                        if x[a1] < step || x[a2] < amt2 {
                            continue;
                        }
                        trial.copy_from_slice(&x);
                        trial[a1] -= step;
                        trial[b1] += step;
                        trial[a2] -= amt2;
                        trial[b2] += amt2;
                        let s = f(&trial);
                        rec.offer(&trial, &s);
                        if better(&s, &best) {
                            best = s;
                            x.copy_from_slice(&trial);
                            improved = true;
                        }
                    }
                }
            }
        }

        for _ in 0..settings.random_directions {
            let mut dir = vec![0.0; layout.len()];
            let mut any = false;
            for r in 0..layout.rows() {
                if layout.sizes[r] < 2 || (any && rng.gen_bool(0.5)) {
                    continue;
                }
                any = true;
                let range = layout.row_range(r);
                let mut mean = 0.0;
                for i in range.clone() {
                    dir[i] = rng.gen::<f64>() * 2.0 - 1.0;
                    mean += dir[i];
                }
                mean /= layout.sizes[r] as f64;
                for i in range {
                    dir[i] -= mean;
                }
            }
            let norm = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm == 0.0 {
                continue;
            }
            let scale = step * rng.gen_range(0.25..1.0) / norm;
            for sign in [1.0, -1.0] {
                let mut alpha = scale;
                for i in 0..layout.len() {
                    let d = sign * dir[i];
                    if d < 0.0 && x[i] + alpha * d < 0.0 {
                        alpha = x[i] / -d;
                    }
                }
                if alpha < 1e-3 * scale {
                    continue;
                }
                for i in 0..layout.len() {
                    trial[i] = (x[i] + alpha * sign * dir[i]).max(0.0);
                }
                for r in 0..layout.rows() {
                    clean_row(&mut trial[layout.row_range(r)]);
                }
                let s = f(&trial);
                rec.offer(&trial, &s);
                if better(&s, &best) {
                    best = s;
                    x.copy_from_slice(&trial);
                    improved = true;
                    break;
                }
            }
        }

        if !improved {
            step *= 0.5;
        }
    }
    (x, best)
}

/// Derives the stream seed of a start from the master seed and its index.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Multi-start driver: searches from each seed point, from the best
/// deterministic vertices when the vertex set is small, and from
/// `random_starts` random points. Deterministic for a fixed `seed`.
pub struct MultiStart<'a> {
    pub layout: &'a Layout,
    pub settings: SearchSettings,
    pub seeds: Vec<Vec<f64>>,
    pub random_starts: usize,
    pub vertex_limit: usize,
    pub vertex_starts: usize,
    pub seed: u64,
}

impl MultiStart<'_> {
    pub fn run<F>(&self, f: &F) -> SearchOutcome
    where
        F: Fn(&[f64]) -> Score + Sync,
    {
        let mut starts: Vec<Vec<f64>> = self.seeds.clone();
        let count = self.layout.vertex_count();
        if count <= self.vertex_limit && self.vertex_starts > 0 {
            let scored: Vec<(usize, Score)> = (0..count).map(|i| (i, f(&self.layout.vertex(i)))).collect();
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&i, &j| {
                let (a, b) = (scored[i].1, scored[j].1);
                if a.better_than(&b) {
                    std::cmp::Ordering::Less
                } else if b.better_than(&a) {
                    std::cmp::Ordering::Greater
                } else {
                    i.cmp(&j)
                }
            });
            for &i in order.iter().take(self.vertex_starts) {
                starts.push(self.layout.vertex(scored[i].0));
            }
        }
        let n_fixed = starts.len();
        let total = n_fixed + self.random_starts;
        let outcomes: Vec<SearchOutcome> = (0..total)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, i as u64));
                let x0 = if i < n_fixed { starts[i].clone() } else { self.layout.random_point(&mut rng) };
                let (point, score) = local_search(f, self.layout, x0, &self.settings, &mut rng);
                SearchOutcome { point, score, start_index: i }
            })
            .collect();
        pick_best(outcomes)
    }
}

/// Lexicographic minimum; ties go to the lowest start index.
pub fn pick_best(outcomes: Vec<SearchOutcome>) -> SearchOutcome {
    let mut best: Option<SearchOutcome> = None;
    for o in outcomes {
        best = match best {
            None => Some(o),
            Some(b) => {
                if o.score.better_than(&b.score) {
                    Some(o)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.expect("at least one start")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simplex_minimum_of_linear_objective() {
        let layout = Layout::new(vec![3, 2]);
        let f = |x: &[f64]| Score::unconstrained(2.0 * x[0] + x[1] + 3.0 * x[2] + x[3] - x[4]);
        let ms = MultiStart {
            layout: &layout,
            settings: SearchSettings { initial_step: 0.25, min_step: 1e-6, max_sweeps: 200, random_directions: 2, lagrangian_rounds: 4 },
            seeds: vec![],
            random_starts: 3,
            vertex_limit: 0,
            vertex_starts: 0,
            seed: 7,
        };
        let out = ms.run(&f);
        assert!((out.score.value - 0.0).abs() < 1e-9);
        assert!((out.point[1] - 1.0).abs() < 1e-9 && (out.point[4] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constrained_search_stays_feasible() {
        let layout = Layout::new(vec![2]);
        let f = |x: &[f64]| Score::from_constraints(x[0], &[(x[1], 0.3)]);
        let ms = MultiStart {
            layout: &layout,
            settings: SearchSettings { initial_step: 0.25, min_step: 1e-9, max_sweeps: 500, random_directions: 2, lagrangian_rounds: 4 },
            seeds: vec![vec![1.0, 0.0]],
            random_starts: 2,
            vertex_limit: 8,
            vertex_starts: 2,
            seed: 1,
        };
        let out = ms.run(&f);
        assert!(out.score.feasible());
        assert!((out.score.value - 0.7).abs() < 1e-6);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let layout = Layout::new(vec![3, 3]);
        let f = |x: &[f64]| Score::unconstrained((x[0] - 0.3).powi(2) + (x[4] - 0.6).powi(2) + x[2] * x[5]);
        let mk = || MultiStart {
            layout: &layout,
            settings: SearchSettings { initial_step: 0.1, min_step: 1e-5, max_sweeps: 50, random_directions: 4, lagrangian_rounds: 0 },
            seeds: vec![],
            random_starts: 4,
            vertex_limit: 0,
            vertex_starts: 0,
            seed: 99,
        };
        let a = mk().run(&f);
        let b = mk().run(&f);
        assert_eq!(a.point, b.point);
        assert_eq!(a.start_index, b.start_index);
    }

    #[test]
    fn vertices_enumerate_in_mixed_radix() {
        let layout = Layout::new(vec![2, 3]);
        assert_eq!(layout.vertex_count(), 6);
        assert_eq!(layout.vertex(0), vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(layout.vertex(5), vec![0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
