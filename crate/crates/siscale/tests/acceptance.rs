//! Acceptance criteria. Each test prints one `ACn PASS|FAIL` line with the
//! numbers behind the verdict and then asserts it. Reference values come
//! from oracles written here, independently of the library code paths.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use siscale::binsim::{self, CodebookSpec};
use siscale::dsbs;
use siscale::gaussian::{self, GaussianChain};
use siscale::probcore::{DistortionMeasure, JointSource, Matrix};
use siscale::rateloss::{self, MseInstance, MseSource};
use siscale::rdopt::{self, AuxChannel, DecoderTable, OptimizerConfig};
use siscale::regions::{self, Certificate, Instance, LosslessMode, RegionGrid};

fn verdict(id: &str, pass: bool, detail: &str) {
    println!("{id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}

fn h2(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        -u * u.log2() - (1.0 - u) * (1.0 - u).log2()
    }
}

fn star(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + b * (1.0 - a)
}

fn g_oracle(p: f64, u: f64) -> f64 {
    h2(star(p, u)) - h2(u)
}

/// Lower convex envelope of `G` joined to `(p, 0)`, by brute force over chords.
fn wz_oracle(p: f64, d: f64) -> f64 {
    if d >= p {
        return 0.0;
    }
    let mut best = g_oracle(p, d);
    let steps = 20_000;
    for i in 0..steps {
        let u = d * i as f64 / steps as f64;
        best = best.min(g_oracle(p, u) * (p - d) / (p - u));
    }
    best
}

/// `H(A | B)` from a joint table `p[a][b]`.
fn cond_entropy(p: &[Vec<f64>]) -> f64 {
    let nb = p[0].len();
    let mut h = 0.0;
    for b in 0..nb {
        let pb: f64 = p.iter().map(|r| r[b]).sum();
        for r in p {
            if r[b] > 0.0 {
                h -= r[b] * (r[b] / pb).log2();
            }
        }
    }
    h
}

fn random_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let v: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn random_source(rng: &mut ChaCha8Rng, nx: usize, n1: usize, n2: usize) -> JointSource {
    let px: Vec<f64> = random_stochastic(rng, 1, nx).remove(0);
    let ch = random_stochastic(rng, nx, n1);
    let joint: Vec<Vec<f64>> = (0..nx).map(|x| (0..n1).map(|y| px[x] * ch[x][y]).collect()).collect();
    let deg = random_stochastic(rng, n1, n2);
    JointSource::new(Matrix::from_rows(&joint).unwrap(), Matrix::from_rows(&deg).unwrap()).unwrap()
}

fn light() -> OptimizerConfig {
    OptimizerConfig { restarts: 2, descent_iterations: 200, aux_cap: Some(3), ..Default::default() }
}

#[test]
fn ac01_dsbs_cascade_closed_form() {
    let t = Instant::now();
    let p = 0.25;
    let src = JointSource::dsbs(p).unwrap();
    let ham = DistortionMeasure::hamming(2);
    let dc = dsbs::critical_distortion(p).unwrap();
    let cfg = light();
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d1 = dc * (0.2 + 0.35 * i as f64);
            let d2 = d1 + (0.45 - d1) * (0.1 + 0.4 * j as f64);
            let got = rdopt::heegard_berger_rate(&src, &ham, &ham, d1, d2, &cfg).unwrap().rate;
            let want = 1.0 - h2(star(d2, p)) + g_oracle(p, d1);
            worst = worst.max((got - want).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict("AC1", worst <= 0.01 && secs <= 300.0, &format!("9 points, max |err| = {worst:.2e} bits, {secs:.1} s"));
}

#[test]
fn ac02_wyner_ziv_dsbs() {
    let p = 0.25;
    let src = JointSource::dsbs(p).unwrap();
    let ham = DistortionMeasure::hamming(2);
    let dc = dsbs::critical_distortion(p).unwrap();
    let cfg = OptimizerConfig { aux_cap: Some(3), ..Default::default() };
    let mut worst_curve: f64 = 0.0;
    let mut worst_line: f64 = 0.0;
    for k in 1..=5 {
        let d = dc * k as f64 / 5.0;
        let got = rdopt::wyner_ziv_rate(&src, &ham, d, &cfg).unwrap().rate;
        worst_curve = worst_curve.max((got - g_oracle(p, d)).abs());
    }
    for k in 1..=4 {
        let d = dc + (p - dc) * k as f64 / 5.0;
        let got = rdopt::wyner_ziv_rate(&src, &ham, d, &cfg).unwrap().rate;
        worst_line = worst_line.max((got - wz_oracle(p, d)).abs());
        // The closed form agrees with the brute-force envelope.
        assert!((dsbs::wz_dsbs(p, d).unwrap() - wz_oracle(p, d)).abs() < 1e-6);
    }
    verdict(
        "AC2",
        worst_curve <= 0.01 && worst_line <= 0.01,
        &format!("d_c = {dc:.5}; max |err| on G = {worst_curve:.2e}, on time-sharing line = {worst_line:.2e}"),
    );
}

#[test]
fn ac03_lossless_corners() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let src = random_source(&mut rng, 3, 3, 2);
    let ham = DistortionMeasure::hamming(3);
    let cfg = OptimizerConfig { aux_cap: Some(4), restarts: 2, ..Default::default() };
    let pxy = src.px_y1();
    let rows: Vec<Vec<f64>> = (0..3).map(|x| (0..3).map(|y| pxy.get(x, y)).collect()).collect();
    let h_x_y1 = cond_entropy(&rows);
    let level2 = 0.5 * rdopt::zero_rate_distortion(&src, siscale::probcore::Side::Second, &ham);
    let region = regions::lossless_region(&src, LosslessMode::First, &ham, &ham, level2, &cfg).unwrap();
    let corner = region.points[0].r1;
    let hb = rdopt::heegard_berger_rate(&src, &ham, &ham, 0.0, level2, &cfg).unwrap().rate;
    let lf = rdopt::hb_lossless_first(&src, &ham, level2, &cfg).unwrap().rate;
    let pass = (corner - h_x_y1).abs() <= 1e-9 && (hb - lf).abs() <= cfg.tolerance;
    verdict(
        "AC3",
        pass,
        &format!(
            "corner r1 - H(X|Y1) = {:.1e}; R_HB(0, D2) = {hb:.5}, lossless-first = {lf:.5} (tol {})",
            corner - h_x_y1,
            cfg.tolerance
        ),
    );
}

#[test]
fn ac04_deterministic_distortion() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let nx = rng.gen_range(2..=4);
        let (n1, n2) = (rng.gen_range(2..=3), rng.gen_range(1..=2));
        let src = random_source(&mut rng, nx, n1, n2);
        // Z1 = q1(X) with every value used, Z2 = g(Z1).
        let nz1 = rng.gen_range(2..=nx);
        let mut q1: Vec<usize> = (0..nx).map(|x| if x < nz1 { x } else { rng.gen_range(0..nz1) }).collect();
        q1.rotate_left(rng.gen_range(0..nx));
        let g: Vec<usize> = (0..nz1).map(|z| if z == 0 { 0 } else { rng.gen_range(0..2) }).collect();
        let q2: Vec<usize> = q1.iter().map(|&z| g[z]).collect();
        // Oracle from the joint of (Z1, Z2, Y1, Y2).
        let mut p = vec![vec![vec![vec![0.0; n2]; n1]; 2]; nz1];
        for x in 0..nx {
            for y1 in 0..n1 {
                for y2 in 0..n2 {
                    p[q1[x]][q2[x]][y1][y2] += src.p(x, y1, y2);
                }
            }
        }
        let z2y2: Vec<Vec<f64>> =
            (0..2).map(|z2| (0..n2).map(|y2| (0..nz1).map(|z1| (0..n1).map(|y1| p[z1][z2][y1][y2]).sum::<f64>()).sum()).collect()).collect();
        let z1_y1z2: Vec<Vec<f64>> = (0..nz1)
            .map(|z1| (0..2 * n1).map(|c| (0..n2).map(|y2| p[z1][c / n1][c % n1][y2]).sum()).collect())
            .collect();
        let want = cond_entropy(&z2y2) + cond_entropy(&z1_y1z2);
        let cfg = OptimizerConfig { aux_cap: Some(nz1.max(2)), restarts: 2, descent_iterations: 200, ..Default::default() };
        let (d1, d2) = (DistortionMeasure::hamming_on(&q1), DistortionMeasure::hamming_on(&q2));
        let got = rdopt::heegard_berger_rate(&src, &d1, &d2, 0.0, 0.0, &cfg).unwrap().rate;
        worst = worst.max((got - want).abs());
    }
    verdict("AC4", worst <= 0.01, &format!("20 function pairs, max |R_HB(0,0) - oracle| = {worst:.2e} bits"));
}

fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> (GaussianChain, Vec<f64>) {
    let var_x = rng.gen_range(0.5..4.0);
    let inc: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
    let chain = GaussianChain::new(var_x, inc).unwrap();
    let d: Vec<f64> = (0..n).map(|k| chain.conditional_variance(k).unwrap() * rng.gen_range(0.05..1.2)).collect();
    (chain, d)
}

#[test]
fn ac05_gaussian_subset_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let (chain, d) = random_chain(&mut rng, n);
        let (rate, _) = gaussian::hb_rate_gaussian(&chain, &d).unwrap();
        let mut brute = f64::NEG_INFINITY;
        for mask in 1u32..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
            brute = brute.max(gaussian::hb_lower_bound_subset(&chain, &d, &subset).unwrap());
        }
        worst = worst.max((rate - brute.max(0.0)).abs());
    }
    verdict("AC5", worst <= 1e-9, &format!("100 chains, max |active - brute force| = {worst:.1e}"));
}

#[test]
fn ac06_gaussian_scalable_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let (chain, d) = random_chain(&mut rng, n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let stages = gaussian::scalable_rates(&chain, &d, &order).unwrap();
        let mut cum = 0.0;
        for k in 0..n {
            cum += stages[k];
            let prefix = gaussian::hb_rate_prefix(&chain, &d, &order[..=k]).unwrap();
            worst = worst.max((cum - prefix).abs());
        }
    }
    verdict("AC6", worst <= 1e-9, &format!("50 triples, max |cumulative - prefix R_HB| = {worst:.1e}"));
}

#[test]
fn ac07_rate_loss_budget() {
    let vals = [0.25, 0.5, 1.0, 2.0, 4.0];
    let (mut max_r1, mut max_sum): (f64, f64) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    for &noise1 in &vals {
        for &noise2 in &vals {
            for &f1 in &[0.05, 0.15, 0.3, 0.5, 0.8] {
                for &f2 in &[0.05, 0.15, 0.3, 0.5, 0.8] {
                    let var_x = 1.0;
                    let c1 = 1.0 / (1.0 / var_x + 1.0 / noise1);
                    let c2 = 1.0 / (1.0 / var_x + 1.0 / (noise1 + noise2));
                    let inst = MseInstance { source: MseSource::Gaussian { var_x, noise1, noise2: Some(noise2) }, d1: f1 * c1, d2: f2 * c2 };
                    let cert = rateloss::gap_certificate(&inst, &OptimizerConfig::default()).unwrap();
                    max_r1 = max_r1.max(cert.gap_r1);
                    max_sum = max_sum.max(cert.gap_sum);
                    count += 1;
                }
            }
        }
    }
    verdict(
        "AC7",
        count == 625 && max_r1 <= 0.5 && max_sum <= 1.0 && max_sum > 0.05,
        &format!("{count} points, max gap_r1 = {max_r1:.4}, max gap_sum = {max_sum:.4}"),
    );
}

#[test]
fn ac08_region_ordering() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = OptimizerConfig { restarts: 1, descent_iterations: 120, aux_cap: Some(2), ..Default::default() };
    let slack = 1e-6 + cfg.tolerance;
    let ham = DistortionMeasure::hamming(2);
    let (mut worst, mut shared) = (f64::NEG_INFINITY, 0);
    let mut done = 0;
    while done < 30 {
        let src = random_source(&mut rng, 2, 2, 2);
        let z1 = rdopt::zero_rate_distortion(&src, siscale::probcore::Side::First, &ham);
        let z2 = rdopt::zero_rate_distortion(&src, siscale::probcore::Side::Second, &ham);
        let inst = Instance { src: &src, d1: &ham, d2: &ham, level1: z1 * rng.gen_range(0.3..0.8), level2: z2 * rng.gen_range(0.3..0.8) };
        let b = regions::region_battery(&inst, &cfg, &RegionGrid::Auto(4)).unwrap();
        for &g in &b.grid {
            let (i, o, c) = (b.inner.value_at(g), b.outer_out.value_at(g), b.outer_cap.value_at(g));
            if i.is_finite() && o.is_finite() && c.is_finite() {
                shared += 1;
                worst = worst.max(o - i).max(c - o);
            }
        }
        done += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        "AC8",
        worst <= slack && shared > 0,
        &format!("30 sources, {shared} shared grid points, max order violation = {worst:.2e} (slack {slack:.1e}), {secs:.1} s"),
    );
}

/// `V = X ⊕ Bern(av)`, `W1 = X ⊕ Bern(a1)`, `W2 = X ⊕ Bern(a2)`, independent
/// given `X`; decoder one keeps `Y1`, decoder two takes `W2`.
fn sim_aux(av: f64, a1: f64, a2: f64) -> AuxChannel {
    let f = |a: f64, s: usize, x: usize| if s == x { 1.0 - a } else { a };
    let mut cond = Matrix::zeros(2, 8);
    for x in 0..2 {
        for v in 0..2 {
            for w1 in 0..2 {
                for w2 in 0..2 {
                    cond.set(x, (v * 2 + w1) * 2 + w2, f(av, v, x) * f(a1, w1, x) * f(a2, w2, x));
                }
            }
        }
    }
    AuxChannel {
        cond,
        dims: vec![2, 2, 2],
        decoders: vec![
            DecoderTable { aux_size: 2, side_size: 2, map: vec![0, 1, 0, 1] },
            DecoderTable { aux_size: 2, side_size: 1, map: vec![0, 1] },
        ],
    }
}

#[test]
fn ac09_simulator_trend() {
    let t = Instant::now();
    let src = JointSource::dsbs(0.25).unwrap();
    let ham = DistortionMeasure::hamming(2);
    let aux = sim_aux(0.45, 0.45, 0.45);
    let rates = binsim::rates_with_margin(&src, &aux, 0.1).unwrap();
    let run = || {
        [200usize, 500, 1000]
            .iter()
            .map(|&n| {
                let spec = CodebookSpec::new(n, binsim::DEFAULT_DELTA, rates, 90 + n as u64);
                let suite = binsim::build_codebooks(&spec, &src, &aux).unwrap();
                binsim::run_trials(&suite, &src, &ham, &ham, 1000, 9, &aux).unwrap()
            })
            .collect::<Vec<_>>()
    };
    let first = run();
    let secs = t.elapsed().as_secs_f64();
    let again = run();
    let reproducible = first.iter().zip(&again).all(|(a, b)| a.to_json().unwrap() == b.to_json().unwrap());
    let errs: Vec<f64> = first.iter().map(|s| s.error_frequency).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let small = errs[2] < 0.1;
    let dist_ok = first.iter().all(|s| {
        let ok = |m: Option<binsim::MeanCi>, d: f64| m.is_some_and(|m| m.mean <= d + 0.02);
        ok(s.distortion1, s.design_distortion1) && ok(s.distortion2, s.design_distortion2)
    });
    let dominant: Vec<String> = first
        .iter()
        .map(|s| {
            let (e, f) = s.event_frequencies.iter().enumerate().fold((0, 0.0), |b, (i, &f)| if f > b.1 { (i, f) } else { b });
            format!("n={}: E{e} {f:.3}", s.spec.n)
        })
        .collect();
    verdict(
        "AC9",
        decreasing && small && dist_ok && reproducible && secs <= 1800.0,
        &format!(
            "error frequency {errs:?} (decreasing {decreasing}, < 0.1 at n=1000 {small}); \
             distortion within D+0.02 {dist_ok}; reproducible {reproducible}; {secs:.1} s; dominant events [{}]",
            dominant.join(", ")
        ),
    );
}

#[test]
fn ac10_perfect_scalability() {
    let p = 0.25;
    let src = JointSource::dsbs(p).unwrap();
    let ham = DistortionMeasure::hamming(2);
    let cfg = OptimizerConfig { aux_cap: Some(3), ..Default::default() };
    // Time-sharing cascade region: decoder two (no side information) is the finer one.
    let (c1, c2) = (0.2, 0.05);
    assert_eq!(dsbs::classify_region(p, c1, c2).unwrap(), dsbs::DsbsRegion::IC);
    let inst = Instance { src: &src, d1: &ham, d2: &ham, level1: c1, level2: c2 };
    let ic = match regions::perfect_scalability_certificate(&inst, &cfg).unwrap() {
        Certificate::Certified { r1, r2, .. } => {
            let (w1, w2) = (wz_oracle(p, c1), 1.0 - h2(c2));
            (r1 - w1).abs() <= 0.01 && (r2 - w2).abs() <= 0.01
        }
        _ => false,
    };
    let (i1, i2) = (0.04, 0.1);
    let inst = Instance { src: &src, d1: &ham, d2: &ham, level1: i1, level2: i2 };
    let id = match regions::perfect_scalability_certificate(&inst, &cfg).unwrap() {
        Certificate::Impossible { hb_rate, .. } => hb_rate > 1.0 - h2(i2) + 1e-9,
        _ => false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut gauss = true;
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let inc: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..3.0)).collect();
        let chain = GaussianChain::new(1.0, inc).unwrap();
        let level = 0.9 * chain.conditional_variance(0).unwrap() * rng.gen_range(0.05..1.0);
        let order: Vec<usize> = (0..n).collect();
        gauss &= gaussian::perfect_scalability_gaussian(&chain, &vec![level; n], &order).unwrap().all();
    }
    verdict("AC10", ic && id && gauss, &format!("I-C certified {ic}; I-D impossible {id}; Gaussian equal-D stages {gauss}"));
}

/// Outer pair sum at `r1 = WZ(D1)` for DSBS(0.25) at (0.2, 0.15), from a
/// separate constrained solve (SLSQP, 150 starts per |W2| in 2..=4) with
/// `W1` fixed to the Wyner-Ziv time-sharing channel.
const AC11_OUT_AT_CORNER: f64 = 0.39928;

#[test]
fn ac11_strictness_probe() {
    let p = 0.25;
    let (l1, l2) = (0.2, 0.15);
    assert_eq!(dsbs::classify_region(p, l1, l2).unwrap(), dsbs::DsbsRegion::Unresolved);
    let src = JointSource::dsbs(p).unwrap();
    let ham = DistortionMeasure::hamming(2);
    let cfg = OptimizerConfig { restarts: 3, descent_iterations: 300, aux_cap: Some(3), ..Default::default() };
    let inst = Instance { src: &src, d1: &ham, d2: &ham, level1: l1, level2: l2 };
    let b = regions::region_battery(&inst, &cfg, &RegionGrid::Auto(3)).unwrap();
    let corner = b.outer_cap.corner().unwrap().clone();
    let out = b.outer_out.value_at(corner.r1);
    let gap = out - corner.r_sum;
    verdict(
        "AC11",
        gap.is_finite() && gap > 0.005 && (out - AC11_OUT_AT_CORNER).abs() < 0.003,
        &format!(
            "D = ({l1}, {l2}); R_cap corner ({:.4}, {:.4}); out-bound sum at that r1 = {out:.4} (reference {AC11_OUT_AT_CORNER}); gap = {gap:.4}",
            corner.r1, corner.r_sum
        ),
    );
}
