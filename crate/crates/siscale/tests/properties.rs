//! Property-based checks of invariants that hold for every valid input.

use proptest::prelude::*;

use siscale::binsim::{jointly_typical, Seq};
use siscale::dsbs;
use siscale::gaussian::{self, GaussianChain};
use siscale::probcore::{entropy_of, format_sig, mutual_information, Matrix};
use siscale::rateloss::{self, MseInstance, MseSource, R1_BUDGET, SUM_BUDGET};
use siscale::rdopt::OptimizerConfig;

fn pmf(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("nonzero mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.into_iter().map(|x| x / s).collect())
    })
}

fn chain_and_levels() -> impl Strategy<Value = (GaussianChain, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|n| {
        (0.5f64..4.0, prop::collection::vec(0.05f64..3.0, n), prop::collection::vec(0.05f64..1.3, n)).prop_map(
            |(vx, inc, frac)| {
                let chain = GaussianChain::new(vx, inc).unwrap();
                let d = frac.iter().enumerate().map(|(k, f)| f * chain.conditional_variance(k).unwrap()).collect();
                (chain, d)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_is_between_zero_and_log_size(p in (1usize..8).prop_flat_map(pmf)) {
        let h = entropy_of(&p);
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (p.len() as f64).log2() + 1e-9);
    }

    #[test]
    fn mutual_information_bounded_by_marginal_entropies(p in pmf(6)) {
        let m = Matrix::from_vec(2, 3, p.clone()).unwrap();
        let i = mutual_information(&m).unwrap();
        let hx = entropy_of(&m.row_sums());
        let hy = entropy_of(&m.col_sums());
        prop_assert!(i >= -1e-12);
        prop_assert!(i <= hx.min(hy) + 1e-9);
    }

    #[test]
    fn wz_dsbs_is_convex_and_nonincreasing(p in 0.02f64..0.48) {
        let grid: Vec<f64> = (0..=500).map(|i| i as f64 * 1e-3).collect();
        let r: Vec<f64> = grid.iter().map(|&d| dsbs::wz_dsbs(p, d).unwrap()).collect();
        for w in r.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        for w in r.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
        }
    }

    #[test]
    fn cascade_rate_dominates_single_decoder_rates(p in 0.05f64..0.45, a in 0.05f64..1.0, b in 0.0f64..1.0) {
        let dc = dsbs::critical_distortion(p).unwrap();
        let d1 = a * dc;
        let d2 = d1 + b * (0.5 - d1) * 0.99;
        let s = dsbs::hb_dsbs_region_id(p, d1, d2).unwrap();
        let h = |u: f64| if u <= 0.0 || u >= 1.0 { 0.0 } else { -u * u.log2() - (1.0 - u) * (1.0 - u).log2() };
        prop_assert!(s.rate >= dsbs::wz_dsbs(p, d1).unwrap() - 1e-12);
        prop_assert!(s.rate >= 1.0 - h(d2) - 1e-12);
    }

    #[test]
    fn gaussian_hb_dominates_each_wyner_ziv_rate((chain, d) in chain_and_levels()) {
        let (hb, active) = gaussian::hb_rate_gaussian(&chain, &d).unwrap();
        for k in 0..chain.len() {
            prop_assert!(hb >= chain.wz_rate(k, d[k]).unwrap() - 1e-9);
        }
        prop_assert!(!active.is_empty());
        let mi = gaussian::hb_rate_mutual_information(&chain, &d).unwrap();
        prop_assert!((hb - mi).abs() < 1e-9);
    }

    #[test]
    fn gaussian_hb_nonincreasing_in_distortion((chain, d) in chain_and_levels(), k in 0usize..5, f in 1.0f64..2.0) {
        let k = k % chain.len();
        let mut looser = d.clone();
        looser[k] *= f;
        let a = gaussian::hb_rate_gaussian(&chain, &d).unwrap().0;
        let b = gaussian::hb_rate_gaussian(&chain, &looser).unwrap().0;
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn gaussian_stage_rates_sum_to_hb((chain, d) in chain_and_levels(), seed in any::<u64>()) {
        let n = chain.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let stages = gaussian::scalable_rates(&chain, &d, &order).unwrap();
        prop_assert!(stages.iter().all(|r| *r >= 0.0));
        let total: f64 = stages.iter().sum();
        let hb = gaussian::hb_rate_gaussian(&chain, &d).unwrap().0;
        prop_assert!((total - hb).abs() < 1e-9);
    }

    #[test]
    fn gaussian_rate_loss_within_budget(vx in 0.2f64..5.0, n1 in 0.05f64..5.0, n2 in prop::option::of(0.05f64..5.0), f1 in 0.01f64..1.5, f2 in 0.01f64..1.5) {
        let inst = MseInstance { source: MseSource::Gaussian { var_x: vx, noise1: n1, noise2: n2 }, d1: f1 * vx, d2: f2 * vx };
        let c = rateloss::gap_certificate(&inst, &OptimizerConfig::default()).unwrap();
        prop_assert!(c.inner.r_sum >= c.inner.r1);
        prop_assert!(c.gap_r1 <= R1_BUDGET && c.gap_sum <= SUM_BUDGET);
        prop_assert!(c.gap_r1 >= -1e-9 && c.gap_sum >= -1e-9);
    }

    #[test]
    fn sequence_is_typical_for_its_own_type(sym in prop::collection::vec(0usize..3, 1..300)) {
        let seq = Seq::from_symbols(&sym, 3).unwrap();
        prop_assert_eq!(seq.symbols(), sym.clone());
        let mut t = vec![0.0; 3];
        for &s in &sym {
            t[s] += 1.0 / sym.len() as f64;
        }
        prop_assert!(jointly_typical(&[&seq], &t, 1e-9));
    }

    #[test]
    fn formatted_values_round_trip(x in prop::num::f64::NORMAL) {
        let back: f64 = format_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-11 * x.abs());
    }
}
