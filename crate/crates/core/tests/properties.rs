use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miprune_core::baselines::random_select;
use miprune_core::distributions::{
    conditional, mask_diagonal, pmi, self_similarity, similarity, text_marginal, visual_marginal,
    Mode, SelfPmiKernel,
};
use miprune_core::infotheory::{random_joint, verify_lse_bounds};
use miprune_core::npy::{decode, encode};
use miprune_core::scoring::{cross_score_max, global_score, relevance_scores};
use miprune_core::selection::{
    exhaustive_modular_oracle, stepwise_greedy_verifier, top_k_bounded, top_k_heap,
};
use miprune_core::{
    fast_select_modular, greedy_select, row_normalize, Aggregation, EmbeddingMatrix, MatrixKind,
    Normalization, NormalizedMatrix, PruneConfig,
};

fn unit_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, kind: MatrixKind) -> NormalizedMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0) + if rng.random_bool(0.5) { 0.1 } else { -0.1 })
        .collect();
    row_normalize(&EmbeddingMatrix::new(rows, cols, data, kind).unwrap()).unwrap()
}

fn pair(seed: u64, n_v: usize, n_t: usize, d: usize) -> (NormalizedMatrix, NormalizedMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        unit_matrix(&mut rng, n_v, d, MatrixKind::Visual),
        unit_matrix(&mut rng, n_t, d, MatrixKind::Textual),
    )
}

fn any_norm() -> impl Strategy<Value = Normalization> {
    prop_oneof![Just(Normalization::Softmax), Just(Normalization::Minmax)]
}

fn any_agg() -> impl Strategy<Value = Aggregation> {
    prop_oneof![Just(Aggregation::Max), Just(Aggregation::Global)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conditionals_and_marginals_are_distributions(
        seed in any::<u64>(), n_v in 1usize..24, n_t in 1usize..8, d in 1usize..6,
        tau in 0.01f64..5.0, norm in any_norm(),
    ) {
        let (v, t) = pair(seed, n_v, n_t, d);
        let c = conditional(&similarity(&v, &t, tau, Mode::Cross).unwrap(), norm).unwrap();
        for i in 0..n_v {
            let s: f64 = c.table.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(c.table.row(i).iter().all(|&p| p >= 0.0));
        }
        let m = text_marginal(&c).unwrap();
        prop_assert!((m.values.iter().sum::<f64>() - 1.0).abs() < 1e-6);

        let sc = conditional(&self_similarity(&v, tau).unwrap(), norm).unwrap();
        for i in 0..n_v {
            prop_assert!((sc.table.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_self_rows_ignore_the_diagonal(seed in any::<u64>(), n_v in 2usize..16, norm in any_norm()) {
        let (v, _) = pair(seed, n_v, 1, 4);
        let c = conditional(&mask_diagonal(&self_similarity(&v, 0.1).unwrap()).unwrap(), norm).unwrap();
        for i in 0..n_v {
            prop_assert_eq!(c.table.get(i, i), 0.0);
            prop_assert!((c.table.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn self_pmi_is_log_of_scaled_conditional(seed in any::<u64>(), n_v in 1usize..20, tau in 0.05f64..2.0) {
        let (v, _) = pair(seed, n_v, 1, 5);
        let c = conditional(&self_similarity(&v, tau).unwrap(), Normalization::Softmax).unwrap();
        let p = pmi(&c, &visual_marginal(n_v).unwrap()).unwrap();
        for i in 0..n_v {
            for j in 0..n_v {
                let q = c.table.get(i, j);
                if q > 1e-12 {
                    prop_assert!((p.table.get(i, j) - (n_v as f64 * q).ln()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn kernel_matches_dense_tables(
        seed in any::<u64>(), n_v in 2usize..20, norm in any_norm(), masked in any::<bool>(),
    ) {
        let (v, _) = pair(seed, n_v, 1, 3);
        let mut sim = self_similarity(&v, 0.2).unwrap();
        if masked {
            sim = mask_diagonal(&sim).unwrap();
        }
        let c = conditional(&sim, norm).unwrap();
        let p = pmi(&c, &visual_marginal(n_v).unwrap()).unwrap();
        let k = SelfPmiKernel::new(&v, 0.2, norm, masked).unwrap();
        for i in 0..n_v {
            for j in 0..n_v {
                prop_assert_eq!(k.pmi(i, j).to_bits(), p.table.get(i, j).to_bits());
            }
        }
    }

    #[test]
    fn identical_visual_rows_give_zero_pmi(seed in any::<u64>(), n_v in 1usize..10, n_t in 1usize..6) {
        let (v, t) = pair(seed, 1, n_t, 4);
        let v = row_normalize(&EmbeddingMatrix::from_rows(&vec![v.row(0).to_vec(); n_v], MatrixKind::Visual).unwrap()).unwrap();
        let c = conditional(&similarity(&v, &t, 0.1, Mode::Cross).unwrap(), Normalization::Softmax).unwrap();
        let p = pmi(&c, &text_marginal(&c).unwrap()).unwrap();
        prop_assert!(p.table.values.iter().all(|x| x.abs() <= 1e-9));
    }

    #[test]
    fn global_score_is_row_kl(seed in any::<u64>(), n_v in 1usize..16, n_t in 1usize..8, norm in any_norm()) {
        let (v, t) = pair(seed, n_v, n_t, 4);
        let c = conditional(&similarity(&v, &t, 0.1, Mode::Cross).unwrap(), norm).unwrap();
        let m = text_marginal(&c).unwrap();
        let g = global_score(&c, &pmi(&c, &m).unwrap()).unwrap();
        for i in 0..n_v {
            let kl: f64 = c.table.row(i).iter().zip(&m.values)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| p * (p / q).ln())
                .sum();
            prop_assert!((g.values[i] - kl).abs() < 1e-10, "{} vs {}", g.values[i], kl);
            prop_assert!(g.values[i] >= -1e-12);
        }
    }

    #[test]
    fn greedy_output_is_well_formed(
        seed in any::<u64>(), n_v in 1usize..30, n_t in 1usize..6, budget in 1usize..40,
        lambda in 0.0f64..=1.0, agg in any_agg(), norm in any_norm(),
    ) {
        let (v, t) = pair(seed, n_v, n_t, 4);
        let cfg = PruneConfig { lambda, budget, aggregation: agg, normalization: norm, ..PruneConfig::default() };
        let r = greedy_select(&v, &t, &cfg).unwrap();
        prop_assert_eq!(r.kept.len(), budget.min(n_v));
        prop_assert_eq!(r.step_scores.len(), r.kept.len());
        let mut sorted = r.kept.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), r.kept.len());
        prop_assert!(r.kept.iter().all(|&i| i < n_v));
        prop_assert_eq!(budget >= n_v, r.warnings.iter().any(|w| w.contains("budget")));
    }

    #[test]
    fn smaller_budget_is_a_prefix(
        seed in any::<u64>(), n_v in 2usize..24, budget in 1usize..23, lambda in 0.0f64..=1.0, agg in any_agg(),
    ) {
        let (v, t) = pair(seed, n_v, 3, 4);
        let cfg = PruneConfig { lambda, budget: budget.min(n_v - 1), aggregation: agg, ..PruneConfig::default() };
        let short = greedy_select(&v, &t, &cfg).unwrap();
        let long = greedy_select(&v, &t, &PruneConfig { budget: cfg.budget + 1, ..cfg.clone() }).unwrap();
        prop_assert_eq!(&long.kept[..short.kept.len()], &short.kept[..]);
    }

    #[test]
    fn modular_paths_agree(seed in any::<u64>(), n_v in 1usize..13, n_t in 2usize..5, agg in any_agg()) {
        let (v, t) = pair(seed, n_v, n_t, 3);
        let base = PruneConfig { aggregation: agg, ..PruneConfig::default() };
        let scores = relevance_scores(&v, &t, &base).unwrap();
        for budget in 1..=n_v {
            let cfg = PruneConfig { budget, ..base.clone() };
            let mut g = greedy_select(&v, &t, &cfg).unwrap().kept;
            let mut f = fast_select_modular(&v, &t, &cfg).unwrap().kept;
            prop_assert_eq!(&g, &f);
            let o = exhaustive_modular_oracle(&scores, budget).unwrap();
            g.sort_unstable();
            f.sort_unstable();
            // Ties may make several sets optimal; compare objective values.
            let sum = |s: &[usize]| s.iter().map(|&i| scores.values[i]).sum::<f64>();
            prop_assert!((sum(&g) - sum(&o)).abs() < 1e-9);
        }
    }

    #[test]
    fn verifier_accepts_greedy(
        seed in any::<u64>(), n_v in 1usize..20, n_t in 1usize..5, budget in 1usize..20,
        lambda in prop_oneof![Just(0.0), Just(0.25), Just(0.5), Just(0.75), Just(1.0)],
        agg in any_agg(), norm in any_norm(), masked in any::<bool>(),
    ) {
        let (v, t) = pair(seed, n_v.max(2), n_t, 4);
        let cfg = PruneConfig {
            lambda, budget, aggregation: agg, normalization: norm, mask_diagonal: masked,
            ..PruneConfig::default()
        };
        let r = greedy_select(&v, &t, &cfg).unwrap();
        let report = stepwise_greedy_verifier(&v, &t, &cfg, &r).unwrap();
        prop_assert!(report.passed, "{:?}", report.violation);
    }

    #[test]
    fn top_k_variants_agree(scores in prop::collection::vec(-5i32..5, 0..64), k in 0usize..70) {
        // small integer range forces ties
        let s: Vec<f64> = scores.iter().map(|&x| x as f64 / 2.0).collect();
        prop_assert_eq!(top_k_bounded(&s, k), top_k_heap(&s, k));
    }

    #[test]
    fn max_score_bounded_by_log_inverse_marginal(seed in any::<u64>(), n_v in 1usize..16, n_t in 1usize..8) {
        let (v, t) = pair(seed, n_v, n_t, 4);
        let c = conditional(&similarity(&v, &t, 0.1, Mode::Cross).unwrap(), Normalization::Softmax).unwrap();
        let m = text_marginal(&c).unwrap();
        let s = cross_score_max(&pmi(&c, &m).unwrap()).unwrap();
        let bound = m.values.iter().map(|&x| (1.0 / x).ln()).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.values.iter().all(|&x| x <= bound + 1e-9));
    }

    #[test]
    fn npy_round_trip_is_bitwise(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| f64::from_bits(rng.random::<u64>() >> 2)).filter(|x| x.is_finite()).collect();
        prop_assume!(data.len() == rows * cols);
        let m = EmbeddingMatrix::new(rows, cols, data, MatrixKind::Visual).unwrap();
        let bytes = encode(&m);
        prop_assert_eq!(bytes.len() % 64, (rows * cols * 8) % 64);
        let back = decode(&bytes, MatrixKind::Visual).unwrap();
        prop_assert_eq!(back.rows(), rows);
        for (a, b) in back.data().iter().zip(m.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn lse_bounds_hold(z in prop::collection::vec(-700.0f64..700.0, 1..100)) {
        prop_assert!(verify_lse_bounds(&z).unwrap().holds);
    }

    #[test]
    fn mutual_information_symmetric_and_non_negative(seed in any::<u64>(), a in 1usize..6, b in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = random_joint(&mut rng, &[("x", a), ("y", b)]).unwrap();
        let xy = j.mutual_information("x", "y").unwrap();
        prop_assert!((xy - j.mutual_information("y", "x").unwrap()).abs() < 1e-12);
        prop_assert!((xy - j.mutual_information_pointwise("x", "y").unwrap()).abs() < 1e-12);
        prop_assert!(xy >= -1e-12);
        prop_assert!(xy <= j.entropy("x").unwrap().min(j.entropy("y").unwrap()) + 1e-12);
    }

    #[test]
    fn random_select_is_a_sample(n in 1usize..200, budget in 1usize..250, seed in any::<u64>()) {
        let r = random_select(n, budget, seed).unwrap();
        let mut k = r.kept.clone();
        k.sort_unstable();
        k.dedup();
        prop_assert_eq!(k.len(), budget.min(n));
        prop_assert!(k.iter().all(|&i| i < n));
        prop_assert_eq!(r.kept, random_select(n, budget, seed).unwrap().kept);
    }
}

#[test]
fn random_select_is_uniform() {
    let (n, budget, seeds) = (1000, 250, 10_000u64);
    let mut counts = vec![0u32; n];
    for seed in 0..seeds {
        for i in random_select(n, budget, seed).unwrap().kept {
            counts[i] += 1;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        let freq = c as f64 / seeds as f64;
        assert!((freq - 0.25).abs() <= 0.02, "index {i} kept with frequency {freq}");
    }
}
