//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).

use cotrade::backtest::max_drawdown;
use cotrade::community::{
    adjusted_rand_index, infomap_partition, map_equation_codelength, modularity, Partition,
};
use cotrade::config::RunConfig;
use cotrade::ewens::{
    chi_square_gof, conditional_ewens_pmf, derangement_count, estimate_theta, ewens_pmf,
    lambda_n, sample_conditional_ewens, sample_ewens, PartitionVector,
};
use cotrade::games::{
    aa_sleeping_step, aa_step, caa_step, cluster_bound_advantage, cluster_mean_decisions,
    ecaa_step, loss, ClusterAssignment, DecisionRule, LossKind, WeightState,
};
use cotrade::pipeline::{run_pipeline, Stage};
use cotrade::states::{state_series_all, SliceGrid, StateSeries, StateSymbol};
use cotrade::svn::{build_svn, hypergeom_pvalue, CooccurrenceCounts};
use cotrade::trade::{generate_synthetic_market, BusinessCalendar, MarketConfig, TraderId};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

fn partition_vectors(n: usize) -> Vec<PartitionVector> {
    fn rec(remaining: usize, max_part: usize, counts: &mut Vec<u64>, out: &mut Vec<PartitionVector>) {
        if remaining == 0 {
            out.push(PartitionVector::new(counts.clone()).unwrap());
            return;
        }
        for part in (1..=remaining.min(max_part)).rev() {
            counts[part - 1] += 1;
            rec(remaining - part, part, counts, out);
            counts[part - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut vec![0u64; n], &mut out);
    out
}

#[test]
fn criterion_01_ewens_normalisation() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 1..=10usize {
        let shapes = partition_vectors(n);
        for theta in [0.5, 1.0, 2.0, 5.0] {
            let total: f64 = shapes.iter().map(|c| ewens_pmf(c, theta).unwrap()).sum();
            worst = worst.max((total - 1.0).abs());
            if n >= 2 {
                let total: f64 = shapes
                    .iter()
                    .filter(|c| c.singletons() == 0)
                    .map(|c| conditional_ewens_pmf(c, theta).unwrap())
                    .sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(worst <= 1e-12, "worst normalisation error {worst:e}");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS ewens normalisation: worst |sum-1| = {worst:.2e} over n<=10, four thetas ({elapsed:?})"
    );
}

fn rational(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

/// lambda_n by the exact definition: sum_k theta^k D(n,k) / theta_(n).
fn lambda_exact(theta: &BigRational, n: usize) -> BigRational {
    if n == 0 {
        return BigRational::one();
    }
    let mut sum = BigRational::zero();
    let mut theta_pow = BigRational::one();
    for k in 0..=n {
        if k > 0 {
            theta_pow *= theta;
            let d = BigRational::from(BigInt::from(derangement_count(n, k)));
            sum += &theta_pow * d;
        }
    }
    let mut rising = BigRational::one();
    for i in 0..n {
        rising *= theta + BigRational::from(BigInt::from(i as i64));
    }
    sum / rising
}

#[test]
fn criterion_02_lambda_recursion_matches_exact_sum() {
    let mut worst: f64 = 0.0;
    for (num, den) in [(1i64, 2i64), (1, 1), (2, 1)] {
        let theta_rational = rational(num, den);
        let theta = num as f64 / den as f64;
        for n in 0..=12usize {
            let exact = lambda_exact(&theta_rational, n);
            let exact_f = exact.to_f64().expect("fits in f64");
            let recursed = lambda_n(theta, n).unwrap();
            let err = if exact_f == 0.0 {
                recursed.abs()
            } else {
                ((recursed - exact_f) / exact_f).abs()
            };
            worst = worst.max(err);
            assert!(
                err <= 1e-10,
                "lambda mismatch at n={n}, theta={theta}: {recursed} vs {exact_f}"
            );
        }
    }
    println!(
        "ACCEPTANCE 2 PASS lambda recursion vs exact derangement sum: worst rel err = {worst:.2e} (n<=12)"
    );
}

#[test]
fn criterion_03_crp_sampler_matches_pmf() {
    let started = Instant::now();
    let samples = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(501);

    let shapes = partition_vectors(5);
    assert_eq!(shapes.len(), 7);
    let mut counts: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for _ in 0..samples {
        let draw = sample_ewens(5, 1.0, &mut rng).unwrap();
        *counts.entry(draw.counts().to_vec()).or_insert(0) += 1;
    }
    let mut worst_z: f64 = 0.0;
    for shape in &shapes {
        let p = ewens_pmf(shape, 1.0).unwrap();
        let expected = samples as f64 * p;
        let se = (samples as f64 * p * (1.0 - p)).sqrt();
        let observed = *counts.get(&shape.counts().to_vec()).unwrap_or(&0) as f64;
        let z = (observed - expected).abs() / se;
        worst_z = worst_z.max(z);
        assert!(
            z <= 3.0,
            "shape {:?}: observed {observed}, expected {expected:.1} (z = {z:.2})",
            shape.counts()
        );
    }

    // Rejection-sampler acceptance rate vs lambda_6(1).
    let lambda = lambda_n(1.0, 6).unwrap();
    let trials = 100_000usize;
    let mut accepted = 0usize;
    for _ in 0..trials {
        if sample_ewens(6, 1.0, &mut rng).unwrap().singletons() == 0 {
            accepted += 1;
        }
    }
    let rate = accepted as f64 / trials as f64;
    let sigma = (lambda * (1.0 - lambda) / trials as f64).sqrt();
    let z = (rate - lambda).abs() / sigma;
    assert!(z <= 3.0, "acceptance rate {rate:.4} vs lambda {lambda:.4} (z = {z:.2})");

    // The conditional sampler itself must stay inside the support.
    for _ in 0..200 {
        assert_eq!(sample_conditional_ewens(6, 1.0, &mut rng).unwrap().singletons(), 0);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 3 PASS crp oracle: worst shape z = {worst_z:.2}, acceptance z = {z:.2} ({elapsed:?})"
    );
}

#[test]
fn criterion_04_theta_recovery_and_gof_calibration() {
    let started = Instant::now();
    let n = 500;
    let theta = 2.0;
    let windows = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut thetas = Vec::with_capacity(windows);
    let mut passes = 0usize;
    let mut undefined = 0usize;
    for _ in 0..windows {
        let draw = sample_conditional_ewens(n, theta, &mut rng).unwrap();
        let k = draw.num_clusters() as f64;
        let theta_hat = estimate_theta(k.round(), n, true).unwrap();
        thetas.push(theta_hat);
        match chi_square_gof(&draw, theta_hat, true, 0.05) {
            Ok(report) => {
                if report.pass {
                    passes += 1;
                }
            }
            Err(_) => undefined += 1,
        }
    }
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = thetas[windows / 2];
    let pass_rate = passes as f64 / windows as f64;
    let elapsed = started.elapsed();

    assert!(
        (median - theta).abs() / theta <= 0.15,
        "median theta {median:.3} not within 15% of {theta}"
    );
    assert!(
        pass_rate >= 0.90,
        "chi-square pass rate {pass_rate:.3} below 0.90 ({undefined} undefined)"
    );
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 PASS theta recovery: median theta_hat = {median:.3} (target 2 +/- 15%), chi2 pass rate = {:.1}% ({elapsed:?})",
        100.0 * pass_rate
    );
}

fn big_binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// Exact rational upper-tail hypergeometric probability.
fn hypergeom_tail_exact(n: u64, n_p: u64, n_q: u64, n_pq: u64) -> BigRational {
    let mut sum = BigInt::zero();
    for i in n_pq..=n_p.min(n_q) {
        if n_q - i > n - n_p {
            continue;
        }
        sum += big_binomial(n_p, i) * big_binomial(n - n_p, n_q - i);
    }
    BigRational::new(sum, big_binomial(n, n_q))
}

#[test]
fn criterion_05_hypergeometric_exactness_and_fwer() {
    // Exhaustive oracle comparison for n <= 12.
    let mut cases = 0usize;
    let mut worst: f64 = 0.0;
    for n in 0..=12u64 {
        for n_p in 0..=n {
            for n_q in 0..=n {
                for n_pq in 0..=n_p.min(n_q) {
                    let counts = CooccurrenceCounts::new(n, n_p, n_q, n_pq).unwrap();
                    let p = hypergeom_pvalue(&counts).unwrap();
                    let exact = hypergeom_tail_exact(n, n_p, n_q, n_pq)
                        .to_f64()
                        .expect("fits in f64")
                        .min(1.0);
                    let err = (p - exact).abs();
                    worst = worst.max(err);
                    assert!(
                        err <= 1e-9,
                        "p mismatch at ({n},{n_p},{n_q},{n_pq}): {p} vs {exact}"
                    );
                    cases += 1;
                }
            }
        }
    }

    // Family-wise error under the null: 50 independent uniform state series.
    let seeds = 1000u64;
    let symbols = [
        StateSymbol::Buying,
        StateSymbol::Selling,
        StateSymbol::Neutral,
        StateSymbol::Inactive,
    ];
    let results: Vec<usize> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
            let series: Vec<StateSeries> = (0..50)
                .map(|i| StateSeries {
                    trader: TraderId::new(format!("t{i:03}")),
                    delta: chrono::Duration::minutes(10),
                    threshold: 0.25,
                    states: (0..100).map(|_| symbols[rng.gen_range(0..4)]).collect(),
                })
                .collect();
            build_svn(&series, 0.05).unwrap().num_edges()
        })
        .collect();
    let total_edges: usize = results.iter().sum();
    let mean_edges = total_edges as f64 / seeds as f64;
    let any_edge = results.iter().filter(|e| **e > 0).count() as f64 / seeds as f64;
    assert!(mean_edges <= 0.05, "mean validated edges {mean_edges} > alpha");
    assert!(any_edge <= 0.05, "family-wise error {any_edge} > alpha");
    println!(
        "ACCEPTANCE 5 PASS hypergeometric: {cases} oracle cases worst |err| = {worst:.2e}; null mean edges = {mean_edges:.4}, FWER = {any_edge:.4}"
    );
}

#[test]
fn criterion_06_planted_cluster_recovery() {
    let started = Instant::now();
    let config = MarketConfig {
        traders: 60,
        groups: 3,
        group_size: 20,
        p_sync: 0.9,
        signal_rate: 0.3,
        noise_rate: 0.05,
        hold_slices_max: 3,
        lot_sigma: 0.5,
        start: "2015-01-05T06:00:00Z".parse().unwrap(),
        horizon_days: 28,
        slice_minutes: 60,
        symbol: "EURUSD".to_owned(),
        calendar: Some(BusinessCalendar::default_active_hours()),
    };
    let grid = SliceGrid::new(
        (config.start, config.start + chrono::Duration::days(config.horizon_days)),
        chrono::Duration::minutes(60),
        config.calendar,
    )
    .unwrap();
    let truth = Partition::new(
        (0..60)
            .map(|i| (config.trader_id(i), config.group_of(i).unwrap()))
            .collect(),
    );
    let traders: Vec<TraderId> = (0..60).map(|i| config.trader_id(i)).collect();

    let seeds: Vec<u64> = (0..50).collect();
    let aris: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let table = generate_synthetic_market(&config, seed).unwrap();
            let series = state_series_all(&table, &traders, &grid, 0.25).unwrap();
            let network = build_svn(&series, 0.05).unwrap();
            let partition = infomap_partition(&network, seed).unwrap();
            // Traders dropped from the network count as their own singletons.
            let mut full: BTreeMap<TraderId, usize> = BTreeMap::new();
            let mut next = partition.num_clusters();
            for trader in &traders {
                match partition.label_of(trader) {
                    Some(l) => {
                        full.insert(trader.clone(), l);
                    }
                    None => {
                        full.insert(trader.clone(), next);
                        next += 1;
                    }
                }
            }
            adjusted_rand_index(&Partition::new(full), &truth).unwrap()
        })
        .collect();

    let good = aris.iter().filter(|a| **a >= 0.9).count();
    let elapsed = started.elapsed();
    assert!(
        good >= 45,
        "only {good}/50 seeds reached ARI >= 0.9 (aris: {aris:.2?})"
    );
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    let min_ari = aris.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "ACCEPTANCE 6 PASS planted recovery: {good}/50 seeds with ARI >= 0.9 (min ARI = {min_ari:.3}) ({elapsed:?})"
    );
}

#[test]
fn criterion_07_clustering_fixtures() {
    use cotrade::svn::{LinkKind, SvnMetadata, ValidatedEdge, ValidatedNetwork};

    let edge = |a: &str, b: &str| ValidatedEdge {
        a: TraderId::from(a),
        b: TraderId::from(b),
        kind: LinkKind::BuyBuy,
        p_value: 1e-12,
    };
    let network = ValidatedNetwork::from_parts(
        vec![
            edge("a", "b"),
            edge("b", "c"),
            edge("a", "c"),
            edge("x", "y"),
            edge("y", "z"),
            edge("x", "z"),
        ],
        SvnMetadata {
            alpha: 0.05,
            num_tests: 30,
            corrected_threshold: 0.05 / 30.0,
            series_len: 0,
            num_series: 6,
        },
    );
    let ids: Vec<TraderId> = network.nodes().to_vec();
    let planted = Partition::new(
        ids.iter()
            .map(|id| {
                let group = usize::from(["x", "y", "z"].contains(&id.as_str()));
                (id.clone(), group)
            })
            .collect(),
    );

    let q = modularity(&network, &planted).unwrap();
    assert!((q - 0.5).abs() <= 1e-15, "modularity {q} != 0.5");

    // Exhaustive map-equation optimum over all 203 partitions of 6 nodes.
    fn all_labellings(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == n {
                out.push(prefix.clone());
                return;
            }
            for label in 0..=max {
                prefix.push(label);
                rec(prefix, max.max(label + 1), n, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), 0, n, &mut out);
        out
    }
    let labellings = all_labellings(6);
    assert_eq!(labellings.len(), 203);
    let planted_len = map_equation_codelength(&network, &planted).unwrap();
    let mut optimum = f64::INFINITY;
    let mut argmin = Vec::new();
    for labels in labellings {
        let partition = Partition::new(
            ids.iter()
                .cloned()
                .zip(labels.iter().cloned())
                .collect::<BTreeMap<_, _>>(),
        );
        let len = map_equation_codelength(&network, &partition).unwrap();
        if len < optimum {
            optimum = len;
            argmin = labels;
        }
    }
    assert!(
        (optimum - planted_len).abs() <= 1e-12,
        "exhaustive optimum {optimum} differs from planted {planted_len}"
    );
    let planted_labels: Vec<usize> = ids.iter().map(|id| planted.label_of(id).unwrap()).collect();
    let normalise = |labels: &[usize]| {
        let mut map = BTreeMap::new();
        labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect::<Vec<usize>>()
    };
    assert_eq!(normalise(&argmin), normalise(&planted_labels));

    // The search finds that optimum.
    let found = infomap_partition(&network, 1).unwrap();
    let found_len = map_equation_codelength(&network, &found).unwrap();
    assert!((found_len - optimum).abs() <= 1e-12);
    println!(
        "ACCEPTANCE 7 PASS clustering fixtures: modularity = {q}, map-equation optimum {optimum:.6} bits is the planted 2-module split"
    );
}

#[test]
fn criterion_08_regret_bound_and_duplicate_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut worst_slack = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=12);
        let t = rng.gen_range(1..=80);
        let mut state = WeightState::uniform(n, 1.0, 1.0);
        let mut learner = 0.0f64;
        let mut experts = vec![0.0f64; n];
        for _ in 0..t {
            let decisions: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let outcome = rng.gen_range(-0.05..=0.05);
            let p = aa_step(&mut state, &decisions, outcome, LossKind::LongShort).unwrap();
            learner += loss(LossKind::LongShort, 1.0, p, outcome);
            for (acc, gamma) in experts.iter_mut().zip(&decisions) {
                *acc += loss(LossKind::LongShort, 1.0, *gamma, outcome);
            }
        }
        let best = experts.iter().cloned().fold(f64::INFINITY, f64::min);
        let bound = best + (n as f64).ln();
        assert!(
            learner <= bound,
            "regret bound violated: learner {learner} > {bound} (n = {n}, T = {t})"
        );
        worst_slack = worst_slack.min(bound - learner);
    }

    // Duplicated-expert collapse: m copies behave as one expert of initial
    // weight m/N.
    let mut worst_diff: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=5);
        let singles = rng.gen_range(1..=5);
        let n = m + singles;
        let mut pool = WeightState::uniform(n, 1.0, 1.0);
        let mut weights = vec![m as f64 / n as f64];
        weights.extend(std::iter::repeat(1.0 / n as f64).take(singles));
        let mut collapsed = WeightState::with_weights(weights, 1.0, 1.0);
        for _ in 0..60 {
            let shared = rng.gen_range(-1.0..=1.0);
            let mut decisions = vec![shared; m];
            let tail: Vec<f64> = (0..singles).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            decisions.extend(&tail);
            let mut dedup = vec![shared];
            dedup.extend(&tail);
            let outcome = rng.gen_range(-0.04..=0.04);
            let p_pool = aa_step(&mut pool, &decisions, outcome, LossKind::LongShort).unwrap();
            let p_collapsed =
                aa_step(&mut collapsed, &dedup, outcome, LossKind::LongShort).unwrap();
            let diff = (p_pool - p_collapsed).abs();
            worst_diff = worst_diff.max(diff);
            assert!(diff <= 1e-12, "collapse violated: |{p_pool} - {p_collapsed}| = {diff:e}");
        }
    }
    println!(
        "ACCEPTANCE 8 PASS regret bound: 0 violations in 1000 runs (min slack = {worst_slack:.3e}); duplicate collapse worst diff = {worst_diff:.2e}"
    );
}

#[test]
fn criterion_09_clusterised_identities_and_bound_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    // CAA with singleton clusters reproduces sleeping AA, both rules.
    let mut worst_caa: f64 = 0.0;
    for rule in [DecisionRule::Mean, DecisionRule::Pen] {
        let n = 7;
        let clusters = ClusterAssignment::singletons(n);
        let mut caa = WeightState::uniform(n, 1.0, 1.0);
        let mut aa = WeightState::uniform(n, 1.0, 1.0);
        for _ in 0..300 {
            let decisions: Vec<Option<f64>> = (0..n)
                .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(-1.0..=1.0)))
                .collect();
            let outcome = rng.gen_range(-0.03..=0.03);
            let p_caa = caa_step(&mut caa, &clusters, rule, &decisions, outcome, LossKind::Downside)
                .unwrap();
            let p_aa = aa_sleeping_step(&mut aa, &decisions, outcome, LossKind::Downside).unwrap();
            let diff = (p_caa - p_aa).abs();
            worst_caa = worst_caa.max(diff);
            assert!(diff <= 1e-12, "CAA {rule:?} diverged from AA by {diff:e}");
            for (a, b) in caa.weights.iter().zip(&aa.weights) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    // ECAA with singleton clusters reproduces sleeping AA bit for bit.
    {
        let n = 6;
        let clusters = ClusterAssignment::singletons(n);
        let mut meta: BTreeMap<usize, f64> = (0..n).map(|i| (i, 1.0 / n as f64)).collect();
        let mut plain = WeightState::uniform(n, 1.0, 1.0);
        for _ in 0..300 {
            let decisions: Vec<Option<f64>> = (0..n)
                .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(-1.0..=1.0)))
                .collect();
            let outcome = rng.gen_range(-0.03..=0.03);
            let meta_decisions: BTreeMap<usize, Option<f64>> =
                cluster_mean_decisions(&clusters, &decisions)
                    .into_iter()
                    .enumerate()
                    .collect();
            let p_meta =
                ecaa_step(&mut meta, 1.0, 1.0, &meta_decisions, outcome, LossKind::Downside)
                    .unwrap();
            let p_plain =
                aa_sleeping_step(&mut plain, &decisions, outcome, LossKind::Downside).unwrap();
            assert_eq!(p_meta, p_plain, "ECAA singleton trajectory diverged");
        }
    }

    // Bound-advantage verdict agrees with the first-principles comparison.
    let mut disagreements = 0usize;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=7);
        let cardinalities: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=10)).collect();
        let n: usize = cardinalities.iter().sum();
        let losses: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..5.0)).collect();
        let eta = rng.gen_range(0.25..=2.0);
        let result = cluster_bound_advantage(&cardinalities, &losses, n, eta).unwrap();

        // Independent route: both bounds straight from their definitions.
        let u_minus = losses
            .iter()
            .map(|l| l + (m as f64).ln() / eta)
            .fold(f64::INFINITY, f64::min);
        let u_star = cardinalities
            .iter()
            .zip(&losses)
            .map(|(c, l)| l + (n as f64 / *c as f64).ln() / eta)
            .fold(f64::INFINITY, f64::min);
        if result.advantage != (u_minus <= u_star) {
            disagreements += 1;
        }
        assert!((result.u_minus - u_minus).abs() <= 1e-12);
        assert!((result.u_star - u_star).abs() <= 1e-12);
    }
    assert_eq!(disagreements, 0);
    println!(
        "ACCEPTANCE 9 PASS clusterised identities: CAA worst diff = {worst_caa:.2e}, ECAA exact, bound verdicts 1000/1000"
    );
}

#[test]
fn criterion_10_drawdown_recurrence_vs_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    for _ in 0..1000 {
        let len = rng.gen_range(2..60);
        let mut equity = vec![1.0f64];
        for _ in 1..len {
            let r: f64 = rng.gen_range(-0.06..=0.06);
            let next = equity.last().unwrap() * (1.0 + r);
            equity.push(next);
        }
        let fast = max_drawdown(&equity);
        let mut brute = 0.0f64;
        for i in 0..equity.len() {
            for j in i..equity.len() {
                let dd = (equity[i] - equity[j]) / equity[i];
                if dd > brute {
                    brute = dd;
                }
            }
        }
        assert_eq!(fast, brute, "drawdown mismatch on {equity:?}");
    }
    let fixture = max_drawdown(&[1.0, 1.1, 0.99, 1.2]);
    assert!((fixture - 0.1).abs() <= 1e-15, "fixture drawdown {fixture}");
    println!(
        "ACCEPTANCE 10 PASS risk metrics: single-pass drawdown exact on 1000 random curves; fixture = {fixture}"
    );
}

#[test]
fn criterion_11_demo_pipeline_determinism() {
    let started = Instant::now();
    let manifest_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let config_path = manifest_dir.join("../../configs/demo.cfg");
    let text = std::fs::read_to_string(&config_path).expect("demo config present");
    let base = RunConfig::parse(&text).unwrap();
    assert_eq!(base.traders, 2000);
    assert_eq!(base.deltas_minutes.len(), 1);

    let tmp = tempfile::tempdir().unwrap();
    let mut first = base.clone();
    first.out_dir = tmp.path().join("run1");
    let mut second = base.clone();
    second.out_dir = tmp.path().join("run2");

    let run_started = Instant::now();
    let manifest1 = run_pipeline(&first, &Stage::all()).unwrap();
    let single_run = run_started.elapsed();
    let manifest2 = run_pipeline(&second, &Stage::all()).unwrap();

    // 50 sliding windows by construction.
    let windows = cotrade::backtest::sliding_windows(
        (base.start, base.end()),
        chrono::Duration::days(base.window_days),
        chrono::Duration::days(base.step_days),
    )
    .unwrap();
    assert_eq!(windows.len(), 50);

    assert_eq!(manifest1.config_hash, manifest2.config_hash);
    assert_eq!(manifest1.artifacts, manifest2.artifacts);

    let mut compared = 0usize;
    for entry in std::fs::read_dir(&first.out_dir).unwrap() {
        let path1 = entry.unwrap().path();
        let name = path1.file_name().unwrap().to_owned();
        let path2 = second.out_dir.join(&name);
        let bytes1 = std::fs::read(&path1).unwrap();
        let bytes2 = std::fs::read(&path2).unwrap();
        assert_eq!(bytes1, bytes2, "artifact {name:?} differs between reruns");
        compared += 1;
    }
    assert!(compared >= 20, "expected the full artifact set, saw {compared}");

    assert!(
        single_run.as_secs_f64() < 300.0,
        "single run took {single_run:?}"
    );
    let elapsed = started.elapsed();
    println!(
        "ACCEPTANCE 11 PASS determinism: {compared} artifacts byte-identical across reruns; single run {single_run:?} (total {elapsed:?})"
    );
}
