//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).

mod oracle;

use gen::GenConfig;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use shapnarr::data::{load_csv_file, load_schema_file, select_background};
use shapnarr::{
    build_attribution_payload, exact_shap, generate, permutation_shap, permutation_shap_with_stats,
    post_process, template_backend_generate, verify_explanation, BackendError, Direction,
    FeatureVector, GenerationParams, HttpBackend, TreeEnsemble,
};
use std::time::{Duration, Instant};
use stub::{Step, StubServer};

fn fixture(path: &str) -> String {
    format!("{}/../../fixtures/{path}", env!("CARGO_MANIFEST_DIR"))
}

fn titanic() -> (TreeEnsemble, shapnarr::Dataset) {
    let model = TreeEnsemble::from_files(
        fixture("titanic/model.json"),
        fixture("titanic/metadata.json"),
    )
    .unwrap();
    let schema = load_schema_file(fixture("titanic/schema.json")).unwrap();
    let data = load_csv_file(fixture("titanic/passengers.csv"), &schema, true).unwrap();
    (model, data)
}

/// Criterion 1: exact attribution matches an independently coded
/// brute-force subset enumeration on 50 random ensembles, and satisfies
/// efficiency, inside 10 seconds.
#[test]
fn criterion_1_oracle_equivalence() {
    let started = Instant::now();
    for seed in 0..50u64 {
        let n = 1 + (seed as usize % 6);
        let cfg = GenConfig::small(n);
        let model = gen::random_ensemble(seed, &cfg);
        let x = gen::random_instance(seed, n);
        let background = gen::random_background(seed, n, cfg.max_background);

        let result = exact_shap(&model, &x, &background).unwrap();
        let (oracle_base, oracle_phi) = oracle::exact_shap(&model, &x, background.rows());

        assert!(
            (result.base_value - oracle_base).abs() <= 1e-12,
            "seed {seed}: base {} vs oracle {oracle_base}",
            result.base_value
        );
        for (i, (got, want)) in result.phi.iter().zip(&oracle_phi).enumerate() {
            assert!(
                (got - want).abs() <= 1e-12,
                "seed {seed}: phi[{i}] {got} vs oracle {want}"
            );
        }
        let gap =
            (result.base_value + result.phi.iter().sum::<f64>() - result.predicted_margin).abs();
        assert!(
            gap <= 1e-9 * result.predicted_margin.abs().max(1.0),
            "seed {seed}: efficiency gap {gap}"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("ACCEPTANCE 1 (Eq. 1 oracle equivalence, 50 ensembles in {elapsed:?}): PASS");
}

/// Criterion 2: dummy, symmetry, and linearity axioms over 100+ generated
/// cases each.
#[test]
fn criterion_2_axiom_suite() {
    // Dummy: features beyond the split pool never appear in a tree and must
    // get exactly zero.
    let mut dummy_checked = 0usize;
    for seed in 0..100u64 {
        let split_features = 1 + (seed as usize % 4);
        let cfg = GenConfig {
            n_features: split_features + 2,
            split_features,
            ..GenConfig::small(split_features + 2)
        };
        let model = gen::random_ensemble(seed, &cfg);
        let n = cfg.n_features;
        let x = gen::random_instance(seed.wrapping_add(1000), n);
        let background = gen::random_background(seed.wrapping_add(2000), n, 6);
        let result = exact_shap(&model, &x, &background).unwrap();
        for i in model.unused_features() {
            assert_eq!(result.phi[i], 0.0, "seed {seed}: dummy feature {i} nonzero");
            dummy_checked += 1;
        }
    }
    assert!(
        dummy_checked >= 100,
        "only {dummy_checked} dummy features seen"
    );

    // Symmetry: a model built as tree + mirrored tree with symmetric inputs
    // must attribute equally to the swapped pair.
    for seed in 0..100u64 {
        let model = gen::mirrored_pair_ensemble(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3000));
        let a: f64 = rng.random_range(0.0..1.0);
        let x = FeatureVector::from_values(&[a, a]);
        let rows: Vec<FeatureVector> = (0..rng.random_range(1..=6))
            .map(|_| {
                let b: f64 = rng.random_range(0.0..1.0);
                FeatureVector::from_values(&[b, b])
            })
            .collect();
        let background = shapnarr::BackgroundSet::new(rows).unwrap();
        let result = exact_shap(&model, &x, &background).unwrap();
        assert!(
            (result.phi[0] - result.phi[1]).abs() <= 1e-12,
            "seed {seed}: asymmetric phi {:?}",
            result.phi
        );
    }

    // Linearity: ensemble attribution equals the per-tree sum, base score
    // attributed once to the base value.
    for seed in 0..100u64 {
        let n = 1 + (seed as usize % 5);
        let model = gen::random_ensemble(seed.wrapping_add(5000), &GenConfig::small(n));
        let x = gen::random_instance(seed.wrapping_add(6000), n);
        let background = gen::random_background(seed.wrapping_add(7000), n, 6);
        let whole = exact_shap(&model, &x, &background).unwrap();
        let mut summed_phi = vec![0.0; n];
        let mut summed_base = model.base_score();
        for t in 0..model.trees().len() {
            let part = exact_shap(&model.single_tree(t), &x, &background).unwrap();
            for (acc, phi) in summed_phi.iter_mut().zip(&part.phi) {
                *acc += phi;
            }
            summed_base += part.base_value;
        }
        for (i, (whole_phi, summed)) in whole.phi.iter().zip(&summed_phi).enumerate() {
            assert!(
                (whole_phi - summed).abs() <= 1e-9,
                "seed {seed}: linearity violated at {i}: {whole_phi} vs {summed}"
            );
        }
        assert!((whole.base_value - summed_base).abs() <= 1e-9);
    }

    println!("ACCEPTANCE 2 (dummy/symmetry/linearity, 100 cases each): PASS");
}

/// Criterion 3: exhaustive-mode estimator equals exact; Monte Carlo mode
/// lands within 3 standard errors; results are bit-identical under 1, 2,
/// and 8 workers.
#[test]
fn criterion_3_estimator() {
    // Exhaustive mode for n <= 5 (120 >= n!).
    for seed in 100..125u64 {
        let n = 1 + (seed as usize % 5);
        let model = gen::random_ensemble(seed, &GenConfig::small(n));
        let x = gen::random_instance(seed, n);
        let background = gen::random_background(seed, n, 8);
        let exact = exact_shap(&model, &x, &background).unwrap();
        let sampled = permutation_shap(&model, &x, &background, 120, 9).unwrap();
        for i in 0..n {
            assert!(
                (exact.phi[i] - sampled.phi[i]).abs() <= 1e-9,
                "seed {seed}: exhaustive phi[{i}] {} vs exact {}",
                sampled.phi[i],
                exact.phi[i]
            );
        }
    }

    // The fixed 5-feature, 3-tree fixture with 4000 requested permutations
    // and seed 42. 5! = 120 <= 4000, so the estimator enumerates every
    // ordering; the 3-standard-error bound must hold (and the result is
    // exact up to summation order).
    let cfg = GenConfig {
        n_features: 5,
        split_features: 5,
        min_trees: 3,
        max_trees: 3,
        max_depth: 3,
        max_background: 8,
    };
    let model = gen::random_ensemble(4031, &cfg);
    assert_eq!(model.trees().len(), 3, "fixture must have 3 trees");
    let x = gen::random_instance(4031, 5);
    let background = gen::random_background(4031, 5, 8);
    let exact = exact_shap(&model, &x, &background).unwrap();
    let (est, stats) = permutation_shap_with_stats(&model, &x, &background, 4000, 42).unwrap();
    assert_eq!(est.n_permutations, 120, "5 features enumerate 5! orderings");
    for i in 0..5 {
        let gap = (est.phi[i] - exact.phi[i]).abs();
        assert!(gap <= 1e-9, "phi[{i}] gap {gap}");
        assert!(
            gap <= 3.0 * stats.std_errors[i] + 1e-12,
            "phi[{i}]: |{} - {}| = {gap} > 3 * {}",
            est.phi[i],
            exact.phi[i],
            stats.std_errors[i]
        );
    }

    // Genuine Monte Carlo: 7 features (7! = 5040 > 4000), same seed, same
    // 3-standard-error bound per feature.
    let cfg = GenConfig {
        n_features: 7,
        split_features: 7,
        min_trees: 3,
        max_trees: 3,
        max_depth: 3,
        max_background: 8,
    };
    let model = gen::random_ensemble(4650, &cfg);
    assert_eq!(model.trees().len(), 3, "fixture must have 3 trees");
    let x = gen::random_instance(4650, 7);
    let background = gen::random_background(4650, 7, 8);
    let exact = exact_shap(&model, &x, &background).unwrap();
    let (mc, stats) = permutation_shap_with_stats(&model, &x, &background, 4000, 42).unwrap();
    assert_eq!(mc.n_permutations, 4000);
    for i in 0..7 {
        let gap = (mc.phi[i] - exact.phi[i]).abs();
        assert!(
            gap <= 3.0 * stats.std_errors[i] + 1e-12,
            "phi[{i}]: |{} - {}| = {gap} > 3 * {}",
            mc.phi[i],
            exact.phi[i],
            stats.std_errors[i]
        );
    }

    // Bit-identical across worker counts, in both modes.
    for n_permutations in [120u64, 4000] {
        let run_with = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_shap(&model, &x, &background, n_permutations, 42).unwrap())
        };
        let one = run_with(1);
        let two = run_with(2);
        let eight = run_with(8);
        let bits =
            |r: &shapnarr::ShapResult| -> Vec<u64> { r.phi.iter().map(|p| p.to_bits()).collect() };
        assert_eq!(bits(&one), bits(&two));
        assert_eq!(bits(&one), bits(&eight));
        assert_eq!(one.base_value.to_bits(), eight.base_value.to_bits());
    }

    println!("ACCEPTANCE 3 (estimator: exhaustive, 3-sigma MC, worker-count determinism): PASS");
}

/// Criterion 4: the hand-checkable two-feature fixture yields
/// phi = (2.5, 1.5), base 0, via both methods.
#[test]
fn criterion_4_hand_checkable_fixture() {
    let model = TreeEnsemble::from_files(
        fixture("two_feature/model.json"),
        fixture("two_feature/metadata.json"),
    )
    .unwrap();
    let x = FeatureVector::from_values(&[1.0, 1.0]);
    let background =
        shapnarr::BackgroundSet::new(vec![FeatureVector::from_values(&[0.0, 0.0])]).unwrap();

    let exact = exact_shap(&model, &x, &background).unwrap();
    assert!((exact.base_value - 0.0).abs() <= 1e-12);
    assert!((exact.phi[0] - 2.5).abs() <= 1e-12);
    assert!((exact.phi[1] - 1.5).abs() <= 1e-12);

    let sampled = permutation_shap(&model, &x, &background, 2, 0).unwrap();
    assert!((sampled.phi[0] - 2.5).abs() <= 1e-12);
    assert!((sampled.phi[1] - 1.5).abs() <= 1e-12);

    // The independent oracle agrees.
    let (oracle_base, oracle_phi) = oracle::exact_shap(&model, &x, background.rows());
    assert!((oracle_base - 0.0).abs() <= 1e-12);
    assert!((oracle_phi[0] - 2.5).abs() <= 1e-12);
    assert!((oracle_phi[1] - 1.5).abs() <= 1e-12);

    println!("ACCEPTANCE 4 (two-feature fixture, both methods): PASS");
}

/// Criterion 5: Titanic fixtures end to end. Row 0 is the first-class adult
/// female (Sex positive and in the top two), row 1 the elderly passenger
/// (Age negative). Magnitudes are frozen goldens; margins are pinned
/// against the values produced by the external evaluation run.
#[test]
fn criterion_5_titanic_end_to_end() {
    let (model, data) = titanic();
    assert_eq!(
        model.feature_names(),
        ["Pclass", "Sex", "Age", "SibSp", "Parch", "Fare", "Embarked"]
    );
    assert_eq!(data.n_rows(), 50);

    // Every committed margin reproduces.
    let goldens: Vec<f64> = serde_json::from_str(
        &std::fs::read_to_string(fixture("titanic/golden_margins.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(goldens.len(), 50);
    for (row, expected) in data.rows.iter().zip(&goldens) {
        let margin = model.predict_margin(row).unwrap();
        assert!(
            (margin - expected).abs() <= 1e-9,
            "margin {margin} vs golden {expected}"
        );
    }

    let background = select_background(&data, 32, 7).unwrap();
    let sex = 1usize;
    let age = 2usize;

    // Row 0: first-class adult female.
    let female = exact_shap(&model, &data.rows[0], &background).unwrap();
    assert!(female.phi[sex] > 0.0, "phi_Sex = {}", female.phi[sex]);
    let mut by_magnitude: Vec<usize> = (0..7).collect();
    by_magnitude.sort_by(|&a, &b| female.phi[b].abs().total_cmp(&female.phi[a].abs()));
    assert!(
        by_magnitude[..2].contains(&sex),
        "Sex not in top-2: {by_magnitude:?} phi {:?}",
        female.phi
    );
    let female_golden = [
        0.8698305932056473,
        0.6599715937705387,
        0.10320908004403098,
        -0.12394656572232306,
        -0.0248326715207062,
        -0.007459250756418796,
        0.0,
    ];
    for (i, (got, want)) in female.phi.iter().zip(&female_golden).enumerate() {
        assert!(
            (got - want).abs() <= 1e-9,
            "row 0 phi[{i}] {got} vs golden {want}"
        );
    }
    assert!((female.base_value - 0.6085496828118486).abs() <= 1e-9);
    assert!((female.predicted_margin - 2.0853224618326167).abs() <= 1e-9);

    // Row 1: elderly passenger.
    let elderly = exact_shap(&model, &data.rows[1], &background).unwrap();
    assert!(elderly.phi[age] < 0.0, "phi_Age = {}", elderly.phi[age]);
    let elderly_golden = [
        0.14768550582194323,
        -1.2195305618402574,
        -0.8511744871447229,
        0.02752033367156122,
        -0.007095049005916064,
        -0.16561856594957733,
        0.0,
    ];
    for (i, (got, want)) in elderly.phi.iter().zip(&elderly_golden).enumerate() {
        assert!(
            (got - want).abs() <= 1e-9,
            "row 1 phi[{i}] {got} vs golden {want}"
        );
    }

    println!("ACCEPTANCE 5 (Titanic fixture: sign checks and frozen goldens): PASS");
}

/// Criterion 6: the template-backend demo is byte-deterministic, verifies
/// its own output with full coverage and no contradictions, and
/// post-processing is idempotent on 1000 random strings.
#[test]
fn criterion_6_explanation_pipeline() {
    // Byte-identical CLI demo runs.
    let demo = |()| {
        std::process::Command::new(env!("CARGO_BIN_EXE_shapnarr"))
            .args(["demo", "--format", "json"])
            .env_remove("SHAPNARR_LLM_URL")
            .env_remove("SHAPNARR_LLM_TOKEN")
            .output()
            .expect("run demo")
    };
    let first = demo(());
    let second = demo(());
    assert!(first.status.success(), "demo failed: {:?}", first);
    assert_eq!(
        first.stdout, second.stdout,
        "demo output not byte-identical"
    );

    // The demo's own verification reports full coverage, no contradictions.
    let json: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(json["verification"]["coverage"], serde_json::json!(1.0));
    for d in json["verification"]["directional_consistency"]
        .as_array()
        .unwrap()
    {
        assert_ne!(d.as_str().unwrap(), "contradicted");
    }

    // Library-level check on the Titanic payload as well.
    let (model, data) = titanic();
    let background = select_background(&data, 32, 7).unwrap();
    let shap = exact_shap(&model, &data.rows[0], &background).unwrap();
    let probability = model.predict_probability(&data.rows[0]).unwrap();
    let payload = build_attribution_payload(
        &shap,
        model.feature_names(),
        &data.rows[0],
        Some(probability),
        None,
    )
    .unwrap();
    let text = template_backend_generate(&payload, 3);
    let report = verify_explanation(&payload, &text, 3);
    assert_eq!(report.coverage, 1.0);
    assert!(report
        .directional_consistency
        .iter()
        .all(|d| *d != Direction::Contradicted));

    // Idempotence over 1000 random strings.
    let mut rng = ChaCha8Rng::seed_from_u64(1212);
    let palette: Vec<char> = "abcde FGHIJ.?!\n\"'()\u{e9}\u{4e16} ..".chars().collect();
    for round in 0..1000 {
        let len = rng.random_range(0..300);
        let raw: String = (0..len)
            .map(|_| palette[rng.random_range(0..palette.len())])
            .collect();
        let max_chars = rng.random_range(1..250);
        let once = post_process(&raw, None, max_chars);
        let twice = post_process(&once, None, max_chars);
        assert_eq!(once, twice, "round {round}: not idempotent for {raw:?}");
    }

    println!(
        "ACCEPTANCE 6 (deterministic demo, clean verification, idempotent post-processing): PASS"
    );
}

/// Criterion 7: the HTTP backend against a local stub: success, 500-retry,
/// and timeout behavior per the generate contract.
#[test]
fn criterion_7_http_backend_contract() {
    let params = |retries: u32, timeout_ms: u64| GenerationParams {
        retries,
        timeout: Duration::from_millis(timeout_ms),
        ..GenerationParams::default()
    };

    // Success: the completion text comes back verbatim and the request body
    // carries the protocol fields.
    let server = StubServer::start(vec![Step::Success("Fare raised the outcome.".to_string())]);
    let backend = HttpBackend::new(&server.base_url, Some("secret-token".to_string()));
    let text = generate(&backend, "explain this", &params(0, 2000)).unwrap();
    assert_eq!(text, "Fare raised the outcome.");
    let requests = server.join();
    assert_eq!(requests.len(), 1);
    assert!(requests[0].starts_with("POST /v1/completions"));
    assert!(requests[0].contains("Bearer secret-token"));
    let body_start = requests[0].find("\r\n\r\n").unwrap() + 4;
    let body: serde_json::Value = serde_json::from_str(&requests[0][body_start..]).unwrap();
    assert_eq!(body["prompt"], "explain this");
    assert_eq!(body["model"], "mistral-7b");
    assert!(body["temperature"].is_number());
    assert!(body["max_tokens"].is_number());

    // Two 500s with retries = 1: protocol error surfaced, exactly two calls.
    let server = StubServer::start(vec![
        Step::Status(500, "upstream crashed".to_string()),
        Step::Status(500, "upstream crashed".to_string()),
    ]);
    let backend = HttpBackend::new(&server.base_url, None);
    let err = generate(&backend, "p", &params(1, 2000)).unwrap_err();
    assert!(
        matches!(err, BackendError::Protocol { status: 500, ref body_excerpt } if body_excerpt.contains("upstream")),
        "got {err:?}"
    );
    assert_eq!(server.join().len(), 2);

    // 500 then success: the retry recovers.
    let server = StubServer::start(vec![
        Step::Status(500, "flaky".to_string()),
        Step::Success("recovered".to_string()),
    ]);
    let backend = HttpBackend::new(&server.base_url, None);
    assert_eq!(
        generate(&backend, "p", &params(1, 2000)).unwrap(),
        "recovered"
    );
    server.join();

    // 404 is not retried.
    let server = StubServer::start(vec![Step::Status(404, "no such model".to_string())]);
    let backend = HttpBackend::new(&server.base_url, None);
    let err = generate(&backend, "p", &params(3, 2000)).unwrap_err();
    assert!(matches!(err, BackendError::Protocol { status: 404, .. }));
    assert_eq!(server.join().len(), 1);

    // Empty choices: empty-generation error.
    let server = StubServer::start(vec![Step::EmptyChoices]);
    let backend = HttpBackend::new(&server.base_url, None);
    let err = generate(&backend, "p", &params(0, 2000)).unwrap_err();
    assert!(matches!(err, BackendError::EmptyCompletion));
    server.join();

    // Timeout: a hanging server trips the per-request timeout and the total
    // wall time stays within (retries + 1) * timeout plus slack.
    let server = StubServer::start(vec![
        Step::Hang(Duration::from_secs(5)),
        Step::Hang(Duration::from_secs(5)),
    ]);
    let backend = HttpBackend::new(&server.base_url, None);
    let started = Instant::now();
    let err = generate(&backend, "p", &params(1, 300)).unwrap_err();
    let elapsed = started.elapsed();
    assert!(matches!(err, BackendError::Unavailable(_)), "got {err:?}");
    assert!(
        elapsed < Duration::from_millis(2 * 300 + 1500),
        "took {elapsed:?}"
    );
    drop(server);

    println!("ACCEPTANCE 7 (HTTP backend: success/retry/timeout against a stub): PASS");
}
