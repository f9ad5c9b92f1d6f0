use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hdc_core::estimator::mc_mean;
use hdc_core::harness::{classify_dataset, Dataset, MethodConfig};
use hdc_core::metrics::{confusion_subtree, OTHER_COLUMN};
use hdc_core::scoring::{
    render_prompt, ImageRef, RecordingScorer, ReplayScorer, SampleSet, ScoreRequest, Scorer,
    SyntheticParams, SyntheticScorer,
};
use hdc_core::{classify_flat, classify_hdc, FlatConfig, HdcConfig, LabelTree, PruneStrategy};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> Arc<LabelTree> {
    Arc::new(LabelTree::load_path(fixture(name)).unwrap())
}

fn noisy(tree: &Arc<LabelTree>, sigma: f64, seed: u64) -> SyntheticScorer {
    SyntheticScorer::new(
        tree.clone(),
        SyntheticParams {
            noise_sigma: sigma,
            seed,
            ..SyntheticParams::default()
        },
    )
    .unwrap()
}

#[test]
fn replay_fixture_reproduces_recorded_run() {
    // replay200.json was recorded from this scorer and config
    let tree = load("small8.json");
    let dataset = Dataset::load(&fixture("replay200_dataset.json")).unwrap();
    let replay = ReplayScorer::load(&fixture("replay200.json")).unwrap();
    assert_eq!(replay.len(), 200);
    let config = FlatConfig {
        m_final: 5,
        sample_seed: 8,
        ..FlatConfig::default()
    };
    let live = noisy(&tree, 0.3, 77);
    for image in &dataset.images {
        let a = classify_flat(&tree, image, &live, &config).unwrap();
        let b = classify_flat(&tree, image, &replay, &config).unwrap();
        assert_eq!(a.prediction, b.prediction);
        assert_eq!(a.ranking, b.ranking);
        assert_eq!(a.posterior, b.posterior);
    }
}

#[test]
fn recorded_hdc_run_replays_bit_for_bit() {
    let tree = load("cifar100_like.txt");
    let images: Vec<ImageRef> = ["bee", "tulip", "rocket", "whale"]
        .iter()
        .enumerate()
        .map(|(i, c)| ImageRef::new(format!("img{i}"), Some(c.to_string())))
        .collect();
    let config = HdcConfig {
        m_final: 8,
        start_level: 2,
        strategy: PruneStrategy::dynamic(1.5),
        sample_seed: 3,
        ..HdcConfig::default()
    };
    let recording = RecordingScorer::new(noisy(&tree, 0.4, 1));
    let live: Vec<_> = images
        .iter()
        .map(|img| classify_hdc(&tree, img, &recording, &config).unwrap())
        .collect();
    let replay = ReplayScorer::from_rows(recording.rows()).unwrap();
    for (img, first) in images.iter().zip(&live) {
        let again = classify_hdc(&tree, img, &replay, &config).unwrap();
        assert_eq!(again.trace, first.trace);
        assert_eq!(again.classification.prediction, first.classification.prediction);
        assert_eq!(again.classification.posterior, first.classification.posterior);
    }
}

#[test]
fn mc_mean_matches_compensated_resum() {
    let tree = load("synthetic27.json");
    let scorer = noisy(&tree, 0.5, 9);
    let image = ImageRef::new("m", Some("class a11".into()));
    let prompt = render_prompt("A photo of a {label}", "class b02").unwrap();
    let samples = SampleSet::build(5, 100, 1000).unwrap();
    let errors: Vec<f64> = samples
        .iter()
        .map(|s| {
            scorer
                .score(&ScoreRequest {
                    image: &image,
                    prompt: &prompt,
                    sample: *s,
                })
                .unwrap()
        })
        .collect();
    // Kahan summation as the reference
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for e in &errors {
        let y = e - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    let reference = sum / errors.len() as f64;
    assert!((mc_mean(&errors).unwrap() - reference).abs() < 1e-12);
}

/// Flat classification written out longhand: score every leaf on every
/// sample and take the smallest average.
fn brute_force_predict(tree: &LabelTree, scorer: &dyn Scorer, image: &ImageRef, samples: &SampleSet) -> String {
    let mut best: Option<(f64, String)> = None;
    let mut labels = tree.leaf_labels();
    labels.sort();
    for label in labels {
        let prompt = render_prompt("A photo of a {label}", &label).unwrap();
        let mut total = 0.0;
        for s in samples.iter() {
            total += scorer
                .score(&ScoreRequest {
                    image,
                    prompt: &prompt,
                    sample: *s,
                })
                .unwrap();
        }
        let mean = total / samples.len() as f64;
        if best.as_ref().map_or(true, |(b, _)| mean < *b) {
            best = Some((mean, label));
        }
    }
    best.unwrap().1
}

#[test]
fn confusion_mass_stays_among_siblings() {
    let tree = load("cifar100_like.txt");
    let scorer = noisy(&tree, 0.5, 21);
    let insects = tree.nodes_with_label("insects").next().unwrap();
    let images: Vec<ImageRef> = tree
        .descendant_leaves(insects)
        .into_iter()
        .flat_map(|leaf| {
            let label = tree.label(leaf).to_string();
            (0..30).map(move |i| ImageRef::new(format!("{label}-{i}"), Some(label.clone())))
        })
        .collect();
    let config = FlatConfig {
        m_final: 4,
        sample_seed: 2,
        ..FlatConfig::default()
    };
    let (records, _) =
        classify_dataset(&tree, &images, &scorer, &MethodConfig::Flat(config.clone()), Some(2)).unwrap();
    let samples = SampleSet::build(config.sample_seed, config.m_final, config.t_max).unwrap();

    let mut expected: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (image, record) in images.iter().zip(&records) {
        let predicted = brute_force_predict(&tree, &scorer, image, &samples);
        assert_eq!(predicted, record.prediction, "{}", image.image_id);
        *expected
            .entry((image.true_class.clone().unwrap(), predicted))
            .or_insert(0) += 1;
    }

    let pairs: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.truth.clone().unwrap(), r.prediction.clone()))
        .collect();
    let matrix = confusion_subtree(&pairs, &tree, insects).unwrap();
    assert_eq!(matrix.total(), images.len() as u64);
    let other = matrix.columns.iter().position(|c| c == OTHER_COLUMN).unwrap();
    let mut sibling_errors = 0;
    for (r, truth) in matrix.rows.iter().enumerate() {
        for (c, predicted) in matrix.columns.iter().enumerate() {
            let count = matrix.counts[r][c];
            if c != other {
                assert_eq!(count, expected.get(&(truth.clone(), predicted.clone())).copied().unwrap_or(0));
                if c != r {
                    sibling_errors += count;
                }
            }
        }
    }
    let outside: u64 = matrix.counts.iter().map(|row| row[other]).sum();
    assert!(sibling_errors > 0, "noise should cause some confusion");
    // there are far more outside classes than siblings, so compare the error
    // rate per wrong candidate
    let n = matrix.rows.len() as f64;
    let per_sibling = sibling_errors as f64 / (n * (n - 1.0));
    let per_outsider = outside as f64 / (n * (tree.leaf_count() as f64 - n));
    assert!(
        per_sibling > 2.0 * per_outsider,
        "siblings {sibling_errors} ({per_sibling:.3}) vs outside {outside} ({per_outsider:.3})"
    );
}
