use convrank::checkpoint::{load_checkpoint, save_checkpoint};
use convrank::corpus::{ExtractConfig, SplitRatios};
use convrank::embed::{encode_all, EncodedExample};
use convrank::eval::classifier_accuracy;
use convrank::model::{Arch, FeatureSet, ModelConfig};
use convrank::pipeline::{build_examples, build_vocabulary, ingest, VocabConfig};
use convrank::synth::{generate, SynthConfig};
use convrank::train::{adapt_new_user, evaluate_dev, train, AdaptConfig, Plateau, StopReason, TableSizes, TrainConfig};
use convrank::vocab::Vocabulary;
use convrank::Error;

struct Small {
    vocab: Vocabulary,
    train: Vec<EncodedExample>,
    dev: Vec<EncodedExample>,
}

fn small(posts: usize) -> Small {
    let corpus = generate(&SynthConfig {
        posts,
        max_filler: 0,
        ..Default::default()
    })
    .unwrap();
    let mut dump = Vec::new();
    corpus.write_jsonl(&mut dump, 0).unwrap();
    let (forest, _) = ingest(dump.as_slice(), true).unwrap();
    let (vocab, _) = build_vocabulary(&forest.trees, &VocabConfig::default(), 1000).unwrap();
    let extract = ExtractConfig {
        max_context: 1,
        ..Default::default()
    };
    let ratios = SplitRatios {
        train: 0.8,
        dev: 0.1,
        test: 0.1,
    };
    let data = build_examples(&forest.trees, &vocab, &extract, &ratios).unwrap();
    Small {
        train: encode_all(&data.split.train, &vocab.ngrams),
        dev: encode_all(&data.split.dev, &vocab.ngrams),
        vocab,
    }
}

fn sizes(v: &Vocabulary) -> TableSizes {
    TableSizes {
        ngrams: v.ngrams.len(),
        users: v.users.len(),
    }
}

#[test]
fn late_training_loss_is_below_early_loss() {
    let s = small(400);
    let cfg = TrainConfig {
        eval_every: s.train.len() / 10,
        plateau: Plateau {
            window: 100,
            min_gain: 0.001,
        },
        ..Default::default()
    };
    let (_, report) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    let losses: Vec<f64> = report.records.iter().filter_map(|r| r.train_loss).collect();
    assert!(losses.len() >= 10, "{losses:?}");
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last < first, "first tenth {first}, last tenth {last}");
}

#[test]
fn returned_model_is_the_best_checkpoint_and_survives_a_round_trip() {
    let s = small(200);
    let cfg = TrainConfig {
        eval_every: 500,
        epochs: 2,
        ..Default::default()
    };
    let (model, report) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    let best = report.best_record();
    assert!(report.records.iter().all(|r| r.dev.accuracy <= best.dev.accuracy));
    assert_eq!(report.records.first().unwrap().examples, 0);

    let in_memory = classifier_accuracy(&model, &s.dev).unwrap();
    let mut bytes = Vec::new();
    save_checkpoint(&mut bytes, &model, &s.vocab, cfg.seed).unwrap();
    let loaded = load_checkpoint(bytes.as_slice(), &s.vocab).unwrap();
    assert_eq!(loaded.seed, cfg.seed);
    assert_eq!(classifier_accuracy(&loaded.params, &s.dev).unwrap(), in_memory);
    assert_eq!(
        evaluate_dev(&loaded.params, &s.dev).unwrap(),
        evaluate_dev(&model, &s.dev).unwrap()
    );
    // Storage precision loses at most f32 rounding of the best checkpoint.
    assert!((in_memory - best.dev.accuracy).abs() < 0.02);
}

#[test]
fn single_worker_training_is_reproducible() {
    let s = small(100);
    let cfg = TrainConfig {
        eval_every: 300,
        ..Default::default()
    };
    let (a, ra) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    let (b, rb) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.records.len(), rb.records.len());
    for (x, y) in ra.records.iter().zip(&rb.records) {
        assert_eq!(x.dev, y.dev);
        assert_eq!(x.train_loss, y.train_loss);
    }
}

#[test]
fn plateau_stops_early() {
    let s = small(100);
    let cfg = TrainConfig {
        eval_every: 100,
        epochs: 50,
        lr: 1e-9,
        ..Default::default()
    };
    let (_, report) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    assert_eq!(report.stop, StopReason::Plateau);
    assert!(report.records.len() < 50);
}

#[test]
fn asynchronous_workers_train_every_architecture() {
    let s = small(150);
    for arch in [Arch::Single, Arch::Multi] {
        let cfg = TrainConfig {
            workers: 4,
            eval_every: 1000,
            plateau: Plateau {
                window: 100,
                min_gain: 0.001,
            },
            model: ModelConfig {
                arch,
                ..Default::default()
            },
            ..Default::default()
        };
        let (model, report) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
        assert!(model.is_finite());
        assert_eq!(report.stop, StopReason::Exhausted);
        assert_eq!(
            report.records.last().unwrap().examples,
            s.train.len() as u64,
            "{arch}: every example is consumed once"
        );
    }
}

#[test]
fn exploding_updates_abort_with_a_numeric_error() {
    let s = small(50);
    let cfg = TrainConfig {
        lr: 1e300,
        eval_every: 100,
        ..Default::default()
    };
    let err = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn adaptation_edge_cases() {
    let s = small(50);
    let cfg = TrainConfig {
        eval_every: 500,
        ..Default::default()
    };
    let (model, _) = train(&s.train, &s.dev, sizes(&s.vocab), &cfg).unwrap();
    let empty = adapt_new_user(&model, &[], &AdaptConfig::default()).unwrap();
    assert!(empty.empty_history);
    assert_eq!(empty.vector, empty.initial);
    assert!(empty
        .vector
        .iter()
        .all(|v| v.abs() <= 1.0 / (model.config.user_dim as f64).sqrt()));

    let no_author = TrainConfig {
        model: ModelConfig {
            features: "message+context".parse::<FeatureSet>().unwrap(),
            ..Default::default()
        },
        ..cfg
    };
    let (model, _) = train(&s.train, &s.dev, sizes(&s.vocab), &no_author).unwrap();
    let err = adapt_new_user(&model, &s.train[..5], &AdaptConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
