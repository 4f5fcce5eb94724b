mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transinit::baselines::*;
use transinit::corpus::{holdout_dev, LabelSet};
use transinit::crf::CrfModel;
use transinit::eval::{fit_method, novel_classes, span_f1, train_and_evaluate, FittedModel, Method, SourceModel};
use transinit::matrix::Matrix;
use transinit::transfer::{train_source, CorrelationModel};

fn random_deep(rng: &mut ChaCha8Rng, activation: Activation, dim: usize) -> DeepCrfModel {
    let bottom = random_matrix(rng, 3, dim, 0.4);
    let top = CrfModel::new(labels(4), random_matrix(rng, 4, 3, 1.0), random_matrix(rng, 4, 4, 1.0)).unwrap();
    DeepCrfModel::new(bottom, top, activation).unwrap()
}

#[test]
fn deep_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for activation in [Activation::HardTanh, Activation::None] {
        let model = random_deep(&mut rng, activation, 10);
        let batch: Batch = (0..3)
            .map(|_| {
                let len = rng.gen_range(1..=5);
                (random_sequence(&mut rng, len, 10), random_labels(&mut rng, len, 4))
            })
            .collect();
        let g = model.nll_gradient(&batch).unwrap();
        let loss = |m: &DeepCrfModel| m.nll_gradient(&batch).unwrap().loss;
        let h = 1e-5;
        for _ in 0..40 {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let analytic = match rng.gen_range(0..3) {
                0 => {
                    let (r, c) = (rng.gen_range(0..3), rng.gen_range(0..10));
                    plus.bottom[(r, c)] += h;
                    minus.bottom[(r, c)] -= h;
                    g.bottom[(r, c)]
                }
                1 => {
                    let (r, c) = (rng.gen_range(0..4), rng.gen_range(0..3));
                    plus.top.emission_mut()[(r, c)] += h;
                    minus.top.emission_mut()[(r, c)] -= h;
                    g.top_emission[(r, c)]
                }
                _ => {
                    let (r, c) = (rng.gen_range(0..4), rng.gen_range(0..4));
                    plus.top.transition_mut()[(r, c)] += h;
                    minus.top.transition_mut()[(r, c)] -= h;
                    g.top_transition[(r, c)]
                }
            };
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!(relative_error(analytic, numeric) < 1e-3, "{activation:?}: {analytic} vs {numeric}");
        }
    }
}

proptest! {
    #[test]
    fn hard_tanh_is_idempotent_and_one_lipschitz(
        a in prop::collection::vec(-10.0f64..10.0, 1..8),
        shift in -3.0f64..3.0,
    ) {
        let h = hard_tanh(&a);
        prop_assert_eq!(hard_tanh(&h), h.clone());
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        for (p, q) in h.iter().zip(hard_tanh(&b)) {
            prop_assert!((p - q).abs() <= shift.abs() + 1e-12);
            prop_assert!(p.abs() <= 1.0);
        }
    }
}

#[test]
fn stacked_model_with_zero_top_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let source = CrfModel::new(labels(3), random_matrix(&mut rng, 3, 8, 3.0), Matrix::zeros(3, 3)).unwrap();
    let deep = DeepCrfModel::from_source(&source, labels(4), 12, Activation::HardTanh).unwrap();
    assert_eq!(deep.bottom.cols(), 12);
    for x in random_sequence(&mut rng, 5, 12) {
        assert!(deep.token_posterior(&x).iter().all(|p| (p - 0.25).abs() < 1e-12));
    }
}

#[test]
fn linear_stack_matches_the_correlation_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w_s = random_matrix(&mut rng, 3, 15, 2.0);
    let w_t = random_matrix(&mut rng, 4, 3, 2.0);
    let corr = CorrelationModel::new(w_t.clone(), w_s.clone(), labels(3), LabelSet::from_types(["A", "B", "C"])).unwrap();
    let top = CrfModel::new(corr.target_labels.clone(), w_t, Matrix::zeros(4, 4)).unwrap();
    let deep = DeepCrfModel::new(w_s, top, Activation::None).unwrap();
    for x in random_sequence(&mut rng, 50, 15) {
        let a = deep.token_posterior(&x);
        let b = corr.predict_proba(&x);
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-10));
    }
}

#[test]
fn saturation_falls_as_the_threshold_rises() {
    let news = toy("toy_news.conll");
    let (source, indexer, _) = train_source(&news, &news, &quick_config().source).unwrap();
    let mut last = 1.0;
    for t in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = saturation_probe(source.emission(), &news, &indexer, t, 2000, 0).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert!(s <= last, "{t}: {s} > {last}");
        last = s;
    }
    assert!(saturation_probe(source.emission(), &news, &indexer, 0.0, 10, 0).is_err());
    let again = saturation_probe(source.emission(), &news, &indexer, 1.0, 50, 3).unwrap();
    assert_eq!(again, saturation_probe(source.emission(), &news, &indexer, 1.0, 50, 3).unwrap());
}

#[test]
fn saturation_stat_of_tanh() {
    assert!(1.0 - 2.0f64.tanh().powi(2) < 0.08);
}

#[test]
fn labels_align_by_name_embeddings() {
    let table = toy_embeddings();
    let source = LabelSet::from_types(["PER", "ORG", "LOC"]);
    let target = LabelSet::from_types(["STUDENT", "PROFESSOR", "UNIVERSITY", "ZZZ"]);
    let a = align_labels(&source, &target, &table);
    assert_eq!(a["STUDENT"].as_deref(), Some("PER"));
    assert_eq!(a["PROFESSOR"].as_deref(), Some("PER"));
    assert_eq!(a["UNIVERSITY"].as_deref(), Some("ORG"));
    assert_eq!(a["ZZZ"], None);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]), None);
}

fn toy_source() -> SourceModel {
    let news = toy("toy_news.conll");
    let (model, indexer, _) = train_source(&news, &news, &quick_config().source).unwrap();
    SourceModel { model, indexer }
}

#[test]
fn label_embed_copies_aligned_rows() {
    let source = toy_source();
    let campus = toy("toy_campus.conll");
    let dim = source.indexer.len() + 5;
    let (init, alignment) =
        label_embed_init(&source.model, &toy_embeddings(), &campus, &campus, dim).unwrap();
    let wide = source.model.widen(dim).unwrap();
    let per = wide.labels().index_of("PER").unwrap();
    assert_eq!(alignment["STUDENT"].as_deref(), Some("PER"));
    let student = init.labels().index_of("STUDENT").unwrap();
    assert_eq!(init.emission().row(student), wide.emission().row(per));
    assert_eq!(init.emission().row(0), wide.emission().row(0));
}

#[test]
fn label_embed_beats_cold_start_on_toy_data() {
    let source = toy_source();
    let campus = toy("toy_campus.conll");
    let test = toy("toy_campus_test.conll");
    let train = campus.subset(&(0..6).collect::<Vec<_>>()).unwrap();
    let dev = campus.subset(&(30..40).collect::<Vec<_>>()).unwrap();
    let cfg = quick_config();
    let table = toy_embeddings();
    let score = |m| {
        train_and_evaluate(m, Some(&source), &train, &dev, &test, Some(&table), &cfg)
            .unwrap()
            .macro_f1_novel
    };
    let (cold, embed) = (score(Method::Cold), score(Method::LabelEmbed));
    assert!(embed > cold, "labelembed {embed} vs cold {cold}");
}

#[test]
fn unactivated_deep_crf_is_the_two_layer_crf() {
    let source = toy_source();
    let campus = toy("toy_campus.conll");
    let (train, dev) = holdout_dev(&campus, 0.25, 0).unwrap();
    let cfg = quick_config();
    let fit = |m, a| fit_method(m, Some(&source), &train, &dev, None, a, &cfg).unwrap();
    let (FittedModel::Deep { model: a, .. }, FittedModel::Deep { model: b, .. }) =
        (fit(Method::DeepCrf, Activation::None), fit(Method::TwoLayer, Activation::HardTanh))
    else {
        panic!("expected stacked models");
    };
    assert_eq!(a, b);
}

#[test]
fn every_method_runs_on_toy_data() {
    let source = toy_source();
    let campus = toy("toy_campus.conll");
    let test = toy("toy_campus_test.conll");
    let (train, dev) = holdout_dev(&campus, 0.25, 0).unwrap();
    let table = toy_embeddings();
    let novel = novel_classes(Some(source.model.labels()), campus.label_set());
    assert_eq!(novel.len(), 3);
    for m in Method::ALL {
        let fitted = fit_method(m, Some(&source), &train, &dev, Some(&table), Activation::HardTanh, &quick_config()).unwrap();
        let report = span_f1(&test, &fitted.predict_tags(&test), &novel).unwrap();
        assert!((0.0..=1.0).contains(&report.macro_f1_novel), "{m}");
    }
    assert!(fit_method(Method::TransInit, None, &train, &dev, None, Activation::HardTanh, &quick_config()).is_err());
    assert!(fit_method(Method::LabelEmbed, Some(&source), &train, &dev, None, Activation::HardTanh, &quick_config()).is_err());
}
