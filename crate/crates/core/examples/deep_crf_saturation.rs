//! How saturated are the source scores a deep CRF would push through hard
//! tanh, and what the stacked baselines make of them.

use transinit::baselines::{saturation_probe, train_deep_crf, Activation};
use transinit::corpus::holdout_dev;
use transinit::eval::{novel_classes, span_f1};
use transinit::synth::SynthSpec;
use transinit::transfer::{train_source, trans_init, TransferConfig};

fn main() -> transinit::Result<()> {
    let corpora = SynthSpec::default().generate()?;
    let (source_train, source_dev) = holdout_dev(&corpora.source, 0.1, 0)?;
    let (target, target_dev) = holdout_dev(&corpora.target_train, 0.1, 0)?;
    let train = target.subset(&(0..50).collect::<Vec<_>>())?;
    let config = TransferConfig::default();

    let (source, source_indexer, _) = train_source(&source_train, &source_dev, &config.source)?;
    let mut indexer = source_indexer.clone();
    indexer.unfreeze();
    indexer.grow(&train)?;
    let bottom = source.widen(indexer.len())?;
    for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = saturation_probe(bottom.emission(), &train, &indexer, t, 5000, 0)?;
        println!("|W^s x| > {t:<3}: {s:.3}");
    }
    println!("1 - tanh^2(2) = {:.4}", 1.0 - 2.0f64.tanh().powi(2));

    let test = &corpora.target_test;
    let novel = novel_classes(Some(source.labels()), train.label_set());
    for (name, activation) in [("deepcrf", Activation::HardTanh), ("twolayer", Activation::None)] {
        let (model, log) = train_deep_crf(&source, &train, &target_dev, &indexer, activation, &config.finetune)?;
        let f1 = span_f1(test, &model.predict_tags(&indexer, test), &novel)?.macro_f1_novel;
        println!("{name:<9} test F1 {f1:.3} (best epoch {})", log.best_epoch);
    }
    let (model, art) = trans_init(&source_train, &source_dev, &train, &target_dev, &config)?;
    let f1 = span_f1(test, &model.predict_tags(&art.indexer, test), &novel)?.macro_f1_novel;
    println!("transinit test F1 {f1:.3}");
    Ok(())
}
