//! Transfer from news types (PER, ORG, LOC) to campus types (STUDENT,
//! PROFESSOR, UNIVERSITY) with correlation learning and collapse.

use transinit::corpus::{holdout_dev, parse_conll_str};
use transinit::eval::{novel_classes, span_f1};
use transinit::transfer::{correlation_report, trans_init, TransferConfig};

fn main() -> transinit::Result<()> {
    let news = parse_conll_str(include_str!("../data/toy_news.conll"), 0, 1)?;
    let campus = parse_conll_str(include_str!("../data/toy_campus.conll"), 0, 1)?;
    let test = parse_conll_str(include_str!("../data/toy_campus_test.conll"), 0, 1)?;
    let (source_train, source_dev) = holdout_dev(&news, 0.1, 0)?;
    let (target_train, target_dev) = holdout_dev(&campus, 0.2, 0)?;

    let config = TransferConfig::default().with_seed(0);
    let (model, art) = trans_init(&source_train, &source_dev, &target_train, &target_dev, &config)?;

    println!("learned correlation (before renormalization):");
    print!("{}", correlation_report(&art.correlation, 2));
    println!("\nafter renormalization:");
    print!("{}", correlation_report(&art.renormalized, 2));

    let c = &art.correlation_log;
    println!("\ncorrelation: dev token accuracy {:.3} -> {:.3}", c.epochs[0].dev_score, c.best_dev_score);
    let f = &art.finetune_log;
    println!("fine-tune:   dev F1 {:.3} at init -> {:.3} after {} epochs", f.epochs[0].dev_score, f.best_dev_score, f.best_epoch);

    let novel = novel_classes(Some(art.source_model.labels()), model.labels());
    let report = span_f1(&test, &model.predict_tags(&art.indexer, &test), &novel)?;
    print!("\ntest:\n{}", report.to_table());
    Ok(())
}
