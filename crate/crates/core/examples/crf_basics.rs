//! Train a linear-chain CRF on the bundled toy news corpus and inspect it.

use transinit::corpus::{holdout_dev, parse_conll_str, Corpus, Sentence};
use transinit::crf::{train_crf, TrainConfig};
use transinit::FeatureIndexer;

fn main() -> transinit::Result<()> {
    let corpus = parse_conll_str(include_str!("../data/toy_news.conll"), 0, 1)?;
    let (train, dev) = holdout_dev(&corpus, 0.2, 0)?;
    println!("{} train / {} dev sentences, labels {:?}", train.len(), dev.len(), train.label_set().names());

    let mut indexer = FeatureIndexer::new();
    indexer.grow(&train)?;
    indexer.freeze();
    let (model, log) = train_crf(&train, &dev, &indexer, &TrainConfig::default(), None)?;
    for e in &log.epochs {
        println!("epoch {:>2}  objective {:>9.3}  dev F1 {:.3}", e.epoch, e.objective, e.dev_score);
    }
    println!("kept epoch {} (dev F1 {:.3})", log.best_epoch, log.best_dev_score);

    let sentence = Sentence::from_pairs(&[
        ("Anna", "O"), ("Berg", "O"), ("joined", "O"), ("Nordbank", "O"), ("in", "O"), ("Oslo", "O"), (".", "O"),
    ])?;
    let features = indexer.lookup_sentence(&sentence);
    let tags = model.predict_tags(&indexer, &Corpus::new(vec![sentence.clone()]));
    let marginals = model.posterior_marginals(&features);
    println!("\nlog Z = {:.4}", model.log_partition(&features));
    for (i, token) in sentence.tokens().iter().enumerate() {
        let best = transinit::transfer::argmax(&marginals.node[i]);
        println!("{:<10} {:<6} p={:.3}", token.surface, tags[0][i], marginals.node[i][best]);
    }
    Ok(())
}
