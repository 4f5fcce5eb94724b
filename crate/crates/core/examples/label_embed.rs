//! Label-name embedding alignment, compared with training from scratch.

use transinit::baselines::{align_labels, EmbeddingTable};
use transinit::corpus::{holdout_dev, parse_conll_str};
use transinit::eval::{train_and_evaluate, Method, SourceModel};
use transinit::transfer::{train_source, TransferConfig};

fn main() -> transinit::Result<()> {
    let table = EmbeddingTable::from_text(include_str!("../data/toy_embeddings.txt"))?;
    let news = parse_conll_str(include_str!("../data/toy_news.conll"), 0, 1)?;
    let campus = parse_conll_str(include_str!("../data/toy_campus.conll"), 0, 1)?;
    let test = parse_conll_str(include_str!("../data/toy_campus_test.conll"), 0, 1)?;

    for (target, source) in align_labels(news.label_set(), campus.label_set(), &table) {
        println!("{target:<11} <- {}", source.as_deref().unwrap_or("(none)"));
    }

    let config = TransferConfig::default();
    let (model, indexer, _) = train_source(&news, &news, &config.source)?;
    let source = SourceModel { model, indexer };
    let (train, dev) = holdout_dev(&campus, 0.2, 0)?;
    for n in [4, 8, train.len()] {
        let subset = train.subset(&(0..n).collect::<Vec<_>>())?;
        let score = |m| train_and_evaluate(m, Some(&source), &subset, &dev, &test, Some(&table), &config);
        println!(
            "{n:>3} sentences: cold {:.3}  labelembed {:.3}",
            score(Method::Cold)?.macro_f1_novel,
            score(Method::LabelEmbed)?.macro_f1_novel
        );
    }
    Ok(())
}
