//! Reading CoNLL columns, repairing BIO, span scoring and nested training splits.

use std::collections::BTreeSet;

use transinit::corpus::{holdout_dev, parse_conll_str, repair_bio, split_geometric_partitions, split_log_partitions};
use transinit::eval::{extract_spans, span_f1};

const TEXT: &str = "\
-DOCSTART- -X- O

Ada NNP B-PER
Lovelace NNP I-PER
visited VBD O
London NNP B-LOC
. . O

Acme NNP B-ORG
hired VBD O
Bob NNP B-PER
. . O
";

fn main() -> transinit::Result<()> {
    // token in column 0, tag in column 2
    let gold = parse_conll_str(TEXT, 0, 2)?;
    println!("{} sentences, {} tokens, types {:?}", gold.len(), gold.num_tokens(), gold.label_set().entity_types().collect::<Vec<_>>());
    print!("{}", gold.to_conll());

    let broken = ["I-PER", "I-PER", "O", "I-LOC", "O"];
    println!("repaired {:?} -> {:?}", broken, repair_bio(&broken));
    for span in extract_spans(&repair_bio(&broken)) {
        println!("  span {}..{} {}", span.start, span.end, span.kind);
    }

    let predicted = vec![
        vec!["B-PER", "I-PER", "O", "B-ORG", "O"],
        vec!["B-ORG", "O", "B-PER", "O"],
    ];
    let novel: BTreeSet<String> = ["LOC", "ORG"].iter().map(|s| s.to_string()).collect();
    let report = span_f1(&gold, &predicted, &novel)?;
    print!("\n{}", report.to_table());

    let corpus = parse_conll_str(include_str!("../data/toy_news.conll"), 0, 1)?;
    let (train, dev) = holdout_dev(&corpus, 0.1, 0)?;
    println!("\nholdout: {} train, {} dev", train.len(), dev.len());
    let log = split_log_partitions(&train, 5, 0)?;
    let geo = split_geometric_partitions(&train, 5, 4, 0)?;
    println!("log grid cumulative sizes       {:?}", log.cumulative_sizes());
    println!("geometric grid cumulative sizes {:?}", geo.cumulative_sizes());
    print!("{}", log.to_text());
    Ok(())
}
