//! Saving a trained CRF with its feature indexer and loading both back.

use transinit::corpus::parse_conll_str;
use transinit::model::{indexer_digest, load_crf, load_indexer, read_file, save_crf, sha256_hex};
use transinit::transfer::train_source;
use transinit::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let news = parse_conll_str(include_str!("../data/toy_news.conll"), 0, 1)?;
    let (model, indexer, _) = train_source(&news, &news, &TrainConfig::default())?;

    let dir = std::env::temp_dir().join(format!("transinit-model-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (model_path, indexer_path) = (dir.join("model.bin"), dir.join("indexer.txt"));
    save_crf(&model_path, &model, &indexer)?;
    std::fs::write(&indexer_path, indexer.to_text())?;

    let bytes = read_file(&model_path)?;
    println!("model.bin: {} bytes, sha256 {}", bytes.len(), sha256_hex(&bytes));
    let (loaded, indexer_ref) = load_crf(&model_path)?;
    println!("indexer reference {indexer_ref} (matches: {})", indexer_ref == indexer_digest(&indexer));
    let loaded_indexer = load_indexer(&indexer_path, &indexer_ref)?;
    println!("weights identical: {}", loaded == model);
    println!("{} features, {} labels", loaded_indexer.len(), loaded.num_labels());

    std::fs::write(&indexer_path, "bias\n")?;
    match load_indexer(&indexer_path, &indexer_ref) {
        Err(e) => println!("edited indexer rejected: {e}"),
        Ok(_) => println!("edited indexer accepted"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
