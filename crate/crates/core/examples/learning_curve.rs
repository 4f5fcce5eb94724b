//! Learning curves on the synthetic benchmark, one nested plan per seed.
//!
//! `cargo run --release --example learning_curve -- out.csv` also writes the table.

use transinit::corpus::holdout_dev;
use transinit::eval::{build_plan, run_curve_per_seed, CurveInputs, Method};
use transinit::synth::SynthSpec;
use transinit::transfer::TransferConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpora = SynthSpec::default().generate()?;
    let (source_train, source_dev) = holdout_dev(&corpora.source, 0.1, 0)?;
    let (target_train, target_dev) = holdout_dev(&corpora.target_train, 0.1, 0)?;
    let inputs = CurveInputs {
        source_train: &source_train,
        source_dev: &source_dev,
        target_train: &target_train,
        target_dev: &target_dev,
        target_test: &corpora.target_test,
        embeddings: None,
    };
    let seeds = [0u64, 1, 2];
    let plans = seeds
        .iter()
        .map(|&s| Ok((s, build_plan(&target_train, "geometric", 5, 10, s)?)))
        .collect::<transinit::Result<Vec<_>>>()?;
    let methods = [Method::Cold, Method::TransInit, Method::TransInitFrozen, Method::TwoLayer, Method::DeepCrf];
    let table = run_curve_per_seed(&methods, inputs, &plans, &TransferConfig::default())?;

    let sizes = plans[0].1.cumulative_sizes();
    print!("{:<17}", "median F1");
    sizes.iter().for_each(|s| print!("{s:>7}"));
    println!();
    for m in methods {
        print!("{:<17}", m.name());
        for &s in sizes {
            print!("{:>7.3}", table.median(m.name(), s).unwrap_or(f64::NAN));
        }
        println!();
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, table.to_csv())?;
        println!("wrote {path}");
    }
    Ok(())
}
