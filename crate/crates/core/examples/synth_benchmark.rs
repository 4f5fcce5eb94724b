//! The synthetic split-type benchmark: PERSON and ORG in the source, their
//! DOCTOR / PATIENT / HOSPITAL refinements in the target.

use transinit::synth::SynthSpec;

fn main() -> transinit::Result<()> {
    let spec = SynthSpec::default();
    println!("{}", serde_json::to_string_pretty(&spec.target_types).expect("spec serializes"));
    let corpora = spec.generate()?;
    for (name, c) in [("source", &corpora.source), ("target train", &corpora.target_train), ("target test", &corpora.target_test)] {
        println!("{name:<13} {:>4} sentences {:>6} tokens", c.len(), c.num_tokens());
    }
    println!("\nsample target sentences:");
    for s in corpora.target_train.sentences().iter().filter(|s| s.tags().iter().any(|t| *t != "O")).take(5) {
        let line: Vec<String> = s.tokens().iter().map(|t| format!("{}/{}", t.surface, t.gold_tag)).collect();
        println!("  {}", line.join(" "));
    }
    for (kind, lexicon) in &corpora.mention_lexicons {
        println!("{kind}: {} mention strings, e.g. {:?}", lexicon.len(), &lexicon[..3.min(lexicon.len())]);
    }
    println!("\ncontext-word oracle F1 on target test: {:.3}", spec.oracle_f1(&corpora.target_test)?);
    Ok(())
}
