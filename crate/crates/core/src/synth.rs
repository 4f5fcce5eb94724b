//! Synthetic source/target corpora where target types split source types
//! and are told apart only by context words.
//!
//! Sentences look like `filler* cue? mention cue? filler*`. A target type
//! reuses its parent's mention strings (taken from mentions that actually
//! occur in the source corpus) and its parent's context cues, and adds its
//! own discriminating cue words. All text is lowercase.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence, Token};
use crate::error::{Error, Result};
use crate::eval::span_f1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTypeSpec {
    pub name: String,
    pub context_words: Vec<String>,
    /// Number of distinct mention strings.
    pub mention_lexicon_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTypeSpec {
    pub name: String,
    pub parent: String,
    pub discriminating_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub source_types: Vec<SourceTypeSpec>,
    pub target_types: Vec<TargetTypeSpec>,
    pub source_sentences: usize,
    pub target_train_sentences: usize,
    pub target_test_sentences: usize,
    pub filler_vocabulary: usize,
    /// Size of the target domain's own filler vocabulary.
    pub target_filler_vocabulary: usize,
    /// Probability that a target filler token comes from the source
    /// vocabulary instead of the target one. Below 1 the target text drifts
    /// away from what the source model has seen.
    pub shared_filler_rate: f64,
    /// Probability that a sentence carries no entity at all.
    pub empty_sentence_rate: f64,
    /// Probability that a cue slot next to a mention is filled.
    pub cue_rate: f64,
    /// Probability that a filler slot holds a context word of a random source type.
    pub distractor_rate: f64,
    pub seed: u64,
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl Default for SynthSpec {
    /// PERSON/ORG source; DOCTOR and PATIENT split PERSON, HOSPITAL splits ORG.
    fn default() -> Self {
        SynthSpec {
            source_types: vec![
                SourceTypeSpec {
                    name: "PERSON".into(),
                    context_words: words(&["said", "told", "met", "asked", "thanked", "called"]),
                    mention_lexicon_size: 150,
                },
                SourceTypeSpec {
                    name: "ORG".into(),
                    context_words: words(&[
                        "joined", "acquired", "shares", "headquarters", "merger", "announced",
                    ]),
                    mention_lexicon_size: 100,
                },
            ],
            target_types: vec![
                TargetTypeSpec {
                    name: "DOCTOR".into(),
                    parent: "PERSON".into(),
                    discriminating_words: words(&["prescribed", "diagnosed"]),
                },
                TargetTypeSpec {
                    name: "PATIENT".into(),
                    parent: "PERSON".into(),
                    discriminating_words: words(&["admitted", "complained"]),
                },
                TargetTypeSpec {
                    name: "HOSPITAL".into(),
                    parent: "ORG".into(),
                    discriminating_words: words(&["ward", "clinic"]),
                },
            ],
            source_sentences: 500,
            target_train_sentences: 278,
            target_test_sentences: 500,
            filler_vocabulary: 300,
            target_filler_vocabulary: 300,
            shared_filler_rate: 0.35,
            empty_sentence_rate: 0.15,
            cue_rate: 0.8,
            distractor_rate: 0.1,
            seed: 0,
        }
    }
}

/// Generated corpora plus the mention lexicons behind them.
#[derive(Debug, Clone)]
pub struct SynthCorpora {
    pub source: Corpus,
    pub target_train: Corpus,
    pub target_test: Corpus,
    pub mention_lexicons: BTreeMap<String, Vec<String>>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "tr", "st",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

struct WordFactory {
    used: BTreeSet<String>,
}

impl WordFactory {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.source_types.is_empty() || self.target_types.is_empty() {
            return bad("need at least one source and one target type".into());
        }
        if self.source_sentences == 0 || self.target_train_sentences == 0 || self.target_test_sentences == 0 {
            return bad("sentence counts must be positive".into());
        }
        if self.filler_vocabulary < 4 {
            return bad("filler vocabulary must hold at least 4 words".into());
        }
        if self.target_filler_vocabulary == 0 && self.shared_filler_rate < 1.0 {
            return bad("target filler vocabulary is empty but shared_filler_rate is below 1".into());
        }
        for p in [self.empty_sentence_rate, self.cue_rate, self.distractor_rate, self.shared_filler_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("rate {p} outside [0, 1]"));
            }
        }
        if self.empty_sentence_rate >= 1.0 {
            return bad("empty_sentence_rate must be below 1".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.source_types {
            if !names.insert(s.name.as_str()) || s.name == "O" {
                return bad(format!("duplicate or reserved source type {:?}", s.name));
            }
            if s.mention_lexicon_size == 0 {
                return bad(format!("{} has an empty mention lexicon", s.name));
            }
        }
        let mut target_names = BTreeSet::new();
        let mut disc_owner: BTreeMap<&str, &str> = BTreeMap::new();
        let context: BTreeSet<&str> = self
            .source_types
            .iter()
            .flat_map(|s| s.context_words.iter().map(String::as_str))
            .collect();
        for t in &self.target_types {
            if !target_names.insert(t.name.as_str()) || t.name == "O" {
                return bad(format!("duplicate or reserved target type {:?}", t.name));
            }
            if !names.contains(t.parent.as_str()) {
                return bad(format!("{} has unknown parent {:?}", t.name, t.parent));
            }
            if t.discriminating_words.is_empty() {
                return bad(format!("{} has no discriminating words", t.name));
            }
            for w in &t.discriminating_words {
                if let Some(other) = disc_owner.insert(w, &t.name) {
                    return bad(format!("discriminating word {w:?} shared by {other} and {}", t.name));
                }
                if context.contains(w.as_str()) {
                    return bad(format!("discriminating word {w:?} is also a source context word"));
                }
            }
        }
        Ok(())
    }

    /// Generates source, target-train, and target-test corpora, then checks
    /// that typing gold mentions by discriminating words alone is perfect.
    pub fn generate(&self) -> Result<SynthCorpora> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let reserved: BTreeSet<String> = self
            .source_types
            .iter()
            .flat_map(|s| s.context_words.iter().cloned())
            .chain(self.target_types.iter().flat_map(|t| t.discriminating_words.iter().cloned()))
            .collect();
        let mut factory = WordFactory { used: reserved };
        let filler: Vec<String> = (0..self.filler_vocabulary).map(|_| factory.fresh(&mut rng)).collect();
        let target_filler: Vec<String> = (0..self.target_filler_vocabulary)
            .map(|_| factory.fresh(&mut rng))
            .collect();

        let mut lexicons: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for s in &self.source_types {
            let pool: Vec<String> = (0..s.mention_lexicon_size.max(2))
                .map(|_| factory.fresh(&mut rng))
                .collect();
            let mut seen = BTreeSet::new();
            let mut lex = Vec::new();
            while lex.len() < s.mention_lexicon_size {
                let first = pool.choose(&mut rng).unwrap();
                let m = if rng.gen_bool(0.5) {
                    first.clone()
                } else {
                    format!("{first} {}", pool.choose(&mut rng).unwrap())
                };
                if seen.insert(m.clone()) {
                    lex.push(m);
                }
            }
            lexicons.insert(s.name.clone(), lex);
        }

        let source_ctx: BTreeMap<&str, &[String]> = self
            .source_types
            .iter()
            .map(|s| (s.name.as_str(), s.context_words.as_slice()))
            .collect();
        let all_context: Vec<&String> = self.source_types.iter().flat_map(|s| &s.context_words).collect();

        let mut builder = SentenceBuilder {
            rng: &mut rng,
            filler: &filler,
            target_filler: None,
            distractors: &all_context,
            spec: self,
        };

        let mut realized: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut source_sentences = Vec::with_capacity(self.source_sentences);
        for _ in 0..self.source_sentences {
            if builder.rng.gen_bool(self.empty_sentence_rate) {
                source_sentences.push(builder.empty()?);
                continue;
            }
            let ty = &self.source_types[builder.rng.gen_range(0..self.source_types.len())];
            let mention = lexicons[&ty.name].choose(builder.rng).unwrap().clone();
            realized.entry(ty.name.clone()).or_default().insert(mention.clone());
            let ctx = &ty.context_words;
            source_sentences.push(builder.with_mention(&ty.name, &mention, ctx, None)?);
        }
        for t in &self.target_types {
            if realized.get(&t.parent).is_none_or(BTreeSet::is_empty) {
                return Err(Error::InvalidArgument(format!(
                    "source corpus has no {} mention for {} to reuse",
                    t.parent, t.name
                )));
            }
        }
        let realized: BTreeMap<String, Vec<String>> = realized
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();

        let target = |count: usize, b: &mut SentenceBuilder| -> Result<Corpus> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                if b.rng.gen_bool(self.empty_sentence_rate) {
                    out.push(b.empty()?);
                    continue;
                }
                let t = &self.target_types[b.rng.gen_range(0..self.target_types.len())];
                let mention = realized[&t.parent].choose(b.rng).unwrap().clone();
                out.push(b.with_mention(&t.name, &mention, source_ctx[t.parent.as_str()], Some(&t.discriminating_words))?);
            }
            Ok(Corpus::new(out))
        };
        builder.target_filler = Some(&target_filler);
        let target_train = target(self.target_train_sentences, &mut builder)?;
        let target_test = target(self.target_test_sentences, &mut builder)?;

        let out = SynthCorpora {
            source: Corpus::new(source_sentences),
            target_train,
            target_test,
            mention_lexicons: lexicons,
        };
        for c in [&out.target_train, &out.target_test] {
            let f1 = self.oracle_f1(c)?;
            if f1 != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "discriminating-word oracle reaches only F1 {f1}; benchmark is not solvable"
                )));
            }
        }
        Ok(out)
    }

    /// Macro span-F1 of an oracle that keeps gold mention boundaries and
    /// types each mention by the discriminating words in its sentence.
    pub fn oracle_f1(&self, corpus: &Corpus) -> Result<f64> {
        let owner: BTreeMap<&str, &str> = self
            .target_types
            .iter()
            .flat_map(|t| t.discriminating_words.iter().map(move |w| (w.as_str(), t.name.as_str())))
            .collect();
        let predicted: Vec<Vec<String>> = corpus
            .sentences()
            .iter()
            .map(|s| {
                let cues: BTreeSet<&str> = s
                    .tokens()
                    .iter()
                    .filter(|t| t.entity_type().is_none())
                    .filter_map(|t| owner.get(t.surface.as_str()).copied())
                    .collect();
                let guess = (cues.len() == 1).then(|| *cues.iter().next().unwrap());
                s.tokens()
                    .iter()
                    .map(|t| match (t.gold_tag.get(..2), guess) {
                        (Some(prefix @ ("B-" | "I-")), Some(g)) => format!("{prefix}{g}"),
                        _ => "O".to_string(),
                    })
                    .collect()
            })
            .collect();
        let classes = self.target_types.iter().map(|t| t.name.clone()).collect();
        Ok(span_f1(corpus, &predicted, &classes)?.macro_f1_novel)
    }
}

struct SentenceBuilder<'a> {
    rng: &'a mut ChaCha8Rng,
    filler: &'a [String],
    target_filler: Option<&'a [String]>,
    distractors: &'a [&'a String],
    spec: &'a SynthSpec,
}

impl SentenceBuilder<'_> {
    fn filler_word(&mut self) -> String {
        if !self.distractors.is_empty() && self.rng.gen_bool(self.spec.distractor_rate) {
            (*self.distractors.choose(self.rng).unwrap()).clone()
        } else {
            match self.target_filler {
                Some(t) if !self.rng.gen_bool(self.spec.shared_filler_rate) => t.choose(self.rng).unwrap().clone(),
                _ => self.filler.choose(self.rng).unwrap().clone(),
            }
        }
    }

    fn fillers(&mut self, lo: usize, hi: usize) -> Vec<Token> {
        let n = self.rng.gen_range(lo..=hi);
        (0..n).map(|_| Token::new(self.filler_word(), "O")).collect()
    }

    fn empty(&mut self) -> Result<Sentence> {
        Sentence::new(self.fillers(4, 9))
    }

    /// `filler cue? mention cue? filler`. With `discriminators`, one cue slot
    /// always holds a discriminating word and the other a parent cue or filler.
    fn with_mention(
        &mut self,
        kind: &str,
        mention: &str,
        context: &[String],
        discriminators: Option<&[String]>,
    ) -> Result<Sentence> {
        let cue = |b: &mut Self| -> Option<String> {
            (!context.is_empty() && b.rng.gen_bool(b.spec.cue_rate))
                .then(|| context.choose(b.rng).unwrap().clone())
        };
        let (mut left, mut right) = (cue(self), cue(self));
        if let Some(disc) = discriminators {
            let word = disc.choose(self.rng).unwrap().clone();
            if self.rng.gen_bool(0.5) {
                left = Some(word);
            } else {
                right = Some(word);
            }
        }
        let mut tokens = self.fillers(1, 4);
        tokens.extend(left.map(|w| Token::new(w, "O")));
        for (i, w) in mention.split(' ').enumerate() {
            let tag = if i == 0 { format!("B-{kind}") } else { format!("I-{kind}") };
            tokens.push(Token::new(w, tag));
        }
        tokens.extend(right.map(|w| Token::new(w, "O")));
        tokens.extend(self.fillers(1, 4));
        Sentence::new(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            source_sentences: 120,
            target_train_sentences: 40,
            target_test_sentences: 40,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn target_mentions_occur_in_source() {
        let c = small().generate().unwrap();
        let spans = |corpus: &Corpus, kinds: &[&str]| -> BTreeSet<String> {
            corpus
                .sentences()
                .iter()
                .flat_map(|s| {
                    crate::eval::extract_spans(&s.tags())
                        .into_iter()
                        .filter(|sp| kinds.contains(&sp.kind.as_str()))
                        .map(|sp| {
                            s.tokens()[sp.start..sp.end]
                                .iter()
                                .map(|t| t.surface.as_str())
                                .collect::<Vec<_>>()
                                .join(" ")
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let person = spans(&c.source, &["PERSON"]);
        let target = spans(&c.target_train, &["DOCTOR", "PATIENT"]);
        assert!(!target.is_empty());
        assert!(target.is_subset(&person));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = small().generate().unwrap();
        let b = small().generate().unwrap();
        assert_eq!(a.source.to_conll(), b.source.to_conll());
        assert_eq!(a.target_test.to_conll(), b.target_test.to_conll());
        let c = SynthSpec { seed: 1, ..small() }.generate().unwrap();
        assert_ne!(a.source.to_conll(), c.source.to_conll());
    }

    #[test]
    fn oracle_solves_benchmark() {
        let spec = small();
        let c = spec.generate().unwrap();
        assert_eq!(spec.oracle_f1(&c.target_train).unwrap(), 1.0);
        let types: Vec<&str> = c.target_train.label_set().entity_types().collect();
        assert_eq!(types, ["DOCTOR", "HOSPITAL", "PATIENT"]);
    }

    #[test]
    fn inconsistent_specs_rejected() {
        let mut spec = small();
        spec.target_types[1].discriminating_words.push("prescribed".into());
        assert!(spec.generate().is_err());
        let mut spec = small();
        spec.target_types[0].parent = "LOCATION".into();
        assert!(spec.validate().is_err());
        let mut spec = small();
        spec.target_types[0].discriminating_words = vec!["said".into()];
        assert!(spec.validate().is_err());
    }
}
