//! Synthetic stand-ins for the real corpora, which need platform agreements.
//!
//! Each profile mimics one corpus: its native label taxonomy, column layout
//! and OFF share. Texts are drawn from a shared pseudo-word language:
//!
//! * a shared neutral vocabulary and a per-corpus neutral vocabulary;
//! * a shared offensive lexicon plus a per-corpus lexicon, which borrows part
//!   of the next corpus' lexicon so neighbouring corpora overlap;
//! * topic words whose association with OFF/NOT is drawn per corpus, so the
//!   same word can lean offensive in one corpus and benign in another.
//!
//! OFF texts contain at least one offensive word; a small share of labels is
//! flipped.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Adapter, CanonicalDataset, LabeledInstance};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng::rng_for;

const LANGUAGE_SEED: u64 = 0x5EED_1A46;
const SHARED_NEUTRAL: usize = 300;
const SPECIFIC_NEUTRAL: usize = 120;
const SHARED_OFFENSIVE: usize = 20;
const OWN_OFFENSIVE: usize = 16;
const BORROWED_OFFENSIVE: usize = 8;
const TOPICS: usize = 40;
const LABEL_NOISE: f64 = 0.04;

/// Order fixes each profile's slot in the generated language.
const PROFILE_ORDER: [Adapter; 5] = [
    Adapter::Ahsd,
    Adapter::Olid,
    Adapter::Hasoc,
    Adapter::HateXplain,
    Adapter::OffendEs,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    pub adapter: Adapter,
    pub train_off: f64,
    pub test_off: f64,
}

impl SyntheticProfile {
    pub fn for_adapter(adapter: Adapter) -> Result<Self> {
        let (train_off, test_off) = match adapter {
            Adapter::Ahsd => (0.83, 0.82),
            Adapter::Hasoc => (0.36, 0.35),
            Adapter::HateXplain => (0.59, 0.58),
            Adapter::Olid => (0.33, 0.27),
            Adapter::OffendEs => (0.50, 0.50),
            Adapter::Canonical => {
                return Err(Error::Config("no synthetic profile for canonical data".into()))
            }
        };
        Ok(Self {
            adapter,
            train_off,
            test_off,
        })
    }

    fn slot(&self) -> usize {
        PROFILE_ORDER.iter().position(|&a| a == self.adapter).unwrap()
    }
}

struct Language {
    shared_neutral: Vec<String>,
    specific_neutral: Vec<Vec<String>>,
    shared_offensive: Vec<String>,
    own_offensive: Vec<Vec<String>>,
    topics: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
        w.push(*VOWELS.choose(rng).unwrap() as char);
    }
    if rng.random_bool(0.3) {
        w.push(*CONSONANTS.choose(rng).unwrap() as char);
    }
    w
}

impl Language {
    fn build() -> Self {
        let slots = PROFILE_ORDER.len();
        let total = SHARED_NEUTRAL
            + slots * SPECIFIC_NEUTRAL
            + SHARED_OFFENSIVE
            + slots * OWN_OFFENSIVE
            + TOPICS;
        let mut rng = rng_for(LANGUAGE_SEED, "synthetic-language");
        let mut seen = BTreeSet::new();
        let mut pool = Vec::with_capacity(total);
        while pool.len() < total {
            let w = pseudo_word(&mut rng);
            if seen.insert(w.clone()) {
                pool.push(w);
            }
        }
        let mut it = pool.into_iter();
        let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
        Self {
            shared_neutral: take(SHARED_NEUTRAL),
            specific_neutral: (0..slots).map(|_| take(SPECIFIC_NEUTRAL)).collect(),
            shared_offensive: take(SHARED_OFFENSIVE),
            own_offensive: (0..slots).map(|_| take(OWN_OFFENSIVE)).collect(),
            topics: take(TOPICS),
        }
    }

    fn offensive_lexicon(&self, slot: usize) -> Vec<String> {
        let mut lex = self.own_offensive[slot].clone();
        // the four English corpora borrow from their neighbour in a ring
        if slot < 4 {
            let next = (slot + 1) % 4;
            lex.extend(self.own_offensive[next][..BORROWED_OFFENSIVE].iter().cloned());
        }
        lex
    }
}

/// Per-corpus lean of each topic word: +1 towards OFF, -1 towards NOT, 0 none.
fn topic_leans(profile: &SyntheticProfile) -> Vec<i8> {
    let mut rng = rng_for(LANGUAGE_SEED, &format!("topic-lean/{}", profile.adapter));
    (0..TOPICS).map(|_| rng.random_range(-1..=1)).collect()
}

struct Generator<'a> {
    lang: &'a Language,
    slot: usize,
    lexicon: Vec<String>,
    leans: Vec<i8>,
}

impl Generator<'_> {
    fn text(&self, label: Label, rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(6..=16);
        let mut words: Vec<&str> = Vec::with_capacity(len + 2);
        if label == Label::Off {
            let n = rng.random_range(1..=2);
            for _ in 0..n {
                let w = if rng.random_bool(0.65) {
                    self.lexicon.choose(rng).unwrap()
                } else {
                    self.lang.shared_offensive.choose(rng).unwrap()
                };
                words.push(w);
            }
        }
        if rng.random_bool(0.7) {
            let want: i8 = if label == Label::Off { 1 } else { -1 };
            let weights: Vec<u32> = self
                .leans
                .iter()
                .map(|&l| if l == want { 6 } else if l == 0 { 2 } else { 1 })
                .collect();
            let idx = weighted_index(&weights, rng);
            words.push(&self.lang.topics[idx]);
        }
        while words.len() < len {
            let w = if rng.random_bool(0.4) {
                self.lang.specific_neutral[self.slot].choose(rng).unwrap()
            } else {
                self.lang.shared_neutral.choose(rng).unwrap()
            };
            words.push(w);
        }
        words.shuffle(rng);
        let mut text = words.join(" ");
        if rng.random_bool(0.3) {
            text = format!("@USER {text}");
        }
        if rng.random_bool(0.2) {
            text.push_str(" !");
        }
        text
    }
}

fn weighted_index(weights: &[u32], rng: &mut ChaCha8Rng) -> usize {
    let total: u32 = weights.iter().sum();
    let mut pick = rng.random_range(0..total);
    for (i, &w) in weights.iter().enumerate() {
        if pick < w {
            return i;
        }
        pick -= w;
    }
    weights.len() - 1
}

/// Source-taxonomy label string for a harmonized label.
fn native_label(adapter: Adapter, label: Label, rng: &mut ChaCha8Rng) -> &'static str {
    match (adapter, label) {
        (Adapter::Ahsd, Label::Off) => {
            if rng.random_bool(0.07) {
                "0"
            } else {
                "1"
            }
        }
        (Adapter::Ahsd, Label::Not) => "2",
        (Adapter::Hasoc, Label::Off) => "HOF",
        (Adapter::HateXplain, Label::Off) => {
            if rng.random_bool(0.5) {
                "hatespeech"
            } else {
                "offensive"
            }
        }
        (Adapter::HateXplain, Label::Not) => "normal",
        (Adapter::OffendEs, Label::Off) => ["OFP", "OFG", "OFO", "NOE"].choose(rng).unwrap(),
        (Adapter::OffendEs, Label::Not) => "NO",
        (_, Label::Off) => "OFF",
        (_, Label::Not) => "NOT",
    }
}

/// One synthetic row in the corpus' native vocabulary.
#[derive(Debug, Clone)]
pub struct NativeRow {
    pub id: String,
    pub text: String,
    pub native_label: &'static str,
}

fn generate_split(
    profile: &SyntheticProfile,
    split: &str,
    size: usize,
    off_fraction: f64,
    seed: u64,
) -> Vec<NativeRow> {
    let lang = Language::build();
    let slot = profile.slot();
    let generator = Generator {
        lexicon: lang.offensive_lexicon(slot),
        leans: topic_leans(profile),
        lang: &lang,
        slot,
    };
    let mut rng = rng_for(seed, &format!("synthetic/{}/{split}", profile.adapter));
    let n_off = (size as f64 * off_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..size)
        .map(|i| if i < n_off { Label::Off } else { Label::Not })
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let shown = if rng.random_bool(LABEL_NOISE) { label.flipped() } else { label };
            NativeRow {
                id: format!("{}-{split}-{i:05}", profile.adapter),
                text: generator.text(shown, &mut rng),
                native_label: native_label(profile.adapter, label, &mut rng),
            }
        })
        .collect()
}

/// Native-taxonomy rows for both splits.
pub fn generate_native(
    profile: &SyntheticProfile,
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> (Vec<NativeRow>, Vec<NativeRow>) {
    (
        generate_split(profile, "train", train_size, profile.train_off, seed),
        generate_split(profile, "test", test_size, profile.test_off, seed),
    )
}

fn harmonize(profile: &SyntheticProfile, rows: Vec<NativeRow>) -> Result<Vec<LabeledInstance>> {
    let mapping = profile.adapter.label_mapping();
    rows.into_iter()
        .map(|r| {
            let label = mapping.map(r.native_label).ok_or_else(|| Error::UnknownLabel {
                adapter: profile.adapter.tag().into(),
                label: r.native_label.into(),
            })?;
            Ok(LabeledInstance::new(r.id, &r.text, label, profile.adapter.tag())
                .expect("synthetic text is never blank"))
        })
        .collect()
}

/// Synthetic corpus with labels harmonized through the adapter's mapping.
pub fn generate(
    profile: &SyntheticProfile,
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<CanonicalDataset> {
    let (train, test) = generate_native(profile, train_size, test_size, seed);
    CanonicalDataset::new(
        profile.adapter.tag(),
        harmonize(profile, train)?,
        harmonize(profile, test)?,
    )
}

fn write_native_split(adapter: Adapter, rows: &[NativeRow], path: &Path) -> Result<()> {
    let (delimiter, header): (u8, [&str; 3]) = match adapter {
        Adapter::Ahsd => (b',', ["", "tweet", "class"]),
        Adapter::Olid => (b'\t', ["id", "tweet", "subtask_a"]),
        Adapter::Hasoc => (b',', ["tweet_id", "text", "task1"]),
        Adapter::HateXplain => (b',', ["post_id", "text", "label"]),
        Adapter::OffendEs => (b',', ["comment_id", "comment", "label"]),
        Adapter::Canonical => unreachable!("canonical data has no native layout"),
    };
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| Error::Csv(e))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record([r.id.as_str(), r.text.as_str(), r.native_label])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `train.<ext>` / `test.<ext>` in the corpus' native layout.
pub fn write_native_fixture(
    profile: &SyntheticProfile,
    dir: impl AsRef<Path>,
    train_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = if profile.adapter == Adapter::Olid { "tsv" } else { "csv" };
    let (train, test) = generate_native(profile, train_size, test_size, seed);
    write_native_split(profile.adapter, &train, &dir.join(format!("train.{ext}")))?;
    write_native_split(profile.adapter, &test, &dir.join(format!("test.{ext}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ingest, label_counts};

    #[test]
    fn hits_target_off_share() {
        let p = SyntheticProfile::for_adapter(Adapter::Ahsd).unwrap();
        let (train, _) = generate_native(&p, 1000, 10, 1);
        let off = train.iter().filter(|r| r.native_label != "2").count();
        assert_eq!(off, 830);
    }

    #[test]
    fn deterministic() {
        let p = SyntheticProfile::for_adapter(Adapter::Olid).unwrap();
        assert_eq!(generate(&p, 50, 20, 4).unwrap(), generate(&p, 50, 20, 4).unwrap());
        assert_ne!(generate(&p, 50, 20, 4).unwrap(), generate(&p, 50, 20, 5).unwrap());
    }

    #[test]
    fn native_files_ingest_to_same_dataset() {
        let dir = tempfile::tempdir().unwrap();
        for adapter in &PROFILE_ORDER {
            let p = SyntheticProfile::for_adapter(*adapter).unwrap();
            let sub = dir.path().join(adapter.tag());
            write_native_fixture(&p, &sub, 30, 10, 9).unwrap();
            let ds = ingest(&sub, *adapter).unwrap();
            let expected = generate(&p, 30, 10, 9).unwrap();
            assert_eq!(ds, expected, "{adapter}");
            assert_eq!(label_counts(&ds.train)[1] + label_counts(&ds.train)[0], 30);
        }
    }
}
