//! Phoneme groups and the 18-class viseme vocabulary.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{read_json, write_json};

pub const N_VISEMES: usize = 18;
pub const SILENCE: &str = "sil";

/// Viseme classes and their phonemes (IPA), class index = position.
pub const VISEME_TABLE: [(&str, &[&str]); N_VISEMES] = [
    ("sil", &["sil"]),
    ("AO + OY", &["a", "ɔ"]),
    ("AA + AE + AY", &["æ", "ɑ"]),
    ("EH + EY", &["e", "ɛ", "eɪ"]),
    ("IH + IY + EE + IX", &["i", "ɪ", "ɨ"]),
    ("OH + OW", &["o", "ɒ"]),
    ("AH + ER", &["ʌ", "ə", "ɚ", "ɝ"]),
    ("UW + AW + UH", &["u", "ʊ", "aʊ"]),
    ("JH", &["j", "ʤ"]),
    ("G + K + H", &["g", "k", "q", "ɢ"]),
    ("L + N + T + D", &["l", "n", "t", "d", "ʟ", "ɫ", "ɾ"]),
    ("S + Z", &["s", "z", "ɣ"]),
    ("Sh + Ch + Zh", &["ʃ", "ʧ", "ʒ"]),
    ("TH + DH", &["θ", "ð"]),
    ("F + V", &["f", "v"]),
    ("M + B + P", &["b", "m", "p"]),
    ("W", &["w", "ʍ"]),
    ("R", &["ɹ"]),
];

/// Index of the bilabial class.
pub const BILABIAL: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisemeVocabulary {
    classes: Vec<String>,
    phoneme_map: BTreeMap<String, usize>,
}

impl Default for VisemeVocabulary {
    fn default() -> Self {
        Self::canonical()
    }
}

impl VisemeVocabulary {
    pub fn canonical() -> Self {
        let classes = VISEME_TABLE.iter().map(|(c, _)| c.to_string()).collect();
        let mut phoneme_map = BTreeMap::new();
        for (idx, (_, phonemes)) in VISEME_TABLE.iter().enumerate() {
            for p in phonemes.iter() {
                let prev = phoneme_map.insert(p.to_string(), idx);
                debug_assert!(prev.is_none(), "phoneme {p} listed twice");
            }
        }
        Self {
            classes,
            phoneme_map,
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn phonemes(&self) -> impl Iterator<Item = (&str, usize)> {
        self.phoneme_map.iter().map(|(p, &i)| (p.as_str(), i))
    }

    /// Phonemes belonging to one class, in table order.
    pub fn phonemes_of(&self, class: usize) -> &'static [&'static str] {
        VISEME_TABLE[class].1
    }

    pub fn phoneme_to_viseme(&self, phoneme: &str) -> Result<usize> {
        self.phoneme_map
            .get(phoneme)
            .copied()
            .ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))
    }

    pub fn encode(&self, timeline: &[String]) -> Result<Vec<usize>> {
        timeline.iter().map(|p| self.phoneme_to_viseme(p)).collect()
    }
}

/// Free function form of [`VisemeVocabulary::phoneme_to_viseme`].
pub fn phoneme_to_viseme(phoneme: &str, vocab: &VisemeVocabulary) -> Result<usize> {
    vocab.phoneme_to_viseme(phoneme)
}

/// One phoneme symbol per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeTimeline {
    pub fps: f64,
    pub phonemes: Vec<String>,
}

impl PhonemeTimeline {
    pub fn load(path: &Path) -> Result<Self> {
        let t: PhonemeTimeline = read_json(path)?;
        if !(t.fps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: fps must be positive",
                path.display()
            )));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}
