//! Language identification: an Arabic-script rule, then a character-trigram
//! naive Bayes model over English and French.

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

use crate::domain::Language;
use crate::fixtures::{FixtureError, FixtureSource};

/// Fraction of letters that must be Arabic script for the script rule.
pub const ARABIC_SHARE: f64 = 0.30;
/// Below this confidence the detector answers English.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LangIdError {
    #[error("empty input")]
    EmptyInput,
}

pub fn is_arabic_letter(c: char) -> bool {
    matches!(c,
        '\u{0600}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08FF}'
        | '\u{FB50}'..='\u{FDFF}'
        | '\u{FE70}'..='\u{FEFF}')
        && c.is_alphabetic()
}

/// Share of alphabetic characters in Arabic script, or 0 with no letters.
pub fn arabic_share(text: &str) -> f64 {
    let (mut letters, mut arabic) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if is_arabic_letter(c) {
            arabic += 1;
        }
    }
    if letters == 0 {
        0.0
    } else {
        arabic as f64 / letters as f64
    }
}

/// Lowercased letters with every other run of characters folded to one
/// space, padded with a space on both ends.
fn fold(text: &str) -> Vec<char> {
    let mut out = vec![' '];
    for c in text.nfc().flat_map(char::to_lowercase) {
        if c.is_alphabetic() || c == '\'' {
            out.push(c);
        } else if out.last() != Some(&' ') {
            out.push(' ');
        }
    }
    if out.last() != Some(&' ') {
        out.push(' ');
    }
    out
}

fn trigrams(text: &str) -> Vec<[char; 3]> {
    fold(text).windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

#[derive(Debug, Clone)]
struct TrigramModel {
    counts: HashMap<[char; 3], u32>,
    total: u64,
}

impl TrigramModel {
    fn train(corpus: &str) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0u64;
        for t in trigrams(corpus) {
            *counts.entry(t).or_insert(0) += 1;
            total += 1;
        }
        TrigramModel { counts, total }
    }

    /// Add-one smoothed log-probability of one trigram.
    fn log_prob(&self, t: &[char; 3], vocab: usize) -> f64 {
        let count = self.counts.get(t).copied().unwrap_or(0) as f64;
        ((count + 1.0) / (self.total as f64 + vocab as f64)).ln()
    }
}

/// The trained detector. Pure and deterministic for a fixed corpus.
#[derive(Debug, Clone)]
pub struct LanguageDetector {
    en: TrigramModel,
    fr: TrigramModel,
    vocab: usize,
    threshold: f64,
}

impl LanguageDetector {
    pub fn train(en_corpus: &str, fr_corpus: &str) -> Self {
        let en = TrigramModel::train(en_corpus);
        let fr = TrigramModel::train(fr_corpus);
        let mut vocab: Vec<&[char; 3]> = en.counts.keys().chain(fr.counts.keys()).collect();
        vocab.sort();
        vocab.dedup();
        let vocab = vocab.len() + 1;
        LanguageDetector {
            en,
            fr,
            vocab,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Trains on `langid/train.en.txt` and `langid/train.fr.txt`.
    pub fn load(source: &FixtureSource) -> Result<Self, FixtureError> {
        Ok(LanguageDetector::train(
            &source.read("langid/train.en.txt")?,
            &source.read("langid/train.fr.txt")?,
        ))
    }

    pub fn embedded() -> Self {
        LanguageDetector::load(&FixtureSource::Embedded).expect("embedded corpus present")
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    /// Posterior probability of French versus English under equal priors.
    fn french_posterior(&self, text: &str) -> f64 {
        let (mut en, mut fr) = (0.0f64, 0.0f64);
        for t in trigrams(text) {
            en += self.en.log_prob(&t, self.vocab);
            fr += self.fr.log_prob(&t, self.vocab);
        }
        1.0 / (1.0 + (en - fr).exp())
    }

    /// Returns the language and a confidence in `[0, 1]`.
    pub fn detect(&self, text: &str) -> Result<(Language, f64), LangIdError> {
        if text.trim().is_empty() {
            return Err(LangIdError::EmptyInput);
        }
        if arabic_share(text) >= ARABIC_SHARE {
            return Ok((Language::Ar, 1.0));
        }
        let p_fr = self.french_posterior(text);
        let (language, confidence) = if p_fr > 0.5 {
            (Language::Fr, p_fr)
        } else {
            (Language::En, 1.0 - p_fr)
        };
        if confidence < self.threshold {
            return Ok((Language::En, confidence));
        }
        Ok((language, confidence))
    }
}

/// Parses the labeled evaluation corpus: `label<TAB>phrase` per line, `#`
/// comments and blank lines skipped.
pub fn parse_labeled(tsv: &str) -> Vec<(Language, String)> {
    tsv.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let (label, phrase) = l.split_once('\t')?;
            Some((label.trim().parse().ok()?, phrase.trim().to_owned()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let d = LanguageDetector::embedded();
        assert_eq!(d.detect("عندي صداع شديد").unwrap(), (Language::Ar, 1.0));
        assert_eq!(
            d.detect("J'ai de la fièvre et des frissons").unwrap().0,
            Language::Fr
        );
        assert_eq!(d.detect("I have a sore throat").unwrap().0, Language::En);
        assert_eq!(d.detect("   "), Err(LangIdError::EmptyInput));
    }

    #[test]
    fn no_letters_defaults_to_english() {
        let d = LanguageDetector::embedded();
        let (lang, conf) = d.detect("12345 !!").unwrap();
        assert_eq!(lang, Language::En);
        assert!((conf - 0.5).abs() < 1e-9);
    }

    #[test]
    fn arabic_share_threshold() {
        assert!(arabic_share("abc") == 0.0);
        // 3 Arabic letters out of 10 letters.
        assert!((arabic_share("حمى abcdefg") - 0.3).abs() < 1e-9);
        let d = LanguageDetector::embedded();
        assert_eq!(d.detect("حمى abcdefg").unwrap().0, Language::Ar);
        assert_ne!(d.detect("حم abcdefgh").unwrap().0, Language::Ar);
    }

    #[test]
    fn deterministic() {
        let a = LanguageDetector::embedded();
        let b = LanguageDetector::embedded();
        for text in ["bonjour docteur", "hello doctor", "rendez-vous demain"] {
            assert_eq!(a.detect(text), b.detect(text));
        }
    }

    #[test]
    fn confidence_in_unit_interval() {
        let d = LanguageDetector::embedded();
        for (_, phrase) in parse_labeled(&FixtureSource::Embedded.read("langid/eval.tsv").unwrap())
        {
            let (_, c) = d.detect(&phrase).unwrap();
            assert!((0.0..=1.0).contains(&c));
        }
    }
}
