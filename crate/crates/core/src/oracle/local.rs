//! Deterministic offline oracles: rule-based NER and hashed trigram embeddings.

use std::collections::HashSet;

use super::{l2_normalize, Embedder, EntityRecognizer, OracleError};

/// Treats a string as a named entity when it looks like a capitalized proper
/// name (first character an uppercase letter, no digits) or is listed in the
/// gazetteer.
#[derive(Debug, Clone, Default)]
pub struct RuleNer {
    gazetteer: HashSet<String>,
}

impl RuleNer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_gazetteer<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RuleNer {
            gazetteer: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_entity(&self, s: &str) -> bool {
        if self.gazetteer.contains(s) {
            return true;
        }
        let mut chars = s.chars();
        chars.next().is_some_and(|c| c.is_uppercase()) && !s.chars().any(|c| c.is_ascii_digit())
    }
}

impl EntityRecognizer for RuleNer {
    fn named_entities(&self, candidates: &[String]) -> Result<Vec<String>, OracleError> {
        Ok(candidates.iter().filter(|c| self.is_entity(c)).cloned().collect())
    }
}

pub const TRIGRAM_DIM: usize = 256;

pub fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Hashed character-trigram counts, L2-normalized.
///
/// The label is lowercased and padded with `#` on both sides; each window of
/// three characters is hashed with 32-bit FNV-1a into one of 256 buckets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

impl TrigramEmbedder {
    pub fn vector(label: &str) -> Result<Vec<f64>, OracleError> {
        if label.trim().is_empty() {
            return Err(OracleError::InvalidInput("cannot embed an empty label".into()));
        }
        let padded: Vec<char> = std::iter::once('#')
            .chain(label.to_lowercase().chars())
            .chain(std::iter::once('#'))
            .collect();
        let mut v = vec![0.0; TRIGRAM_DIM];
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            v[fnv1a32(&buf[..n]) as usize % TRIGRAM_DIM] += 1.0;
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, label: &str) -> Result<Vec<f64>, OracleError> {
        Self::vector(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dot;

    #[test]
    fn rule_ner_fixture() {
        let ner = RuleNer::new();
        let input: Vec<String> = ["Suzhou", "1,276 km", "rapid transit system"].map(String::from).to_vec();
        assert_eq!(ner.named_entities(&input).unwrap(), vec!["Suzhou".to_string()]);
        assert!(ner.named_entities(&[]).unwrap().is_empty());
        let gaz = RuleNer::with_gazetteer(["city"]);
        assert!(gaz.is_entity("city"));
        assert!(!gaz.is_entity("town"));
    }

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 32-bit test vectors.
        assert_eq!(fnv1a32(b""), 0x811c9dc5);
        assert_eq!(fnv1a32(b"a"), 0xe40c292c);
        assert_eq!(fnv1a32(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn embeddings_are_unit_norm() {
        for l in ["spouse", "x", "Zoë", "bornIn", "a much longer relation label"] {
            let v = TrigramEmbedder::vector(l).unwrap();
            assert_eq!(v.len(), TRIGRAM_DIM);
            assert!((dot(&v, &v) - 1.0).abs() < 1e-6);
        }
        assert!(TrigramEmbedder::vector("").is_err());
    }

    #[test]
    fn frozen_similarities() {
        // Values from an independent re-implementation of the hashing scheme.
        let e = |s| TrigramEmbedder::vector(s).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(dot(&e("bornIn"), &e("birthPlace")), 0.12909944487358058));
        assert!(close(dot(&e("bornIn"), &e("operatesIn")), 0.2357022603955159));
        assert!(close(dot(&e("spouse"), &e("spouseOf")), 0.7216878364870323));
        assert!(close(dot(&e("spouse"), &e("color")), 0.18257418583505539));
        assert!((dot(&e("spouse"), &e("spouse")) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn similar_labels_score_higher() {
        let e = |s| TrigramEmbedder::vector(s).unwrap();
        assert!(dot(&e("spouse"), &e("spouseOf")) > dot(&e("spouse"), &e("color")));
        assert!(dot(&e("birthPlace"), &e("placeOfBirth")) > dot(&e("birthPlace"), &e("spouse")));
    }
}
