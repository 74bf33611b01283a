//! TF-IDF vectorization of observation texts and cosine similarity.
//!
//! The vocabulary is rebuilt per training batch from all state texts of
//! all trajectories, then read-only. Tokenization is the simplest
//! deterministic choice: lowercase, split on non-alphanumeric runs. Term
//! weights use raw counts and smoothed idf `ln((1+n)/(1+df)) + 1`, then
//! L2 normalization, so all similarities land in [0, 1].

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Lowercase and split on non-alphanumeric runs, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Term index plus per-term document frequencies over a fixed corpus.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    term_index: HashMap<String, usize>,
    document_frequency: Vec<usize>,
    corpus_size: usize,
}

impl Vocabulary {
    pub fn vocab_size(&self) -> usize {
        self.document_frequency.len()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.document_frequency[index]
    }

    fn idf(&self, index: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Build a vocabulary from a corpus of documents, assigning indices in
/// first-seen order. Empty documents are allowed (their vectors will be
/// all-zero); an empty corpus is not.
pub fn build_vocabulary<S: AsRef<str>>(corpus: &[S]) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut term_index: HashMap<String, usize> = HashMap::new();
    let mut document_frequency: Vec<usize> = Vec::new();
    let mut seen_in_doc: Vec<usize> = Vec::new();
    for (doc_id, doc) in corpus.iter().enumerate() {
        for token in tokenize(doc.as_ref()) {
            match term_index.get(&token) {
                Some(&idx) => {
                    if seen_in_doc[idx] != doc_id {
                        seen_in_doc[idx] = doc_id;
                        document_frequency[idx] += 1;
                    }
                }
                None => {
                    term_index.insert(token, document_frequency.len());
                    document_frequency.push(1);
                    seen_in_doc.push(doc_id);
                }
            }
        }
    }
    Ok(Vocabulary {
        term_index,
        document_frequency,
        corpus_size: corpus.len(),
    })
}

/// Sparse term-weight vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Build from (index, weight) pairs; entries are sorted and duplicate
    /// indices summed. Zero weights are dropped.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        Self { entries: merged }
    }

    pub fn zero() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, w)| w * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale to unit L2 norm; an all-zero vector stays all-zero.
    pub fn normalize(&mut self) {
        let norm = self.l2_norm();
        if norm > 0.0 {
            for entry in &mut self.entries {
                entry.1 /= norm;
            }
        }
    }

    /// Dot product by merging the two sorted index lists.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut sum = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// TF-IDF vector of a text under a vocabulary: raw term counts weighted by
/// smoothed idf, L2-normalized. Out-of-vocabulary terms are ignored; a text
/// with no in-vocabulary terms yields the zero vector.
pub fn vectorize(text: &str, vocab: &Vocabulary) -> SparseVector {
    vectorize_tokens(&tokenize(text), vocab)
}

/// Same as [`vectorize`] but over pre-tokenized input, so a batch pipeline
/// can tokenize each text once.
pub fn vectorize_tokens(tokens: &[String], vocab: &Vocabulary) -> SparseVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for token in tokens {
        if let Some(idx) = vocab.index_of(token) {
            *counts.entry(idx).or_insert(0.0) += 1.0;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(idx, tf)| (idx, tf * vocab.idf(idx)))
        .collect();
    let mut v = SparseVector::from_entries(entries);
    v.normalize();
    v
}

/// Cosine similarity; 0 by definition if either vector is all-zero.
pub fn cosine(u: &SparseVector, v: &SparseVector) -> f64 {
    let nu = u.l2_norm();
    let nv = v.l2_norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(v) / (nu * nv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_counts_first_seen() {
        let vocab = build_vocabulary(&["go north", "go south"]).unwrap();
        assert_eq!(vocab.vocab_size(), 3);
        assert_eq!(vocab.index_of("go"), Some(0));
        assert_eq!(vocab.index_of("north"), Some(1));
        assert_eq!(vocab.index_of("south"), Some(2));
        assert_eq!(vocab.document_frequency(0), 2);
        assert_eq!(vocab.document_frequency(1), 1);
        assert_eq!(vocab.corpus_size(), 2);
    }

    #[test]
    fn duplicate_documents_double_df() {
        let vocab = build_vocabulary(&["key door", "key door"]).unwrap();
        assert_eq!(vocab.document_frequency(vocab.index_of("key").unwrap()), 2);
    }

    #[test]
    fn empty_document_allowed_empty_corpus_not() {
        let vocab = build_vocabulary(&[""]).unwrap();
        assert_eq!(vocab.vocab_size(), 0);
        assert!(matches!(
            build_vocabulary::<&str>(&[]),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn self_similarity_is_one() {
        let vocab = build_vocabulary(&["the red key fits the lock"]).unwrap();
        let v = vectorize("the red key fits the lock", &vocab);
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        assert!((v.l2_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_vocabulary_text_is_zero() {
        let vocab = build_vocabulary(&["alpha beta"]).unwrap();
        let v = vectorize("gamma delta", &vocab);
        assert!(v.is_zero());
        let u = vectorize("alpha", &vocab);
        assert_eq!(cosine(&v, &u), 0.0);
        assert_eq!(cosine(&v, &v), 0.0);
    }

    #[test]
    fn hand_computed_weights() {
        // Corpus ["a b", "a c"], text "a b":
        //   idf(a) = ln(3/3)+1 = 1, idf(b) = ln(3/2)+1 = 1.4054651081081644
        //   normalized -> (0.5797386715376657, 0.8148024746671689)
        let vocab = build_vocabulary(&["a b", "a c"]).unwrap();
        let v = vectorize("a b", &vocab);
        let entries = v.entries();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].0, vocab.index_of("a").unwrap());
        assert!((entries[0].1 - 0.5797386715376657).abs() < 1e-12);
        assert!((entries[1].1 - 0.8148024746671689).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_is_orthogonal() {
        let vocab = build_vocabulary(&["north gate", "south door"]).unwrap();
        let u = vectorize("north gate", &vocab);
        let v = vectorize("south door", &vocab);
        assert_eq!(cosine(&u, &v), 0.0);
    }

    #[test]
    fn oov_sentence_leaves_vector_unchanged() {
        let vocab = build_vocabulary(&["a b", "a c"]).unwrap();
        let base = vectorize("a b", &vocab);
        let extended = vectorize("a b xyzzy quux", &vocab);
        assert_eq!(base, extended);
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            tokenize("Open the DOOR-42, now!"),
            vec!["open", "the", "door", "42", "now"]
        );
        assert!(tokenize("--- ...").is_empty());
    }
}
