//! Text to numbers: tokenization, vocabulary, bag-of-words, tf-idf and
//! token-id sequences.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum sequence length; longer texts keep their prefix.
pub const DEFAULT_MAX_LEN: usize = 64;

/// Lowercases and splits on whitespace and punctuation. Tokens are maximal
/// runs of alphanumeric characters; everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    doc_frequencies: Vec<usize>,
    total_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn doc_frequency(&self, id: usize) -> usize {
        self.doc_frequencies[id]
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    /// In-vocabulary token ids of `text`, in order. Unknown tokens are skipped.
    pub fn ids(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .iter()
            .filter_map(|t| self.id(t))
            .collect()
    }

    fn idf(&self, id: usize) -> f64 {
        let n = self.total_docs as f64;
        let df = self.doc_frequencies[id] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&VocabularyFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: VocabularyFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyEntry {
    token: String,
    id: usize,
    df: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    total_docs: usize,
    tokens: Vec<VocabularyEntry>,
}

impl From<&Vocabulary> for VocabularyFile {
    fn from(v: &Vocabulary) -> Self {
        Self {
            total_docs: v.total_docs,
            tokens: v
                .id_to_token
                .iter()
                .enumerate()
                .map(|(id, token)| VocabularyEntry {
                    token: token.clone(),
                    id,
                    df: v.doc_frequencies[id],
                })
                .collect(),
        }
    }
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(mut file: VocabularyFile) -> Result<Self> {
        file.tokens.sort_by_key(|e| e.id);
        let mut token_to_id = HashMap::with_capacity(file.tokens.len());
        let mut id_to_token = Vec::with_capacity(file.tokens.len());
        let mut doc_frequencies = Vec::with_capacity(file.tokens.len());
        for (expected, entry) in file.tokens.into_iter().enumerate() {
            if entry.id != expected {
                return Err(Error::Validation(format!(
                    "vocabulary ids are not dense: expected {expected}, found {}",
                    entry.id
                )));
            }
            if token_to_id.insert(entry.token.clone(), entry.id).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary token {:?}",
                    entry.token
                )));
            }
            id_to_token.push(entry.token);
            doc_frequencies.push(entry.df);
        }
        if id_to_token.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Self {
            token_to_id,
            id_to_token,
            doc_frequencies,
            total_docs: file.total_docs,
        })
    }
}

/// Builds a vocabulary. Tokens below `min_df` documents are dropped; of the
/// rest at most `max_size` are kept, highest document frequency first with
/// lexicographic order breaking ties. Ids follow that order.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_df: usize, max_size: usize) -> Result<Vocabulary> {
    if texts.is_empty() {
        return Err(Error::Argument("cannot build a vocabulary from zero texts".into()));
    }
    if min_df < 1 {
        return Err(Error::Argument("min_df must be at least 1".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let distinct: HashSet<String> = tokenize(text.as_ref()).into_iter().collect();
        for token in distinct {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= min_df).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    if ranked.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut token_to_id = HashMap::with_capacity(ranked.len());
    let mut id_to_token = Vec::with_capacity(ranked.len());
    let mut doc_frequencies = Vec::with_capacity(ranked.len());
    for (id, (token, n)) in ranked.into_iter().enumerate() {
        token_to_id.insert(token.clone(), id);
        id_to_token.push(token);
        doc_frequencies.push(n);
    }
    Ok(Vocabulary {
        token_to_id,
        id_to_token,
        doc_frequencies,
        total_docs: texts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Bow,
    Tfidf,
    Sequence,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bow => "bow",
            Self::Tfidf => "tfidf",
            Self::Sequence => "sequence",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(Self::Bow),
            "tfidf" => Ok(Self::Tfidf),
            "sequence" => Ok(Self::Sequence),
            other => Err(Error::Argument(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// Dense vector of length V.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

/// In-vocabulary token ids, never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Vector(FeatureVector),
    Sequence(TokenSequence),
}

pub fn bow_from_ids(ids: &[usize], vocab: &Vocabulary) -> FeatureVector {
    let mut v = vec![0.0; vocab.len()];
    for &id in ids {
        v[id] += 1.0;
    }
    FeatureVector(v)
}

/// Smoothed tf-idf, `count * (ln((1+N)/(1+df)) + 1)`, then L2-normalized.
/// A text with no in-vocabulary token maps to the zero vector.
pub fn tfidf_from_ids(ids: &[usize], vocab: &Vocabulary) -> FeatureVector {
    let FeatureVector(mut v) = bow_from_ids(ids, vocab);
    for (id, x) in v.iter_mut().enumerate() {
        if *x != 0.0 {
            *x *= vocab.idf(id);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    FeatureVector(v)
}

pub fn featurize(text: &str, vocab: &Vocabulary, mode: FeatureMode, max_len: usize) -> Result<Features> {
    features_from_ids(&vocab.ids(text), vocab, mode, max_len)
}

pub fn features_from_ids(
    ids: &[usize],
    vocab: &Vocabulary,
    mode: FeatureMode,
    max_len: usize,
) -> Result<Features> {
    Ok(match mode {
        FeatureMode::Bow => Features::Vector(bow_from_ids(ids, vocab)),
        FeatureMode::Tfidf => Features::Vector(tfidf_from_ids(ids, vocab)),
        FeatureMode::Sequence => {
            let n = ids.len().min(max_len);
            Features::Sequence(TokenSequence::new(ids[..n].to_vec())?)
        }
    })
}

/// A vocabulary bound to a feature mode; the unit every model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub mode: FeatureMode,
    pub max_len: usize,
}

impl Featurizer {
    pub fn new(vocab: Vocabulary, mode: FeatureMode) -> Self {
        Self {
            vocab,
            mode,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    pub fn featurize(&self, text: &str) -> Result<Features> {
        featurize(text, &self.vocab, self.mode, self.max_len)
    }

    /// Token ids this featurizer would actually look at: all in-vocabulary
    /// ids for vector modes, the truncated prefix for sequences.
    pub fn effective_ids(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.ids(text);
        if self.mode == FeatureMode::Sequence {
            ids.truncate(self.max_len);
        }
        ids
    }

    pub fn from_ids(&self, ids: &[usize]) -> Result<Features> {
        features_from_ids(ids, &self.vocab, self.mode, self.max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_lowercases_and_splits_on_punctuation() {
        assert_eq!(tokenize("Hello, WORLD!  it's\tme"), vec!["hello", "world", "it", "s", "me"]);
        assert!(tokenize("...").is_empty());
    }

    #[test]
    fn min_df_filter() {
        let v = build_vocab(&["a b", "a c"], 2, usize::MAX).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id("a"), Some(0));
    }

    #[test]
    fn max_size_tie_rule() {
        let v = build_vocab(&["a b", "a c"], 1, 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn build_is_deterministic() {
        let texts = ["the cat sat", "the dog ran", "a cat ran"];
        let a = build_vocab(&texts, 1, 100).unwrap();
        let b = build_vocab(&texts, 1, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_vocab_is_error() {
        assert!(matches!(build_vocab(&["a", "b"], 2, 10), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn bow_counts() {
        let v = build_vocab(&["a b", "a"], 1, 10).unwrap();
        match featurize("a a b", &v, FeatureMode::Bow, 64).unwrap() {
            Features::Vector(FeatureVector(x)) => assert_eq!(x, vec![2.0, 1.0]),
            _ => panic!(),
        }
    }

    #[test]
    fn tfidf_single_doc() {
        // idf = ln(2/2) + 1 = 1, so the single entry normalizes to 1
        let v = build_vocab(&["a"], 1, 10).unwrap();
        match featurize("a", &v, FeatureMode::Tfidf, 64).unwrap() {
            Features::Vector(FeatureVector(x)) => assert_eq!(x, vec![1.0]),
            _ => panic!(),
        }
    }

    #[test]
    fn sequence_skips_unknown_and_truncates() {
        let v = build_vocab(&["a b c"], 1, 10).unwrap();
        match featurize("a zzz c b a", &v, FeatureMode::Sequence, 3).unwrap() {
            Features::Sequence(s) => {
                assert_eq!(s.ids(), &[v.id("a").unwrap(), v.id("c").unwrap(), v.id("b").unwrap()])
            }
            _ => panic!(),
        }
        assert!(matches!(
            featurize("zzz", &v, FeatureMode::Sequence, 3),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = build_vocab(&["x y z", "x y", "x"], 1, 10).unwrap();
        let back = Vocabulary::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back, v);
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["a", "b", "c", "d", "zz", "qq"]).prop_map(str::to_owned)
    }

    proptest! {
        #[test]
        fn tfidf_is_unit_norm(words in prop::collection::vec(word(), 1..20)) {
            let v = build_vocab(&["a b c", "a d", "b"], 1, 10).unwrap();
            let text = words.join(" ");
            if let Features::Vector(FeatureVector(x)) = featurize(&text, &v, FeatureMode::Tfidf, 64).unwrap() {
                let norm = x.iter().map(|e| e * e).sum::<f64>().sqrt();
                if v.ids(&text).is_empty() {
                    prop_assert_eq!(norm, 0.0);
                } else {
                    prop_assert!((norm - 1.0).abs() < 1e-9);
                }
                prop_assert!(x.iter().all(|e| *e >= 0.0 && e.is_finite()));
            }
        }

        #[test]
        fn bow_is_additive(a in prop::collection::vec(word(), 0..10), b in prop::collection::vec(word(), 0..10)) {
            let v = build_vocab(&["a b c d"], 1, 10).unwrap();
            let (ta, tb) = (a.join(" "), b.join(" "));
            let joined = format!("{ta} {tb}");
            let get = |t: &str| match featurize(t, &v, FeatureMode::Bow, 64).unwrap() {
                Features::Vector(FeatureVector(x)) => x,
                _ => unreachable!(),
            };
            let sum: Vec<f64> = get(&ta).iter().zip(get(&tb)).map(|(x, y)| x + y).collect();
            prop_assert_eq!(get(&joined), sum);
        }

        #[test]
        fn unknown_tokens_do_not_matter(words in prop::collection::vec(word(), 1..10)) {
            let v = build_vocab(&["a b c d"], 1, 10).unwrap();
            let text = words.join(" ");
            let noisy = format!("{text} zz qq unknownword");
            for mode in [FeatureMode::Bow, FeatureMode::Tfidf] {
                prop_assert_eq!(
                    featurize(&text, &v, mode, 64).unwrap(),
                    featurize(&noisy, &v, mode, 64).unwrap()
                );
            }
        }
    }
}
