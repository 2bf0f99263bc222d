//! Word tokenization, sentence counting, and content-word ratio.
//!
//! These rules are deliberately fixed and centralized: every lexical and
//! structural metric tokenizes text the same way, so a change here
//! propagates everywhere at once.
//!
//! - A word token is a maximal run of Unicode letters, digits, or
//!   apostrophes, case-folded. U+2019 (right single quote) is folded to
//!   the ASCII apostrophe so contractions match the stopword list.
//! - A sentence boundary is `.`, `!`, or `?` followed by whitespace or
//!   end of text. A segment counts as a sentence if it contains at least
//!   one character that is neither whitespace nor a terminator; non-empty
//!   text without any terminator counts as one sentence.
//! - Content words are tokens not in the stopword list.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// Case-folded word tokens; punctuation discarded.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '\'' || c == '\u{2019}' {
            let c = if c == '\u{2019}' { '\'' } else { c };
            for lower in c.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Number of sentence segments in `text` (0 for blank text).
pub fn sentence_count(text: &str) -> usize {
    let mut count = 0;
    let mut segment_has_content = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if is_terminator(c) {
            let at_boundary = match chars.peek() {
                None => true,
                Some(next) => next.is_whitespace(),
            };
            if at_boundary {
                if segment_has_content {
                    count += 1;
                }
                segment_has_content = false;
                continue;
            }
        }
        if !c.is_whitespace() && !is_terminator(c) {
            segment_has_content = true;
        }
    }
    if segment_has_content {
        count += 1;
    }
    count
}

/// Fraction of word tokens that are not stopwords.
pub fn content_word_ratio(text: &str, stopwords: &StopwordSet) -> Result<f64> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::metric(format!(
            "content word ratio undefined: no word tokens in {:?}",
            truncate_for_msg(text)
        )));
    }
    let content = tokens.iter().filter(|t| !stopwords.contains(t)).count();
    Ok(content as f64 / tokens.len() as f64)
}

fn truncate_for_msg(text: &str) -> String {
    let mut s: String = text.chars().take(40).collect();
    if s.len() < text.len() {
        s.push_str("...");
    }
    s
}

/// A set of stopwords matched against case-folded tokens.
#[derive(Debug, Clone)]
pub struct StopwordSet {
    words: BTreeSet<String>,
}

impl StopwordSet {
    pub fn from_words<I, S>(words: I) -> StopwordSet
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordSet {
            words: words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// The embedded English list ([`ENGLISH_STOPWORDS`]).
    pub fn english() -> &'static StopwordSet {
        static ENGLISH: LazyLock<StopwordSet> =
            LazyLock::new(|| StopwordSet::from_words(ENGLISH_STOPWORDS.iter().copied()));
        &ENGLISH
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The fixed English stopword list (179 entries), embedded so runs are
/// reproducible regardless of environment.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_folds_case_and_drops_punctuation() {
        assert_eq!(
            tokenize("The cat sat, on the mat!"),
            vec!["the", "cat", "sat", "on", "the", "mat"]
        );
    }

    #[test]
    fn tokenize_keeps_apostrophes_and_digits() {
        assert_eq!(tokenize("Don't count 42 twice."), vec!["don't", "count", "42", "twice"]);
        // U+2019 folds to ASCII apostrophe.
        assert_eq!(tokenize("don\u{2019}t"), vec!["don't"]);
    }

    #[test]
    fn tokenize_handles_non_ascii_letters() {
        assert_eq!(tokenize("Überraschung! naïve café"), vec!["überraschung", "naïve", "café"]);
    }

    #[test]
    fn tokenize_empty_and_punctuation_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("... !!! ???").is_empty());
    }

    #[test]
    fn sentence_count_no_terminator_is_one() {
        assert_eq!(sentence_count("Hello world"), 1);
    }

    #[test]
    fn sentence_count_splits_on_terminators() {
        assert_eq!(sentence_count("A. B! C?"), 3);
    }

    #[test]
    fn sentence_count_ignores_empty_segments() {
        assert_eq!(sentence_count(""), 0);
        assert_eq!(sentence_count("   "), 0);
        assert_eq!(sentence_count("..."), 0);
        assert_eq!(sentence_count("One sentence. "), 1);
    }

    #[test]
    fn sentence_count_interior_period_without_space_does_not_split() {
        assert_eq!(sentence_count("Version 2.5 shipped"), 1);
    }

    #[test]
    fn content_word_ratio_hand_count() {
        let stops = StopwordSet::from_words(["the", "on"]);
        let ratio = content_word_ratio("The cat sat on the mat.", &stops).unwrap();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn content_word_ratio_matches_with_default_list() {
        // "the" and "on" are in the embedded list too.
        let ratio = content_word_ratio("The cat sat on the mat.", StopwordSet::english()).unwrap();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn content_word_ratio_errors_on_tokenless_text() {
        assert!(content_word_ratio("?!", StopwordSet::english()).is_err());
    }

    #[test]
    fn english_list_has_expected_size() {
        assert_eq!(ENGLISH_STOPWORDS.len(), 179);
        assert_eq!(StopwordSet::english().len(), 179);
    }
}
