//! Free-text cleaning: URL/emoji/boilerplate stripping, sentence segmentation
//! and tokenization.

use std::collections::BTreeSet;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

const SHIPPED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(?:\b[a-z][a-z0-9+.\-]*://|\bwww\.)\S*").expect("url regex")
    })
}

fn emoji_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // Pictographs plus the joiners/modifiers that glue emoji sequences together.
        Regex::new(
            r"[\p{Extended_Pictographic}\p{Emoji_Modifier}\p{Regional_Indicator}\x{FE0E}\x{FE0F}\x{200D}\x{20E3}\x{E0020}-\x{E007F}]+",
        )
        .expect("emoji regex")
    })
}

fn space_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").expect("space regex"))
}

/// Parses a newline-separated word list; `#` starts a comment line.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// The pinned English stopword list bundled with the crate.
pub fn shipped_stopwords() -> BTreeSet<String> {
    parse_word_list(SHIPPED_STOPWORDS)
}

/// Splits cleaned text into word tokens.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, clean_text: &str) -> Vec<String>;
}

/// Splits on every non-alphanumeric character.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnicodeWordTokenizer;

impl Tokenizer for UnicodeWordTokenizer {
    fn tokenize(&self, clean_text: &str) -> Vec<String> {
        clean_text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub stopwords: BTreeSet<String>,
    /// Literal phrases removed case-insensitively before lowercasing.
    #[serde(default)]
    pub boilerplate: Vec<String>,
    /// Drop documents that fail the mostly-ASCII-letters heuristic.
    #[serde(default)]
    pub require_latin_text: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            stopwords: shipped_stopwords(),
            boilerplate: Vec::new(),
            require_latin_text: false,
        }
    }
}

/// Output of [`clean_and_tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanedText {
    pub clean_text: String,
    pub tokens: Vec<String>,
    /// Byte ranges into `clean_text`, one per sentence.
    pub sentences: Vec<Range<usize>>,
}

/// Applies the fixed cleaning pipeline with the default tokenizer.
pub fn clean_and_tokenize(raw_text: &str, cfg: &CleaningConfig) -> CleanedText {
    clean_and_tokenize_with(raw_text, cfg, &UnicodeWordTokenizer)
}

pub fn clean_and_tokenize_with(
    raw_text: &str,
    cfg: &CleaningConfig,
    tokenizer: &dyn Tokenizer,
) -> CleanedText {
    let text = url_re().replace_all(raw_text, " ");
    let mut text = emoji_re().replace_all(&text, " ").into_owned();
    for phrase in cfg.boilerplate.iter().filter(|p| !p.trim().is_empty()) {
        text = remove_phrase_ci(&text, phrase);
    }
    let lowered = text.to_lowercase();
    let clean_text = space_re().replace_all(lowered.trim(), " ").into_owned();

    let sentences = segment_sentences(&clean_text);
    let tokens = tokenizer
        .tokenize(&clean_text)
        .into_iter()
        .filter(|t| t.chars().count() >= 2 && !cfg.stopwords.contains(t.as_str()))
        .collect();

    CleanedText {
        clean_text,
        tokens,
        sentences,
    }
}

fn remove_phrase_ci(text: &str, phrase: &str) -> String {
    let pattern = format!("(?i){}", regex::escape(phrase.trim()));
    match Regex::new(&pattern) {
        Ok(re) => re.replace_all(text, " ").into_owned(),
        Err(_) => text.to_string(),
    }
}

/// Sentence boundaries fall after runs of `.`, `!` or `?`.
pub fn segment_sentences(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, n)) = chars.peek() {
                if matches!(n, '.' | '!' | '?') {
                    end = j + n.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            push_trimmed(text, start..end, &mut out);
            start = end;
        }
    }
    push_trimmed(text, start..text.len(), &mut out);
    out
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    let r = range.start + lead..range.end - trail;
    if r.start < r.end && text[r.clone()].chars().any(char::is_alphanumeric) {
        out.push(r);
    }
}

/// True when at least half of the alphabetic characters are ASCII letters.
pub fn is_mostly_latin(text: &str) -> bool {
    let (ascii, total) = text
        .chars()
        .filter(|c| c.is_alphabetic())
        .fold((0usize, 0usize), |(a, t), c| {
            (a + c.is_ascii_alphabetic() as usize, t + 1)
        });
    total == 0 || ascii * 2 >= total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CleaningConfig {
        CleaningConfig::default()
    }

    #[test]
    fn strips_url_and_emoji() {
        let out = clean_and_tokenize("Visit https://x.com 😀 today!", &cfg());
        assert_eq!(out.tokens, vec!["visit", "today"]);
        assert_eq!(out.clean_text, "visit today!");
    }

    #[test]
    fn empty_and_stopword_only_inputs() {
        assert!(clean_and_tokenize("", &cfg()).tokens.is_empty());
        assert!(clean_and_tokenize("The of and", &cfg()).tokens.is_empty());
        assert!(clean_and_tokenize("   ", &cfg()).sentences.is_empty());
    }

    #[test]
    fn www_urls_and_emoji_sequences() {
        let out = clean_and_tokenize("see www.nhs.uk/help 👩‍👩‍👧 🇬🇧 family ❤️ food", &cfg());
        assert_eq!(out.tokens, vec!["family", "food"]);
    }

    #[test]
    fn short_tokens_dropped_and_lowercased() {
        let out = clean_and_tokenize("A b Cc DDD", &cfg());
        assert_eq!(out.tokens, vec!["cc", "ddd"]);
    }

    #[test]
    fn boilerplate_removed_case_insensitively() {
        let mut c = cfg();
        c.boilerplate = vec!["Sent from my iPhone".into()];
        let out = clean_and_tokenize("Need groceries. SENT FROM MY IPHONE", &c);
        assert_eq!(out.tokens, vec!["need", "groceries"]);
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let out = clean_and_tokenize("Lonely at home!! Need help? yes. ok", &cfg());
        let s: Vec<&str> = out
            .sentences
            .iter()
            .map(|r| &out.clean_text[r.clone()])
            .collect();
        assert_eq!(s, vec!["lonely at home!!", "need help?", "yes.", "ok"]);
    }

    #[test]
    fn latin_heuristic() {
        assert!(is_mostly_latin("hello there"));
        assert!(!is_mostly_latin("привет мир"));
        assert!(is_mostly_latin("1234"));
    }

    #[test]
    fn shipped_list_is_pinned() {
        let sw = shipped_stopwords();
        assert!(sw.len() > 250);
        for w in ["the", "of", "and", "not"] {
            assert!(sw.contains(w));
        }
        assert!(!sw.contains("today"));
    }
}
