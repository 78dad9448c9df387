//! Rule-based baseline: keyword string search plus lexicon sentiment.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendDescriptor, BackendMode, ExtractError, ExtractionBackend, ExtractionResult};
use crate::model::{Entry, EvaluationUnit, SentimentScore, Taxonomy};

/// Lexicon shipped with the crate.
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.txt");

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("cannot read lexicon: {0}")]
    Io(String),
    #[error("line {line}: term outside of a section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: intensifier needs `<term> <multiplier>`")]
    BadIntensifier { line: usize },
    #[error("term `{term}` appears in both `{first}` and `{second}`")]
    Overlap { term: String, first: &'static str, second: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TermKind {
    Positive,
    Negative,
    Negator,
    Intensifier(f64),
}

/// Polarity word lists in the HOWNET style: positive and negative terms,
/// negators and degree intensifiers.
///
/// File format: four sections `[positive]`, `[negative]`, `[negators]`,
/// `[intensifiers]`, one term per line; intensifier lines end with a
/// multiplier. `#` starts a comment. Terms are lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    intensifiers: BTreeMap<String, f64>,
    negators: BTreeSet<String>,
    /// All terms, longest first.
    ordered: Vec<(String, TermKind)>,
}

impl SentimentLexicon {
    /// Builds a lexicon. The four term sets must be pairwise disjoint.
    pub fn new(
        positive: impl IntoIterator<Item = String>,
        negative: impl IntoIterator<Item = String>,
        negators: impl IntoIterator<Item = String>,
        intensifiers: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, LexiconError> {
        let norm = |s: String| s.trim().to_lowercase();
        let positive: BTreeSet<String> = positive.into_iter().map(norm).filter(|s| !s.is_empty()).collect();
        let negative: BTreeSet<String> = negative.into_iter().map(norm).filter(|s| !s.is_empty()).collect();
        let negators: BTreeSet<String> = negators.into_iter().map(norm).filter(|s| !s.is_empty()).collect();
        let intensifiers: BTreeMap<String, f64> =
            intensifiers.into_iter().map(|(k, v)| (norm(k), v)).filter(|(k, _)| !k.is_empty()).collect();

        let mut owner: BTreeMap<&str, &'static str> = BTreeMap::new();
        let sections: [(&'static str, Vec<&str>); 4] = [
            ("positive", positive.iter().map(String::as_str).collect()),
            ("negative", negative.iter().map(String::as_str).collect()),
            ("negators", negators.iter().map(String::as_str).collect()),
            ("intensifiers", intensifiers.keys().map(String::as_str).collect()),
        ];
        for (section, terms) in &sections {
            for term in terms {
                if let Some(first) = owner.insert(term, section) {
                    return Err(LexiconError::Overlap { term: term.to_string(), first, second: section });
                }
            }
        }

        let mut ordered: Vec<(String, TermKind)> = positive
            .iter()
            .map(|t| (t.clone(), TermKind::Positive))
            .chain(negative.iter().map(|t| (t.clone(), TermKind::Negative)))
            .chain(negators.iter().map(|t| (t.clone(), TermKind::Negator)))
            .chain(intensifiers.iter().map(|(t, m)| (t.clone(), TermKind::Intensifier(*m))))
            .collect();
        ordered.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { positive, negative, intensifiers, negators, ordered })
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut section: Option<&'static str> = None;
        let (mut pos, mut neg, mut negators, mut ints) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (ix, raw) in text.lines().enumerate() {
            let line_no = ix + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "positive" => "positive",
                    "negative" => "negative",
                    "negators" => "negators",
                    "intensifiers" => "intensifiers",
                    other => return Err(LexiconError::UnknownSection { line: line_no, name: other.to_string() }),
                });
                continue;
            }
            match section {
                None => return Err(LexiconError::NoSection { line: line_no }),
                Some("positive") => pos.push(line.to_string()),
                Some("negative") => neg.push(line.to_string()),
                Some("negators") => negators.push(line.to_string()),
                Some(_) => {
                    let (term, mult) = line.rsplit_once(char::is_whitespace).ok_or(LexiconError::BadIntensifier { line: line_no })?;
                    let mult: f64 = mult.parse().map_err(|_| LexiconError::BadIntensifier { line: line_no })?;
                    if !mult.is_finite() || mult < 0.0 {
                        return Err(LexiconError::BadIntensifier { line: line_no });
                    }
                    ints.push((term.trim().to_string(), mult));
                }
            }
        }
        Self::new(pos, neg, negators, ints)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn shipped_default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }

    pub fn negators(&self) -> &BTreeSet<String> {
        &self.negators
    }

    pub fn intensifiers(&self) -> &BTreeMap<String, f64> {
        &self.intensifiers
    }

    fn tokenize(&self, sentence: &str) -> Vec<Token> {
        let chars: Vec<char> = sentence.chars().collect();
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() || (!is_word_char(c) && !is_cjk(c)) {
                i += 1;
                continue;
            }
            if let Some((len, kind)) = self.term_at(&chars, i) {
                tokens.push(Token { kind: Some(kind) });
                i += len;
            } else if is_word_char(c) && !is_cjk(c) {
                while i < chars.len() && is_word_char(chars[i]) && !is_cjk(chars[i]) {
                    i += 1;
                }
                tokens.push(Token { kind: None });
            } else {
                tokens.push(Token { kind: None });
                i += 1;
            }
        }
        tokens
    }

    fn term_at(&self, chars: &[char], at: usize) -> Option<(usize, TermKind)> {
        self.ordered.iter().find_map(|(term, kind)| {
            let len = term.chars().count();
            if at + len > chars.len() || !term.chars().eq(chars[at..at + len].iter().copied()) {
                return None;
            }
            let last = chars[at + len - 1];
            let boundary_ok = !(is_word_char(last) && !is_cjk(last))
                || chars.get(at + len).map_or(true, |n| !(is_word_char(*n) && !is_cjk(*n)));
            boundary_ok.then_some((len, *kind))
        })
    }

    /// Raw polarity of a sentence: +1 per positive term and -1 per negative
    /// term, sign-flipped when a negator is among the two preceding tokens,
    /// multiplied by an intensifier directly in front.
    pub fn raw_score(&self, sentence: &str) -> f64 {
        let tokens = self.tokenize(&sentence.to_lowercase());
        let mut score = 0.0;
        for (j, token) in tokens.iter().enumerate() {
            let mut value = match token.kind {
                Some(TermKind::Positive) => 1.0,
                Some(TermKind::Negative) => -1.0,
                _ => continue,
            };
            if tokens[j.saturating_sub(2)..j].iter().any(|t| t.kind == Some(TermKind::Negator)) {
                value = -value;
            }
            if let Some(Token { kind: Some(TermKind::Intensifier(m)) }) = j.checked_sub(1).map(|p| &tokens[p]) {
                value *= m;
            }
            score += value;
        }
        score
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: Option<TermKind>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '’' || c == '-'
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Cut points mapping a raw lexicon score onto the five-point scale.
///
/// `r <= -strong` gives -2, `r <= -weak` gives -1, `|r| < weak` gives 0,
/// `r < strong` gives 1, anything higher 2. The defaults (0.5, 1.5) send
/// integer scores to themselves, clamped to [-2, 2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentThresholds {
    pub weak: f64,
    pub strong: f64,
}

impl Default for SentimentThresholds {
    fn default() -> Self {
        Self { weak: 0.5, strong: 1.5 }
    }
}

impl SentimentThresholds {
    pub fn map(&self, raw: f64) -> SentimentScore {
        let v = if raw <= -self.strong {
            -2
        } else if raw <= -self.weak {
            -1
        } else if raw < self.weak {
            0
        } else if raw < self.strong {
            1
        } else {
            2
        };
        SentimentScore::unchecked(v)
    }
}

const SENTENCE_BREAKS: &[char] = &['.', '!', '?', ';', '\n', '。', '！', '？', '；', '…'];

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(SENTENCE_BREAKS).map(str::trim).filter(|s| !s.is_empty())
}

/// Keyword/lexicon extraction.
///
/// Text is split into sentences at terminal punctuation. A sentence matches
/// an indicator when any of its keywords occurs as a substring (case-insensitive);
/// each (sentence, indicator) match yields one unit whose object is the first
/// matching keyword in the indicator's list and whose content is the sentence.
/// The entry is relevant iff at least one keyword matched.
pub fn rule_based_extract(
    entry: &Entry,
    taxonomy: &Taxonomy,
    lexicon: &SentimentLexicon,
    thresholds: &SentimentThresholds,
) -> ExtractionResult {
    let mut units = Vec::new();
    for sentence in sentences(&entry.text) {
        let lowered = sentence.to_lowercase();
        let mut sentiment = None;
        for indicator in taxonomy.indicators() {
            let Some(keyword) = indicator
                .keywords
                .iter()
                .find(|k| !k.trim().is_empty() && lowered.contains(&k.to_lowercase()))
            else {
                continue;
            };
            let score = *sentiment.get_or_insert_with(|| thresholds.map(lexicon.raw_score(sentence)));
            units.push(EvaluationUnit {
                entry_id: entry.id.clone(),
                object_text: keyword.clone(),
                content_text: sentence.to_string(),
                indicator_id: indicator.id,
                sentiment: score,
            });
        }
    }
    ExtractionResult { entry_id: entry.id.clone(), relevant: !units.is_empty(), units, diagnostics: Vec::new() }
}

/// [`rule_based_extract`] as an [`ExtractionBackend`].
#[derive(Debug, Clone)]
pub struct RuleBasedBackend {
    pub lexicon: SentimentLexicon,
    pub thresholds: SentimentThresholds,
}

impl RuleBasedBackend {
    pub fn new(lexicon: SentimentLexicon) -> Self {
        Self { lexicon, thresholds: SentimentThresholds::default() }
    }
}

impl Default for RuleBasedBackend {
    fn default() -> Self {
        Self::new(SentimentLexicon::shipped_default())
    }
}

impl ExtractionBackend for RuleBasedBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { name: "rule".into(), mode: BackendMode::RuleBased }
    }

    fn extract(&self, entry: &Entry, taxonomy: &Taxonomy) -> Result<ExtractionResult, ExtractError> {
        Ok(rule_based_extract(entry, taxonomy, &self.lexicon, &self.thresholds))
    }
}
