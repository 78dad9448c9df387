//! Prompt construction for the chat-completion backend.

use serde::{Deserialize, Serialize};

use super::ExtractionResult;
use crate::model::{Entry, IndicatorId, Taxonomy};

/// An extracted unit before sentiment scoring (per-task mode).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitDraft {
    pub object: String,
    pub content: String,
    pub indicator: IndicatorId,
}

/// One in-context example: an input text and its gold output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub result: ExtractionResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptTask<'a> {
    Relevance,
    Extraction,
    /// Scores the given drafts.
    Sentiment(&'a [UnitDraft]),
    /// Relevance, extraction and sentiment in one call.
    Combined,
}

/// System and user messages for one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// Both messages as one text block.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

const PREAMBLE: &str = "You evaluate residential housing quality from posts written by residents \
on review sites, microblogs and government message boards.";

const SENTIMENT_SCALE: &str = "Sentiment is an integer from -2 (strongly negative) through 0 (neutral) \
to 2 (strongly positive).";

fn instructions(task: &PromptTask<'_>) -> (&'static str, &'static str) {
    match task {
        PromptTask::Relevance => (
            "Decide whether the post discusses the quality of housing, the residential community or its neighbourhood.",
            r#"{"relevant": <true|false>}"#,
        ),
        PromptTask::Extraction => (
            "Extract every evaluation unit from the post. A unit is an evaluated object together with the \
content describing it, mapped to exactly one indicator id from the list.",
            r#"{"relevant": <true|false>, "units": [{"object": "<evaluated object>", "content": "<content descriptor>", "indicator": "<category>.<indicator>"}]}"#,
        ),
        PromptTask::Sentiment(_) => (
            "Score the sentiment the post expresses toward each listed unit, in the order given.",
            r#"{"sentiments": [<integer>, ...]}"#,
        ),
        PromptTask::Combined => (
            "First decide whether the post discusses the quality of housing, the residential community or its \
neighbourhood. If it does, extract every evaluation unit: an evaluated object together with the content \
describing it, mapped to exactly one indicator id from the list, and score the sentiment expressed toward it.",
            r#"{"relevant": <true|false>, "units": [{"object": "<evaluated object>", "content": "<content descriptor>", "indicator": "<category>.<indicator>", "sentiment": <integer>}]}"#,
        ),
    }
}

fn expected_output(task: &PromptTask<'_>, result: &ExtractionResult) -> String {
    use serde_json::json;
    let value = match task {
        PromptTask::Relevance => json!({ "relevant": result.relevant }),
        PromptTask::Extraction => json!({
            "relevant": result.relevant,
            "units": result.units.iter().map(|u| json!({
                "object": u.object_text, "content": u.content_text, "indicator": u.indicator_id.to_string(),
            })).collect::<Vec<_>>(),
        }),
        PromptTask::Sentiment(_) => json!({
            "sentiments": result.units.iter().map(|u| u.sentiment.value()).collect::<Vec<_>>(),
        }),
        PromptTask::Combined => return super::render_response(result),
    };
    value.to_string()
}

fn drafts_of(result: &ExtractionResult) -> Vec<UnitDraft> {
    result
        .units
        .iter()
        .map(|u| UnitDraft { object: u.object_text.clone(), content: u.content_text.clone(), indicator: u.indicator_id })
        .collect()
}

fn input_block(text: &str, drafts: Option<&[UnitDraft]>) -> String {
    let mut out = format!("Post: {}", serde_json::to_string(text).expect("string serializes"));
    if let Some(drafts) = drafts {
        out.push_str("\nUnits:");
        for (k, d) in drafts.iter().enumerate() {
            out.push_str(&format!(
                "\n{}. [{}] object: {} | content: {}",
                k + 1,
                d.indicator,
                serde_json::to_string(&d.object).expect("string serializes"),
                serde_json::to_string(&d.content).expect("string serializes"),
            ));
        }
    }
    out
}

/// Builds the prompt for `task`. Pure: identical inputs give identical bytes.
///
/// The system message lists every taxonomy indicator once and the required
/// JSON response shape; each exemplar is appended as an `### Example k`
/// block with its input and expected output.
pub fn build_prompt(task: PromptTask<'_>, entry: &Entry, taxonomy: &Taxonomy, exemplars: &[Exemplar]) -> Prompt {
    let (what, schema) = instructions(&task);
    let mut system = String::new();
    system.push_str(PREAMBLE);
    system.push_str("\n\n");
    system.push_str(what);
    if matches!(task, PromptTask::Sentiment(_) | PromptTask::Combined) {
        system.push(' ');
        system.push_str(SENTIMENT_SCALE);
    }
    if !matches!(task, PromptTask::Relevance) {
        system.push_str("\n\nIndicators (id | category | indicator):");
        for ind in taxonomy.indicators() {
            let category = taxonomy.category(ind.category_id()).map(|c| c.name.as_str()).unwrap_or_default();
            system.push_str(&format!("\n{} | {} | {}", ind.id, category, ind.name));
        }
    }
    system.push_str("\n\nRespond with a single JSON object of this shape and nothing else:\n");
    system.push_str(schema);
    if !matches!(task, PromptTask::Sentiment(_)) {
        system.push_str("\nIf the post is not relevant, set \"relevant\" to false");
        if !matches!(task, PromptTask::Relevance) {
            system.push_str(" and return an empty \"units\" list");
        }
        system.push('.');
    }
    for (k, ex) in exemplars.iter().enumerate() {
        let drafts = drafts_of(&ex.result);
        let ex_drafts = matches!(task, PromptTask::Sentiment(_)).then_some(drafts.as_slice());
        system.push_str(&format!(
            "\n\n### Example {}\n{}\nOutput: {}",
            k + 1,
            input_block(&ex.text, ex_drafts),
            expected_output(&task, &ex.result)
        ));
    }
    let drafts = match task {
        PromptTask::Sentiment(d) => Some(d),
        _ => None,
    };
    Prompt { system, user: input_block(&entry.text, drafts) }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use regex::Regex;

    use super::super::test_support::entry;
    use super::*;
    use crate::model::{EvaluationUnit, SentimentScore};

    fn exemplars(n: usize) -> Vec<Exemplar> {
        (0..n)
            .map(|k| Exemplar {
                text: format!("example post {k}: parking is \"hard\""),
                result: ExtractionResult {
                    entry_id: format!("x{k}"),
                    relevant: true,
                    units: vec![EvaluationUnit {
                        entry_id: format!("x{k}"),
                        object_text: "parking".into(),
                        content_text: "hard".into(),
                        indicator_id: "4.1".parse().unwrap(),
                        sentiment: SentimentScore::new(-1).unwrap(),
                    }],
                    diagnostics: vec![],
                },
            })
            .collect()
    }

    fn id_counts(text: &str) -> BTreeMap<String, usize> {
        let re = Regex::new(r"(?m)^(\d+\.\d+) \| ").unwrap();
        let mut counts = BTreeMap::new();
        for c in re.captures_iter(text) {
            *counts.entry(c[1].to_string()).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn zero_shot_lists_every_indicator_once() {
        let t = Taxonomy::shipped_default();
        let p = build_prompt(PromptTask::Combined, &entry("e", "the bus stop moved"), &t, &[]);
        let counts = id_counts(&p.text());
        assert_eq!(counts.len(), 46);
        assert!(counts.values().all(|&c| c == 1));
        for id in t.indicator_ids() {
            assert_eq!(counts.get(&id.to_string()), Some(&1), "{id}");
        }
        // every dotted id token anywhere in the prompt is one of the listed ones, once
        let any_id = Regex::new(r"\b\d+\.\d+\b").unwrap();
        assert_eq!(any_id.find_iter(&p.text()).count(), 46);
        assert!(p.system.contains("\"sentiment\""));
        assert!(p.user.contains("the bus stop moved"));
        assert!(!p.system.contains("### Example"));
    }

    #[test]
    fn few_shot_has_ten_example_blocks() {
        let t = Taxonomy::shipped_default();
        let p = build_prompt(PromptTask::Combined, &entry("e", "x"), &t, &exemplars(10));
        assert_eq!(p.text().matches("### Example ").count(), 10);
        assert!(p.system.contains("### Example 10\nPost: \"example post 9: parking is \\\"hard\\\"\"\nOutput: {"));
    }

    #[test]
    fn deterministic() {
        let t = Taxonomy::shipped_default();
        let ex = exemplars(10);
        let e = entry("e", "noise at night");
        for task in [PromptTask::Relevance, PromptTask::Extraction, PromptTask::Combined] {
            assert_eq!(build_prompt(task, &e, &t, &ex), build_prompt(task, &e, &t, &ex));
        }
    }

    #[test]
    fn per_task_variants() {
        let t = Taxonomy::shipped_default();
        let e = entry("e", "elevator broken");
        let rel = build_prompt(PromptTask::Relevance, &e, &t, &exemplars(1));
        assert!(rel.system.contains(r#"{"relevant": <true|false>}"#));
        assert!(rel.system.contains("Output: {\"relevant\":true}"));
        let drafts = vec![UnitDraft { object: "elevator".into(), content: "broken".into(), indicator: "6.2".parse().unwrap() }];
        let sent = build_prompt(PromptTask::Sentiment(&drafts), &e, &t, &exemplars(1));
        assert!(sent.user.contains("1. [6.2] object: \"elevator\" | content: \"broken\""));
        assert!(sent.system.contains("Output: {\"sentiments\":[-1]}"));
        let ext = build_prompt(PromptTask::Extraction, &e, &t, &[]);
        assert!(!ext.system.contains("\"sentiment\""));
    }
}
