//! Deterministic fact and triple extraction used when no model is in the
//! loop, and by the mock provider when it is asked to extract.

use crate::text;

/// A single subject-predicate-object statement, before dating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

const DETERMINERS: &[&str] = &["a", "an", "the", "some"];

/// System prompt sent to the provider for vector-store fact extraction.
pub const FACT_EXTRACTION_PROMPT: &str = "You extract long-term memories from chat messages.\n\
Rewrite every durable fact stated in the message as a short standalone sentence about the speaker, \
one fact per line. Replace first-person references with the speaker's name. \
Ignore greetings and questions. If the message holds no fact, reply exactly: NONE";

/// System prompt sent to the provider for knowledge-graph triple extraction.
pub const TRIPLE_EXTRACTION_PROMPT: &str = "You extract knowledge-graph triples from chat messages.\n\
Write one triple per line as `subject | predicate | object`. Replace first-person references with \
the speaker's name. Ignore greetings and questions. If the message holds no triple, reply exactly: NONE";

/// User prompt carrying one turn to an extraction model.
pub fn extraction_user_prompt(speaker: &str, text: &str) -> String {
    format!("Speaker: {speaker}\nMessage: {text}")
}

/// Inverse of [`extraction_user_prompt`].
pub fn parse_extraction_user_prompt(prompt: &str) -> Option<(&str, &str)> {
    let rest = prompt.strip_prefix("Speaker: ")?;
    let (speaker, message) = rest.split_once("\nMessage: ")?;
    Some((speaker, message))
}

/// Splits an utterance into fact lines written about the speaker.
///
/// Questions are dropped, first-person references are rewritten to the
/// speaker's name, and sentences with fewer than three words or fewer than
/// two content words are discarded.
pub fn extract_facts(speaker: &str, text: &str) -> Vec<String> {
    text::sentences(text)
        .into_iter()
        .filter(|s| !s.ends_with('?'))
        .filter_map(|s| {
            let resolved = text::resolve_first_person(s, speaker);
            let fact = resolved
                .trim_end_matches(['.', '!', '?', ' '])
                .trim()
                .to_string();
            let words = text::words(&fact);
            let content = words.iter().filter(|w| w.is_content()).count();
            (words.len() >= 3 && content >= 2).then_some(fact)
        })
        .collect()
}

/// Rule-based subject-verb-object split of each extracted fact.
pub fn extract_triples(speaker: &str, text: &str) -> Vec<RawTriple> {
    extract_facts(speaker, text)
        .iter()
        .filter_map(|fact| split_svo(fact, speaker))
        .collect()
}

fn strip_determiners(tokens: &[&str]) -> String {
    let start = tokens
        .iter()
        .position(|t| !DETERMINERS.contains(&t.to_lowercase().as_str()))
        .unwrap_or(tokens.len());
    tokens[start..]
        .join(" ")
        .trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'')
        .to_string()
}

fn split_svo(fact: &str, speaker: &str) -> Option<RawTriple> {
    let tokens: Vec<&str> = fact.split_whitespace().collect();
    let verb_at = tokens.iter().position(|t| {
        let w = t
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        text::is_verb(&w)
    })?;
    let subject = if verb_at == 0 {
        speaker.to_string()
    } else {
        strip_determiners(&tokens[..verb_at])
    };
    let predicate = tokens[verb_at]
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    let object = strip_determiners(&tokens[verb_at + 1..]);
    (!subject.is_empty() && !object.is_empty()).then_some(RawTriple {
        subject,
        predicate,
        object,
    })
}

/// The phrase following the first recognised verb of `line`, or the whole
/// line when no verb is found.
pub fn object_phrase(line: &str) -> String {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let verb_at = tokens.iter().position(|t| {
        text::is_verb(
            &t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase(),
        )
    });
    match verb_at {
        Some(i) if i + 1 < tokens.len() => tokens[i + 1..].join(" "),
        _ => line.trim().to_string(),
    }
}

/// Wire format for triples exchanged with an extraction model.
pub fn format_triple_line(t: &RawTriple) -> String {
    format!("{} | {} | {}", t.subject, t.predicate, t.object)
}

pub fn parse_triple_line(line: &str) -> Option<RawTriple> {
    let mut parts = line.split('|').map(str::trim);
    let (Some(s), Some(p), Some(o), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return None;
    };
    (!s.is_empty() && !p.is_empty() && !o.is_empty()).then(|| RawTriple {
        subject: s.to_string(),
        predicate: p.to_string(),
        object: o.to_string(),
    })
}

/// Extraction models answer with one item per line; `NONE` means nothing.
pub fn parse_fact_lines(response: &str) -> Vec<String> {
    response
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*']).trim())
        .filter(|l| !l.is_empty() && !l.eq_ignore_ascii_case("none"))
        .map(str::to_string)
        .collect()
}
