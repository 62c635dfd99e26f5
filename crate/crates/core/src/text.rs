//! Small, deterministic text helpers shared by the extractors, the mock
//! provider and graph retrieval.

use std::collections::BTreeSet;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "doing",
    "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his",
    "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "my", "no", "not", "of",
    "on", "or", "our", "she", "so", "some", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "to", "too", "up", "very", "was", "we", "were",
    "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would",
    "you", "your", "yours",
];

/// Verbs the rule-based extractors recognise as the predicate of a clause.
const VERBS: &[&str] = &[
    "adopted", "am", "are", "bought", "called", "can", "did", "does", "enjoy", "enjoys", "feel",
    "feels", "felt", "finished", "got", "had", "has", "have", "is", "joined", "keeps", "like",
    "likes", "live", "lives", "love", "loves", "made", "met", "moved", "named", "opened", "own",
    "owns", "painted", "plays", "read", "saw", "started", "took", "visited", "want", "wants",
    "was", "went", "were", "work", "works", "wrote",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

pub fn is_verb(word: &str) -> bool {
    VERBS.binary_search(&word).is_ok()
}

/// Lowercase, drop a possessive suffix and a plural `s`.
pub fn normalize_word(raw: &str) -> String {
    let mut w: String = raw
        .trim_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect::<String>()
        .to_lowercase();
    if let Some(stripped) = w.strip_suffix("'s") {
        w = stripped.to_string();
    } else if let Some(stripped) = w.strip_suffix('\'') {
        w = stripped.to_string();
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !is_stopword(&w) {
        w.pop();
    }
    w
}

/// A word as it appeared in the source plus its normalised form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word<'a> {
    pub raw: &'a str,
    pub norm: String,
}

impl Word<'_> {
    pub fn is_capitalized(&self) -> bool {
        self.raw
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .chars()
            .next()
            .is_some_and(char::is_uppercase)
    }

    pub fn is_content(&self) -> bool {
        self.norm.chars().count() >= 2 && !is_stopword(&self.norm)
    }
}

/// Splits on whitespace and underscores, keeping apostrophes inside words.
pub fn words(text: &str) -> Vec<Word<'_>> {
    text.split(|c: char| c.is_whitespace() || c == '_')
        .filter_map(|raw| {
            let norm = normalize_word(raw);
            (!norm.is_empty()).then_some(Word { raw, norm })
        })
        .collect()
}

pub fn content_words(text: &str) -> BTreeSet<String> {
    words(text)
        .into_iter()
        .filter(Word::is_content)
        .map(|w| w.norm)
        .collect()
}

/// Splits text into sentences on `.`, `!` and `?`, keeping the terminator.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Rewrites first-person references so a sentence reads as a fact about
/// `speaker`: "I have my dog" -> "Melanie has Melanie's dog".
pub fn resolve_first_person(sentence: &str, speaker: &str) -> String {
    let tokens: Vec<&str> = sentence.split_whitespace().collect();
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        let (lead, core, trail) = split_punct(tok);
        let lower = core.replace('\u{2019}', "'").to_lowercase();
        let replaced = match lower.as_str() {
            "i" => {
                // Fix agreement of the following verb.
                if let Some(next) = tokens.get(i + 1) {
                    let (nl, ncore, nt) = split_punct(next);
                    let fixed = match ncore.to_lowercase().as_str() {
                        "have" => Some("has"),
                        "am" => Some("is"),
                        "do" => Some("does"),
                        _ => None,
                    };
                    if let Some(verb) = fixed {
                        out.push(format!("{lead}{speaker}{trail}"));
                        out.push(format!("{nl}{verb}{nt}"));
                        i += 2;
                        continue;
                    }
                }
                Some(speaker.to_string())
            }
            "i'm" => Some(format!("{speaker} is")),
            "i've" => Some(format!("{speaker} has")),
            "i'd" => Some(format!("{speaker} would")),
            "i'll" => Some(format!("{speaker} will")),
            "me" | "myself" => Some(speaker.to_string()),
            "my" | "mine" => Some(format!("{speaker}'s")),
            _ => None,
        };
        match replaced {
            Some(r) => out.push(format!("{lead}{r}{trail}")),
            None => out.push(tok.to_string()),
        }
        i += 1;
    }
    out.join(" ")
}

fn split_punct(tok: &str) -> (&str, &str, &str) {
    let start = tok
        .char_indices()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(tok.len(), |(i, _)| i);
    let end = tok
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .map_or(start, |(i, c)| i + c.len_utf8());
    if start >= end {
        return (tok, "", "");
    }
    (&tok[..start], &tok[start..end], &tok[end..])
}

/// Lowercase and collapse runs of whitespace to single spaces.
pub fn collapse_lower(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
