//! LoCoMo-layout corpus parsing.
//!
//! A corpus file is a JSON array of samples (a single sample object is also
//! accepted). Each sample holds a `conversation` object with `speaker_a`,
//! `speaker_b`, and numbered `session_N` / `session_N_date_time` keys, plus a
//! sibling list of question/answer items (`qa` by default).

use std::collections::{BTreeMap, HashSet};

use chrono::{Month, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("malformed corpus: {0}")]
    MalformedCorpus(String),
    #[error("cannot parse session date {raw:?}: {reason}")]
    DateParse { raw: String, reason: String },
}

fn malformed(msg: impl Into<String>) -> DatasetError {
    DatasetError::MalformedCorpus(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub dia_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub index: u32,
    pub date_time_raw: String,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub speaker_a: String,
    pub speaker_b: String,
    pub sessions: Vec<Session>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub expected_answer: String,
    pub category: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub sample_id: Option<String>,
    pub conversation: Conversation,
    pub qa: Vec<QaItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    /// Looks a conversation up by sample id, falling back to its index.
    pub fn find(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries
            .iter()
            .find(|e| e.sample_id.as_deref() == Some(id))
            .or_else(|| id.parse::<usize>().ok().and_then(|i| self.entries.get(i)))
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Key of the question/answer list next to `conversation`.
    pub qa_key: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { qa_key: "qa".into() }
    }
}

pub fn parse_corpus(raw: &str) -> Result<Corpus, DatasetError> {
    parse_corpus_with(raw, &ParseOptions::default())
}

pub fn parse_corpus_with(raw: &str, opts: &ParseOptions) -> Result<Corpus, DatasetError> {
    let doc: Value =
        serde_json::from_str(raw).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let samples = match doc {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => return Err(malformed("top level must be an object or an array")),
    };
    if samples.is_empty() {
        return Err(malformed("no conversations"));
    }
    let entries = samples
        .iter()
        .enumerate()
        .map(|(i, s)| parse_entry(s, opts).map_err(|e| annotate(e, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { entries })
}

fn annotate(err: DatasetError, sample: usize) -> DatasetError {
    match err {
        DatasetError::MalformedCorpus(m) => malformed(format!("sample {sample}: {m}")),
        other => other,
    }
}

fn parse_entry(sample: &Value, opts: &ParseOptions) -> Result<CorpusEntry, DatasetError> {
    let obj = sample
        .as_object()
        .ok_or_else(|| malformed("sample is not an object"))?;
    let conv = obj
        .get("conversation")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing conversation object"))?;
    let conversation = parse_conversation(conv)?;
    let qa = match obj.get(&opts.qa_key) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items.iter().map(parse_qa).collect::<Result<_, _>>()?,
        Some(_) => return Err(malformed(format!("`{}` is not a list", opts.qa_key))),
    };
    let sample_id = obj
        .get("sample_id")
        .and_then(Value::as_str)
        .map(str::to_string);
    Ok(CorpusEntry {
        sample_id,
        conversation,
        qa,
    })
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, DatasetError> {
    match obj.get(key).and_then(Value::as_str) {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(malformed(format!("missing or empty `{key}`"))),
    }
}

fn parse_conversation(conv: &Map<String, Value>) -> Result<Conversation, DatasetError> {
    let speaker_a = str_field(conv, "speaker_a")?.to_string();
    let speaker_b = str_field(conv, "speaker_b")?.to_string();

    let mut turn_lists: BTreeMap<u32, &Vec<Value>> = BTreeMap::new();
    let mut dates: BTreeMap<u32, &str> = BTreeMap::new();
    for (key, value) in conv {
        let Some(rest) = key.strip_prefix("session_") else {
            continue;
        };
        if let Some(n) = rest.strip_suffix("_date_time") {
            if let Ok(n) = n.parse::<u32>() {
                let s = value
                    .as_str()
                    .ok_or_else(|| malformed(format!("`{key}` is not a string")))?;
                dates.insert(n, s);
            }
        } else if let Ok(n) = rest.parse::<u32>() {
            let turns = value
                .as_array()
                .ok_or_else(|| malformed(format!("`{key}` is not a list")))?;
            turn_lists.insert(n, turns);
        }
    }
    if turn_lists.is_empty() {
        return Err(malformed("conversation has no sessions"));
    }
    for (expected, &n) in (1u32..).zip(turn_lists.keys()) {
        if n != expected {
            return Err(malformed(format!(
                "session indices not contiguous from 1: expected session_{expected}, found session_{n}"
            )));
        }
    }

    let speakers = [speaker_a.as_str(), speaker_b.as_str()];
    let mut seen_ids = HashSet::new();
    let mut sessions = Vec::with_capacity(turn_lists.len());
    for (index, raw_turns) in turn_lists {
        let raw_date = dates
            .get(&index)
            .ok_or_else(|| malformed(format!("session_{index} has no date_time")))?;
        let stamp = normalize_date(raw_date)?;
        let mut turns = Vec::with_capacity(raw_turns.len());
        for t in raw_turns {
            let t = t
                .as_object()
                .ok_or_else(|| malformed(format!("session_{index} holds a non-object turn")))?;
            let turn = Turn {
                speaker: str_field(t, "speaker")?.to_string(),
                dia_id: str_field(t, "dia_id")?.to_string(),
                text: str_field(t, "text")?.to_string(),
            };
            if !speakers.contains(&turn.speaker.as_str()) {
                return Err(malformed(format!(
                    "turn {} spoken by {:?}, not a conversation speaker",
                    turn.dia_id, turn.speaker
                )));
            }
            if !seen_ids.insert(turn.dia_id.clone()) {
                return Err(malformed(format!("duplicate dia_id {}", turn.dia_id)));
            }
            turns.push(turn);
        }
        if turns.is_empty() {
            return Err(malformed(format!("session_{index} has no turns")));
        }
        sessions.push(Session {
            index,
            date_time_raw: raw_date.to_string(),
            date: stamp.date,
            time: stamp.time,
            turns,
        });
    }
    Ok(Conversation {
        speaker_a,
        speaker_b,
        sessions,
    })
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn parse_qa(item: &Value) -> Result<QaItem, DatasetError> {
    let obj = item
        .as_object()
        .ok_or_else(|| malformed("qa item is not an object"))?;
    let question = str_field(obj, "question")?.to_string();
    // Adversarial items in the public dataset carry `adversarial_answer` only.
    let expected_answer = obj
        .get("answer")
        .and_then(scalar_text)
        .or_else(|| obj.get("adversarial_answer").and_then(scalar_text))
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| malformed(format!("qa item {question:?} has no answer")))?;
    let category = obj.get("category").and_then(Value::as_i64);
    Ok(QaItem {
        question,
        expected_answer,
        category,
    })
}

/// Calendar date plus time of day parsed from a session stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionStamp {
    pub date: NaiveDate,
    pub time: NaiveTime,
}

/// Parses stamps like `4:04 pm on 20 January, 2023`. The time part is
/// optional and defaults to midnight.
pub fn normalize_date(raw: &str) -> Result<SessionStamp, DatasetError> {
    let err = |reason: &str| DatasetError::DateParse {
        raw: raw.to_string(),
        reason: reason.to_string(),
    };
    let trimmed = raw.trim();
    let (time_part, date_part) = match trimmed.split_once(" on ") {
        Some((t, d)) => (Some(t.trim()), d.trim()),
        None => (None, trimmed),
    };

    let time = match time_part {
        None => NaiveTime::MIN,
        Some(t) => {
            let (clock, meridiem) = t
                .split_once(char::is_whitespace)
                .ok_or_else(|| err("time must look like `h:mm am`"))?;
            let (h, m) = clock
                .split_once(':')
                .ok_or_else(|| err("time must look like `h:mm am`"))?;
            let h: u32 = h.parse().map_err(|_| err("bad hour"))?;
            let m: u32 = m.parse().map_err(|_| err("bad minute"))?;
            if !(1..=12).contains(&h) || m > 59 {
                return Err(err("time out of range"));
            }
            let h24 = match meridiem.trim().to_ascii_lowercase().as_str() {
                "am" => h % 12,
                "pm" => h % 12 + 12,
                _ => return Err(err("expected am or pm")),
            };
            NaiveTime::from_hms_opt(h24, m, 0).ok_or_else(|| err("time out of range"))?
        }
    };

    let (day_month, year) = date_part
        .split_once(',')
        .ok_or_else(|| err("date must look like `20 January, 2023`"))?;
    let year: i32 = year.trim().parse().map_err(|_| err("bad year"))?;
    let mut dm = day_month.split_whitespace();
    let (Some(day), Some(month), None) = (dm.next(), dm.next(), dm.next()) else {
        return Err(err("date must look like `20 January, 2023`"));
    };
    let day: u32 = day.parse().map_err(|_| err("bad day"))?;
    let month: Month = month.parse().map_err(|_| err("unknown month"))?;
    let date = NaiveDate::from_ymd_opt(year, month.number_from_month(), day)
        .ok_or_else(|| err("no such calendar day"))?;
    Ok(SessionStamp { date, time })
}

/// Flattens a conversation into `(session, turn)` pairs in utterance order.
pub fn turns_in_order(conv: &Conversation) -> Vec<(&Session, &Turn)> {
    conv.sessions
        .iter()
        .flat_map(|s| s.turns.iter().map(move |t| (s, t)))
        .collect()
}

/// Serialises a corpus back into the LoCoMo layout.
pub fn to_locomo_json(corpus: &Corpus, opts: &ParseOptions) -> Value {
    let samples = corpus
        .entries
        .iter()
        .map(|entry| {
            let conv = &entry.conversation;
            let mut c = Map::new();
            c.insert("speaker_a".into(), conv.speaker_a.clone().into());
            c.insert("speaker_b".into(), conv.speaker_b.clone().into());
            for s in &conv.sessions {
                c.insert(
                    format!("session_{}_date_time", s.index),
                    s.date_time_raw.clone().into(),
                );
                let turns = s
                    .turns
                    .iter()
                    .map(|t| serde_json::json!({"speaker": t.speaker, "dia_id": t.dia_id, "text": t.text}))
                    .collect();
                c.insert(format!("session_{}", s.index), Value::Array(turns));
            }
            let qa = entry
                .qa
                .iter()
                .map(|q| {
                    let mut o = Map::new();
                    o.insert("question".into(), q.question.clone().into());
                    o.insert("answer".into(), q.expected_answer.clone().into());
                    if let Some(cat) = q.category {
                        o.insert("category".into(), cat.into());
                    }
                    Value::Object(o)
                })
                .collect();
            let mut o = Map::new();
            if let Some(id) = &entry.sample_id {
                o.insert("sample_id".into(), id.clone().into());
            }
            o.insert("conversation".into(), Value::Object(c));
            o.insert(opts.qa_key.clone(), Value::Array(qa));
            Value::Object(o)
        })
        .collect();
    Value::Array(samples)
}

/// Synthetic fixture shipped with the crate: two sessions of three turns
/// and five questions.
pub const MINI_FIXTURE: &str = include_str!("../../../fixtures/mini.json");

pub fn mini_fixture() -> Corpus {
    parse_corpus(MINI_FIXTURE).expect("bundled fixture parses")
}
