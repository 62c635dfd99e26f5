use memharness_core::dataset::{mini_fixture, parse_corpus, turns_in_order};

fn fixture_file() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/mini.json")).unwrap()
}

#[test]
fn fixture_file_matches_a_hand_count() {
    let corpus = parse_corpus(&fixture_file()).unwrap();
    assert_eq!(corpus.entries.len(), 1);
    let e = &corpus.entries[0];
    assert_eq!(e.sample_id.as_deref(), Some("mini-1"));
    assert_eq!(e.conversation.sessions.len(), 2);
    // Enumerated by reading the file.
    let ids: Vec<&str> = turns_in_order(&e.conversation).iter().map(|(_, t)| t.dia_id.as_str()).collect();
    assert_eq!(ids, ["D1:1", "D1:2", "D1:3", "D2:1", "D2:2", "D2:3"]);
    let speakers: Vec<&str> = turns_in_order(&e.conversation).iter().map(|(_, t)| t.speaker.as_str()).collect();
    assert_eq!(speakers, ["Caroline", "Melanie", "Caroline", "Melanie", "Caroline", "Melanie"]);
    assert_eq!(e.qa.len(), 5);
    assert_eq!(e.qa[0].question, "What pet does Melanie have?");
    assert_eq!(e.qa[0].expected_answer, "a guinea pig named Oscar");
    let dates: Vec<String> = e.conversation.sessions.iter().map(|s| s.date.to_string()).collect();
    assert_eq!(dates, ["2023-05-08", "2023-08-23"]);
}

#[test]
fn bundled_fixture_is_the_file() {
    assert_eq!(mini_fixture(), parse_corpus(&fixture_file()).unwrap());
}
