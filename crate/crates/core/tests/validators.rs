mod common;

use common::Corpus;

fn assert_corpus(c: Corpus) {
    assert!(c.positive.len() >= 10 && c.negative.len() >= 10, "{}: corpus too small", c.name);
    let wrong = c.misclassified();
    assert!(wrong.is_empty(), "{} misclassified {wrong:?}", c.name);
}

#[test]
fn citation_integrity_corpus() {
    assert_corpus(common::citation_corpus());
}

#[test]
fn section_completeness_corpus() {
    assert_corpus(common::section_corpus());
}

#[test]
fn revision_markup_round_trip_corpus() {
    assert_corpus(common::markup_corpus());
}

#[test]
fn response_letter_completeness_corpus() {
    assert_corpus(common::letter_corpus());
}

#[test]
fn avatar_label_corpus() {
    assert_corpus(common::avatar_corpus());
}
