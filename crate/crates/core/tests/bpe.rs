use ditok_core::bpe::{bpe_train, normalize, BpeModel, BLANK_ID, UNK_ID};
use proptest::prelude::*;

const CORPUS: &[&str] = &[
    "der schnelle braune fuchs",
    "springt über den faulen hund",
    "le renard brun rapide",
    "el zorro marrón salta",
    "o cão preguiçoso dorme",
];

fn model() -> BpeModel {
    bpe_train(CORPUS, 120).unwrap()
}

proptest! {
    #[test]
    fn round_trip_over_training_alphabet(words in prop::collection::vec("[a-zäöüßéñãçó]{1,8}", 0..6)) {
        let m = model();
        let text = words.join(" ");
        let ids = m.encode(&text);
        prop_assert!(ids.iter().all(|&i| i != BLANK_ID && (i as usize) < m.vocab_size()));
        let known: String = normalize(&text)
            .chars()
            .map(|c| if c == ' ' || CORPUS.iter().any(|s| s.contains(c)) { c } else { '?' })
            .collect();
        if !known.contains('?') {
            prop_assert_eq!(m.decode(&ids).unwrap(), normalize(&text));
        } else {
            prop_assert!(ids.contains(&UNK_ID));
        }
    }

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,30}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once.clone());
        prop_assert!(!once.contains("  ") && !once.starts_with(' ') && !once.ends_with(' '));
    }
}

#[test]
fn training_is_deterministic_and_serializable() {
    let a = model();
    let b = model();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = BpeModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(c.encode("der fuchs"), a.encode("der fuchs"));
    assert!(a.vocab_size() <= 120);
}

#[test]
fn blank_never_decodes() {
    assert!(model().decode(&[BLANK_ID]).is_err());
}
