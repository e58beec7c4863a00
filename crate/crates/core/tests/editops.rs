mod common;

use common::oracles::{brute_force_lcs, indel_distance, toks};
use msnmt::editops::{apply_edits, derive_edits, script_vocabulary, EditOp, EditScript};
use msnmt::textproc::Vocabulary;
use proptest::prelude::*;

fn ins(w: &str) -> EditOp {
    EditOp::Insert(w.to_string())
}

const MT: &str = "Wählen Sie Uncached \" Aktualisieren \" aus dem Menü des Histogrammbedienfeldes .";
const PE: &str = "Wählen Sie \" Nicht gespeicherte aktualisieren \" aus dem Menü des Histogrammbedienfeldes .";

fn menu_script() -> EditScript {
    use EditOp::{Delete as D, Keep as K};
    EditScript(vec![
        K,
        K,
        D,
        K,
        ins("Nicht"),
        ins("gespeicherte"),
        ins("aktualisieren"),
        D,
        K,
        K,
        K,
        K,
        K,
        K,
        K,
    ])
}

#[test]
fn menu_example() {
    let (mt, pe) = (toks(MT), toks(PE));
    let script = derive_edits(&mt, &pe);
    assert_eq!(script, menu_script());
    assert_eq!(script.len(), 15);
    assert_eq!(apply_edits(&mt, &script), pe);
    assert_eq!(
        script.to_string(),
        "<keep> <keep> <delete> <keep> Nicht gespeicherte aktualisieren <delete> <keep> <keep> <keep> <keep> <keep> <keep> <keep>"
    );
}

#[test]
fn menu_example_encodes_losslessly() {
    let base = Vocabulary::from_words(toks(PE).into_iter().chain(toks(MT)).collect::<std::collections::BTreeSet<_>>()).unwrap();
    let vocab = script_vocabulary(&base).unwrap();
    let script = menu_script();
    let ids = script.encode(&vocab).unwrap();
    assert_eq!(EditScript::decode(&ids, &vocab).unwrap(), script);
    assert!(EditScript::decode(&[], &vocab).unwrap().is_empty());
    assert!(EditScript(vec![]).encode(&vocab).unwrap().is_empty());
}

#[test]
fn identity_pair() {
    let s = toks("Wählen Sie");
    assert_eq!(derive_edits(&s, &s), EditScript(vec![EditOp::Keep, EditOp::Keep]));
}

fn sentence(vocab: u8, max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec((0..vocab).prop_map(|i| format!("w{i}")), 0..=max)
}

fn op(vocab: u8) -> impl Strategy<Value = EditOp> {
    prop_oneof![
        Just(EditOp::Keep),
        Just(EditOp::Delete),
        (0..vocab).prop_map(|i| EditOp::Insert(format!("w{i}"))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn roundtrip_and_minimality(mt in sentence(20, 12), pe in sentence(20, 12)) {
        let script = derive_edits(&mt, &pe);
        prop_assert_eq!(apply_edits(&mt, &script), pe.clone());
        let lcs = brute_force_lcs(&mt, &pe);
        let edits = script.ops().iter().filter(|o| !matches!(o, EditOp::Keep)).count();
        prop_assert_eq!(edits, mt.len() + pe.len() - 2 * lcs);
        prop_assert_eq!(edits, indel_distance(&mt, &pe));
        prop_assert_eq!(script.len(), mt.len() + pe.len() - lcs);
        prop_assert_eq!(script.consumed(), mt.len());
    }

    #[test]
    fn small_alphabet_roundtrip(mt in sentence(3, 10), pe in sentence(3, 10)) {
        let script = derive_edits(&mt, &pe);
        prop_assert_eq!(apply_edits(&mt, &script), pe.clone());
        let edits = script.ops().iter().filter(|o| !matches!(o, EditOp::Keep)).count();
        prop_assert_eq!(edits, mt.len() + pe.len() - 2 * brute_force_lcs(&mt, &pe));
    }

    #[test]
    fn apply_is_total(mt in sentence(5, 8), ops in prop::collection::vec(op(5), 0..20)) {
        let script = EditScript(ops);
        let out = apply_edits(&mt, &script);
        let inserted = script.ops().iter().filter(|o| matches!(o, EditOp::Insert(_))).count();
        prop_assert!(out.len() <= mt.len() + inserted);
    }

    #[test]
    fn id_roundtrip(ops in prop::collection::vec(op(50), 0..30)) {
        let base = Vocabulary::from_words((0..50).map(|i| format!("w{i}"))).unwrap();
        let vocab = script_vocabulary(&base).unwrap();
        let script = EditScript(ops);
        let ids = script.encode(&vocab).unwrap();
        prop_assert_eq!(EditScript::decode(&ids, &vocab).unwrap(), script.clone());
        prop_assert_eq!(EditScript::parse(&script.to_string()), script);
    }
}
