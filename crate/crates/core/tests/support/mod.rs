#![allow(dead_code)]

pub mod criteria;
pub mod gen;
pub mod naive;

use std::path::PathBuf;

use igram_core::{Grammar, Lexicon};
use serde::Deserialize;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[derive(Debug, Deserialize)]
pub struct Case {
    pub text: String,
    pub models: usize,
    pub variants: Option<usize>,
    pub cky_models: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct Entry {
    name: String,
    contiguous: bool,
    sentences: Vec<Case>,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    fixtures: Vec<Entry>,
}

pub struct Fixture {
    pub name: String,
    pub contiguous: bool,
    pub grammar: Grammar,
    pub lexicon: Lexicon,
    pub cases: Vec<Case>,
}

pub fn load(name: &str) -> (Grammar, Lexicon) {
    let dir = fixtures_dir().join(name);
    let g = Grammar::load(&dir.join("grammar.json")).unwrap_or_else(|e| panic!("{name}: {e}"));
    let lex = Lexicon::load(&dir.join("lexicon.json")).unwrap_or_else(|e| panic!("{name}: {e}"));
    (g, lex)
}

pub fn suite() -> Vec<Fixture> {
    let text = std::fs::read_to_string(fixtures_dir().join("manifest.json")).unwrap();
    let m: Manifest = serde_json::from_str(&text).unwrap();
    m.fixtures
        .into_iter()
        .map(|e| {
            let (grammar, lexicon) = load(&e.name);
            Fixture {
                name: e.name,
                contiguous: e.contiguous,
                grammar,
                lexicon,
                cases: e.sentences,
            }
        })
        .collect()
}
