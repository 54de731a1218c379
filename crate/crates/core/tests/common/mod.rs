#![allow(dead_code)]

use std::sync::OnceLock;

use gravlab_core::library::ScenarioLibrary;
use gravlab_core::tasks::{build_catalog, builtin_tasks, Catalog};

pub fn library() -> &'static ScenarioLibrary {
    static LIB: OnceLock<ScenarioLibrary> = OnceLock::new();
    LIB.get_or_init(ScenarioLibrary::builtin)
}

pub fn catalog() -> &'static Catalog {
    static CAT: OnceLock<Catalog> = OnceLock::new();
    CAT.get_or_init(|| build_catalog(library(), &builtin_tasks()).expect("builtin catalog"))
}

pub fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}
