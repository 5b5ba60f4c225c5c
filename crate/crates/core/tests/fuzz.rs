mod common;

use common::{fuzz_corpus, seed_corpus};
use tdnoise_core::meshio::parse_geometry;

#[test]
fn seed_corpus_parses() {
    let dir = tempfile::tempdir().unwrap();
    for (i, bytes) in seed_corpus(dir.path()).iter().enumerate() {
        parse_geometry(bytes, &format!("seed{i}")).unwrap();
    }
}

#[test]
fn mutated_files_never_panic() {
    let dir = tempfile::tempdir().unwrap();
    let s = fuzz_corpus(dir.path(), 3000, 99);
    assert_eq!(s.panics, 0, "{s:?}");
    assert_eq!(s.other_errors, 0, "{s:?}");
    assert!(s.structured_errors > 0 && s.parsed > 0, "{s:?}");
}
