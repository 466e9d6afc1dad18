#![no_main]

use dialemo::dataset::FoldAssignment;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(folds) = FoldAssignment::from_json(text) else { return };
    assert!(folds.assignment.values().all(|&f| f < folds.k));
    let again = FoldAssignment::from_json(&folds.to_json()).unwrap();
    assert_eq!(folds, again);
});
