#![no_main]

use dialemo::dataset::read_records;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records(data) {
        let mut ids: Vec<_> = records.iter().map(|r| &r.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), records.len());
    }
});
