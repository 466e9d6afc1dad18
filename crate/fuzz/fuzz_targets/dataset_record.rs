#![no_main]

use dialemo::dataset::{parse_record_line, write_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    let Ok(record) = parse_record_line(line) else { return };
    let mut out = Vec::new();
    write_records(&mut out, std::slice::from_ref(&record)).unwrap();
    let again = parse_record_line(std::str::from_utf8(&out).unwrap().trim_end()).unwrap();
    assert_eq!(record, again);
});
