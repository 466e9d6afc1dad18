#![no_main]

use dialemo::report::{emit, parse_delimited, Format};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for format in [Format::Csv, Format::Tsv] {
        if let Ok(table) = parse_delimited(text, format) {
            let again = parse_delimited(&emit(&table, format).unwrap(), format).unwrap();
            assert_eq!(table, again);
            let _ = emit(&table, Format::Markdown);
        }
    }
});
