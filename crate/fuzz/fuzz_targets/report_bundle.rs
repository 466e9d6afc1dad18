#![no_main]

use dialemo::report::ReportBundle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(bundle) = ReportBundle::from_json(text) {
        let _ = bundle.summaries();
    }
});
