#![no_main]

use dialemo::jsonl::{read_lines, write_lines};
use dialemo::prompting::{Prediction, RawOutput};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_lines::<Prediction, _>(data) {
        let preds: Vec<Prediction> = rows.into_iter().map(|(_, p)| p).collect();
        let mut out = Vec::new();
        write_lines(&mut out, &preds).unwrap();
        let again: Vec<Prediction> = read_lines(&out[..]).unwrap().into_iter().map(|(_, p)| p).collect();
        assert_eq!(preds, again);
    }
    let _ = read_lines::<RawOutput, _>(data);
});
