#![no_main]

use dialemo::prompting::normalize_emotion;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (head, span) = text.split_once('\n').unwrap_or(("awe|fear|something else", text));
    let candidates: Vec<String> = head.split('|').map(str::to_string).collect();
    if let Ok(e) = normalize_emotion(span, &candidates) {
        assert!(candidates.contains(&e));
    }
});
