#![no_main]

// Input: first line is `|`-separated candidates, the rest is the response.

use dialemo::prompting::{parse_lm_response, ParseMode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (head, body) = text.split_once('\n').unwrap_or(("awe|fear|sadness", text));
    let candidates: Vec<String> = head.split('|').map(str::to_string).collect();
    for mode in [ParseMode::Strict, ParseMode::Lenient] {
        if let Ok((emotion, _)) = parse_lm_response(body, &candidates, mode) {
            assert!(candidates.contains(&emotion));
        }
    }
});
