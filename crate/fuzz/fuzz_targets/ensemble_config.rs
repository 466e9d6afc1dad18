#![no_main]

use dialemo::ensemble::EnsembleConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = EnsembleConfig::from_json(text) else { return };
    let again = EnsembleConfig::from_json(&config.to_json()).unwrap();
    assert_eq!(config, again);
});
