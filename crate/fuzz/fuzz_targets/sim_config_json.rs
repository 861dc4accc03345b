#![no_main]

use libfuzzer_sys::fuzz_target;
use mpc_calib::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SimConfig::from_json(text) {
        assert_eq!(SimConfig::from_json(&cfg.to_json()).expect("written config parses"), cfg);
    }
});
