#![no_main]

use libfuzzer_sys::fuzz_target;
use mpc_calib::CalibrationResult;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = CalibrationResult::from_json(text) {
        let again = CalibrationResult::from_json(&r.to_json()).expect("written result parses");
        assert_eq!(again, r);
        let _ = r.params();
    }
});
