#![no_main]

use libfuzzer_sys::fuzz_target;
use mpc_calib::CalibrationDataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // anything that parses must survive a write/parse round trip unchanged
    if let Ok(ds) = CalibrationDataset::from_json(text) {
        let again = CalibrationDataset::from_json(&ds.to_json()).expect("written dataset parses");
        assert_eq!(again, ds);
    }
});
