#![no_main]

use libfuzzer_sys::fuzz_target;
use mpc_calib::metrics::PoseExport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(export) = PoseExport::parse(text) {
        // NaN never compares equal, so compare the written form instead
        let written = export.to_text();
        let again = PoseExport::parse(&written).expect("written export parses");
        assert_eq!(again.to_text(), written);
    }
});
