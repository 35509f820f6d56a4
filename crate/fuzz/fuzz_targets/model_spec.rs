#![no_main]

use beb_core::spec_io::{export_model_json, parse_model_spec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(source) = parse_model_spec(text) else { return };
    let Ok(model) = source.model() else { return };
    // Anything that loads must survive an export round trip unchanged.
    let json = export_model_json(&model).expect("loaded models export");
    let back = parse_model_spec(&json).expect("exported JSON parses").model().expect("and builds");
    assert_eq!(back, model);
});
