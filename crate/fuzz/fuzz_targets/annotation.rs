#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::review::AnnotationInput;

fuzz_target!(|data: &[u8]| {
    if let Ok(input) = serde_json::from_slice::<AnnotationInput>(data) {
        let _ = input.validate();
    }
});
