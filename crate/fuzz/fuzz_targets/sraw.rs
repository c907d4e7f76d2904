#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::sraw::{decode_header, decode_sraw, encode_sraw};

fuzz_target!(|data: &[u8]| {
    let _ = decode_header(data);
    if let Ok((geom, frames)) = decode_sraw(data) {
        // anything that decodes must re-encode to the same bytes
        assert_eq!(encode_sraw(&geom, &frames).unwrap(), data);
    }
});
