#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::mot::{parse_masks_jsonl, write_masks_jsonl};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = parse_masks_jsonl(data) {
        let mut buf = Vec::new();
        write_masks_jsonl(&mut buf, &entries).unwrap();
        assert_eq!(parse_masks_jsonl(buf.as_slice()).unwrap(), entries);
    }
});
