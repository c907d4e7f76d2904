#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::mot::{parse_mot_csv, sort_records, write_mot};

fuzz_target!(|data: &[u8]| {
    if let Ok(mut records) = parse_mot_csv(data) {
        let mut buf = Vec::new();
        write_mot(&mut buf, &records).unwrap();
        sort_records(&mut records);
        assert_eq!(parse_mot_csv(buf.as_slice()).unwrap(), records);
    }
});
