#![no_main]
use chrono::DateTime;
use libfuzzer_sys::fuzz_target;
use sonarflow_core::review::{flag_outputs, EdgeUpload};

fuzz_target!(|data: &[u8]| {
    if let Ok(u) = serde_json::from_slice::<EdgeUpload>(data) {
        let now = DateTime::UNIX_EPOCH;
        if let Ok(items) = flag_outputs(&u.site_id, &u.frame_file, &u.outputs, 0.5, &u.events, now)
        {
            assert!(items.len() <= u.outputs.len() + u.events.len());
        }
    }
});
