#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<RunConfig>(data) {
        let _ = cfg.gate.validate();
        let _ = cfg.detector.validate();
        let _ = cfg.tracker.validate();
        let _ = cfg.analytics.validate();
        let _ = cfg.metrics.validate();
        let _ = serde_json::to_vec(&cfg).unwrap();
    }
});
