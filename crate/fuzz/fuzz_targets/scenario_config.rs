#![no_main]
use libfuzzer_sys::fuzz_target;
use sonarflow_core::simulator::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<ScenarioConfig>(data) {
        let _ = cfg.validate();
    }
});
