#![no_main]

use hard_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text, "fuzz") {
        let _ = cfg.validate();
        let back = ExperimentConfig::parse(&cfg.to_toml(), "round trip").expect("serialized config parses");
        assert_eq!(back.to_toml(), cfg.to_toml());
    }
});
