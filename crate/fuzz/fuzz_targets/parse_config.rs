#![no_main]

use bregman_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RunConfig::from_toml(s) else {
        return;
    };
    if let Ok(cfg) = cfg.validated() {
        let text = cfg.to_toml().expect("valid config serializes");
        let back = RunConfig::from_toml(&text).expect("serialized config parses");
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }
});
