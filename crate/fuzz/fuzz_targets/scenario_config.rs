#![no_main]

use gset_cli::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    match ScenarioConfig::parse(src) {
        Ok(cfg) => {
            let s = cfg.scenario(None);
            let _ = s.validate();
            let _ = cfg.adversary(None).build(s.seed);
        }
        Err(e) => assert!(e.line >= 1 && e.line <= src.lines().count().max(1)),
    }
});
