#![no_main]

use libfuzzer_sys::fuzz_target;
use spoter_vsct::run_config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let _ = cfg.validate();
        // the resolved echo must parse back to the same config, NaN fields aside
        if let Ok(again) = RunConfig::parse(&cfg.to_text()) {
            assert_eq!(again.to_text(), cfg.to_text());
        } else {
            panic!("resolved config does not re-parse");
        }
    }
});
