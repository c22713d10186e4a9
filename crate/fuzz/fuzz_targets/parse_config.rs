#![no_main]

use dynhyper_cli::{parse_config, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(settings) = parse_config(text, "fuzz.cfg") {
        if let Ok(cfg) = RunConfig::from_settings(Some(("fuzz.cfg", &settings)), &[]) {
            let _ = cfg.validate();
        }
    }
});
