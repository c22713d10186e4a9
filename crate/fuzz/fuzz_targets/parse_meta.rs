#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(meta) = dynhyper::dyngraph::parse_meta(text) {
        assert!(meta.classes > 0 && meta.slices > 0);
    }
});
