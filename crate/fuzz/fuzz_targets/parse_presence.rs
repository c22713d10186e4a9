#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(p) = dynhyper::dyngraph::parse_presence(text, n as usize, "presence") {
        assert_eq!(p.len(), n as usize);
    }
});
