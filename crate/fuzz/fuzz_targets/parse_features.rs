#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [n, d, rest @ ..] = data else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let (n, d) = (*n as usize % 32, *d as usize % 16);
    if let Ok(m) = dynhyper::dyngraph::parse_features(text, n, d, "feat") {
        assert_eq!(m.shape(), (n, d));
        assert!(m.as_slice().iter().all(|v| v.is_finite()));
    }
});
