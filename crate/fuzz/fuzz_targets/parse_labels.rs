#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [n, classes, rest @ ..] = data else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let (n, classes) = (*n as usize, *classes as usize);
    if let Ok(labels) = dynhyper::dyngraph::parse_labels(text, n, classes, "labels") {
        assert_eq!(labels.len(), n);
        assert!(labels.iter().flatten().all(|&c| c < classes));
    }
});
