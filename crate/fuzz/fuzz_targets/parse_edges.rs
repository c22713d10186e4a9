#![no_main]

use libfuzzer_sys::fuzz_target;

// First byte picks the node count.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let n = n as usize;
    if let Ok(edges) = dynhyper::dyngraph::parse_edges(text, n, "edges") {
        assert!(edges.iter().all(|&(u, v)| u < n && v < n));
    }
});
