#![no_main]

use dynhyper::dyngraph::{parse_dataset, LoadOptions, RawDataset, RawSlice};
use libfuzzer_sys::fuzz_target;

// Sections are separated by NUL: meta, then edges / features / labels /
// presence per slice. An empty optional section means the file is absent.
fuzz_target!(|text: &str| {
    let mut parts = text.split('\0');
    let meta = parts.next().unwrap_or_default().to_string();
    let rest: Vec<&str> = parts.collect();
    let optional = |s: &str| (!s.is_empty()).then(|| s.to_string());
    let slices = rest
        .chunks(4)
        .map(|c| RawSlice {
            edges: c[0].to_string(),
            features: c.get(1).and_then(|s| optional(s)),
            labels: c.get(2).copied().unwrap_or_default().to_string(),
            presence: c.get(3).and_then(|s| optional(s)),
        })
        .collect();
    let raw = RawDataset { meta, slices };
    let options = LoadOptions { degree_buckets: 4 };
    if let Ok(g) = parse_dataset(&raw, options) {
        assert_eq!(g.num_slices(), raw.slices.len());
    }
});
