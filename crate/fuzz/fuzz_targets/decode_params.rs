#![no_main]

use dynhyper_cli::blob;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(params) = blob::decode(data) {
        assert_eq!(blob::encode(&params), data);
    }
});
