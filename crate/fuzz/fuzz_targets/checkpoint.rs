#![no_main]

use hard_core::augmentors::Augmentor;
use hard_core::models::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        // anything that decodes must re-encode to the same bytes
        assert_eq!(ck.encode(), data);
        let _ = Augmentor::from_checkpoint(ck);
    }
});
