#![no_main]

use hard_core::data::parse_idx_images;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = parse_idx_images(data) {
        let s = t.shape();
        assert_eq!(s.len(), 4);
        assert_eq!(s.iter().product::<usize>(), t.len());
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
