#![no_main]

use libfuzzer_sys::fuzz_target;
use m2b::net::Network;
use m2b_tensor::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(cp) = Checkpoint::from_bytes(data) {
        let bytes = cp.to_bytes().expect("parsed checkpoints serialize");
        assert_eq!(Checkpoint::from_bytes(&bytes).expect("reparse"), cp);
        let _ = Network::<f32>::from_checkpoint(&cp);
    }
});
