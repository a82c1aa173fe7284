#![no_main]

use libfuzzer_sys::fuzz_target;
use spoter_vsct::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    // Metadata can declare huge models; the decoder must reject, not allocate blindly.
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&ck.to_bytes()).expect("re-encoded checkpoint decodes");
        assert_eq!(again.model.config(), ck.model.config());
    }
});
