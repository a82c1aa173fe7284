#![no_main]

use libfuzzer_sys::fuzz_target;
use spoter_vsct::pose_data::{parse_mapping_tsv, ClassMapping, GlossVocabulary};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pairs) = parse_mapping_tsv(text) else { return };
    let source = GlossVocabulary::from_unsorted(pairs.iter().map(|(s, _)| s.as_str()));
    if let Ok(m) = ClassMapping::from_gloss_pairs(&pairs, &source, None) {
        // injective mappings invert cleanly
        for &(s, t) in m.pairs() {
            assert_eq!(m.inverse().map(t), Some(s));
        }
    }
});
