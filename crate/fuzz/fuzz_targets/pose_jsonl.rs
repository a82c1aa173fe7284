#![no_main]

use libfuzzer_sys::fuzz_target;
use spoter_vsct::pose_data::{parse_record, read_dataset_report, GlossVocabulary, LandmarkLayout};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let layout = LandmarkLayout::STANDARD;
    let report = read_dataset_report(text, &layout, None);
    // every accepted sequence must carry a label inside the vocabulary
    for s in &report.dataset.sequences {
        assert!(s.gloss_id < report.dataset.vocabulary.len());
        assert!(!s.frames.is_empty());
    }
    let fixed = GlossVocabulary::from_unsorted(["a", "book"]);
    let _ = read_dataset_report(text, &layout, Some(&fixed));
    if let Some(line) = text.lines().next() {
        let _ = parse_record(line, 1, &layout);
    }
});
