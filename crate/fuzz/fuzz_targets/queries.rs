#![no_main]
use libfuzzer_sys::fuzz_target;
use vitl_core::data::io::RecordReader;

fuzz_target!(|data: &[u8]| {
    let Ok(reader) = RecordReader::new(data) else { return };
    let layout = reader.layout().clone();
    for rec in reader.take(4096) {
        if let Ok(rec) = rec {
            assert_eq!((rec.theta.len(), rec.landmarks.len()), (layout.p, layout.d));
        }
    }
});
