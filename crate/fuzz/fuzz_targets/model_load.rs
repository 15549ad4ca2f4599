#![no_main]
use libfuzzer_sys::fuzz_target;
use vitl_core::VitlModel;

fuzz_target!(|data: &[u8]| {
    // anything that decodes must re-encode to the same bytes
    if let Ok(model) = VitlModel::from_bytes(data) {
        let bytes = model.to_bytes();
        assert_eq!(VitlModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
});
