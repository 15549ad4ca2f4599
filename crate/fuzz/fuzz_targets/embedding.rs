#![no_main]
use libfuzzer_sys::fuzz_target;
use vitl_core::data::EmbeddingTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = EmbeddingTable::from_reader(data) {
        for label in table.labels().map(str::to_owned).collect::<Vec<_>>() {
            assert_eq!(table.get(&label).unwrap().dim(), table.dim());
        }
    }
});
