#![no_main]
use libfuzzer_sys::fuzz_target;
use vitl_core::data::io::{read_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    let Ok(ds) = read_dataset(data) else { return };
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).expect("a parsed dataset writes back");
    let again = read_dataset(&buf[..]).expect("written dataset reads back");
    assert_eq!((again.n(), again.m(), again.d(), again.p()), (ds.n(), ds.m(), ds.d(), ds.p()));
});
