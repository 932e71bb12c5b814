#![no_main]

use bregman_core::control::parse_restart;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(restart) = parse_restart(s) {
        let mut buf = Vec::new();
        restart.write(&mut buf).expect("write to memory");
        let again = parse_restart(std::str::from_utf8(&buf).unwrap()).expect("written data parses");
        assert_eq!(again, restart);
    }
});
