#![no_main]

use bregman_core::schedule::ScheduleRule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rule) = s.parse::<ScheduleRule>() {
        let text = rule.to_string();
        let again: ScheduleRule = text.parse().expect("canonical form parses");
        assert_eq!(again, rule);
    }
});
