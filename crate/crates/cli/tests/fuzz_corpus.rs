//! Replays the checked-in fuzz seeds through the same round-trip checks as
//! the fuzz targets, and runs the parsers on arbitrary text.

use std::fs;
use std::path::PathBuf;

use bregman_cli::RunConfig;
use bregman_core::control::parse_restart;
use bregman_core::schedule::ScheduleRule;
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn schedule_round_trip(s: &str) -> bool {
    match s.parse::<ScheduleRule>() {
        Ok(rule) => {
            assert_eq!(rule.to_string().parse::<ScheduleRule>().unwrap(), rule);
            true
        }
        Err(_) => false,
    }
}

fn config_round_trip(s: &str) -> bool {
    let Ok(cfg) = RunConfig::from_toml(s).and_then(RunConfig::validated) else {
        return false;
    };
    let text = cfg.to_toml().unwrap();
    let back = RunConfig::from_toml(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml().unwrap(), text);
    true
}

fn restart_round_trip(s: &str) -> bool {
    let Ok(restart) = parse_restart(s) else {
        return false;
    };
    let mut buf = Vec::new();
    restart.write(&mut buf).unwrap();
    assert_eq!(parse_restart(std::str::from_utf8(&buf).unwrap()).unwrap(), restart);
    true
}

#[test]
fn schedule_seeds_parse_and_round_trip() {
    for (path, text) in seeds("parse_schedule") {
        assert!(schedule_round_trip(&text), "{}", path.display());
    }
}

#[test]
fn config_seeds_parse_and_round_trip() {
    for (path, text) in seeds("parse_config") {
        assert!(config_round_trip(&text), "{}", path.display());
    }
}

#[test]
fn restart_seeds_parse_and_round_trip() {
    for (path, text) in seeds("parse_restart") {
        assert!(restart_round_trip(&text), "{}", path.display());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn schedule_parser_never_panics(s in "[0-9k*^.eE+ -]{0,16}") {
        schedule_round_trip(&s);
    }

    #[test]
    fn config_parser_never_panics(s in "[a-z_]{1,16} = [0-9\\[\\], \".a-z*^-]{0,24}\n{0,2}") {
        config_round_trip(&s);
    }

    #[test]
    fn restart_parser_never_panics(lines in prop::collection::vec("[a-z_# 0-9.eE-]{0,12}", 0..8)) {
        let mut text = String::from("# bregman-ocp restart v1\n");
        text.push_str(&lines.join("\n"));
        restart_round_trip(&text);
    }
}
