mod common;

use common::{Check, CheckResult};

fn run(name: &str, f: fn(&std::path::Path) -> CheckResult) {
    let dir = tempfile::tempdir().unwrap();
    match f(dir.path()) {
        Ok(Check::Pass) => {}
        Ok(Check::Skip(why)) => println!("SKIP {name}: {why}"),
        Err(e) => panic!("{name}: {e}"),
    }
}

#[test]
fn suffix_only_rustc_errors_are_filtered() {
    run("rustc prefix noise", common::oracles::rustc_prefix_noise);
}

#[test]
fn weakened_tsc_codes_only_pass_in_the_loop() {
    run("tsc weakening", common::oracles::tsc_weakening);
}

#[test]
fn differential_echo_pairs() {
    run("differential", common::oracles::differential_echo);
}
