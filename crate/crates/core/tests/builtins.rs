use regulab::cli::{builtin_names, check_expected, load_fixture, RunOptions};

fn check(name: &str) {
    let fixture = load_fixture(&format!("builtin:{name}")).unwrap();
    let checks = check_expected(&fixture, &RunOptions::default()).unwrap();
    assert!(!checks.is_empty(), "{name} has no expectations");
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{name}: {failed:?}");
}

#[test]
fn cube_d3() {
    check("example-5.1-d3");
}

#[test]
fn power_d5() {
    check("example-5.1-d5");
}

#[test]
fn bounded_odd_map() {
    check("example-5.2-bounded");
}

#[test]
fn squaring_vi() {
    check("example-5.3-squaring");
}

#[test]
fn flat_exponential() {
    check("example-5.4-exp");
}

#[test]
fn cubic_fold() {
    check("cubic-fold");
}

#[test]
fn lcp_half_line() {
    check("lcp-identity-halfline");
}

#[test]
fn identity() {
    check("identity-map");
}

#[test]
fn loja_pair() {
    check("pair-abs-square");
}

#[test]
fn every_builtin_is_covered() {
    assert_eq!(builtin_names().len(), 9);
}
