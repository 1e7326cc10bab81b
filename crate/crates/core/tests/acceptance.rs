use kohler_core::solver::SolverConfig;
use kohler_core::verify::{run, Suite};

fn criterion(suite: Suite) {
    let report = run(suite, &SolverConfig::default()).unwrap_or_else(|e| panic!("{suite}: {e}"));
    for c in &report.checks {
        println!("{c}");
    }
    println!(
        "criterion {} ({suite}): {} in {:.2} s",
        suite.criterion(),
        if report.passed() { "PASS" } else { "FAIL" },
        report.elapsed
    );
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "failed checks: {failed:?}");
}

#[test]
fn criterion_1_identities() {
    criterion(Suite::Identities);
}

#[test]
fn criterion_2_series_inversion_order() {
    criterion(Suite::Series);
}

#[test]
fn criterion_3_laminate() {
    criterion(Suite::Laminate);
}

#[test]
fn criterion_4_layered() {
    criterion(Suite::Layered);
}

#[test]
fn criterion_5_psd_gap() {
    criterion(Suite::PsdGap);
}

#[test]
fn criterion_6_equality_and_curl_defect() {
    criterion(Suite::Equality);
}

#[test]
fn criterion_7_fourth_order_reversal() {
    criterion(Suite::FourthOrder);
}

#[test]
fn criterion_8_sign_change() {
    criterion(Suite::SignChange);
}

#[test]
fn criterion_9_checkerboard() {
    criterion(Suite::Checkerboard);
}
