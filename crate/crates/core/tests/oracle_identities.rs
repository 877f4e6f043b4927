use percolab::oracle::catalog::Catalog;

#[test]
fn standard_catalog_passes_every_audit() {
    let outcomes = Catalog::standard().run().unwrap();
    let failures: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(failures.is_empty(), "{failures:#?}");
    let count = |s: &str| outcomes.iter().filter(|o| o.suite == s).count();
    assert!(count("russo") >= 10);
    assert!(count("fkg") >= 20);
    assert!(count("bk") >= 20);
    assert_eq!(count("total"), count("russo"));
}
