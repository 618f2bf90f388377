use kfp_core::verify;

// One test so the criteria run one after another and their timings are honest.
#[test]
fn acceptance_criteria() {
    let reports = verify::run_all();
    for report in &reports {
        println!("{report}");
    }
    let failed: Vec<u8> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
