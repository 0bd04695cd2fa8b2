#[path = "support/audit.rs"]
mod audit;

#[test]
fn every_op_and_loss_matches_central_differences() {
    let results = audit::run(10);
    let failing: Vec<_> = results.iter().filter(|(_, e)| !(*e < audit::TOLERANCE)).collect();
    for (name, err) in &results {
        println!("{name:32} max rel err {err:.2e}");
    }
    assert!(failing.is_empty(), "failing checks: {failing:?}");
    assert!(results.len() >= 40);
}
