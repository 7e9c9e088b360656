//! Runs every acceptance criterion at its stated tolerance.

use bsderk::suite::{run_all, CRITERIA};
use bsderk::SolverConfig;

#[test]
fn acceptance() {
    let results = run_all(&SolverConfig::default());
    let mut failed = Vec::new();
    for (&(id, title), res) in CRITERIA.iter().zip(results) {
        match res {
            Ok(c) => {
                println!("{}", c.summary_line());
                for d in &c.details {
                    println!("    {d}");
                }
                if !c.pass {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id}: FAIL ({title}) error: {e}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
