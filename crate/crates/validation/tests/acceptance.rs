//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::time::Instant;

fn main() {
    let all = sgc_validation::criteria();
    let mut failed = 0;
    for (name, f) in all {
        let t0 = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name} ({:.1} s): {}", if o.pass { "PASS" } else { "FAIL" }, t0.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", all.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
