//! Association between SATD and vulnerability labels on a 2x2 table.
//!
//! cargo run --example chi_square -- [n00 n01 n10 n11]

use satd_vuln::annotate::{chi_square, ContingencyTable};

fn main() -> satd_vuln::Result<()> {
    let c: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let table = match c[..] {
        [a, b, d, e] => ContingencyTable::new(a, b, d, e),
        // Big-Vul counts: rows are SATD no/yes, columns vulnerable no/yes.
        _ => ContingencyTable::new(134_515, 7_791, 1_395, 657),
    };
    let t = chi_square(&table)?;
    println!("{} functions", table.total());
    println!("chi2 = {:.1}, dof = {}, p = {:e}", t.statistic, t.dof, t.p_value);
    Ok(())
}
