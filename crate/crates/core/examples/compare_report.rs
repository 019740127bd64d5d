//! Builds the delta report from a handful of made-up scores.

use satd_vuln::corpus::InputMode;
use satd_vuln::experiment::{build_report, Approach, DeltaKind, LossMode, ReportRow};

fn main() -> satd_vuln::Result<()> {
    let scores = [
        (Approach::MtSatd, LossMode::Regular, 0.80, 0.70),
        (Approach::MtVuln, LossMode::Regular, 0.90, 0.88),
        (Approach::StSatd, LossMode::Regular, 0.78, 0.69),
        (Approach::StVuln, LossMode::Regular, 0.91, 0.89),
        (Approach::MtSatd, LossMode::Weighted, 0.76, 0.77),
        (Approach::MtVuln, LossMode::Weighted, 0.90, 0.90),
        (Approach::StSatd, LossMode::Weighted, 0.74, 0.75),
        (Approach::StVuln, LossMode::Weighted, 0.89, 0.90),
    ];
    let rows: Vec<ReportRow> = scores
        .iter()
        .map(|&(a, l, p, r)| ReportRow::new(a, l, InputMode::Out, p, r, satd_vuln::experiment::f1_score(p, r)))
        .collect();
    let report = build_report("made-up", &rows)?;
    print!("{}", report.render());
    let d = report.delta(
        DeltaKind::MultiVsSingle,
        Approach::MtSatd,
        LossMode::Weighted,
        InputMode::Out,
    );
    println!(
        "weighted MT_SATD vs ST_SATD: {}",
        d.map(|d| d.to_string()).unwrap_or_default()
    );
    Ok(())
}
