//! Labels comments with the MAT keywords or a custom pattern file.
//!
//! cargo run --example annotate_satd -- [patterns.txt]

use satd_vuln::annotate::{annotate_mat, PatternSet};

const COMMENTS: [&str; 6] = [
    "FIXME: This doesn't lock the sigmask.",
    "TODO_later",
    "Replace the whole sigmask.",
    "this is a hack, remove once the driver is fixed",
    "Hacky workaround",
    "xxx",
];

fn main() -> satd_vuln::Result<()> {
    let custom = match std::env::args().nth(1) {
        Some(p) => PatternSet::load(std::path::Path::new(&p))?,
        None => PatternSet::parse("example", "w:workaround\ns:hack")?,
    };
    println!("{:<50} {:>5} {:>6}", "comment", "MAT", "custom");
    for c in COMMENTS {
        println!("{c:<50} {:>5} {:>6}", annotate_mat(c), custom.matches(c));
    }
    Ok(())
}
