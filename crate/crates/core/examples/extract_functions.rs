//! Splits a C file into functions and separates comments from code.
//!
//! cargo run --example extract_functions -- path/to/file.c

use satd_vuln::corpus::{extract_functions, strip_internal_comments};

const SAMPLE: &str = r#"/* Returns the larger value. */
int max(int a, int b)
{
    // XXX: ties favour b
    return a > b ? a : b; /* see "max" in the notes */
}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p)?,
        None => SAMPLE.to_string(),
    };
    for f in extract_functions(&source)? {
        let (code, comments) = strip_internal_comments(&f.code)?;
        println!("== {}", f.id);
        println!("leading: {:?}", f.leading_comment);
        println!("internal: {comments:?}");
        println!("{code}\n");
    }
    Ok(())
}
