//! Regenerates `tests/golden/oracle.json`.

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = immse_core::oracle::golden_records()?;
    let doc = serde_json::json!({
        "generator": "cargo run -p immse-core --example gen_golden",
        "records": records,
    });
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/oracle.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    println!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}
