//! Self-describing CSV and JSON documents.
//!
//! CSV files start with one `# <config json>` line; JSON files wrap the result
//! as `{"config": ..., "result": ...}`.

use serde::Serialize;

use crate::error::{Error, Result};

fn encode_err(e: impl std::fmt::Display) -> Error {
    Error::bad(format!("serialization failed: {e}"))
}

/// CSV text with a config header line.
pub fn csv_document<C, R, I>(config: &C, header: &[&str], rows: R) -> Result<String>
where
    C: Serialize,
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = String>,
{
    let mut out = format!("# {}\n", serde_json::to_string(config).map_err(encode_err)?);
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(encode_err)?;
    for row in rows {
        writer.write_record(row).map_err(encode_err)?;
    }
    let body = writer.into_inner().map_err(encode_err)?;
    out.push_str(&String::from_utf8(body).map_err(encode_err)?);
    Ok(out)
}

/// Pretty JSON text of `{"config": config, "result": result}`.
pub fn json_document<C: Serialize, T: Serialize>(config: &C, result: &T) -> Result<String> {
    let doc = serde_json::json!({
        "config": serde_json::to_value(config).map_err(encode_err)?,
        "result": serde_json::to_value(result).map_err(encode_err)?,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(encode_err)?;
    text.push('\n');
    Ok(text)
}

/// The config echoed in the first line of a CSV document.
pub fn csv_config(text: &str) -> Option<serde_json::Value> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    serde_json::from_str(line).ok()
}
