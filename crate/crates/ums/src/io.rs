//! Label CSV in, UMS JSONL out (and back).

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::canonical::{from_value, serialize_canonical};
use crate::error::{Result, UmsError};
use crate::json::{self, JsonValue};
use crate::record::{build_record, RawLabel, SchemaConfig, UmsRecord};

/// Read a label table with header `image_id,<finding...>`. Blank cells are
/// missing labels; findings without a column count as blank everywhere.
pub fn read_label_csv<R: Read>(reader: R, schema: &SchemaConfig) -> Result<Vec<UmsRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| UmsError::Table(e.to_string()))?.clone();
    if header.get(0) != Some("image_id") {
        return Err(UmsError::Table(format!(
            "first column must be image_id, found {:?}",
            header.get(0).unwrap_or("")
        )));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    for c in &columns {
        if schema.position(c).is_none() {
            return Err(UmsError::UnknownFinding(c.clone()));
        }
    }

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| UmsError::Table(format!("row {}: {e}", row + 1)))?;
        let image_id = rec.get(0).unwrap_or("").to_string();
        let mut labels: HashMap<String, RawLabel> = HashMap::with_capacity(columns.len());
        for (name, cell) in columns.iter().zip(rec.iter().skip(1)) {
            let raw = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| UmsError::LabelFormat {
                    finding: name.clone(),
                    value: cell.to_string(),
                })?)
            };
            labels.insert(name.clone(), raw);
        }
        out.push(build_record(image_id, &labels, schema)?);
    }
    Ok(out)
}

/// `{"image_id": "<id>", "ums": <canonical record>}`
pub fn jsonl_line(record: &UmsRecord) -> Result<String> {
    let mut line = String::from("{\"image_id\": ");
    json::write_string(&mut line, &record.image_id);
    line.push_str(", \"ums\": ");
    line.push_str(&serialize_canonical(record, None)?);
    line.push('}');
    Ok(line)
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[UmsRecord]) -> std::io::Result<()> {
    for r in records {
        let line = jsonl_line(r).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parse JSONL produced by [`write_jsonl`]. Blank lines are skipped.
pub fn read_jsonl(text: &str, schema: &SchemaConfig) -> Result<Vec<UmsRecord>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let JsonValue::Object(members) = json::parse(line)? else {
            return Err(UmsError::Structure("JSONL line is not an object".into()));
        };
        let [(k1, _, JsonValue::String(id)), (k2, _, ums)] = members.as_slice() else {
            return Err(UmsError::Structure("JSONL line must be {\"image_id\": <string>, \"ums\": ...}".into()));
        };
        if k1 != "image_id" || k2 != "ums" {
            return Err(UmsError::Structure(format!("unexpected keys {k1:?}, {k2:?}")));
        }
        out.push(from_value(ums, schema)?.with_image_id(id.clone()));
    }
    Ok(out)
}
