//! Two-column `triplet_id,g_hat` tables for fixed annotators.
//!
//! Blank lines and lines starting with `#` are skipped. An optional header
//! `triplet_id,g_hat` may appear first. Columns may be separated by a comma
//! or whitespace.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub fn read_fixed_table<R: BufRead>(reader: R) -> Result<HashMap<u64, f64>> {
    let mut out = HashMap::new();
    let mut seen_data = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if !seen_data && fields == ["triplet_id", "g_hat"] {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 columns, found {}", fields.len())));
        }
        let id: u64 = fields[0].parse().map_err(|_| parse_err(format!("bad triplet id {:?}", fields[0])))?;
        let g: f64 = fields[1].parse().map_err(|_| parse_err(format!("bad value {:?}", fields[1])))?;
        if !(0.0..=1.0).contains(&g) {
            return Err(parse_err(format!("value {g} outside [0, 1]")));
        }
        if out.insert(id, g).is_some() {
            return Err(parse_err(format!("duplicate triplet id {id}")));
        }
    }
    Ok(out)
}

/// Write a table sorted by id, with header.
pub fn write_fixed_table<W: Write>(mut w: W, table: &HashMap<u64, f64>) -> Result<()> {
    let mut rows: Vec<_> = table.iter().collect();
    rows.sort_by_key(|(id, _)| **id);
    writeln!(w, "triplet_id,g_hat")?;
    for (id, g) in rows {
        writeln!(w, "{id},{g}")?;
    }
    Ok(())
}
