//! Dataset text format.
//!
//! One header row fixing the column order, then one record per pair:
//!
//! ```text
//! id,c,x0_0,x0_1,x1_0,x1_1,r,z
//! 0,2,1.93,2.41,-2.2,1.7,1,0
//! 1,0,-1.8,-2.3,2.05,-1.9,0,
//! ```
//!
//! `r` is the labeled flag and `z` is empty on unlabeled rows. Lines
//! starting with `#` are ignored. Floats use the shortest representation
//! that round-trips, so writing is byte-for-byte reproducible.

use std::io::{BufRead, Write};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::preference::PreferenceTriplet;

pub fn header(dim: usize) -> String {
    let mut cols = vec!["id".to_string(), "c".to_string()];
    cols.extend((0..dim).map(|k| format!("x0_{k}")));
    cols.extend((0..dim).map(|k| format!("x1_{k}")));
    cols.push("r".into());
    cols.push("z".into());
    cols.join(",")
}

pub fn write_dataset<W: Write>(mut out: W, data: &Dataset) -> Result<()> {
    let dim = data.triplets.first().map_or(0, |t| t.dim());
    writeln!(out, "{}", header(dim))?;
    for t in &data.triplets {
        let mut line = format!("{},{}", t.id, t.c);
        for v in t.x0.iter().chain(&t.x1) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        match t.z {
            Some(z) => line.push_str(&format!(",1,{z}")),
            None => line.push_str(",0,"),
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut dim = None;
    let mut triplets = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let Some(d) = dim else {
            if fields.len() < 6 || (fields.len() - 4) % 2 != 0 {
                return Err(parse_err(lineno, "malformed header"));
            }
            let d = (fields.len() - 4) / 2;
            if line != header(d) {
                return Err(parse_err(lineno, format!("expected header `{}`", header(d))));
            }
            dim = Some(d);
            continue;
        };
        if fields.len() != 2 * d + 4 {
            return Err(parse_err(lineno, format!("expected {} fields, got {}", 2 * d + 4, fields.len())));
        }
        let id: u64 = fields[0].parse().map_err(|_| parse_err(lineno, "bad id"))?;
        let c: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad condition"))?;
        let coords = fields[2..2 + 2 * d]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(lineno, format!("bad number `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let r = fields[2 + 2 * d];
        let z = fields[3 + 2 * d];
        let label = match (r, z) {
            ("1", "0") => Some(0),
            ("1", "1") => Some(1),
            ("0", "") => None,
            _ => return Err(parse_err(lineno, format!("inconsistent r/z `{r}`/`{z}`"))),
        };
        let t = PreferenceTriplet::new(id, c, coords[..d].to_vec(), coords[d..].to_vec(), label)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        triplets.push(t);
    }
    if dim.is_none() {
        return Err(parse_err(0, "missing header"));
    }
    Ok(Dataset::from_triplets(triplets, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, WorldSpec};
    use proptest::prelude::*;

    #[test]
    fn header_column_order() {
        assert_eq!(header(2), "id,c,x0_0,x0_1,x1_0,x1_1,r,z");
    }

    #[test]
    fn writing_is_reproducible() {
        let d = generate(&WorldSpec::default(), 64, 0.25, 5).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_dataset(&mut a, &d).unwrap();
        write_dataset(&mut b, &generate(&WorldSpec::default(), 64, 0.25, 5).unwrap()).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().filter(|l| l.ends_with(",1,0") || l.ends_with(",1,1")).count(), 16);
    }

    #[test]
    fn rejects_inconsistent_rows() {
        let bad = "id,c,x0_0,x1_0,r,z\n0,0,1.0,2.0,1,\n";
        assert!(matches!(read_dataset(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad_header = "id,c,a,b,r,z\n";
        assert!(read_dataset(bad_header.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(seed in 0u64..1000, n in 4usize..40, frac in 0.05f64..1.0) {
            let d = generate(&WorldSpec::default(), n, frac, seed).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &d).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back.triplets, d.triplets);
            prop_assert_eq!((back.n_l, back.n_u), (d.n_l, d.n_u));
        }
    }
}
