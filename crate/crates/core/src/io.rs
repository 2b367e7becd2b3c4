//! Flat-file formats: the generic edge list and sidecar feature tables.
//!
//! Edge list: one edge per line, `tail_id,head_id,timestamp[,label]` with
//! dense integer node ids and label in `{0,1}`. Feature table: one row per
//! id, `id,f_1,...,f_d`; ids without a row get zeros.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, Edge};

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads an edge list. `source` names the input in error messages.
pub fn read_edge_list<R: BufRead>(reader: R, source: &str) -> Result<DirectedMultigraph> {
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    let mut node_count = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(parse_err(
                source,
                lineno,
                format!("expected 3 or 4 comma-separated fields, found {}", fields.len()),
            ));
        }
        let tail: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(source, lineno, format!("bad tail id {:?}", fields[0])))?;
        let head: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(source, lineno, format!("bad head id {:?}", fields[1])))?;
        let timestamp: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(source, lineno, format!("bad timestamp {:?}", fields[2])))?;
        if !timestamp.is_finite() {
            return Err(parse_err(source, lineno, "timestamp is not finite"));
        }
        let label = match fields.get(3) {
            None | Some(&"") => None,
            Some(&"0") => Some(false),
            Some(&"1") => Some(true),
            Some(other) => {
                return Err(parse_err(source, lineno, format!("label must be 0 or 1, got {other:?}")))
            }
        };
        node_count = node_count.max(tail + 1).max(head + 1);
        edges.push(Edge {
            tail,
            head,
            timestamp,
        });
        labels.push(label);
    }
    DirectedMultigraph::from_edges(node_count, edges)?.with_labels(labels)
}

/// Writes the edge list of `g`. Labels are written only where present.
pub fn write_edge_list<W: Write>(g: &DirectedMultigraph, mut w: W) -> Result<()> {
    for (id, e) in g.edges().iter().enumerate() {
        match g.label(id) {
            Some(l) => writeln!(w, "{},{},{},{}", e.tail, e.head, e.timestamp, u8::from(l))?,
            None => writeln!(w, "{},{},{}", e.tail, e.head, e.timestamp)?,
        }
    }
    Ok(())
}

/// Reads a feature table with `rows` rows. Returns `(dim, row-major data)`.
pub fn read_feature_table<R: BufRead>(reader: R, rows: usize, source: &str) -> Result<(usize, Vec<f64>)> {
    let mut dim: Option<usize> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut seen = vec![false; rows];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',').map(str::trim);
        let id_field = fields.next().unwrap_or_default();
        let id: usize = id_field
            .parse()
            .map_err(|_| parse_err(source, lineno, format!("bad id {id_field:?}")))?;
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(source, lineno, format!("bad value {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert_with(|| {
            data = vec![0.0; rows * values.len()];
            values.len()
        });
        if values.len() != d {
            return Err(parse_err(
                source,
                lineno,
                format!("expected {d} feature values, found {}", values.len()),
            ));
        }
        if id >= rows {
            return Err(parse_err(source, lineno, format!("id {id} out of range (< {rows})")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(parse_err(source, lineno, format!("duplicate row for id {id}")));
        }
        data[id * d..(id + 1) * d].copy_from_slice(&values);
    }
    Ok((dim.unwrap_or(0), data))
}

/// Writes a feature table, one row per id.
pub fn write_feature_table<W: Write>(dim: usize, data: &[f64], mut w: W) -> Result<()> {
    if dim == 0 {
        return Ok(());
    }
    for (id, row) in data.chunks(dim).enumerate() {
        write!(w, "{id}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_labels_and_blank_lines() {
        let text = "0,1,1.5,1\n\n1,2,2\n2,0,3,0\n";
        let g = read_edge_list(text.as_bytes(), "t").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.labels(), &[Some(true), None, Some(false)]);
        assert_eq!(g.edges()[0].timestamp, 1.5);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "0,1,1\n0,x,2\n";
        match read_edge_list(text.as_bytes(), "edges.csv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(path, "edges.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_edge_list("0,1,1,2\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn feature_table_roundtrip() {
        let data = vec![1.0, 2.0, 0.5, -3.0];
        let mut buf = Vec::new();
        write_feature_table(2, &data, &mut buf).unwrap();
        let (dim, back) = read_feature_table(buf.as_slice(), 2, "f").unwrap();
        assert_eq!(dim, 2);
        assert_eq!(back, data);
    }

    #[test]
    fn feature_table_rejects_duplicates() {
        assert!(read_feature_table("0,1\n0,2\n".as_bytes(), 1, "f").is_err());
    }
}
