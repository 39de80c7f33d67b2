//! CSV, JSON and binary field output.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mild::EvolutionRecord;
use crate::relaxation::RelaxationCurve;
use crate::spectral::{Field, Grid};

/// Float formatting used in every CSV: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Columns t, s, method.
pub fn curve_table(curve: &RelaxationCurve) -> CsvTable {
    let mut t = CsvTable::new(&["t", "s", "method"]);
    let method = curve.method.as_str();
    for (&x, &s) in curve.times().iter().zip(&curve.values) {
        t.push(vec![fmt_f64(x), fmt_f64(s), method.to_string()]);
    }
    t
}

/// Columns t, norm_r, norm_p, sup, status (suffixed per component for systems).
pub fn evolution_table(record: &EvolutionRecord) -> CsvTable {
    let mut header = vec!["t".to_string()];
    let names = ["u", "v"];
    for key in ["norm_r", "norm_p", "sup"] {
        for name in &names[..record.components] {
            header.push(if record.components == 1 {
                key.to_string()
            } else {
                format!("{key}_{name}")
            });
        }
    }
    header.push("status".into());
    let mut table = CsvTable {
        header,
        rows: Vec::new(),
    };
    let last = record.mesh.len() - 1;
    for (n, &t) in record.times().iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        for series in [&record.norms_r, &record.norms_p, &record.sup_norms] {
            for c in series {
                row.push(fmt_f64(c[n]));
            }
        }
        row.push(if n == last { record.status.label() } else { "running" }.into());
        table.push(row);
    }
    table
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, table: &CsvTable) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, table.to_text()).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Header: dim and points per axis as u64, box half length as f64, all
/// little endian; then the values row-major as f64.
pub fn encode_field(field: &Field) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(24 + 8 * field.values().len());
    out.extend_from_slice(&(g.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(g.points_per_axis() as u64).to_le_bytes());
    out.extend_from_slice(&g.half_length().to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < 24 {
        return Err(Error::Input(format!("field file too short ({} bytes)", bytes.len())));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[8 * i..8 * i + 8]).expect("eight bytes");
    let dim = u64::from_le_bytes(word(0));
    let n = u64::from_le_bytes(word(1));
    let half = f64::from_le_bytes(word(2));
    if dim == 0 || dim > 2 || n == 0 || n > (1 << 24) {
        return Err(Error::Input(format!("bad field header (dim {dim}, points {n})")));
    }
    let grid = Grid::new(dim as usize, n as usize, half)?;
    let body = &bytes[24..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Input(format!(
            "field body has {} bytes, header implies {}",
            body.len(),
            8 * grid.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Field::new(grid, values)
}

pub fn write_field_binary(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, encode_field(field)).map_err(|e| Error::io(path, e))
}

pub fn read_field_binary(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac::TimeMesh;
    use crate::relaxation::Method;

    #[test]
    fn curve_csv_shape() {
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let curve = RelaxationCurve::from_fn(&mesh, 1.0, |t| (-t).exp());
        assert_eq!(curve.method, Method::ClosedFormOracle);
        let text = curve_table(&curve).to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,s,method");
        assert!(lines[1].ends_with(&format!(",{}", Method::ClosedFormOracle.as_str())));
        let s: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(s, (-0.5f64).exp());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn field_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 64, 3.5).unwrap();
        let f = Field::from_fn(g, |x| (x[0] * 1.7).sin() + x[1] / 3.0).unwrap();
        let path = dir.path().join("sub/f.bin");
        write_field_binary(&path, &f).unwrap();
        let back = read_field_binary(&path).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert!(back
            .values()
            .iter()
            .zip(f.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], &2u64.to_le_bytes());
        assert!(decode_field(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_field(&bytes[..10]).is_err());
        assert!(matches!(
            read_field_binary(dir.path().join("missing.bin")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn json_written_with_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        write_json(&path, &serde_json::json!({"statuses": []})).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("}\n"));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["statuses"], serde_json::json!([]));
    }
}
