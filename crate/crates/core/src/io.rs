//! Field files, CSV tables and deterministic JSON.
//!
//! Binary field layout, all little-endian:
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic `NKFD`                             |
//! | 4      | 4    | format version (u32, currently 1)        |
//! | 8      | 4    | dimension n (u32)                        |
//! | 12     | 4    | shape code (u32: 0 square, 1 disk, 2 cube) |
//! | 16     | 4    | resolution (u32)                         |
//! | 20     | 8    | node count (u64)                         |
//! | 28     | 8·N  | nodal values (f64), lexicographic order with x fastest |
//!
//! CSV fields start with `# shape=<shape> resolution=<r> n=<n>`, then a
//! column header (`x,y[,z],value`) and one row per node in the same order.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fibering::FiberingProfile;
use crate::grid::{Field, Grid, Shape};
use crate::moser::{LevelReport, TmRow};
use crate::solvers::SweepTable;

pub const FIELD_MAGIC: [u8; 4] = *b"NKFD";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

/// `x` with 17 significant digits, so the value round-trips exactly.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_field_binary<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * grid.node_count());
    buf.extend_from_slice(&FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.shape().code().to_le_bytes());
    buf.extend_from_slice(&(grid.resolution() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.node_count() as u64).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Reads a binary field, building the grid it was written on.
pub fn read_field_binary<R: Read>(mut r: R) -> Result<Field> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || bytes[..4] != FIELD_MAGIC {
        return Err(Error::Format("not a field file (bad magic)".into()));
    }
    let version = u32_at(&bytes, 4);
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported field version {version}")));
    }
    let dim = u32_at(&bytes, 8) as usize;
    let shape = Shape::from_code(u32_at(&bytes, 12))?;
    let resolution = u32_at(&bytes, 16) as usize;
    let count = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
    if shape.dim() != dim {
        return Err(Error::Format(format!("shape {shape} has dimension {}, header says {dim}", shape.dim())));
    }
    let grid = Grid::new(shape, resolution)?;
    if count != grid.node_count() || bytes.len() != HEADER_LEN + 8 * count {
        return Err(Error::Format(format!("expected {} nodes, header says {count} with {} payload bytes", grid.node_count(), bytes.len() - HEADER_LEN)));
    }
    let values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Field::from_values(&grid, values)
}

pub fn field_csv(field: &Field) -> String {
    let grid = field.grid();
    let n = grid.dim();
    let mut out = format!("# shape={} resolution={} n={n}\n", grid.shape(), grid.resolution());
    out.push_str(&["x", "y", "z"][..n].join(","));
    out.push_str(",value\n");
    for (j, v) in field.values().iter().enumerate() {
        for c in grid.point(j) {
            let _ = write!(out, "{},", format_f64(*c));
        }
        let _ = writeln!(out, "{}", format_f64(*v));
    }
    out
}

/// Parses a nodal CSV into its grid and raw values. Values on boundary nodes
/// are kept, so the result can also describe a weight.
pub fn read_nodal_csv(text: &str) -> Result<(Arc<Grid>, Vec<f64>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    let meta = header.strip_prefix('#').ok_or_else(|| Error::Format("missing '# shape=... resolution=... n=...' header".into()))?;
    let (mut shape, mut resolution, mut dim) = (None, None, None);
    for item in meta.split_whitespace() {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Format(format!("bad header item '{item}'")))?;
        let bad = |_| Error::Format(format!("bad value in header item '{item}'"));
        match k {
            "shape" => shape = Some(v.parse::<Shape>()?),
            "resolution" => resolution = Some(v.parse::<usize>().map_err(bad)?),
            "n" => dim = Some(v.parse::<usize>().map_err(bad)?),
            _ => return Err(Error::Format(format!("unknown header key '{k}'"))),
        }
    }
    let (Some(shape), Some(resolution)) = (shape, resolution) else {
        return Err(Error::Format("header needs shape and resolution".into()));
    };
    if dim.is_some_and(|d| d != shape.dim()) {
        return Err(Error::Format(format!("n does not match shape {shape}")));
    }
    let grid = Grid::new(shape, resolution)?;
    let columns = lines.next().ok_or_else(|| Error::Format("missing column header".into()))?;
    let width = columns.split(',').count();
    if width != grid.dim() + 1 {
        return Err(Error::Format(format!("expected {} columns, found {width}", grid.dim() + 1)));
    }
    let mut values = Vec::with_capacity(grid.node_count());
    for (i, line) in lines.enumerate() {
        let last = line.rsplit(',').next().unwrap_or_default().trim();
        let v: f64 = last.parse().map_err(|_| Error::Format(format!("row {i}: bad value '{last}'")))?;
        values.push(v);
    }
    if values.len() != grid.node_count() {
        return Err(Error::Format(format!("expected {} rows, found {}", grid.node_count(), values.len())));
    }
    Ok((grid, values))
}

pub fn read_field_csv(text: &str) -> Result<Field> {
    let (grid, values) = read_nodal_csv(text)?;
    Field::from_values(&grid, values)
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, k: usize| out.extend(std::iter::repeat("  ").take(k));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(x) => match (x.as_i64(), x.as_u64()) {
            (Some(i), _) => {
                let _ = write!(out, "{i}");
            }
            (_, Some(u)) => {
                let _ = write!(out, "{u}");
            }
            _ => out.push_str(&format_f64(x.as_f64().expect("finite"))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(out, indent + 1);
                let _ = write!(out, "{}: ", serde_json::to_string(k).expect("key"));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Pretty JSON with every float printed to 17 significant digits. Keys keep
/// their declaration order; non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// A CSV table with `#` comment lines before the header and after the rows.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub preamble: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<String>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        for line in &self.footer {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn sweep_csv(table: &SweepTable) -> CsvTable {
    CsvTable {
        preamble: vec![format!("schema: lambda sweep of the N+ minimum; bound = -C*lambda^k', C = {}", format_f64(table.bound_constant))],
        columns: cols(&["lambda", "theta", "t1", "norm", "residual", "lower_bound", "within_bounds", "error"]),
        rows: table
            .rows
            .iter()
            .map(|r| {
                vec![
                    format_f64(r.lambda),
                    opt(r.energy),
                    opt(r.t1),
                    opt(r.norm),
                    opt(r.residual),
                    format_f64(r.lower_bound),
                    r.within_bounds.map(|b| b.to_string()).unwrap_or_default(),
                    r.error.clone().unwrap_or_default().replace(',', ";"),
                ]
            })
            .collect(),
        footer: vec![format!("fitted_exponent={} predicted_exponent={}", opt(table.fitted_exponent), format_f64(table.predicted_exponent))],
    }
}

/// Level-probe rows joined with the Trudinger–Moser integrals of the same
/// fields (`tm` aligned with `report.rows`).
pub fn moser_csv(report: &LevelReport, alpha: f64, tm: &[TmRow]) -> CsvTable {
    CsvTable {
        preamble: vec![format!("schema: Moser sequence probe; bound = M(alpha_n^(n-1))/n; tm = integral of exp({}*|phi_k|^(n/(n-1)))", format_f64(alpha))],
        columns: cols(&["k", "delta_k", "norm", "t_k", "sup_j", "bound", "dj_dt", "tk_pow_n", "alpha_pow", "tm", "error"]),
        rows: report
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    r.k.to_string(),
                    format_f64(r.delta),
                    format_f64(r.norm),
                    opt(r.t_k),
                    opt(r.sup_j),
                    format_f64(r.bound),
                    opt(r.derivative),
                    opt(r.tk_pow_n),
                    format_f64(r.alpha_pow),
                    tm.get(i).and_then(|t| t.value).map(format_f64).unwrap_or_else(|| "blow-up".into()),
                    r.error.clone().unwrap_or_default().replace(',', ";"),
                ]
            })
            .collect(),
        footer: Vec::new(),
    }
}

/// Fibering profile plus `ψ` samples, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileExport {
    pub profile: FiberingProfile,
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ProfileExport {
    pub fn new(profile: FiberingProfile, samples: Vec<(f64, f64)>) -> Self {
        let (t, psi) = samples.into_iter().unzip();
        ProfileExport { profile, t, psi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn json_keeps_order_and_formats_floats() {
        #[derive(Serialize)]
        struct S {
            b: f64,
            a: Option<u32>,
            c: Vec<f64>,
        }
        let s = to_json(&S { b: 0.5, a: None, c: vec![] }).unwrap();
        assert_eq!(s, "{\n  \"b\": 5.0000000000000000e-1,\n  \"a\": null,\n  \"c\": []\n}\n");
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["b"], 0.5);
    }
}
