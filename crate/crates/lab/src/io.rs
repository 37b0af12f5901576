//! Output formats: CSV tables, JSON summaries, run manifests, and binary
//! dumps of lattice fields and walk trajectories.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use condlab_core::solver::LatticeField;
use condlab_core::walk::WalkPath;
use condlab_core::Site;
use serde_json::{json, Value};

use crate::error::{LabError, Result};

/// One CSV cell. Floats are written with 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) if v.is_nan() => "NaN".to_string(),
            Cell::Float(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::UInt(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A CSV table with a header row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| LabError::Usage(format!("csv buffer: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// `x_1..x_d` followed by one column per component.
pub fn field_table(field: &LatticeField) -> Table {
    let w = field.window();
    let d = w.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.extend((0..field.arity()).map(|k| format!("value_{}", k + 1)));
    let mut t = Table { header, rows: Vec::with_capacity(w.len()) };
    for (i, x) in w.sites().enumerate() {
        let mut row: Vec<Cell> = x.coords().iter().map(|&c| Cell::Int(c)).collect();
        row.extend((0..field.arity()).map(|k| Cell::Float(field.get(i, k))));
        t.rows.push(row);
    }
    t
}

const FIELD_MAGIC: &[u8; 4] = b"CLFD";
const TRAJ_MAGIC: &[u8; 4] = b"CLTR";
const FORMAT_VERSION: u8 = 1;

/// Header of a binary field dump. `epsilon` is NaN and `pad` zero for fields
/// that are not approximate correctors.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldHeader {
    pub dim: usize,
    pub r: usize,
    pub arity: usize,
    pub epsilon: f64,
    pub pad: usize,
}

/// Little-endian: magic, version, `d: u8`, `arity: u32`, `r: u64`,
/// `epsilon: f64`, `pad: u64`, then the values site-major.
pub fn field_binary(field: &LatticeField, epsilon: Option<f64>, pad: usize) -> Vec<u8> {
    let w = field.window();
    let mut out = Vec::with_capacity(32 + 8 * field.values().len());
    out.extend_from_slice(FIELD_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(w.dim() as u8);
    out.extend_from_slice(&(field.arity() as u32).to_le_bytes());
    out.extend_from_slice(&(w.radius().unwrap_or(0) as u64).to_le_bytes());
    out.extend_from_slice(&epsilon.unwrap_or(f64::NAN).to_le_bytes());
    out.extend_from_slice(&(pad as u64).to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn corrupt(what: &str) -> LabError {
    LabError::Usage(format!("malformed dump: {what}"))
}

pub fn read_field_binary(bytes: &[u8]) -> Result<(FieldHeader, Vec<f64>)> {
    let mut r = bytes;
    let io = |_| corrupt("truncated header");
    if &take::<4>(&mut r).map_err(io)? != FIELD_MAGIC {
        return Err(corrupt("bad field magic"));
    }
    let [version, dim] = take::<2>(&mut r).map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let arity = u32::from_le_bytes(take(&mut r).map_err(io)?) as usize;
    let radius = u64::from_le_bytes(take(&mut r).map_err(io)?) as usize;
    let epsilon = f64::from_le_bytes(take(&mut r).map_err(io)?);
    let pad = u64::from_le_bytes(take(&mut r).map_err(io)?) as usize;
    if r.len() % 8 != 0 {
        return Err(corrupt("value block is not a whole number of doubles"));
    }
    let values = r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap_or([0; 8]))).collect();
    Ok((FieldHeader { dim: dim as usize, r: radius, arity, epsilon, pad }, values))
}

/// Little-endian: magic, version, `d: u8`, `seed: u64`, `n: u64`, `x0` as
/// `d` times `i64`, then one byte per step: `2 * axis + (1 if negative)`.
pub fn trajectory_binary(path: &WalkPath) -> Result<Vec<u8>> {
    let d = path.start.dim();
    let mut out = Vec::with_capacity(22 + 8 * d + path.steps());
    out.extend_from_slice(TRAJ_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(d as u8);
    out.extend_from_slice(&path.seed.to_le_bytes());
    out.extend_from_slice(&(path.steps() as u64).to_le_bytes());
    for &c in path.start.coords() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for w in path.positions.windows(2) {
        let delta = w[1] - w[0];
        let axis = (0..d).find(|&i| delta.get(i) != 0).ok_or_else(|| corrupt("repeated position"))?;
        if delta.norm_l1() != 1 {
            return Err(corrupt("non-unit step"));
        }
        out.push((2 * axis + usize::from(delta.get(axis) < 0)) as u8);
    }
    Ok(out)
}

/// Decodes a trajectory dump into `(seed, positions)`.
pub fn read_trajectory_binary(bytes: &[u8]) -> Result<(u64, Vec<Site>)> {
    let mut r = bytes;
    let io = |_| corrupt("truncated header");
    if &take::<4>(&mut r).map_err(io)? != TRAJ_MAGIC {
        return Err(corrupt("bad trajectory magic"));
    }
    let [version, d] = take::<2>(&mut r).map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let seed = u64::from_le_bytes(take(&mut r).map_err(io)?);
    let n = u64::from_le_bytes(take(&mut r).map_err(io)?) as usize;
    let coords = (0..d).map(|_| take(&mut r).map(i64::from_le_bytes)).collect::<std::io::Result<Vec<_>>>().map_err(io)?;
    let mut x = Site::new(&coords)?;
    if r.len() != n {
        return Err(corrupt("step count does not match payload"));
    }
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(x);
    for &b in r {
        let axis = (b / 2) as usize;
        if axis >= d as usize {
            return Err(corrupt("axis out of range"));
        }
        x = x.offset(axis, if b % 2 == 0 { 1 } else { -1 });
        positions.push(x);
    }
    Ok((seed, positions))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// `manifest.json`: written with status `running` before the work starts and
/// rewritten with the outcome afterwards.
pub struct Manifest {
    path: PathBuf,
    body: Value,
    started: f64,
}

impl Manifest {
    pub fn begin(dir: &Path, body: Value) -> Result<Self> {
        let started = unix_now();
        let mut body = body;
        body["status"] = json!("running");
        body["started_unix"] = json!(started);
        body["versions"] = json!({
            "condlab": env!("CARGO_PKG_VERSION"),
            "format": FORMAT_VERSION,
        });
        let path = dir.join("manifest.json");
        write_json(&path, &body)?;
        Ok(Manifest { path, body, started })
    }

    pub fn finish(mut self, status: &str, exit_code: i32, outputs: &[String]) -> Result<()> {
        let now = unix_now();
        self.body["status"] = json!(status);
        self.body["exit_code"] = json!(exit_code);
        self.body["finished_unix"] = json!(now);
        self.body["elapsed_seconds"] = json!(now - self.started);
        self.body["outputs"] = json!(outputs);
        write_json(&self.path, &self.body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use condlab_core::solver::Window;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        let s = Cell::Float(x).render();
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        assert_eq!(s, "3.0000000000000004e-1");
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::from(1usize), Cell::from("x,y")]);
        assert_eq!(String::from_utf8(t.to_bytes().unwrap()).unwrap(), "a,b\r\n1,\"x,y\"\r\n");
    }

    #[test]
    fn field_dump_round_trip() {
        let w = Window::centered(2, 2).unwrap();
        let f = LatticeField::from_fn(w, 2, |x, k| x.get(0) as f64 * 0.5 + k as f64);
        let bytes = field_binary(&f, Some(0.01), 7);
        let (h, vals) = read_field_binary(&bytes).unwrap();
        assert_eq!((h.dim, h.r, h.arity, h.epsilon, h.pad), (2, 2, 2, 0.01, 7));
        assert_eq!(vals, f.values());
        let t = field_table(&f);
        assert_eq!(t.header, ["x_1", "x_2", "value_1", "value_2"]);
        assert_eq!(t.rows.len(), 25);
    }

    #[test]
    fn trajectory_round_trip() {
        let env = condlab_core::Environment::constant(3, 1.0).unwrap();
        let p = condlab_core::walk::simulate(&env, Site::new(&[1, -2, 3]).unwrap(), 500, 42).unwrap();
        let bytes = trajectory_binary(&p).unwrap();
        assert_eq!(bytes.len(), 4 + 2 + 16 + 24 + 500);
        let (seed, pos) = read_trajectory_binary(&bytes).unwrap();
        assert_eq!((seed, pos), (42, p.positions));
        assert!(read_trajectory_binary(&bytes[..bytes.len() - 1]).is_err());
    }
}
