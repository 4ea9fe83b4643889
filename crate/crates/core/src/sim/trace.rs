//! Per-step simulation records and their CSV / binary encodings.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic bytes opening a binary trace.
pub const BINARY_MAGIC: &[u8; 8] = b"TNDTRC01";

const FIELDS_PER_ROW: usize = 1 + 6 + 6 + 3 + 6 * 4 + 1 + 1 + 3 + 1 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub pose: Vector6<f64>,
    pub vel: Vector6<f64>,
    pub x_dot_ref: Vector3<f64>,
    pub w_ref: Vector6<f64>,
    pub w_s: Vector6<f64>,
    pub w_est: Vector6<f64>,
    pub w_env: Vector6<f64>,
    pub alpha_h: f64,
    pub psi: f64,
    pub gamma: bool,
    pub zeta: bool,
    pub phi: bool,
    pub i_min: usize,
    pub residual: f64,
}

impl TraceRow {
    pub fn position(&self) -> Vector3<f64> {
        self.pose.fixed_rows::<3>(0).into_owned()
    }

    fn to_values(self) -> [f64; FIELDS_PER_ROW] {
        let mut out = [0.0; FIELDS_PER_ROW];
        let mut k = 0;
        let mut push = |v: f64| {
            out[k] = v;
            k += 1;
        };
        push(self.time);
        self.pose.iter().for_each(|v| push(*v));
        self.vel.iter().for_each(|v| push(*v));
        self.x_dot_ref.iter().for_each(|v| push(*v));
        for w in [self.w_ref, self.w_s, self.w_est, self.w_env] {
            w.iter().for_each(|v| push(*v));
        }
        push(self.alpha_h);
        push(self.psi);
        for f in [self.gamma, self.zeta, self.phi] {
            push(if f { 1.0 } else { 0.0 });
        }
        push(self.i_min as f64);
        push(self.residual);
        out
    }

    fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != FIELDS_PER_ROW {
            return Err(Error::Config(format!("trace row has {} fields, expected {FIELDS_PER_ROW}", v.len())));
        }
        let v6 = |at: usize| Vector6::from_column_slice(&v[at..at + 6]);
        let flag = |x: f64| -> Result<bool> {
            match x {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::Config(format!("flag value {x} is not 0 or 1"))),
            }
        };
        let i_min = v[45];
        if !(i_min >= 0.0 && i_min.fract() == 0.0) {
            return Err(Error::Config(format!("i_min value {i_min} is not an index")));
        }
        Ok(TraceRow {
            time: v[0],
            pose: v6(1),
            vel: v6(7),
            x_dot_ref: Vector3::from_column_slice(&v[13..16]),
            w_ref: v6(16),
            w_s: v6(22),
            w_est: v6(28),
            w_env: v6(34),
            alpha_h: v[40],
            psi: v[41],
            gamma: flag(v[42])?,
            zeta: flag(v[43])?,
            phi: flag(v[44])?,
            i_min: i_min as usize,
            residual: v[46],
        })
    }
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["time".to_string()];
    let axes6 = ["x", "y", "z", "rx", "ry", "rz"];
    let wrench = ["fx", "fy", "fz", "tx", "ty", "tz"];
    h.extend(axes6.iter().map(|a| format!("pose_{a}")));
    h.extend(axes6.iter().map(|a| format!("vel_{a}")));
    h.extend(["x", "y", "z"].iter().map(|a| format!("x_dot_ref_{a}")));
    for name in ["w_ref", "w_s", "w_est", "w_env"] {
        h.extend(wrench.iter().map(|a| format!("{name}_{a}")));
    }
    h.extend(
        ["alpha_h", "psi", "gamma", "zeta", "phi", "i_min", "residual"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn new(dt: f64) -> Self {
        SimTrace { dt, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BufWriter::new(w);
        writeln!(out, "{}", csv_header().join(","))?;
        for row in &self.rows {
            let vals = row.to_values();
            let mut line = String::with_capacity(600);
            for (i, v) in vals.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                // flags and indices print as integers, floats round-trip exactly
                if (42..=45).contains(&i) {
                    line.push_str(&format!("{}", *v as u64));
                } else {
                    line.push_str(&format!("{v}"));
                }
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::malformed(origin, "empty trace"))?;
        if header.trim_end() != csv_header().join(",") {
            return Err(Error::malformed(origin, "trace header does not match"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::malformed(origin, format!("row {}: {e}", n + 2)))?;
            rows.push(TraceRow::from_values(&vals).map_err(|e| Error::malformed(origin, format!("row {}: {e}", n + 2)))?);
        }
        let dt = if rows.len() >= 2 { rows[1].time - rows[0].time } else { 0.0 };
        Ok(SimTrace { dt, rows })
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut out = BufWriter::new(w);
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        out.write_all(&self.dt.to_le_bytes())?;
        for row in &self.rows {
            for v in row.to_values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::malformed(origin, "truncated header"))?;
        if &magic != BINARY_MAGIC {
            return Err(Error::malformed(origin, "not a binary trace"));
        }
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let dt = f64::from_le_bytes(buf);
        let mut rows = Vec::with_capacity(n.min(1 << 24));
        let mut vals = [0.0; FIELDS_PER_ROW];
        for _ in 0..n {
            for v in vals.iter_mut() {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::malformed(origin, "truncated row"))?;
                *v = f64::from_le_bytes(buf);
            }
            rows.push(TraceRow::from_values(&vals)?);
        }
        Ok(SimTrace { dt, rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)?;
        if is_binary_path(path) {
            self.write_binary(file)
        } else {
            self.write_csv(file)
        }
    }

    /// Reads either encoding, sniffing the magic bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            SimTrace::read_binary(&bytes[..], path)
        } else {
            SimTrace::read_csv(&bytes[..], path)
        }
    }
}

/// `.bin` and `.trace` select the binary encoding.
pub fn is_binary_path(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin") | Some("trace"))
}
