//! Demonstration data: loading, validation and the mean trajectory.
//!
//! Orientation channels are Euler angles in the XYZ extrinsic convention.
//! Two-dimensional sources (handwriting-style datasets) are lifted into the
//! `z = 0` plane with zero orientation, angular velocity and wrench.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::angles::wrap_angle;
use crate::error::{Error, Result};

pub const EULER_CONVENTION: &str = "xyz-extrinsic";

/// Full CSV header, one row per sample.
pub const CSV_HEADER: [&str; 19] = [
    "t", "px", "py", "pz", "rx", "ry", "rz", "vx", "vy", "vz", "wx", "wy", "wz", "fx", "fy", "fz",
    "tx", "ty", "tz",
];
/// Planar variant with recorded velocities.
pub const CSV_HEADER_2D: [&str; 5] = ["t", "px", "py", "vx", "vy"];
/// Planar variant without velocities; velocities come from central differences.
pub const CSV_HEADER_2D_POS: [&str; 3] = ["t", "px", "py"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoFormat {
    Csv,
    Json,
}

impl DemoFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DemoFormat::Csv),
            "json" => Some(DemoFormat::Json),
            _ => None,
        }
    }
}

/// One recorded task execution sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    positions: Vec<Vector3<f64>>,
    eulers: Vec<Vector3<f64>>,
    lin_vels: Vec<Vector3<f64>>,
    ang_vels: Vec<Vector3<f64>>,
    wrenches: Vec<Vector6<f64>>,
    sample_dt: f64,
}

impl Demonstration {
    pub fn new(
        positions: Vec<Vector3<f64>>,
        eulers: Vec<Vector3<f64>>,
        lin_vels: Vec<Vector3<f64>>,
        ang_vels: Vec<Vector3<f64>>,
        wrenches: Vec<Vector6<f64>>,
        sample_dt: f64,
    ) -> Result<Self> {
        let n = positions.len();
        if n < 2 {
            return Err(Error::InvalidDemo(format!(
                "a demonstration needs at least 2 samples, got {n}"
            )));
        }
        check_len("eulers", n, eulers.len())?;
        check_len("lin_vels", n, lin_vels.len())?;
        check_len("ang_vels", n, ang_vels.len())?;
        check_len("wrenches", n, wrenches.len())?;
        if !(sample_dt.is_finite() && sample_dt > 0.0) {
            return Err(Error::InvalidDemo(format!(
                "sample_dt must be positive, got {sample_dt}"
            )));
        }
        check_finite("positions", positions.iter().map(|v| v.as_slice()))?;
        check_finite("eulers", eulers.iter().map(|v| v.as_slice()))?;
        check_finite("lin_vels", lin_vels.iter().map(|v| v.as_slice()))?;
        check_finite("ang_vels", ang_vels.iter().map(|v| v.as_slice()))?;
        check_finite("wrenches", wrenches.iter().map(|v| v.as_slice()))?;
        Ok(Demonstration {
            positions,
            eulers,
            lin_vels,
            ang_vels,
            wrenches,
            sample_dt,
        })
    }

    /// Position-only demonstration; linear velocities from central differences,
    /// every other channel zero.
    pub fn from_positions(positions: Vec<Vector3<f64>>, sample_dt: f64) -> Result<Self> {
        let n = positions.len();
        let lin_vels = if n >= 2 && sample_dt > 0.0 {
            central_differences(&positions, sample_dt)
        } else {
            vec![Vector3::zeros(); n]
        };
        Demonstration::new(
            positions,
            vec![Vector3::zeros(); n],
            lin_vels,
            vec![Vector3::zeros(); n],
            vec![Vector6::zeros(); n],
            sample_dt,
        )
    }

    /// Replaces the wrench channel, keeping everything else.
    pub fn with_wrenches(self, wrenches: Vec<Vector6<f64>>) -> Result<Self> {
        Demonstration::new(
            self.positions,
            self.eulers,
            self.lin_vels,
            self.ang_vels,
            wrenches,
            self.sample_dt,
        )
    }

    pub fn with_orientation(
        self,
        eulers: Vec<Vector3<f64>>,
        ang_vels: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        Demonstration::new(
            self.positions,
            eulers,
            self.lin_vels,
            ang_vels,
            self.wrenches,
            self.sample_dt,
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn eulers(&self) -> &[Vector3<f64>] {
        &self.eulers
    }

    pub fn lin_vels(&self) -> &[Vector3<f64>] {
        &self.lin_vels
    }

    pub fn ang_vels(&self) -> &[Vector3<f64>] {
        &self.ang_vels
    }

    pub fn wrenches(&self) -> &[Vector6<f64>] {
        &self.wrenches
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn first_position(&self) -> Vector3<f64> {
        self.positions[0]
    }

    pub fn last_position(&self) -> Vector3<f64> {
        self.positions[self.len() - 1]
    }

    /// Vector from the first to the last recorded position.
    pub fn chord(&self) -> Vector3<f64> {
        self.last_position() - self.first_position()
    }

    pub fn arc_length(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Axis-aligned bounding box of the positions.
    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Sample indices `i` where the step `i → i+1` is more than ten times what
    /// the recorded velocities allow. Suspicious, not fatal.
    pub fn sanity_warnings(&self) -> Vec<usize> {
        let dt = self.sample_dt;
        self.positions
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| {
                let step = (w[1] - w[0]).norm();
                let vmax = self.lin_vels[i].norm().max(self.lin_vels[i + 1].norm());
                (step > 10.0 * vmax * dt + 1e-12).then_some(i)
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>, format: DemoFormat) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let demo = match format {
            DemoFormat::Csv => Demonstration::from_csv_str(&text, path)?,
            DemoFormat::Json => Demonstration::from_json_str(&text, path)?,
        };
        let flagged = demo.sanity_warnings();
        if !flagged.is_empty() {
            warn!(
                "{}: {} step(s) exceed the velocity-implied bound (first at sample {})",
                path.display(),
                flagged.len(),
                flagged[0]
            );
        }
        Ok(demo)
    }

    /// Loads with the format taken from the file extension.
    pub fn load_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format = DemoFormat::from_path(path)
            .ok_or_else(|| Error::malformed(path, "unknown extension, expected .csv or .json"))?;
        Demonstration::load(path, format)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DemoFormat) -> Result<()> {
        let text = match format {
            DemoFormat::Csv => self.to_csv_string(),
            DemoFormat::Json => self.to_json_string(),
        };
        fs::write(path, text)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let t = i as f64 * self.sample_dt;
            let row: Vec<String> = std::iter::once(t)
                .chain(self.positions[i].iter().copied())
                .chain(self.eulers[i].iter().copied())
                .chain(self.lin_vels[i].iter().copied())
                .chain(self.ang_vels[i].iter().copied())
                .chain(self.wrenches[i].iter().copied())
                .map(|v| v.to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::malformed(origin, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let layout = if header == CSV_HEADER {
            CsvLayout::Full
        } else if header == CSV_HEADER_2D {
            CsvLayout::Planar
        } else if header == CSV_HEADER_2D_POS {
            CsvLayout::PlanarPositions
        } else {
            return Err(Error::malformed(
                origin,
                format!("unrecognised header `{}`", header.join(",")),
            ));
        };

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::malformed(origin, e.to_string()))?;
            if record.len() != header.len() {
                return Err(Error::malformed(
                    origin,
                    format!(
                        "row {} has {} fields, expected {}",
                        line + 1,
                        record.len(),
                        header.len()
                    ),
                ));
            }
            let mut row = Vec::with_capacity(record.len());
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::malformed(origin, format!("row {}: bad number `{field}`", line + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        channel: header[col].clone(),
                        index: line,
                    });
                }
                row.push(v);
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::malformed(
                origin,
                format!("need at least 2 samples, found {}", rows.len()),
            ));
        }
        let n = rows.len();
        let sample_dt = (rows[n - 1][0] - rows[0][0]) / (n - 1) as f64;
        if !(sample_dt > 0.0) {
            return Err(Error::malformed(origin, "time column is not increasing"));
        }

        let v3 = |r: &[f64], at: usize| Vector3::new(r[at], r[at + 1], r[at + 2]);
        match layout {
            CsvLayout::Full => Demonstration::new(
                rows.iter().map(|r| v3(r, 1)).collect(),
                rows.iter().map(|r| v3(r, 4)).collect(),
                rows.iter().map(|r| v3(r, 7)).collect(),
                rows.iter().map(|r| v3(r, 10)).collect(),
                rows.iter()
                    .map(|r| Vector6::from_column_slice(&r[13..19]))
                    .collect(),
                sample_dt,
            ),
            CsvLayout::Planar => Demonstration::new(
                rows.iter().map(|r| Vector3::new(r[1], r[2], 0.0)).collect(),
                vec![Vector3::zeros(); n],
                rows.iter().map(|r| Vector3::new(r[3], r[4], 0.0)).collect(),
                vec![Vector3::zeros(); n],
                vec![Vector6::zeros(); n],
                sample_dt,
            ),
            CsvLayout::PlanarPositions => Demonstration::from_positions(
                rows.iter().map(|r| Vector3::new(r[1], r[2], 0.0)).collect(),
                sample_dt,
            ),
        }
    }

    pub fn to_json_string(&self) -> String {
        let col3 = |v: &[Vector3<f64>], k: usize| v.iter().map(|x| x[k]).collect::<Vec<_>>();
        let col6 = |v: &[Vector6<f64>], k: usize| v.iter().map(|x| x[k]).collect::<Vec<_>>();
        let doc = DemoJson {
            sample_dt: self.sample_dt,
            euler_convention: Some(EULER_CONVENTION.to_owned()),
            t: (0..self.len()).map(|i| i as f64 * self.sample_dt).collect(),
            px: col3(&self.positions, 0),
            py: col3(&self.positions, 1),
            pz: col3(&self.positions, 2),
            rx: col3(&self.eulers, 0),
            ry: col3(&self.eulers, 1),
            rz: col3(&self.eulers, 2),
            vx: col3(&self.lin_vels, 0),
            vy: col3(&self.lin_vels, 1),
            vz: col3(&self.lin_vels, 2),
            wx: col3(&self.ang_vels, 0),
            wy: col3(&self.ang_vels, 1),
            wz: col3(&self.ang_vels, 2),
            fx: col6(&self.wrenches, 0),
            fy: col6(&self.wrenches, 1),
            fz: col6(&self.wrenches, 2),
            tx: col6(&self.wrenches, 3),
            ty: col6(&self.wrenches, 4),
            tz: col6(&self.wrenches, 5),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("demo serialises");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let doc: DemoJson =
            serde_json::from_str(text).map_err(|e| Error::malformed(origin, e.to_string()))?;
        if let Some(conv) = &doc.euler_convention {
            if conv != EULER_CONVENTION {
                return Err(Error::malformed(
                    origin,
                    format!("unsupported Euler convention `{conv}`, expected `{EULER_CONVENTION}`"),
                ));
            }
        }
        let n = doc.px.len();
        let channels: [(&str, &Vec<f64>); 19] = [
            ("t", &doc.t),
            ("px", &doc.px),
            ("py", &doc.py),
            ("pz", &doc.pz),
            ("rx", &doc.rx),
            ("ry", &doc.ry),
            ("rz", &doc.rz),
            ("vx", &doc.vx),
            ("vy", &doc.vy),
            ("vz", &doc.vz),
            ("wx", &doc.wx),
            ("wy", &doc.wy),
            ("wz", &doc.wz),
            ("fx", &doc.fx),
            ("fy", &doc.fy),
            ("fz", &doc.fz),
            ("tx", &doc.tx),
            ("ty", &doc.ty),
            ("tz", &doc.tz),
        ];
        for (name, col) in &channels {
            check_len(name, n, col.len())?;
        }
        if n < 2 {
            return Err(Error::malformed(
                origin,
                format!("need at least 2 samples, found {n}"),
            ));
        }
        let v3 = |a: &[f64], b: &[f64], c: &[f64]| -> Vec<Vector3<f64>> {
            (0..n).map(|i| Vector3::new(a[i], b[i], c[i])).collect()
        };
        let wrenches = (0..n)
            .map(|i| {
                Vector6::new(
                    doc.fx[i], doc.fy[i], doc.fz[i], doc.tx[i], doc.ty[i], doc.tz[i],
                )
            })
            .collect();
        Demonstration::new(
            v3(&doc.px, &doc.py, &doc.pz),
            v3(&doc.rx, &doc.ry, &doc.rz),
            v3(&doc.vx, &doc.vy, &doc.vz),
            v3(&doc.wx, &doc.wy, &doc.wz),
            wrenches,
            doc.sample_dt,
        )
    }

    /// Resamples every channel to `n` points spaced uniformly in arc length.
    ///
    /// A demonstration that never moves is resampled uniformly in index instead.
    pub fn resample_arc_length(&self, n: usize) -> Demonstration {
        assert!(n >= 2, "resampling needs at least two points");
        let mut cumulative = Vec::with_capacity(self.len());
        cumulative.push(0.0);
        for w in self.positions.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + (w[1] - w[0]).norm());
        }
        let total = *cumulative.last().unwrap();
        let param: Vec<f64> = if total > 1e-12 {
            cumulative
        } else {
            (0..self.len()).map(|i| i as f64).collect()
        };
        let span = *param.last().unwrap();

        let mut out = Resampled::with_capacity(n);
        let mut seg = 0;
        for j in 0..n {
            let target = if j == n - 1 {
                span
            } else {
                span * j as f64 / (n - 1) as f64
            };
            while seg + 2 < param.len() && param[seg + 1] < target {
                seg += 1;
            }
            let (a, b) = (param[seg], param[seg + 1]);
            let f = if b > a {
                ((target - a) / (b - a)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.push_lerp(self, seg, f);
        }
        out.finish(self.sample_dt)
    }
}

#[derive(Debug, Clone, Copy)]
enum CsvLayout {
    Full,
    Planar,
    PlanarPositions,
}

#[derive(Serialize, Deserialize)]
struct DemoJson {
    sample_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    euler_convention: Option<String>,
    t: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    pz: Vec<f64>,
    rx: Vec<f64>,
    ry: Vec<f64>,
    rz: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    vz: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    wz: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fz: Vec<f64>,
    tx: Vec<f64>,
    ty: Vec<f64>,
    tz: Vec<f64>,
}

struct Resampled {
    positions: Vec<Vector3<f64>>,
    eulers: Vec<Vector3<f64>>,
    lin_vels: Vec<Vector3<f64>>,
    ang_vels: Vec<Vector3<f64>>,
    wrenches: Vec<Vector6<f64>>,
}

impl Resampled {
    fn with_capacity(n: usize) -> Self {
        Resampled {
            positions: Vec::with_capacity(n),
            eulers: Vec::with_capacity(n),
            lin_vels: Vec::with_capacity(n),
            ang_vels: Vec::with_capacity(n),
            wrenches: Vec::with_capacity(n),
        }
    }

    fn push_lerp(&mut self, d: &Demonstration, i: usize, f: f64) {
        let j = i + 1;
        let lerp3 = |v: &[Vector3<f64>]| v[i] + (v[j] - v[i]) * f;
        self.positions.push(if f == 0.0 { d.positions[i] } else if f == 1.0 { d.positions[j] } else { lerp3(&d.positions) });
        self.lin_vels.push(lerp3(&d.lin_vels));
        self.ang_vels.push(lerp3(&d.ang_vels));
        self.wrenches.push(d.wrenches[i] + (d.wrenches[j] - d.wrenches[i]) * f);
        let (a, b) = (d.eulers[i], d.eulers[j]);
        self.eulers.push(Vector3::from_fn(|k, _| {
            if f == 0.0 {
                a[k]
            } else {
                wrap_angle(a[k] + wrap_angle(b[k] - a[k]) * f)
            }
        }));
    }

    fn finish(self, sample_dt: f64) -> Demonstration {
        Demonstration {
            positions: self.positions,
            eulers: self.eulers,
            lin_vels: self.lin_vels,
            ang_vels: self.ang_vels,
            wrenches: self.wrenches,
            sample_dt,
        }
    }
}

/// A set of demonstrations of the same task.
#[derive(Debug, Clone)]
pub struct DemoSet {
    demos: Vec<Demonstration>,
    label: String,
}

impl DemoSet {
    pub fn new(demos: Vec<Demonstration>, label: impl Into<String>) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::InvalidDemo("demo set is empty".into()));
        }
        Ok(DemoSet {
            demos,
            label: label.into(),
        })
    }

    /// Loads every `.csv`/`.json` file of a directory, in file-name order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && DemoFormat::from_path(p).is_some())
            .collect();
        files.sort();
        let demos = files
            .iter()
            .map(Demonstration::load_auto)
            .collect::<Result<Vec<_>>>()?;
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        DemoSet::new(demos, label)
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

/// Pointwise mean over a demo set after resampling each demo to the longest
/// length, uniformly in arc length.
pub fn mean_trajectory(set: &DemoSet) -> Demonstration {
    let n = set.demos.iter().map(Demonstration::len).max().unwrap();
    let resampled: Vec<Demonstration> = set
        .demos
        .iter()
        .map(|d| d.resample_arc_length(n))
        .collect();
    if resampled.len() == 1 {
        return resampled.into_iter().next().unwrap();
    }
    let k = resampled.len() as f64;
    let mean3 = |get: fn(&Demonstration) -> &[Vector3<f64>], i: usize| {
        resampled.iter().map(|d| get(d)[i]).sum::<Vector3<f64>>() / k
    };
    let positions = (0..n).map(|i| mean3(Demonstration::positions, i)).collect();
    let eulers = (0..n).map(|i| mean3(Demonstration::eulers, i)).collect();
    let lin_vels = (0..n).map(|i| mean3(Demonstration::lin_vels, i)).collect();
    let ang_vels = (0..n).map(|i| mean3(Demonstration::ang_vels, i)).collect();
    let wrenches = (0..n)
        .map(|i| resampled.iter().map(|d| d.wrenches[i]).sum::<Vector6<f64>>() / k)
        .collect();
    let sample_dt = set.demos.iter().map(|d| d.sample_dt).sum::<f64>() / k;
    Demonstration {
        positions,
        eulers,
        lin_vels,
        ang_vels,
        wrenches,
        sample_dt,
    }
}

/// Central differences in the interior, one-sided at both ends.
pub fn central_differences(positions: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    let n = positions.len();
    (0..n)
        .map(|i| match i {
            0 => (positions[1] - positions[0]) / dt,
            _ if i == n - 1 => (positions[n - 1] - positions[n - 2]) / dt,
            _ => (positions[i + 1] - positions[i - 1]) / (2.0 * dt),
        })
        .collect()
}

fn check_len(channel: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch {
            channel: channel.to_owned(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_finite<'a>(channel: &str, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    for (index, row) in rows.enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                channel: channel.to_owned(),
                index,
            });
        }
    }
    Ok(())
}
