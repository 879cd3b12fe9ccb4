use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::short_hash;
use super::Provenance;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::spatial::{normalize_coords, CoordTransform};

/// How one covariate column was transformed at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub center: f64,
    /// Divisor applied after centering; 1 for two-valued columns.
    pub scale: f64,
    pub binary: bool,
}

impl ColumnTransform {
    fn fit(name: &str, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let center = values.iter().sum::<f64>() / n;
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let binary = distinct.len() <= 2;
        let sd = (values.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let scale = if binary || !(sd > 0.0) { 1.0 } else { sd };
        ColumnTransform { name: name.to_string(), center, scale, binary }
    }

    fn apply(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }
}

/// A validated, transformed dataset and the transforms that produced it.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub ids: Vec<String>,
    pub covariates: Vec<ColumnTransform>,
    pub w: Option<ColumnTransform>,
    pub coords: CoordTransform,
    pub hash: String,
}

struct RawTable {
    ids: Vec<String>,
    times: Vec<f64>,
    events: Vec<u8>,
    w: Option<Vec<f64>>,
    x_names: Vec<String>,
    x: Vec<Vec<f64>>,
    coords: Vec<[f64; 2]>,
}

fn is_x_column(name: &str) -> bool {
    name.strip_prefix('x').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

fn read_table(bytes: &[u8]) -> Result<RawTable> {
    let data_err = |m: String| Error::Data(m);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(bytes);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = ["id", "time", "event", "coord_x", "coord_y"];
    let missing: Vec<&str> = required.iter().copied().filter(|r| col(r).is_none()).collect();
    if !missing.is_empty() {
        return Err(data_err(format!("missing required columns: {}", missing.join(", "))));
    }
    let unknown: Vec<&String> =
        headers.iter().filter(|h| !required.contains(&h.as_str()) && h.as_str() != "w" && !is_x_column(h)).collect();
    if !unknown.is_empty() {
        return Err(data_err(format!("unknown columns: {unknown:?}")));
    }
    let x_cols: Vec<usize> = (0..headers.len()).filter(|&i| is_x_column(&headers[i])).collect();
    let w_col = col("w");
    let (c_id, c_t, c_e, c_x, c_y) =
        (col("id").unwrap(), col("time").unwrap(), col("event").unwrap(), col("coord_x").unwrap(), col("coord_y").unwrap());

    let mut t = RawTable {
        ids: Vec::new(),
        times: Vec::new(),
        events: Vec::new(),
        w: w_col.map(|_| Vec::new()),
        x_names: x_cols.iter().map(|&i| headers[i].clone()).collect(),
        x: Vec::new(),
        coords: Vec::new(),
    };
    let mut problems = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> std::result::Result<f64, String> {
            let s = rec.get(i).unwrap_or("");
            let v: f64 = s.parse().map_err(|_| format!("{} '{s}' is not a number", headers[i]))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("{} is not finite", headers[i]))
            }
        };
        let row = (|| -> std::result::Result<(), String> {
            let time = num(c_t)?;
            if time <= 0.0 {
                return Err("time must be positive".into());
            }
            let ev = rec.get(c_e).unwrap_or("");
            let event: u8 = ev.parse().map_err(|_| format!("event '{ev}' is not a code 0..=9"))?;
            if event > 9 {
                return Err(format!("event '{ev}' is not a code 0..=9"));
            }
            let xs = x_cols.iter().map(|&i| num(i)).collect::<std::result::Result<Vec<f64>, String>>()?;
            let w = w_col.map(num).transpose()?;
            let coord = [num(c_x)?, num(c_y)?];
            t.ids.push(rec.get(c_id).unwrap_or("").to_string());
            t.times.push(time);
            t.events.push(event);
            t.x.push(xs);
            if let (Some(ws), Some(w)) = (t.w.as_mut(), w) {
                ws.push(w);
            }
            t.coords.push(coord);
            Ok(())
        })();
        if let Err(m) = row {
            problems.push(format!("line {line}: {m}"));
        }
    }
    if !problems.is_empty() {
        return Err(data_err(format!("{} invalid row(s): {}", problems.len(), problems.join("; "))));
    }
    if t.times.len() < 2 {
        return Err(data_err("need at least two rows".into()));
    }
    Ok(t)
}

/// Reads a subject table, centers two-valued covariates, standardizes the
/// others, and (when `spatial`) maps coordinates into `[-1, 1]^2`.
pub fn ingest(path: &Path, spatial: bool) -> Result<Ingested> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let t = read_table(&bytes)?;
    let n = t.times.len();
    let p = t.x_names.len();
    let covariates: Vec<ColumnTransform> = (0..p)
        .map(|c| ColumnTransform::fit(&t.x_names[c], &t.x.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let x = DMatrix::from_fn(n, p, |i, c| covariates[c].apply(t.x[i][c]));
    let w_tr = t.w.as_ref().map(|w| ColumnTransform::fit("w", w));
    let w = t.w.as_ref().zip(w_tr.as_ref()).map(|(w, tr)| w.iter().map(|&v| tr.apply(v)).collect());
    let n_risks = t.events.iter().copied().max().unwrap_or(0).max(1) as usize;
    let (coords, transform) = if spatial {
        normalize_coords(&t.coords).map_err(|e| Error::Data(e.to_string()))?
    } else {
        (t.coords.clone(), CoordTransform { center: [0.0, 0.0], scale: 1.0 })
    };
    let dataset = Dataset::new(t.times, t.events, n_risks, x, w, coords)?;
    Ok(Ingested { dataset, ids: t.ids, covariates, w: w_tr, coords: transform, hash: short_hash(&bytes) })
}

/// Reads a table written by [`write_dataset`] without transforming it.
pub fn read_dataset_verbatim(path: &Path, n_risks: usize) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let t = read_table(&bytes)?;
    let n = t.times.len();
    let x = DMatrix::from_fn(n, t.x_names.len(), |i, c| t.x[i][c]);
    Dataset::new(t.times, t.events, n_risks, x, t.w, t.coords)
}

/// Writes a subject table in the ingestion schema.
pub fn write_dataset(path: &Path, prov: &Provenance, ids: &[String], d: &Dataset) -> Result<()> {
    let mut out = prov.csv_writer(path)?;
    let mut header = vec!["id".to_string(), "time".into(), "event".into()];
    if d.w().is_some() {
        header.push("w".into());
    }
    header.extend((1..=d.p()).map(|c| format!("x{c}")));
    header.extend(["coord_x".into(), "coord_y".into()]);
    out.write_record(&header)?;
    for i in 0..d.n() {
        let mut row = vec![ids[i].clone(), d.times()[i].to_string(), d.events()[i].to_string()];
        if let Some(w) = d.w() {
            row.push(w[i].to_string());
        }
        row.extend((0..d.p()).map(|c| d.x()[(i, c)].to_string()));
        row.extend([d.coords()[i][0].to_string(), d.coords()[i][1].to_string()]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `header` and `rows` as CSV behind a provenance line.
pub fn write_rows(path: &Path, prov: &Provenance, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = prov.csv_writer(path)?;
    out.write_record(header)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
