//! File formats.
//!
//! * points CSV: header `id,x1,...,xd,weight`
//! * points JSON: `[{"id": 0, "coords": [..], "weight": 0.5}, ...]`
//! * distance matrix CSV: header `id,<id>,<id>,...`, one row per point, plus a
//!   weights CSV `id,weight`
//! * curve edge list CSV: `u,v,length,provenance`
//! * parametrization CSV: `t,vertex,x1,...,xd` (coordinates blank for lifted vertices)

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{BridgeGraph, CurveParametrization, Vertex};
use crate::error::{Error, Result};
use crate::space::MetricMeasureSpace;

fn bad(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| bad(format!("cannot parse {what} {s:?}")))
}

fn parse_id(s: &str) -> Result<u64> {
    s.trim().parse().map_err(|_| bad(format!("cannot parse point id {s:?}")))
}

pub fn read_points_csv<R: Read>(reader: R) -> Result<MetricMeasureSpace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 3 {
        return Err(bad("points CSV needs columns id, at least one coordinate, weight"));
    }
    let (mut ids, mut coords, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(bad(format!("row has {} fields, expected {width}", rec.len())));
        }
        ids.push(parse_id(&rec[0])?);
        coords.push((1..width - 1).map(|k| parse_f64(&rec[k], "coordinate")).collect::<Result<Vec<_>>>()?);
        weights.push(parse_f64(&rec[width - 1], "weight")?);
    }
    MetricMeasureSpace::from_coords(ids, coords, weights)
}

pub fn write_points_csv<W: Write>(space: &MetricMeasureSpace, writer: W) -> Result<()> {
    let dim = space.dim().ok_or(Error::UnsupportedMetric)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.push("weight".into());
    w.write_record(&header)?;
    for i in 0..space.len() {
        let mut row = vec![space.id(i).to_string()];
        row.extend(space.coords(i).unwrap().iter().map(|c| c.to_string()));
        row.push(space.weight(i).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    id: u64,
    coords: Vec<f64>,
    weight: f64,
}

pub fn read_points_json<R: Read>(reader: R) -> Result<MetricMeasureSpace> {
    let recs: Vec<PointRecord> = serde_json::from_reader(reader)?;
    let (mut ids, mut coords, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for r in recs {
        ids.push(r.id);
        coords.push(r.coords);
        weights.push(r.weight);
    }
    MetricMeasureSpace::from_coords(ids, coords, weights)
}

/// Reads a distance matrix and a separate weights file.
pub fn read_matrix_csv<R1: Read, R2: Read>(matrix: R1, weights: R2) -> Result<MetricMeasureSpace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(matrix);
    let cols: Vec<u64> = rdr.headers()?.iter().skip(1).map(parse_id).collect::<Result<_>>()?;
    let mut rows: HashMap<u64, Vec<f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != cols.len() + 1 {
            return Err(bad(format!("matrix row has {} fields, expected {}", rec.len(), cols.len() + 1)));
        }
        let id = parse_id(&rec[0])?;
        let row = rec.iter().skip(1).map(|s| parse_f64(s, "distance")).collect::<Result<Vec<_>>>()?;
        if rows.insert(id, row).is_some() {
            return Err(bad(format!("duplicate matrix row for id {id}")));
        }
    }
    let matrix: Vec<Vec<f64>> = cols
        .iter()
        .map(|id| rows.remove(id).ok_or_else(|| bad(format!("matrix has no row for id {id}"))))
        .collect::<Result<_>>()?;
    if !rows.is_empty() {
        return Err(bad("matrix has rows for ids missing from the header"));
    }

    let mut wr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(weights);
    let mut wmap = HashMap::new();
    for rec in wr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(bad("weights CSV needs columns id, weight"));
        }
        wmap.insert(parse_id(&rec[0])?, parse_f64(&rec[1], "weight")?);
    }
    let weights: Vec<f64> = cols
        .iter()
        .map(|id| wmap.get(id).copied().ok_or_else(|| bad(format!("no weight for id {id}"))))
        .collect::<Result<_>>()?;
    MetricMeasureSpace::from_matrix(cols, matrix, weights)
}

/// One points file (`.csv` or `.json`), or a matrix CSV followed by a weights CSV.
pub fn load_space(paths: &[impl AsRef<Path>]) -> Result<MetricMeasureSpace> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| bad(format!("{}: {e}", p.display())));
    match paths {
        [p] => {
            let p = p.as_ref();
            let f = open(p)?;
            match p.extension().and_then(|e| e.to_str()) {
                Some("json") => read_points_json(f),
                _ => read_points_csv(f),
            }
        }
        [m, w] => read_matrix_csv(open(m.as_ref())?, open(w.as_ref())?),
        _ => Err(bad("expected one points file or a matrix file and a weights file")),
    }
}

/// Point ids, one per line or as the first CSV column; a non-numeric first line is skipped.
pub fn read_ids<R: Read>(reader: R) -> Result<Vec<u64>> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match rec.get(0).map(|s| s.parse::<u64>()) {
            Some(Ok(id)) => out.push(id),
            _ if k == 0 => continue,
            _ => return Err(bad(format!("cannot parse id on line {}", k + 1))),
        }
    }
    Ok(out)
}

pub fn write_edges_csv<W: Write>(space: &MetricMeasureSpace, g: &BridgeGraph, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["u", "v", "length", "provenance"])?;
    for e in g.edges() {
        w.write_record([e.u.label(space), e.v.label(space), e.length.to_string(), e.provenance.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_param_csv<W: Write>(
    space: &MetricMeasureSpace,
    p: &CurveParametrization,
    writer: W,
) -> Result<()> {
    let dim = space.dim().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "vertex".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (v, t) in p.visits.iter().zip(&p.t) {
        let mut row = vec![t.to_string(), v.label(space)];
        match v {
            Vertex::Ground(i) if dim > 0 => {
                row.extend(space.coords(*i).unwrap().iter().map(|c| c.to_string()))
            }
            _ => row.extend(std::iter::repeat(String::new()).take(dim)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
