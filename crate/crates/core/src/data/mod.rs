//! Region features: POI attribute counts, hourly outflow/inflow trip counts,
//! check-in totals, and the log1p + z-score preprocessing applied before
//! encoding.

pub mod csv;

use std::path::Path;

use crate::error::{RecpError, Result};
use crate::numcore::DenseMatrix;

pub use self::csv::{
    load_csv_checkins, load_csv_labels, load_csv_pois, load_csv_trips, write_csv, CsvReader,
    CsvRecord,
};

/// Default number of time intervals per day.
pub const DEFAULT_INTERVALS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripRecord {
    pub origin: usize,
    pub dest: usize,
    pub hour: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoiRecord {
    pub region: usize,
    pub category: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckinRecord {
    pub region: usize,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub region: usize,
    pub label: usize,
}

/// n×F POI counts per region and category.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeMatrix {
    pub values: DenseMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowDirection {
    Outflow,
    Inflow,
}

/// n×(n·N_t) trip counts; entry `(i, j·N_t + t)` counts trips between region
/// `i` and counterpart `j` during interval `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    pub direction: FlowDirection,
    pub intervals: usize,
    pub values: DenseMatrix,
}

impl FlowMatrix {
    pub fn regions(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, region: usize, counterpart: usize, interval: usize) -> f64 {
        self.values
            .get(region, counterpart * self.intervals + interval)
    }
}

/// Aggregated check-in counts per region.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckinVector {
    pub values: Vec<f64>,
}

fn out_of_range(what: &str, line: usize, value: usize, bound: usize) -> RecpError {
    RecpError::Ingest {
        path: "<records>".into(),
        line,
        msg: format!("{what} {value} out of range [0, {bound})"),
    }
}

fn relocate(err: RecpError, path: &Path) -> RecpError {
    match err {
        RecpError::Ingest { line, msg, .. } => RecpError::Ingest {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    }
}

/// Incremental POI counter.
#[derive(Clone, Debug)]
pub struct AttributeBuilder {
    values: DenseMatrix,
}

impl AttributeBuilder {
    pub fn new(regions: usize, categories: usize) -> Self {
        AttributeBuilder {
            values: DenseMatrix::zeros(regions, categories),
        }
    }

    /// `line` is only used for the error message.
    pub fn push(&mut self, rec: PoiRecord, line: usize) -> Result<()> {
        let (n, f) = self.values.shape();
        if rec.region >= n {
            return Err(out_of_range("region", line, rec.region, n));
        }
        if rec.category >= f {
            return Err(out_of_range("category", line, rec.category, f));
        }
        let v = self.values.get(rec.region, rec.category);
        self.values.set(rec.region, rec.category, v + 1.0);
        Ok(())
    }

    pub fn finish(self) -> AttributeMatrix {
        AttributeMatrix {
            values: self.values,
        }
    }
}

/// `A[i][c]` = number of POIs of category `c` in region `i`. Errors carry the
/// 1-based record position.
pub fn build_attributes(
    records: &[PoiRecord],
    regions: usize,
    categories: usize,
) -> Result<AttributeMatrix> {
    let mut b = AttributeBuilder::new(regions, categories);
    for (i, r) in records.iter().enumerate() {
        b.push(*r, i + 1)?;
    }
    Ok(b.finish())
}

/// Incremental outflow/inflow counter.
#[derive(Clone, Debug)]
pub struct FlowBuilder {
    intervals: usize,
    outflow: DenseMatrix,
    inflow: DenseMatrix,
    trips: u64,
}

impl FlowBuilder {
    pub fn new(regions: usize, intervals: usize) -> Self {
        FlowBuilder {
            intervals,
            outflow: DenseMatrix::zeros(regions, regions * intervals),
            inflow: DenseMatrix::zeros(regions, regions * intervals),
            trips: 0,
        }
    }

    pub fn push(&mut self, t: TripRecord, line: usize) -> Result<()> {
        let n = self.outflow.rows();
        if t.origin >= n {
            return Err(out_of_range("origin", line, t.origin, n));
        }
        if t.dest >= n {
            return Err(out_of_range("dest", line, t.dest, n));
        }
        if t.hour >= self.intervals {
            return Err(out_of_range("hour", line, t.hour, self.intervals));
        }
        let nt = self.intervals;
        let oc = t.dest * nt + t.hour;
        let ic = t.origin * nt + t.hour;
        self.outflow
            .set(t.origin, oc, self.outflow.get(t.origin, oc) + 1.0);
        self.inflow.set(t.dest, ic, self.inflow.get(t.dest, ic) + 1.0);
        self.trips += 1;
        Ok(())
    }

    pub fn trips(&self) -> u64 {
        self.trips
    }

    pub fn finish(self) -> (FlowMatrix, FlowMatrix) {
        (
            FlowMatrix {
                direction: FlowDirection::Outflow,
                intervals: self.intervals,
                values: self.outflow,
            },
            FlowMatrix {
                direction: FlowDirection::Inflow,
                intervals: self.intervals,
                values: self.inflow,
            },
        )
    }
}

/// Outflow `S[i][j·N_t+t]` = trips i→j at t; inflow `D[i][j·N_t+t]` = trips j→i at t.
pub fn build_flows(
    trips: &[TripRecord],
    regions: usize,
    intervals: usize,
) -> Result<(FlowMatrix, FlowMatrix)> {
    let mut b = FlowBuilder::new(regions, intervals);
    for (i, t) in trips.iter().enumerate() {
        b.push(*t, i + 1)?;
    }
    Ok(b.finish())
}

/// Streams a trips file into flow matrices without holding the records.
pub fn flows_from_file(
    path: impl AsRef<Path>,
    regions: usize,
    intervals: usize,
) -> Result<(FlowMatrix, FlowMatrix)> {
    let path = path.as_ref();
    let mut b = FlowBuilder::new(regions, intervals);
    for rec in CsvReader::<_, TripRecord>::open(path)? {
        let (line, t) = rec?;
        b.push(t, line).map_err(|e| relocate(e, path))?;
    }
    Ok(b.finish())
}

pub fn attributes_from_file(
    path: impl AsRef<Path>,
    regions: usize,
    categories: usize,
) -> Result<AttributeMatrix> {
    let path = path.as_ref();
    let mut b = AttributeBuilder::new(regions, categories);
    for rec in CsvReader::<_, PoiRecord>::open(path)? {
        let (line, p) = rec?;
        b.push(p, line).map_err(|e| relocate(e, path))?;
    }
    Ok(b.finish())
}

/// Sums check-in records per region; regions without records are 0.
pub fn build_checkins(records: &[CheckinRecord], regions: usize) -> Result<CheckinVector> {
    let mut values = vec![0.0; regions];
    for (i, r) in records.iter().enumerate() {
        if r.region >= regions {
            return Err(out_of_range("region", i + 1, r.region, regions));
        }
        values[r.region] += r.count as f64;
    }
    Ok(CheckinVector { values })
}

/// One label per region; every region in `0..regions` must appear exactly once.
pub fn labels_by_region(records: &[LabelRecord], regions: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; regions];
    for (i, r) in records.iter().enumerate() {
        if r.region >= regions {
            return Err(out_of_range("region", i + 1, r.region, regions));
        }
        if labels[r.region].replace(r.label).is_some() {
            return Err(RecpError::InvalidInput(format!(
                "region {} labelled twice",
                r.region
            )));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| RecpError::InvalidInput(format!("region {i} has no label"))))
        .collect()
}

const STD_FLOOR: f64 = 1e-8;

/// Per-column log1p + z-score statistics fitted on one feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(raw: &DenseMatrix) -> Self {
        let (n, c) = raw.shape();
        let nf = n.max(1) as f64;
        let mut mean = vec![0.0; c];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(raw.row(r)) {
                *m += v.ln_1p();
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(raw.row(r)).zip(&mean) {
                let d = v.ln_1p() - m;
                *s += d * d;
            }
        }
        let mut std = Vec::with_capacity(c);
        let mut constant = Vec::with_capacity(c);
        for j in 0..c {
            let first = if n > 0 { raw.get(0, j) } else { 0.0 };
            constant.push((0..n).all(|r| raw.get(r, j) == first));
            std.push((var[j] / nf).sqrt().max(STD_FLOOR));
        }
        Standardizer {
            mean,
            std,
            constant,
        }
    }

    pub fn columns(&self) -> usize {
        self.mean.len()
    }

    /// Applies the fitted transform; constant columns of the fitted data map to 0.
    pub fn transform(&self, raw: &DenseMatrix) -> Result<DenseMatrix> {
        if raw.cols() != self.columns() {
            return Err(RecpError::Dimension {
                op: "standardize",
                left: raw.shape(),
                right: (1, self.columns()),
            });
        }
        Ok(DenseMatrix::from_fn(raw.rows(), raw.cols(), |r, c| {
            if self.constant[c] {
                0.0
            } else {
                let v = raw.get(r, c);
                let l = if v == 0.0 { 0.0 } else { v.ln_1p() };
                (l - self.mean[c]) / self.std[c]
            }
        }))
    }
}

/// log1p followed by per-column standardization (population std, floored at 1e-8).
pub fn preprocess(raw: &DenseMatrix) -> DenseMatrix {
    Standardizer::fit(raw)
        .transform(raw)
        .expect("fitted on the same matrix")
}

/// Raw and preprocessed features for the three views of a city.
#[derive(Clone, Debug)]
pub struct ViewFeatures {
    pub raw_attributes: DenseMatrix,
    pub raw_outflow: DenseMatrix,
    pub raw_inflow: DenseMatrix,
    pub attributes: DenseMatrix,
    pub outflow: DenseMatrix,
    pub inflow: DenseMatrix,
    pub attr_scaler: Standardizer,
    pub outflow_scaler: Standardizer,
    pub inflow_scaler: Standardizer,
}

impl ViewFeatures {
    pub fn new(attributes: &AttributeMatrix, outflow: &FlowMatrix, inflow: &FlowMatrix) -> Result<Self> {
        let n = attributes.values.rows();
        if outflow.values.rows() != n || inflow.values.rows() != n {
            return Err(RecpError::Dimension {
                op: "view features (region counts)",
                left: attributes.values.shape(),
                right: outflow.values.shape(),
            });
        }
        let attr_scaler = Standardizer::fit(&attributes.values);
        let outflow_scaler = Standardizer::fit(&outflow.values);
        let inflow_scaler = Standardizer::fit(&inflow.values);
        Ok(ViewFeatures {
            attributes: attr_scaler.transform(&attributes.values)?,
            outflow: outflow_scaler.transform(&outflow.values)?,
            inflow: inflow_scaler.transform(&inflow.values)?,
            raw_attributes: attributes.values.clone(),
            raw_outflow: outflow.values.clone(),
            raw_inflow: inflow.values.clone(),
            attr_scaler,
            outflow_scaler,
            inflow_scaler,
        })
    }

    pub fn regions(&self) -> usize {
        self.attributes.rows()
    }
}

/// Everything loaded from a data directory.
#[derive(Clone, Debug)]
pub struct CityData {
    pub attributes: AttributeMatrix,
    pub outflow: FlowMatrix,
    pub inflow: FlowMatrix,
    pub checkins: Option<CheckinVector>,
    pub labels: Option<Vec<usize>>,
}

/// Sizes used when loading a data directory; `None` means infer from the files.
#[derive(Clone, Copy, Debug, Default)]
pub struct DataShape {
    pub regions: Option<usize>,
    pub categories: Option<usize>,
    pub intervals: Option<usize>,
}

impl CityData {
    /// Loads `trips.csv` and `pois.csv` plus, when present, `checkins.csv`
    /// and `labels.csv`/`regions.csv`.
    pub fn load_dir(dir: impl AsRef<Path>, shape: DataShape) -> Result<Self> {
        let dir = dir.as_ref();
        let trips_path = dir.join("trips.csv");
        let pois_path = dir.join("pois.csv");
        let pois = load_csv_pois(&pois_path)?;
        let intervals = shape.intervals.unwrap_or(DEFAULT_INTERVALS);

        // Region count must be known before streaming trips; infer it with a
        // first pass when not configured.
        let regions = match shape.regions {
            Some(n) => n,
            None => {
                let mut max = pois.iter().map(|p| p.region + 1).max().unwrap_or(0);
                for rec in CsvReader::<_, TripRecord>::open(&trips_path)? {
                    let (_, t) = rec?;
                    max = max.max(t.origin + 1).max(t.dest + 1);
                }
                max
            }
        };
        let categories = shape
            .categories
            .unwrap_or_else(|| pois.iter().map(|p| p.category + 1).max().unwrap_or(0));

        let attributes = build_attributes(&pois, regions, categories).map_err(|e| relocate(e, &pois_path))?;
        let (outflow, inflow) = flows_from_file(&trips_path, regions, intervals)?;

        let checkins_path = dir.join("checkins.csv");
        let checkins = if checkins_path.exists() {
            let recs = load_csv_checkins(&checkins_path)?;
            Some(build_checkins(&recs, regions).map_err(|e| relocate(e, &checkins_path))?)
        } else {
            None
        };
        let labels = ["labels.csv", "regions.csv"]
            .iter()
            .map(|f| dir.join(f))
            .find(|p| p.exists())
            .map(|p| {
                let recs = load_csv_labels(&p)?;
                labels_by_region(&recs, regions)
            })
            .transpose()?;
        Ok(CityData {
            attributes,
            outflow,
            inflow,
            checkins,
            labels,
        })
    }

    pub fn regions(&self) -> usize {
        self.attributes.values.rows()
    }
}
