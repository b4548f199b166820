//! Dataset representation shared by all engines.
//!
//! Predictors live in a [`MaskedMatrix`]: a dense value array paired with a
//! presence mask. Masked cells hold `NaN` in `values` but are never read;
//! every kernel consults the mask. Responses must be fully observed.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PlsError, Result};
use crate::family::Family;

/// Name of the optional identifier column in CSV files.
pub const ROW_ID_COLUMN: &str = "row_id";

/// Predictor matrix with an explicit presence mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    col_names: Vec<String>,
    row_ids: Vec<String>,
}

impl MaskedMatrix {
    /// Build from values and mask. Only the shapes are checked here; call
    /// [`MaskedMatrix::validate`] for the row/column content invariants.
    pub fn new(
        values: Array2<f64>,
        mask: Array2<bool>,
        col_names: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(PlsError::InvalidArgument(format!(
                "values {:?} and mask {:?} differ in shape",
                values.dim(),
                mask.dim()
            )));
        }
        if col_names.len() != values.ncols() || row_ids.len() != values.nrows() {
            return Err(PlsError::InvalidArgument(
                "name vectors do not match matrix shape".into(),
            ));
        }
        let mut values = values;
        for ((i, j), present) in mask.indexed_iter() {
            if !present {
                values[[i, j]] = f64::NAN;
            } else if !values[[i, j]].is_finite() {
                return Err(PlsError::InvalidArgument(format!(
                    "non-finite present value at ({i}, {j})"
                )));
            }
        }
        Ok(MaskedMatrix {
            values,
            mask,
            col_names,
            row_ids,
        })
    }

    /// All-present matrix with generated names.
    pub fn from_dense(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        let mask = Array2::from_elem((n, p), true);
        Self::new(values, mask, default_col_names(p), default_row_ids(n))
    }

    /// Matrix whose `NaN` cells are treated as missing.
    pub fn from_nan(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        let mask = values.mapv(|v| !v.is_nan());
        Self::new(values, mask, default_col_names(p), default_row_ids(n))
    }

    pub(crate) fn from_parts_unchecked(
        values: Array2<f64>,
        mask: Array2<bool>,
        col_names: Vec<String>,
        row_ids: Vec<String>,
    ) -> Self {
        MaskedMatrix {
            values,
            mask,
            col_names,
            row_ids,
        }
    }

    pub fn with_names(mut self, col_names: Vec<String>) -> Result<Self> {
        if col_names.len() != self.ncols() {
            return Err(PlsError::InvalidArgument("column name count mismatch".into()));
        }
        self.col_names = col_names;
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    #[inline]
    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.mask[[i, j]]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if self.mask[[i, j]] {
            Some(self.values[[i, j]])
        } else {
            None
        }
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        let total = self.mask.len();
        if total == 0 {
            0.0
        } else {
            self.missing_count() as f64 / total as f64
        }
    }

    /// Rows in the given order; duplicates are allowed (bootstrap resamples).
    pub fn select_rows(&self, rows: &[usize]) -> MaskedMatrix {
        let p = self.ncols();
        let mut values = Array2::<f64>::zeros((rows.len(), p));
        let mut mask = Array2::from_elem((rows.len(), p), false);
        for (r, &i) in rows.iter().enumerate() {
            values.row_mut(r).assign(&self.values.row(i));
            mask.row_mut(r).assign(&self.mask.row(i));
        }
        let row_ids = rows.iter().map(|&i| self.row_ids[i].clone()).collect();
        MaskedMatrix::from_parts_unchecked(values, mask, self.col_names.clone(), row_ids)
    }

    /// Every row has a present entry; every column has at least two present
    /// entries taking at least two distinct values.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.nrows() {
            if !self.mask.row(i).iter().any(|&m| m) {
                return Err(PlsError::EmptyRow {
                    row: self.row_ids[i].clone(),
                });
            }
        }
        for j in 0..self.ncols() {
            let mut first: Option<f64> = None;
            let mut distinct = false;
            let mut count = 0;
            for i in 0..self.nrows() {
                if let Some(v) = self.get(i, j) {
                    count += 1;
                    match first {
                        None => first = Some(v),
                        Some(f) if f != v => distinct = true,
                        _ => {}
                    }
                }
            }
            if count < 2 || !distinct {
                return Err(PlsError::ConstantColumn {
                    column: self.col_names[j].clone(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn default_col_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

pub(crate) fn default_row_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Fully observed response with its family and observation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    y: Array1<f64>,
    family: Family,
    weights: Array1<f64>,
    name: String,
}

impl Response {
    pub fn new(y: Array1<f64>, family: Family) -> Result<Self> {
        let n = y.len();
        Self::with_weights(y, family, Array1::ones(n))
    }

    pub fn with_weights(y: Array1<f64>, family: Family, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != y.len() {
            return Err(PlsError::InvalidArgument("weights length mismatch".into()));
        }
        for (i, &v) in y.iter().enumerate() {
            if v.is_nan() {
                return Err(PlsError::MissingResponse { row: i + 1 });
            }
            if !family.valid_response(v) {
                return Err(PlsError::InvalidResponse {
                    family: family.name(),
                    row: i + 1,
                    value: v,
                });
            }
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(PlsError::InvalidArgument("observation weights must be positive".into()));
        }
        Ok(Response {
            y,
            family,
            weights,
            name: "y".into(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Response {
        Response {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            family: self.family,
            weights: rows.iter().map(|&i| self.weights[i]).collect(),
            name: self.name.clone(),
        }
    }
}

/// Column centring and scaling used to standardize predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub col_names: Vec<String>,
    pub col_means: Vec<f64>,
    pub col_sds: Vec<f64>,
    pub y_mean: Option<f64>,
    pub y_sd: Option<f64>,
}

/// Standardize with unit observation weights.
pub fn standardize(x: &MaskedMatrix) -> Result<(MaskedMatrix, ScalingRecord)> {
    let w = Array1::ones(x.nrows());
    standardize_weighted(x, w.view())
}

/// Weighted column standardization over present entries.
///
/// Weights act as frequency weights: the mean is `Σ w x / Σ w` and the
/// variance divisor is `Σ w - 1`, so doubling a weight matches duplicating
/// the row.
pub fn standardize_weighted(
    x: &MaskedMatrix,
    w: ArrayView1<f64>,
) -> Result<(MaskedMatrix, ScalingRecord)> {
    let (n, p) = (x.nrows(), x.ncols());
    if w.len() != n {
        return Err(PlsError::InvalidArgument("weights length mismatch".into()));
    }
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let mut sw = 0.0;
        let mut swx = 0.0;
        for i in 0..n {
            if let Some(v) = x.get(i, j) {
                sw += w[i];
                swx += w[i] * v;
            }
        }
        if sw <= 0.0 {
            return Err(PlsError::ConstantColumn {
                column: x.col_names[j].clone(),
            });
        }
        let mean = swx / sw;
        let mut ss = 0.0;
        for i in 0..n {
            if let Some(v) = x.get(i, j) {
                ss += w[i] * (v - mean) * (v - mean);
            }
        }
        let denom = sw - 1.0;
        let sd = if denom > 0.0 { (ss / denom).sqrt() } else { 0.0 };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(PlsError::ConstantColumn {
                column: x.col_names[j].clone(),
            });
        }
        means.push(mean);
        sds.push(sd);
    }
    let scaling = ScalingRecord {
        col_names: x.col_names.clone(),
        col_means: means,
        col_sds: sds,
        y_mean: None,
        y_sd: None,
    };
    let scaled = apply_scaling(x, &scaling)?;
    Ok((scaled, scaling))
}

/// Standardize `x` with a previously computed scaling record.
pub fn apply_scaling(x: &MaskedMatrix, scaling: &ScalingRecord) -> Result<MaskedMatrix> {
    if x.col_names != scaling.col_names {
        let unknown = x
            .col_names
            .iter()
            .find(|c| !scaling.col_names.contains(c))
            .cloned()
            .unwrap_or_else(|| "<column order>".to_string());
        return Err(PlsError::UnknownColumn(unknown));
    }
    let mut out = x.clone();
    for ((i, j), v) in out.values.indexed_iter_mut() {
        if x.mask[[i, j]] {
            *v = (*v - scaling.col_means[j]) / scaling.col_sds[j];
        }
    }
    Ok(out)
}

/// CSV ingestion options.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub response_col: String,
    pub family: Family,
    pub na_tokens: HashSet<String>,
}

impl CsvOptions {
    pub fn new(response_col: impl Into<String>, family: Family) -> Self {
        CsvOptions {
            response_col: response_col.into(),
            family,
            na_tokens: ["NA", "", "NaN"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<(MaskedMatrix, Response)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

/// Parse a CSV with a mandatory header. A column named `row_id` supplies row
/// identifiers; every other non-response column is a predictor.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<(MaskedMatrix, Response)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == &opts.response_col)
        .ok_or_else(|| PlsError::UnknownColumn(opts.response_col.clone()))?;
    let id_idx = headers.iter().position(|h| h == ROW_ID_COLUMN);
    let pred_idx: Vec<usize> = (0..headers.len())
        .filter(|&k| k != resp_idx && Some(k) != id_idx)
        .collect();

    let mut vals = Vec::new();
    let mut mask = Vec::new();
    let mut ys = Vec::new();
    let mut ids = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let raw_y = rec.get(resp_idx).unwrap_or("").trim();
        if opts.na_tokens.contains(raw_y) {
            return Err(PlsError::MissingResponse { row });
        }
        let y: f64 = raw_y.parse().map_err(|_| PlsError::Parse {
            row,
            column: opts.response_col.clone(),
            value: raw_y.to_string(),
        })?;
        if !opts.family.valid_response(y) {
            return Err(PlsError::InvalidResponse {
                family: opts.family.name(),
                row,
                value: y,
            });
        }
        ys.push(y);
        ids.push(match id_idx {
            Some(k) => rec.get(k).unwrap_or("").to_string(),
            None => row.to_string(),
        });
        for &k in &pred_idx {
            let cell = rec.get(k).unwrap_or("").trim();
            if opts.na_tokens.contains(cell) {
                vals.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| PlsError::Parse {
                    row,
                    column: headers[k].clone(),
                    value: cell.to_string(),
                })?;
                vals.push(v);
                mask.push(true);
            }
        }
    }
    let n = ys.len();
    let p = pred_idx.len();
    let values = Array2::from_shape_vec((n, p), vals)
        .map_err(|e| PlsError::InvalidArgument(e.to_string()))?;
    let mask = Array2::from_shape_vec((n, p), mask)
        .map_err(|e| PlsError::InvalidArgument(e.to_string()))?;
    let names = pred_idx.iter().map(|&k| headers[k].clone()).collect();
    let x = MaskedMatrix::new(values, mask, names, ids)?;
    x.validate()?;
    let y = Response::new(Array1::from(ys), opts.family)?.named(opts.response_col.clone());
    Ok((x, y))
}

pub fn save_csv(path: impl AsRef<Path>, x: &MaskedMatrix, y: &Response) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(file, x, y)
}

/// Write `row_id`, the predictors, then the response. Masked cells become `NA`.
pub fn write_csv<W: Write>(writer: W, x: &MaskedMatrix, y: &Response) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![ROW_ID_COLUMN.to_string()];
    header.extend(x.col_names.iter().cloned());
    header.push(y.name().to_string());
    wtr.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec = Vec::with_capacity(x.ncols() + 2);
        rec.push(x.row_ids[i].clone());
        for j in 0..x.ncols() {
            rec.push(match x.get(i, j) {
                Some(v) => format!("{v}"),
                None => "NA".to_string(),
            });
        }
        rec.push(format!("{}", y.y()[i]));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Synthetic dataset parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub p: usize,
    pub family: Family,
    pub missing_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub x: MaskedMatrix,
    pub y: Response,
    pub true_beta: Vec<f64>,
}

const MASK_RETRIES: usize = 200;

/// Draw a dataset with standard normal predictors, a sparse linear
/// predictor and i.i.d. missingness.
///
/// The first `ceil(p/2)` coefficients are nonzero with alternating signs and
/// shrinking magnitude; the rest are noise predictors.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulated> {
    let SimulationSpec {
        n,
        p,
        family,
        missing_frac,
        seed,
    } = *spec;
    if n < 2 || p < 1 {
        return Err(PlsError::InvalidArgument("simulate needs n >= 2 and p >= 1".into()));
    }
    if !(0.0..1.0).contains(&missing_frac) {
        return Err(PlsError::InvalidArgument(format!(
            "missing fraction {missing_frac} outside [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));

    let signal = p.div_ceil(2);
    let scale = match family {
        Family::Gaussian => 1.0,
        Family::Binomial => 1.0,
        Family::Poisson => 0.3,
    };
    let true_beta: Vec<f64> = (0..p)
        .map(|j| {
            if j < signal {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                scale * sign / (1.0 + 0.5 * j as f64)
            } else {
                0.0
            }
        })
        .collect();
    let intercept = match family {
        Family::Poisson => 0.5,
        _ => 0.0,
    };

    let y: Array1<f64> = (0..n)
        .map(|i| {
            let eta = intercept + (0..p).map(|j| x[[i, j]] * true_beta[j]).sum::<f64>();
            match family {
                Family::Gaussian => eta + rng.sample::<f64, _>(StandardNormal),
                Family::Binomial => {
                    let u: f64 = rng.random();
                    if u < family.inv_link(eta) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Family::Poisson => sample_poisson(&mut rng, family.inv_link(eta)),
            }
        })
        .collect();

    let mask = sample_mask(&mut rng, n, p, missing_frac)?;
    let x = MaskedMatrix::new(x, mask, default_col_names(p), default_row_ids(n))?;
    x.validate()?;
    let y = Response::new(y, family)?;
    Ok(Simulated { x, y, true_beta })
}

fn sample_mask(rng: &mut ChaCha8Rng, n: usize, p: usize, frac: f64) -> Result<Array2<bool>> {
    let mut mask = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() >= frac);
    if frac == 0.0 {
        return Ok(mask);
    }
    for _ in 0..MASK_RETRIES {
        let mut ok = true;
        for i in 0..n {
            if !mask.row(i).iter().any(|&m| m) {
                ok = false;
                for j in 0..p {
                    mask[[i, j]] = rng.random::<f64>() >= frac;
                }
            }
        }
        for j in 0..p {
            if mask.column(j).iter().filter(|&&m| m).count() < 2 {
                ok = false;
                for i in 0..n {
                    mask[[i, j]] = rng.random::<f64>() >= frac;
                }
            }
        }
        if ok {
            return Ok(mask);
        }
    }
    Err(PlsError::InfeasibleMask(frac))
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> f64 {
    match rand_distr::Poisson::new(lambda) {
        Ok(d) => d.sample(rng),
        Err(_) => 0.0,
    }
}
