//! Observations `(x, y, z)`, class weights, and fold construction.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Number of permutations tried before giving up on label-balanced folds.
pub const FOLD_RETRY_BUDGET: usize = 100;

/// `n` observations of a score change `x`, an anchor label `y` in
/// `{-1, +1}` and a covariate vector `z` of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array1<f64>,
    y: Array1<f64>,
    z: Array2<f64>,
}

impl Dataset {
    /// Validates shapes, labels and finiteness. Requires `n >= 4` and
    /// `d >= 1`.
    pub fn new(x: Array1<f64>, y: Array1<f64>, z: Array2<f64>) -> Result<Self> {
        let n = x.len();
        if y.len() != n || z.nrows() != n {
            return Err(Error::invalid(format!(
                "row counts differ: x has {}, y has {}, z has {}",
                n,
                y.len(),
                z.nrows()
            )));
        }
        if n < 4 {
            return Err(Error::invalid(format!(
                "need at least 4 observations, got {n}"
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::invalid("covariate matrix has no columns"));
        }
        if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid(format!(
                "label y[{i}] = {} is not +1 or -1",
                y[i]
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("x[{i}] is not finite")));
        }
        if let Some(((i, j), _)) = z.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("z[{i}, {j}] is not finite")));
        }
        Ok(Self { x, y, z })
    }

    /// Builds a dataset without the `n >= 4` requirement. Used for folds
    /// and for small hand-built risk examples.
    pub fn new_unchecked_size(x: Array1<f64>, y: Array1<f64>, z: Array2<f64>) -> Result<Self> {
        let n = x.len();
        if y.len() != n || z.nrows() != n || n == 0 {
            return Err(Error::invalid("inconsistent or empty dataset"));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(Self { x, y, z })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn count_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v > 0.0).count()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            z: self.z.select(Axis(0), indices),
        }
    }

    /// Same observations with covariates replaced.
    pub fn with_covariates(&self, z: Array2<f64>) -> Result<Dataset> {
        if z.nrows() != self.n() {
            return Err(Error::invalid("covariate row count mismatch"));
        }
        Ok(Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            z,
        })
    }

    /// Centers each covariate column and scales it to unit sample standard
    /// deviation. Constant columns are centered only.
    pub fn standardized(&self) -> Dataset {
        let mut z = self.z.clone();
        let n = self.n() as f64;
        for mut col in z.columns_mut() {
            let mean = col.sum() / n;
            col.mapv_inplace(|v| v - mean);
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            if sd > 0.0 {
                col.mapv_inplace(|v| v / sd);
            }
        }
        Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            z,
        }
    }

    /// Reads a CSV with a header naming `y`, `x` and `z1..zd`. Columns
    /// may appear in any order; the covariates are ordered by their index.
    /// Labels coded `{0, 1}` are mapped to `{-1, +1}`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header_err = |message: String| Error::Csv {
            row: 0,
            column: "header".into(),
            message,
        };
        let headers = reader
            .headers()
            .map_err(|e| header_err(e.to_string()))?
            .clone();
        if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
            return Err(header_err("empty file".into()));
        }

        let find = |name: &str| headers.iter().position(|h| h == name);
        let y_col = find("y").ok_or_else(|| header_err("missing column y".into()))?;
        let x_col = find("x").ok_or_else(|| header_err("missing column x".into()))?;
        let mut z_cols: Vec<(usize, usize)> = Vec::new();
        for (pos, h) in headers.iter().enumerate() {
            if let Some(rest) = h.strip_prefix('z') {
                let k: usize = rest
                    .parse()
                    .map_err(|_| header_err(format!("unrecognized column {h:?}")))?;
                z_cols.push((k, pos));
            } else if h != "x" && h != "y" {
                return Err(header_err(format!("unrecognized column {h:?}")));
            }
        }
        z_cols.sort_unstable();
        if z_cols.is_empty() {
            return Err(header_err("no covariate columns z1..zd".into()));
        }
        for (expected, &(k, _)) in (1..).zip(&z_cols) {
            if k != expected {
                return Err(header_err(format!("missing column z{expected}")));
            }
        }
        let d = z_cols.len();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut zs = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let row = r + 1;
            let record = record.map_err(|e| Error::Csv {
                row,
                column: "*".into(),
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(Error::Csv {
                    row,
                    column: "*".into(),
                    message: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            let cell = |pos: usize| -> Result<f64> {
                let raw = &record[pos];
                let v: f64 = raw.parse().map_err(|_| Error::Csv {
                    row,
                    column: headers[pos].to_string(),
                    message: format!("non-numeric value {raw:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv {
                        row,
                        column: headers[pos].to_string(),
                        message: format!("non-finite value {raw:?}"),
                    });
                }
                Ok(v)
            };
            let y = match cell(y_col)? {
                1.0 => 1.0,
                v if v == -1.0 || v == 0.0 => -1.0,
                v => {
                    return Err(Error::Csv {
                        row,
                        column: "y".into(),
                        message: format!("label {v} is not in {{-1, 0, 1}}"),
                    })
                }
            };
            ys.push(y);
            xs.push(cell(x_col)?);
            for &(_, pos) in &z_cols {
                zs.push(cell(pos)?);
            }
        }
        if xs.is_empty() {
            return Err(Error::Csv {
                row: 1,
                column: "*".into(),
                message: "no data rows".into(),
            });
        }
        let n = xs.len();
        let z = Array2::from_shape_vec((n, d), zs).expect("row width checked");
        Dataset::new(Array1::from(xs), Array1::from(ys), z)
    }

    /// Writes the dataset in the format read by [`Dataset::load_csv`].
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("y,x");
        for j in 1..=self.d() {
            out.push_str(&format!(",z{j}"));
        }
        out.push('\n');
        for i in 0..self.n() {
            out.push_str(&format!("{},{}", self.y[i], self.x[i]));
            for j in 0..self.d() {
                out.push_str(&format!(",{}", self.z[[i, j]]));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w(+1) = 1/pi`, `w(-1) = 1/(1 - pi)` with `pi` the empirical share of
    /// positive labels.
    #[default]
    InverseProportion,
    /// `w(+1) = w(-1) = 1/2`.
    Uniform,
}

/// Class weights `w(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFn {
    pub w_plus: f64,
    pub w_minus: f64,
    pub mode: WeightMode,
}

impl WeightFn {
    pub fn uniform() -> Self {
        Self {
            w_plus: 0.5,
            w_minus: 0.5,
            mode: WeightMode::Uniform,
        }
    }

    #[inline]
    pub fn weight(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.w_plus
        } else {
            self.w_minus
        }
    }

    pub fn max_weight(&self) -> f64 {
        self.w_plus.max(self.w_minus)
    }
}

pub fn empirical_weights(data: &Dataset, mode: WeightMode) -> Result<WeightFn> {
    match mode {
        WeightMode::Uniform => Ok(WeightFn::uniform()),
        WeightMode::InverseProportion => {
            let n = data.n();
            let pos = data.count_positive();
            if pos == 0 || pos == n {
                return Err(Error::DegenerateLabels(format!(
                    "{pos} of {n} labels are +1; both classes are required"
                )));
            }
            Ok(WeightFn {
                w_plus: n as f64 / pos as f64,
                w_minus: n as f64 / (n - pos) as f64,
                mode,
            })
        }
    }
}

/// A two-way partition of `0..n` used for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPair {
    pub fold1: Vec<usize>,
    pub fold2: Vec<usize>,
    pub seed: u64,
}

impl FoldPair {
    /// The same partition with the fold roles exchanged.
    pub fn swapped(&self) -> FoldPair {
        FoldPair {
            fold1: self.fold2.clone(),
            fold2: self.fold1.clone(),
            seed: self.seed,
        }
    }
}

fn has_both_labels(data: &Dataset, idx: &[usize]) -> bool {
    let pos = idx.iter().filter(|&&i| data.y[i] > 0.0).count();
    pos > 0 && pos < idx.len()
}

/// Random halves: a seeded permutation, the first `ceil(n/2)` indices go to
/// fold 1. Redraws up to [`FOLD_RETRY_BUDGET`] times until both folds hold
/// both labels.
pub fn split_two_folds(data: &Dataset, seed: u64) -> Result<FoldPair> {
    let n = data.n();
    if n < 4 {
        return Err(Error::invalid(format!("need n >= 4 to split, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let half = n.div_ceil(2);
    for _ in 0..FOLD_RETRY_BUDGET {
        perm.shuffle(&mut rng);
        let (a, b) = perm.split_at(half);
        if has_both_labels(data, a) && has_both_labels(data, b) {
            let mut fold1 = a.to_vec();
            let mut fold2 = b.to_vec();
            fold1.sort_unstable();
            fold2.sort_unstable();
            return Ok(FoldPair { fold1, fold2, seed });
        }
    }
    Err(Error::FoldSplit {
        attempts: FOLD_RETRY_BUDGET,
    })
}

/// `k` near-equal random folds for cross-validation. Fails if any fold
/// misses a label class.
pub fn split_k_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = data.n();
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut folds: Vec<Vec<usize>> = (0..k)
        .map(|f| {
            let lo = f * n / k;
            let hi = (f + 1) * n / k;
            let mut idx = perm[lo..hi].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    for (f, idx) in folds.iter().enumerate() {
        if !has_both_labels(data, idx) {
            return Err(Error::DegenerateLabels(format!(
                "cross-validation fold {f} misses a label class"
            )));
        }
    }
    folds.shrink_to_fit();
    Ok(folds)
}
