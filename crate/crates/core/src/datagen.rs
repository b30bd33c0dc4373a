//! Simulated regression data and CSV ingestion.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BvsError, Result};
use crate::linmodel::{center_data_named, Dataset};

/// Leading coefficients of the simulation design; the rest are zero.
pub const YANG_BETA: [f64; 10] = [2.0, -3.0, 2.0, 2.0, -3.0, 3.0, -2.0, 3.0, -2.0, 3.0];

fn default_sigma2() -> f64 {
    1.0
}

fn default_rho() -> f64 {
    0.6
}

/// Simulation settings: `n` rows of AR(1)-correlated covariates and a
/// response driven by the first ten of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub snr: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimSpec {
    pub fn new(n: usize, p: usize, snr: f64, seed: u64) -> Self {
        SimSpec {
            n,
            p,
            snr,
            sigma2: default_sigma2(),
            rho: default_rho(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < YANG_BETA.len() {
            return Err(BvsError::Config(format!("simulation needs p >= 10, got {}", self.p)));
        }
        if self.n < 2 {
            return Err(BvsError::Config(format!("simulation needs n >= 2, got {}", self.n)));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(BvsError::Config(format!("snr must be non-negative, got {}", self.snr)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(BvsError::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(BvsError::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    /// `beta* = snr * beta_tilde * sqrt(sigma2 * ln p / n)`.
    pub fn true_beta(&self) -> Vec<f64> {
        let scale = self.snr * (self.sigma2 * (self.p as f64).ln() / self.n as f64).sqrt();
        (0..self.p)
            .map(|j| YANG_BETA.get(j).map_or(0.0, |b| b * scale))
            .collect()
    }
}

/// Draws `X` row by row with `x_1 ~ N(0, 1)` and
/// `x_j = rho x_{j-1} + sqrt(1 - rho^2) z`, so `cov(x_i, x_j) = rho^{|i-j|}`,
/// then `y = X beta* + N(0, sigma2)`. Returns the centred dataset and `beta*`.
pub fn generate_yang(spec: &SimSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let innov = (1.0 - spec.rho * spec.rho).sqrt();
    let beta = spec.true_beta();
    let sigma = spec.sigma2.sqrt();
    let mut cols = vec![vec![0.0; n]; p];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(&mut rng);
        cols[0][i] = prev;
        for col in cols.iter_mut().skip(1) {
            let z: f64 = StandardNormal.sample(&mut rng);
            prev = spec.rho * prev + innov * z;
            col[i] = prev;
        }
        let noise: f64 = StandardNormal.sample(&mut rng);
        y[i] = beta.iter().zip(&cols).map(|(b, c)| b * c[i]).sum::<f64>() + sigma * noise;
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Ok((center_data_named(&y, &cols, Some(names))?, beta))
}

/// How a CSV file becomes a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub response: String,
    /// Scale covariates to unit sample variance after centring.
    #[serde(default)]
    pub standardize: bool,
    /// Append squares and pairwise products of the covariates.
    #[serde(default)]
    pub expand: bool,
}

/// Reads a headed, comma-separated numeric file. The `response` column
/// becomes `y` and all other columns the covariates.
pub fn load_csv(path: &Path, response: &str, standardize: bool) -> Result<Dataset> {
    load_csv_with(
        path,
        &CsvOptions {
            response: response.to_string(),
            standardize,
            expand: false,
        },
    )
}

pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let csv_err = |source| BvsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let resp = header
        .iter()
        .position(|h| *h == opts.response)
        .ok_or_else(|| BvsError::MissingColumn(opts.response.clone()))?;
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(BvsError::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let mut c = 0;
        for (k, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| BvsError::NonNumeric {
                row,
                column: header[k].clone(),
                cell: cell.to_string(),
            })?;
            if k == resp {
                y.push(v);
            } else {
                cols[c].push(v);
                c += 1;
            }
        }
    }
    let mut names: Vec<String> = header.iter().enumerate().filter(|(k, _)| *k != resp).map(|(_, h)| h.clone()).collect();
    if opts.expand {
        let (c, nm) = expand_quadratic(&cols, &names);
        cols = c;
        names = nm;
    }
    let data = center_data_named(&y, &cols, Some(names))?;
    if opts.standardize {
        standardize(data)
    } else {
        Ok(data)
    }
}

/// Originals, then squares, then products `x_i x_j` for `i < j`.
pub fn expand_quadratic(cols: &[Vec<f64>], names: &[String]) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut out = cols.to_vec();
    let mut nm = names.to_vec();
    for (c, n) in cols.iter().zip(names) {
        out.push(c.iter().map(|v| v * v).collect());
        nm.push(format!("{n}^2"));
    }
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            out.push(cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).collect());
            nm.push(format!("{}*{}", names[i], names[j]));
        }
    }
    (out, nm)
}

fn standardize(data: Dataset) -> Result<Dataset> {
    let n = data.n();
    let cols: Vec<Vec<f64>> = (0..data.p())
        .map(|j| {
            let c = data.column(j);
            let sd = (c.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                c.iter().map(|v| v / sd).collect()
            } else {
                c.to_vec()
            }
        })
        .collect();
    Dataset::from_centered(data.y().to_vec(), cols, data.column_names().map(|c| c.to_vec()))
}

/// Writes `y` followed by the covariates, using shortest round-trip decimals.
pub fn write_csv(path: &Path, data: &Dataset, response: &str) -> Result<()> {
    let csv_err = |source| BvsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![response.to_string()];
    header.extend((0..data.p()).map(|j| data.column_name(j)));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut row = vec![data.y()[i].to_string()];
        row.extend((0..data.p()).map(|j| data.column(j)[i].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BvsError::io(format!("cannot write {}", path.display()), e))
}
