//! Waveform realization from a designed covariance.
//!
//! A QPSK waveform with covariance `(2/pi)[asin(Re Rg) + j asin(Im Rg)]` is
//! obtained by drawing `N` snapshots of a real `2M`-dimensional Gaussian
//! vector `[x, y]` with covariance `[[Re Rg, Im Rg], [-Im Rg, Re Rg]]`, then
//! mapping each pair to `(sign(x) + j sign(y)) / sqrt(2)`.
//!
//! Row `n` of a waveform matrix `Z` is the `n`-th snapshot, so the sample
//! covariance is `Z^H Z / N`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array_model::PSD_TOL;
use crate::covariance_synthesis::GaussianCovariance;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::seed;

/// Tolerance on `|z| = 1` for QPSK symbols.
pub const ENVELOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformKind {
    Gaussian,
    Qpsk,
    Projected,
}

/// `N x M` matrix of waveform samples (rows are time, columns antennas).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformMatrix {
    samples: CMatrix,
    kind: WaveformKind,
}

impl WaveformMatrix {
    /// Wrap samples, checking the QPSK alphabet when `kind` is `Qpsk`.
    pub fn new(samples: CMatrix, kind: WaveformKind) -> Result<Self> {
        if kind == WaveformKind::Qpsk {
            if let Some(z) = samples.iter().find(|z| !is_qpsk_symbol(**z)) {
                return Err(Error::InvalidParameter(format!("{z} is not a QPSK symbol")));
            }
        }
        Ok(Self { samples, kind })
    }

    pub(crate) fn projected(samples: CMatrix) -> Self {
        Self {
            samples,
            kind: WaveformKind::Projected,
        }
    }

    pub fn samples(&self) -> &CMatrix {
        &self.samples
    }

    pub fn kind(&self) -> WaveformKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn antennas(&self) -> usize {
        self.samples.ncols()
    }

    /// Sample covariance `Z^H Z / N`.
    pub fn sample_covariance(&self) -> CMatrix {
        let n = self.samples.nrows().max(1) as f64;
        (self.samples.adjoint() * &self.samples).unscale(n)
    }

    /// Largest deviation `||z| - 1|` over all samples.
    pub fn envelope_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Write `sample,antenna,re,im` records.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        writer
            .write_record(["sample", "antenna", "re", "im"])
            .map_err(csv_err)?;
        for n in 0..self.samples.nrows() {
            for m in 0..self.samples.ncols() {
                let z = self.samples[(n, m)];
                writer
                    .serialize((n, m, z.re, z.im))
                    .map_err(csv_err)?;
            }
        }
        writer.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Read a file written by [`WaveformMatrix::write_csv`].
    pub fn read_csv(path: &Path, kind: WaveformKind) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut records = Vec::new();
        for row in reader.deserialize::<(usize, usize, f64, f64)>() {
            records.push(row.map_err(csv_err)?);
        }
        let rows = records.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let cols = records.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        if records.len() != rows * cols {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                message: format!("{} records for a {rows}x{cols} waveform", records.len()),
            });
        }
        let mut samples = CMatrix::zeros(rows, cols);
        for (n, m, re, im) in records {
            samples[(n, m)] = Complex64::new(re, im);
        }
        Self::new(samples, kind)
    }
}

fn is_qpsk_symbol(z: Complex64) -> bool {
    (z.re.abs() - FRAC_1_SQRT_2).abs() <= ENVELOPE_TOL && (z.im.abs() - FRAC_1_SQRT_2).abs() <= ENVELOPE_TOL
}

/// Real `2M x 2M` covariance of the stacked in-phase/quadrature Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCovariance {
    entries: DMatrix<f64>,
}

impl StackedCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// `[[Re Rg, Im Rg], [-Im Rg, Re Rg]]`.
pub fn stack_covariance(rg: &GaussianCovariance) -> StackedCovariance {
    let g = rg.matrix();
    let m = g.nrows();
    let mut entries = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = g[(i, j)];
            entries[(i, j)] = z.re;
            entries[(i + m, j + m)] = z.re;
            entries[(i, j + m)] = z.im;
            entries[(i + m, j)] = -z.im;
        }
    }
    StackedCovariance { entries }
}

/// Draw `n` rows with covariance `cov` by eigendecomposition coloring,
/// `S = G Lambda^{1/2} W^T` with `G` i.i.d. standard normal (row-major draws).
pub fn sample_gaussian<R: Rng + ?Sized>(cov: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let dim = cov.nrows();
    if dim == 0 || dim != cov.ncols() {
        return Err(Error::Dimension(format!("{}x{} covariance", cov.nrows(), cov.ncols())));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let sym = (cov + cov.transpose()).scale(0.5);
    let eigen = sym.symmetric_eigen();
    let mut coloring = eigen.eigenvectors.transpose();
    for (i, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite(lambda));
        }
        let root = lambda.max(0.0).sqrt();
        coloring.row_mut(i).scale_mut(root);
    }
    let mut white = DMatrix::<f64>::zeros(n, dim);
    for r in 0..n {
        for c in 0..dim {
            white[(r, c)] = rng.sample(StandardNormal);
        }
    }
    Ok(white * coloring)
}

/// [`sample_gaussian`] with a fresh seeded generator.
pub fn sample_gaussian_seeded(cov: &DMatrix<f64>, n: usize, rng_seed: u64) -> Result<DMatrix<f64>> {
    sample_gaussian(cov, n, &mut seed::rng(rng_seed))
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `(sign(x) + j sign(y)) / sqrt(2)` entrywise, with `sign(0) = +1`.
pub fn qpsk_map(x_part: &DMatrix<f64>, y_part: &DMatrix<f64>) -> Result<WaveformMatrix> {
    if x_part.shape() != y_part.shape() {
        return Err(Error::Dimension(format!(
            "in-phase part {:?} vs quadrature part {:?}",
            x_part.shape(),
            y_part.shape()
        )));
    }
    let samples = CMatrix::from_fn(x_part.nrows(), x_part.ncols(), |r, c| {
        Complex64::new(sign(x_part[(r, c)]) * FRAC_1_SQRT_2, sign(y_part[(r, c)]) * FRAC_1_SQRT_2)
    });
    Ok(WaveformMatrix {
        samples,
        kind: WaveformKind::Qpsk,
    })
}

/// Draw an `n`-sample QPSK waveform whose covariance is the arcsin image of `rg`.
pub fn generate_qpsk_waveform(rg: &GaussianCovariance, n: usize, rng_seed: u64) -> Result<WaveformMatrix> {
    let m = rg.antennas();
    let stacked = stack_covariance(rg);
    let s = sample_gaussian_seeded(stacked.matrix(), n, rng_seed)?;
    let x = s.columns(0, m).into_owned();
    let y = s.columns(m, m).into_owned();
    qpsk_map(&x, &y)
}
