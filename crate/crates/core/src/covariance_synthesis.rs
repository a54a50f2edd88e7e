//! Unconstrained synthesis of constant-envelope QPSK covariance matrices.
//!
//! A QPSK waveform whose in-phase and quadrature parts are the signs of
//! jointly Gaussian variables has covariance
//!
//! ```text
//! R = (2/pi) * [asin(Re Rg) + j asin(Im Rg)]
//! ```
//!
//! where `Rg` is the covariance of the underlying complex Gaussian vector.
//! Writing `Rg = U^H U` with every column of the upper-triangular `U` built
//! from spherical coordinates (and a per-column phase) makes `Rg` positive
//! semi-definite with a unit diagonal for *any* choice of angles, and the
//! arcsin map preserves both properties. The beampattern matching problem is
//! therefore an unconstrained minimization over the angles plus a scale
//! `alpha` on the desired pattern.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{self, AngleGrid, ComplexCovariance, DesiredBeampattern};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::seed;

/// Width of the band outside `[-1, 1]` that is clamped rather than rejected.
pub const ARCSIN_CLAMP_TOL: f64 = 1e-12;
/// Off-diagonal `|Re Rg|` or `|Im Rg|` above `1 - NEAR_SINGULAR_TOL` makes the
/// chain-rule gradient unreliable.
pub const NEAR_SINGULAR_TOL: f64 = 1e-9;
/// Step of the central finite-difference fallback gradient.
pub const FD_STEP: f64 = 1e-6;
/// Distance to the arcsin singularity below which the solver stops trusting
/// the chain rule.
pub const SOLVER_SINGULAR_TOL: f64 = 1e-13;

/// Number of free optimization variables for `antennas` elements.
pub fn parameter_count(antennas: usize) -> usize {
    antennas * (antennas - 1) / 2 + antennas + 1
}

/// Position of the spherical angle of column `col` and factor `k < col`
/// (both zero-based) inside [`SphericalParams::psi_lower`].
pub fn lower_index(col: usize, k: usize) -> usize {
    debug_assert!(k < col);
    col * (col - 1) / 2 + k
}

/// Free parameters `[psi_lower, psi_diag, alpha]`.
///
/// `psi_lower` holds the spherical angles of columns `1..M`, column by column
/// (column `c` owns `c` consecutive angles). `psi_diag` holds the per-column
/// phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalParams {
    antennas: usize,
    psi_lower: Vec<f64>,
    psi_diag: Vec<f64>,
    alpha: f64,
}

impl SphericalParams {
    pub fn new(antennas: usize, psi_lower: Vec<f64>, psi_diag: Vec<f64>, alpha: f64) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::InvalidParameter("antenna count must be positive".into()));
        }
        let lower = antennas * (antennas - 1) / 2;
        if psi_lower.len() != lower || psi_diag.len() != antennas {
            return Err(Error::Dimension(format!(
                "expected {lower} spherical angles and {antennas} phases, got {} and {}",
                psi_lower.len(),
                psi_diag.len()
            )));
        }
        if psi_lower.iter().chain(&psi_diag).chain([&alpha]).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        Ok(Self {
            antennas,
            psi_lower,
            psi_diag,
            alpha,
        })
    }

    /// Parameters whose covariance is the identity (all angles zero).
    pub fn identity(antennas: usize) -> Self {
        Self {
            antennas,
            psi_lower: vec![0.0; antennas * (antennas - 1) / 2],
            psi_diag: vec![0.0; antennas],
            alpha: 1.0,
        }
    }

    /// Spherical angles uniform on `(0, pi)`, phases uniform on `(0, 2 pi)`, `alpha = 1`.
    pub fn random<R: Rng + ?Sized>(antennas: usize, rng: &mut R) -> Self {
        let psi_lower = (0..antennas * (antennas - 1) / 2)
            .map(|_| rng.random_range(0.0..PI))
            .collect();
        let psi_diag = (0..antennas).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self {
            antennas,
            psi_lower,
            psi_diag,
            alpha: 1.0,
        }
    }

    pub fn from_slice(antennas: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != parameter_count(antennas) {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                parameter_count(antennas),
                theta.len()
            )));
        }
        let lower = antennas * (antennas - 1) / 2;
        Self::new(
            antennas,
            theta[..lower].to_vec(),
            theta[lower..lower + antennas].to_vec(),
            theta[lower + antennas],
        )
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(parameter_count(self.antennas));
        v.extend_from_slice(&self.psi_lower);
        v.extend_from_slice(&self.psi_diag);
        v.push(self.alpha);
        v
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn psi_lower(&self) -> &[f64] {
        &self.psi_lower
    }

    pub fn psi_diag(&self) -> &[f64] {
        &self.psi_diag
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Upper-triangular factor `U` with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFactor {
    entries: CMatrix,
}

impl ComplexFactor {
    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }
}

/// Covariance `Rg = U^H U` of the complex Gaussian vector behind the waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCovariance {
    entries: CMatrix,
}

impl GaussianCovariance {
    /// Validate an externally supplied Gaussian covariance.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let valid = ComplexCovariance::new(entries)?;
        if let Some(bad) = valid
            .matrix()
            .iter()
            .flat_map(|z| [z.re, z.im])
            .find(|v| v.abs() > 1.0 + ARCSIN_CLAMP_TOL)
        {
            return Err(Error::ArcsinDomain(bad));
        }
        Ok(Self {
            entries: valid.into_matrix(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn antennas(&self) -> usize {
        self.entries.nrows()
    }
}

/// Real spherical-coordinate unit vector of column `col`, rows `0..=col`.
fn spherical_column(angles: &[f64], col: usize, out: &mut [f64]) {
    debug_assert_eq!(angles.len(), col);
    if col == 0 {
        out[0] = 1.0;
        return;
    }
    // prefix[t] = prod_{k < t} sin(angles[k])
    let mut prefix = 1.0;
    for r in (1..=col).rev() {
        let k = col - r;
        out[r] = prefix * angles[k].cos();
        prefix *= angles[k].sin();
    }
    out[0] = prefix;
}

/// Build the factor `U` whose column `c` is `exp(j psi_c) * u_c`.
pub fn build_factor(params: &SphericalParams) -> ComplexFactor {
    let m = params.antennas;
    let mut entries = CMatrix::zeros(m, m);
    let mut column = vec![0.0; m];
    for c in 0..m {
        let angles = &params.psi_lower[lower_index_start(c)..lower_index_start(c) + c];
        spherical_column(angles, c, &mut column);
        let phase = Complex64::from_polar(1.0, params.psi_diag[c]);
        for r in 0..=c {
            entries[(r, c)] = phase * column[r];
        }
    }
    ComplexFactor { entries }
}

fn lower_index_start(col: usize) -> usize {
    if col == 0 {
        0
    } else {
        lower_index(col, 0)
    }
}

/// `Rg = U^H U`. The diagonal is set to exactly one, which the unit-norm
/// columns guarantee up to round-off; the arcsin map is ill-conditioned at
/// one, so leaving `1 - eps` there would cost eight digits.
pub fn gaussian_covariance(factor: &ComplexFactor) -> GaussianCovariance {
    let u = &factor.entries;
    let mut entries = u.adjoint() * u;
    for i in 0..entries.nrows() {
        entries[(i, i)] = Complex64::new(1.0, 0.0);
        for j in 0..i {
            // enforce exact Hermitian symmetry
            let upper = entries[(j, i)];
            entries[(i, j)] = upper.conj();
        }
    }
    GaussianCovariance { entries }
}

fn clamped_asin(v: f64) -> Result<f64> {
    if v.abs() > 1.0 + ARCSIN_CLAMP_TOL || v.is_nan() {
        return Err(Error::ArcsinDomain(v));
    }
    Ok(v.clamp(-1.0, 1.0).asin())
}

fn arcsin_map(rg: &CMatrix) -> Result<CMatrix> {
    let mut out = CMatrix::zeros(rg.nrows(), rg.ncols());
    for (dst, src) in out.iter_mut().zip(rg.iter()) {
        *dst = Complex64::new(clamped_asin(src.re)?, clamped_asin(src.im)?) * FRAC_2_PI;
    }
    for i in 0..out.nrows() {
        out[(i, i)] = Complex64::new(1.0, 0.0);
    }
    Ok(out)
}

/// QPSK covariance `(2/pi) [asin(Re Rg) + j asin(Im Rg)]`.
pub fn qpsk_covariance(rg: &GaussianCovariance) -> Result<ComplexCovariance> {
    Ok(ComplexCovariance::from_construction(arcsin_map(&rg.entries)?))
}

/// Full pipeline `params -> U -> Rg -> R`.
pub fn synthesize(params: &SphericalParams) -> Result<(GaussianCovariance, ComplexCovariance)> {
    let rg = gaussian_covariance(&build_factor(params));
    let r = qpsk_covariance(&rg)?;
    Ok((rg, r))
}

fn check_antennas(params: &SphericalParams, desired: &DesiredBeampattern) -> Result<()> {
    if desired.is_empty() {
        return Err(Error::InvalidGrid("desired beampattern is empty".into()));
    }
    if params.antennas == 0 {
        return Err(Error::InvalidParameter("antenna count must be positive".into()));
    }
    Ok(())
}

/// Matching cost evaluated term by term from the real and imaginary arcsin
/// matrices: the symmetric part contributes `(2/pi) a^H asin(Re Rg) a` and
/// the skew-symmetric part `(2j/pi) a^H asin(Im Rg) a`, each real.
pub fn cost_j_theta(params: &SphericalParams, desired: &DesiredBeampattern) -> Result<f64> {
    check_antennas(params, desired)?;
    let m = params.antennas;
    let rg = gaussian_covariance(&build_factor(params));
    let mut sym = DMatrix::<f64>::zeros(m, m);
    let mut skew = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let z = rg.entries[(i, j)];
            sym[(i, j)] = clamped_asin(z.re)?;
            skew[(i, j)] = clamped_asin(z.im)?;
        }
    }
    let sym = sym.map(|v| Complex64::new(v, 0.0));
    let skew = skew.map(|v| Complex64::new(v, 0.0));
    let j = Complex64::new(0.0, 1.0);
    let mut sum = 0.0;
    for (&theta, &phi) in desired.grid().angles_deg().iter().zip(desired.values()) {
        let a = array_model::steering_vector(theta, m);
        let real_term = a.dotc(&(&sym * &a)) * FRAC_2_PI;
        let imag_term = j * a.dotc(&(&skew * &a)) * FRAC_2_PI;
        let scale = 1.0 + real_term.norm() + imag_term.norm();
        debug_assert!(real_term.im.abs() < 1e-9 * scale, "symmetric term not real");
        debug_assert!(imag_term.im.abs() < 1e-9 * scale, "skew term not real");
        let residual = real_term.re + imag_term.re - params.alpha * phi;
        sum += residual * residual;
    }
    Ok(sum / desired.len() as f64)
}

/// Analytic gradient of [`cost_j_theta`], ordered like [`SphericalParams::to_vec`].
pub fn grad_j_theta(params: &SphericalParams, desired: &DesiredBeampattern) -> Result<Vec<f64>> {
    check_antennas(params, desired)?;
    BeampatternObjective::new(desired, params.antennas).gradient(params)
}

/// Beampattern matching objective with precomputed steering geometry.
///
/// The beampattern `b^H R b` is linear in the free real coordinates of the
/// Hermitian `R` (diagonal real parts, upper-triangle real and imaginary
/// parts), so each angle is stored as a row of real weights. With a
/// projector `P`, `b = P^H a` and the objective matches the beampattern of
/// the projected covariance `P R P^H`.
#[derive(Debug, Clone)]
pub struct BeampatternObjective {
    antennas: usize,
    pairs: Vec<(usize, usize)>,
    weights: DMatrix<f64>,
    target: DVector<f64>,
    fixed_alpha: Option<f64>,
}

impl BeampatternObjective {
    pub fn new(desired: &DesiredBeampattern, antennas: usize) -> Self {
        Self::build(desired, antennas, None)
    }

    /// Objective on the beampattern of `P R P^H`.
    pub fn with_projector(desired: &DesiredBeampattern, projector: &CMatrix) -> Result<Self> {
        if projector.nrows() != projector.ncols() {
            return Err(Error::Dimension("projector must be square".into()));
        }
        Ok(Self::build(desired, projector.nrows(), Some(projector)))
    }

    /// Hold `alpha` at `value`; its gradient component becomes zero.
    pub fn fix_alpha(mut self, value: f64) -> Self {
        self.fixed_alpha = Some(value);
        self
    }

    fn build(desired: &DesiredBeampattern, m: usize, projector: Option<&CMatrix>) -> Self {
        let pairs: Vec<(usize, usize)> = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .collect();
        let angles = desired.grid().angles_deg();
        let mut weights = DMatrix::<f64>::zeros(angles.len(), m + 2 * pairs.len());
        for (k, &theta) in angles.iter().enumerate() {
            let a = array_model::steering_vector(theta, m);
            let b = match projector {
                Some(p) => p.adjoint() * a,
                None => a,
            };
            for p in 0..m {
                weights[(k, p)] = b[p].norm_sqr();
            }
            for (idx, &(p, q)) in pairs.iter().enumerate() {
                let w = b[p].conj() * b[q];
                weights[(k, m + 2 * idx)] = 2.0 * w.re;
                weights[(k, m + 2 * idx + 1)] = -2.0 * w.im;
            }
        }
        Self {
            antennas: m,
            pairs,
            weights,
            target: DVector::from_column_slice(desired.values()),
            fixed_alpha: None,
        }
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn grid_len(&self) -> usize {
        self.target.len()
    }

    fn alpha(&self, params: &SphericalParams) -> f64 {
        self.fixed_alpha.unwrap_or(params.alpha)
    }

    /// Real coordinates of `R` from `Rg`.
    fn covariance_coordinates(&self, rg: &CMatrix) -> Result<DVector<f64>> {
        let m = self.antennas;
        let mut coords = DVector::<f64>::zeros(m + 2 * self.pairs.len());
        for p in 0..m {
            coords[p] = 1.0;
        }
        for (idx, &(p, q)) in self.pairs.iter().enumerate() {
            let z = rg[(p, q)];
            coords[m + 2 * idx] = FRAC_2_PI * clamped_asin(z.re)?;
            coords[m + 2 * idx + 1] = FRAC_2_PI * clamped_asin(z.im)?;
        }
        Ok(coords)
    }

    fn check_domain(&self, params: &SphericalParams) -> Result<()> {
        if params.antennas != self.antennas {
            return Err(Error::Dimension(format!(
                "parameters for {} antennas, objective for {}",
                params.antennas, self.antennas
            )));
        }
        Ok(())
    }

    /// Beampattern of the synthesized (possibly projected) covariance.
    pub fn pattern(&self, params: &SphericalParams) -> Result<Vec<f64>> {
        self.check_domain(params)?;
        let rg = gaussian_covariance(&build_factor(params));
        let coords = self.covariance_coordinates(&rg.entries)?;
        Ok((&self.weights * coords).iter().copied().collect())
    }

    pub fn cost(&self, params: &SphericalParams) -> Result<f64> {
        self.check_domain(params)?;
        let rg = gaussian_covariance(&build_factor(params));
        let coords = self.covariance_coordinates(&rg.entries)?;
        let residual = &self.weights * coords - &self.target * self.alpha(params);
        Ok(residual.norm_squared() / self.grid_len() as f64)
    }

    /// Analytic gradient. Fails with [`Error::NearSingularGradient`] when an
    /// off-diagonal entry of `Rg` is within [`NEAR_SINGULAR_TOL`] of `±1`.
    pub fn gradient(&self, params: &SphericalParams) -> Result<Vec<f64>> {
        self.gradient_guarded(params, NEAR_SINGULAR_TOL, false).map(|(g, _)| g)
    }

    /// Gradient used by the solver. Entries of `Rg` within
    /// [`SOLVER_SINGULAR_TOL`] of `±1` sit on a cone-shaped kink of the
    /// arcsin; their term is given the central-difference limit there,
    /// which is zero. Returns whether any term was replaced.
    pub fn solver_gradient(&self, params: &SphericalParams) -> Result<(Vec<f64>, bool)> {
        self.gradient_guarded(params, SOLVER_SINGULAR_TOL, true)
    }

    fn gradient_guarded(&self, params: &SphericalParams, guard: f64, at_kink_zero: bool) -> Result<(Vec<f64>, bool)> {
        self.check_domain(params)?;
        let m = self.antennas;
        let factor = build_factor(params);
        let rg = gaussian_covariance(&factor);
        let u = &factor.entries;
        // 1 -/+ Re(u_p^H u_q) = |u_p -/+ u_q|^2 / 2 and 1 -/+ Im(u_p^H u_q) =
        // |u_p +/- j u_q|^2 / 2 for unit columns, exact to relative precision
        let mut slack = Vec::with_capacity(self.pairs.len());
        let mut kinked = false;
        for &(p, q) in &self.pairs {
            let (mut re_minus, mut re_plus, mut im_minus, mut im_plus) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..m {
                let a = u[(i, p)];
                let b = u[(i, q)];
                let jb = Complex64::new(-b.im, b.re);
                re_minus += (a - b).norm_sqr();
                re_plus += (a + b).norm_sqr();
                im_minus += (a + jb).norm_sqr();
                im_plus += (a - jb).norm_sqr();
            }
            let (re_minus, re_plus, im_minus, im_plus) =
                (0.5 * re_minus, 0.5 * re_plus, 0.5 * im_minus, 0.5 * im_plus);
            let closest = re_minus.min(re_plus).min(im_minus).min(im_plus);
            if closest < guard && at_kink_zero {
                kinked = true;
                slack.push((f64::INFINITY, f64::INFINITY));
                continue;
            }
            if closest < guard {
                let z = rg.entries[(p, q)];
                return Err(Error::NearSingularGradient {
                    row: p,
                    col: q,
                    value: z.re.abs().max(z.im.abs()),
                });
            }
            slack.push(((re_minus * re_plus).sqrt(), (im_minus * im_plus).sqrt()));
        }
        let alpha = self.alpha(params);
        let coords = self.covariance_coordinates(&rg.entries)?;
        let residual = &self.weights * coords - &self.target * alpha;
        let k = self.grid_len() as f64;
        // dJ / d(coordinates of R)
        let d_coords = self.weights.tr_mul(&residual) * (2.0 / k);

        // dJ = Re sum_pq conj(C_pq) dRg_pq with C Hermitian
        let mut c = CMatrix::zeros(m, m);
        for (idx, &(p, q)) in self.pairs.iter().enumerate() {
            let (re_slack, im_slack) = slack[idx];
            let d_re = d_coords[m + 2 * idx] * FRAC_2_PI / re_slack;
            let d_im = d_coords[m + 2 * idx + 1] * FRAC_2_PI / im_slack;
            let entry = Complex64::new(0.5 * d_re, 0.5 * d_im);
            c[(p, q)] = entry;
            c[(q, p)] = entry.conj();
        }
        // dJ = Re sum_ij conj(Q_ij) dU_ij
        let q_mat = (&factor.entries * &c) * Complex64::new(2.0, 0.0);

        let mut grad = vec![0.0; parameter_count(m)];
        let lower = m * (m - 1) / 2;
        let mut column = vec![0.0; m];
        let mut d_column = vec![0.0; m];
        for col in 0..m {
            let u = factor.entries.column(col);
            let phase_grad: Complex64 = (0..=col)
                .map(|i| q_mat[(i, col)].conj() * Complex64::new(0.0, 1.0) * u[i])
                .sum();
            grad[lower + col] = phase_grad.re;

            let start = lower_index_start(col);
            let angles = &params.psi_lower[start..start + col];
            spherical_column(angles, col, &mut column);
            let phase = Complex64::from_polar(1.0, params.psi_diag[col]);
            for j in 0..col {
                spherical_column_derivative(angles, col, j, &mut d_column);
                let s: Complex64 = (0..=col).map(|i| q_mat[(i, col)].conj() * d_column[i]).sum();
                grad[start + j] = (phase * s).re;
            }
        }
        grad[lower + m] = if self.fixed_alpha.is_some() {
            0.0
        } else {
            -(2.0 / k) * residual.dot(&self.target)
        };
        Ok((grad, kinked))
    }

    /// Central finite-difference gradient with step [`FD_STEP`].
    pub fn fd_gradient(&self, params: &SphericalParams) -> Result<Vec<f64>> {
        let base = params.to_vec();
        let mut grad = vec![0.0; base.len()];
        let mut probe = base.clone();
        for i in 0..base.len() {
            if i == base.len() - 1 && self.fixed_alpha.is_some() {
                continue;
            }
            probe[i] = base[i] + FD_STEP;
            let plus = self.cost(&SphericalParams::from_slice(self.antennas, &probe)?)?;
            probe[i] = base[i] - FD_STEP;
            let minus = self.cost(&SphericalParams::from_slice(self.antennas, &probe)?)?;
            probe[i] = base[i];
            grad[i] = (plus - minus) / (2.0 * FD_STEP);
        }
        Ok(grad)
    }
}

/// Derivative of the spherical column with respect to its `j`-th angle.
#[allow(clippy::needless_range_loop)]
fn spherical_column_derivative(angles: &[f64], col: usize, j: usize, out: &mut [f64]) {
    for r in 0..=col {
        // u_0 = prod_{k < col} sin; u_r = prod_{k < col - r} sin * cos(angle[col - r])
        let sin_len = col - r;
        let mut v = 1.0;
        let mut hit = false;
        for (k, &angle) in angles.iter().enumerate().take(sin_len) {
            if k == j {
                v *= angle.cos();
                hit = true;
            } else {
                v *= angle.sin();
            }
        }
        if r > 0 {
            let k = col - r;
            if k == j {
                v *= -angles[k].sin();
                hit = true;
            } else {
                v *= angles[k].cos();
            }
        }
        out[r] = if hit { v } else { 0.0 };
    }
}

/// Settings of the gradient-descent solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    /// Armijo backtracking; when disabled a fixed step is taken.
    pub line_search: bool,
    pub armijo_slope: f64,
    pub contraction: f64,
    pub fixed_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            restarts: 5,
            line_search: true,
            armijo_slope: 1e-4,
            contraction: 0.5,
            fixed_step: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be positive"));
        }
        if !(self.grad_tol.is_finite() && self.grad_tol > 0.0) {
            return Err(Error::config("grad_tol", "must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("restarts", "must be positive"));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::config("contraction", "must lie in (0, 1)"));
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 1.0) {
            return Err(Error::config("armijo_slope", "must lie in (0, 1)"));
        }
        if !(self.fixed_step.is_finite() && self.fixed_step > 0.0) {
            return Err(Error::config("fixed_step", "must be positive"));
        }
        Ok(())
    }
}

/// Result of one descent trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: SphericalParams,
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub fallback_steps: usize,
}

impl Trajectory {
    pub fn initial_cost(&self) -> f64 {
        self.history[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.history.last().expect("history holds the initial cost")
    }
}

/// Gradient descent with Armijo backtracking from `start`.
///
/// The trial step after an accepted step is doubled so the step length
/// tracks the local curvature. See [`BeampatternObjective::solver_gradient`]
/// for the treatment of the arcsin singularity.
pub fn descend(objective: &BeampatternObjective, start: SphericalParams, config: &OptimizerConfig) -> Result<Trajectory> {
    let m = objective.antennas();
    let mut x = start.to_vec();
    let mut params = start;
    let mut f = objective.cost(&params)?;
    let mut history = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    let mut fallback_steps = 0;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let (grad, fallback) = objective.solver_gradient(&params)?;
        fallback_steps += usize::from(fallback);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2.sqrt() < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut trial = x.clone();
        if config.line_search {
            let mut t = step;
            let accepted = loop {
                for (dst, (xi, gi)) in trial.iter_mut().zip(x.iter().zip(&grad)) {
                    *dst = xi - t * gi;
                }
                let candidate = SphericalParams::from_slice(m, &trial)?;
                let ft = objective.cost(&candidate)?;
                if ft <= f - config.armijo_slope * t * g2 {
                    break Some((candidate, ft));
                }
                t *= config.contraction;
                if t < 1e-18 {
                    break None;
                }
            };
            match accepted {
                Some((candidate, ft)) => {
                    params = candidate;
                    f = ft;
                    x = trial;
                    step = (2.0 * t).min(1e6);
                }
                // no descent along a non-zero gradient: numerically stationary
                None => break,
            }
        } else {
            for (dst, (xi, gi)) in trial.iter_mut().zip(x.iter().zip(&grad)) {
                *dst = xi - config.fixed_step * gi;
            }
            params = SphericalParams::from_slice(m, &trial)?;
            f = objective.cost(&params)?;
            x = trial;
        }
        history.push(f);
    }

    Ok(Trajectory {
        params,
        history,
        converged,
        iterations,
        fallback_steps,
    })
}

/// Output of [`optimize`] / [`optimize_objective`].
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub params: SphericalParams,
    pub gaussian: GaussianCovariance,
    pub covariance: ComplexCovariance,
    /// Cost trace of the winning restart, starting at its initial cost.
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final cost of every restart, in restart order.
    pub restart_costs: Vec<f64>,
}

impl OptimizeOutcome {
    pub fn cost(&self) -> f64 {
        *self.history.last().expect("non-empty history")
    }

    pub fn initial_cost(&self) -> f64 {
        self.history[0]
    }
}

/// Minimize `objective` from `config.restarts` random starts and keep the best.
pub fn optimize_objective(objective: &BeampatternObjective, config: &OptimizerConfig, rng_seed: u64) -> Result<OptimizeOutcome> {
    config.validate()?;
    let m = objective.antennas();
    if m < 2 {
        return Err(Error::InvalidParameter("optimization needs at least two antennas".into()));
    }
    let runs: Vec<Trajectory> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::rng(seed::derive(rng_seed, &[seed::stream::RESTART, r as u64]));
            let mut start = SphericalParams::random(m, &mut rng);
            if let Some(alpha) = objective.fixed_alpha {
                start = start.with_alpha(alpha);
            }
            descend(objective, start, config)
        })
        .collect::<Result<_>>()?;

    let restart_costs: Vec<f64> = runs.iter().map(Trajectory::final_cost).collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.final_cost().total_cmp(&b.final_cost()).then(i.cmp(j)))
        .map(|(_, t)| t)
        .expect("at least one restart");

    let (gaussian, covariance) = synthesize(&best.params)?;
    Ok(OptimizeOutcome {
        params: best.params,
        gaussian,
        covariance,
        history: best.history,
        converged: best.converged,
        iterations: best.iterations,
        restart_costs,
    })
}

/// Design a QPSK covariance whose beampattern matches `desired`.
pub fn optimize(desired: &DesiredBeampattern, antennas: usize, config: &OptimizerConfig, rng_seed: u64) -> Result<OptimizeOutcome> {
    optimize_objective(&BeampatternObjective::new(desired, antennas), config, rng_seed)
}

/// Beampattern of a covariance on `grid`.
pub fn covariance_beampattern(r: &ComplexCovariance, grid: &AngleGrid) -> Vec<f64> {
    array_model::beampattern(r.matrix(), grid).expect("validated covariance is Hermitian")
}

/// Fraction of the summed grid power falling inside the lobes of `desired`.
pub fn in_lobe_fraction(pattern: &[f64], desired: &DesiredBeampattern) -> f64 {
    let total: f64 = pattern.iter().sum();
    let inside: f64 = pattern
        .iter()
        .zip(desired.in_lobe_mask())
        .filter(|(_, m)| *m)
        .map(|(p, _)| p)
        .sum();
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}
