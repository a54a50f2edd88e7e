//! Uniform linear array geometry, steering vectors and beampattern matching.
//!
//! The array has half-wavelength element spacing, so the steering vector
//! toward angle `theta` has entries `exp(-j * m * pi * sin(theta))` for
//! `m = 0..M`. The transmit beampattern of a waveform with covariance `R` is
//! `P(theta) = a(theta)^H R a(theta)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Hermitian tolerance on covariance matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semi-definite.
pub const PSD_TOL: f64 = 1e-8;
/// Tolerance on the unit-diagonal (constant-envelope) constraint.
pub const DIAGONAL_TOL: f64 = 1e-10;

/// Ordered scan angles in degrees over which beampatterns are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    angles_deg: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles_deg: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::InvalidGrid("grid must contain at least one angle".into()));
        }
        if let Some(bad) = angles_deg
            .iter()
            .find(|a| !a.is_finite() || **a < -90.0 || **a > 90.0)
        {
            return Err(Error::InvalidGrid(format!("angle {bad} outside [-90, 90]")));
        }
        if angles_deg.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("angles must be strictly increasing".into()));
        }
        Ok(Self { angles_deg })
    }

    /// Evenly spaced grid from -90 to +90 degrees inclusive with
    /// `ceil(180 / step) + 1` points; the last point is clamped to +90.
    pub fn uniform(step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0 && step_deg <= 180.0) {
            return Err(Error::InvalidGrid(format!("step {step_deg} must lie in (0, 180]")));
        }
        let intervals = (180.0 / step_deg - 1e-9).ceil() as usize;
        let angles = (0..=intervals)
            .map(|i| (-90.0 + i as f64 * step_deg).min(90.0))
            .collect();
        Self::new(angles)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Non-negative desired beampattern sampled on an [`AngleGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredBeampattern {
    grid: AngleGrid,
    values: Vec<f64>,
}

impl DesiredBeampattern {
    pub fn new(grid: AngleGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} pattern values for {} grid angles",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "desired beampattern value {bad} must be finite and non-negative"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Pattern equal to `height` inside any of the closed `[start, stop]`
    /// intervals (degrees) and zero elsewhere.
    pub fn from_lobes(grid: AngleGrid, lobes: &[(f64, f64)], height: f64) -> Result<Self> {
        const EDGE: f64 = 1e-9;
        let values = grid
            .angles_deg()
            .iter()
            .map(|&theta| {
                let inside = lobes
                    .iter()
                    .any(|&(lo, hi)| theta >= lo - EDGE && theta <= hi + EDGE);
                if inside {
                    height
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid points where the desired pattern is positive.
    pub fn in_lobe_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| *v > 0.0).collect()
    }
}

/// Validated waveform covariance: Hermitian, positive semi-definite, unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexCovariance {
    entries: CMatrix,
}

impl ComplexCovariance {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = linalg::hermitian_deviation(&entries);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        for i in 0..entries.nrows() {
            let d = entries[(i, i)];
            if (d - Complex64::new(1.0, 0.0)).norm() > DIAGONAL_TOL {
                return Err(Error::NotUnitDiagonal { index: i, value: d.re });
            }
        }
        let lambda = linalg::min_eigenvalue(&entries);
        if lambda < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite(lambda));
        }
        Ok(Self { entries })
    }

    /// The arcsin construction guarantees the invariants, so skip the eigen check.
    pub(crate) fn from_construction(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }
}

/// Steering vector of an `antennas`-element half-wavelength ULA.
pub fn steering_vector(theta_deg: f64, antennas: usize) -> DVector<Complex64> {
    let phase = -PI * theta_deg.to_radians().sin();
    DVector::from_fn(antennas, |m, _| {
        if m == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, phase * m as f64)
        }
    })
}

/// Quadratic form `a^H R a` of a Hermitian matrix, with round-off cleanup.
pub(crate) fn quadratic_power(r: &CMatrix, a: &DVector<Complex64>) -> f64 {
    let p = a.dotc(&(r * a)).re;
    if (-PSD_TOL..0.0).contains(&p) {
        0.0
    } else {
        p
    }
}

/// Transmit power `a^H R a` toward `theta_deg`. Any Hermitian matrix is
/// accepted so projected (non-unit-diagonal) covariances can be evaluated.
pub fn beampattern_power(r: &CMatrix, theta_deg: f64) -> Result<f64> {
    if r.nrows() != r.ncols() {
        return Err(Error::Dimension(format!("{}x{} covariance", r.nrows(), r.ncols())));
    }
    let dev = linalg::hermitian_deviation(r);
    if dev > HERMITIAN_TOL * (1.0 + r.iter().map(|z| z.norm()).fold(0.0, f64::max)) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(quadratic_power(r, &steering_vector(theta_deg, r.nrows())))
}

/// Beampattern of `r` over every grid angle.
pub fn beampattern(r: &CMatrix, grid: &AngleGrid) -> Result<Vec<f64>> {
    grid.angles_deg()
        .iter()
        .map(|&theta| beampattern_power(r, theta))
        .collect()
}

/// Mean squared deviation between the beampattern of `r` and `alpha * phi`.
pub fn cost_j(r: &CMatrix, desired: &DesiredBeampattern, alpha: f64) -> Result<f64> {
    let pattern = beampattern(r, desired.grid())?;
    Ok(pattern_cost(&pattern, desired.values(), alpha))
}

/// Matching cost of an already evaluated beampattern.
pub fn pattern_cost(pattern: &[f64], desired: &[f64], alpha: f64) -> f64 {
    debug_assert_eq!(pattern.len(), desired.len());
    let sum: f64 = pattern
        .iter()
        .zip(desired)
        .map(|(p, phi)| (p - alpha * phi).powi(2))
        .sum();
    sum / pattern.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_vector_examples() {
        let a = steering_vector(0.0, 4);
        for z in a.iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        let a = steering_vector(90.0, 2);
        assert_eq!(a[0], c(1.0, 0.0));
        assert_abs_diff_eq!(a[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1].im, 0.0, epsilon = 1e-12);

        let a = steering_vector(30.0, 3);
        let expected = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0)];
        for (z, e) in a.iter().zip(expected) {
            assert_abs_diff_eq!((z - e).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_and_all_ones_powers() {
        let m = 5;
        let eye = CMatrix::identity(m, m);
        for theta in [-73.0, 0.0, 12.5, 90.0] {
            assert_abs_diff_eq!(beampattern_power(&eye, theta).unwrap(), m as f64, epsilon = 1e-12);
        }
        let ones = CMatrix::from_element(m, m, c(1.0, 0.0));
        assert_abs_diff_eq!(beampattern_power(&ones, 0.0).unwrap(), (m * m) as f64, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut r = CMatrix::identity(2, 2);
        r[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(beampattern_power(&r, 0.0), Err(Error::NotHermitian(_))));
        assert!(ComplexCovariance::new(r).is_err());
    }

    #[test]
    fn covariance_validation() {
        assert!(ComplexCovariance::new(CMatrix::identity(3, 3)).is_ok());
        let mut off = CMatrix::identity(2, 2);
        off[(1, 1)] = c(2.0, 0.0);
        assert!(matches!(
            ComplexCovariance::new(off),
            Err(Error::NotUnitDiagonal { index: 1, .. })
        ));
        // unit diagonal but indefinite
        let mut indef = CMatrix::identity(2, 2);
        indef[(0, 1)] = c(2.0, 0.0);
        indef[(1, 0)] = c(2.0, 0.0);
        assert!(matches!(
            ComplexCovariance::new(indef),
            Err(Error::NotPositiveSemidefinite(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let m = 4;
        let grid = AngleGrid::uniform(1.0).unwrap();
        let eye = CMatrix::identity(m, m);
        let flat = DesiredBeampattern::new(grid.clone(), vec![m as f64; grid.len()]).unwrap();
        assert_abs_diff_eq!(cost_j(&eye, &flat, 1.0).unwrap(), 0.0, epsilon = 1e-20);
        let zero = DesiredBeampattern::new(grid.clone(), vec![0.0; grid.len()]).unwrap();
        assert_abs_diff_eq!(cost_j(&eye, &zero, 1.0).unwrap(), (m * m) as f64, epsilon = 1e-10);
    }

    #[test]
    fn uniform_grid_lengths() {
        let g = AngleGrid::uniform(1.0).unwrap();
        assert_eq!(g.len(), 181);
        assert_eq!(g.angles_deg()[0], -90.0);
        assert_eq!(g.angles_deg()[180], 90.0);
        let g = AngleGrid::uniform(7.0).unwrap();
        assert_eq!(g.len(), (180.0f64 / 7.0).ceil() as usize + 1);
        assert_eq!(*g.angles_deg().last().unwrap(), 90.0);
        assert!(AngleGrid::uniform(0.0).is_err());
        assert!(AngleGrid::new(vec![]).is_err());
        assert!(AngleGrid::new(vec![0.0, 0.0]).is_err());
        assert!(AngleGrid::new(vec![-91.0]).is_err());
    }

    #[test]
    fn lobes_pattern() {
        let grid = AngleGrid::uniform(1.0).unwrap();
        let d = DesiredBeampattern::from_lobes(grid, &[(-60.0, -40.0), (40.0, 60.0)], 10.0).unwrap();
        assert_eq!(d.values().iter().filter(|v| **v > 0.0).count(), 42);
        assert!(DesiredBeampattern::new(AngleGrid::uniform(90.0).unwrap(), vec![1.0, -1.0, 0.0]).is_err());
    }

    fn random_hermitian(m: usize, vals: &[f64]) -> CMatrix {
        let b = CMatrix::from_fn(m, m, |i, j| c(vals[(i * m + j) % vals.len()], vals[(i + 3 * j) % vals.len()]));
        &b * b.adjoint()
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(theta in -90.0f64..=90.0, m in 1usize..24) {
            for z in steering_vector(theta, m).iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn power_invariant_under_hermitian_symmetrization(
            vals in proptest::collection::vec(-1.0f64..1.0, 16),
            theta in -90.0f64..90.0,
        ) {
            let r = random_hermitian(4, &vals);
            let sym = linalg::hermitian_part(&r);
            let p1 = beampattern_power(&r, theta).unwrap();
            let p2 = beampattern_power(&sym, theta).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-10 * (1.0 + p1.abs()));
        }

        #[test]
        fn cost_permutation_and_scale_invariance(
            vals in proptest::collection::vec(-1.0f64..1.0, 16),
            phi in proptest::collection::vec(0.0f64..5.0, 7),
            s in 0.1f64..10.0,
            alpha in 0.1f64..3.0,
            rot in 0usize..7,
        ) {
            let r = random_hermitian(4, &vals);
            let angles: Vec<f64> = (0..7).map(|i| -80.0 + 25.0 * i as f64).collect();
            let pattern: Vec<f64> = angles.iter().map(|t| beampattern_power(&r, *t).unwrap()).collect();
            let base = pattern_cost(&pattern, &phi, alpha);

            let mut pp = pattern.clone();
            let mut pphi = phi.clone();
            pp.rotate_left(rot);
            pphi.rotate_left(rot);
            prop_assert!((pattern_cost(&pp, &pphi, alpha) - base).abs() < 1e-9 * (1.0 + base));

            let scaled: Vec<f64> = phi.iter().map(|v| v * s).collect();
            prop_assert!((pattern_cost(&pattern, &scaled, alpha / s) - base).abs() < 1e-9 * (1.0 + base));
        }
    }
}
