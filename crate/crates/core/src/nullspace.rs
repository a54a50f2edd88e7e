//! Interference channels and null-space projectors.
//!
//! For a channel `H` (`n_bs x M`) with SVD `H = U S V^H`, the projector
//! `P = V S' V^H` keeps the right singular vectors whose singular value is
//! numerically zero. `P` is an orthogonal projector onto `null(H)`, so a
//! waveform `Z P^H` radiates nothing toward the base station.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::seed;
use crate::waveform_gen::WaveformMatrix;

/// Channel between the radar array and one base station.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceChannel {
    entries: CMatrix,
    bs_id: usize,
}

impl InterferenceChannel {
    pub fn new(bs_id: usize, entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Dimension("channel must have positive dimensions".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("channel entries must be finite".into()));
        }
        Ok(Self { entries, bs_id })
    }

    /// All-zero channel (nothing to protect).
    pub fn zero(bs_id: usize, n_bs: usize, antennas: usize) -> Self {
        Self {
            entries: CMatrix::zeros(n_bs, antennas),
            bs_id,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn bs_id(&self) -> usize {
        self.bs_id
    }

    pub fn bs_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.entries.ncols()
    }

    /// Largest `|H w| / (|H|_F |w|)` over the transmitted snapshots `w` of a
    /// waveform (row `n` of `Z` is the snapshot `w^H`). Zero when either
    /// factor vanishes.
    pub fn leakage(&self, waveform: &WaveformMatrix) -> f64 {
        let h_norm = linalg::frobenius(&self.entries);
        if h_norm == 0.0 {
            return 0.0;
        }
        // column n of H Z^H is H w_n
        let received = &self.entries * waveform.samples().adjoint();
        (0..received.ncols())
            .map(|n| {
                let w_norm = waveform.samples().row(n).norm();
                if w_norm == 0.0 {
                    0.0
                } else {
                    received.column(n).norm() / (h_norm * w_norm)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// I.i.d. circularly symmetric unit-variance complex Gaussian channel.
pub fn generate_channel<R: Rng + ?Sized>(bs_id: usize, n_bs: usize, antennas: usize, rng: &mut R) -> Result<InterferenceChannel> {
    if n_bs == 0 || antennas == 0 {
        return Err(Error::InvalidParameter("channel dimensions must be positive".into()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut entries = CMatrix::zeros(n_bs, antennas);
    for r in 0..n_bs {
        for c in 0..antennas {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            entries[(r, c)] = Complex64::new(re * scale, im * scale);
        }
    }
    InterferenceChannel::new(bs_id, entries)
}

/// [`generate_channel`] from a seed.
pub fn generate_channel_seeded(bs_id: usize, n_bs: usize, antennas: usize, rng_seed: u64) -> Result<InterferenceChannel> {
    generate_channel(bs_id, n_bs, antennas, &mut seed::rng(rng_seed))
}

/// Orthogonal projector onto the null space of a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    entries: CMatrix,
    rank: usize,
}

impl ProjectionMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    /// Dimension of the null space.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn identity(antennas: usize) -> Self {
        Self {
            entries: CMatrix::identity(antennas, antennas),
            rank: antennas,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSvd {
    /// Descending singular values; zeros appended up to `M` when `n_bs < M`.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns, ordered like `singular_values`.
    pub right_vectors: CMatrix,
    /// Number of singular values above the numerical-rank threshold.
    pub numerical_rank: usize,
}

/// SVD with a full set of `M` right singular vectors. Short channels are
/// padded with zero rows so the decomposition is square.
pub fn channel_svd(h: &CMatrix) -> ChannelSvd {
    let (rows, m) = h.shape();
    let padded = if rows < m {
        let mut p = CMatrix::zeros(m, m);
        p.rows_mut(0, rows).copy_from(h);
        p
    } else {
        h.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let right_vectors = CMatrix::from_fn(m, m, |r, c| v_t[(order[c], r)].conj());

    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = rows.max(m) as f64 * f64::EPSILON * sigma_max;
    let numerical_rank = singular_values
        .iter()
        .filter(|&&s| sigma_max > 0.0 && s > threshold)
        .count();
    ChannelSvd {
        singular_values,
        right_vectors,
        numerical_rank,
    }
}

/// Projector `V diag(0, .., 0, 1, .., 1) V^H` keeping the right singular
/// vectors past the numerical rank.
pub fn nullspace_projector(channel: &InterferenceChannel) -> ProjectionMatrix {
    let m = channel.antennas();
    let svd = channel_svd(channel.matrix());
    let q = svd.numerical_rank;
    let basis = svd.right_vectors.columns(q, m - q);
    let mut entries = basis * basis.adjoint();
    // exact Hermitian symmetry
    for i in 0..m {
        entries[(i, i)].im = 0.0;
        for j in 0..i {
            entries[(i, j)] = entries[(j, i)].conj();
        }
    }
    ProjectionMatrix { entries, rank: m - q }
}

/// `Z P^H`; every snapshot of the result lies in the range of `P`.
pub fn project_waveform(waveform: &WaveformMatrix, projector: &ProjectionMatrix) -> Result<WaveformMatrix> {
    if waveform.antennas() != projector.entries.nrows() {
        return Err(Error::Dimension(format!(
            "waveform has {} antennas, projector {}",
            waveform.antennas(),
            projector.entries.nrows()
        )));
    }
    Ok(WaveformMatrix::projected(waveform.samples() * projector.entries.adjoint()))
}

/// Write channels as `bs_id,row,col,re,im` records.
pub fn write_channels_csv(path: &Path, channels: &[InterferenceChannel]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer
        .write_record(["bs_id", "row", "col", "re", "im"])
        .map_err(csv_err)?;
    for ch in channels {
        for r in 0..ch.bs_antennas() {
            for c in 0..ch.antennas() {
                let z = ch.entries[(r, c)];
                writer.serialize((ch.bs_id, r, c, z.re, z.im)).map_err(csv_err)?;
            }
        }
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read channels written by [`write_channels_csv`], ordered by first appearance.
pub fn read_channels_csv(path: &Path) -> Result<Vec<InterferenceChannel>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    type Entry = (usize, usize, f64, f64);
    let mut groups: Vec<(usize, Vec<Entry>)> = Vec::new();
    for row in reader.deserialize::<(usize, usize, usize, f64, f64)>() {
        let (bs, r, c, re, im) = row.map_err(csv_err)?;
        match groups.iter_mut().find(|(id, _)| *id == bs) {
            Some((_, recs)) => recs.push((r, c, re, im)),
            None => groups.push((bs, vec![(r, c, re, im)])),
        }
    }
    groups
        .into_iter()
        .map(|(bs, recs)| {
            let rows = recs.iter().map(|r| r.0 + 1).max().unwrap_or(0);
            let cols = recs.iter().map(|r| r.1 + 1).max().unwrap_or(0);
            if recs.len() != rows * cols {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    message: format!("base station {bs}: {} records for {rows}x{cols}", recs.len()),
                });
            }
            let mut m = DMatrix::zeros(rows, cols);
            for (r, c, re, im) in recs {
                m[(r, c)] = Complex64::new(re, im);
            }
            InterferenceChannel::new(bs, m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform_gen::{generate_qpsk_waveform, WaveformKind};
    use crate::covariance_synthesis::{synthesize, SphericalParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn channel_moments() {
        let mut rng = seed::rng(5);
        let draws = 1_000_000;
        let mut power = 0.0;
        for _ in 0..draws {
            power += generate_channel(0, 1, 1, &mut rng).unwrap().matrix()[(0, 0)].norm_sqr();
        }
        assert_abs_diff_eq!(power / draws as f64, 1.0, epsilon = 0.01);
    }

    #[test]
    fn channel_entries_uncorrelated() {
        let mut rng = seed::rng(6);
        let draws = 100_000;
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..draws {
            let h = generate_channel(0, 2, 2, &mut rng).unwrap();
            cross += h.matrix()[(0, 0)] * h.matrix()[(1, 1)].conj();
        }
        assert!((cross / draws as f64).norm() < 0.02);
    }

    #[test]
    fn seeded_channels_are_reproducible() {
        let a = generate_channel_seeded(1, 3, 10, 44).unwrap();
        let b = generate_channel_seeded(1, 3, 10, 44).unwrap();
        assert_eq!(a, b);
        assert!(generate_channel_seeded(1, 0, 10, 44).is_err());
    }

    #[test]
    fn zero_channel_projects_onto_everything() {
        let p = nullspace_projector(&InterferenceChannel::zero(0, 2, 4));
        assert_eq!(p.rank(), 4);
        assert_abs_diff_eq!(linalg::frobenius(&(p.matrix() - CMatrix::identity(4, 4))), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_rank_square_channel_leaves_nothing() {
        let h = generate_channel_seeded(0, 4, 4, 9).unwrap();
        let p = nullspace_projector(&h);
        assert_eq!(p.rank(), 0);
        assert_abs_diff_eq!(linalg::frobenius(p.matrix()), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coordinate_row_null_space() {
        // null space of [1, 0, 0] is span(e1, e2), so P = diag(0, 1, 1)
        let h = InterferenceChannel::new(0, CMatrix::from_row_slice(1, 3, &[c(1.0), c(0.0), c(0.0)])).unwrap();
        let p = nullspace_projector(&h);
        assert_eq!(p.rank(), 2);
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0), c(1.0), c(1.0)]));
        assert_abs_diff_eq!(linalg::frobenius(&(p.matrix() - expected)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_values_descend() {
        let h = generate_channel_seeded(0, 3, 6, 10).unwrap();
        let svd = channel_svd(h.matrix());
        assert_eq!(svd.singular_values.len(), 6);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(svd.numerical_rank, 3);
    }

    #[test]
    fn projection_extremes_and_zero_interference() {
        let p = SphericalParams::random(10, &mut seed::rng(1));
        let (rg, _) = synthesize(&p).unwrap();
        let z = generate_qpsk_waveform(&rg, 100, 2).unwrap();

        let same = project_waveform(&z, &ProjectionMatrix::identity(10)).unwrap();
        assert_eq!(same.samples(), z.samples());
        assert_eq!(same.kind(), WaveformKind::Projected);

        let full = generate_channel_seeded(0, 10, 10, 3).unwrap();
        let gone = project_waveform(&z, &nullspace_projector(&full)).unwrap();
        assert!(linalg::frobenius(gone.samples()) < 1e-10);

        let h = generate_channel_seeded(0, 3, 10, 4).unwrap();
        let zp = project_waveform(&z, &nullspace_projector(&h)).unwrap();
        let leak = linalg::frobenius(&(zp.samples() * h.matrix().adjoint()));
        assert!(leak < 1e-8 * linalg::frobenius(z.samples()) * linalg::frobenius(h.matrix()));
        assert!(h.leakage(&zp) < 1e-8);

        let bad = generate_channel_seeded(0, 3, 6, 4).unwrap();
        assert!(project_waveform(&z, &nullspace_projector(&bad)).is_err());
    }

    #[test]
    fn channel_csv_round_trip() {
        let chans = vec![
            generate_channel_seeded(0, 3, 5, 1).unwrap(),
            generate_channel_seeded(4, 2, 5, 2).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        write_channels_csv(&path, &chans).unwrap();
        assert_eq!(read_channels_csv(&path).unwrap(), chans);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projector_properties(n_bs in 1usize..12, m in 1usize..12, s in any::<u64>()) {
            let h = generate_channel_seeded(0, n_bs, m, s).unwrap();
            let p = nullspace_projector(&h);
            let pm = p.matrix();
            prop_assert!(linalg::frobenius(&(pm - pm.adjoint())) < 1e-10);
            prop_assert!(linalg::frobenius(&(pm * pm - pm)) < 1e-10);
            prop_assert!(linalg::frobenius(&(h.matrix() * pm.adjoint())) < 1e-10 * linalg::frobenius(h.matrix()));
            prop_assert_eq!(p.rank(), m - n_bs.min(m));
            let eig = linalg::eigenvalues(pm);
            let ones = eig.iter().filter(|v| (**v - 1.0).abs() < 1e-8).count();
            let zeros = eig.iter().filter(|v| v.abs() < 1e-8).count();
            prop_assert_eq!(ones, p.rank());
            prop_assert_eq!(ones + zeros, m);

            // non-expansive and idempotent on a random waveform
            let z = WaveformMatrix::new(CMatrix::from_fn(7, m, |r, c| Complex64::new((r * 3 + c) as f64 % 5.0 - 2.0, (r + c) as f64 % 3.0)), crate::waveform_gen::WaveformKind::Gaussian).unwrap();
            let once = project_waveform(&z, &p).unwrap();
            let twice = project_waveform(&once, &p).unwrap();
            prop_assert!(linalg::frobenius(once.samples()) <= linalg::frobenius(z.samples()) + 1e-12);
            prop_assert!(linalg::frobenius(&(twice.samples() - once.samples())) < 1e-10 * (1.0 + linalg::frobenius(z.samples())));
        }
    }
}
