//! Sample-cloud quality metrics: exact Fréchet distance between Gaussian
//! fits, unbiased Gaussian-kernel MMD², and per-dimension moment gaps.
//!
//! The matrix square root inside the Fréchet distance uses a cyclic Jacobi
//! eigendecomposition (plenty for the 2–16-dimensional clouds this crate
//! works with) with negative eigenvalues clamped to zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::SampleBatch;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Pairwise-kernel evaluations are capped at this many rows per side; larger
/// batches are strided down deterministically.
pub const MMD_SUBSAMPLE_CAP: usize = 2000;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, V)` with eigenvectors in the columns of `V`, so
/// `M = V·diag(λ)·Vᵀ`.
pub fn sym_eigen(m: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let d = m.n_rows();
    if m.rank() != 2 || m.n_cols() != d || d == 0 {
        return Err(CoreError::shape(format!(
            "sym_eigen: need a square matrix, got {:?}",
            m.shape()
        )));
    }
    let scale = m.max_abs();
    for i in 0..d {
        for j in (i + 1)..d {
            if (m.at(i, j) - m.at(j, i)).abs() > 1e-9 * (1.0 + scale) {
                return Err(CoreError::domain(format!(
                    "sym_eigen: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut a = m.clone();
    let mut v = Tensor::zeros(vec![d, d]);
    for i in 0..d {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a.at(i, j) * a.at(i, j);
            }
        }
        if libm::sqrt(off) < 1e-14 * (1.0 + scale) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.at(p, q);
                if apq == 0.0 {
                    continue;
                }
                let tau = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + libm::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + libm::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                let (app, aqq) = (a.at(p, p), a.at(q, q));
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..d {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = a.at(i, p);
                    let aiq = a.at(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(p, i, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                    a.set(q, i, s * aip + c * aiq);
                }
                for i in 0..d {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let eig = (0..d).map(|i| a.at(i, i)).collect();
    Ok((eig, v))
}

/// PSD square root via eigendecomposition; eigenvalues below zero (numerical
/// noise in sample covariances) are clamped to zero.
pub fn psd_sqrt(m: &Tensor) -> Result<Tensor> {
    let (eig, v) = sym_eigen(m)?;
    let roots: Vec<f64> = eig.iter().map(|&l| libm::sqrt(l.max(0.0))).collect();
    // V · diag(roots) · Vᵀ
    let scaled = scale_columns(&v, &roots);
    scaled.matmul_nt(&v)
}

fn scale_columns(m: &Tensor, factors: &[f64]) -> Tensor {
    let mut out = m.clone();
    let d = m.n_cols();
    for i in 0..m.n_rows() {
        for j in 0..d {
            out.set(i, j, m.at(i, j) * factors[j]);
        }
    }
    out
}

/// Sample mean and unbiased covariance of a `[n, d]` cloud.
pub fn mean_and_cov(points: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = points.n_rows();
    let d = points.n_cols();
    if points.rank() != 2 || n < 2 {
        return Err(CoreError::shape(format!(
            "mean_and_cov: need at least 2 rows, got shape {:?}",
            points.shape()
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += points.at(i, j);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = Tensor::zeros(vec![d, d]);
    for i in 0..n {
        for j in 0..d {
            let dj = points.at(i, j) - mean[j];
            for k in j..d {
                let dk = points.at(i, k) - mean[k];
                let c = cov.at(j, k) + dj * dk;
                cov.set(j, k, c);
                if k != j {
                    cov.set(k, j, c);
                }
            }
        }
    }
    let denom = (n - 1) as f64;
    for v in cov.data_mut().iter_mut() {
        *v /= denom;
    }
    Ok((mean, cov))
}

fn trace(m: &Tensor) -> f64 {
    (0..m.n_rows()).map(|i| m.at(i, i)).sum()
}

fn check_cloud_pair(a: &Tensor, b: &Tensor, min_n: usize, op: &str) -> Result<()> {
    if a.rank() != 2 || b.rank() != 2 || a.n_cols() != b.n_cols() {
        return Err(CoreError::shape(format!(
            "{op}: clouds must share a dimension, got {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.n_rows() < min_n || b.n_rows() < min_n {
        return Err(CoreError::domain(format!(
            "{op}: need at least {min_n} points per cloud for dimension {}, got {} / {}",
            a.n_cols(),
            a.n_rows(),
            b.n_rows()
        )));
    }
    Ok(())
}

/// Fréchet distance between the Gaussian fits of two point clouds:
/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`.
pub fn frechet_from_points(a: &Tensor, b: &Tensor) -> Result<f64> {
    check_cloud_pair(a, b, a.n_cols().max(b.n_cols()) + 1, "frechet_distance")?;
    let (mu_a, cov_a) = mean_and_cov(a)?;
    let (mu_b, cov_b) = mean_and_cov(b)?;
    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sa = psd_sqrt(&cov_a)?;
    let inner = sa.matmul(&cov_b)?.matmul(&sa)?;
    let cross = psd_sqrt(&inner)?;
    let fd = mean_term + trace(&cov_a) + trace(&cov_b) - 2.0 * trace(&cross);
    if !fd.is_finite() {
        return Err(CoreError::non_finite("frechet_distance"));
    }
    // Exact value is >= 0; tiny negatives are eigendecomposition round-off.
    Ok(fd.max(0.0))
}

pub fn frechet_distance(a: &SampleBatch, b: &SampleBatch) -> Result<f64> {
    frechet_from_points(&a.points, &b.points)
}

/// Deterministic stride subsample of at most `cap` rows.
fn stride_subsample(points: &Tensor, cap: usize) -> Tensor {
    let n = points.n_rows();
    if n <= cap {
        return points.clone();
    }
    let rows: Vec<Vec<f64>> = (0..cap)
        .map(|i| points.row(i * n / cap).to_vec())
        .collect();
    Tensor::from_rows(&rows).expect("subsample rows are rectangular")
}

fn sq_dist(a: &Tensor, i: usize, b: &Tensor, j: usize) -> f64 {
    a.row(i)
        .iter()
        .zip(b.row(j))
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Median of the pooled pairwise Euclidean distances (the median heuristic).
fn median_bandwidth(a: &Tensor, b: &Tensor) -> f64 {
    let mut dists = Vec::new();
    let pool: Vec<(&Tensor, usize)> = (0..a.n_rows())
        .map(|i| (a, i))
        .chain((0..b.n_rows()).map(|i| (b, i)))
        .collect();
    for (idx, &(ta, i)) in pool.iter().enumerate() {
        for &(tb, j) in pool.iter().skip(idx + 1) {
            dists.push(libm::sqrt(sq_dist(ta, i, tb, j)));
        }
    }
    dists.sort_by(|x, y| x.partial_cmp(y).expect("distances are finite"));
    let mid = dists.len() / 2;
    let med = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if med > 0.0 {
        med
    } else {
        1.0 // all points identical; any bandwidth gives MMD² = 0
    }
}

/// Unbiased Gaussian-kernel MMD² with `k(x, y) = exp(−‖x−y‖²/(2h²))`.
/// `bandwidth = None` uses the median heuristic on the pooled (subsampled)
/// clouds. Returns `(mmd², h)`.
pub fn mmd(a: &SampleBatch, b: &SampleBatch, bandwidth: Option<f64>) -> Result<(f64, f64)> {
    mmd_from_points(&a.points, &b.points, bandwidth)
}

pub fn mmd_from_points(a: &Tensor, b: &Tensor, bandwidth: Option<f64>) -> Result<(f64, f64)> {
    check_cloud_pair(a, b, 2, "mmd")?;
    if let Some(h) = bandwidth {
        if !(h > 0.0) {
            return Err(CoreError::config(format!(
                "mmd: bandwidth must be positive, got {h}"
            )));
        }
    }
    let xs = stride_subsample(a, MMD_SUBSAMPLE_CAP);
    let ys = stride_subsample(b, MMD_SUBSAMPLE_CAP);
    let h = bandwidth.unwrap_or_else(|| median_bandwidth(&xs, &ys));
    let gamma = 1.0 / (2.0 * h * h);
    let kern = |d2: f64| libm::exp(-gamma * d2);
    let (m, n) = (xs.n_rows(), ys.n_rows());

    let mut kxx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kxx += kern(sq_dist(&xs, i, &xs, j));
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kyy += kern(sq_dist(&ys, i, &ys, j));
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..m {
        for j in 0..n {
            kxy += kern(sq_dist(&xs, i, &ys, j));
        }
    }
    let mmd2 = kxx / (m * (m - 1)) as f64 + kyy / (n * (n - 1)) as f64
        - 2.0 * kxy / (m * n) as f64;
    Ok((mmd2, h))
}

/// Per-dimension gaps of the first two sample moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// |μ_a − μ_b| per dimension.
    pub mean_gap: Vec<f64>,
    /// |Σ_a − Σ_b| entry-wise, `[d, d]`.
    pub cov_gap: Tensor,
}

pub fn moment_report(a: &SampleBatch, b: &SampleBatch) -> Result<MomentReport> {
    check_cloud_pair(&a.points, &b.points, 2, "moment_report")?;
    let (mu_a, cov_a) = mean_and_cov(&a.points)?;
    let (mu_b, cov_b) = mean_and_cov(&b.points)?;
    let mean_gap = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(x, y)| (x - y).abs())
        .collect();
    let mut cov_gap = cov_a.sub(&cov_b)?;
    for v in cov_gap.data_mut().iter_mut() {
        *v = v.abs();
    }
    Ok(MomentReport { mean_gap, cov_gap })
}

/// Everything at once, in the shape the CLI serializes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub frechet_distance: f64,
    pub mmd2: f64,
    pub bandwidth: f64,
    pub mean_gap: Vec<f64>,
    pub cov_gap: Vec<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub dims: usize,
}

pub fn metric_report(
    a: &SampleBatch,
    b: &SampleBatch,
    bandwidth: Option<f64>,
) -> Result<MetricReport> {
    let fd = frechet_distance(a, b)?;
    let (mmd2, h) = mmd(a, b, bandwidth)?;
    let moments = moment_report(a, b)?;
    Ok(MetricReport {
        frechet_distance: fd,
        mmd2,
        bandwidth: h,
        mean_gap: moments.mean_gap,
        cov_gap: moments.cov_gap.data().to_vec(),
        n_a: a.n(),
        n_b: b.n(),
        dims: a.dim(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::BatchMeta;
    use crate::rng::Prng;

    fn batch(points: Tensor) -> SampleBatch {
        let n = points.n_rows();
        SampleBatch::new(points, vec![None; n], BatchMeta::default()).unwrap()
    }

    fn random_symmetric(d: usize, seed: u64) -> Tensor {
        let mut rng = Prng::new(seed);
        let mut m = Tensor::zeros(vec![d, d]);
        for i in 0..d {
            for j in i..d {
                let v = rng.normal();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn jacobi_recovers_known_2x2_spectrum() {
        let m = Tensor::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (mut eig, v) = sym_eigen(&m).unwrap();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
        // columns orthonormal
        let vtv = v.matmul_tn(&v).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vtv.at(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_reconstructs_random_matrices() {
        for d in [1, 2, 3, 5, 8] {
            let m = random_symmetric(d, 100 + d as u64);
            let (eig, v) = sym_eigen(&m).unwrap();
            let rebuilt = scale_columns(&v, &eig).matmul_nt(&v).unwrap();
            assert!(
                rebuilt.max_abs_diff(&m).unwrap() < 1e-10,
                "d = {d}: {}",
                rebuilt.max_abs_diff(&m).unwrap()
            );
        }
    }

    #[test]
    fn jacobi_rejects_asymmetric_input() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eigen(&m).is_err());
    }

    #[test]
    fn psd_sqrt_of_diagonal_and_random() {
        let m = Tensor::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let r = psd_sqrt(&m).unwrap();
        let want = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert!(r.max_abs_diff(&want).unwrap() < 1e-12);

        // random PSD: A Aᵀ + I/10
        let a = random_symmetric(4, 7);
        let mut psd = a.matmul_nt(&a).unwrap();
        for i in 0..4 {
            psd.set(i, i, psd.at(i, i) + 0.1);
        }
        let root = psd_sqrt(&psd).unwrap();
        let squared = root.matmul(&root).unwrap();
        assert!(squared.max_abs_diff(&psd).unwrap() < 1e-9);
    }

    #[test]
    fn psd_sqrt_clamps_negative_eigenvalues() {
        let m = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, -1e-12]]).unwrap();
        let r = psd_sqrt(&m).unwrap();
        assert!((r.at(0, 0) - 1.0).abs() < 1e-12);
        assert!(r.at(1, 1).abs() < 1e-6);
    }

    #[test]
    fn mean_and_cov_hand_example() {
        // {(0,0), (2,0), (0,2), (2,2)}: mean (1,1), unbiased cov diag(4/3, 4/3)
        let p = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ])
        .unwrap();
        let (mu, cov) = mean_and_cov(&p).unwrap();
        assert_eq!(mu, vec![1.0, 1.0]);
        assert!((cov.at(0, 0) - 4.0 / 3.0).abs() < 1e-15);
        assert!((cov.at(1, 1) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(cov.at(0, 1), 0.0);
    }

    #[test]
    fn frechet_identity_is_zero() {
        let mut rng = Prng::new(1);
        let p = rng.normal_tensor(vec![50, 3]);
        let fd = frechet_from_points(&p, &p).unwrap();
        assert!(fd < 1e-9, "{fd}");
    }

    #[test]
    fn frechet_matches_1d_closed_form() {
        // {-1, 0, 1} has exact sample mean 0, unbiased variance 1; the +1
        // shift moves the mean only: FD = 1² + (1−1)² = 1.
        let a = Tensor::from_rows(&[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let fd = frechet_from_points(&a, &b).unwrap();
        assert!((fd - 1.0).abs() < 1e-12, "{fd}");
    }

    #[test]
    fn frechet_matches_commuting_diagonal_closed_form() {
        // Five-point clouds with exact moments: mean 0, cov diag(1,4) vs
        // diag(4,1). FD = (1+4) + (4+1) − 2·tr(diag(2,2)) = 2.
        let r2 = libm::sqrt(2.0);
        let a = Tensor::from_rows(&[
            vec![r2, 0.0],
            vec![-r2, 0.0],
            vec![0.0, 2.0 * r2],
            vec![0.0, -2.0 * r2],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let b = Tensor::from_rows(&[
            vec![2.0 * r2, 0.0],
            vec![-2.0 * r2, 0.0],
            vec![0.0, r2],
            vec![0.0, -r2],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let fd = frechet_from_points(&a, &b).unwrap();
        assert!((fd - 2.0).abs() < 1e-10, "{fd}");
    }

    #[test]
    fn frechet_is_symmetric() {
        let mut rng = Prng::new(2);
        let a = rng.normal_tensor(vec![40, 2]);
        let mut b = rng.normal_tensor(vec![60, 2]);
        for v in b.data_mut().iter_mut() {
            *v = *v * 1.7 + 0.3;
        }
        let ab = frechet_from_points(&a, &b).unwrap();
        let ba = frechet_from_points(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn frechet_converges_to_population_value() {
        // N(0, I) vs N((1,0), I): population FD = 1.
        let mut rng = Prng::new(3);
        let a = rng.normal_tensor(vec![10_000, 2]);
        let mut b = rng.normal_tensor(vec![10_000, 2]);
        for i in 0..10_000 {
            b.set(i, 0, b.at(i, 0) + 1.0);
        }
        let fd = frechet_from_points(&a, &b).unwrap();
        assert!((fd - 1.0).abs() < 0.05, "{fd}");
    }

    #[test]
    fn frechet_needs_enough_points() {
        let a = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(frechet_from_points(&a, &a).is_err());
    }

    #[test]
    fn mmd_null_case_is_small_and_symmetric() {
        let mut rng = Prng::new(4);
        let a = rng.normal_tensor(vec![400, 2]);
        let b = rng.normal_tensor(vec![400, 2]);
        let (m_ab, h) = mmd_from_points(&a, &b, None).unwrap();
        let (m_ba, _) = mmd_from_points(&b, &a, None).unwrap();
        assert!((m_ab - m_ba).abs() < 1e-12);
        assert!(h > 0.0);
        // Unbiased estimator on equal distributions: |MMD²| stays within a
        // few standard errors of zero (~1/n here).
        assert!(m_ab.abs() < 0.01, "{m_ab}");
    }

    #[test]
    fn mmd_separated_clouds_is_large() {
        let mut rng = Prng::new(5);
        let a = rng.normal_tensor(vec![300, 2]);
        let mut b = rng.normal_tensor(vec![300, 2]);
        for v in b.data_mut().iter_mut() {
            *v += 10.0;
        }
        let (m, _) = mmd_from_points(&a, &b, None).unwrap();
        assert!(m > 0.5, "{m}");
    }

    #[test]
    fn mmd_respects_fixed_bandwidth_and_bounds() {
        let mut rng = Prng::new(6);
        let a = rng.normal_tensor(vec![50, 2]);
        let b = rng.normal_tensor(vec![50, 2]);
        let (_, h) = mmd_from_points(&a, &b, Some(2.5)).unwrap();
        assert_eq!(h, 2.5);
        assert!(mmd_from_points(&a, &b, Some(0.0)).is_err());
        let tiny = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(mmd_from_points(&tiny, &b, None).is_err());
    }

    #[test]
    fn mmd_subsample_keeps_result_deterministic() {
        let mut rng = Prng::new(7);
        let a = rng.normal_tensor(vec![MMD_SUBSAMPLE_CAP + 500, 2]);
        let b = rng.normal_tensor(vec![300, 2]);
        let (m1, h1) = mmd_from_points(&a, &b, None).unwrap();
        let (m2, h2) = mmd_from_points(&a, &b, None).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn moment_report_identical_and_shifted() {
        let mut rng = Prng::new(8);
        let p = rng.normal_tensor(vec![30, 2]);
        let a = batch(p.clone());
        let r = moment_report(&a, &a).unwrap();
        assert!(r.mean_gap.iter().all(|g| *g == 0.0));
        assert_eq!(r.cov_gap.max_abs(), 0.0);

        let mut shifted = p.clone();
        for i in 0..30 {
            shifted.set(i, 0, shifted.at(i, 0) + 1.0);
        }
        let r = moment_report(&a, &batch(shifted)).unwrap();
        assert!((r.mean_gap[0] - 1.0).abs() < 1e-12);
        assert!(r.mean_gap[1].abs() < 1e-12);
        // a pure shift leaves the covariance untouched
        assert!(r.cov_gap.max_abs() < 1e-12);
    }

    #[test]
    fn moments_match_streaming_oracle() {
        // Independent Welford-style streaming pass.
        let mut rng = Prng::new(9);
        let p = rng.normal_tensor(vec![500, 3]);
        let (mu, cov) = mean_and_cov(&p).unwrap();

        let d = 3;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d * d];
        for i in 0..500 {
            let k = (i + 1) as f64;
            let row: Vec<f64> = p.row(i).to_vec();
            let delta: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for (j, dj) in delta.iter().enumerate() {
                mean[j] += dj / k;
            }
            let delta2: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for j in 0..d {
                for l in 0..d {
                    m2[j * d + l] += delta[j] * delta2[l];
                }
            }
        }
        for (j, m) in mean.iter().enumerate() {
            assert!((m - mu[j]).abs() < 1e-10);
        }
        for j in 0..d {
            for l in 0..d {
                assert!((m2[j * d + l] / 499.0 - cov.at(j, l)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn metric_report_carries_counts_and_echoes() {
        let mut rng = Prng::new(10);
        let a = batch(rng.normal_tensor(vec![40, 2]));
        let b = batch(rng.normal_tensor(vec![50, 2]));
        let r = metric_report(&a, &b, None).unwrap();
        assert_eq!((r.n_a, r.n_b, r.dims), (40, 50, 2));
        assert_eq!(r.mean_gap.len(), 2);
        assert_eq!(r.cov_gap.len(), 4);
        assert!(r.frechet_distance >= 0.0);
    }
}
