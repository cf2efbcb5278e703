#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
/// Coordinates below this magnitude are treated as zero by the sign rule.
const SIGN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Unit-length principal axes, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues matching `components`.
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub projections: Vec<Vec<f64>>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors, each with its first nonzero coordinate positive.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = matrix.len();
    if let Some(row) = matrix.iter().find(|r| r.len() != d) {
        return Err(Error::dim(d, row.len()));
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for i in 0..d {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                return Err(Error::Input("matrix is not symmetric".into()));
            }
        }
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    let mut v: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| f64::from(i == j)).collect()).collect();

    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * total {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..d {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numeric(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.iter().map(|row| row[i]).collect();
            if col.iter().find(|x| x.abs() > SIGN_TOL).is_some_and(|&x| x < 0.0) {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    Ok((values, vectors))
}

/// Projects mean-centered points onto the top `k` eigenvectors of their
/// sample covariance (denominator `n - 1`).
pub fn pca_project<V: AsRef<[f64]>>(points: &[V], k: usize) -> Result<PcaProjection> {
    if points.len() < 2 {
        return Err(Error::Input(format!("PCA needs at least 2 points, got {}", points.len())));
    }
    let d = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != d) {
        return Err(Error::dim(d, p.as_ref().len()));
    }
    if k < 1 || k > d {
        return Err(Error::Input(format!("k must be in 1..={d}, got {k}")));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for c in &centered {
        for i in 0..d {
            for j in 0..=i {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= n - 1.0;
            cov[j][i] = cov[i][j];
        }
    }

    let (values, vectors) = symmetric_eigen(&cov)?;
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let eigenvalues: Vec<f64> = values[..k].iter().map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let components: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
    let projections = centered
        .iter()
        .map(|c| {
            components
                .iter()
                .map(|w| w.iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        mean,
        components,
        eigenvalues,
        explained_variance_ratio,
        projections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_have_full_ratio() {
        let pts: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().map(|t| vec![t * 1.0, t * 2.0, t * 2.0]).collect();
        let p = pca_project(&pts, 1).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        for (a, b) in p.components[0].iter().zip([1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_aligned_pair() {
        let p = pca_project(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1).unwrap();
        assert_eq!(p.components[0], vec![1.0, 0.0]);
        assert_eq!(p.projections, vec![vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn bad_k_and_inputs() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(pca_project(&pts, 0).is_err());
        assert!(pca_project(&pts, 3).is_err());
        assert!(pca_project(&pts[..1], 1).is_err());
        assert!(pca_project(&[vec![0.0], vec![0.0, 1.0]], 1).is_err());
    }

    #[test]
    fn eigen_of_known_matrix() {
        let (vals, vecs) = symmetric_eigen(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let h = 0.5f64.sqrt();
        assert!((vecs[0][0] - h).abs() < 1e-12 && (vecs[0][1] - h).abs() < 1e-12);
        assert!((vecs[1][0] - h).abs() < 1e-12 && (vecs[1][1] + h).abs() < 1e-12);
        assert!(symmetric_eigen(&[vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn constant_points_give_zero_ratio() {
        let p = pca_project(&[vec![3.0, 3.0], vec![3.0, 3.0]], 2).unwrap();
        assert_eq!(p.explained_variance_ratio, vec![0.0, 0.0]);
        assert!(p.projections.iter().flatten().all(|&x| x == 0.0));
    }
}
