//! Two-component PCA over attention-weight vectors (or any point cloud),
//! via Jacobi eigendecomposition of the sample covariance.

use super::DiagnosticsError;

/// 2-D projections plus the variance fractions the two components explain.
#[derive(Clone, Debug)]
pub struct ProjectionResult {
    pub coords: Vec<[f64; 2]>,
    /// Fractions of total variance, nonincreasing.
    pub explained: [f64; 2],
    /// The two principal directions, orthonormal.
    pub components: [Vec<f64>; 2],
}

/// Center the vectors, eigendecompose their sample covariance, and project
/// onto the top two components. An all-identical input collapses to the
/// origin with zero explained variance.
pub fn pca_project(vectors: &[Vec<f64>]) -> Result<ProjectionResult, DiagnosticsError> {
    if vectors.len() < 3 {
        return Err(DiagnosticsError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(DiagnosticsError::Misaligned(
            "pca vectors have inconsistent dimensions".into(),
        ));
    }

    let n = vectors.len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Sample covariance (n-1 denominator), symmetric dim x dim.
    let mut cov = vec![0.0; dim * dim];
    for v in vectors {
        for i in 0..dim {
            let ci = v[i] - mean[i];
            for j in i..dim {
                cov[i * dim + j] += ci * (v[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let val = cov[i * dim + j] / denom;
            cov[i * dim + j] = val;
            cov[j * dim + i] = val;
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(&mut cov, dim);

    // Order by eigenvalue, descending.
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let total: f64 = eigvals.iter().map(|&v| v.max(0.0)).sum();

    let component = |idx: usize| -> Vec<f64> {
        let col = order[idx.min(dim - 1)];
        (0..dim).map(|r| eigvecs[r * dim + col]).collect()
    };
    let c0 = component(0);
    let c1 = if dim > 1 { component(1) } else { vec![0.0; dim] };

    let explained = |idx: usize| -> f64 {
        if total <= 0.0 || idx >= dim {
            0.0
        } else {
            eigvals[order[idx]].max(0.0) / total
        }
    };

    let coords = vectors
        .iter()
        .map(|v| {
            let mut x = 0.0;
            let mut y = 0.0;
            for i in 0..dim {
                let c = v[i] - mean[i];
                x += c * c0[i];
                y += c * c1[i];
            }
            [x, y]
        })
        .collect();

    Ok(ProjectionResult {
        coords,
        explained: [explained(0), explained(1)],
        components: [c0, c1],
    })
}

/// Cyclic Jacobi rotations on a symmetric matrix. Returns eigenvalues and a
/// column-eigenvector matrix. Converges to off-diagonal mass below 1e-10.
fn jacobi_eigen(a: &mut [f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (i + 1..dim).map(move |j| (i, j)))
            .map(|(i, j)| a[i * dim + j] * a[i * dim + j])
            .sum();
        if off.sqrt() < 1e-10 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = a[p * dim + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..dim).map(|i| a[i * dim + i]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn line_in_5d_is_one_dimensional() {
        let dir = [1.0, -2.0, 0.5, 3.0, -1.0];
        let vectors: Vec<Vec<f64>> = (0..10)
            .map(|i| dir.iter().map(|d| d * i as f64).collect())
            .collect();
        let proj = pca_project(&vectors).unwrap();
        assert!(proj.explained[0] >= 1.0 - 1e-8);
        assert!(proj.explained[1] <= 1e-8);
    }

    #[test]
    fn components_are_orthonormal_and_variances_ordered() {
        let vectors: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin(), t.cos() * 2.0, (t * 0.5).sin() - 1.0, t * 0.1]
            })
            .collect();
        let proj = pca_project(&vectors).unwrap();
        let [c0, c1] = &proj.components;
        assert!((dot(c0, c0) - 1.0).abs() < 1e-8);
        assert!((dot(c1, c1) - 1.0).abs() < 1e-8);
        assert!(dot(c0, c1).abs() < 1e-8);
        assert!(proj.explained[0] >= proj.explained[1]);
    }

    #[test]
    fn translation_leaves_the_projection_unchanged_up_to_sign() {
        let vectors: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 * 0.05])
            .collect();
        let shifted: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| vec![v[0] + 50.0, v[1] - 3.0, v[2] + 0.9])
            .collect();
        let a = pca_project(&vectors).unwrap();
        let b = pca_project(&shifted).unwrap();
        for axis in 0..2 {
            let sign = if (a.coords[0][axis] - b.coords[0][axis]).abs() < 1e-6 {
                1.0
            } else {
                -1.0
            };
            for (pa, pb) in a.coords.iter().zip(&b.coords) {
                assert!((pa[axis] - sign * pb[axis]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_dimensional_input_reconstructs_exactly() {
        let vectors: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![(i as f64 * 1.3).sin() * 2.0, (i as f64 * 0.9).cos()])
            .collect();
        let proj = pca_project(&vectors).unwrap();
        let mut mean = [0.0; 2];
        for v in &vectors {
            mean[0] += v[0] / 8.0;
            mean[1] += v[1] / 8.0;
        }
        for (v, c) in vectors.iter().zip(&proj.coords) {
            for d in 0..2 {
                let rebuilt =
                    mean[d] + c[0] * proj.components[0][d] + c[1] * proj.components[1][d];
                assert!((rebuilt - v[d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_zero_input_collapses_to_origin() {
        let vectors = vec![vec![1.0, 2.0, 3.0]; 5];
        let proj = pca_project(&vectors).unwrap();
        for c in &proj.coords {
            assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        }
        assert_eq!(proj.explained, [0.0, 0.0]);
    }

    #[test]
    fn too_few_vectors_is_an_error() {
        let res = pca_project(&[vec![1.0], vec![2.0]]);
        assert!(matches!(res, Err(DiagnosticsError::TooFewVectors(2))));
    }
}
