//! 2D projection of document embeddings: PCA and exact t-SNE.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bitset::DocSet;
use crate::corpus::DatasetStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMethod {
    Tsne,
    Pca,
    Ingested,
}

/// One point per test document, in store order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub method: ProjectionMethod,
    pub points: Vec<[f64; 2]>,
    pub initial_kl: Option<f64>,
    pub final_kl: Option<f64>,
    /// Perplexity actually used (after clamping).
    pub perplexity: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub is_error: bool,
}

/// The subpopulation's points with their global coordinates, tagged by
/// correctness.
pub fn filter_projection(projection: &Projection2D, subpop: &DocSet, store: &DatasetStore) -> Vec<ProjectedPoint> {
    subpop
        .iter()
        .filter_map(|d| {
            let [x, y] = *projection.points.get(d)?;
            Some(ProjectedPoint {
                id: store.test[d].id.clone(),
                x,
                y,
                is_error: store.error_labels[d],
            })
        })
        .collect()
}

/// Coordinates supplied with the corpus, if every test record has them.
pub fn ingested_projection(store: &DatasetStore) -> Option<Projection2D> {
    let points: Option<Vec<[f64; 2]>> = store.test.iter().map(|r| r.projection).collect();
    Some(Projection2D {
        method: ProjectionMethod::Ingested,
        points: points?,
        initial_kl: None,
        final_kl: None,
        perplexity: None,
        warnings: Vec::new(),
    })
}

/// Ingested coordinates when present, else t-SNE over embeddings, else
/// `None`.
pub fn project_store(store: &DatasetStore, config: &TsneConfig) -> Result<Option<Projection2D>> {
    if let Some(p) = ingested_projection(store) {
        return Ok(Some(p));
    }
    let embeddings: Option<Vec<Vec<f64>>> = store.test.iter().map(|r| r.embedding.clone()).collect();
    match embeddings {
        Some(e) if e.len() >= 3 => tsne_project(&e, config).map(Some),
        _ => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// PCA

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-length principal axes, one per output dimension.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (`1/(n-1)` normalization) per component.
    pub explained_variance: Vec<f64>,
    /// Projected coordinates, `n × d`.
    pub coords: Vec<Vec<f64>>,
}

/// Dimensions up to which the covariance matrix is diagonalized directly.
const DENSE_EIGEN_MAX_DIM: usize = 64;

#[allow(clippy::needless_range_loop)]
pub fn pca(embeddings: &[Vec<f64>], d: usize) -> Result<Pca> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let m = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != m) || m == 0 {
        return Err(Error::InvalidArgument("embeddings must share a nonzero dimension".into()));
    }
    let mut mean = vec![0.0; m];
    for e in embeddings {
        for (acc, v) in mean.iter_mut().zip(e) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();

    let k = d.min(m);
    let (mut values, mut vectors) = if m <= DENSE_EIGEN_MAX_DIM {
        let mut cov = vec![vec![0.0; m]; m];
        for row in &centered {
            for a in 0..m {
                for b in a..m {
                    cov[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..m {
            for b in a..m {
                cov[a][b] /= (n - 1) as f64;
                cov[b][a] = cov[a][b];
            }
        }
        jacobi_eigen(cov)
    } else {
        subspace_eigen(&centered, (k + 4).min(m))
    };
    values.truncate(k);
    vectors.truncate(k);

    for v in &mut vectors {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if libm::fabs(*x) > libm::fabs(v[best]) {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let coords = centered
        .iter()
        .map(|row| {
            let mut c: Vec<f64> = vectors.iter().map(|v| dot(row, v)).collect();
            c.resize(d, 0.0);
            c
        })
        .collect();
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(Pca {
        mean,
        components: vectors,
        explained_variance: values,
        coords,
    })
}

pub fn pca_project(embeddings: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    Ok(pca(embeddings, 2)?.coords.into_iter().map(|c| [c[0], c[1]]).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cyclic Jacobi diagonalization of a symmetric matrix. Returns eigenvalues
/// in descending order with matching unit eigenvectors.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = a.len();
    let mut v = vec![vec![0.0; m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..m).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..m {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect();
    (values, vectors)
}

/// Top eigenpairs of the covariance of `centered` by block power iteration
/// with Rayleigh–Ritz, without forming the covariance matrix.
fn subspace_eigen(centered: &[Vec<f64>], block: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = centered.len();
    let m = centered[0].len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        for row in centered {
            let s = dot(row, v);
            for (o, r) in out.iter_mut().zip(row) {
                *o += s * r;
            }
        }
        out.iter_mut().for_each(|x| *x /= (n - 1) as f64);
        out
    };
    // Deterministic start: basis vectors plus a fixed dense vector.
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|j| (0..m).map(|i| if i % block == j { 1.0 } else { 1.0 / (1.0 + (i + j) as f64) }).collect())
        .collect();
    orthonormalize(&mut basis);
    let mut prev: Vec<f64> = Vec::new();
    let mut result = (Vec::new(), Vec::new());
    for _ in 0..3000 {
        let mut images: Vec<Vec<f64>> = basis.iter().map(|b| apply(b)).collect();
        // Rayleigh–Ritz on the current basis.
        let small: Vec<Vec<f64>> = basis
            .iter()
            .map(|bi| images.iter().map(|aj| dot(bi, aj)).collect())
            .collect();
        let (vals, vecs) = jacobi_eigen(small);
        let ritz: Vec<Vec<f64>> = vecs
            .iter()
            .map(|w| {
                let mut x = vec![0.0; m];
                for (wj, bj) in w.iter().zip(&basis) {
                    for (xi, b) in x.iter_mut().zip(bj) {
                        *xi += wj * b;
                    }
                }
                x
            })
            .collect();
        let converged = prev.len() == vals.len()
            && vals
                .iter()
                .zip(&prev)
                .all(|(a, b)| libm::fabs(a - b) <= 1e-13 * libm::fabs(vals[0]).max(1e-300));
        prev = vals.clone();
        result = (vals, ritz);
        if converged {
            break;
        }
        orthonormalize(&mut images);
        basis = images;
    }
    result
}

fn orthonormalize(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for _ in 0..2 {
            for j in 0..i {
                let proj = dot(&vs[i], &vs[j]);
                let (head, tail) = vs.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= proj * y;
                }
            }
        }
        let norm = libm::sqrt(dot(&vs[i], &vs[i]));
        if norm > 1e-300 {
            vs[i].iter_mut().for_each(|x| *x /= norm);
        } else {
            let len = vs[i].len();
            vs[i] = (0..len).map(|k| if k == i % len { 1.0 } else { 0.0 }).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// t-SNE

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations with exaggerated affinities; momentum switches at the same
    /// point.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

/// Entropy tolerance (bits) of the per-point bandwidth search.
pub const ENTROPY_TOLERANCE: f64 = 1e-6;

/// Conditional affinities `p_{j|i}` (row-major, zero diagonal) with the
/// Gaussian precision of each row chosen so its Shannon entropy in bits is
/// `log2(perplexity)`. Also returns the achieved entropies.
pub fn conditional_affinities(sq_dist: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = libm::log2(perplexity);
    let mut p = vec![0.0; n * n];
    let mut entropies = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let d = &sq_dist[i * n..(i + 1) * n];
        let min_d = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(f64::INFINITY, f64::min);
        let max_d = (0..n).filter(|&j| j != i).map(|j| d[j]).fold(0.0, f64::max);
        let entropy_at = |beta: f64, row: &mut [f64]| -> f64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let shifted = d[j] - min_d;
                let w = libm::exp(-beta * shifted);
                row[j] = w;
                sum += w;
                weighted += w * shifted;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            (libm::log(sum) + beta * weighted / sum) / core::f64::consts::LN_2
        };

        let mut h;
        if max_d - min_d <= 0.0 {
            h = entropy_at(0.0, &mut row);
        } else {
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0 / (max_d - min_d).max(1e-300);
            h = entropy_at(beta, &mut row);
            for _ in 0..500 {
                if libm::fabs(h - target) <= ENTROPY_TOLERANCE {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = entropy_at(beta, &mut row);
            }
        }
        entropies[i] = h;
        p[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    (p, entropies)
}

pub fn squared_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = data[i].iter().zip(&data[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Symmetric joint affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_affinities(data: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = data.len();
    let (cond, _) = conditional_affinities(&squared_distances(data), n, perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
            }
        }
    }
    p
}

/// Student-t kernel numerators `1 / (1 + |y_i − y_j|²)` and their sum.
fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    (num, z)
}

/// `KL(P || Q)` for the low-dimensional layout `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * libm::log(pij * z / num[i * n + j]);
            }
        }
    }
    kl
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j) / (1 + |y_i − y_j|²)`, with
/// `p` scaled by `exaggeration`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_kernel(y);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num[i * n + j];
            let mult = (exaggeration * p[i * n + j] - w / z) * w;
            gx += mult * (y[i][0] - y[j][0]);
            gy += mult * (y[i][1] - y[j][1]);
        }
        grad[i] = [4.0 * gx, 4.0 * gy];
    }
    grad
}

/// Exact t-SNE to two dimensions.
pub fn tsne_project(embeddings: &[Vec<f64>], config: &TsneConfig) -> Result<Projection2D> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    // Written to reject NaN as well as non-positive values.
    if config.perplexity.is_nan() || config.perplexity <= 0.0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("perplexity and learning rate must be positive".into()));
    }
    let mut warnings = Vec::new();
    let mut perplexity = config.perplexity;
    let max_perplexity = (n - 1) as f64 / 3.0;
    if perplexity > max_perplexity {
        perplexity = max_perplexity.max(1.0);
        warnings.push(alloc::format!(
            "perplexity {} too large for {n} points; clamped to {perplexity}",
            config.perplexity
        ));
    }

    let p = joint_affinities(embeddings, perplexity);

    let init = pca(embeddings, 2)?.coords;
    let mut y: Vec<[f64; 2]> = init.iter().map(|c| [c[0], c[1]]).collect();
    let mean0 = y.iter().map(|c| c[0]).sum::<f64>() / n as f64;
    let std0 = libm::sqrt(y.iter().map(|c| (c[0] - mean0) * (c[0] - mean0)).sum::<f64>() / n as f64);
    if std0 > 0.0 && std0.is_finite() {
        let s = 1e-4 / std0;
        y.iter_mut().for_each(|c| {
            c[0] *= s;
            c[1] *= s;
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for c in y.iter_mut() {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            *c = [a * 1e-4, b * 1e-4];
        }
    }

    let initial_kl = kl_divergence(&p, &y);
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    for it in 0..config.iterations {
        let early = it < config.exaggeration_iterations;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = kl_gradient(&p, &y, exaggeration);
        for i in 0..n {
            for k in 0..2 {
                let g = grad[i][k];
                gains[i][k] = if (g > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    gains[i][k] * 0.8
                };
                if gains[i][k] < 0.01 {
                    gains[i][k] = 0.01;
                }
                velocity[i][k] = momentum * velocity[i][k] - config.learning_rate * gains[i][k] * g;
                y[i][k] += velocity[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|c| c[k]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|c| c[k] -= mean);
        }
    }
    if y.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::InvalidArgument("t-SNE diverged".into()));
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(Projection2D {
        method: ProjectionMethod::Tsne,
        points: y,
        initial_kl: Some(initial_kl),
        final_kl: Some(final_kl),
        perplexity: Some(perplexity),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_points_project_to_origin() {
        let data = vec![vec![1.0, 2.0, 3.0]; 5];
        for c in pca_project(&data).unwrap() {
            assert_eq!(c, [0.0, 0.0]);
        }
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            pca_project(&[vec![1.0], vec![2.0]]),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        );
    }

    #[test]
    fn identical_embeddings_give_uniform_affinities_and_finite_output() {
        let data = vec![vec![0.5, 0.5]; 3];
        let p = joint_affinities(&data, 30.0);
        let off: Vec<f64> = (0..9).filter(|k| k % 4 != 0).map(|k| p[k]).collect();
        assert!(off.iter().all(|v| (v - off[0]).abs() < 1e-15));
        let proj = tsne_project(&data, &TsneConfig::default()).unwrap();
        assert!(proj.points.iter().all(|c| c[0].is_finite() && c[1].is_finite()));
        assert!(!proj.warnings.is_empty());
    }

    #[test]
    fn planar_data_is_reconstructed() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![libm::cos(t) * 3.0, libm::sin(t * 0.7)]
            })
            .collect();
        let pca = pca(&data, 2).unwrap();
        for (row, c) in data.iter().zip(&pca.coords) {
            let recon: Vec<f64> = (0..2)
                .map(|k| pca.mean[k] + c[0] * pca.components[0][k] + c[1] * pca.components[1][k])
                .collect();
            assert!((recon[0] - row[0]).abs() < 1e-10 && (recon[1] - row[1]).abs() < 1e-10);
        }
    }
}
