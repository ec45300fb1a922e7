//! Activation clustering: PCA projection of hidden activations, k-means
//! with k-means++ seeding, and silhouette scoring.

use super::DefenseError;
use crate::nn::{Network, Shape, Tensor};
use crate::util::mix_seed;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Silhouette score above which the clustering defense flags a model.
pub const DETECTION_SILHOUETTE: f64 = 0.4;

#[derive(Debug, Clone, Copy)]
pub struct AcOptions {
    pub pca_dims: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for AcOptions {
    fn default() -> Self {
        Self {
            pca_dims: 10,
            k: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcReport {
    pub silhouette: f64,
    pub cluster_sizes: Vec<usize>,
    pub n_points: usize,
    /// Zero-variance activations make clustering meaningless.
    pub degenerate: bool,
    pub flagged: bool,
}

/// Principal components of centered data.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `dims x d`, orthonormal rows sorted by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.mean))
                    .map(|(&ci, (&x, &m))| ci * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Back-projection into the original space (centered data plus mean).
    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = self.mean.clone();
        for (w, c) in projected.iter().zip(&self.components) {
            for i in 0..d {
                out[i] += w * c[i];
            }
        }
        out
    }
}

/// PCA via eigen-decomposition of the sample covariance.
pub fn pca(data: &[Vec<f64>], dims: usize) -> Result<PcaModel, DefenseError> {
    let n = data.len();
    if n < 2 {
        return Err(DefenseError::InsufficientData(
            "PCA needs at least two points".into(),
        ));
    }
    let d = data[0].len();
    if dims == 0 || dims > d {
        return Err(DefenseError::InsufficientData(format!(
            "PCA dimension {dims} outside 1..={d}"
        )));
    }
    let mut mean = vec![0.0f64; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            let ci = centered[i];
            if ci != 0.0 {
                for j in i..d {
                    cov[(i, j)] += ci * centered[j];
                }
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let components: Vec<Vec<f64>> = order
        .iter()
        .take(dims)
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let eigenvalues: Vec<f64> = order.iter().take(dims).map(|&i| eig.eigenvalues[i]).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with k-means++ seeding; ties go to the lower cluster
/// index and empty clusters adopt the point farthest from its center, so
/// the run is deterministic for a given seed.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansResult, DefenseError> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(DefenseError::InsufficientData(format!(
            "{n} points for k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::from_le_bytes(*b"kmeans++"), 0));

    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // all remaining mass at the chosen centers; duplicate points
            centers.push(points[rng.gen_range(0..n)].clone());
            continue;
        }
        let mut draw = rng.gen::<f64>() * total;
        let mut chosen = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if draw < w {
                chosen = i;
                break;
            }
            draw -= w;
        }
        centers.push(points[chosen].clone());
    }

    let mut assignments = vec![0usize; n];
    let mut wcss_history = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..200 {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0f64;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            wcss += best_d;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        wcss_history.push(wcss);

        let dim = points[0].len();
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // adopt the point farthest from its current center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[assignments[a]])
                            .partial_cmp(&sq_dist(&points[b], &centers[assignments[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = points[far].clone();
            } else {
                for (ci, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *ci = s / counts[c] as f64;
                }
            }
        }
        if !changed && iterations > 1 {
            break;
        }
    }

    Ok(KmeansResult {
        assignments,
        centers,
        iterations,
        wcss_history,
    })
}

/// Mean silhouette over all points: `(b - a) / max(a, b)` with the mean
/// intra-cluster distance `a` and the smallest mean distance to another
/// cluster `b`. Singleton clusters score zero.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let counts = {
        let mut c = vec![0usize; k];
        for &a in assignments {
            c[a] += 1;
        }
        c
    };
    let mut total = 0.0f64;
    for i in 0..n {
        let own = assignments[i];
        if counts[own] <= 1 {
            continue; // singleton contributes 0
        }
        let mut sums = vec![0.0f64; k];
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    total / n as f64
}

/// Extract hidden activations for the given frames, reduce with PCA,
/// cluster with k-means and report the mean silhouette.
pub fn activation_clustering(
    model: &Network<f32>,
    rows: &[&[f32]],
    layer: usize,
    opts: &AcOptions,
) -> Result<AcReport, DefenseError> {
    if rows.len() < 2 * opts.k {
        return Err(DefenseError::InsufficientData(format!(
            "{} frames for k = {}",
            rows.len(),
            opts.k
        )));
    }
    let mut dims = vec![rows.len()];
    match model.input_shape() {
        Shape::Spatial { c, h, w } => dims.extend([c, h, w]),
        Shape::Flat(n) => dims.push(n),
    }
    let mut values = Vec::with_capacity(rows.len() * rows[0].len());
    for r in rows {
        values.extend_from_slice(r);
    }
    let batch = Tensor::from_values(dims, values).map_err(DefenseError::Nn)?;
    let acts = model.layer_activations(&batch, layer)?;
    let data: Vec<Vec<f64>> = (0..rows.len())
        .map(|s| acts.row(s).iter().map(|&v| v as f64).collect())
        .collect();

    // zero-variance guard
    let first = &data[0];
    if data.iter().all(|r| r == first) {
        return Ok(AcReport {
            silhouette: 0.0,
            cluster_sizes: vec![rows.len(), 0],
            n_points: rows.len(),
            degenerate: true,
            flagged: false,
        });
    }

    let pca_dims = opts.pca_dims.min(first.len());
    let model_pca = pca(&data, pca_dims)?;
    let projected: Vec<Vec<f64>> = data.iter().map(|r| model_pca.project(r)).collect();
    let km = kmeans(&projected, opts.k, opts.seed)?;
    let sil = silhouette(&projected, &km.assignments, opts.k);
    let mut sizes = vec![0usize; opts.k];
    for &a in &km.assignments {
        sizes[a] += 1;
    }
    Ok(AcReport {
        silhouette: sil,
        cluster_sizes: sizes,
        n_points: rows.len(),
        degenerate: false,
        flagged: sil >= DETECTION_SILHOUETTE,
    })
}
