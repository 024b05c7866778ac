//! K-means over career embeddings, silhouette-based choice of K, and the
//! one-hot cluster code fed to the forecaster.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::substream;
use crate::{Error, Result, Scalar};

pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_MAX_ITERS: usize = 300;

/// Best of several seeded Lloyd runs.
#[derive(Clone, Debug)]
pub struct KMeansFit<T> {
    pub centroids: Array2<T>,
    pub assignments: Vec<usize>,
    pub sse: T,
    /// Whether the best run stopped at an assignment fixpoint.
    pub converged: bool,
    /// SSE after each Lloyd iteration of the best run.
    pub sse_history: Vec<T>,
    /// Final SSE of every restart, in restart order.
    pub restart_sse: Vec<T>,
}

fn sq_dist<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest<T: Scalar>(point: ArrayView1<T>, centroids: &Array2<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, centroid) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all<T: Scalar>(x: ArrayView2<T>, centroids: &Array2<T>) -> (Vec<usize>, T) {
    let mut sse = T::zero();
    let labels = x
        .rows()
        .into_iter()
        .map(|p| {
            let (c, d) = nearest(p, centroids);
            sse += d;
            c
        })
        .collect();
    (labels, sse)
}

fn kmeans_pp<T: Scalar>(x: ArrayView2<T>, k: usize, rng: &mut impl Rng) -> Array2<T> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, centroids.row(0)).as_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, p) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(c)).as_f64());
        }
    }
    centroids
}

fn update_centroids<T: Scalar>(x: ArrayView2<T>, labels: &[usize], k: usize) -> Array2<T> {
    let mut sums = Array2::<T>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &c) in x.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(c);
        row += &p;
        counts[c] += 1;
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / T::of_usize(count));
        }
    }
    if !empty.is_empty() {
        // reseed each empty cluster at the point farthest from its own centroid
        let mut far: Vec<(usize, T)> = x
            .rows()
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (p, &c))| (i, sq_dist(p, sums.row(c))))
            .collect();
        far.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        for (&c, &(i, _)) in empty.iter().zip(&far) {
            sums.row_mut(c).assign(&x.row(i));
        }
    }
    sums
}

/// One Lloyd run from the given centroids.
pub fn lloyd<T: Scalar>(x: ArrayView2<T>, init: Array2<T>, max_iters: usize) -> KMeansFit<T> {
    let k = init.nrows();
    let mut centroids = init;
    let (mut labels, mut sse) = assign_all(x, &centroids);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        centroids = update_centroids(x, &labels, k);
        let (next, next_sse) = assign_all(x, &centroids);
        history.push(next_sse);
        sse = next_sse;
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    KMeansFit {
        centroids,
        assignments: labels,
        sse,
        converged,
        sse_history: history,
        restart_sse: vec![sse],
    }
}

/// Lloyd's algorithm with k-means++ seeding; keeps the lowest-SSE restart.
pub fn kmeans_fit<T: Scalar>(
    x: ArrayView2<T>,
    k: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KMeansFit<T>> {
    let n = x.nrows();
    if k < 2 {
        return Err(Error::Parameter(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Parameter(format!("cannot form {k} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(Error::Parameter("restarts must be >= 1".into()));
    }
    let mut best: Option<KMeansFit<T>> = None;
    let mut all_sse = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let mut rng = substream(seed, &format!("kmeans/k{k}/restart{r}"));
        let run = lloyd(x, kmeans_pp(x, k, &mut rng), max_iters);
        all_sse.push(run.sse);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let mut best = best.expect("restarts >= 1");
    best.restart_sse = all_sse;
    Ok(best)
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters score 0.
pub fn silhouette<T: Scalar>(x: ArrayView2<T>, assignments: &[usize]) -> Result<T> {
    let n = x.nrows();
    if assignments.len() != n {
        return Err(Error::shape(n, assignments.len()));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &c in assignments {
        sizes[c] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Parameter("silhouette needs at least two non-empty clusters".into()));
    }

    let mut dist = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(x.row(i), x.row(j)).sqrt();
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let mut total = T::zero();
    let mut sums = vec![T::zero(); k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = T::zero());
        for j in 0..n {
            sums[assignments[j]] += dist[[i, j]];
        }
        let a = sums[own] / T::of_usize(sizes[own] - 1);
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / T::of_usize(sizes[c]))
            .fold(T::infinity(), T::min);
        let m = a.max(b);
        if m > T::zero() {
            total += (b - a) / m;
        }
    }
    Ok(total / T::of_usize(n))
}

/// Fitted centroids plus the silhouette table used to choose K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel<T> {
    pub k: usize,
    pub centroids: Array2<T>,
    pub silhouette_table: BTreeMap<usize, f64>,
    pub train_assignments: BTreeMap<String, usize>,
    pub sse: f64,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Fits every K in `k_range`, scores each with the silhouette, and keeps
/// the argmax (ties go to the smaller K).
pub fn select_k<T: Scalar>(
    x: ArrayView2<T>,
    ids: &[String],
    k_range: RangeInclusive<usize>,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<ClusterModel<T>> {
    let n = x.nrows();
    if ids.len() != n {
        return Err(Error::shape(n, ids.len()));
    }
    if k_range.is_empty() || *k_range.start() < 2 || *k_range.end() + 1 > n {
        return Err(Error::Parameter(format!(
            "k range {k_range:?} must lie within [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let mut table = BTreeMap::new();
    let mut best: Option<(usize, f64, KMeansFit<T>)> = None;
    for k in k_range {
        let fit = kmeans_fit(x, k, restarts, max_iters, seed)?;
        let score = silhouette(x, &fit.assignments)?.as_f64();
        table.insert(k, score);
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((k, score, fit));
        }
    }
    let (k, _, fit) = best.expect("non-empty range");
    Ok(ClusterModel {
        k,
        centroids: fit.centroids,
        silhouette_table: table,
        train_assignments: ids.iter().cloned().zip(fit.assignments).collect(),
        sse: fit.sse.as_f64(),
        meta: BTreeMap::new(),
    })
}

/// Nearest centroid, ties to the lowest index.
pub fn assign<T: Scalar>(model: &ClusterModel<T>, embedding: ArrayView1<T>) -> Result<usize> {
    if embedding.len() != model.centroids.ncols() {
        return Err(Error::shape(model.centroids.ncols(), embedding.len()));
    }
    Ok(nearest(embedding, &model.centroids).0)
}

pub fn one_hot<T: Scalar>(index: usize, k: usize) -> Result<Array1<T>> {
    if index >= k {
        return Err(Error::Parameter(format!("cluster index {index} out of range for k = {k}")));
    }
    let mut v = Array1::zeros(k);
    v[index] = T::one();
    Ok(v)
}

impl<T: Scalar + Serialize + serde::de::DeserializeOwned> ClusterModel<T> {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.centroids.nrows() != m.k || m.train_assignments.values().any(|&c| c >= m.k) {
            return Err(Error::Artifact("cluster model is inconsistent with its k".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// `K,silhouette` rows.
    pub fn silhouette_csv(&self) -> String {
        let mut s = String::from("K,silhouette\n");
        for (k, v) in &self.silhouette_table {
            s.push_str(&format!("{k},{v:?}\n"));
        }
        s
    }

    /// `player_id,cluster` rows for the training players.
    pub fn assignments_csv(&self) -> String {
        let mut s = String::from("player_id,cluster\n");
        for (id, c) in &self.train_assignments {
            s.push_str(&format!("{id},{c}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separated_pairs() {
        let x = array![[0.0], [0.1], [10.0], [10.1]];
        let fit = kmeans_fit(x.view(), 2, 5, 100, 1).unwrap();
        assert_eq!(fit.assignments[0], fit.assignments[1]);
        assert_eq!(fit.assignments[2], fit.assignments[3]);
        assert_ne!(fit.assignments[0], fit.assignments[2]);
        let mut c: Vec<f64> = fit.centroids.column(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn best_restart_is_minimum() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 37 + j * 11) % 17) as f64);
        let fit = kmeans_fit(x.view(), 4, 10, 100, 3).unwrap();
        assert!(fit.restart_sse.iter().all(|&s| fit.sse <= s));
    }

    #[test]
    fn too_few_points() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(kmeans_fit(x.view(), 3, 1, 10, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sse_non_increasing_within_run() {
        let x = Array2::from_shape_fn((60, 3), |(i, j)| (((i * 7919 + j * 104729) % 1000) as f64 / 100.0).sin() * 5.0);
        let init = x.slice(ndarray::s![0..5, ..]).to_owned();
        let run = lloyd(x.view(), init, 300);
        for w in run.sse_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", run.sse_history);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let x = array![[0.0], [1.0], [2.0], [30.0]];
        // second centroid starts far from every point so it attracts none
        let run = lloyd(x.view(), array![[1.0], [1000.0]], 50);
        let used: std::collections::BTreeSet<_> = run.assignments.iter().collect();
        assert_eq!(used.len(), 2);
    }

    #[test]
    fn silhouette_of_two_tight_blobs() {
        let x = array![[0.0, 0.0], [0.01, 0.0], [0.0, 0.01], [100.0, 100.0], [100.01, 100.0], [100.0, 100.01]];
        let s: f64 = silhouette(x.view(), &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!(s > 0.9);
    }

    #[test]
    fn silhouette_of_split_blob_is_low() {
        // one blob of 8 evenly spaced points split into halves by index parity
        let x = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let s: f64 = silhouette(x.view(), &[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        assert!(s < 0.05, "{s}");
    }

    #[test]
    fn silhouette_needs_two_clusters() {
        let x = array![[0.0], [1.0]];
        assert!(silhouette(x.view(), &[0, 0]).is_err());
    }

    #[test]
    fn singleton_points_score_zero() {
        let x = array![[0.0], [0.1], [5.0]];
        // points 0 and 1: a = 0.1, b ≈ 4.95; point 2 contributes 0
        let s: f64 = silhouette(x.view(), &[0, 0, 1]).unwrap();
        let p0 = (5.0 - 0.1) / 5.0;
        let p1 = (4.9 - 0.1) / 4.9;
        assert!((s - (p0 + p1) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn select_k_table_and_argmax() {
        let mut rows = Vec::new();
        for c in 0..3 {
            for i in 0..10 {
                rows.push([c as f64 * 50.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]);
            }
        }
        let x = Array2::from_shape_fn((30, 2), |(i, j)| rows[i][j]);
        let ids: Vec<String> = (0..30).map(|i| format!("p{i}")).collect();
        let m = select_k(x.view(), &ids, 2..=6, 5, 100, 0).unwrap();
        assert_eq!(m.silhouette_table.len(), 5);
        assert_eq!(m.k, 3);
        let best = m.silhouette_table.values().cloned().fold(f64::MIN, f64::max);
        assert_eq!(m.silhouette_table[&m.k], best);
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(assign(&m, x.row(i)).unwrap(), m.train_assignments[id]);
        }
    }

    #[test]
    fn select_k_rejects_bad_range() {
        let x = Array2::<f64>::zeros((5, 2));
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        assert!(select_k(x.view(), &ids, 2..=5, 1, 10, 0).is_err());
        assert!(select_k(x.view(), &ids, 1..=3, 1, 10, 0).is_err());
    }

    #[test]
    fn assign_ties_and_exact_hits() {
        let m = ClusterModel {
            k: 2,
            centroids: array![[0.0, 0.0], [2.0, 0.0]],
            silhouette_table: BTreeMap::new(),
            train_assignments: BTreeMap::new(),
            sse: 0.0,
            meta: BTreeMap::new(),
        };
        assert_eq!(assign(&m, array![2.0, 0.0].view()).unwrap(), 1);
        assert_eq!(assign(&m, array![1.0, 5.0].view()).unwrap(), 0);
        assert!(assign(&m, array![1.0].view()).is_err());
    }

    #[test]
    fn one_hot_vectors() {
        assert_eq!(one_hot::<f64>(0, 2).unwrap(), array![1.0, 0.0]);
        assert_eq!(one_hot::<f64>(1, 2).unwrap(), array![0.0, 1.0]);
        assert!(one_hot::<f64>(2, 2).is_err());
        for k in 1..6 {
            for i in 0..k {
                assert_eq!(one_hot::<f32>(i, k).unwrap().sum(), 1.0);
            }
        }
    }
}
