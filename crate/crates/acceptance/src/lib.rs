//! Small oracles and a result ledger shared by the acceptance target.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::ArrayView2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        })
    }
}

/// Collects one line per criterion and prints it as soon as it is known.
#[derive(Default)]
pub struct Ledger {
    lines: Vec<(Verdict, String)>,
}

impl Ledger {
    pub fn record(&mut self, verdict: Verdict, name: &str, detail: impl fmt::Display) {
        println!("{verdict} {name}: {detail}");
        self.lines.push((verdict, name.to_string()));
    }

    pub fn check(&mut self, passed: bool, name: &str, detail: impl fmt::Display) {
        self.record(if passed { Verdict::Pass } else { Verdict::Fail }, name, detail);
    }

    pub fn failures(&self) -> Vec<&str> {
        self.lines.iter().filter(|(v, _)| *v == Verdict::Fail).map(|(_, n)| n.as_str()).collect()
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.lines.iter().filter(|(v, _)| *v == verdict).count()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sse_of(x: ArrayView2<f64>, labels: &[usize], k: usize) -> f64 {
    let d = x.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &c) in x.rows().into_iter().zip(labels) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    let means: Vec<Vec<f64>> =
        sums.iter().zip(&counts).map(|(s, &n)| s.iter().map(|v| v / n.max(1) as f64).collect()).collect();
    x.rows().into_iter().zip(labels).map(|(row, &c)| sq_dist(row.as_slice().unwrap(), &means[c])).sum()
}

/// Minimum two-cluster SSE over every split of the rows into two nonempty groups.
pub fn exhaustive_bipartition_sse(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows();
    assert!((2..=20).contains(&n));
    let mut best = f64::INFINITY;
    // the last point is pinned to group 0 so each split is visited once
    for mask in 1u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        best = best.min(sse_of(x, &labels, 2));
    }
    best
}

/// Mean silhouette computed straight from the pairwise distance definition.
pub fn silhouette_direct(x: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let n = x.nrows();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let dist = |i: usize, j: usize| sq_dist(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap()).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels.iter().filter(|&&l| l == labels[i]).count();
        if own == 1 {
            continue;
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c && j != i).collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64;
            if c == labels[i] {
                a = mean;
            } else {
                b = b.min(mean);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Fraction of players whose cluster's majority label matches their own.
pub fn purity(clusters: &BTreeMap<String, usize>, truth: &BTreeMap<String, usize>) -> f64 {
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (id, &c) in clusters {
        *table.entry(c).or_default().entry(truth[id]).or_default() += 1;
    }
    let majority: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / clusters.len() as f64
}
