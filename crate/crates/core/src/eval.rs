//! K-ary neighborhood agreement `Q_n(K)` and its rescaled form `R_n(K)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, DenseMatrix};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodScore {
    pub k: usize,
    /// Average fraction of shared K-nearest neighbors.
    pub q: f64,
    /// `((n - 1) Q - K) / (n - 1 - K)`: 0 for random neighborhoods, 1 for
    /// perfect agreement.
    pub r: f64,
}

/// Rescaled agreement from `Q`.
pub fn rescale(q: f64, k: usize, n: usize) -> f64 {
    let m = (n - 1) as f64;
    (m * q - k as f64) / (m - k as f64)
}

/// The `k` nearest neighbors of every row, excluding the row itself, ordered
/// by squared distance with ties going to the smaller index.
pub fn neighbor_sets(points: &DenseMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = points.rows();
    par::map_indices(n, |i| {
        let pi = points.row(i);
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(pi, points.row(j)), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.truncate(k);
        others.into_iter().map(|(_, j)| j).collect()
    })
}

/// Agreement between the K-ary neighborhoods of `x` and `z`.
pub fn kary_agreement(x: &DenseMatrix, z: &DenseMatrix, k: usize) -> Result<NeighborhoodScore> {
    let n = x.rows();
    if z.rows() != n {
        return Err(Error::Contract(format!(
            "{n} input rows but {} embedded rows",
            z.rows()
        )));
    }
    if n < 3 || k < 1 || k > n - 2 {
        return Err(Error::Parameter(format!(
            "K must lie in [1, n - 2] = [1, {}], got {k}",
            n.saturating_sub(2)
        )));
    }
    let nx = neighbor_sets(x, k);
    let nz = neighbor_sets(z, k);
    let shared = par::map_indices(n, |i| {
        let mut mark = vec![false; n];
        for &j in &nx[i] {
            mark[j] = true;
        }
        nz[i].iter().filter(|&&j| mark[j]).count()
    });
    let total: usize = shared.into_iter().sum();
    let q = total as f64 / (k * n) as f64;
    Ok(NeighborhoodScore {
        k,
        q,
        r: rescale(q, k, n),
    })
}

/// Neighborhood size given as an absolute count (`125`), a fraction of `n`
/// (`0.25`) or `n/<d>` (`n/4`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KSpec {
    Count(usize),
    Fraction(f64),
    Divisor(usize),
}

impl KSpec {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            KSpec::Count(k) => k,
            KSpec::Fraction(f) => (f * n as f64).floor() as usize,
            KSpec::Divisor(d) => n / d,
        }
    }
}

impl std::str::FromStr for KSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parameter(format!("cannot parse neighborhood size '{s}'"));
        if let Some(d) = s.strip_prefix("n/") {
            let d: usize = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(KSpec::Divisor(d));
        }
        if let Ok(k) = s.parse::<usize>() {
            return Ok(KSpec::Count(k));
        }
        let f: f64 = s.parse().map_err(|_| bad())?;
        if !(f > 0.0 && f < 1.0) {
            return Err(bad());
        }
        Ok(KSpec::Fraction(f))
    }
}
