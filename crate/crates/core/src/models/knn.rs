//! Fingerprint localizers over raw RSS vectors.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::geometry::GroundPoint;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_M: usize = 3;
pub const DEFAULT_EPS_D: f64 = 1e-9;

/// Database of `(rss, position)` fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintDb {
    dims: usize,
    entries: Vec<(Vec<f64>, GroundPoint)>,
    pub k: usize,
    /// Neighbors blended by [`FingerprintDb::knn_interp_predict`].
    pub m_interp: usize,
    /// Added to RSS distances before inverting them into weights.
    pub eps_d: f64,
}

impl FingerprintDb {
    pub fn new(entries: Vec<(Vec<f64>, GroundPoint)>, k: usize, m_interp: usize) -> Result<Self, ModelError> {
        let dims = entries.first().map(|e| e.0.len()).ok_or(ModelError::EmptyInput)?;
        if let Some(bad) = entries.iter().find(|e| e.0.len() != dims) {
            return Err(ModelError::DimensionMismatch { expected: dims, got: bad.0.len() });
        }
        if k == 0 || k > entries.len() {
            return Err(ModelError::InvalidConfig(format!("k must be in 1..={}, got {k}", entries.len())));
        }
        if m_interp == 0 || m_interp > k {
            return Err(ModelError::InvalidConfig(format!("m_interp must be in 1..={k}, got {m_interp}")));
        }
        Ok(Self { dims, entries, k, m_interp, eps_d: DEFAULT_EPS_D })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[f64], GroundPoint)> {
        self.entries.iter().map(|(r, p)| (r.as_slice(), *p))
    }

    /// The `count` nearest entries as `(distance, index)`, nearest first,
    /// ties broken by lower index.
    pub fn nearest(&self, rss: &[f64], count: usize) -> Result<Vec<(f64, usize)>, ModelError> {
        if rss.len() != self.dims {
            return Err(ModelError::DimensionMismatch { expected: self.dims, got: rss.len() });
        }
        let mut d2: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (e, _))| (e.iter().zip(rss).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let count = count.min(d2.len());
        if count < d2.len() {
            d2.select_nth_unstable_by(count, cmp);
            d2.truncate(count);
        }
        d2.sort_by(cmp);
        Ok(d2.into_iter().map(|(d, i)| (d.sqrt(), i)).collect())
    }

    /// Centroid of the `k` nearest fingerprints.
    pub fn knn_predict(&self, rss: &[f64]) -> Result<GroundPoint, ModelError> {
        let nn = self.nearest(rss, self.k)?;
        let n = nn.len() as f64;
        let (sx, sy) = nn.iter().fold((0.0, 0.0), |(sx, sy), &(_, i)| {
            let p = self.entries[i].1;
            (sx + p.x, sy + p.y)
        });
        Ok(GroundPoint::new(sx / n, sy / n))
    }

    /// Inverse-distance blend of the `m_interp` nearest fingerprints.
    pub fn knn_interp_predict(&self, rss: &[f64]) -> Result<GroundPoint, ModelError> {
        let nn = self.nearest(rss, self.m_interp)?;
        if nn[0].0 == 0.0 {
            return Ok(self.entries[nn[0].1].1);
        }
        let weights: Vec<f64> = nn.iter().map(|(d, _)| 1.0 / (d + self.eps_d)).collect();
        let total: f64 = weights.iter().sum();
        let (sx, sy) = nn.iter().zip(&weights).fold((0.0, 0.0), |(sx, sy), (&(_, i), w)| {
            let p = self.entries[i].1;
            let w = w / total;
            (sx + w * p.x, sy + w * p.y)
        });
        Ok(GroundPoint::new(sx, sy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_entry_db(k: usize, m: usize) -> FingerprintDb {
        FingerprintDb::new(
            vec![(vec![-40.0, -50.0], GroundPoint::new(0.0, 0.0)), (vec![-70.0, -40.0], GroundPoint::new(4.0, 6.0))],
            k,
            m,
        )
        .unwrap()
    }

    #[test]
    fn nearest_by_inspection() {
        let db = two_entry_db(1, 1);
        assert_eq!(db.knn_predict(&[-41.0, -51.0]).unwrap(), GroundPoint::new(0.0, 0.0));
        assert_eq!(db.knn_predict(&[-70.0, -40.0]).unwrap(), GroundPoint::new(4.0, 6.0));
    }

    #[test]
    fn interp_midpoint_and_exact_match() {
        let db = two_entry_db(2, 2);
        let mid = db.knn_interp_predict(&[-55.0, -45.0]).unwrap();
        assert!((mid.x - 2.0).abs() < 1e-12 && (mid.y - 3.0).abs() < 1e-12);
        assert_eq!(db.knn_interp_predict(&[-40.0, -50.0]).unwrap(), GroundPoint::new(0.0, 0.0));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let db = FingerprintDb::new(
            vec![(vec![0.0], GroundPoint::new(1.0, 0.0)), (vec![2.0], GroundPoint::new(2.0, 0.0))],
            1,
            1,
        )
        .unwrap();
        assert_eq!(db.knn_predict(&[1.0]).unwrap(), GroundPoint::new(1.0, 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let db = two_entry_db(1, 1);
        assert_eq!(db.knn_predict(&[1.0]), Err(ModelError::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn constructor_checks() {
        let e = vec![(vec![0.0], GroundPoint::default())];
        assert!(FingerprintDb::new(e.clone(), 2, 1).is_err());
        assert!(FingerprintDb::new(e.clone(), 1, 2).is_err());
        assert!(FingerprintDb::new(vec![], 1, 1).is_err());
        assert!(FingerprintDb::new(vec![(vec![0.0], GroundPoint::default()), (vec![0.0, 1.0], GroundPoint::default())], 1, 1).is_err());
    }

    #[test]
    fn interp_m1_equals_knn_k1() {
        let mut rng = crate::seed::rng(3, "test", 0);
        let entries: Vec<_> = (0..50)
            .map(|_| {
                (
                    (0..3).map(|_| rng.random_range(-90.0..-30.0)).collect(),
                    GroundPoint::new(rng.random_range(0.0..4.0), rng.random_range(0.0..6.0)),
                )
            })
            .collect();
        let db = FingerprintDb::new(entries, 1, 1).unwrap();
        for _ in 0..200 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-90.0..-30.0)).collect();
            assert_eq!(db.knn_predict(&q).unwrap(), db.knn_interp_predict(&q).unwrap());
        }
    }
}
