//! Meta-learning tasks: small support/query sets of records that share
//! similar SIOPs.

use rand::seq::SliceRandom;
use rand::Rng;

use super::MetaError;

/// Indices into the dataset the sampler was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub anchor: usize,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
    /// SIOP scores of the anchor, unstandardized.
    pub centre_siop: Vec<f64>,
}

impl Task {
    pub fn k(&self) -> usize {
        self.support.len()
    }
}

/// Nearest-neighbour task construction in the standardized SIOP score space.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    raw: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

impl TaskSampler {
    pub fn new(scores: Vec<Vec<f64>>) -> Result<Self, MetaError> {
        let Some(first) = scores.first() else {
            return Err(MetaError::TooFewRecords { needed: 1, got: 0 });
        };
        let d = first.len();
        if let Some(bad) = scores.iter().find(|s| s.len() != d) {
            return Err(MetaError::Dimension { expected: d, got: bad.len() });
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetaError::NonFinite { what: "SIOP scores".into() });
        }
        let n = scores.len() as f64;
        let mut z = scores.clone();
        for j in 0..d {
            let mean = scores.iter().map(|s| s[j]).sum::<f64>() / n;
            let sd = (scores.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            // Rank-deficient directions carry no information; centre only.
            let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
            for row in z.iter_mut() {
                row[j] = (row[j] - mean) / scale;
            }
        }
        Ok(Self { raw: scores, z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// The anchor followed by its nearest neighbours, `count` in total.
    /// Ties are broken by index.
    pub fn neighbourhood(&self, anchor: usize, count: usize) -> Vec<usize> {
        let a = &self.z[anchor];
        let mut d: Vec<(f64, usize)> = self
            .z
            .iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>(), i))
            .collect();
        // The anchor always comes first, even when other records coincide with it.
        d[anchor].0 = f64::NEG_INFINITY;
        let count = count.min(d.len());
        if count < d.len() {
            d.select_nth_unstable_by(count, |p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            d.truncate(count);
        }
        d.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// A task of `k` support and `k` query records around a uniformly
    /// chosen anchor.
    pub fn sample(&self, k: usize, rng: &mut impl Rng) -> Result<Task, MetaError> {
        if k == 0 {
            return Err(MetaError::Config("task size must be at least 1".into()));
        }
        if self.len() < 2 * k {
            return Err(MetaError::TooFewRecords { needed: 2 * k, got: self.len() });
        }
        let anchor = rng.random_range(0..self.len());
        self.task_at(anchor, k, rng)
    }

    /// A task around a given anchor.
    pub fn task_at(&self, anchor: usize, k: usize, rng: &mut impl Rng) -> Result<Task, MetaError> {
        if self.len() < 2 * k {
            return Err(MetaError::TooFewRecords { needed: 2 * k, got: self.len() });
        }
        let mut members = self.neighbourhood(anchor, 2 * k);
        members.shuffle(rng);
        let query = members.split_off(k);
        Ok(Task { anchor, support: members, query, centre_siop: self.raw[anchor].clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_size_uses_everything() {
        let scores: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let s = TaskSampler::new(scores).unwrap();
        let t = s.sample(5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut all: Vec<usize> = t.support.iter().chain(&t.query).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(matches!(s.sample(6, &mut ChaCha8Rng::seed_from_u64(0)), Err(MetaError::TooFewRecords { .. })));
    }

    #[test]
    fn identical_records_do_not_crash() {
        let s = TaskSampler::new(vec![vec![1.0; 20]; 30]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=15 {
            let t = s.sample(k, &mut rng).unwrap();
            assert_eq!(t.support.len(), k);
            assert_eq!(t.query.len(), k);
            assert!(t.support.iter().all(|i| !t.query.contains(i)));
            assert!(t.support.contains(&t.anchor) || t.query.contains(&t.anchor));
        }
    }

    #[test]
    fn stays_inside_separated_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut scores = Vec::new();
        for c in 0..2 {
            for _ in 0..40 {
                scores.push((0..20).map(|_| 10.0 * c as f64 + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
            }
        }
        let s = TaskSampler::new(scores).unwrap();
        for trial in 0..50 {
            let t = s.sample(5 + trial % 15, &mut rng).unwrap();
            let cluster = t.anchor / 40;
            for i in t.support.iter().chain(&t.query) {
                assert_eq!(i / 40, cluster);
            }
            // Brute force: nobody outside the task is closer to the anchor
            // than the farthest member.
            let members: Vec<usize> = t.support.iter().chain(&t.query).copied().collect();
            let z = &s.z;
            let zdist = |i: usize| z[i].iter().zip(&z[t.anchor]).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let zworst = members.iter().map(|&i| zdist(i)).fold(0.0, f64::max);
            for i in (0..80).filter(|i| !members.contains(i)) {
                assert!(zdist(i) >= zworst);
            }
        }
    }

    #[test]
    fn seeded() {
        let scores: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let s = TaskSampler::new(scores).unwrap();
        let a = s.sample(7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = s.sample(7, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TaskSampler::new(vec![]).is_err());
        assert!(TaskSampler::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(TaskSampler::new(vec![vec![f64::NAN]]).is_err());
    }
}
