use serde::{Deserialize, Serialize};

/// Assignment of elements (points or patches) to clusters.
///
/// Cluster ids are contiguous `0..num_clusters`; `None` marks an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<Option<usize>>,
    pub num_clusters: usize,
}

impl Clustering {
    /// Label used for outliers in files and C buffers.
    pub const OUTLIER_LABEL: i64 = -1;

    /// Builds a clustering from groups of element indices; group `g` becomes cluster `g`.
    pub fn from_groups(len: usize, groups: &[Vec<usize>]) -> Self {
        let mut assignments = vec![None; len];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                assignments[m] = Some(g);
            }
        }
        Clustering { assignments, num_clusters: groups.len() }
    }

    /// Relabels arbitrary ids to contiguous ids in order of first appearance.
    pub fn from_labels(labels: &[i64]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignments = labels
            .iter()
            .map(|&l| {
                (l >= 0).then(|| {
                    let next = map.len();
                    *map.entry(l).or_insert(next)
                })
            })
            .collect();
        Clustering { assignments, num_clusters: map.len() }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn num_outliers(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    /// Element count of every cluster, indexed by cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_clusters];
        for a in self.assignments.iter().flatten() {
            s[*a] += 1;
        }
        s
    }

    /// Members of every cluster, indexed by cluster id.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.num_clusters];
        for (i, a) in self.assignments.iter().enumerate() {
            if let Some(c) = a {
                g[*c].push(i);
            }
        }
        g
    }

    /// Cluster ids as signed labels with outliers mapped to [`Self::OUTLIER_LABEL`].
    pub fn to_labels(&self) -> Vec<i64> {
        self.assignments.iter().map(|a| a.map_or(Self::OUTLIER_LABEL, |c| c as i64)).collect()
    }

    /// Checks contiguity of ids and that every id in range is used.
    pub fn is_valid(&self) -> bool {
        self.assignments.iter().flatten().all(|&c| c < self.num_clusters) && self.sizes().iter().all(|&s| s > 0)
    }
}
