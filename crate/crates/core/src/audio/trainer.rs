//! Small random-forest trainer used to regenerate the bundled model.
//!
//! Gini-impurity CART trees on bootstrap resamples, with a random feature
//! subset tried at every split. Deterministic for a given seed.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{ModelError, Tree, TreeEnsemble, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_split: usize,
    /// Features tried per split; 0 means `sqrt(n_features)`.
    pub max_features: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { n_trees: 10, max_depth: 6, min_split: 2, max_features: 0, seed: 7 }
    }
}

pub fn train_forest(
    x: &[Vec<f64>],
    y: &[usize],
    labels: &[&str],
    cfg: &TrainConfig,
) -> Result<TreeEnsemble, ModelError> {
    let n_features = x.first().map_or(0, Vec::len);
    if x.is_empty() || x.len() != y.len() || x.iter().any(|r| r.len() != n_features) {
        return Err(ModelError::Invalid("training rows are empty or ragged".into()));
    }
    if y.iter().any(|&c| c >= labels.len()) {
        return Err(ModelError::Invalid("label index out of range".into()));
    }
    let max_features = match cfg.max_features {
        0 => ((n_features as f64).sqrt().round() as usize).max(1),
        m => m.min(n_features),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trees = (0..cfg.n_trees)
        .map(|_| {
            let rows: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
            let mut b = Builder { x, y, n_labels: labels.len(), max_features, cfg, rng: &mut rng, nodes: Vec::new() };
            b.grow(rows, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    let model = TreeEnsemble { labels: labels.iter().map(|s| s.to_string()).collect(), n_features, trees };
    model.validate()?;
    Ok(model)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_labels: usize,
    max_features: usize,
    cfg: &'a TrainConfig,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_labels];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    /// Appends the subtree for `rows` and returns its root id.
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        self.nodes.push(TreeNode::Leaf { votes: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.cfg.max_depth || rows.len() < self.cfg.min_split {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &counts) else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    fn best_split(&mut self, rows: &[usize], counts: &[u32]) -> Option<(usize, f64)> {
        let n = rows.len() as u32;
        let parent = gini(counts, n);
        let n_features = self.x[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample(self.rng, n_features, self.max_features).into_vec() {
            let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x[r][feature], self.y[r])).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u32; self.n_labels];
            for k in 0..sorted.len() - 1 {
                left[sorted[k].1] += 1;
                if sorted[k].0 == sorted[k + 1].0 {
                    continue;
                }
                let nl = k as u32 + 1;
                let right: Vec<u32> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let impurity = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, (sorted[k].0 + sorted[k + 1].0) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
