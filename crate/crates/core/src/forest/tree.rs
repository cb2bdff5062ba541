use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::split::best_split;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        counts: Vec<u32>,
    },
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Unpruned classification tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Class of the largest count, lowest index on ties.
pub fn argmax(counts: &[u32]) -> usize {
    counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > counts[best] { i } else { best })
}

pub(crate) struct GrowParams {
    pub n_classes: usize,
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Tree {
    pub(crate) fn grow(
        columns: &[Vec<f64>],
        y: &[usize],
        samples: Vec<usize>,
        params: &GrowParams,
        rng: &mut ChaCha8Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        let mut features: Vec<usize> = (0..columns.len()).collect();
        tree.grow_node(columns, y, samples, 0, params, &mut features, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_node(
        &mut self,
        columns: &[Vec<f64>],
        y: &[usize],
        samples: Vec<usize>,
        depth: usize,
        params: &GrowParams,
        features: &mut [usize],
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        let mut counts = vec![0u32; params.n_classes];
        for &i in &samples {
            counts[y[i]] += 1;
        }
        self.nodes.push(Node::Leaf { counts: counts.clone() });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = params.max_depth.is_some_and(|d| depth >= d);
        if pure || too_deep || samples.len() < 2 * params.min_leaf {
            return id;
        }

        // Partial Fisher-Yates: the first mtry entries become this node's subset.
        let d = features.len();
        for k in 0..params.mtry.min(d) {
            let j = rng.random_range(k..d);
            features.swap(k, j);
        }
        let chosen: Vec<usize> = features[..params.mtry.min(d)].to_vec();
        let Some(split) = best_split(columns, y, params.n_classes, &samples, &chosen, params.min_leaf) else {
            return id;
        };

        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&i| columns[split.feature][i] <= split.threshold);
        let l = self.grow_node(columns, y, left, depth + 1, params, features, rng);
        let r = self.grow_node(columns, y, right, depth + 1, params, features, rng);
        self.nodes[id] = Node::Internal { feature: split.feature, threshold: split.threshold, left: l, right: r };
        id
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Internal { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}
