//! Random forest classifier.
//!
//! Each tree is grown without pruning on a bootstrap sample of the training
//! set, choosing the best Gini split over a fresh random subset of `mtry`
//! features at every node. Prediction is a plain majority vote. Tree `t` draws
//! all of its randomness from ChaCha stream `t` of the forest seed, so
//! training in parallel gives exactly the sequential result.

pub mod split;
pub mod tree;

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use split::{best_split, gini, Split};
pub use tree::{argmax, Node, Tree};

use crate::embeddings::Cursor;
use crate::error::{Error, Result};
use crate::labels::ActivityLabel;
use tree::GrowParams;

const MAGIC: &[u8; 4] = b"GARF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per node; `None` uses floor(sqrt(dimension)).
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 200, mtry: None, min_leaf: 1, max_depth: None, seed: 0 }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, dim: usize) -> usize {
        self.mtry.unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Out-of-bag misclassification rate over points left out by some tree.
    pub oob_error: f64,
    /// Class order of vote vectors: the training labels, ascending.
    pub classes: Vec<ActivityLabel>,
    pub params: ForestParams,
    pub n_features: usize,
}

pub fn train_forest(x: &[Vec<f64>], y: &[ActivityLabel], params: &ForestParams) -> Result<ForestModel> {
    train_forest_with(x, y, params, Execution::Parallel)
}

pub fn train_forest_with(
    x: &[Vec<f64>],
    y: &[ActivityLabel],
    params: &ForestParams,
    execution: Execution,
) -> Result<ForestModel> {
    if x.len() != y.len() {
        return Err(Error::param(format!("{} feature rows but {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("forest needs at least 2 rows, got {}", x.len())));
    }
    let dim = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
    }
    if params.n_trees == 0 {
        return Err(Error::param("n_trees must be at least 1"));
    }
    let mtry = params.resolved_mtry(dim);
    if mtry == 0 || mtry > dim {
        return Err(Error::param(format!("mtry {mtry} outside 1..={dim}")));
    }

    let mut classes: Vec<ActivityLabel> = y.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() == 1 {
        log::warn!("training forest on a single class ({}); every prediction will be that class", classes[0]);
    }
    let yi: Vec<usize> = y.iter().map(|l| classes.binary_search(l).unwrap()).collect();
    let columns: Vec<Vec<f64>> = (0..dim).map(|f| x.iter().map(|r| r[f]).collect()).collect();
    let grow = GrowParams {
        n_classes: classes.len(),
        mtry,
        min_leaf: params.min_leaf.max(1),
        max_depth: params.max_depth,
    };
    let n = x.len();

    let build = |t: usize| -> (Tree, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64);
        let mut in_bag = vec![false; n];
        let samples: Vec<usize> = (0..n)
            .map(|_| {
                let i = rng.random_range(0..n);
                in_bag[i] = true;
                i
            })
            .collect();
        (Tree::grow(&columns, &yi, samples, &grow, &mut rng), in_bag)
    };
    let built: Vec<(Tree, Vec<bool>)> = match execution {
        Execution::Sequential => (0..params.n_trees).map(build).collect(),
        Execution::Parallel => (0..params.n_trees).into_par_iter().map(build).collect(),
    };

    let mut oob_votes = vec![vec![0u32; classes.len()]; n];
    for (tree, in_bag) in &built {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_votes[i][tree.predict(&x[i])] += 1;
        }
    }
    let (mut wrong, mut counted) = (0usize, 0usize);
    for (votes, &truth) in oob_votes.iter().zip(&yi) {
        if votes.iter().any(|&v| v > 0) {
            counted += 1;
            wrong += usize::from(argmax(votes) != truth);
        }
    }
    let oob_error = if counted == 0 { 0.0 } else { wrong as f64 / counted as f64 };

    Ok(ForestModel {
        trees: built.into_iter().map(|(t, _)| t).collect(),
        oob_error,
        classes,
        params: *params,
        n_features: dim,
    })
}

impl ForestModel {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: x.len() });
        }
        Ok(())
    }

    /// Number of trees voting for each class.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<u32>> {
        self.check_dim(x)?;
        let mut votes = vec![0u32; self.classes.len()];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        Ok(votes)
    }

    /// Fraction of trees voting for each class, in `classes` order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.trees.len() as f64;
        Ok(self.votes(x)?.into_iter().map(|v| v as f64 / n).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<ActivityLabel> {
        Ok(self.classes[argmax(&self.votes(x)?)])
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.params.n_trees as u32).to_le_bytes());
        buf.extend_from_slice(&(self.params.resolved_mtry(self.n_features) as u32).to_le_bytes());
        buf.extend_from_slice(&(self.params.min_leaf as u32).to_le_bytes());
        buf.extend_from_slice(&(self.params.max_depth.unwrap_or(0) as u32).to_le_bytes());
        buf.extend_from_slice(&self.params.seed.to_le_bytes());
        buf.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        buf.extend_from_slice(&self.oob_error.to_le_bytes());
        buf.push(self.classes.len() as u8);
        buf.extend(self.classes.iter().map(|c| c.index() as u8));
        for tree in &self.trees {
            write_preorder(tree, 0, &mut buf);
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "not a forest model (bad magic)"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n_trees = cur.u32()? as usize;
        let mtry = cur.u32()? as usize;
        let min_leaf = cur.u32()? as usize;
        let max_depth = cur.u32()? as usize;
        let seed = cur.u64()?;
        let n_features = cur.u32()? as usize;
        let oob_error = cur.f64()?;
        let n_classes = cur.u8()? as usize;
        let classes = (0..n_classes)
            .map(|_| {
                let c = cur.u8()?;
                ActivityLabel::from_index(c as usize).ok_or_else(|| Error::format(path, format!("bad class code {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let mut tree = Tree { nodes: Vec::new() };
            read_preorder(&mut cur, &mut tree, n_classes, n_features, 0)?;
            trees.push(tree);
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after trees"));
        }
        Ok(Self {
            trees,
            oob_error,
            classes,
            params: ForestParams {
                n_trees,
                mtry: Some(mtry),
                min_leaf,
                max_depth: (max_depth > 0).then_some(max_depth),
                seed,
            },
            n_features,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

fn write_preorder(tree: &Tree, i: usize, buf: &mut Vec<u8>) {
    match &tree.nodes[i] {
        Node::Leaf { counts } => {
            buf.push(0);
            for c in counts {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        Node::Internal { feature, threshold, left, right } => {
            buf.push(1);
            buf.extend_from_slice(&(*feature as u32).to_le_bytes());
            buf.extend_from_slice(&threshold.to_le_bytes());
            write_preorder(tree, *left, buf);
            write_preorder(tree, *right, buf);
        }
    }
}

fn read_preorder(cur: &mut Cursor<'_>, tree: &mut Tree, n_classes: usize, n_features: usize, depth: usize) -> Result<usize> {
    if depth > 100_000 {
        return Err(Error::format(cur.path, "tree too deep"));
    }
    let id = tree.nodes.len();
    match cur.u8()? {
        0 => {
            let counts = (0..n_classes).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
            tree.nodes.push(Node::Leaf { counts });
        }
        1 => {
            let feature = cur.u32()? as usize;
            if feature >= n_features {
                return Err(Error::format(cur.path, format!("split feature {feature} out of range")));
            }
            let threshold = cur.f64()?;
            tree.nodes.push(Node::Leaf { counts: Vec::new() });
            let left = read_preorder(cur, tree, n_classes, n_features, depth + 1)?;
            let right = read_preorder(cur, tree, n_classes, n_features, depth + 1)?;
            tree.nodes[id] = Node::Internal { feature, threshold, left, right };
        }
        tag => return Err(Error::format(cur.path, format!("bad node tag {tag}"))),
    }
    Ok(id)
}
