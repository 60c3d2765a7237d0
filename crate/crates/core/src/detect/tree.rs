use std::collections::VecDeque;

use crate::{Error, Result};

use super::{Detection, DetectorKind};

/// CART-style decision tree over fixed-length real feature vectors, with
/// Gini impurity and deterministic tie-breaking (lowest feature index,
/// lowest threshold).
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

const MAX_DEPTH: usize = 16;

/// Trains a phase classifier from PC feature windows.
pub fn dt_train(windows: &[Vec<f64>], labels: &[usize]) -> Result<DecisionTree> {
    if windows.is_empty() || windows.len() != labels.len() {
        return Err(Error::Train("windows and labels must be nonempty and equal length".into()));
    }
    let n_features = windows[0].len();
    if windows.iter().any(|w| w.len() != n_features) {
        return Err(Error::Train("ragged feature vectors".into()));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Train("need at least 2 distinct labels".into()));
    }
    let mut tree = DecisionTree { nodes: Vec::new(), n_features };
    let idx: Vec<usize> = (0..windows.len()).collect();
    tree.build(windows, labels, idx, 0);
    Ok(tree)
}

impl DecisionTree {
    fn build(&mut self, xs: &[Vec<f64>], ys: &[usize], idx: Vec<usize>, depth: usize) -> usize {
        let majority = mode_of(idx.iter().map(|&i| ys[i]));
        let pure = idx.iter().all(|&i| ys[i] == ys[idx[0]]);
        if pure || depth >= MAX_DEPTH {
            self.nodes.push(Node::Leaf { class: majority });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold)) = best_split(xs, ys, &idx, self.n_features) else {
            self.nodes.push(Node::Leaf { class: majority });
            return self.nodes.len() - 1;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| xs[i][feature] <= threshold);
        if li.is_empty() || ri.is_empty() {
            self.nodes.push(Node::Leaf { class: majority });
            return self.nodes.len() - 1;
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority }); // placeholder
        let left = self.build(xs, ys, li, depth + 1);
        let right = self.build(xs, ys, ri, depth + 1);
        self.nodes[slot] = Node::Split { feature, threshold, left, right };
        slot
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        assert_eq!(features.len(), self.n_features, "feature length mismatch");
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if features[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| self.predict(x) == y)
            .count();
        hits as f64 / xs.len() as f64
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn best_split(xs: &[Vec<f64>], ys: &[usize], idx: &[usize], n_features: usize) -> Option<(usize, f64)> {
    let n_classes = idx.iter().map(|&i| ys[i]).max().unwrap() + 1;
    let total = idx.len();
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for f in 0..n_features {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            xs[a][f]
                .partial_cmp(&xs[b][f])
                .expect("finite features")
                .then(a.cmp(&b))
        });
        let mut left_counts = vec![0usize; n_classes];
        let mut right_counts = vec![0usize; n_classes];
        for &i in &order {
            right_counts[ys[i]] += 1;
        }
        for k in 0..total - 1 {
            let i = order[k];
            left_counts[ys[i]] += 1;
            right_counts[ys[i]] -= 1;
            let (a, b) = (xs[i][f], xs[order[k + 1]][f]);
            if a == b {
                continue;
            }
            let threshold = (a + b) / 2.0;
            let nl = k + 1;
            let nr = total - nl;
            let impurity = (nl as f64 * gini(&left_counts, nl)
                + nr as f64 * gini(&right_counts, nr))
                / total as f64;
            let better = match best {
                None => true,
                Some((bi, bf, bt)) => {
                    impurity < bi - 1e-12
                        || ((impurity - bi).abs() <= 1e-12 && (f, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((impurity, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn mode_of(vals: impl Iterator<Item = usize>) -> usize {
    let mut counts: Vec<usize> = Vec::new();
    for v in vals {
        if v >= counts.len() {
            counts.resize(v + 1, 0);
        }
        counts[v] += 1;
    }
    // Lowest class id wins ties.
    counts
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Hard DT detector: fires whenever two consecutive phase predictions
/// differ.
pub struct DtDetector {
    tree: DecisionTree,
    last: Option<usize>,
    samples_seen: usize,
}

impl DtDetector {
    pub fn new(tree: DecisionTree) -> Self {
        Self { tree, last: None, samples_seen: 0 }
    }

    pub fn update(&mut self, features: &[f64]) -> Option<Detection> {
        self.samples_seen += 1;
        let pred = self.tree.predict(features);
        let fired = self.last.is_some_and(|prev| prev != pred);
        self.last = Some(pred);
        fired.then(|| Detection {
            index: self.samples_seen - 1,
            kind: DetectorKind::Dt,
        })
    }
}

/// Soft DT detector: predictions go through a result queue; a transition is
/// reported when the modes of the older and newer halves differ and the
/// newer mode is not the last reported phase.
pub struct SoftDtDetector {
    tree: DecisionTree,
    queue: VecDeque<usize>,
    capacity: usize,
    last_report: Option<usize>,
    samples_seen: usize,
}

impl SoftDtDetector {
    pub fn new(tree: DecisionTree, queue_len: usize) -> Result<Self> {
        if queue_len == 0 || queue_len % 2 != 0 {
            return Err(Error::Detector("result queue length must be even and nonzero".into()));
        }
        Ok(Self {
            tree,
            queue: VecDeque::with_capacity(queue_len),
            capacity: queue_len,
            last_report: None,
            samples_seen: 0,
        })
    }

    pub fn update(&mut self, features: &[f64]) -> Option<Detection> {
        self.samples_seen += 1;
        if self.queue.len() == self.capacity {
            self.queue.pop_front();
        }
        self.queue.push_back(self.tree.predict(features));
        if self.queue.len() < self.capacity {
            return None;
        }
        let half = self.capacity / 2;
        let older = mode_of(self.queue.iter().take(half).copied());
        let newer = mode_of(self.queue.iter().skip(half).copied());
        if older != newer && self.last_report != Some(newer) {
            self.last_report = Some(newer);
            return Some(Detection {
                index: self.samples_seen - 1,
                kind: DetectorKind::SoftDt,
            });
        }
        None
    }
}
