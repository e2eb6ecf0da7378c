//! Depth-limited least-squares regression trees with exact greedy splits.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Node 0 is the root. Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// Feature columns with each column's sample order precomputed once, so
/// every tree fitted on the same data can reuse it.
pub struct PresortedData<'a> {
    columns: &'a [Vec<f64>],
    order: Vec<Vec<u32>>,
    n: usize,
}

impl<'a> PresortedData<'a> {
    pub fn new(columns: &'a [Vec<f64>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { columns, order, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Default)]
struct Scan {
    count: usize,
    sum: f64,
    last: Option<f64>,
}

const NOT_ACTIVE: usize = usize::MAX;

impl RegressionTree {
    /// Fits `targets` level by level: at each depth every open node scans
    /// all features in presorted order once and takes the split with the
    /// largest squared-error reduction. Ties keep the earliest feature and
    /// the smallest threshold.
    pub fn fit(data: &PresortedData<'_>, targets: &[f64], params: TreeParams) -> Self {
        let n = data.len();
        assert_eq!(targets.len(), n);
        let min_leaf = params.min_samples_leaf.max(1);

        // Arena nodes plus per-node (count, sum) of targets.
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stats = vec![(n, targets.iter().sum::<f64>())];
        let mut node_of = vec![0usize; n];
        let mut open = vec![0usize];

        for _depth in 0..params.max_depth {
            let splittable: Vec<usize> = open
                .iter()
                .copied()
                .filter(|&id| stats[id].0 >= 2 * min_leaf)
                .collect();
            if splittable.is_empty() {
                break;
            }
            // Map arena id -> slot among splittable nodes.
            let mut slot = vec![NOT_ACTIVE; nodes.len()];
            for (s, &id) in splittable.iter().enumerate() {
                slot[id] = s;
            }
            let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];

            for (feature, order) in data.order.iter().enumerate() {
                let col = &data.columns[feature];
                let mut scans = vec![Scan::default(); splittable.len()];
                for &i in order {
                    let i = i as usize;
                    let s = slot[node_of[i]];
                    if s == NOT_ACTIVE {
                        continue;
                    }
                    let x = col[i];
                    let scan = &mut scans[s];
                    if let Some(last) = scan.last {
                        let (count, total) = stats[splittable[s]];
                        let right = count - scan.count;
                        if x > last && scan.count >= min_leaf && right >= min_leaf {
                            let sum_r = total - scan.sum;
                            let gain = scan.sum * scan.sum / scan.count as f64
                                + sum_r * sum_r / right as f64
                                - total * total / count as f64;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature,
                                    threshold: last + (x - last) / 2.0,
                                });
                            }
                        }
                    }
                    scan.count += 1;
                    scan.sum += targets[i];
                    scan.last = Some(x);
                }
            }

            let mut next_open = Vec::new();
            let mut split_of = vec![None; nodes.len()];
            for (s, &id) in splittable.iter().enumerate() {
                let Some(c) = best[s] else { continue };
                if !(c.gain > 1e-12 * (1.0 + stats[id].1.abs())) {
                    continue;
                }
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                stats.push((0, 0.0));
                stats.push((0, 0.0));
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                split_of[id] = Some((c.feature, c.threshold, left));
                next_open.extend([left, left + 1]);
            }
            if next_open.is_empty() {
                break;
            }
            for i in 0..n {
                if let Some((feature, threshold, left)) = split_of[node_of[i]] {
                    let child = if data.columns[feature][i] <= threshold {
                        left
                    } else {
                        left + 1
                    };
                    node_of[i] = child;
                    stats[child].0 += 1;
                    stats[child].1 += targets[i];
                }
            }
            open = next_open;
        }

        for (id, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                let (count, sum) = stats[id];
                *value = if count > 0 { sum / count as f64 } else { 0.0 };
            }
        }
        Self::preorder_layout(&nodes)
    }

    /// Re-lays an arena out in preorder, the same layout `from_preorder`
    /// produces.
    fn preorder_layout(arena: &[Node]) -> Self {
        fn walk(arena: &[Node], id: usize, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            match arena[id] {
                Node::Leaf { value } => out.push(Node::Leaf { value }),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(Node::Leaf { value: 0.0 });
                    let l = walk(arena, left, out);
                    let r = walk(arena, right, out);
                    out[at] = Node::Split {
                        feature,
                        threshold,
                        left: l,
                        right: r,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::with_capacity(arena.len());
        walk(arena, 0, &mut nodes);
        Self { nodes }
    }

    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Preorder token list: `S <feature> <threshold>` for splits, `L <value>`
    /// for leaves.
    pub fn to_preorder(&self) -> String {
        fn walk(nodes: &[Node], id: usize, out: &mut Vec<String>) {
            match nodes[id] {
                Node::Leaf { value } => {
                    out.push("L".into());
                    out.push(crate::sidecar::fmt_f64(value));
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push("S".into());
                    out.push(feature.to_string());
                    out.push(crate::sidecar::fmt_f64(threshold));
                    walk(nodes, left, out);
                    walk(nodes, right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nodes, 0, &mut out);
        out.join(" ")
    }

    pub fn from_preorder(text: &str, n_features: usize) -> Result<Self> {
        fn bad(msg: &str) -> Error {
            Error::Schema(format!("malformed tree: {msg}"))
        }
        fn build<'t>(
            tokens: &mut impl Iterator<Item = &'t str>,
            nodes: &mut Vec<Node>,
            n_features: usize,
            depth: usize,
        ) -> Result<usize> {
            if depth > 64 {
                return Err(bad("too deep"));
            }
            let num = |tok: Option<&str>| -> Result<f64> {
                tok.and_then(|t| t.parse().ok())
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| bad("bad number"))
            };
            let id = nodes.len();
            match tokens.next() {
                Some("L") => {
                    let value = num(tokens.next())?;
                    nodes.push(Node::Leaf { value });
                }
                Some("S") => {
                    let feature: usize = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .filter(|&f| f < n_features)
                        .ok_or_else(|| bad("bad feature index"))?;
                    let threshold = num(tokens.next())?;
                    nodes.push(Node::Leaf { value: 0.0 });
                    let left = build(tokens, nodes, n_features, depth + 1)?;
                    let right = build(tokens, nodes, n_features, depth + 1)?;
                    nodes[id] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                }
                _ => return Err(bad("expected S or L")),
            }
            Ok(id)
        }
        let mut tokens = text.split_whitespace();
        let mut nodes = Vec::new();
        build(&mut tokens, &mut nodes, n_features, 0)?;
        if tokens.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        Ok(Self { nodes })
    }
}
