//! Divide-and-merge training over a tree of hidden-neuron blocks.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use rayon::prelude::*;

use super::direct::{check_samples, dual_blocks, primal_blocks, KERNEL_NAME};
use super::merge::MergeOperands;
use super::woodbury::merge_dual_blocks;
use super::RidgeConfig;
use crate::error::{ElmError, Result};
use crate::linalg::{self, SpdFactor};
use crate::model::{compute_hidden_matrix, HiddenMatrix, LabelMatrix, OutputWeight, RandomFeatureMap};

/// How the hidden neurons are divided into subnetworks.
///
/// Textual form: a comma list of block sizes is one level (`2000,2000`),
/// brackets nest (`[1000,1000],[1000,1000]`). Outer brackets are optional,
/// so `[[2,2],[2,2]]` and `[2,2],[2,2]` are the same tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionTree {
    Leaf(usize),
    Node(Vec<PartitionTree>),
}

impl PartitionTree {
    /// `parts` leaves under one root, sizes differing by at most one.
    pub fn even(total: usize, parts: usize) -> Result<Self> {
        if parts == 0 || parts > total {
            return Err(ElmError::invalid(format!("cannot split {total} neurons into {parts} blocks")));
        }
        let leaves = (0..parts)
            .map(|i| PartitionTree::Leaf(total / parts + usize::from(i < total % parts)))
            .collect();
        Ok(PartitionTree::Node(leaves))
    }

    /// Leaf sizes, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            PartitionTree::Leaf(m) => out.push(*m),
            PartitionTree::Node(children) => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn total(&self) -> usize {
        self.leaves().iter().sum()
    }

    pub fn depth(&self) -> usize {
        match self {
            PartitionTree::Leaf(_) => 0,
            PartitionTree::Node(children) => 1 + children.iter().map(Self::depth).max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PartitionTree::Leaf(0) => Err(ElmError::invalid("partition has an empty block")),
            PartitionTree::Leaf(_) => Ok(()),
            PartitionTree::Node(children) if children.is_empty() => {
                Err(ElmError::invalid("partition has a node without children"))
            }
            PartitionTree::Node(children) => children.iter().try_for_each(Self::validate),
        }
    }
}

impl fmt::Display for PartitionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionTree::Leaf(m) => write!(f, "{m}"),
            PartitionTree::Node(children) => {
                f.write_str("[")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl FromStr for PartitionTree {
    type Err = ElmError;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parser = Parser { chars: &chars, pos: 0 };
        let mut items = parser.list()?;
        if parser.pos != chars.len() {
            return Err(parser.error("unexpected character"));
        }
        let tree = match items.len() {
            1 if matches!(items[0], PartitionTree::Node(_)) => items.remove(0),
            _ => PartitionTree::Node(items),
        };
        tree.validate()?;
        Ok(tree)
    }
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> ElmError {
        ElmError::invalid(format!("bad partition: {what} at position {}", self.pos))
    }

    fn list(&mut self) -> Result<Vec<PartitionTree>> {
        let mut items = vec![self.item()?];
        while self.chars.get(self.pos) == Some(&',') {
            self.pos += 1;
            items.push(self.item()?);
        }
        Ok(items)
    }

    fn item(&mut self) -> Result<PartitionTree> {
        match self.chars.get(self.pos) {
            Some('[') => {
                self.pos += 1;
                let items = self.list()?;
                if self.chars.get(self.pos) != Some(&']') {
                    return Err(self.error("expected ']'"));
                }
                self.pos += 1;
                Ok(PartitionTree::Node(items))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().collect();
                digits
                    .parse()
                    .map(PartitionTree::Leaf)
                    .map_err(|_| self.error("block size out of range"))
            }
            _ => Err(self.error("expected a block size or '['")),
        }
    }
}

/// A trained subnetwork: its hidden columns, weight, and whichever
/// regularized systems have been factorized so far.
struct Subtree<'h> {
    blocks: Vec<MatRef<'h, f64>>,
    weight: Mat<f64>,
    gram: Option<(Mat<f64>, Option<SpdFactor>)>,
    kernel: Option<SpdFactor>,
}

impl<'h> Subtree<'h> {
    fn leaf(block: MatRef<'h, f64>, y: MatRef<'_, f64>, alpha: f64) -> Result<Self> {
        if block.nrows() >= block.ncols() {
            let sol = primal_blocks(&[block], y, alpha)?;
            Ok(Self { blocks: vec![block], weight: sol.weight, gram: Some((sol.gram, Some(sol.factor))), kernel: None })
        } else {
            let sol = dual_blocks(&[block], y, alpha)?;
            Ok(Self { blocks: vec![block], weight: sol.weight, gram: None, kernel: Some(sol.factor) })
        }
    }

    fn take_gram(&mut self, alpha: f64) -> (Mat<f64>, Option<SpdFactor>) {
        self.gram
            .take()
            .unwrap_or_else(|| (linalg::regularized_gram(&self.blocks, alpha), None))
    }

    fn take_kernel(&mut self, alpha: f64) -> Result<SpdFactor> {
        match self.kernel.take() {
            Some(f) => Ok(f),
            None => SpdFactor::new(KERNEL_NAME, linalg::regularized_row_gram(&self.blocks, alpha).as_ref()),
        }
    }

    fn merge(mut self, mut right: Self, y: MatRef<'_, f64>, alpha: f64) -> Result<Self> {
        let n = self.blocks[0].nrows();
        let m: usize = self.blocks.iter().chain(&right.blocks).map(|b| b.ncols()).sum();
        let mut blocks = self.blocks.clone();
        blocks.extend_from_slice(&right.blocks);
        if n >= m {
            let (a, a_factor) = self.take_gram(alpha);
            let (c, c_factor) = right.take_gram(alpha);
            let b = linalg::blocks_cross(&self.blocks, &right.blocks);
            let ops = MergeOperands::from_blocks(a, a_factor, b, c, c_factor)?;
            let weight = ops.apply(self.weight.as_ref(), right.weight.as_ref());
            Ok(Self { blocks, weight, gram: Some((ops.assemble(), None)), kernel: None })
        } else {
            let a = self.take_kernel(alpha)?;
            let c = right.take_kernel(alpha)?;
            let (weight, _) = merge_dual_blocks(
                &self.blocks,
                &a,
                self.weight.as_ref(),
                &right.blocks,
                &c,
                right.weight.as_ref(),
                y,
            )?;
            Ok(Self { blocks, weight, gram: None, kernel: None })
        }
    }
}

fn train<'h>(
    node: &PartitionTree,
    h: MatRef<'h, f64>,
    col0: usize,
    y: MatRef<'_, f64>,
    alpha: f64,
) -> Result<Subtree<'h>> {
    match node {
        PartitionTree::Leaf(m) => Subtree::leaf(h.subcols(col0, *m), y, alpha),
        PartitionTree::Node(children) => {
            let starts: Vec<usize> = children
                .iter()
                .scan(col0, |next, c| {
                    let start = *next;
                    *next += c.total();
                    Some(start)
                })
                .collect();
            let trained = children
                .par_iter()
                .zip(starts)
                .map(|(c, start)| train(c, h, start, y, alpha))
                .collect::<Result<Vec<_>>>()?;
            let mut it = trained.into_iter();
            let first = it.next().expect("validated nodes have children");
            it.try_fold(first, |acc, next| acc.merge(next, y, alpha))
        }
    }
}

/// Trains each leaf block of `h` on its own (concurrently on the current
/// rayon pool) and merges the solutions bottom-up. Children of a node are
/// merged left to right. The result equals [`super::solve_auto`] on `h`.
pub fn hierarchical_solve(
    h: &HiddenMatrix,
    y: &LabelMatrix,
    partition: &PartitionTree,
    cfg: &RidgeConfig,
) -> Result<OutputWeight> {
    check_samples(h.sample_count(), y)?;
    partition.validate()?;
    if partition.total() != h.hidden_count() {
        return Err(ElmError::invalid(format!(
            "partition {partition} covers {} neurons, the network has {}",
            partition.total(),
            h.hidden_count()
        )));
    }
    let root = train(partition, h.values(), 0, y.values(), cfg.alpha())?;
    OutputWeight::new(root.weight)
}

/// Computes the hidden matrix of `samples` (`d × n`) under `map`, then
/// [`hierarchical_solve`].
pub fn hierarchical_train(
    samples: MatRef<'_, f64>,
    y: &LabelMatrix,
    map: &RandomFeatureMap,
    partition: &PartitionTree,
    cfg: &RidgeConfig,
) -> Result<OutputWeight> {
    if partition.total() != map.hidden_count() {
        return Err(ElmError::invalid(format!(
            "partition {partition} covers {} neurons, the map has {}",
            partition.total(),
            map.hidden_count()
        )));
    }
    let h = compute_hidden_matrix(map, samples)?;
    hierarchical_solve(&h, y, partition, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_auto;

    fn tree(s: &str) -> PartitionTree {
        s.parse().unwrap()
    }

    #[test]
    fn grammar() {
        use PartitionTree::{Leaf, Node};
        assert_eq!(tree("2000,2000"), Node(vec![Leaf(2000), Leaf(2000)]));
        assert_eq!(tree("4000"), Node(vec![Leaf(4000)]));
        let nested = Node(vec![Node(vec![Leaf(2), Leaf(2)]), Node(vec![Leaf(2), Leaf(2)])]);
        assert_eq!(tree("[[2,2],[2,2]]"), nested);
        assert_eq!(tree(" [2, 2], [2,2] "), nested);
        assert_eq!(nested.depth(), 2);
        assert_eq!(nested.to_string().parse::<PartitionTree>().unwrap(), nested);
        for bad in ["", "2,", "[2,2", "2]", "a", "0,3", "[]", "99999999999999999999999"] {
            assert!(bad.parse::<PartitionTree>().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn even_split() {
        assert_eq!(PartitionTree::even(7, 3).unwrap().leaves(), vec![3, 2, 2]);
        assert!(PartitionTree::even(2, 3).is_err());
    }

    fn random_hidden(n: usize, m: usize) -> HiddenMatrix {
        HiddenMatrix::new(Mat::from_fn(n, m, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin())).unwrap()
    }

    fn labels(n: usize) -> LabelMatrix {
        LabelMatrix::new(Mat::from_fn(n, 3, |i, j| f64::from(i % 3 == j))).unwrap()
    }

    #[test]
    fn single_leaf_is_direct() {
        for (n, m) in [(12, 5), (5, 12)] {
            let h = random_hidden(n, m);
            let y = labels(n);
            let cfg = RidgeConfig::new(10.0).unwrap();
            let w = hierarchical_solve(&h, &y, &PartitionTree::Node(vec![PartitionTree::Leaf(m)]), &cfg).unwrap();
            assert_eq!(w, solve_auto(&h, &y, &cfg).unwrap());
        }
    }

    #[test]
    fn mixed_regimes_match_direct() {
        // n = 10: leaves are primal, the root merge goes through the kernel form
        let h = random_hidden(10, 16);
        let y = labels(10);
        let cfg = RidgeConfig::new(100.0).unwrap();
        let direct = solve_auto(&h, &y, &cfg).unwrap();
        for p in ["8,8", "[4,4],[4,4]", "1,15", "[3,[2,5]],6"] {
            let w = hierarchical_solve(&h, &y, &tree(p), &cfg).unwrap();
            let rel = (w.values() - direct.values()).norm_l2() / direct.values().norm_l2();
            assert!(rel < 1e-9, "{p}: {rel}");
        }
    }

    #[test]
    fn partition_must_cover_network() {
        let h = random_hidden(6, 4);
        let err = hierarchical_solve(&h, &labels(6), &tree("2,1"), &RidgeConfig::default()).unwrap_err();
        assert!(matches!(err, ElmError::InvalidArgument(_)));
    }
}
