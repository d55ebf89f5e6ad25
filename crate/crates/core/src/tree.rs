//! Rooted binary trees with Newick input/output, Yule generation and the
//! temporal queries used by the tree-sweep simulators.
//!
//! Ages run backward from the present: leaves of an ultrametric tree sit at
//! age 0 and the root at the tree height. A lineage is identified by its
//! child node; internal lineages are alive on `[child.age, parent.age)`,
//! leaf lineages persist from their parent's split down to the present, so
//! the alive set only changes at internal node ages and every leaf is alive
//! at age 0 even on non-ultrametric trees.

use std::collections::HashSet;

use rand::Rng;
use thiserror::Error;

use crate::num::{exp_draw, Real};

/// Index into the tree's node arena.
pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("newick syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("missing branch length at byte {pos}")]
    MissingBranchLength { pos: usize },
    #[error("duplicate taxon label '{0}'")]
    DuplicateTaxon(String),
    #[error("invalid tree structure: {0}")]
    Structure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("age {age} outside [0, {height}]")]
    AgeOutOfRange { age: f64, height: f64 },
    #[error("lineage {node} is not alive at age {age}")]
    NotAlive { node: NodeId, age: f64 },
}

/// A single node; the root has no parent, internal nodes have two children.
#[derive(Debug, Clone)]
pub struct Node<F> {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Time before the present; parents are older than their children.
    pub age: F,
    /// Taxon name for leaves, optional label for internal nodes.
    pub label: Option<String>,
}

impl<F> Node<F> {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Maximum age of the common ancestor allowed by the local-borrowing test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AncestorBound<F> {
    /// No restriction (global borrowing).
    Unbounded,
    /// The MRCA must lie within this much time above the query age.
    Within(F),
}

/// Rooted binary phylogeny stored as a node arena.
#[derive(Debug, Clone)]
pub struct Tree<F> {
    nodes: Vec<Node<F>>,
    root: NodeId,
}

impl<F: Real> Tree<F> {
    /// Build a tree from pre-assembled nodes, checking the structural
    /// invariants: binary internal nodes, consistent parent/child links,
    /// monotone ages and unique leaf labels.
    pub fn from_parts(nodes: Vec<Node<F>>, root: NodeId) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Structure("empty node list".into()));
        }
        if root >= nodes.len() {
            return Err(TreeError::Structure(format!("root id {root} out of range")));
        }
        if nodes[root].parent.is_some() {
            return Err(TreeError::Structure("root must not have a parent".into()));
        }
        let mut seen_labels = HashSet::new();
        for (id, node) in nodes.iter().enumerate() {
            if !node.age.is_finite() || node.age < F::zero() {
                return Err(TreeError::Structure(format!("node {id} has invalid age")));
            }
            match node.children.len() {
                0 => {
                    let label = node.label.as_deref().ok_or_else(|| {
                        TreeError::Structure(format!("leaf {id} has no taxon label"))
                    })?;
                    if !seen_labels.insert(label.to_owned()) {
                        return Err(TreeError::DuplicateTaxon(label.to_owned()));
                    }
                }
                2 => {}
                n => {
                    return Err(TreeError::Structure(format!(
                        "internal node {id} has {n} children, expected 2"
                    )))
                }
            }
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(id) {
                    return Err(TreeError::Structure(format!(
                        "child link {id} -> {c} is inconsistent"
                    )));
                }
                if nodes[c].age > node.age {
                    return Err(TreeError::Structure(format!(
                        "child {c} is older than its parent {id}"
                    )));
                }
            }
            if id != root && node.parent.is_none() {
                return Err(TreeError::Structure(format!("node {id} is disconnected")));
            }
        }
        // Reachability from the root covers the whole arena.
        let mut stack = vec![root];
        let mut reached = 0usize;
        let mut mark = vec![false; nodes.len()];
        while let Some(v) = stack.pop() {
            if mark[v] {
                return Err(TreeError::Structure("cycle detected".into()));
            }
            mark[v] = true;
            reached += 1;
            stack.extend_from_slice(&nodes[v].children);
        }
        if reached != nodes.len() {
            return Err(TreeError::Structure("unreachable nodes present".into()));
        }
        Ok(Self { nodes, root })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node<F> {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node<F>)> {
        self.nodes.iter().enumerate()
    }

    /// Tree height: the root's age.
    pub fn height(&self) -> F {
        self.nodes[self.root].age
    }

    /// Leaf ids in depth-first (Newick) order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            let node = &self.nodes[v];
            if node.is_leaf() {
                out.push(v);
            } else {
                // Push right child first so the left one is visited first.
                for &c in node.children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// Taxon labels in depth-first leaf order.
    pub fn taxa(&self) -> Vec<&str> {
        self.leaves()
            .into_iter()
            .map(|l| self.nodes[l].label.as_deref().expect("leaves are labelled"))
            .collect()
    }

    /// Branch length above `id`, `None` for the root.
    pub fn branch_length(&self, id: NodeId) -> Option<F> {
        self.nodes[id]
            .parent
            .map(|p| self.nodes[p].age - self.nodes[id].age)
    }

    /// Lineages (edges named by child node) alive at `age`.
    ///
    /// Internal lineages are alive on `[child.age, parent.age)`; leaf
    /// lineages persist to the present so sampled taxa stay in the alive
    /// set for the whole sweep below their parent's split.
    pub fn lineages_alive_at(&self, age: F) -> Result<Vec<NodeId>, TreeError> {
        if !(age >= F::zero() && age <= self.height()) {
            return Err(TreeError::AgeOutOfRange {
                age: age.as_f64(),
                height: self.height().as_f64(),
            });
        }
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| self.edge_alive(n, age))
            .map(|(id, _)| id)
            .collect())
    }

    fn edge_alive(&self, node: &Node<F>, age: F) -> bool {
        match node.parent {
            Some(p) => age < self.nodes[p].age && (node.is_leaf() || node.age <= age),
            None => false,
        }
    }

    /// Most recent common ancestor of two nodes.
    pub fn mrca(&self, a: NodeId, b: NodeId) -> NodeId {
        let mut seen = HashSet::new();
        let mut v = Some(a);
        while let Some(x) = v {
            seen.insert(x);
            v = self.nodes[x].parent;
        }
        let mut w = b;
        loop {
            if seen.contains(&w) {
                return w;
            }
            w = self.nodes[w].parent.expect("nodes share the root");
        }
    }

    /// True when the MRCA of lineages `a` and `b` lies within `bound` above
    /// `at_age`. Always true for an unbounded window.
    pub fn mrca_within(
        &self,
        a: NodeId,
        b: NodeId,
        at_age: F,
        bound: AncestorBound<F>,
    ) -> Result<bool, TreeError> {
        if a == b {
            return Err(TreeError::InvalidParameter("lineages must differ".into()));
        }
        for &x in &[a, b] {
            if !self.edge_alive(&self.nodes[x], at_age) {
                return Err(TreeError::NotAlive {
                    node: x,
                    age: at_age.as_f64(),
                });
            }
        }
        match bound {
            AncestorBound::Unbounded => Ok(true),
            AncestorBound::Within(z) => {
                let m = self.mrca(a, b);
                Ok(self.nodes[m].age - at_age <= z)
            }
        }
    }

    /// The interval structure swept by the borrowing simulators: a list of
    /// constant-alive-set intervals from the root age down to 0, split
    /// boundaries at internal node ages.
    pub fn event_schedule(&self) -> BranchEventSchedule<F> {
        let mut internal: Vec<NodeId> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(id, _)| id)
            .collect();
        // Oldest first; the root sorts to the front.
        internal.sort_by(|&a, &b| {
            self.nodes[b]
                .age
                .partial_cmp(&self.nodes[a].age)
                .expect("finite ages")
                .then(a.cmp(&b))
        });
        debug_assert_eq!(internal[0], self.root);

        let mut intervals = Vec::with_capacity(internal.len());
        let mut alive: Vec<NodeId> = self.nodes[self.root].children.clone();
        for (i, &v) in internal.iter().enumerate() {
            let upper = self.nodes[v].age;
            if i > 0 {
                let pos = alive
                    .iter()
                    .position(|&x| x == v)
                    .expect("split node alive");
                alive.swap_remove(pos);
                alive.extend_from_slice(&self.nodes[v].children);
            }
            let (lower, split_at_lower) = match internal.get(i + 1) {
                Some(&w) => (self.nodes[w].age, Some(w)),
                None => (F::zero(), None),
            };
            intervals.push(ScheduleInterval {
                upper,
                lower,
                alive: alive.clone(),
                split_at_lower,
            });
        }
        BranchEventSchedule { intervals }
    }
}

/// One constant-alive-set interval of the sweep, `(lower, upper]` in age.
#[derive(Debug, Clone)]
pub struct ScheduleInterval<F> {
    pub upper: F,
    pub lower: F,
    /// Lineages (child node ids) alive throughout the interval.
    pub alive: Vec<NodeId>,
    /// Internal node splitting at `lower`; `None` for the final interval.
    pub split_at_lower: Option<NodeId>,
}

/// Ordered sweep intervals from the root age down to the present.
#[derive(Debug, Clone)]
pub struct BranchEventSchedule<F> {
    pub intervals: Vec<ScheduleInterval<F>>,
}

// ---------------------------------------------------------------------------
// Newick parsing and serialization
// ---------------------------------------------------------------------------

struct NewickParser<'a, F> {
    bytes: &'a [u8],
    pos: usize,
    nodes: Vec<Node<F>>,
    /// Branch length to the parent, recorded per node during the parse.
    lengths: Vec<Option<F>>,
}

impl<'a, F: Real> NewickParser<'a, F> {
    fn new(text: &'a str) -> Self {
        Self {
            bytes: text.as_bytes(),
            pos: 0,
            nodes: Vec::new(),
            lengths: Vec::new(),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TreeError> {
        Err(TreeError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn push_node(
        &mut self,
        children: Vec<NodeId>,
        label: Option<String>,
        length: Option<F>,
    ) -> NodeId {
        let id = self.nodes.len();
        for &c in &children {
            self.nodes[c].parent = Some(id);
        }
        self.nodes.push(Node {
            parent: None,
            children,
            age: F::zero(),
            label,
        });
        self.lengths.push(length);
        id
    }

    fn parse_label(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'(' | b')' | b',' | b':' | b';' => break,
                c if c.is_ascii_whitespace() => break,
                _ => self.pos += 1,
            }
        }
        if self.pos > start {
            Some(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
        } else {
            None
        }
    }

    fn parse_length(&mut self) -> Result<Option<F>, TreeError> {
        if self.peek() != Some(b':') {
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E' => self.pos += 1,
                _ => break,
            }
        }
        let text =
            std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| TreeError::Syntax {
                pos: start,
                msg: "invalid branch length bytes".into(),
            })?;
        let value: f64 = text.parse().map_err(|_| TreeError::Syntax {
            pos: start,
            msg: format!("invalid branch length '{text}'"),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(TreeError::Syntax {
                pos: start,
                msg: format!("branch length '{text}' must be finite and non-negative"),
            });
        }
        Ok(Some(F::of(value)))
    }

    fn parse_subtree(&mut self) -> Result<NodeId, TreeError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let mut children = vec![self.parse_subtree()?];
                loop {
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                            children.push(self.parse_subtree()?);
                        }
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(c) => return self.err(format!("unexpected '{}'", c as char)),
                        None => return self.err("unbalanced parentheses"),
                    }
                }
                if children.len() != 2 {
                    return self.err(format!(
                        "internal node has {} children, expected 2",
                        children.len()
                    ));
                }
                let label = self.parse_label();
                let length = self.parse_length()?;
                Ok(self.push_node(children, label, length))
            }
            Some(_) => {
                let start = self.pos;
                let label = self.parse_label();
                let Some(label) = label else {
                    return self.err("expected taxon label or '('");
                };
                let length = self.parse_length()?;
                if length.is_none() {
                    return Err(TreeError::MissingBranchLength { pos: start });
                }
                Ok(self.push_node(Vec::new(), Some(label), length))
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn finish(mut self, root: NodeId) -> Result<Tree<F>, TreeError> {
        match self.peek() {
            None => {}
            Some(b';') => {
                self.pos += 1;
                if self.peek().is_some() {
                    return self.err("trailing input after ';'");
                }
            }
            Some(c) => return self.err(format!("unexpected '{}'", c as char)),
        }
        // Non-root nodes need a branch length.
        for (id, len) in self.lengths.iter().enumerate() {
            if id != root && len.is_none() {
                return Err(TreeError::MissingBranchLength {
                    pos: self.bytes.len(),
                });
            }
        }
        // Depth from the root, then age = height - depth.
        let mut depth = vec![F::zero(); self.nodes.len()];
        let mut order = vec![root];
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &c in &self.nodes[v].children {
                depth[c] = depth[v] + self.lengths[c].expect("checked above");
                order.push(c);
            }
        }
        let height = depth
            .iter()
            .copied()
            .fold(F::zero(), |a, b| if b > a { b } else { a });
        for (node, d) in self.nodes.iter_mut().zip(&depth) {
            node.age = height - *d;
        }
        Tree::from_parts(self.nodes, root)
    }
}

impl<F: Real> Tree<F> {
    /// Parse a Newick string with mandatory branch lengths on non-root
    /// nodes; the trailing semicolon is optional. Node ages are derived so
    /// the deepest leaf sits at age 0.
    pub fn parse_newick(text: &str) -> Result<Self, TreeError> {
        let mut parser = NewickParser::new(text);
        if parser.peek().is_none() {
            return parser.err("empty input");
        }
        let root = parser.parse_subtree()?;
        parser.finish(root)
    }

    /// Serialize to Newick with branch lengths and a trailing semicolon.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_newick(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_newick(&self, id: NodeId, out: &mut String) {
        let node = &self.nodes[id];
        if !node.is_leaf() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_newick(c, out);
                out.push(':');
                let len = node.age - self.nodes[c].age;
                out.push_str(&format!("{}", len.as_f64()));
            }
            out.push(')');
        }
        if let Some(label) = &node.label {
            out.push_str(label);
        }
    }

    /// Grow a Yule tree: starting from two lineages, each alive lineage
    /// splits independently at `birth_rate`; growth stops at `n_leaves` and
    /// the tips are extended by one further inter-split waiting time so all
    /// leaves sit at age 0 with positive terminal branches.
    pub fn yule<R: Rng + ?Sized>(
        n_leaves: usize,
        birth_rate: F,
        rng: &mut R,
    ) -> Result<Self, TreeError> {
        if n_leaves < 2 {
            return Err(TreeError::InvalidParameter(
                "a Yule tree needs at least 2 leaves".into(),
            ));
        }
        if birth_rate.is_nan() || birth_rate <= F::zero() {
            return Err(TreeError::InvalidParameter(
                "birth rate must be positive".into(),
            ));
        }
        let mut nodes: Vec<Node<F>> = Vec::with_capacity(2 * n_leaves - 1);
        // split_time[v]: elapsed time at which v was created.
        let mut birth_time: Vec<F> = Vec::with_capacity(2 * n_leaves - 1);
        let new_node = |nodes: &mut Vec<Node<F>>, birth_time: &mut Vec<F>, parent, t| {
            nodes.push(Node {
                parent,
                children: Vec::new(),
                age: F::zero(),
                label: None,
            });
            birth_time.push(t);
            nodes.len() - 1
        };
        let root = new_node(&mut nodes, &mut birth_time, None, F::zero());
        let mut tips = vec![
            new_node(&mut nodes, &mut birth_time, Some(root), F::zero()),
            new_node(&mut nodes, &mut birth_time, Some(root), F::zero()),
        ];
        nodes[root].children = tips.clone();
        let mut elapsed = F::zero();
        while tips.len() < n_leaves {
            let k = F::of(tips.len() as f64);
            elapsed += exp_draw(rng, k * birth_rate);
            let idx = rng.random_range(0..tips.len());
            let v = tips[idx];
            birth_time[v] = elapsed;
            let a = new_node(&mut nodes, &mut birth_time, Some(v), elapsed);
            let b = new_node(&mut nodes, &mut birth_time, Some(v), elapsed);
            nodes[v].children = vec![a, b];
            tips[idx] = a;
            tips.push(b);
        }
        let height = elapsed + exp_draw(rng, F::of(n_leaves as f64) * birth_rate);
        for (id, node) in nodes.iter_mut().enumerate() {
            node.age = if node.children.is_empty() {
                F::zero()
            } else {
                height - birth_time[id]
            };
        }
        for (i, &tip) in tips.iter().enumerate() {
            nodes[tip].label = Some(format!("t{}", i + 1));
        }
        Tree::from_parts(nodes, root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    const SIX_LANGUAGE_TREE: &str = "((((english:0.02,(german:0.01,french:0.01):0.4):0.01,\
                                 spanish:0.3):0.2,italian:0.6):0.3,irish:0.6)";

    #[test]
    fn parses_six_language_tree() {
        let tree: Tree<f64> = Tree::parse_newick(SIX_LANGUAGE_TREE).unwrap();
        let mut taxa: Vec<&str> = tree.taxa();
        taxa.sort();
        assert_eq!(
            taxa,
            ["english", "french", "german", "irish", "italian", "spanish"]
        );
        // Deepest path: root -> ... -> german/french = 0.3+0.2+0.01+0.4+0.01
        assert!((tree.height() - 0.92).abs() < 1e-12);
        assert_eq!(tree.leaves().len(), 6);
    }

    #[test]
    fn parses_two_leaf_tree() {
        let tree: Tree<f64> = Tree::parse_newick("(A:1.0,B:1.0)").unwrap();
        assert_eq!(tree.height(), 1.0);
        for leaf in tree.leaves() {
            assert_eq!(tree.node(leaf).age, 0.0);
        }
    }

    #[test]
    fn serializes_two_leaf_tree() {
        let tree: Tree<f64> = Tree::parse_newick("(A:1.0,B:1.0)").unwrap();
        assert_eq!(tree.to_newick(), "(A:1,B:1);");
    }

    #[test]
    fn round_trips_six_language_tree() {
        let tree: Tree<f64> = Tree::parse_newick(SIX_LANGUAGE_TREE).unwrap();
        let again: Tree<f64> = Tree::parse_newick(&tree.to_newick()).unwrap();
        assert_eq!(pathlen_matrix(&tree), pathlen_matrix(&again));
    }

    proptest::proptest! {
        #[test]
        fn prop_newick_round_trip(seed in 0u64..500, n in 2usize..24) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let tree: Tree<f64> = Tree::yule(n, 0.5, &mut rng).unwrap();
            let again: Tree<f64> = Tree::parse_newick(&tree.to_newick()).unwrap();
            proptest::prop_assert_eq!(pathlen_matrix(&tree), pathlen_matrix(&again));
        }
    }

    /// Sorted leaf-pair path lengths, rounded to 1e-9.
    fn pathlen_matrix(tree: &Tree<f64>) -> Vec<(String, String, i64)> {
        let leaves = tree.leaves();
        let mut out = Vec::new();
        for (i, &a) in leaves.iter().enumerate() {
            for &b in &leaves[i + 1..] {
                let m = tree.mrca(a, b);
                let d =
                    (tree.node(m).age - tree.node(a).age) + (tree.node(m).age - tree.node(b).age);
                let mut pair = [
                    tree.node(a).label.clone().unwrap(),
                    tree.node(b).label.clone().unwrap(),
                ];
                pair.sort();
                let [x, y] = pair;
                out.push((x, y, (d * 1e9).round() as i64));
            }
        }
        out.sort();
        out
    }

    #[test]
    fn round_trips_generated_yule_trees() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for n in [20, 80] {
            let tree: Tree<f64> = Tree::yule(n, 0.8, &mut rng).unwrap();
            let again: Tree<f64> = Tree::parse_newick(&tree.to_newick()).unwrap();
            assert_eq!(pathlen_matrix(&tree), pathlen_matrix(&again));
            // The multiset of branch lengths survives to 1e-9.
            let lengths = |t: &Tree<f64>| {
                let mut out: Vec<i64> = t
                    .nodes()
                    .filter(|(id, _)| *id != t.root())
                    .map(|(id, _)| (t.branch_length(id).unwrap() * 1e9).round() as i64)
                    .collect();
                out.sort_unstable();
                out
            };
            assert_eq!(lengths(&tree), lengths(&again));
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = Tree::<f64>::parse_newick("(A:1.0,,B:1.0)").unwrap_err();
        match err {
            TreeError::Syntax { pos, .. } => assert_eq!(pos, 7),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_branch_length_is_rejected() {
        let err = Tree::<f64>::parse_newick("(A,B:1.0)").unwrap_err();
        assert!(matches!(err, TreeError::MissingBranchLength { .. }));
    }

    #[test]
    fn duplicate_taxon_is_rejected() {
        let err = Tree::<f64>::parse_newick("(A:1.0,A:1.0)").unwrap_err();
        assert!(matches!(err, TreeError::DuplicateTaxon(t) if t == "A"));
    }

    #[test]
    fn multifurcation_is_rejected() {
        let err = Tree::<f64>::parse_newick("(A:1,B:1,C:1)").unwrap_err();
        assert!(matches!(err, TreeError::Syntax { .. }));
    }

    #[test]
    fn yule_shape_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let tree: Tree<f64> = Tree::yule(80, 0.00055, &mut rng).unwrap();
        let n_leaves = tree.leaves().len();
        assert_eq!(n_leaves, 80);
        let n_internal = tree.nodes().filter(|(_, n)| !n.is_leaf()).count();
        assert_eq!(n_internal, 79);
        for leaf in tree.leaves() {
            assert_eq!(tree.node(leaf).age, 0.0);
        }
        // sum over internal nodes of (children - 1) = n_leaves - 1
        let s: usize = tree
            .nodes()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(_, n)| n.children.len() - 1)
            .sum();
        assert_eq!(s, n_leaves - 1);
    }

    #[test]
    fn yule_two_leaves_age_is_exponential() {
        // Root age ~ Exp(2b); check the sample mean of 20_000 draws.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let b = 0.25;
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| Tree::<f64>::yule(2, b, &mut rng).unwrap().height())
            .sum::<f64>()
            / n as f64;
        let expect = 1.0 / (2.0 * b);
        let se = expect / (n as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * se, "mean {mean} vs {expect}");
    }

    #[test]
    fn yule_mean_age_matches_monte_carlo_oracle() {
        // Independent oracle: the root age of a Yule tree grown from 2 to n
        // lineages is a sum of exponentials Exp(k*b), k = 2..=n.
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let (n, b, reps) = (10usize, 1.0f64, 10_000usize);
        let sim: Vec<f64> = (0..reps)
            .map(|_| Tree::<f64>::yule(n, b, &mut rng).unwrap().height())
            .collect();
        let mut oracle_rng = ChaCha12Rng::seed_from_u64(18);
        let oracle: Vec<f64> = (0..reps)
            .map(|_| {
                (2..=n)
                    .map(|k| exp_draw(&mut oracle_rng, k as f64 * b))
                    .sum::<f64>()
            })
            .collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let var = |xs: &[f64], m: f64| {
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let (m1, m2) = (mean(&sim), mean(&oracle));
        let se = (var(&sim, m1) / reps as f64 + var(&oracle, m2) / reps as f64).sqrt();
        assert!((m1 - m2).abs() < 2.0 * se, "sim {m1}, oracle {m2}, se {se}");
    }

    #[test]
    fn alive_lineages_two_leaf() {
        let tree: Tree<f64> = Tree::parse_newick("(A:1.0,B:1.0)").unwrap();
        for age in [0.0, 0.25, 0.5, 0.999] {
            assert_eq!(tree.lineages_alive_at(age).unwrap().len(), 2);
        }
        assert!(tree.lineages_alive_at(1.0).unwrap().is_empty());
        assert!(tree.lineages_alive_at(1.5).is_err());
        assert!(tree.lineages_alive_at(-0.1).is_err());
    }

    #[test]
    fn all_leaves_alive_at_present_even_non_ultrametric() {
        let tree: Tree<f64> = Tree::parse_newick(SIX_LANGUAGE_TREE).unwrap();
        assert_eq!(tree.lineages_alive_at(0.0).unwrap().len(), 6);
    }

    #[test]
    fn alive_count_increments_below_each_internal_age() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let tree: Tree<f64> = Tree::yule(12, 0.3, &mut rng).unwrap();
        let mut ages: Vec<f64> = tree
            .nodes()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(_, n)| n.age)
            .collect();
        ages.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (i, &a) in ages.iter().enumerate() {
            let eps = 1e-9;
            let count = tree.lineages_alive_at(a - eps).unwrap().len();
            assert_eq!(count, i + 2, "below internal age #{i}");
        }
    }

    #[test]
    fn schedule_is_consistent_with_alive_queries() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let tree: Tree<f64> = Tree::yule(10, 0.7, &mut rng).unwrap();
        let schedule = tree.event_schedule();
        assert_eq!(schedule.intervals.len(), 9);
        let mut prev_upper = f64::INFINITY;
        for (i, iv) in schedule.intervals.iter().enumerate() {
            assert!(iv.upper < prev_upper);
            assert!(iv.lower < iv.upper);
            assert_eq!(iv.alive.len(), i + 2);
            prev_upper = iv.upper;
            let mid = 0.5 * (iv.lower + iv.upper);
            let mut expect = tree.lineages_alive_at(mid).unwrap();
            expect.sort_unstable();
            let mut got = iv.alive.clone();
            got.sort_unstable();
            assert_eq!(got, expect);
        }
        assert_eq!(schedule.intervals.last().unwrap().lower, 0.0);
    }

    #[test]
    fn mrca_within_unbounded_always_true() {
        let tree: Tree<f64> = Tree::parse_newick(SIX_LANGUAGE_TREE).unwrap();
        let alive = tree.lineages_alive_at(0.0).unwrap();
        for (i, &a) in alive.iter().enumerate() {
            for &b in &alive[i + 1..] {
                assert!(tree
                    .mrca_within(a, b, 0.0, AncestorBound::Unbounded)
                    .unwrap());
            }
        }
    }

    #[test]
    fn mrca_within_siblings_just_after_split() {
        let tree: Tree<f64> = Tree::parse_newick("((A:1.0,B:1.0):1.0,C:2.0)").unwrap();
        // A and B split at age 1.0; just below, any z >= eps succeeds.
        let (a, b) = {
            let leaves = tree.leaves();
            (leaves[0], leaves[1])
        };
        // 0.25 is exactly representable, keeping mrca_age - at_age == eps.
        let eps = 0.25;
        assert!(tree
            .mrca_within(a, b, 1.0 - eps, AncestorBound::Within(eps))
            .unwrap());
        assert!(!tree
            .mrca_within(a, b, 0.0, AncestorBound::Within(0.5))
            .unwrap());
        assert!(tree
            .mrca_within(a, b, 0.0, AncestorBound::Within(1.0))
            .unwrap());
    }

    #[test]
    fn mrca_within_matches_brute_force_walk() {
        // Exhaustive oracle: walk parent chains of both nodes and intersect.
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let tree: Tree<f64> = Tree::yule(8, 0.4, &mut rng).unwrap();
        let height = tree.height();
        for _ in 0..100 {
            let at_age = f64::unit_uniform(&mut rng) * height * 0.999;
            let alive = tree.lineages_alive_at(at_age).unwrap();
            if alive.len() < 2 {
                continue;
            }
            let a = alive[rng.random_range(0..alive.len())];
            let mut b = alive[rng.random_range(0..alive.len())];
            while b == a {
                b = alive[rng.random_range(0..alive.len())];
            }
            let z = f64::unit_uniform(&mut rng) * height;
            let got = tree
                .mrca_within(a, b, at_age, AncestorBound::Within(z))
                .unwrap();
            let mut anc = vec![a];
            while let Some(p) = tree.node(*anc.last().unwrap()).parent {
                anc.push(p);
            }
            let mut w = b;
            let mrca = loop {
                if anc.contains(&w) {
                    break w;
                }
                w = tree.node(w).parent.unwrap();
            };
            let expect = tree.node(mrca).age - at_age <= z;
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn mrca_within_rejects_dead_lineage() {
        let tree: Tree<f64> = Tree::parse_newick("((A:1.0,B:1.0):1.0,C:2.0)").unwrap();
        let ab_parent = tree
            .nodes()
            .find(|(_, n)| !n.is_leaf() && n.parent.is_some())
            .map(|(id, _)| id)
            .unwrap();
        let c = *tree.leaves().last().unwrap();
        // The internal A/B edge is dead below age 1.0.
        assert!(tree
            .mrca_within(ab_parent, c, 0.5, AncestorBound::Unbounded)
            .is_err());
    }
}
