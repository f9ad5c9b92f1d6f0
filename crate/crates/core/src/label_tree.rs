//! Hierarchical label tree: synsets as internal nodes, classes as leaves.
//!
//! Trees are immutable once built. Every transformation returns a new tree
//! whose node ids are reassigned in pre-order, so `NodeId(0)` is always the
//! root and ids stay dense.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{render_prompt, ImageRef, SampleSet, ScoreError, ScoreRequest, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("tree is empty")]
    Empty,
    #[error("tree has multiple roots: {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("cycle detected through node {0:?}")]
    Cycle(String),
    #[error("node {0:?} is listed as a child of more than one parent")]
    MultipleParents(String),
    #[error("node id {0} referenced but never defined")]
    DanglingChild(u64),
    #[error("node id {0} defined more than once")]
    DuplicateId(u64),
    #[error("node {0} has an empty label")]
    EmptyLabel(String),
    #[error("duplicate label {label:?} among children of {parent:?}")]
    DuplicateSibling { parent: String, label: String },
    #[error("leaf label {0:?} appears more than once")]
    DuplicateLeaf(String),
    #[error("root {0:?} has no children")]
    RootWithoutChildren(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown class label {0:?}")]
    UnknownLabel(String),
    #[error("{0:?} is an internal node, not a class")]
    NotALeaf(String),
    #[error("class {0:?} already exists")]
    DuplicateClass(String),
    #[error("level {level} out of range 1..={depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("max depth must be at least 1")]
    InvalidMaxDepth,
    #[error("cannot remove {0:?}: it is the last class")]
    LastClass(String),
    #[error("greedy insertion requires a probe (scorer, images, samples)")]
    MissingProbe,
    #[error("greedy probe has no images")]
    EmptyProbe,
    #[error("probe scoring failed: {0}")]
    Probe(#[from] ScoreError),
}

impl TreeError {
    /// True for violations of tree structure (as opposed to syntax or lookups).
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            TreeError::Empty
                | TreeError::MultipleRoots(_)
                | TreeError::Cycle(_)
                | TreeError::MultipleParents(_)
                | TreeError::DanglingChild(_)
                | TreeError::DuplicateId(_)
                | TreeError::EmptyLabel(_)
                | TreeError::DuplicateSibling { .. }
                | TreeError::DuplicateLeaf(_)
                | TreeError::RootWithoutChildren(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFormat {
    JsonAdjacency,
    IndentedText,
}

impl TreeFormat {
    /// Guess the format from a file extension; anything but `.txt`/`.tree` is JSON.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") | Some("tree") => TreeFormat::IndentedText,
            _ => TreeFormat::JsonAdjacency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelNode {
    pub id: NodeId,
    pub label: String,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

impl LabelNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Owned nested form used while building or transforming trees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draft {
    pub label: String,
    pub children: Vec<Draft>,
}

impl Draft {
    pub fn leaf(label: impl Into<String>) -> Self {
        Draft {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Draft>) -> Self {
        Draft {
            label: label.into(),
            children,
        }
    }
}

/// One entry of the JSON adjacency format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyEntry {
    pub id: u64,
    pub label: String,
    #[serde(default)]
    pub children: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeStats {
    pub depth: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub internal: usize,
    /// child count → number of internal nodes with that many children
    pub branching: BTreeMap<usize, usize>,
    /// edge depth → number of leaves at that depth
    pub leaves_per_depth: BTreeMap<usize, usize>,
}

impl fmt::Display for TreeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "depth={} leaves={} nodes={} internal={}",
            self.depth, self.leaves, self.nodes, self.internal
        )?;
        write!(f, "branching:")?;
        for (k, v) in &self.branching {
            write!(f, " {k}:{v}")?;
        }
        writeln!(f)?;
        write!(f, "leaves_per_depth:")?;
        for (k, v) in &self.leaves_per_depth {
            write!(f, " {k}:{v}")?;
        }
        Ok(())
    }
}

/// Inputs for greedy placement of a new class.
pub struct GreedyProbe<'a> {
    pub scorer: &'a dyn Scorer,
    /// Images depicting the new class.
    pub images: &'a [ImageRef],
    pub samples: &'a SampleSet,
    pub template: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertMode {
    UnderRoot,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct LabelTree {
    nodes: Vec<LabelNode>,
    node_depth: Vec<usize>,
    min_leaf_depth: Vec<usize>,
    depth: usize,
    leaf_count: usize,
    leaf_index: HashMap<String, NodeId>,
}

impl LabelTree {
    pub fn load<R: Read>(mut source: R, format: TreeFormat) -> Result<Self, TreeError> {
        let mut text = String::new();
        source
            .read_to_string(&mut text)
            .map_err(|e| TreeError::Parse(e.to_string()))?;
        match format {
            TreeFormat::JsonAdjacency => Self::from_json_str(&text),
            TreeFormat::IndentedText => Self::from_indented_str(&text),
        }
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self, TreeError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| TreeError::Parse(format!("{}: {e}", path.display())))?;
        Self::load(std::io::BufReader::new(file), TreeFormat::from_path(path))
    }

    pub fn from_json_str(text: &str) -> Result<Self, TreeError> {
        let entries: Vec<AdjacencyEntry> =
            serde_json::from_str(text).map_err(|e| TreeError::Parse(e.to_string()))?;
        Self::from_adjacency(&entries)
    }

    pub fn from_adjacency(entries: &[AdjacencyEntry]) -> Result<Self, TreeError> {
        if entries.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut by_id: HashMap<u64, usize> = HashMap::with_capacity(entries.len());
        for (pos, e) in entries.iter().enumerate() {
            if by_id.insert(e.id, pos).is_some() {
                return Err(TreeError::DuplicateId(e.id));
            }
        }
        let mut parent: Vec<Option<usize>> = vec![None; entries.len()];
        for (pos, e) in entries.iter().enumerate() {
            for child in &e.children {
                let c = *by_id.get(child).ok_or(TreeError::DanglingChild(*child))?;
                if parent[c].is_some() || c == pos {
                    if c == pos {
                        return Err(TreeError::Cycle(entries[c].label.clone()));
                    }
                    return Err(TreeError::MultipleParents(entries[c].label.clone()));
                }
                parent[c] = Some(pos);
            }
        }
        let roots: Vec<usize> = (0..entries.len()).filter(|&i| parent[i].is_none()).collect();
        match roots.len() {
            0 => return Err(TreeError::Cycle(entries[0].label.clone())),
            1 => {}
            _ => {
                return Err(TreeError::MultipleRoots(
                    roots.iter().map(|&i| entries[i].label.clone()).collect(),
                ))
            }
        }
        // Every node has at most one parent and there is a single root, so any
        // node not reached from the root sits on a cycle.
        let mut seen = vec![false; entries.len()];
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            seen[i] = true;
            for child in &entries[i].children {
                stack.push(by_id[child]);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(TreeError::Cycle(entries[i].label.clone()));
        }

        fn build(entries: &[AdjacencyEntry], by_id: &HashMap<u64, usize>, i: usize) -> Draft {
            Draft {
                label: entries[i].label.clone(),
                children: entries[i]
                    .children
                    .iter()
                    .map(|c| build(entries, by_id, by_id[c]))
                    .collect(),
            }
        }
        Self::from_draft(build(entries, &by_id, roots[0]))
    }

    /// Parses the tab-indented format: one label per line, one tab per level.
    pub fn from_indented_str(text: &str) -> Result<Self, TreeError> {
        let mut stack: Vec<Draft> = Vec::new();
        let mut root: Option<Draft> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let level = line.chars().take_while(|c| *c == '\t').count();
            let label = line[level..].trim();
            if label.is_empty() {
                return Err(TreeError::Parse(format!("line {}: empty label", lineno + 1)));
            }
            if level == 0 && (root.is_some() || !stack.is_empty()) {
                let first = root
                    .as_ref()
                    .map(|r| r.label.clone())
                    .or_else(|| stack.first().map(|d| d.label.clone()))
                    .unwrap_or_default();
                return Err(TreeError::MultipleRoots(vec![first, label.to_string()]));
            }
            if level > stack.len() {
                return Err(TreeError::Parse(format!(
                    "line {}: indentation jumps from {} to {level}",
                    lineno + 1,
                    stack.len().saturating_sub(1)
                )));
            }
            while stack.len() > level {
                let done = stack.pop().expect("non-empty");
                stack
                    .last_mut()
                    .expect("level > 0 implies a parent")
                    .children
                    .push(done);
            }
            stack.push(Draft::leaf(label));
        }
        while stack.len() > 1 {
            let done = stack.pop().expect("non-empty");
            stack.last_mut().expect("non-empty").children.push(done);
        }
        root = root.or_else(|| stack.pop());
        Self::from_draft(root.ok_or(TreeError::Empty)?)
    }

    /// Validates a nested draft and flattens it in pre-order.
    pub fn from_draft(draft: Draft) -> Result<Self, TreeError> {
        if draft.children.is_empty() {
            return Err(TreeError::RootWithoutChildren(draft.label));
        }
        let mut nodes = Vec::new();
        let mut node_depth = Vec::new();
        let mut stack: Vec<(Draft, Option<NodeId>, usize)> = vec![(draft, None, 0)];
        while let Some((d, parent, depth)) = stack.pop() {
            if d.label.trim().is_empty() {
                let at = parent
                    .map(|p: NodeId| format!("child of {:?}", nodes_label(&nodes, p)))
                    .unwrap_or_else(|| "root".to_string());
                return Err(TreeError::EmptyLabel(at));
            }
            let id = NodeId(nodes.len() as u32);
            if let Some(p) = parent {
                let pn: &mut LabelNode = &mut nodes[p.index()];
                pn.children.push(id);
            }
            nodes.push(LabelNode {
                id,
                label: d.label,
                parent,
                children: Vec::new(),
            });
            node_depth.push(depth);
            for child in d.children.into_iter().rev() {
                stack.push((child, Some(id), depth + 1));
            }
        }

        let mut leaf_index = HashMap::new();
        for n in &nodes {
            let mut sibling_labels = HashSet::new();
            for c in &n.children {
                let label = &nodes[c.index()].label;
                if !sibling_labels.insert(label.as_str()) {
                    return Err(TreeError::DuplicateSibling {
                        parent: n.label.clone(),
                        label: label.clone(),
                    });
                }
            }
            if n.is_leaf() && leaf_index.insert(n.label.clone(), n.id).is_some() {
                return Err(TreeError::DuplicateLeaf(n.label.clone()));
            }
        }

        let mut min_leaf_depth = vec![usize::MAX; nodes.len()];
        for n in nodes.iter().rev() {
            let i = n.id.index();
            if n.is_leaf() {
                min_leaf_depth[i] = node_depth[i];
            }
            if let Some(p) = n.parent {
                min_leaf_depth[p.index()] = min_leaf_depth[p.index()].min(min_leaf_depth[i]);
            }
        }
        let depth = nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| node_depth[n.id.index()])
            .max()
            .unwrap_or(0);
        Ok(LabelTree {
            leaf_count: leaf_index.len(),
            nodes,
            node_depth,
            min_leaf_depth,
            depth,
            leaf_index,
        })
    }

    pub fn to_draft(&self) -> Draft {
        self.subtree_draft(self.root())
    }

    fn subtree_draft(&self, id: NodeId) -> Draft {
        let n = &self.nodes[id.index()];
        Draft {
            label: n.label.clone(),
            children: n.children.iter().map(|c| self.subtree_draft(*c)).collect(),
        }
    }

    pub fn to_adjacency(&self) -> Vec<AdjacencyEntry> {
        self.nodes
            .iter()
            .map(|n| AdjacencyEntry {
                id: n.id.0 as u64,
                label: n.label.clone(),
                children: n.children.iter().map(|c| c.0 as u64).collect(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let mut out = String::from("[\n");
        for (i, e) in self.to_adjacency().iter().enumerate() {
            if i > 0 {
                out.push_str(",\n");
            }
            out.push_str("  ");
            out.push_str(&serde_json::to_string(e).expect("adjacency entries serialize"));
        }
        out.push_str("\n]\n");
        out
    }

    pub fn to_indented_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            for _ in 0..self.node_depth[n.id.index()] {
                out.push('\t');
            }
            out.push_str(&n.label);
            out.push('\n');
        }
        out
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[LabelNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&LabelNode, TreeError> {
        self.nodes.get(id.index()).ok_or(TreeError::UnknownNode(id))
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].label
    }

    pub fn node_depth(&self, id: NodeId) -> usize {
        self.node_depth[id.index()]
    }

    /// Shallowest leaf depth within the subtree rooted at `id`.
    pub fn min_leaf_depth(&self, id: NodeId) -> usize {
        self.min_leaf_depth[id.index()]
    }

    pub fn leaf_by_label(&self, label: &str) -> Option<NodeId> {
        self.leaf_index.get(label).copied()
    }

    /// All nodes (internal or leaf) carrying `label`, in id order.
    pub fn nodes_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.nodes.iter().filter(move |n| n.label == label).map(|n| n.id)
    }

    /// Leaves in pre-order.
    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id)
    }

    pub fn leaf_labels(&self) -> Vec<String> {
        self.leaves().map(|l| self.label(l).to_string()).collect()
    }

    /// Leaves under `id` (inclusive), pre-order.
    pub fn descendant_leaves(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n.index()];
            if node.is_leaf() {
                out.push(n);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// True if `ancestor` lies on the path from the root to `node` (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: NodeId, node: NodeId) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            if self.node_depth[c.index()] <= self.node_depth[ancestor.index()] {
                return false;
            }
            cur = self.nodes[c.index()].parent;
        }
        false
    }

    pub fn lowest_common_ancestor(&self, a: NodeId, b: NodeId) -> NodeId {
        let (mut a, mut b) = (a, b);
        while self.node_depth[a.index()] > self.node_depth[b.index()] {
            a = self.nodes[a.index()].parent.expect("non-root has a parent");
        }
        while self.node_depth[b.index()] > self.node_depth[a.index()] {
            b = self.nodes[b.index()].parent.expect("non-root has a parent");
        }
        while a != b {
            a = self.nodes[a.index()].parent.expect("non-root has a parent");
            b = self.nodes[b.index()].parent.expect("non-root has a parent");
        }
        a
    }

    /// Edge count of the path between two nodes.
    pub fn tree_distance(&self, a: NodeId, b: NodeId) -> usize {
        let lca = self.lowest_common_ancestor(a, b);
        self.node_depth[a.index()] + self.node_depth[b.index()] - 2 * self.node_depth[lca.index()]
    }

    /// Children of an internal node, or the node itself for a leaf.
    pub fn effective_children(&self, id: NodeId) -> Result<Vec<NodeId>, TreeError> {
        let node = self.node(id)?;
        if node.is_leaf() {
            Ok(vec![id])
        } else {
            Ok(node.children.clone())
        }
    }

    /// Starting frontier for a traversal that skips the vague top levels.
    ///
    /// Level 1 is the root. Returns every node `level - 1` edges below the
    /// root plus any shallower leaves, in pre-order.
    pub fn descend_to_level(&self, level: usize) -> Result<Vec<NodeId>, TreeError> {
        if level == 0 || level > self.depth {
            return Err(TreeError::LevelOutOfRange {
                level,
                depth: self.depth,
            });
        }
        let target = level - 1;
        Ok(self
            .nodes
            .iter()
            .filter(|n| {
                let d = self.node_depth[n.id.index()];
                d == target || (d < target && n.is_leaf())
            })
            .map(|n| n.id)
            .collect())
    }

    /// Caps the tree depth, hoisting deeper leaves under their ancestor at
    /// depth `max_depth - 1`. The class set is unchanged.
    pub fn limit_depth(&self, max_depth: usize) -> Result<LabelTree, TreeError> {
        if max_depth == 0 {
            return Err(TreeError::InvalidMaxDepth);
        }
        if max_depth >= self.depth {
            return Ok(self.clone());
        }
        fn rebuild(tree: &LabelTree, id: NodeId, max_depth: usize) -> Draft {
            let node = &tree.nodes[id.index()];
            let depth = tree.node_depth[id.index()];
            if depth + 1 == max_depth {
                Draft {
                    label: node.label.clone(),
                    children: if node.is_leaf() {
                        Vec::new()
                    } else {
                        tree.descendant_leaves(id)
                            .into_iter()
                            .map(|l| Draft::leaf(tree.label(l)))
                            .collect()
                    },
                }
            } else {
                Draft {
                    label: node.label.clone(),
                    children: node
                        .children
                        .iter()
                        .map(|c| rebuild(tree, *c, max_depth))
                        .collect(),
                }
            }
        }
        Self::from_draft(rebuild(self, self.root(), max_depth))
    }

    /// Removes a class leaf and prunes ancestors left without children.
    pub fn remove_class(&self, label: &str) -> Result<LabelTree, TreeError> {
        let leaf = match self.leaf_by_label(label) {
            Some(l) => l,
            None if self.nodes.iter().any(|n| n.label == label) => {
                return Err(TreeError::NotALeaf(label.to_string()))
            }
            None => return Err(TreeError::UnknownLabel(label.to_string())),
        };
        if self.leaf_count == 1 {
            return Err(TreeError::LastClass(label.to_string()));
        }
        // Highest ancestor whose only remaining leaf is the removed one.
        let mut cut = leaf;
        while let Some(p) = self.nodes[cut.index()].parent {
            if self.nodes[p.index()].children.len() == 1 && p != self.root() {
                cut = p;
            } else {
                break;
            }
        }
        fn rebuild(tree: &LabelTree, id: NodeId, cut: NodeId) -> Draft {
            let node = &tree.nodes[id.index()];
            Draft {
                label: node.label.clone(),
                children: node
                    .children
                    .iter()
                    .filter(|c| **c != cut)
                    .map(|c| rebuild(tree, *c, cut))
                    .collect(),
            }
        }
        Self::from_draft(rebuild(self, self.root(), cut))
    }

    pub fn insert_class(
        &self,
        label: &str,
        mode: InsertMode,
        probe: Option<&GreedyProbe<'_>>,
    ) -> Result<LabelTree, TreeError> {
        if self.leaf_index.contains_key(label) {
            return Err(TreeError::DuplicateClass(label.to_string()));
        }
        let parent = match mode {
            InsertMode::UnderRoot => self.root(),
            InsertMode::Greedy => self.greedy_parent(probe.ok_or(TreeError::MissingProbe)?)?,
        };
        self.attach_leaf(parent, label)
    }

    /// Walks down from the root, always into the internal child with the
    /// lowest mean probe error, until every child is a leaf.
    pub fn greedy_parent(&self, probe: &GreedyProbe<'_>) -> Result<NodeId, TreeError> {
        if probe.images.is_empty() {
            return Err(TreeError::EmptyProbe);
        }
        let mut current = self.root();
        loop {
            let internal: Vec<NodeId> = self.nodes[current.index()]
                .children
                .iter()
                .copied()
                .filter(|c| !self.nodes[c.index()].is_leaf())
                .collect();
            if internal.is_empty() {
                return Ok(current);
            }
            let mut best: Option<(NodeId, f64)> = None;
            for child in internal {
                let err = self.probe_error(child, probe)?;
                // strict < keeps the lowest id on ties
                if best.map_or(true, |(_, b)| err < b) {
                    best = Some((child, err));
                }
            }
            current = best.expect("at least one internal child").0;
        }
    }

    fn probe_error(&self, node: NodeId, probe: &GreedyProbe<'_>) -> Result<f64, TreeError> {
        let prompt = render_prompt(probe.template, self.label(node))?;
        let mut total = 0.0;
        let mut count = 0usize;
        for image in probe.images {
            for sample in probe.samples.iter() {
                total += probe.scorer.score(&ScoreRequest {
                    image,
                    prompt: &prompt,
                    sample: *sample,
                })?;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }

    fn attach_leaf(&self, parent: NodeId, label: &str) -> Result<LabelTree, TreeError> {
        fn rebuild(tree: &LabelTree, id: NodeId, parent: NodeId, label: &str) -> Draft {
            let node = &tree.nodes[id.index()];
            let mut children: Vec<Draft> = node
                .children
                .iter()
                .map(|c| rebuild(tree, *c, parent, label))
                .collect();
            if id == parent {
                children.push(Draft::leaf(label));
            }
            Draft {
                label: node.label.clone(),
                children,
            }
        }
        Self::from_draft(rebuild(self, self.root(), parent, label))
    }

    pub fn stats(&self) -> TreeStats {
        let mut branching = BTreeMap::new();
        let mut leaves_per_depth = BTreeMap::new();
        for n in &self.nodes {
            if n.is_leaf() {
                *leaves_per_depth
                    .entry(self.node_depth[n.id.index()])
                    .or_insert(0) += 1;
            } else {
                *branching.entry(n.children.len()).or_insert(0) += 1;
            }
        }
        TreeStats {
            depth: self.depth,
            nodes: self.nodes.len(),
            leaves: self.leaf_count,
            internal: self.nodes.len() - self.leaf_count,
            branching,
            leaves_per_depth,
        }
    }
}

fn nodes_label(nodes: &[LabelNode], id: NodeId) -> String {
    nodes[id.index()].label.clone()
}
