//! Gradient-boosted tree-ensemble model: parsing and inference.
//!
//! A model arrives as two JSON documents. The model file is an array of
//! trees in the XGBoost `dump_model(dump_format="json")` layout (nested
//! objects with `nodeid`/`split`/`split_condition`/`yes`/`no`/`missing`/
//! `children` for splits and `leaf` for leaves). A sidecar metadata file
//! carries what the dump omits: `base_score` (in margin units),
//! `feature_names`, and `objective`.
//!
//! Routing semantics match the dump format: at a split on feature `j` with
//! threshold `t`, a present value `v` goes to the `yes` child when `v < t`
//! (strict) and to the `no` child when `v >= t`; a missing value goes to the
//! `missing` child, which is always one of the two.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Errors from model parsing, validation, and prediction.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("metadata parse error: {0}")]
    Metadata(String),
    #[error("invalid model: tree {tree_index}, node {node_id}: {reason}")]
    Validation {
        tree_index: usize,
        node_id: i64,
        reason: String,
    },
    #[error("unknown objective {found:?} (expected \"binary_logistic\" or \"regression\")")]
    UnknownObjective { found: String },
    #[error("feature vector length {actual} does not match model feature count {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("predict_probability requires a binary_logistic objective; this model is {objective}")]
    UnsupportedObjective { objective: &'static str },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Link function declared by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    BinaryLogistic,
    Regression,
}

impl Objective {
    fn name(self) -> &'static str {
        match self {
            Objective::BinaryLogistic => "binary_logistic",
            Objective::Regression => "regression",
        }
    }
}

/// One row of feature values. `None` is the explicit missing state; CSV
/// ingestion maps empty cells to it and routing sends it down the tree's
/// `missing` branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<Option<f64>>);

impl FeatureVector {
    /// Build a vector with every value present.
    pub fn from_values(values: &[f64]) -> Self {
        FeatureVector(values.iter().copied().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.0[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.0.iter().copied()
    }
}

/// Node payload after validation. Child links are indices into the owning
/// tree's node vector, resolved once at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Split {
        feature: usize,
        threshold: f64,
        yes: usize,
        no: usize,
        missing: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Node id as it appeared in the dump; kept for error messages and
    /// round-trip serialization.
    pub id: i64,
    pub kind: NodeKind,
}

/// A single validated decision tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: usize,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Route a feature vector from the root to a leaf and return the leaf
    /// value. Total for any vector of the right length: validation
    /// guarantees every path terminates.
    pub fn route(&self, x: &FeatureVector) -> f64 {
        let mut at = self.root;
        loop {
            match self.nodes[at].kind {
                NodeKind::Leaf { value } => return value,
                NodeKind::Split {
                    feature,
                    threshold,
                    yes,
                    no,
                    missing,
                } => {
                    at = match x.get(feature) {
                        None => missing,
                        Some(v) if v < threshold => yes,
                        Some(_) => no,
                    };
                }
            }
        }
    }

    /// Feature indices used by at least one split in this tree.
    pub fn used_features(&self, out: &mut HashSet<usize>) {
        for node in &self.nodes {
            if let NodeKind::Split { feature, .. } = node.kind {
                out.insert(feature);
            }
        }
    }
}

/// A parsed, validated ensemble. Immutable after construction; prediction is
/// pure and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    base_score: f64,
    feature_names: Vec<String>,
    objective: Objective,
}

#[derive(Debug, Deserialize)]
struct Metadata {
    base_score: f64,
    feature_names: Vec<String>,
    objective: String,
}

/// Raw dump node as it appears in the JSON. Unknown keys (e.g. `depth`,
/// `gain`, `cover`) are ignored.
#[derive(Debug, Deserialize)]
struct RawNode {
    nodeid: i64,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    split_condition: Option<f64>,
    #[serde(default)]
    yes: Option<i64>,
    #[serde(default)]
    no: Option<i64>,
    #[serde(default)]
    missing: Option<i64>,
    #[serde(default)]
    leaf: Option<f64>,
    #[serde(default)]
    children: Option<Vec<RawNode>>,
}

fn parse_error(source: &str, err: &serde_json::Error) -> ModelError {
    let line = err.line();
    let column = err.column();
    // serde_json reports 1-based line/column; recover the byte offset.
    let offset = source
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + column.saturating_sub(1);
    ModelError::Parse {
        offset,
        line,
        column,
        message: err.to_string(),
    }
}

/// Resolve a dump `split` field to a feature index: exact feature-name match
/// first, then the `f<k>` convention used when the dump was produced without
/// names, then a bare integer.
fn resolve_feature(split: &str, feature_names: &[String]) -> Option<usize> {
    if let Some(idx) = feature_names.iter().position(|n| n == split) {
        return Some(idx);
    }
    let digits = split.strip_prefix('f').unwrap_or(split);
    digits.parse::<usize>().ok()
}

impl TreeEnsemble {
    /// Parse and validate a model from the dump JSON and its metadata JSON.
    pub fn from_json_strs(model_json: &str, metadata_json: &str) -> Result<Self, ModelError> {
        let metadata: Metadata =
            serde_json::from_str(metadata_json).map_err(|e| ModelError::Metadata(e.to_string()))?;
        let objective = match metadata.objective.as_str() {
            "binary_logistic" => Objective::BinaryLogistic,
            "regression" => Objective::Regression,
            other => {
                return Err(ModelError::UnknownObjective {
                    found: other.to_string(),
                })
            }
        };

        let raw_trees: Vec<RawNode> =
            serde_json::from_str(model_json).map_err(|e| parse_error(model_json, &e))?;

        let mut trees = Vec::with_capacity(raw_trees.len());
        for (tree_index, root) in raw_trees.iter().enumerate() {
            trees.push(build_tree(tree_index, root, &metadata.feature_names)?);
        }

        Ok(TreeEnsemble {
            trees,
            base_score: metadata.base_score,
            feature_names: metadata.feature_names,
            objective,
        })
    }

    /// Parse a model from two readers (model dump, then metadata).
    pub fn from_readers<R1: Read, R2: Read>(
        mut model: R1,
        mut metadata: R2,
    ) -> Result<Self, ModelError> {
        let mut model_json = String::new();
        model.read_to_string(&mut model_json)?;
        let mut metadata_json = String::new();
        metadata.read_to_string(&mut metadata_json)?;
        Self::from_json_strs(&model_json, &metadata_json)
    }

    /// Parse a model from the two file paths.
    pub fn from_files<P1: AsRef<Path>, P2: AsRef<Path>>(
        model_path: P1,
        metadata_path: P2,
    ) -> Result<Self, ModelError> {
        let model_json = std::fs::read_to_string(model_path)?;
        let metadata_json = std::fs::read_to_string(metadata_path)?;
        Self::from_json_strs(&model_json, &metadata_json)
    }

    /// Build an ensemble directly from validated parts. Used by tests and
    /// the estimator fixtures; runs the same structural validation as
    /// parsing.
    pub fn from_parts(
        trees: Vec<Tree>,
        base_score: f64,
        feature_names: Vec<String>,
        objective: Objective,
    ) -> Result<Self, ModelError> {
        for (tree_index, tree) in trees.iter().enumerate() {
            for node in &tree.nodes {
                if let NodeKind::Split { feature, .. } = node.kind {
                    if feature >= feature_names.len() {
                        return Err(ModelError::Validation {
                            tree_index,
                            node_id: node.id,
                            reason: format!(
                                "feature index {feature} out of range for {} features",
                                feature_names.len()
                            ),
                        });
                    }
                }
            }
        }
        Ok(TreeEnsemble {
            trees,
            base_score,
            feature_names,
            objective,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// A copy of this ensemble holding only tree `index`, with base score 0.
    /// Attribution linearity checks decompose an ensemble this way.
    pub fn single_tree(&self, index: usize) -> TreeEnsemble {
        TreeEnsemble {
            trees: vec![self.trees[index].clone()],
            base_score: 0.0,
            feature_names: self.feature_names.clone(),
            objective: self.objective,
        }
    }

    /// Raw margin: base score plus the leaf value reached in each tree,
    /// accumulated in tree order.
    pub fn predict_margin(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::LengthMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        let mut margin = self.base_score;
        for tree in &self.trees {
            margin += tree.route(x);
        }
        Ok(margin)
    }

    /// Logistic transform of the margin. Only defined for binary logistic
    /// models; regression callers should present the margin directly.
    pub fn predict_probability(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        if self.objective != Objective::BinaryLogistic {
            return Err(ModelError::UnsupportedObjective {
                objective: self.objective.name(),
            });
        }
        Ok(sigmoid(self.predict_margin(x)?))
    }

    /// Feature indices that appear in no split of any tree. Their exact
    /// attribution is zero by construction.
    pub fn unused_features(&self) -> Vec<usize> {
        let mut used = HashSet::new();
        for tree in &self.trees {
            tree.used_features(&mut used);
        }
        (0..self.n_features())
            .filter(|i| !used.contains(i))
            .collect()
    }

    /// Serialize back to the dump-format JSON value (array of trees).
    pub fn to_dump_value(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.trees
                .iter()
                .map(|tree| dump_node(tree, tree.root, &self.feature_names))
                .collect(),
        )
    }

    /// Serialize the sidecar metadata to a JSON value.
    pub fn to_metadata_value(&self) -> serde_json::Value {
        serde_json::json!({
            "base_score": self.base_score,
            "feature_names": self.feature_names,
            "objective": self.objective.name(),
        })
    }
}

/// Numerically stable logistic function; exact 0.5 at zero and monotone over
/// the representable range (saturates to 0/1 for |margin| beyond ~37).
pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

fn dump_node(tree: &Tree, index: usize, feature_names: &[String]) -> serde_json::Value {
    let node = &tree.nodes[index];
    match node.kind {
        NodeKind::Leaf { value } => serde_json::json!({
            "nodeid": node.id,
            "leaf": value,
        }),
        NodeKind::Split {
            feature,
            threshold,
            yes,
            no,
            missing,
        } => serde_json::json!({
            "nodeid": node.id,
            "split": feature_names[feature],
            "split_condition": threshold,
            "yes": tree.nodes[yes].id,
            "no": tree.nodes[no].id,
            "missing": tree.nodes[missing].id,
            "children": [
                dump_node(tree, yes, feature_names),
                dump_node(tree, no, feature_names),
            ],
        }),
    }
}

/// Flatten a raw dump tree, validate its structure, and resolve child ids to
/// vector indices.
fn build_tree(
    tree_index: usize,
    root: &RawNode,
    feature_names: &[String],
) -> Result<Tree, ModelError> {
    let fail = |node_id: i64, reason: String| ModelError::Validation {
        tree_index,
        node_id,
        reason,
    };

    // Collect every node in the nested dump.
    let mut raw_nodes: Vec<&RawNode> = Vec::new();
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        raw_nodes.push(node);
        if let Some(children) = &node.children {
            for child in children {
                stack.push(child);
            }
        }
    }

    let mut id_to_index: HashMap<i64, usize> = HashMap::with_capacity(raw_nodes.len());
    for (i, node) in raw_nodes.iter().enumerate() {
        if id_to_index.insert(node.nodeid, i).is_some() {
            return Err(fail(node.nodeid, "duplicate node id".to_string()));
        }
    }

    // Resolve each node into its validated form.
    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for raw in &raw_nodes {
        let is_split = raw.split.is_some()
            || raw.split_condition.is_some()
            || raw.yes.is_some()
            || raw.no.is_some();
        let kind = match (is_split, raw.leaf) {
            (true, Some(_)) => {
                return Err(fail(
                    raw.nodeid,
                    "node has both split and leaf fields".to_string(),
                ))
            }
            (false, None) => {
                return Err(fail(
                    raw.nodeid,
                    "node has neither split nor leaf fields".to_string(),
                ))
            }
            (false, Some(value)) => NodeKind::Leaf { value },
            (true, None) => {
                let split = raw
                    .split
                    .as_deref()
                    .ok_or_else(|| fail(raw.nodeid, "split node missing `split`".to_string()))?;
                let threshold = raw.split_condition.ok_or_else(|| {
                    fail(
                        raw.nodeid,
                        "split node missing `split_condition`".to_string(),
                    )
                })?;
                let yes_id = raw
                    .yes
                    .ok_or_else(|| fail(raw.nodeid, "split node missing `yes`".to_string()))?;
                let no_id = raw
                    .no
                    .ok_or_else(|| fail(raw.nodeid, "split node missing `no`".to_string()))?;
                let missing_id = raw
                    .missing
                    .ok_or_else(|| fail(raw.nodeid, "split node missing `missing`".to_string()))?;
                if missing_id != yes_id && missing_id != no_id {
                    return Err(fail(
                        raw.nodeid,
                        format!(
                            "missing child {missing_id} is neither yes ({yes_id}) nor no ({no_id})"
                        ),
                    ));
                }
                let feature = resolve_feature(split, feature_names)
                    .ok_or_else(|| fail(raw.nodeid, format!("unknown split feature {split:?}")))?;
                if feature >= feature_names.len() {
                    return Err(fail(
                        raw.nodeid,
                        format!(
                            "feature index {feature} out of range for {} features",
                            feature_names.len()
                        ),
                    ));
                }
                let resolve = |child_id: i64| {
                    id_to_index.get(&child_id).copied().ok_or_else(|| {
                        fail(
                            raw.nodeid,
                            format!("child id {child_id} not present in tree"),
                        )
                    })
                };
                NodeKind::Split {
                    feature,
                    threshold,
                    yes: resolve(yes_id)?,
                    no: resolve(no_id)?,
                    missing: resolve(missing_id)?,
                }
            }
        };
        nodes.push(TreeNode {
            id: raw.nodeid,
            kind,
        });
    }

    let root_index = id_to_index[&root.nodeid];
    let tree = Tree {
        nodes,
        root: root_index,
    };

    // Reachability walk from the root; also detects cycles (a node revisited
    // while still on the path).
    let mut reached = vec![false; tree.nodes.len()];
    let mut on_path = vec![false; tree.nodes.len()];
    check_acyclic(&tree, root_index, &mut reached, &mut on_path)
        .map_err(|node_id| fail(node_id, "cycle detected".to_string()))?;
    if let Some(idx) = reached.iter().position(|r| !r) {
        return Err(fail(
            tree.nodes[idx].id,
            "node unreachable from root".to_string(),
        ));
    }

    Ok(tree)
}

fn check_acyclic(
    tree: &Tree,
    at: usize,
    reached: &mut [bool],
    on_path: &mut [bool],
) -> Result<(), i64> {
    if on_path[at] {
        return Err(tree.nodes[at].id);
    }
    if reached[at] {
        return Ok(());
    }
    reached[at] = true;
    on_path[at] = true;
    if let NodeKind::Split { yes, no, .. } = tree.nodes[at].kind {
        check_acyclic(tree, yes, reached, on_path)?;
        check_acyclic(tree, no, reached, on_path)?;
    }
    on_path[at] = false;
    Ok(())
}
