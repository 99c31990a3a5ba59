//! Binary decision trees over threshold splits.
//!
//! A split `feature ≤ threshold` sends a sample down the `True` branch when
//! the comparison holds, which on a [`BinaryDataset`] means the column bit is 1.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dataset::BinaryDataset;
use crate::objective::{Objective, Regularizer};
use crate::support::SupportSet;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("no column splits feature {feature} at {threshold}")]
    UnknownColumn { feature: usize, threshold: f64 },
    #[error("feature index {feature} out of range for rows of width {width}")]
    FeatureOutOfRange { feature: usize, width: usize },
    #[error("malformed tree json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed tree node at {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("unknown field {field:?} at {path}")]
    UnknownField { path: String, field: String },
    #[error("missing branch {branch:?} at {path}")]
    MissingBranch { path: String, branch: &'static str },
    #[error("unknown feature name {name:?} at {path}")]
    UnknownFeature { path: String, name: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tree {
    Leaf {
        prediction: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        if_true: Box<Tree>,
        if_false: Box<Tree>,
    },
}

impl Tree {
    pub fn leaf(prediction: u8) -> Tree {
        Tree::Leaf { prediction }
    }

    pub fn split(feature: usize, threshold: f64, if_true: Tree, if_false: Tree) -> Tree {
        Tree::Split {
            feature,
            threshold,
            if_true: Box::new(if_true),
            if_false: Box::new(if_false),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf { .. })
    }

    pub fn leaves(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 1,
            Tree::Split { if_true, if_false, .. } => if_true.leaves() + if_false.leaves(),
        }
    }

    pub fn internal_nodes(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Split { if_true, if_false, .. } => 1 + if_true.internal_nodes() + if_false.internal_nodes(),
        }
    }

    /// Longest root-to-leaf path in splits; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf { .. } => 0,
            Tree::Split { if_true, if_false, .. } => 1 + if_true.depth().max(if_false.depth()),
        }
    }

    /// `(leaves, depth)`.
    pub fn measure(&self) -> (usize, usize) {
        (self.leaves(), self.depth())
    }

    /// Prediction for one row of raw feature values.
    pub fn predict_row(&self, row: &[f64]) -> Result<u8, TreeError> {
        let mut node = self;
        loop {
            match node {
                Tree::Leaf { prediction } => return Ok(*prediction),
                Tree::Split {
                    feature,
                    threshold,
                    if_true,
                    if_false,
                } => {
                    let v = *row.get(*feature).ok_or(TreeError::FeatureOutOfRange {
                        feature: *feature,
                        width: row.len(),
                    })?;
                    node = if v <= *threshold { if_true } else { if_false };
                }
            }
        }
    }

    pub fn predict_rows<'a, I>(&self, rows: I) -> Result<Vec<u8>, TreeError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        rows.into_iter().map(|r| self.predict_row(r)).collect()
    }

    /// Predictions on a binarized dataset, routing whole supports at once.
    pub fn predict(&self, bin: &BinaryDataset) -> Result<Vec<u8>, TreeError> {
        let mut out = vec![0u8; bin.n_samples()];
        self.route(bin, bin.full_support(), &mut |leaf_pred, s| {
            for i in s.iter() {
                out[i] = leaf_pred;
            }
        })?;
        Ok(out)
    }

    /// Calls `visit(prediction, captured)` for every leaf.
    pub fn route<F>(&self, bin: &BinaryDataset, s: SupportSet, visit: &mut F) -> Result<(), TreeError>
    where
        F: FnMut(u8, &SupportSet),
    {
        match self {
            Tree::Leaf { prediction } => {
                visit(*prediction, &s);
                Ok(())
            }
            Tree::Split {
                feature,
                threshold,
                if_true,
                if_false,
            } => {
                let j = bin.column_for(*feature, *threshold).ok_or(TreeError::UnknownColumn {
                    feature: *feature,
                    threshold: *threshold,
                })?;
                let col = bin.column(j);
                if_true.route(bin, s.intersection(col), visit)?;
                if_false.route(bin, s.difference(col), visit)
            }
        }
    }

    /// Misclassified count and leaf count on `bin`.
    pub fn objective(&self, bin: &BinaryDataset) -> Result<Objective, TreeError> {
        let positives = bin.positives();
        let mut errors = 0u64;
        self.route(bin, bin.full_support(), &mut |pred, s| {
            let ones = s.intersection_count(positives);
            errors += if pred == 1 { s.count() - ones } else { ones } as u64;
        })?;
        Ok(Objective {
            errors,
            leaves: self.leaves() as u64,
        })
    }

    /// `N * q * R(t)` on `bin`.
    pub fn scaled_objective(&self, bin: &BinaryDataset, reg: &Regularizer) -> Result<u128, TreeError> {
        Ok(self.objective(bin)?.scaled(reg))
    }

    /// Nodes in the documented JSON layout, naming features by `names`.
    pub fn to_json(&self, names: &[String]) -> Value {
        match self {
            Tree::Leaf { prediction } => json!({ "prediction": prediction }),
            Tree::Split {
                feature,
                threshold,
                if_true,
                if_false,
            } => {
                let name = names
                    .get(*feature)
                    .cloned()
                    .unwrap_or_else(|| format!("feature{feature}"));
                json!({
                    "feature": name,
                    "threshold": threshold,
                    "relation": "<=",
                    "true": if_true.to_json(names),
                    "false": if_false.to_json(names),
                })
            }
        }
    }

    pub fn to_json_string(&self, names: &[String]) -> String {
        serde_json::to_string_pretty(&self.to_json(names)).expect("tree json serializes")
    }

    pub fn from_json(text: &str, names: &[String]) -> Result<Tree, TreeError> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json_value(&value, names, "$")
    }

    pub fn from_json_value(value: &Value, names: &[String], path: &str) -> Result<Tree, TreeError> {
        let obj = value.as_object().ok_or_else(|| TreeError::Malformed {
            path: path.into(),
            reason: "expected an object".into(),
        })?;
        if obj.contains_key("prediction") {
            check_fields(obj, &["prediction"], path)?;
            let prediction = match obj["prediction"].as_u64() {
                Some(0) => 0,
                Some(1) => 1,
                _ => {
                    return Err(TreeError::Malformed {
                        path: path.into(),
                        reason: "prediction must be 0 or 1".into(),
                    })
                }
            };
            return Ok(Tree::leaf(prediction));
        }
        check_fields(obj, &["feature", "threshold", "relation", "true", "false"], path)?;
        let name = obj
            .get("feature")
            .and_then(Value::as_str)
            .ok_or_else(|| TreeError::Malformed {
                path: path.into(),
                reason: "split needs a string \"feature\"".into(),
            })?;
        let feature = names
            .iter()
            .position(|n| n == name)
            .or_else(|| name.strip_prefix("feature").and_then(|i| i.parse().ok()))
            .ok_or_else(|| TreeError::UnknownFeature {
                path: path.into(),
                name: name.into(),
            })?;
        let threshold = obj
            .get("threshold")
            .and_then(Value::as_f64)
            .ok_or_else(|| TreeError::Malformed {
                path: path.into(),
                reason: "split needs a numeric \"threshold\"".into(),
            })?;
        if let Some(rel) = obj.get("relation") {
            if rel.as_str() != Some("<=") {
                return Err(TreeError::Malformed {
                    path: path.into(),
                    reason: "relation must be \"<=\"".into(),
                });
            }
        }
        let branch = |key: &'static str| -> Result<Tree, TreeError> {
            let child = obj.get(key).ok_or(TreeError::MissingBranch {
                path: path.into(),
                branch: key,
            })?;
            Self::from_json_value(child, names, &format!("{path}.{key}"))
        };
        Ok(Tree::split(feature, threshold, branch("true")?, branch("false")?))
    }

    /// Indented `feature ≤ θ` / `True:` / `False:` rendering.
    pub fn render(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.render_into(names, 0, None, &mut out);
        out
    }

    fn render_into(&self, names: &[String], indent: usize, edge: Option<&str>, out: &mut String) {
        let pad = "  ".repeat(indent);
        let prefix = edge.map(|e| format!("{e}: ")).unwrap_or_default();
        match self {
            Tree::Leaf { prediction } => {
                let _ = writeln!(out, "{pad}{prefix}class {prediction}");
            }
            Tree::Split {
                feature,
                threshold,
                if_true,
                if_false,
            } => {
                let name = names
                    .get(*feature)
                    .cloned()
                    .unwrap_or_else(|| format!("feature{feature}"));
                let _ = writeln!(out, "{pad}{prefix}{name} ≤ {threshold}");
                if_true.render_into(names, indent + 1, Some("True"), out);
                if_false.render_into(names, indent + 1, Some("False"), out);
            }
        }
    }
}

fn check_fields(obj: &Map<String, Value>, allowed: &[&str], path: &str) -> Result<(), TreeError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(field) => Err(TreeError::UnknownField {
            path: path.into(),
            field: field.clone(),
        }),
        None => Ok(()),
    }
}
