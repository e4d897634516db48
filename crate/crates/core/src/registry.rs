//! The function library: a two-level hierarchy of main functions, some of
//! which group a set of leaf sub-functions.
//!
//! A registry is a value. [`FunctionRegistry::register_function`] returns a new
//! registry with a bumped version and leaves the original untouched, so a
//! validated registry can be shared freely between request handlers.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binds a leaf function to an executable edit operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExecutorId(pub String);

impl ExecutorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ExecutorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    Leaf,
    Group,
}

/// One entry of the library. Groups carry leaf children; leaves carry an executor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub kind: FunctionKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor_id: Option<ExecutorId>,
}

impl FunctionSpec {
    pub fn leaf(name: impl Into<String>, description: impl Into<String>, executor: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind: FunctionKind::Leaf,
            children: Vec::new(),
            executor_id: Some(ExecutorId::new(executor)),
        }
    }

    pub fn group(
        name: impl Into<String>,
        description: impl Into<String>,
        children: Vec<FunctionSpec>,
    ) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind: FunctionKind::Group,
            children,
            executor_id: None,
        }
    }

    pub fn is_group(&self) -> bool {
        self.kind == FunctionKind::Group
    }

    pub fn is_leaf(&self) -> bool {
        self.kind == FunctionKind::Leaf
    }

    /// Nesting depth: 1 for a leaf, 1 + deepest child for a group.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(FunctionSpec::depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope<'a> {
    /// Top-level main functions.
    Main,
    /// Children of the named group.
    SubOf(&'a str),
    /// Every leaf, top-level or nested, in rendering order. Used by the flat baseline.
    AnyLeaf,
}

impl fmt::Display for Scope<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Main => f.write_str("main functions"),
            Scope::SubOf(g) => write!(f, "sub-functions of {g}"),
            Scope::AnyLeaf => f.write_str("all leaf functions"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("duplicate function name {0:?}")]
    DuplicateName(String),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("function {function:?} names unknown executor {executor:?}")]
    UnknownExecutor { function: String, executor: String },
    #[error("no function named {name:?} among {scope}")]
    NotFound { name: String, scope: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, RegistryError>;

/// Trims, collapses internal whitespace runs to one space, and case-folds.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionRegistry {
    mains: Vec<FunctionSpec>,
    version: u64,
    executors: Arc<BTreeSet<String>>,
}

impl FunctionRegistry {
    /// Empty registry that accepts leaves bound to any of `executors`.
    pub fn new<I, S>(executors: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            mains: Vec::new(),
            version: 0,
            executors: Arc::new(executors.into_iter().map(Into::into).collect()),
        }
    }

    /// The default library, bound to the built-in executor catalog.
    pub fn bundled() -> Self {
        Self::from_manifest_str(BUNDLED_MANIFEST, crate::exec::executor_ids())
            .expect("bundled registry manifest is valid")
    }

    pub fn mains(&self) -> &[FunctionSpec] {
        &self.mains
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn knows_executor(&self, id: &str) -> bool {
        self.executors.contains(id)
    }

    pub fn has_groups(&self) -> bool {
        self.mains.iter().any(FunctionSpec::is_group)
    }

    /// Returns a new registry with `spec` appended. `self` is unchanged.
    pub fn register_function(&self, spec: FunctionSpec) -> Result<FunctionRegistry> {
        self.validate_spec(&spec)?;
        let key = normalize_name(&spec.name);
        if self.mains.iter().any(|m| normalize_name(&m.name) == key) {
            return Err(RegistryError::DuplicateName(spec.name));
        }
        let mut mains = self.mains.clone();
        mains.push(spec);
        Ok(FunctionRegistry {
            mains,
            version: self.version + 1,
            executors: Arc::clone(&self.executors),
        })
    }

    fn validate_leaf(&self, spec: &FunctionSpec) -> Result<()> {
        if !spec.children.is_empty() {
            return Err(RegistryError::InvalidHierarchy(format!(
                "leaf {:?} has children",
                spec.name
            )));
        }
        let Some(exec) = &spec.executor_id else {
            return Err(RegistryError::UnknownExecutor {
                function: spec.name.clone(),
                executor: String::new(),
            });
        };
        if !self.knows_executor(exec.as_str()) {
            return Err(RegistryError::UnknownExecutor {
                function: spec.name.clone(),
                executor: exec.0.clone(),
            });
        }
        Ok(())
    }

    fn validate_spec(&self, spec: &FunctionSpec) -> Result<()> {
        if normalize_name(&spec.name).is_empty() {
            return Err(RegistryError::InvalidHierarchy("function name is empty".into()));
        }
        match spec.kind {
            FunctionKind::Leaf => self.validate_leaf(spec),
            FunctionKind::Group => {
                if spec.executor_id.is_some() {
                    return Err(RegistryError::InvalidHierarchy(format!(
                        "group {:?} must not bind an executor",
                        spec.name
                    )));
                }
                if spec.children.len() < 2 {
                    return Err(RegistryError::InvalidHierarchy(format!(
                        "group {:?} has {} children, needs at least 2",
                        spec.name,
                        spec.children.len()
                    )));
                }
                let mut seen = BTreeSet::new();
                for child in &spec.children {
                    if child.is_group() {
                        return Err(RegistryError::InvalidHierarchy(format!(
                            "group {:?} nested inside group {:?}",
                            child.name, spec.name
                        )));
                    }
                    if normalize_name(&child.name).is_empty() {
                        return Err(RegistryError::InvalidHierarchy(format!(
                            "group {:?} has a child with an empty name",
                            spec.name
                        )));
                    }
                    self.validate_leaf(child)?;
                    if !seen.insert(normalize_name(&child.name)) {
                        return Err(RegistryError::DuplicateName(child.name.clone()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Exact lookup after [`normalize_name`]; no fuzzy matching.
    pub fn resolve(&self, name: &str, scope: Scope<'_>) -> Result<&FunctionSpec> {
        let key = normalize_name(name);
        let not_found = || RegistryError::NotFound {
            name: name.to_string(),
            scope: scope.to_string(),
        };
        match scope {
            Scope::Main => self
                .mains
                .iter()
                .find(|m| normalize_name(&m.name) == key)
                .ok_or_else(not_found),
            Scope::SubOf(group) => {
                let group_key = normalize_name(group);
                self.mains
                    .iter()
                    .find(|m| m.is_group() && normalize_name(&m.name) == group_key)
                    .and_then(|g| g.children.iter().find(|c| normalize_name(&c.name) == key))
                    .ok_or_else(not_found)
            }
            Scope::AnyLeaf => self
                .leaves()
                .map(|(leaf, _)| leaf)
                .find(|l| normalize_name(&l.name) == key)
                .ok_or_else(not_found),
        }
    }

    /// Children of a group by (normalized) name; empty for leaves and unknown names.
    pub fn list_subs(&self, group: &str) -> &[FunctionSpec] {
        let key = normalize_name(group);
        self.mains
            .iter()
            .find(|m| normalize_name(&m.name) == key)
            .map(|m| m.children.as_slice())
            .unwrap_or(&[])
    }

    /// Every leaf in rendering order, paired with the main function it belongs to.
    pub fn leaves(&self) -> impl Iterator<Item = (&FunctionSpec, &str)> {
        self.mains.iter().flat_map(|m| {
            let origin = m.name.as_str();
            let own: Box<dyn Iterator<Item = &FunctionSpec>> = if m.is_leaf() {
                Box::new(std::iter::once(m))
            } else {
                Box::new(m.children.iter())
            };
            own.map(move |leaf| (leaf, origin))
        })
    }

    /// Main function owning the leaf named `leaf` (normalized match).
    pub fn origin_of(&self, leaf: &str) -> Option<&str> {
        let key = normalize_name(leaf);
        self.leaves()
            .find(|(l, _)| normalize_name(&l.name) == key)
            .map(|(_, origin)| origin)
    }

    pub fn from_manifest(manifest: RegistryManifest, executors: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut registry = FunctionRegistry::new(executors);
        for spec in manifest.functions {
            registry = registry.register_function(spec)?;
        }
        Ok(registry)
    }

    pub fn from_manifest_str(text: &str, executors: impl IntoIterator<Item = String>) -> Result<Self> {
        let manifest: RegistryManifest =
            serde_json::from_str(text).map_err(|e| RegistryError::Manifest(e.to_string()))?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(RegistryError::Manifest(format!(
                "unsupported schema {}, expected {MANIFEST_SCHEMA}",
                manifest.schema
            )));
        }
        Self::from_manifest(manifest, executors)
    }

    pub fn load_manifest(path: impl AsRef<Path>, executors: impl IntoIterator<Item = String>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RegistryError::Manifest(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_manifest_str(&text, executors)
    }

    pub fn to_manifest(&self) -> RegistryManifest {
        RegistryManifest {
            schema: MANIFEST_SCHEMA,
            functions: self.mains.clone(),
        }
    }
}

pub const MANIFEST_SCHEMA: u32 = 1;

/// On-disk registry description. See `docs/registry-manifest.md`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub schema: u32,
    pub functions: Vec<FunctionSpec>,
}

pub const BUNDLED_MANIFEST: &str = include_str!("../assets/registry.json");
