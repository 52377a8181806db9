//! Task specifications: the ground truth a production request is judged against.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::{Feature, FeatureKind};
use crate::plant::{Location, Material, PlantState};
use crate::registry::Registry;

pub const BUNDLED_TASKS: &str = include_str!("../data/tasks.json");

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub instruction: String,
    /// Module id where the workpiece starts. The storage module means its
    /// inventory; any other module means that module's hand-off point.
    pub initial_location: String,
    #[serde(default)]
    pub material: Material,
    #[serde(default)]
    pub goal_features: Vec<Feature>,
    #[serde(default)]
    pub required_checks: Vec<FeatureKind>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("cannot read task file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed task file: {0}")]
    Json(#[from] serde_json::Error),
}

impl TaskSpec {
    /// Every feature kind that must be present at the end: goals plus checks.
    pub fn required_kinds(&self) -> BTreeSet<FeatureKind> {
        self.goal_features
            .iter()
            .map(|f| f.kind)
            .chain(self.required_checks.iter().copied())
            .collect()
    }

    /// Detail text the task attaches to a feature kind, if any.
    pub fn detail_for(&self, kind: FeatureKind) -> Option<&str> {
        self.goal_features
            .iter()
            .find(|f| f.kind == kind)
            .and_then(|f| f.detail.as_deref())
    }

    pub fn initial_location(&self, registry: &Registry) -> Location {
        match registry.storage_module() {
            Some(s) if s.id == self.initial_location => Location::Inventory,
            _ => Location::Module(self.initial_location.clone()),
        }
    }

    /// The standard start for this task: robot undocked at storage, the one
    /// workpiece at the task's initial location.
    pub fn initial_state(&self, registry: &Registry) -> PlantState {
        PlantState::standard_start(registry, self.material, self.initial_location(registry))
    }

    pub fn normalized_instruction(&self) -> String {
        normalize(&self.instruction)
    }
}

/// Collapses whitespace and surrounding braces so that an instruction can be
/// matched against the input line of a prompt.
pub fn normalize(text: &str) -> String {
    let t = text.trim();
    let t = t
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .unwrap_or(t);
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn bundled_tasks() -> Vec<TaskSpec> {
    serde_json::from_str(BUNDLED_TASKS).expect("bundled tasks are valid")
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<TaskSpec>, TaskError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Ordering facts about a workpiece's processing history that decide whether
/// its checks count. A raw-material check only counts before the first
/// production step; a quality test only counts after the last one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CheckOrder {
    pub produced: bool,
    pub raw_checked_before_production: bool,
    pub quality_tested_after_production: bool,
}

impl CheckOrder {
    pub fn from_history(history: &[FeatureKind]) -> Self {
        history.iter().fold(Self::default(), |acc, &k| acc.then(k))
    }

    pub fn then(mut self, kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::RawChecked if !self.produced => {
                self.raw_checked_before_production = true
            }
            FeatureKind::QualityTested => self.quality_tested_after_production = true,
            k if k.is_production() => {
                self.produced = true;
                self.quality_tested_after_production = false;
            }
            _ => {}
        }
        self
    }
}

/// Lists what `state` still lacks to satisfy `spec`; empty means satisfied.
pub fn missing_items(state: &PlantState, spec: &TaskSpec) -> Vec<String> {
    let Some(wp) = state
        .workpiece(crate::plant::DEFAULT_WORKPIECE_ID)
        .or_else(|| state.workpieces.values().next())
    else {
        return vec!["workpiece".to_string()];
    };
    let mut missing = Vec::new();
    for kind in spec.required_kinds() {
        if !wp.has(kind) {
            missing.push(kind.to_string());
        }
    }
    let order = CheckOrder::from_history(&wp.history);
    if spec.required_checks.contains(&FeatureKind::RawChecked)
        && wp.has(FeatureKind::RawChecked)
        && !order.raw_checked_before_production
    {
        missing.push("raw_checked before production".to_string());
    }
    if spec.required_checks.contains(&FeatureKind::QualityTested)
        && wp.has(FeatureKind::QualityTested)
        && !order.quality_tested_after_production
    {
        missing.push("quality_tested after production".to_string());
    }
    if wp.location != Location::Inventory {
        missing.push("workpiece back in storage inventory".to_string());
    }
    missing
}
