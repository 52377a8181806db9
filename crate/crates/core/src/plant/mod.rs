//! Deterministic simulation of the matrix production plant.
//!
//! A [`PlantState`] is a value: every operation takes `&self` and returns a new
//! state or a [`Fault`], so a fault can never leave a half-applied mutation
//! behind. The HTTP face of the plant lives in [`server`].

pub mod server;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::features::FeatureKind;
use crate::registry::{ModuleKind, Registry, SkillEffect};

pub const DEFAULT_WORKPIECE_ID: &str = "wp1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    #[default]
    Steel,
    Wood,
}

/// Where a workpiece is. `Module` means the module's hand-off point;
/// `Inventory` is the storage module's internal stock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "at", content = "module", rename_all = "snake_case")]
pub enum Location {
    Inventory,
    Module(String),
    Robot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workpiece {
    pub id: String,
    pub material: Material,
    /// Feature kind to optional detail. Re-applying a kind keeps the first detail.
    pub features: BTreeMap<FeatureKind, Option<String>>,
    /// Every feature-producing skill applied, in order, repeats included.
    pub history: Vec<FeatureKind>,
    pub location: Location,
}

impl Workpiece {
    pub fn new(id: impl Into<String>, material: Material, location: Location) -> Self {
        Self {
            id: id.into(),
            material,
            features: BTreeMap::new(),
            history: Vec::new(),
            location,
        }
    }

    pub fn has(&self, kind: FeatureKind) -> bool {
        self.features.contains_key(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Option<String>,
    pub docked: bool,
    pub carrying: Option<String>,
    /// Module the carried workpiece was loaded from.
    pub loaded_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantState {
    pub workpieces: BTreeMap<String, Workpiece>,
    pub robot: RobotState,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{reason}")]
pub struct Fault {
    pub reason: String,
}

impl Fault {
    fn new(reason: impl fmt::Display) -> Self {
        Self {
            reason: reason.to_string(),
        }
    }
}

impl PlantState {
    pub fn new(workpieces: impl IntoIterator<Item = Workpiece>, robot: RobotState) -> Self {
        Self {
            workpieces: workpieces.into_iter().map(|w| (w.id.clone(), w)).collect(),
            robot,
            version: 0,
        }
    }

    /// The standard start: one workpiece at `location`, the robot undocked at
    /// the storage module.
    pub fn standard_start(registry: &Registry, material: Material, location: Location) -> Self {
        let robot = RobotState {
            position: registry.storage_module().map(|m| m.id.clone()),
            ..RobotState::default()
        };
        Self::new(
            [Workpiece::new(DEFAULT_WORKPIECE_ID, material, location)],
            robot,
        )
    }

    pub fn workpiece(&self, id: &str) -> Option<&Workpiece> {
        self.workpieces.get(id)
    }

    /// The workpiece sitting at a module's hand-off point, if any.
    pub fn workpiece_at(&self, module_id: &str) -> Option<&Workpiece> {
        self.workpieces
            .values()
            .find(|w| matches!(&w.location, Location::Module(m) if m == module_id))
    }

    fn committed(mut self) -> Self {
        self.version += 1;
        self
    }

    /// Applies one robot functionality (`move_dock`, `load`, `unload`, `undock`).
    pub fn apply_functionality(
        &self,
        registry: &Registry,
        name: &str,
        params: &Map<String, Value>,
    ) -> Result<PlantState, Fault> {
        let mut next = self.clone();
        let robot = &mut next.robot;
        match name {
            "move_dock" => {
                let target = params
                    .get("target_module")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Fault::new("move_dock: missing parameter target_module"))?;
                let module = registry
                    .module(target)
                    .or_else(|| registry.module_by_name(target))
                    .filter(|m| m.kind != ModuleKind::Transport)
                    .ok_or_else(|| Fault::new(format!("move_dock: unknown module {target}")))?;
                if robot.docked {
                    return Err(Fault::new("move_dock: robot docked"));
                }
                robot.position = Some(module.id.clone());
                robot.docked = true;
            }
            "load" => {
                if !robot.docked {
                    return Err(Fault::new("load: robot not docked"));
                }
                if robot.carrying.is_some() {
                    return Err(Fault::new("load: robot already carrying a workpiece"));
                }
                let here = robot.position.clone().expect("docked robot has a position");
                let wp_id = self
                    .workpiece_at(&here)
                    .map(|w| w.id.clone())
                    .ok_or_else(|| Fault::new(format!("load: no workpiece at {here}")))?;
                robot.carrying = Some(wp_id.clone());
                robot.loaded_at = Some(here);
                next.workpieces.get_mut(&wp_id).expect("present").location = Location::Robot;
            }
            "unload" => {
                if !robot.docked {
                    return Err(Fault::new("unload: robot not docked"));
                }
                let Some(wp_id) = robot.carrying.clone() else {
                    return Err(Fault::new("unload: robot not carrying a workpiece"));
                };
                let here = robot.position.clone().expect("docked robot has a position");
                if robot.loaded_at.as_deref() == Some(here.as_str()) {
                    return Err(Fault::new(format!(
                        "unload: workpiece was loaded at {here}"
                    )));
                }
                if self.workpiece_at(&here).is_some() {
                    return Err(Fault::new(format!("unload: hand-off at {here} occupied")));
                }
                robot.carrying = None;
                robot.loaded_at = None;
                next.workpieces.get_mut(&wp_id).expect("present").location =
                    Location::Module(here);
            }
            "undock" => {
                if !robot.docked {
                    return Err(Fault::new("undock: robot not docked"));
                }
                robot.docked = false;
            }
            other => return Err(Fault::new(format!("unknown functionality {other}"))),
        }
        Ok(next.committed())
    }

    /// Applies a non-transport skill to a workpiece.
    pub fn apply_skill(
        &self,
        registry: &Registry,
        code: &str,
        workpiece_id: &str,
        detail: Option<&str>,
    ) -> Result<PlantState, Fault> {
        let skill = registry
            .skill(code)
            .ok_or_else(|| Fault::new(format!("unknown skill {code}")))?;
        if skill.effect.is_transport() {
            return Err(Fault::new("transport skills execute via operator agent"));
        }
        let host = registry
            .module(&skill.host_module)
            .expect("registry resolves its own hosts");
        let wp = self
            .workpiece(workpiece_id)
            .ok_or_else(|| Fault::new(format!("unknown workpiece {workpiece_id}")))?;

        let mut next = self.clone();
        let target = next.workpieces.get_mut(workpiece_id).expect("present");
        match skill.effect {
            SkillEffect::Retrieve => {
                if wp.location != Location::Inventory {
                    return Err(Fault::new(format!(
                        "{code}: workpiece not in {} inventory",
                        host.name
                    )));
                }
                if self.workpiece_at(&host.id).is_some() {
                    return Err(Fault::new(format!("{code}: hand-off at {} occupied", host.id)));
                }
                target.location = Location::Module(host.id.clone());
            }
            SkillEffect::Store => {
                if wp.location != Location::Module(host.id.clone()) {
                    return Err(Fault::new(format!("workpiece not at {}", host.name)));
                }
                target.location = Location::Inventory;
            }
            SkillEffect::AddFeature(kind) => {
                if wp.location != Location::Module(host.id.clone()) {
                    return Err(Fault::new(format!("workpiece not at {}", host.name)));
                }
                target
                    .features
                    .entry(kind)
                    .or_insert_with(|| detail.map(str::to_string));
                target.history.push(kind);
            }
            SkillEffect::Transport | SkillEffect::Leave => unreachable!("rejected above"),
        }
        Ok(next.committed())
    }
}

/// One functionality invocation with its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    pub params: Map<String, Value>,
}

impl FunctionCall {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: Map::new(),
        }
    }

    pub fn move_dock(target_module: &str) -> Self {
        let mut params = Map::new();
        params.insert("target_module".into(), Value::String(target_module.into()));
        Self {
            name: "move_dock".into(),
            params,
        }
    }
}

/// The canonical five-call transport `from -> to`.
pub fn canonical_transport(from: &str, to: &str) -> Vec<FunctionCall> {
    vec![
        FunctionCall::move_dock(from),
        FunctionCall::new("load"),
        FunctionCall::new("undock"),
        FunctionCall::move_dock(to),
        FunctionCall::new("unload"),
    ]
}

/// Functionality calls that realize one transport from the current state:
/// an `undock` when the robot is still docked from an earlier transport,
/// then the canonical five calls.
pub fn transport_calls(state: &PlantState, from: &str, to: &str) -> Vec<FunctionCall> {
    let mut calls = Vec::with_capacity(6);
    if state.robot.docked {
        calls.push(FunctionCall::new("undock"));
    }
    calls.extend(canonical_transport(from, to));
    calls
}

impl PlantState {
    /// Applies calls in order, stopping at the first fault. The error carries
    /// the index of the failing call.
    pub fn apply_calls(
        &self,
        registry: &Registry,
        calls: &[FunctionCall],
    ) -> Result<PlantState, (usize, Fault)> {
        calls.iter().enumerate().try_fold(self.clone(), |s, (i, c)| {
            s.apply_functionality(registry, &c.name, &c.params)
                .map_err(|f| (i, f))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().cloned().unwrap_or_default()
    }

    fn at_storage_handoff(r: &Registry) -> PlantState {
        PlantState::standard_start(r, Material::Wood, Location::Module("storage".into()))
    }

    fn run(r: &Registry, s: &PlantState, steps: &[(&str, Value)]) -> Result<PlantState, Fault> {
        steps.iter().try_fold(s.clone(), |st, (name, p)| {
            st.apply_functionality(r, name, &params(p.clone()))
        })
    }

    #[test]
    fn five_step_transport_moves_workpiece() {
        let r = Registry::bundled();
        let start = at_storage_handoff(&r);
        let end = run(
            &r,
            &start,
            &[
                ("move_dock", json!({"target_module": "storage"})),
                ("load", json!({})),
                ("undock", json!({})),
                ("move_dock", json!({"target_module": "painting"})),
                ("unload", json!({})),
            ],
        )
        .unwrap();
        assert_eq!(
            end.workpiece("wp1").unwrap().location,
            Location::Module("painting".into())
        );
        assert_eq!(end.robot.position.as_deref(), Some("painting"));
        assert!(end.robot.docked);
        assert_eq!(end.robot.carrying, None);
        assert_eq!(end.version, 5);
    }

    #[test]
    fn precondition_faults() {
        let r = Registry::bundled();
        let start = at_storage_handoff(&r);
        let err = start.apply_functionality(&r, "load", &Map::new()).unwrap_err();
        assert_eq!(err.reason, "load: robot not docked");
        let err = start.apply_functionality(&r, "undock", &Map::new()).unwrap_err();
        assert_eq!(err.reason, "undock: robot not docked");
        let err = start.apply_functionality(&r, "fly", &Map::new()).unwrap_err();
        assert_eq!(err.reason, "unknown functionality fly");
        let err = start
            .apply_functionality(&r, "move_dock", &Map::new())
            .unwrap_err();
        assert!(err.reason.contains("target_module"));
        let docked = start
            .apply_functionality(&r, "move_dock", &params(json!({"target_module": "laser"})))
            .unwrap();
        let err = docked
            .apply_functionality(&r, "move_dock", &params(json!({"target_module": "cnc"})))
            .unwrap_err();
        assert_eq!(err.reason, "move_dock: robot docked");
        let err = docked.apply_functionality(&r, "load", &Map::new()).unwrap_err();
        assert_eq!(err.reason, "load: no workpiece at laser");
    }

    #[test]
    fn move_dock_accepts_display_names() {
        let r = Registry::bundled();
        let s = at_storage_handoff(&r)
            .apply_functionality(
                &r,
                "move_dock",
                &params(json!({"target_module": "CNC machine module"})),
            )
            .unwrap();
        assert_eq!(s.robot.position.as_deref(), Some("cnc"));
        let err = at_storage_handoff(&r)
            .apply_functionality(&r, "move_dock", &params(json!({"target_module": "robotino_7"})))
            .unwrap_err();
        assert_eq!(err.reason, "move_dock: unknown module robotino_7");
    }

    #[test]
    fn skill_feature_and_detail() {
        let r = Registry::bundled();
        let s = PlantState::standard_start(&r, Material::Wood, Location::Module("painting".into()));
        let s = s
            .apply_skill(&r, "P2", "wp1", Some("backside customer logo"))
            .unwrap();
        let wp = s.workpiece("wp1").unwrap();
        assert_eq!(
            wp.features.get(&FeatureKind::PaintPattern),
            Some(&Some("backside customer logo".to_string()))
        );
        // idempotent on features, still recorded in history
        let again = s.apply_skill(&r, "P2", "wp1", Some("other")).unwrap();
        let wp2 = again.workpiece("wp1").unwrap();
        assert_eq!(wp2.features, wp.features);
        assert_eq!(wp2.history.len(), 2);
    }

    #[test]
    fn skill_location_faults() {
        let r = Registry::bundled();
        let s = PlantState::standard_start(&r, Material::Steel, Location::Module("painting".into()));
        let err = s.apply_skill(&r, "M1", "wp1", None).unwrap_err();
        assert_eq!(err.reason, "workpiece not at CNC machine module");
        for code in ["T1", "T2"] {
            let err = s.apply_skill(&r, code, "wp1", None).unwrap_err();
            assert_eq!(err.reason, "transport skills execute via operator agent");
        }
        assert!(s.apply_skill(&r, "Z9", "wp1", None).is_err());
        assert!(s.apply_skill(&r, "P1", "wp9", None).is_err());
    }

    #[test]
    fn retrieve_then_store_is_identity_on_features() {
        let r = Registry::bundled();
        let s = PlantState::standard_start(&r, Material::Steel, Location::Inventory);
        let out = s.apply_skill(&r, "S1", "wp1", None).unwrap();
        assert_eq!(
            out.workpiece("wp1").unwrap().location,
            Location::Module("storage".into())
        );
        let back = out.apply_skill(&r, "S2", "wp1", None).unwrap();
        let wp = back.workpiece("wp1").unwrap();
        assert_eq!(wp.location, Location::Inventory);
        assert!(wp.features.is_empty());
        assert_eq!(back.version, 2);
        let err = back.apply_skill(&r, "S2", "wp1", None).unwrap_err();
        assert_eq!(err.reason, "workpiece not at storage module");
        let err = out.apply_skill(&r, "S1", "wp1", None).unwrap_err();
        assert!(err.reason.contains("inventory"));
    }

    #[test]
    fn unload_back_at_origin_faults() {
        let r = Registry::bundled();
        let err = run(
            &r,
            &at_storage_handoff(&r),
            &[
                ("move_dock", json!({"target_module": "storage"})),
                ("load", json!({})),
                ("unload", json!({})),
            ],
        )
        .unwrap_err();
        assert_eq!(err.reason, "unload: workpiece was loaded at storage");
    }
}
