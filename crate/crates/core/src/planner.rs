//! Shortest-plan search over grammar-valid skill sequences.
//!
//! Breadth-first over plan prefixes. A prefix is kept only if it can still
//! become grammar-valid (starts with a storage skill, no missing transport
//! between production steps in different modules) and every step completed
//! so far executes on the simulated plant. Successors are generated in
//! catalog order, so the first goal reached is the shortest plan and, among
//! equally short plans, the first in catalog order.
//!
//! Transport steps are simulated lazily: a T1 only learns its destination
//! when the next production step is chosen, so a pending transport is part
//! of the search state.
//!
//! The search runs with an increasing length bound and drops prefixes whose
//! admissible lower bound on remaining steps exceeds it. A prefix that can
//! reach the goal within the bound is never dropped, so the result equals
//! that of the unpruned search.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::features::FeatureKind;
use crate::plant::{transport_calls, Location, PlantState, RobotState, DEFAULT_WORKPIECE_ID};
use crate::registry::{Registry, Skill, SkillEffect};
use crate::task::{missing_items, CheckOrder, TaskSpec};

const UNREACHABLE: usize = usize::MAX / 2;

/// Plan length bound covering every bundled task.
pub const DEFAULT_MAX_PLAN_LEN: usize = 11;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no plan of at most {max_len} steps satisfies the task")]
    NoPlan { max_len: usize },
}

#[derive(Debug, Clone)]
pub struct Planner<'r> {
    registry: &'r Registry,
    max_len: usize,
}

#[derive(Clone)]
struct Node {
    state: PlantState,
    /// Host module of the last production step.
    last_station: Option<String>,
    pending_transports: usize,
    parent: Option<usize>,
    skill: usize,
    depth: usize,
}

/// Everything about a node that affects its future; two prefixes with equal
/// keys have identical sets of valid continuations.
#[derive(PartialEq, Eq, Hash)]
struct Key {
    robot: RobotState,
    location: Location,
    features: BTreeMap<FeatureKind, Option<String>>,
    order: CheckOrder,
    last_station: Option<String>,
    pending_transports: usize,
}

impl Node {
    fn key(&self) -> Key {
        let wp = self
            .state
            .workpiece(DEFAULT_WORKPIECE_ID)
            .expect("planner states hold the task workpiece");
        Key {
            robot: self.state.robot.clone(),
            location: wp.location.clone(),
            features: wp.features.clone(),
            order: CheckOrder::from_history(&wp.history),
            last_station: self.last_station.clone(),
            pending_transports: self.pending_transports,
        }
    }
}

impl<'r> Planner<'r> {
    pub fn new(registry: &'r Registry) -> Self {
        Self {
            registry,
            max_len: DEFAULT_MAX_PLAN_LEN,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn registry(&self) -> &'r Registry {
        self.registry
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Returns a shortest grammar-valid, executable plan that satisfies `spec`.
    pub fn plan(&self, spec: &TaskSpec) -> Result<Vec<String>, PlanError> {
        let search = Search::new(self.registry, spec);
        let root = search.root();
        let start = search.lower_bound(&root).min(self.max_len);
        for bound in start..=self.max_len {
            if let Some(plan) = search.run(root.clone(), bound) {
                return Ok(plan);
            }
        }
        Err(PlanError::NoPlan {
            max_len: self.max_len,
        })
    }
}

struct Search<'a> {
    registry: &'a Registry,
    spec: &'a TaskSpec,
    skills: Vec<&'a Skill>,
    storage_id: Option<&'a str>,
    /// Host module of each feature kind offered by exactly one module.
    sole_host: BTreeMap<FeatureKind, &'a str>,
}

impl<'a> Search<'a> {
    fn new(registry: &'a Registry, spec: &'a TaskSpec) -> Self {
        let skills: Vec<&Skill> = registry
            .skills()
            .filter(|s| s.effect != SkillEffect::Leave)
            .collect();
        let mut hosts: BTreeMap<FeatureKind, Vec<&str>> = BTreeMap::new();
        for s in &skills {
            if let SkillEffect::AddFeature(k) = s.effect {
                let v = hosts.entry(k).or_default();
                if !v.contains(&s.host_module.as_str()) {
                    v.push(&s.host_module);
                }
            }
        }
        let sole_host = hosts
            .into_iter()
            .filter(|(_, v)| v.len() == 1)
            .map(|(k, v)| (k, v[0]))
            .collect();
        Self {
            registry,
            spec,
            skills,
            storage_id: registry.storage_module().map(|m| m.id.as_str()),
            sole_host,
        }
    }

    fn root(&self) -> Node {
        Node {
            state: self.spec.initial_state(self.registry),
            last_station: None,
            pending_transports: 0,
            parent: None,
            skill: usize::MAX,
            depth: 0,
        }
    }

    /// Steps still needed after `node`: one per missing feature, one
    /// transport per module still to visit plus the way back, and the final
    /// store. Never more than the true remainder.
    fn lower_bound(&self, node: &Node) -> usize {
        let Some(wp) = node.state.workpiece(DEFAULT_WORKPIECE_ID) else {
            return UNREACHABLE;
        };
        let order = CheckOrder::from_history(&wp.history);
        let checks = &self.spec.required_checks;
        let mut needed = 0;
        let mut visits: Vec<&str> = Vec::new();
        for kind in self.spec.required_kinds() {
            let mut missing = !wp.has(kind);
            if kind == FeatureKind::RawChecked
                && checks.contains(&kind)
                && order.produced
                && !order.raw_checked_before_production
            {
                return UNREACHABLE;
            }
            if kind == FeatureKind::QualityTested
                && checks.contains(&kind)
                && !order.quality_tested_after_production
            {
                missing = true;
            }
            if missing {
                needed += 1;
                if let Some(&host) = self.sole_host.get(&kind) {
                    if Some(host) != node.last_station.as_deref() && !visits.contains(&host) {
                        visits.push(host);
                    }
                }
            }
        }
        let (station, retrieve) = match &node.last_station {
            Some(s) => (Some(s.as_str()), 0),
            None => (self.storage_id, 1),
        };
        let away = !visits.is_empty() || station != self.storage_id;
        let transports = (visits.len() + usize::from(away)).saturating_sub(node.pending_transports);
        retrieve + needed + transports + 1
    }

    fn run(&self, root: Node, bound: usize) -> Option<Vec<String>> {
        let mut nodes = vec![root];
        let mut seen = HashSet::new();
        seen.insert(nodes[0].key());
        let mut queue = VecDeque::from([0usize]);

        while let Some(idx) = queue.pop_front() {
            if nodes[idx].depth >= bound {
                continue;
            }
            for (si, skill) in self.skills.iter().enumerate() {
                let Some(child) = self.expand(&nodes[idx], idx, si, skill) else {
                    continue;
                };
                let ends_in_storage = Some(skill.host_module.as_str()) == self.storage_id;
                if ends_in_storage
                    && child.pending_transports == 0
                    && missing_items(&child.state, self.spec).is_empty()
                {
                    nodes.push(child);
                    return Some(self.extract(&nodes, nodes.len() - 1));
                }
                if child.depth + self.lower_bound(&child) > bound {
                    continue;
                }
                if seen.insert(child.key()) {
                    nodes.push(child);
                    queue.push_back(nodes.len() - 1);
                }
            }
        }
        None
    }

    fn expand(&self, node: &Node, idx: usize, si: usize, skill: &Skill) -> Option<Node> {
        if node.depth == 0 && Some(skill.host_module.as_str()) != self.storage_id {
            return None;
        }
        let mut child = Node {
            state: node.state.clone(),
            last_station: node.last_station.clone(),
            pending_transports: node.pending_transports,
            parent: Some(idx),
            skill: si,
            depth: node.depth + 1,
        };
        if skill.effect == SkillEffect::Transport {
            // a transport needs a production step before it, and a second
            // transport in a row would find nothing to load
            node.last_station.as_ref()?;
            if node.pending_transports > 0 {
                return None;
            }
            child.pending_transports += 1;
            return Some(child);
        }

        let here = skill.host_module.as_str();
        if let Some(prev) = &node.last_station {
            if prev != here && node.pending_transports == 0 {
                return None;
            }
            for _ in 0..node.pending_transports {
                let calls = transport_calls(&child.state, prev, here);
                child.state = child.state.apply_calls(self.registry, &calls).ok()?;
            }
        }
        let detail = match skill.effect {
            SkillEffect::AddFeature(kind) => self.spec.detail_for(kind),
            _ => None,
        };
        child.state = child
            .state
            .apply_skill(self.registry, &skill.code, DEFAULT_WORKPIECE_ID, detail)
            .ok()?;
        child.last_station = Some(here.to_string());
        child.pending_transports = 0;
        Some(child)
    }

    fn extract(&self, nodes: &[Node], mut idx: usize) -> Vec<String> {
        let mut out = Vec::new();
        while let Some(parent) = nodes[idx].parent {
            out.push(self.skills[nodes[idx].skill].code.clone());
            idx = parent;
        }
        out.reverse();
        out
    }
}

/// Shortest plan for `spec` under the default length bound.
pub fn oracle_plan_skills(registry: &Registry, spec: &TaskSpec) -> Result<Vec<String>, PlanError> {
    Planner::new(registry).plan(spec)
}
