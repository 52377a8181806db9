//! Plan-quality judgments: grammar validity, executability, task
//! satisfaction and minimality.
//!
//! Grammar checks always run. Each later judgment only runs when the one
//! before it passed, so a report's flags form a chain:
//! minimal ⇒ satisfies ⇒ executable ⇒ grammar ok.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::parser::{FunctionStep, SkillPlan};
use crate::plant::{transport_calls, FunctionCall, PlantState, DEFAULT_WORKPIECE_ID};
use crate::planner::{PlanError, Planner};
use crate::registry::{ModuleKind, Registry, SkillEffect};
use crate::task::{missing_items, TaskSpec};

/// Which process rule a grammar violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// (3) transport between production steps in different modules.
    Rule3,
    /// (6) begin and end with a storage skill.
    Rule6,
    /// (8) every step is a skill of a module.
    Rule8,
    /// The plan uses a skill the plant has no semantics for (T2).
    NonStandard,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Rule3 => "rule 3",
            Rule::Rule6 => "rule 6",
            Rule::Rule8 => "rule 8",
            Rule::NonStandard => "non-standard",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Index of the offending step.
    pub step: usize,
    pub message: String,
}

/// Checks a skill plan against process rules (3), (6) and (8), and flags
/// non-standard skills. Rules (1), (2), (4), (5), (7) are definitional;
/// rule (9) is judged by minimality instead.
pub fn validate_grammar(plan: &SkillPlan, registry: &Registry) -> Vec<Violation> {
    let mut out = Vec::new();
    let is_storage = |code: &str| {
        registry
            .host_of(code)
            .is_some_and(|m| m.kind == ModuleKind::Storage)
    };

    for (i, code) in plan.steps.iter().enumerate() {
        match registry.skill(code) {
            None => out.push(Violation {
                rule: Rule::Rule8,
                step: i,
                message: format!("unknown skill code {code}"),
            }),
            Some(s) if s.effect == SkillEffect::Leave => out.push(Violation {
                rule: Rule::NonStandard,
                step: i,
                message: format!("skill {code} has no plant semantics"),
            }),
            Some(_) => {}
        }
    }

    if let Some(first) = plan.steps.first() {
        if !is_storage(first) {
            out.push(Violation {
                rule: Rule::Rule6,
                step: 0,
                message: format!("process must begin with a storage skill, found {first}"),
            });
        }
    }
    if let Some(last) = plan.steps.last() {
        if !is_storage(last) {
            out.push(Violation {
                rule: Rule::Rule6,
                step: plan.steps.len() - 1,
                message: format!("process must end with a storage skill, found {last}"),
            });
        }
    }

    // (index, code, host module) of the last production step seen
    let mut previous: Option<(usize, &str, &str)> = None;
    let mut transported = false;
    for (i, code) in plan.steps.iter().enumerate() {
        let Some(skill) = registry.skill(code) else {
            continue;
        };
        match skill.effect {
            SkillEffect::Transport => transported = true,
            SkillEffect::Leave => {}
            _ => {
                if let Some((_, prev_code, prev_host)) = previous {
                    if prev_host != skill.host_module && !transported {
                        out.push(Violation {
                            rule: Rule::Rule3,
                            step: i,
                            message: format!(
                                "transport required between {prev_code} and {code}"
                            ),
                        });
                    }
                }
                previous = Some((i, code, &skill.host_module));
                transported = false;
            }
        }
    }

    out.sort_by_key(|v| (v.step, v.rule));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFault {
    /// Index of the plan step (skill or functionality step) that faulted.
    pub step: usize,
    /// Skill code or functionality name being executed.
    pub operation: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Simulation {
    pub fault: Option<StepFault>,
    /// State after the last successful step.
    pub final_state: PlantState,
}

impl Simulation {
    pub fn executable(&self) -> bool {
        self.fault.is_none()
    }
}

/// The production steps adjacent to the transport at `index`: the nearest
/// non-transport step before and after it.
pub fn transport_endpoints<'r>(
    plan: &[String],
    index: usize,
    registry: &'r Registry,
) -> Option<(&'r str, &'r str)> {
    let host = |code: &String| {
        registry
            .skill(code)
            .filter(|s| !s.effect.is_transport())
            .map(|s| s.host_module.as_str())
    };
    let from = plan[..index].iter().rev().find_map(host)?;
    let to = plan[index + 1..].iter().find_map(host)?;
    Some((from, to))
}

fn workpiece_id(state: &PlantState) -> String {
    if state.workpiece(DEFAULT_WORKPIECE_ID).is_some() {
        DEFAULT_WORKPIECE_ID.to_string()
    } else {
        state.workpieces.keys().next().cloned().unwrap_or_default()
    }
}

/// Replays a skill plan on a private copy of the plant. Each T1 expands to
/// the canonical transport between its adjacent production steps, preceded
/// by an `undock` when the robot is still docked.
pub fn simulate_skill_plan(
    plan: &SkillPlan,
    registry: &Registry,
    initial: &PlantState,
) -> Simulation {
    let wp = workpiece_id(initial);
    let mut state = initial.clone();
    for (i, code) in plan.steps.iter().enumerate() {
        let fault = |reason: String| StepFault {
            step: i,
            operation: code.clone(),
            reason,
        };
        let is_transport = registry
            .skill(code)
            .is_some_and(|s| s.effect == SkillEffect::Transport);
        let next = if is_transport {
            match transport_endpoints(&plan.steps, i, registry) {
                None => Err(fault(format!("cannot derive transport endpoints for {code}"))),
                Some((from, to)) => state
                    .apply_calls(registry, &transport_calls(&state, from, to))
                    .map_err(|(_, f)| fault(f.reason)),
            }
        } else {
            state
                .apply_skill(registry, code, &wp, None)
                .map_err(|f| fault(f.reason))
        };
        match next {
            Ok(s) => state = s,
            Err(f) => {
                return Simulation {
                    fault: Some(f),
                    final_state: state,
                }
            }
        }
    }
    Simulation {
        fault: None,
        final_state: state,
    }
}

/// Derives the call for one parsed functionality step: the endpoint must be
/// registered, its name must match the step's action, and declared
/// parameters are read from the step description.
pub fn resolve_function_step(
    step: &FunctionStep,
    registry: &Registry,
) -> Result<FunctionCall, String> {
    let (_, f) = registry
        .functionality_by_url(&step.url)
        .ok_or_else(|| format!("unregistered endpoint {}", step.url))?;
    if f.name != step.action {
        return Err(format!(
            "action {} does not match endpoint {}",
            step.action, step.url
        ));
    }
    let mut call = FunctionCall::new(&f.name);
    for p in &f.parameters {
        match p.as_str() {
            "target_module" => {
                let m = registry.find_station_mention(&step.description).ok_or_else(|| {
                    format!("cannot determine target_module from {:?}", step.description)
                })?;
                call.params
                    .insert(p.clone(), serde_json::Value::String(m.id.clone()));
            }
            other => return Err(format!("cannot derive parameter {other}")),
        }
    }
    Ok(call)
}

/// Replays parsed functionality steps on a private copy of the plant.
pub fn simulate_function_steps(
    steps: &[FunctionStep],
    registry: &Registry,
    initial: &PlantState,
) -> Simulation {
    let mut state = initial.clone();
    for (i, step) in steps.iter().enumerate() {
        let result = resolve_function_step(step, registry).and_then(|call| {
            state
                .apply_functionality(registry, &call.name, &call.params)
                .map_err(|f| f.reason)
        });
        match result {
            Ok(s) => state = s,
            Err(reason) => {
                return Simulation {
                    fault: Some(StepFault {
                        step: i,
                        operation: step.action.clone(),
                        reason,
                    }),
                    final_state: state,
                }
            }
        }
    }
    Simulation {
        fault: None,
        final_state: state,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Satisfaction {
    pub satisfied: bool,
    pub missing: Vec<String>,
}

/// Goal features and required checks present (checks in the right order)
/// and the workpiece back in storage inventory.
pub fn check_satisfaction(final_state: &PlantState, spec: &TaskSpec) -> Satisfaction {
    let missing = missing_items(final_state, spec);
    Satisfaction {
        satisfied: missing.is_empty(),
        missing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Minimality {
    pub minimal: bool,
    pub plan_length: usize,
    pub oracle_length: usize,
}

/// A plan is minimal when it is exactly as long as the oracle's shortest plan.
pub fn check_minimality(
    plan: &SkillPlan,
    spec: &TaskSpec,
    planner: &Planner<'_>,
) -> Result<Minimality, PlanError> {
    let oracle_length = planner.plan(spec)?.len();
    Ok(Minimality {
        minimal: plan.len() == oracle_length,
        plan_length: plan.len(),
        oracle_length,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutabilityReport {
    pub ok: bool,
    pub fault: Option<StepFault>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub ok: bool,
    pub plan_length: usize,
    pub oracle_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Description of the start state the plan was simulated from.
    pub initial_state: String,
    pub grammar: GrammarReport,
    pub executable: Option<ExecutabilityReport>,
    pub satisfies_task: Option<Satisfaction>,
    pub minimal: Option<MinimalityReport>,
}

impl ValidationReport {
    pub fn grammar_ok(&self) -> bool {
        self.grammar.ok
    }

    pub fn is_executable(&self) -> bool {
        self.executable.as_ref().is_some_and(|e| e.ok)
    }

    pub fn is_correct(&self) -> bool {
        self.satisfies_task.as_ref().is_some_and(|s| s.satisfied)
    }

    pub fn is_minimal(&self) -> bool {
        self.minimal.as_ref().is_some_and(|m| m.ok)
    }
}

pub const STANDARD_START: &str = "robot undocked at the storage module";

/// Runs the full judgment chain on a skill plan.
pub fn validate_plan(plan: &SkillPlan, spec: &TaskSpec, planner: &Planner<'_>) -> ValidationReport {
    let registry = planner.registry();
    let violations = validate_grammar(plan, registry);
    let mut report = ValidationReport {
        initial_state: format!(
            "{STANDARD_START}; workpiece at {}",
            match spec.initial_location(registry) {
                crate::plant::Location::Inventory => "storage inventory".to_string(),
                crate::plant::Location::Module(m) => m,
                crate::plant::Location::Robot => "robot".to_string(),
            }
        ),
        grammar: GrammarReport {
            ok: violations.is_empty(),
            violations,
        },
        executable: None,
        satisfies_task: None,
        minimal: None,
    };
    if !report.grammar.ok {
        return report;
    }

    let sim = simulate_skill_plan(plan, registry, &spec.initial_state(registry));
    report.executable = Some(ExecutabilityReport {
        ok: sim.executable(),
        fault: sim.fault.clone(),
    });
    if !sim.executable() {
        return report;
    }

    let sat = check_satisfaction(&sim.final_state, spec);
    let satisfied = sat.satisfied;
    report.satisfies_task = Some(sat);
    if !satisfied {
        return report;
    }

    report.minimal = Some(match check_minimality(plan, spec, planner) {
        Ok(m) => MinimalityReport {
            ok: m.minimal,
            plan_length: m.plan_length,
            oracle_length: Some(m.oracle_length),
            oracle_error: None,
        },
        Err(e) => MinimalityReport {
            ok: false,
            plan_length: plan.len(),
            oracle_length: None,
            oracle_error: Some(e.to_string()),
        },
    });
    report
}

/// Executability-only report for functionality steps, simulated from the
/// standard start with the workpiece at the task's initial module.
pub fn validate_function_steps(
    steps: &[FunctionStep],
    spec: &TaskSpec,
    registry: &Registry,
) -> ValidationReport {
    let initial = PlantState::standard_start(
        registry,
        spec.material,
        crate::plant::Location::Module(spec.initial_location.clone()),
    );
    let sim = simulate_function_steps(steps, registry, &initial);
    ValidationReport {
        initial_state: format!("{STANDARD_START}; workpiece at {}", spec.initial_location),
        grammar: GrammarReport {
            ok: true,
            violations: Vec::new(),
        },
        executable: Some(ExecutabilityReport {
            ok: sim.executable(),
            fault: sim.fault,
        }),
        satisfies_task: None,
        minimal: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Location;
    use crate::task::bundled_tasks;

    fn plan(codes: &[&str]) -> SkillPlan {
        SkillPlan::new(codes.iter().copied())
    }

    fn rules(v: &[Violation]) -> Vec<(Rule, usize)> {
        v.iter().map(|v| (v.rule, v.step)).collect()
    }

    #[test]
    fn drilled_sheet_plan_is_valid() {
        let r = Registry::bundled();
        let p = plan(&["S1", "T1", "I1", "T1", "M1", "T1", "I3", "T1", "S2"]);
        assert!(validate_grammar(&p, &r).is_empty());
    }

    #[test]
    fn missing_first_transport_breaks_rule_3() {
        let r = Registry::bundled();
        let p = plan(&["S1", "I1", "T1", "M1", "T1", "I3", "T1", "S2"]);
        let v = validate_grammar(&p, &r);
        assert_eq!(rules(&v), [(Rule::Rule3, 1)]);
        assert_eq!(v[0].message, "transport required between S1 and I1");
    }

    #[test]
    fn lone_production_step_breaks_rule_6_twice() {
        let r = Registry::bundled();
        let v = validate_grammar(&plan(&["M1"]), &r);
        assert_eq!(rules(&v), [(Rule::Rule6, 0), (Rule::Rule6, 0)]);
    }

    #[test]
    fn unknown_and_nonstandard_codes() {
        let r = Registry::bundled();
        let v = validate_grammar(&plan(&["S1", "X7", "T2", "S2"]), &r);
        assert_eq!(rules(&v), [(Rule::Rule8, 1), (Rule::NonStandard, 2)]);
    }

    #[test]
    fn same_module_steps_need_no_transport() {
        let r = Registry::bundled();
        let p = plan(&["S1", "T1", "M1", "M2", "T1", "S2"]);
        assert!(validate_grammar(&p, &r).is_empty());
    }

    #[test]
    fn returned_nameplate_plan_executes_and_satisfies() {
        let r = Registry::bundled();
        let spec = &bundled_tasks()[2];
        let p = plan(&["S1", "T1", "P2", "T1", "I3", "T1", "S2"]);
        let sim = simulate_skill_plan(&p, &r, &spec.initial_state(&r));
        assert!(sim.executable(), "{:?}", sim.fault);
        let wp = sim.final_state.workpiece("wp1").unwrap();
        assert_eq!(wp.location, Location::Inventory);
        assert!(check_satisfaction(&sim.final_state, spec).satisfied);
    }

    #[test]
    fn grammar_valid_plans_can_still_fault() {
        let r = Registry::bundled();
        let spec = &bundled_tasks()[2];
        for (codes, step) in [
            (["S1", "T1", "P2", "T1", "S1", "T1", "S2"], 4),
            (["S1", "T1", "P2", "T1", "P2", "T1", "S2"], 3),
        ] {
            let p = plan(&codes);
            assert!(validate_grammar(&p, &r).is_empty());
            let sim = simulate_skill_plan(&p, &r, &spec.initial_state(&r));
            assert_eq!(sim.fault.map(|f| f.step), Some(step), "{codes:?}");
        }
    }

    #[test]
    fn omitting_paint_misses_the_goal() {
        let r = Registry::bundled();
        let spec = &bundled_tasks()[2];
        let p = plan(&["S1", "T1", "I3", "T1", "S2"]);
        let sim = simulate_skill_plan(&p, &r, &spec.initial_state(&r));
        assert!(sim.executable());
        let sat = check_satisfaction(&sim.final_state, spec);
        assert!(!sat.satisfied);
        assert_eq!(sat.missing, ["paint_pattern"]);
    }

    #[test]
    fn quality_test_before_painting_does_not_count() {
        let r = Registry::bundled();
        let spec = &bundled_tasks()[2];
        let p = plan(&["S1", "T1", "I3", "T1", "P2", "T1", "S2"]);
        let sim = simulate_skill_plan(&p, &r, &spec.initial_state(&r));
        assert!(sim.executable());
        let sat = check_satisfaction(&sim.final_state, spec);
        assert_eq!(sat.missing, ["quality_tested after production"]);
    }

    #[test]
    fn empty_goal_is_vacuously_satisfied() {
        let r = Registry::bundled();
        let spec = TaskSpec {
            instruction: "nothing".into(),
            initial_location: "storage".into(),
            material: Default::default(),
            goal_features: vec![],
            required_checks: vec![],
        };
        let sim = simulate_skill_plan(&plan(&["S1", "S2"]), &r, &spec.initial_state(&r));
        assert!(check_satisfaction(&sim.final_state, &spec).satisfied);
    }

    #[test]
    fn dangling_transport_cannot_be_expanded() {
        let r = Registry::bundled();
        let spec = &bundled_tasks()[0];
        let sim = simulate_skill_plan(&plan(&["T1", "S1"]), &r, &spec.initial_state(&r));
        let f = sim.fault.unwrap();
        assert_eq!((f.step, f.operation.as_str()), (0, "T1"));
    }

    #[test]
    fn report_chain_stops_at_first_failure() {
        let r = Registry::bundled();
        let planner = Planner::new(&r);
        let spec = &bundled_tasks()[2];

        let bad = validate_plan(&plan(&["P2"]), spec, &planner);
        assert!(!bad.grammar_ok());
        assert!(bad.executable.is_none() && bad.satisfies_task.is_none());

        let good = validate_plan(&plan(&["S1", "T1", "P2", "T1", "I3", "T1", "S2"]), spec, &planner);
        assert!(good.is_executable() && good.is_correct() && good.is_minimal());
        let m = good.minimal.unwrap();
        assert_eq!((m.plan_length, m.oracle_length), (7, Some(7)));

        let long = validate_plan(
            &plan(&["S1", "T1", "I1", "T1", "P2", "T1", "I3", "T1", "S2"]),
            spec,
            &planner,
        );
        assert!(long.is_correct() && !long.is_minimal());
    }

    #[test]
    fn inserted_detour_is_not_minimal() {
        let r = Registry::bundled();
        let planner = Planner::new(&r);
        let spec = &bundled_tasks()[2];
        let p = plan(&["S1", "T1", "I1", "T1", "T1", "P2", "T1", "I3", "T1", "S2"]);
        let m = check_minimality(&p, spec, &planner).unwrap();
        assert_eq!((m.minimal, m.plan_length, m.oracle_length), (false, 10, 7));
    }
}
