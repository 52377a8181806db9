use std::sync::{Arc, LazyLock};
use std::time::Instant;

use async_trait::async_trait;
use regex::Regex;

use super::{CompletionBackend, CompletionError, CompletionRequest, CompletionResult};
use crate::parser::SkillPlan;
use crate::planner::{Planner, DEFAULT_MAX_PLAN_LEN};
use crate::prompt::{extract_input, AgentKind, INSTRUCTIONS_HEADER};
use crate::registry::{ModuleKind, Registry, SkillEffect};
use crate::task::{normalize, TaskSpec};
use crate::validator::transport_endpoints;

pub const ORACLE_BACKEND_ID: &str = "oracle";

static DEMAND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)transport the workpiece from\s+(?:the\s+)?(.+?)\s+to\s+(?:the\s+)?(.+?)\s*\.?\s*$")
        .unwrap()
});
static CONTEXT_FUNCTIONALITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"Functionality "(\w+)" will [^"]*?URL "([^"]+)""#).unwrap()
});

/// Deterministic backend that answers manager prompts with the shortest
/// plan for a known task and transport demands with the canonical
/// five-call expansion.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    registry: Arc<Registry>,
    tasks: Vec<TaskSpec>,
    max_len: usize,
}

impl OracleBackend {
    pub fn new(registry: Arc<Registry>, tasks: Vec<TaskSpec>) -> Self {
        Self {
            registry,
            tasks,
            max_len: DEFAULT_MAX_PLAN_LEN,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn find_task(&self, input: &str) -> Option<&TaskSpec> {
        let wanted = normalize(input).to_lowercase();
        self.tasks
            .iter()
            .find(|t| t.normalized_instruction().to_lowercase() == wanted)
    }

    /// Manager-format answer for `spec`: the brace sequence followed by one
    /// explanation item per step.
    pub fn manager_text(&self, spec: &TaskSpec) -> Result<String, CompletionError> {
        let steps = Planner::new(&self.registry)
            .with_max_len(self.max_len)
            .plan(spec)
            .map_err(|e| CompletionError::Oracle(e.to_string()))?;
        Ok(render_manager_output(&self.registry, &SkillPlan::new(steps), spec))
    }

    fn operator_text(&self, prompt: &str, input: &str) -> Result<String, CompletionError> {
        let caps = DEMAND
            .captures(input)
            .ok_or_else(|| CompletionError::Oracle(format!("unsupported demand {input:?}")))?;
        let lookup = |name: &str| {
            self.registry
                .module_by_name(name)
                .filter(|m| m.kind != ModuleKind::Transport)
                .ok_or_else(|| CompletionError::Oracle(format!("unknown module {name:?}")))
        };
        let from = lookup(&caps[1])?;
        let to = lookup(&caps[2])?;

        let context_end = prompt.find(INSTRUCTIONS_HEADER).unwrap_or(prompt.len());
        let url_of = |name: &str| {
            CONTEXT_FUNCTIONALITY
                .captures_iter(&prompt[..context_end])
                .find(|c| &c[1] == name)
                .map(|c| c[2].to_string())
                .ok_or_else(|| {
                    CompletionError::Oracle(format!("functionality {name} not offered"))
                })
        };
        let robot = self
            .registry
            .transport_module()
            .map_or("transport robot", |m| m.name.as_str());
        Ok(render_transport_output(
            robot,
            &from.name,
            &to.name,
            &url_of("move_dock")?,
            &url_of("load")?,
            &url_of("undock")?,
            &url_of("unload")?,
        ))
    }
}

/// Writes a plan in the manager output format.
pub fn render_manager_output(registry: &Registry, plan: &SkillPlan, spec: &TaskSpec) -> String {
    let mut lines = vec![plan.sequence_text(), "Explanation:".to_string()];
    for (i, code) in plan.steps.iter().enumerate() {
        let Some(skill) = registry.skill(code) else {
            lines.push(format!("({code})."));
            continue;
        };
        let host = registry
            .module(&skill.host_module)
            .map_or(skill.host_module.as_str(), |m| m.name.as_str());
        let text = match skill.effect {
            SkillEffect::Retrieve => format!("retrieve a workpiece from the {host}"),
            SkillEffect::Store => format!("store the final product in the {host}"),
            SkillEffect::Transport => match transport_endpoints(&plan.steps, i, registry) {
                Some((from, to)) => {
                    let name = |id: &str| registry.module(id).map_or(id.to_string(), |m| m.name.clone());
                    format!("transport the workpiece from the {} to the {}", name(from), name(to))
                }
                None => skill.description.clone(),
            },
            SkillEffect::Leave => skill.description.clone(),
            SkillEffect::AddFeature(kind) => match spec.detail_for(kind) {
                Some(detail) => format!("{} at the {host}: {detail}", skill.description),
                None => format!("{} at the {host}", skill.description),
            },
        };
        lines.push(format!("({code}) {text}."));
    }
    lines.join("\n")
}

/// Writes the five-call transport expansion in the operator output format.
pub fn render_transport_output(
    robot: &str,
    from: &str,
    to: &str,
    move_dock_url: &str,
    load_url: &str,
    undock_url: &str,
    unload_url: &str,
) -> String {
    [
        format!("To transport the workpiece from the {from} to the {to}, the following steps shall be executed:"),
        format!("(1) Move the {robot} to the {from} and dock it. Call the functionality \"move_dock\" using the URL \"{move_dock_url}\" to move the robot to the {from} and dock it."),
        format!("(2) Load the workpiece from the {from} onto the {robot}. Call the functionality \"load\" using the URL \"{load_url}\" to load the workpiece onto the robot."),
        format!("(3) Undock the {robot} from the {from}. Call the functionality \"undock\" using the URL \"{undock_url}\" to detach the robot from the {from}."),
        format!("(4) Move the {robot} to the {to} and dock it. Call the functionality \"move_dock\" using the URL \"{move_dock_url}\" to move the robot to the {to} and dock it."),
        format!("(5) Unload the workpiece from the {robot} onto the {to}. Call the functionality \"unload\" using the URL \"{unload_url}\" to unload the workpiece from the robot onto the {to}."),
    ]
    .join("\n")
}

#[async_trait]
impl CompletionBackend for OracleBackend {
    fn id(&self) -> &str {
        ORACLE_BACKEND_ID
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError> {
        request.check()?;
        let start = Instant::now();
        let input = extract_input(&request.prompt)
            .ok_or_else(|| CompletionError::Oracle("prompt has no open input".into()))?;
        let text = match AgentKind::detect(&request.prompt) {
            Some(AgentKind::Manager) => {
                let spec = self
                    .find_task(input)
                    .ok_or_else(|| CompletionError::Oracle(format!("no task spec for {input:?}")))?;
                self.manager_text(spec)?
            }
            Some(AgentKind::Operator) => self.operator_text(&request.prompt, input)?,
            None => return Err(CompletionError::Oracle("unrecognized prompt".into())),
        };
        Ok(CompletionResult {
            text,
            backend_id: ORACLE_BACKEND_ID.into(),
            latency: start.elapsed(),
        })
    }
}
