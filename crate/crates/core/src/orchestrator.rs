//! End-to-end task execution: the manager agent plans, a dispatch loop calls
//! skill endpoints in order, and transport skills are expanded by the
//! operator agent into functionality calls. Every prompt and HTTP exchange
//! is recorded in an [`ExecutionTrace`].
//!
//! Agents are stateless. Each prompt is rebuilt from the registry at the
//! moment it is needed, and nothing from earlier completions is carried over.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::completion::{prompt_hash, CompletionBackend, CompletionRequest};
use crate::parser::{parse_function_steps, parse_skill_sequence, FunctionStep, SkillPlan};
use crate::plant::server::ServiceReply;
use crate::plant::{PlantState, DEFAULT_WORKPIECE_ID};
use crate::prompt::{build_manager_prompt, build_operator_prompt, transport_demand, AgentKind};
use crate::registry::{canonical_functionality_url, Registry, SkillEffect};
use crate::validator::{resolve_function_step, transport_endpoints, validate_grammar};

pub const DEFAULT_HTTP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// An agent completion and the parsing of its output.
    Planning,
    /// A skill endpoint call.
    Skill,
    /// A functionality call taken from an operator completion.
    Functionality,
    /// A call the dispatch loop makes on its own, such as reading plant
    /// state or undocking the robot before a transport.
    Housekeeping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: usize,
    pub skill_step: Option<usize>,
    pub skill_code: Option<String>,
    pub kind: RecordKind,
    pub name: String,
    pub endpoint: Option<String>,
    pub request: Value,
    pub status: RecordStatus,
    pub http_status: Option<u16>,
    pub state_version: Option<u64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub agent: AgentKind,
    pub module: Option<String>,
    pub prompt_sha256: String,
    pub completion_text: Option<String>,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub task_text: String,
    pub skill_plan: Option<Vec<String>>,
    pub prompts: Vec<PromptRecord>,
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
    pub abort_reason: Option<String>,
    pub final_state: Option<PlantState>,
}

impl ExecutionTrace {
    pub fn fault_records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.status == RecordStatus::Fault)
    }

    /// Functionality names called for each transport skill, in plan order.
    pub fn transport_expansions(&self, registry: &Registry) -> Vec<Vec<String>> {
        let mut out: Vec<(usize, Vec<String>)> = Vec::new();
        for r in &self.records {
            if r.kind != RecordKind::Functionality {
                continue;
            }
            let (Some(step), Some(code)) = (r.skill_step, r.skill_code.as_deref()) else {
                continue;
            };
            if !registry.skill(code).is_some_and(|s| s.effect.is_transport()) {
                continue;
            }
            match out.last_mut() {
                Some((s, names)) if *s == step => names.push(r.name.clone()),
                _ => out.push((step, vec![r.name.clone()])),
            }
        }
        out.into_iter().map(|(_, names)| names).collect()
    }
}

/// Why a task, or one operator-driven skill, stopped.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct Abort(pub String);

#[derive(Default)]
struct Recorder {
    prompts: Vec<PromptRecord>,
    records: Vec<TraceRecord>,
}

#[derive(Clone, Copy, Default)]
struct StepRef<'a> {
    index: Option<usize>,
    code: Option<&'a str>,
}

impl Recorder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        at: StepRef<'_>,
        kind: RecordKind,
        name: &str,
        endpoint: Option<String>,
        request: Value,
        outcome: &Result<HttpOk, HttpFault>,
    ) {
        let (status, http_status, state_version, reason) = match outcome {
            Ok(ok) => (RecordStatus::Ok, ok.http_status, ok.state_version, None),
            Err(f) => (RecordStatus::Fault, f.http_status, None, Some(f.reason.clone())),
        };
        self.records.push(TraceRecord {
            seq: self.records.len(),
            skill_step: at.index,
            skill_code: at.code.map(str::to_string),
            kind,
            name: name.to_string(),
            endpoint,
            request,
            status,
            http_status,
            state_version,
            reason,
        });
    }

    fn planning_fault(&mut self, at: StepRef<'_>, name: &str, request: Value, reason: String) -> Abort {
        let fault = HttpFault {
            http_status: None,
            reason: reason.clone(),
        };
        self.push(at, RecordKind::Planning, name, None, request, &Err(fault));
        Abort(reason)
    }
}

struct HttpOk {
    http_status: Option<u16>,
    state_version: Option<u64>,
    body: Value,
}

struct HttpFault {
    http_status: Option<u16>,
    reason: String,
}

/// Runs tasks against one plant. The plant is addressed through the
/// registry's base URL; rebase the registry to target another instance.
pub struct Orchestrator {
    registry: Arc<Registry>,
    backend: Arc<dyn CompletionBackend>,
    client: reqwest::Client,
    temperature: f32,
}

impl Orchestrator {
    pub fn new(registry: Arc<Registry>, backend: Arc<dyn CompletionBackend>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(DEFAULT_HTTP_TIMEOUT)
            .build()
            .expect("http client builds with static settings");
        Self {
            registry,
            backend,
            client,
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f32) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Plans and executes `task_text`. Failures end the run with an aborted
    /// trace whose last record carries the fault.
    pub async fn run_task(&self, task_text: &str) -> ExecutionTrace {
        let mut rec = Recorder::default();
        let mut plan_steps = None;
        let result = self.run_inner(task_text, &mut rec, &mut plan_steps).await;
        let final_state = match &result {
            Ok(state) => Some(state.clone()),
            Err(_) => None,
        };
        let (outcome, abort_reason) = match result {
            Ok(_) => (Outcome::Completed, None),
            Err(Abort(reason)) => {
                tracing::warn!(%reason, "task aborted");
                (Outcome::Aborted, Some(reason))
            }
        };
        ExecutionTrace {
            task_text: task_text.to_string(),
            skill_plan: plan_steps,
            prompts: rec.prompts,
            records: rec.records,
            outcome,
            abort_reason,
            final_state,
        }
    }

    async fn run_inner(
        &self,
        task_text: &str,
        rec: &mut Recorder,
        plan_steps: &mut Option<Vec<String>>,
    ) -> Result<PlantState, Abort> {
        let plan = self.plan(task_text, rec).await?;
        *plan_steps = Some(plan.steps.clone());

        let state = self.read_state(StepRef::default(), rec).await?;
        let wp = if state.workpiece(DEFAULT_WORKPIECE_ID).is_some() {
            DEFAULT_WORKPIECE_ID.to_string()
        } else {
            state
                .workpieces
                .keys()
                .next()
                .cloned()
                .ok_or_else(|| rec.planning_fault(StepRef::default(), "plant_state", Value::Null, "plant holds no workpiece".into()))?
        };

        for (i, code) in plan.steps.iter().enumerate() {
            let at = StepRef {
                index: Some(i),
                code: Some(code),
            };
            let skill = self.registry.skill(code).expect("grammar check admits only known codes");
            if skill.effect == SkillEffect::Transport {
                let (from, to) = transport_endpoints(&plan.steps, i, &self.registry)
                    .expect("grammar check places transports between stations");
                let name = |id: &str| self.registry.module(id).map_or(id.to_string(), |m| m.name.clone());
                let demand = transport_demand(code, &name(from), &name(to));
                self.undock_if_docked(at, rec).await?;
                self.operate(&skill.host_module, &demand, at, rec).await?;
            } else {
                let body = json!({
                    "workpiece_id": wp,
                    "detail": plan.explanation_for(i),
                });
                let outcome = self.post(skill.endpoint.as_str(), &body).await;
                let failed = outcome.as_ref().err().map(|f| f.reason.clone());
                rec.push(at, RecordKind::Skill, code, Some(skill.endpoint.to_string()), body, &outcome);
                if let Some(reason) = failed {
                    return Err(Abort(format!("skill {code} at step {}: {reason}", i + 1)));
                }
            }
        }
        self.read_state(StepRef::default(), rec).await
    }

    async fn plan(&self, task_text: &str, rec: &mut Recorder) -> Result<SkillPlan, Abort> {
        let at = StepRef::default();
        let input = json!({ "task": task_text });
        let prompt = build_manager_prompt(&self.registry, task_text)
            .map_err(|e| rec.planning_fault(at, "manager", input.clone(), format!("prompt: {e}")))?;
        let text = self
            .complete(AgentKind::Manager, None, &prompt, rec)
            .await
            .map_err(|reason| rec.planning_fault(at, "manager", input.clone(), reason))?;
        let plan = parse_skill_sequence(&text)
            .map_err(|e| rec.planning_fault(at, "manager", input.clone(), format!("parse: {e}")))?;
        let violations = validate_grammar(&plan, &self.registry);
        if let Some(v) = violations.first() {
            return Err(rec.planning_fault(
                at,
                "manager",
                input,
                format!("grammar violation: {}", v.message),
            ));
        }
        rec.push(
            at,
            RecordKind::Planning,
            "manager",
            None,
            json!({ "task": task_text, "skill_plan": plan.steps }),
            &Ok(HttpOk {
                http_status: None,
                state_version: None,
                body: Value::Null,
            }),
        );
        Ok(plan)
    }

    async fn complete(
        &self,
        agent: AgentKind,
        module: Option<&str>,
        prompt: &str,
        rec: &mut Recorder,
    ) -> Result<String, String> {
        let request = CompletionRequest::new(prompt).with_temperature(self.temperature);
        let result = self.backend.complete(&request).await;
        rec.prompts.push(PromptRecord {
            agent,
            module: module.map(str::to_string),
            prompt_sha256: prompt_hash(prompt),
            completion_text: result.as_ref().ok().map(|r| r.text.clone()),
            backend_id: self.backend.id().to_string(),
        });
        result.map(|r| r.text).map_err(|e| e.to_string())
    }

    /// Expands one skill demand through the operator agent of `module_id`
    /// and calls each resulting functionality in order, stopping at the
    /// first failure.
    pub async fn perform_skill_via_operator(
        &self,
        module_id: &str,
        demand: &str,
    ) -> Result<Vec<(FunctionStep, ServiceReply)>, Abort> {
        self.operate(module_id, demand, StepRef::default(), &mut Recorder::default())
            .await
    }

    async fn operate(
        &self,
        module_id: &str,
        demand: &str,
        at: StepRef<'_>,
        rec: &mut Recorder,
    ) -> Result<Vec<(FunctionStep, ServiceReply)>, Abort> {
        let name = format!("operator:{module_id}");
        let input = json!({ "module": module_id, "demand": demand });
        let prompt = build_operator_prompt(&self.registry, module_id, demand)
            .map_err(|e| rec.planning_fault(at, &name, input.clone(), format!("prompt: {e}")))?;
        let text = self
            .complete(AgentKind::Operator, Some(module_id), &prompt, rec)
            .await
            .map_err(|reason| rec.planning_fault(at, &name, input.clone(), reason))?;
        let steps = parse_function_steps(&text)
            .map_err(|e| rec.planning_fault(at, &name, input.clone(), format!("parse: {e}")))?;
        rec.push(
            at,
            RecordKind::Planning,
            &name,
            None,
            json!({ "module": module_id, "demand": demand, "steps": steps.len() }),
            &Ok(HttpOk {
                http_status: None,
                state_version: None,
                body: Value::Null,
            }),
        );

        let mut done = Vec::with_capacity(steps.len());
        for step in steps {
            let endpoint = canonical_functionality_url(&step.url);
            let outcome = match resolve_function_step(&step, &self.registry) {
                Ok(call) => self.post(&step.url, &json!({ "params": call.params })).await,
                Err(reason) => Err(HttpFault {
                    http_status: None,
                    reason,
                }),
            };
            let request = json!({ "step": step.step, "description": step.description });
            rec.push(at, RecordKind::Functionality, &step.action, Some(endpoint), request, &outcome);
            match outcome {
                Ok(ok) => {
                    let reply = serde_json::from_value(ok.body).unwrap_or(ServiceReply::Ok {
                        state_version: ok.state_version.unwrap_or_default(),
                    });
                    done.push((step, reply));
                }
                Err(f) => {
                    return Err(Abort(format!(
                        "functionality {} (operator step {}): {}",
                        step.action, step.step, f.reason
                    )))
                }
            }
        }
        Ok(done)
    }

    async fn undock_if_docked(&self, at: StepRef<'_>, rec: &mut Recorder) -> Result<(), Abort> {
        let state = self.read_state(at, rec).await?;
        if !state.robot.docked {
            return Ok(());
        }
        let Some(undock) = self
            .registry
            .transport_module()
            .and_then(|m| m.functionalities().find(|f| f.name == "undock"))
        else {
            return Ok(());
        };
        let body = json!({ "params": {} });
        let outcome = self.post(undock.url.as_str(), &body).await;
        let failed = outcome.as_ref().err().map(|f| f.reason.clone());
        rec.push(at, RecordKind::Housekeeping, "undock", Some(undock.url.to_string()), body, &outcome);
        match failed {
            Some(reason) => Err(Abort(format!("undock before transport: {reason}"))),
            None => Ok(()),
        }
    }

    async fn read_state(&self, at: StepRef<'_>, rec: &mut Recorder) -> Result<PlantState, Abort> {
        let url = self.registry.plant_state_url();
        let outcome = self.get(url.as_str()).await;
        let parsed = match outcome {
            Ok(ok) => match serde_json::from_value::<PlantState>(ok.body.clone()) {
                Ok(state) => Ok((
                    state,
                    HttpOk {
                        state_version: Some(ok.body["version"].as_u64().unwrap_or_default()),
                        ..ok
                    },
                )),
                Err(e) => Err(HttpFault {
                    http_status: ok.http_status,
                    reason: format!("malformed plant state: {e}"),
                }),
            },
            Err(f) => Err(f),
        };
        match parsed {
            Ok((state, ok)) => {
                let summary = HttpOk {
                    body: Value::Null,
                    ..ok
                };
                rec.push(at, RecordKind::Housekeeping, "plant_state", Some(url.to_string()), Value::Null, &Ok(summary));
                Ok(state)
            }
            Err(f) => {
                let reason = format!("plant state: {}", f.reason);
                rec.push(at, RecordKind::Housekeeping, "plant_state", Some(url.to_string()), Value::Null, &Err(f));
                Err(Abort(reason))
            }
        }
    }

    async fn get(&self, url: &str) -> Result<HttpOk, HttpFault> {
        let resp = self.client.get(url).send().await.map_err(connection_fault)?;
        read_reply(resp).await
    }

    async fn post(&self, url: &str, body: &Value) -> Result<HttpOk, HttpFault> {
        let resp = self
            .client
            .post(url)
            .json(body)
            .send()
            .await
            .map_err(connection_fault)?;
        read_reply(resp).await
    }
}

fn connection_fault(e: reqwest::Error) -> HttpFault {
    HttpFault {
        http_status: None,
        reason: format!("connection error: {e}"),
    }
}

async fn read_reply(resp: reqwest::Response) -> Result<HttpOk, HttpFault> {
    let status = resp.status().as_u16();
    let text = resp.text().await.map_err(connection_fault)?;
    let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    if (200..300).contains(&status) {
        let state_version = body.get("state_version").and_then(Value::as_u64);
        Ok(HttpOk {
            http_status: Some(status),
            state_version,
            body,
        })
    } else {
        let reason = body
            .get("reason")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("http status {status}: {body}"));
        Err(HttpFault {
            http_status: Some(status),
            reason,
        })
    }
}
