//! Five-section prompts: role and goal, context, instructions, worked
//! examples, and the open input/output pair the model completes.

use serde::{Deserialize, Serialize};

use crate::registry::{LookupError, ModuleKind, Registry, WorkedExample};

pub const ROLE_HEADER: &str = "Role and goal:";
pub const CONTEXT_HEADER: &str = "Context:";
pub const INSTRUCTIONS_HEADER: &str = "Instructions:";
pub const EXAMPLES_HEADER: &str = "Examples:";
pub const INPUT_CUE: &str = "Input:";
pub const OUTPUT_CUE: &str = "Output:";

const MANAGER_ROLE: &str = "You are a manager of a production system. Your goal is to design an efficient production process based on a given task. You should take into account the provided context, instructions, and examples. Following these, you generate an output of a production process.";

const MANAGER_INSTRUCTIONS: &str = "As a manager of this production system, please arrange a production process based on the input. Only use the skills that are given in the context section. Only use the skills that are necessary to carry out the task. Give an explanation with short reason in list form. You should think step-by-step.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Manager,
    Operator,
}

impl AgentKind {
    /// Identifies which agent a rendered prompt addresses from its role line.
    pub fn detect(prompt: &str) -> Option<AgentKind> {
        let role = prompt.trim_start().strip_prefix(ROLE_HEADER)?.trim_start();
        if role.starts_with("You are a manager") {
            Some(AgentKind::Manager)
        } else if role.starts_with("You are an operator") {
            Some(AgentKind::Operator)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("empty task")]
    EmptyTask,
    #[error("prompt section {0} is empty")]
    EmptySection(&'static str),
    #[error("prompt needs at least one worked example")]
    NoExamples,
    #[error(transparent)]
    Lookup(#[from] LookupError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub role_goal: String,
    pub context: String,
    pub instructions: String,
    pub examples: Vec<WorkedExample>,
    pub input: String,
}

impl PromptSpec {
    fn check(&self) -> Result<(), PromptError> {
        for (name, text) in [
            ("role and goal", &self.role_goal),
            ("context", &self.context),
            ("instructions", &self.instructions),
            ("input", &self.input),
        ] {
            if text.trim().is_empty() {
                return Err(PromptError::EmptySection(name));
            }
        }
        if self.examples.is_empty() {
            return Err(PromptError::NoExamples);
        }
        Ok(())
    }

    /// Concatenates the sections in their fixed order. The text ends with the
    /// bare `Output:` cue so the model continues from there.
    pub fn render(&self) -> Result<String, PromptError> {
        self.check()?;
        let examples = self
            .examples
            .iter()
            .map(|ex| format!("{INPUT_CUE} {{{}}} {OUTPUT_CUE} {}", ex.input, ex.output))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(format!(
            "{ROLE_HEADER} {}\n\n{CONTEXT_HEADER}\n{}\n\n{INSTRUCTIONS_HEADER} {}\n\n{EXAMPLES_HEADER}\n{}\n\n{INPUT_CUE} {{{}}} {OUTPUT_CUE}",
            self.role_goal.trim(),
            self.context.trim(),
            self.instructions.trim(),
            examples,
            self.input.trim(),
        ))
    }
}

pub fn manager_prompt_spec(registry: &Registry, task_text: &str) -> Result<PromptSpec, PromptError> {
    if task_text.trim().is_empty() {
        return Err(PromptError::EmptyTask);
    }
    Ok(PromptSpec {
        role_goal: MANAGER_ROLE.to_string(),
        context: registry.render_manager_context(),
        instructions: MANAGER_INSTRUCTIONS.to_string(),
        examples: registry.manager_examples(),
        input: task_text.to_string(),
    })
}

/// Builds the manager-agent prompt for a production request.
pub fn build_manager_prompt(registry: &Registry, task_text: &str) -> Result<String, PromptError> {
    manager_prompt_spec(registry, task_text)?.render()
}

pub fn operator_prompt_spec(
    registry: &Registry,
    module_id: &str,
    demand: &str,
) -> Result<PromptSpec, PromptError> {
    if demand.trim().is_empty() {
        return Err(PromptError::EmptyTask);
    }
    let context = registry.render_operator_context(module_id)?;
    let module = registry.module(module_id).expect("context rendered above");
    let transport = module.kind == ModuleKind::Transport;
    let (task_noun, this) = if transport {
        ("transportation", "robot")
    } else {
        ("production", "module")
    };
    let role_goal = format!(
        "You are an operator of a {name} of a production system that performs skills to fulfill a {task_noun} task. Your goal is to orchestrate the functionalities of this {this} to perform a skill. You should take into account the provided context, instructions, and examples. Following these, you generate an output of a series of functionalities and provide the correct URLs to these functionalities.",
        name = module.name
    );
    let mut instructions = format!(
        "As an operator of this {}, please arrange a series of functionalities to solve the task specified in the input. Only use the functionalities that are given. Only use the functionalities that are necessary to carry out the task.",
        module.name
    );
    if transport {
        instructions.push_str(
            " Specify the start module and target module in the output steps when necessary.",
        );
    }
    instructions.push_str(" Give an explanation with short reason in list form. You shall think step-by-step. Follow the text structure and syntax in the examples.");

    Ok(PromptSpec {
        role_goal,
        context,
        instructions,
        examples: registry.operator_examples(module_id),
        input: demand.to_string(),
    })
}

/// Builds the operator-agent prompt for a skill demand on one module.
pub fn build_operator_prompt(
    registry: &Registry,
    module_id: &str,
    demand: &str,
) -> Result<String, PromptError> {
    operator_prompt_spec(registry, module_id, demand)?.render()
}

/// The demand the dispatch loop sends to a transport operator.
pub fn transport_demand(code: &str, from_name: &str, to_name: &str) -> String {
    format!("({code}) Transport the workpiece from the {from_name} to the {to_name}.")
}

/// The open input of a rendered prompt, without its braces.
pub fn extract_input(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(INPUT_CUE)? + INPUT_CUE.len();
    let rest = prompt[start..].trim_end();
    let rest = rest.strip_suffix(OUTPUT_CUE)?.trim();
    Some(
        rest.strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .unwrap_or(rest)
            .trim(),
    )
}
