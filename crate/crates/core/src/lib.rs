//! Agent-driven planning and control of a simulated matrix modular
//! production plant.
//!
//! A manager agent turns a production request into a sequence of skills; a
//! dispatch loop runs each skill against the plant's HTTP services, asking an
//! operator agent to expand transport skills into robot functionality calls.
//! Agents are text-completion backends prompted with context rendered from a
//! digital-twin registry.
//!
//! | module | role |
//! |---|---|
//! | [`registry`] | catalog of modules, skills and functionality endpoints |
//! | [`plant`] | deterministic plant simulation and its HTTP service |
//! | [`prompt`] | five-section prompt assembly |
//! | [`completion`] | replay, oracle and remote completion backends |
//! | [`parser`] | skill sequences and functionality steps from completion text |
//! | [`validator`] | grammar, executability, satisfaction and minimality |
//! | [`planner`] | shortest grammar-valid plan search |
//! | [`orchestrator`] | end-to-end task execution with traces |
//! | [`eval`] | corpus evaluation metrics |

pub mod completion;
pub mod eval;
pub mod features;
pub mod orchestrator;
pub mod parser;
pub mod plant;
pub mod planner;
pub mod prompt;
pub mod registry;
pub mod task;
pub mod validator;

pub use features::{Feature, FeatureKind};
pub use registry::Registry;
pub use task::TaskSpec;
