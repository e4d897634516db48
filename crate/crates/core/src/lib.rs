//! Conversational image editing over a pluggable chat model.
//!
//! The model never writes code or free-form arguments. It picks names from a
//! two-level function library; [`dispatch::Dispatcher`] turns its picks into a
//! plan of leaf functions and [`dispatch::execute_plan`] runs them.
//!
//! ```no_run
//! use photochat_core::{Dispatcher, FunctionRegistry, PromptOptions, ScriptedBackend};
//!
//! let backend = ScriptedBackend::load("fixture.json")?;
//! let dispatcher = Dispatcher::new(FunctionRegistry::bundled(), PromptOptions::default());
//! let plan = dispatcher.plan("i want an orange lipstick", &[], &backend)?;
//! println!("{:?}", plan.leaf_names());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod dispatch;
pub mod eval;
pub mod exec;
pub mod http;
pub mod imaging;
pub mod llm;
pub mod parser;
pub mod prompt;
pub mod registry;
pub mod removal;
pub mod session;

pub use dispatch::{execute_plan, Dispatcher, DispatchError, EditOutcome, ExecutorError, InvocationPlan, PlanStep};
pub use exec::{ExecutionContext, ImageService, StubImageService};
pub use imaging::{BinaryMask, ImageError, RasterImage};
pub use llm::{ChatRequest, ChatResult, GatewayError, LiveBackend, LiveConfig, LlmBackend, ScriptFixture, ScriptedBackend};
pub use parser::{parse_invocation, parse_object_descriptors, FormatError, ObjectDescriptor, ParsedResponse};
pub use prompt::{count_tokens, Language, PromptEngine, PromptOptions};
pub use registry::{FunctionRegistry, FunctionSpec, RegistryError, Scope};
pub use removal::{RemovalPipeline, RemovalMode};
pub use session::{Assistant, Session, SessionStore};
