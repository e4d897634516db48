//! Hierarchical function invocation and plan execution.
//!
//! A request makes one main call against the main-function prompt. Every
//! group the model picks then gets its own sub call, in a fresh conversation
//! holding only the sub-prompt and the instruction, which narrows the group
//! down to leaves. The flat baseline lists every leaf in one prompt instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{run_executor, ExecError, ExecutionContext};
use crate::imaging::RasterImage;
use crate::llm::{ChatMessage, ChatRequest, GatewayError, LlmBackend};
use crate::parser::{parse_invocation, FormatError, ParsedResponse};
use crate::prompt::{PromptEngine, PromptOptions};
use crate::registry::{FunctionRegistry, FunctionSpec, RegistryError, Scope};

/// Appended to the instruction when a reply has to be re-requested.
pub const FORMAT_CORRECTION: &str =
    "Your previous answer did not follow the required format. Answer again using exactly the format described above.";
pub const NAME_CORRECTION: &str =
    "Your previous answer used a function name that is not in the list. Answer again using only names from the list above.";

/// Re-requests after a malformed or unresolvable reply.
pub const DEFAULT_RETRIES: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Main,
    Sub,
    Flat,
    Descriptor,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Main => "main invocation",
            Stage::Sub => "sub invocation",
            Stage::Flat => "flat invocation",
            Stage::Descriptor => "descriptor extraction",
        })
    }
}

/// Why a reply could not be used.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    NotFound(#[from] RegistryError),
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("{stage} failed: {cause}")]
    InvocationFailure {
        stage: Stage,
        cause: ReplyError,
        tokens_spent: usize,
    },
    #[error("{stage}: backend error: {source}")]
    Backend {
        stage: Stage,
        source: GatewayError,
        tokens_spent: usize,
    },
}

impl DispatchError {
    pub fn tokens_spent(&self) -> usize {
        match self {
            DispatchError::InvocationFailure { tokens_spent, .. } | DispatchError::Backend { tokens_spent, .. } => {
                *tokens_spent
            }
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            DispatchError::InvocationFailure { stage, .. } | DispatchError::Backend { stage, .. } => *stage,
        }
    }

    pub fn is_format_failure(&self) -> bool {
        matches!(
            self,
            DispatchError::InvocationFailure {
                cause: ReplyError::Format(_),
                ..
            }
        )
    }
}

/// Outcome of a call-parse-resolve exchange, retries included.
pub(crate) struct Exchange<T> {
    pub result: Result<T, ExchangeError>,
    pub tokens: usize,
    pub attempts: usize,
}

pub(crate) enum ExchangeError {
    Reply(ReplyError),
    Backend(GatewayError),
}

/// Sends `messages + user`, parses the reply with `accept`, and re-requests up
/// to `retries` times when the reply is unusable. The corrective sentence is
/// appended to the original user text so the conversation shape is unchanged.
pub(crate) fn exchange<T>(
    backend: &dyn LlmBackend,
    system: &str,
    history: &[ChatMessage],
    user: &str,
    model_id: &str,
    retries: usize,
    mut accept: impl FnMut(&str) -> Result<T, ReplyError>,
) -> Exchange<T> {
    let mut tokens = 0;
    let mut attempts = 0;
    let mut user_text = user.to_string();
    loop {
        let mut request = ChatRequest::new(system, "");
        request.messages.truncate(1);
        request.messages.extend_from_slice(history);
        request.messages.push(ChatMessage::user(user_text.clone()));
        request.model_id = model_id.to_string();
        attempts += 1;
        let reply = match backend.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                return Exchange {
                    result: Err(ExchangeError::Backend(e)),
                    tokens,
                    attempts,
                }
            }
        };
        tokens += reply.total_tokens();
        match accept(&reply.text) {
            Ok(v) => {
                return Exchange {
                    result: Ok(v),
                    tokens,
                    attempts,
                }
            }
            Err(e) if attempts > retries => {
                return Exchange {
                    result: Err(ExchangeError::Reply(e)),
                    tokens,
                    attempts,
                }
            }
            Err(e) => {
                log::debug!("re-requesting after unusable reply: {e}");
                let correction = match e {
                    ReplyError::Format(_) => FORMAT_CORRECTION,
                    ReplyError::NotFound(_) => NAME_CORRECTION,
                };
                user_text = format!("{user}\n\n{correction}");
            }
        }
    }
}

/// One executable step: a leaf and the main function it was reached through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub function: FunctionSpec,
    pub origin: String,
}

/// A group whose sub call produced nothing usable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupFailure {
    pub group: String,
    pub cause: String,
    /// The reply was malformed, as opposed to naming an unknown function.
    pub format_error: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationPlan {
    pub steps: Vec<PlanStep>,
    pub analysis: String,
    /// Prompt plus completion tokens over every model call of the request.
    pub token_usage: usize,
    /// Logical model calls: one main call plus one per resolved group.
    pub model_calls: usize,
    /// Requests actually sent, re-requests included.
    pub attempts: usize,
    pub failures: Vec<GroupFailure>,
}

impl InvocationPlan {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn leaf_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.function.name.as_str()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub image: RasterImage,
    pub reply: String,
    pub plan: InvocationPlan,
}

/// Step `step_index` failed; `partial` holds the result of the steps before it.
#[derive(Debug, Error)]
#[error("step {step_index} ({function}) failed: {cause}")]
pub struct ExecutorError {
    pub step_index: usize,
    pub function: String,
    pub cause: ExecError,
    pub partial: RasterImage,
    pub plan: InvocationPlan,
}

pub const EMPTY_PLAN_REPLY: &str = "I could not find an edit to make for that request.";
pub const DONE_REPLY: &str = "Done.";

/// Plans requests against one registry with fixed prompt options. Holds no
/// per-request state.
#[derive(Debug, Clone)]
pub struct Dispatcher {
    registry: FunctionRegistry,
    prompts: PromptEngine,
    options: PromptOptions,
    model_id: String,
    retries: usize,
}

impl Dispatcher {
    pub fn new(registry: FunctionRegistry, options: PromptOptions) -> Self {
        Self {
            registry,
            prompts: PromptEngine::bundled(),
            options,
            model_id: String::new(),
            retries: DEFAULT_RETRIES,
        }
    }

    pub fn with_prompts(mut self, prompts: PromptEngine) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn registry(&self) -> &FunctionRegistry {
        &self.registry
    }

    pub fn prompts(&self) -> &PromptEngine {
        &self.prompts
    }

    pub fn options(&self) -> &PromptOptions {
        &self.options
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn retries(&self) -> usize {
        self.retries
    }

    /// Hierarchical planning. `history` is prepended to the main call only.
    pub fn plan(
        &self,
        instruction: &str,
        history: &[ChatMessage],
        backend: &dyn LlmBackend,
    ) -> Result<InvocationPlan, DispatchError> {
        let system = self.prompts.render_main_prompt(&self.registry, &self.options);
        let main = exchange(
            backend,
            &system,
            history,
            instruction,
            &self.model_id,
            self.retries,
            |text| self.resolve_all(text, Scope::Main),
        );
        let mut tokens = main.tokens;
        let mut attempts = main.attempts;
        let (parsed, mains) = match main.result {
            Ok(v) => v,
            Err(e) => return Err(stage_error(Stage::Main, e, tokens)),
        };

        let mut plan = InvocationPlan {
            steps: Vec::new(),
            analysis: parsed.analysis,
            token_usage: 0,
            model_calls: 1,
            attempts: 0,
            failures: Vec::new(),
        };
        for main_fn in mains {
            if main_fn.is_leaf() {
                plan.steps.push(PlanStep {
                    origin: main_fn.name.clone(),
                    function: main_fn,
                });
                continue;
            }
            let sub_prompt = self
                .prompts
                .render_sub_prompt(&main_fn, self.options.language)
                .expect("group spec renders a sub prompt");
            let sub = exchange(
                backend,
                &sub_prompt,
                &[],
                instruction,
                &self.model_id,
                self.retries,
                |text| self.resolve_all(text, Scope::SubOf(&main_fn.name)),
            );
            plan.model_calls += 1;
            tokens += sub.tokens;
            attempts += sub.attempts;
            match sub.result {
                Ok((_, leaves)) => plan.steps.extend(leaves.into_iter().map(|leaf| PlanStep {
                    function: leaf,
                    origin: main_fn.name.clone(),
                })),
                Err(ExchangeError::Reply(cause)) => {
                    log::warn!("group {:?} resolved no sub-function: {cause}", main_fn.name);
                    plan.failures.push(GroupFailure {
                        group: main_fn.name.clone(),
                        format_error: matches!(cause, ReplyError::Format(_)),
                        cause: cause.to_string(),
                    });
                }
                Err(ExchangeError::Backend(source)) => {
                    return Err(DispatchError::Backend {
                        stage: Stage::Sub,
                        source,
                        tokens_spent: tokens,
                    })
                }
            }
        }
        plan.token_usage = tokens;
        plan.attempts = attempts;
        Ok(plan)
    }

    /// Single-call baseline over every leaf.
    pub fn plan_flat(
        &self,
        instruction: &str,
        history: &[ChatMessage],
        backend: &dyn LlmBackend,
    ) -> Result<InvocationPlan, DispatchError> {
        let system = self.prompts.render_flat_prompt(&self.registry, &self.options);
        let call = exchange(
            backend,
            &system,
            history,
            instruction,
            &self.model_id,
            self.retries,
            |text| self.resolve_all(text, Scope::AnyLeaf),
        );
        let (parsed, leaves) = call
            .result
            .map_err(|e| stage_error(Stage::Flat, e, call.tokens))?;
        let steps = leaves
            .into_iter()
            .map(|leaf| PlanStep {
                origin: self.registry.origin_of(&leaf.name).unwrap_or(&leaf.name).to_string(),
                function: leaf,
            })
            .collect();
        Ok(InvocationPlan {
            steps,
            analysis: parsed.analysis,
            token_usage: call.tokens,
            model_calls: 1,
            attempts: call.attempts,
            failures: Vec::new(),
        })
    }

    fn resolve_all(&self, text: &str, scope: Scope<'_>) -> Result<(ParsedResponse, Vec<FunctionSpec>), ReplyError> {
        let parsed = parse_invocation(text)?;
        let specs = parsed
            .functions
            .iter()
            .map(|name| self.registry.resolve(name, scope.clone()).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        Ok((parsed, specs))
    }
}

fn stage_error(stage: Stage, err: ExchangeError, tokens_spent: usize) -> DispatchError {
    match err {
        ExchangeError::Reply(cause) => DispatchError::InvocationFailure {
            stage,
            cause,
            tokens_spent,
        },
        ExchangeError::Backend(source) => DispatchError::Backend {
            stage,
            source,
            tokens_spent,
        },
    }
}

/// The user-facing reply for a plan.
pub fn compose_reply(plan: &InvocationPlan) -> String {
    let analysis = plan.analysis.trim();
    if !analysis.is_empty() {
        analysis.to_string()
    } else if plan.steps.is_empty() {
        EMPTY_PLAN_REPLY.to_string()
    } else {
        format!("{DONE_REPLY} Applied: {}.", plan.leaf_names().join(", "))
    }
}

/// Applies the plan's steps in order, each to the previous step's output.
/// Model tokens spent by executors (object removal) are added to the plan's
/// `token_usage`.
pub fn execute_plan(
    mut plan: InvocationPlan,
    image: &RasterImage,
    ctx: &ExecutionContext<'_>,
) -> Result<EditOutcome, Box<ExecutorError>> {
    let mut current = image.clone();
    for (index, step) in plan.steps.iter().enumerate() {
        let result = match &step.function.executor_id {
            Some(id) => run_executor(id.as_str(), &current, ctx),
            None => Err(ExecError::Unbound(step.function.name.clone())),
        };
        match result {
            Ok(out) => {
                plan.token_usage += out.tokens;
                current = out.image;
            }
            Err(cause) => {
                plan.token_usage += cause.tokens_spent();
                return Err(Box::new(ExecutorError {
                    step_index: index,
                    function: step.function.name.clone(),
                    cause,
                    partial: current,
                    plan,
                }));
            }
        }
    }
    Ok(EditOutcome {
        image: current,
        reply: compose_reply(&plan),
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::adjust_brightness;
    use crate::llm::{Matcher, ScriptEntry, ScriptFixture, ScriptedBackend};
    use crate::prompt::{count_tokens, MAIN_HEADER};

    fn backend(entries: Vec<ScriptEntry>) -> ScriptedBackend {
        ScriptedBackend::new(ScriptFixture { strict: false, entries }).unwrap()
    }

    fn main_entry(user: &str, response: &str) -> ScriptEntry {
        ScriptEntry::new(Matcher::contains(user), response).with_system(Matcher::contains(MAIN_HEADER))
    }

    fn sub_entry(group: &str, user: &str, response: &str) -> ScriptEntry {
        ScriptEntry::new(Matcher::contains(user), response)
            .with_system(Matcher::contains(format!("Sub-functions of {group}:")))
    }

    fn dispatcher() -> Dispatcher {
        Dispatcher::new(FunctionRegistry::bundled(), PromptOptions::default())
    }

    #[test]
    fn orange_lipstick_takes_two_calls() {
        let b = backend(vec![
            main_entry("orange lipstick", "Functions: [Lipstick Coloring]\nAnalysis: lipstick it is"),
            sub_entry("Lipstick Coloring", "orange lipstick", "Functions: [Pure Orange]"),
        ]);
        let plan = dispatcher().plan("i want an orange lipstick", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Pure Orange"]);
        assert_eq!(plan.steps[0].origin, "Lipstick Coloring");
        assert_eq!(plan.model_calls, 2);
        assert_eq!(b.request_count(), 2);
        assert_eq!(plan.analysis, "lipstick it is");
    }

    #[test]
    fn bigger_eyes_resolves_enlarge() {
        let b = backend(vec![
            main_entry("bigger eyes", "Functions: [Face Shaping]"),
            sub_entry("Face Shaping", "bigger eyes", "Functions: [Enlarge Eyes]"),
        ]);
        let plan = dispatcher().plan("I want bigger eyes", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Enlarge Eyes"]);
    }

    #[test]
    fn leaf_main_needs_one_call() {
        let b = backend(vec![main_entry("open my eyes", "Functions: [Open Eyes]")]);
        let plan = dispatcher().plan("can u open my eyes", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Open Eyes"]);
        assert_eq!(plan.model_calls, 1);
        assert_eq!(b.request_count(), 1);
    }

    #[test]
    fn token_usage_sums_calls() {
        let b = backend(vec![
            main_entry("orange", "Functions: [Lipstick Coloring]"),
            sub_entry("Lipstick Coloring", "orange", "Functions: [Pure Orange]"),
        ]);
        let d = dispatcher();
        let plan = d.plan("orange", &[], &b).unwrap();
        let expected: usize = b
            .requests()
            .iter()
            .zip(["Functions: [Lipstick Coloring]", "Functions: [Pure Orange]"])
            .map(|(r, resp)| r.messages.iter().map(|m| count_tokens(&m.content)).sum::<usize>() + count_tokens(resp))
            .sum();
        assert_eq!(plan.token_usage, expected);
    }

    #[test]
    fn sub_call_has_no_history() {
        let b = backend(vec![
            main_entry("orange", "Functions: [Lipstick Coloring]"),
            sub_entry("Lipstick Coloring", "orange", "Functions: [Pure Orange]"),
        ]);
        let history = vec![ChatMessage::user("earlier"), ChatMessage::assistant("ok")];
        dispatcher().plan("orange", &history, &b).unwrap();
        let reqs = b.requests();
        assert_eq!(reqs[0].messages.len(), 4);
        assert_eq!(reqs[1].messages.len(), 2);
        assert_eq!(reqs[1].messages[1].content, "orange");
    }

    #[test]
    fn malformed_reply_is_retried_once() {
        let b = backend(vec![
            main_entry(FORMAT_CORRECTION, "Functions: [Open Eyes]"),
            main_entry("eyes", "Sure! I'd pick Open Eyes."),
        ]);
        let plan = dispatcher().plan("eyes", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Open Eyes"]);
        assert_eq!((plan.model_calls, plan.attempts), (1, 2));

        let b = backend(vec![main_entry("eyes", "no format here")]);
        let err = dispatcher().plan("eyes", &[], &b).unwrap_err();
        assert!(err.is_format_failure());
        assert_eq!(err.stage(), Stage::Main);
        assert_eq!(b.request_count(), 2);
        assert!(err.tokens_spent() > 0);
    }

    #[test]
    fn unknown_main_name_fails() {
        let b = backend(vec![main_entry("x", "Functions: [Teleport]")]);
        let err = dispatcher().plan("x", &[], &b).unwrap_err();
        assert!(matches!(
            err,
            DispatchError::InvocationFailure {
                cause: ReplyError::NotFound(_),
                ..
            }
        ));
    }

    #[test]
    fn failing_sub_call_is_partial() {
        let b = backend(vec![
            main_entry("x", "Functions: [Lipstick Coloring, Open Eyes]"),
            sub_entry("Lipstick Coloring", "x", "Functions: [Teal]"),
        ]);
        let plan = dispatcher().plan("x", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Open Eyes"]);
        assert!(plan.is_partial());
        assert_eq!(plan.failures[0].group, "Lipstick Coloring");
    }

    #[test]
    fn group_children_inserted_at_group_position() {
        let b = backend(vec![
            main_entry("x", "Functions: [Open Eyes, Photo Filters, Whiten Skin]"),
            sub_entry("Photo Filters", "x", "Functions: [Sepia, Warm]"),
        ]);
        let plan = dispatcher().plan("x", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Open Eyes", "Sepia", "Warm", "Whiten Skin"]);
    }

    #[test]
    fn backend_failure_is_tagged() {
        let b = backend(vec![main_entry("x", "Functions: [Photo Filters]")]);
        let err = dispatcher().plan("x", &[], &b).unwrap_err();
        assert!(matches!(err, DispatchError::Backend { stage: Stage::Sub, .. }));
    }

    #[test]
    fn flat_plan_resolves_leaves() {
        let b = backend(vec![ScriptEntry::new(
            Matcher::contains("vintage"),
            "Functions: [Vintage]",
        )]);
        let plan = dispatcher().plan_flat("make the photo vintage", &[], &b).unwrap();
        assert_eq!(plan.leaf_names(), ["Vintage"]);
        assert_eq!(plan.steps[0].origin, "Photo Filters");
        assert_eq!(plan.model_calls, 1);
    }

    #[test]
    fn flat_prompt_is_larger() {
        let d = dispatcher();
        let main = count_tokens(&d.prompts().render_main_prompt(d.registry(), d.options()));
        let flat = count_tokens(&d.prompts().render_flat_prompt(d.registry(), d.options()));
        assert!(flat > main, "{flat} vs {main}");
    }

    fn plan_of(names: &[&str]) -> InvocationPlan {
        let r = FunctionRegistry::bundled();
        InvocationPlan {
            steps: names
                .iter()
                .map(|n| PlanStep {
                    function: r.resolve(n, Scope::AnyLeaf).unwrap().clone(),
                    origin: r.origin_of(n).unwrap().to_string(),
                })
                .collect(),
            analysis: String::new(),
            token_usage: 0,
            model_calls: 1,
            attempts: 1,
            failures: vec![],
        }
    }

    #[test]
    fn execute_grayscale_and_repeats() {
        let b = backend(vec![]);
        let ctx = ExecutionContext::new("x", &b);
        let img = RasterImage::from_fn_rgb(7, 5, |x, y| [20 + x as u8 * 30, 12 + y as u8 * 40, 200]);
        let out = execute_plan(plan_of(&["Grayscale"]), &img, &ctx).unwrap();
        assert!(out.image.data().chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));

        let twice = execute_plan(plan_of(&["Whiten Skin", "Whiten Skin"]), &img, &ctx).unwrap();
        assert_eq!(twice.image, adjust_brightness(&img, None, 2).unwrap());

        let none = execute_plan(plan_of(&[]), &img, &ctx).unwrap();
        assert_eq!(none.image, img);
        assert_eq!(none.reply, EMPTY_PLAN_REPLY);
    }

    #[test]
    fn failing_step_reports_index_and_partial() {
        let b = backend(vec![]);
        let ctx = ExecutionContext::new("remove the dog", &b);
        let img = RasterImage::filled_rgb(4, 4, [50, 60, 70]);
        let err = execute_plan(plan_of(&["Sepia", "Object Removal", "Cool"]), &img, &ctx).unwrap_err();
        assert_eq!(err.step_index, 1);
        assert_eq!(err.partial, crate::imaging::apply_filter(&img, crate::imaging::Filter::Sepia).unwrap());
    }
}
