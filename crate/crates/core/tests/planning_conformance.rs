mod common;

use photochat_core::llm::{ChatMessage, LlmBackend, Role};
use photochat_core::parser::parse_invocation;
use photochat_core::prompt::{PromptOptions, MAIN_HEADER};
use photochat_core::registry::Scope;
use photochat_core::{Dispatcher, FunctionRegistry};

#[test]
fn hierarchical_planning_over_100_cases() {
    let registry = FunctionRegistry::bundled();
    let dispatcher = Dispatcher::new(registry.clone(), PromptOptions::default());
    let history = vec![
        ChatMessage::user("earlier: make it warmer"),
        ChatMessage::assistant("Functions: [Photo Filters]\nAnalysis: earlier turn"),
    ];
    let mut checked = 0;
    for (data, fixture) in [("en_single.jsonl", "en_single_fixture.json"), ("en_dual.jsonl", "en_dual_fixture.json")] {
        let backend = common::scripted(fixture);
        for case in common::dataset(data) {
            backend.clear_log();
            let plan = dispatcher.plan(&case.instruction, &history, &backend).unwrap();
            let log = backend.requests();

            // Groups named by the main reply, worked out from the raw reply text.
            let main_reply = backend.complete(&log[0]).unwrap().text;
            let groups = parse_invocation(&main_reply)
                .unwrap()
                .functions
                .iter()
                .filter(|n| registry.resolve(n, Scope::Main).unwrap().is_group())
                .count();
            assert_eq!(plan.model_calls, 1 + groups, "{}", case.id);
            assert_eq!(log.len(), 1 + groups, "{}", case.id);
            assert_eq!(plan.attempts, log.len());

            for step in &plan.steps {
                assert!(step.function.is_leaf(), "{}", case.id);
                assert!(registry.leaves().any(|(l, o)| l == &step.function && o == step.origin));
            }

            assert!(log[0].system().unwrap().contains(MAIN_HEADER));
            assert_eq!(&log[0].messages[1..3], &history[..]);
            for sub in &log[1..] {
                assert!(!sub.system().unwrap().contains(MAIN_HEADER));
                assert_eq!(sub.messages.len(), 2, "{}", case.id);
                assert_eq!(sub.messages[1].role, Role::User);
                assert!(sub.messages.iter().all(|m| !history.contains(m)));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
}
