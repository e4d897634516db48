use std::sync::Arc;

use photochat_core::llm::{Matcher, ScriptEntry, ScriptFixture};
use photochat_core::prompt::{MAIN_HEADER, SUB_HEADER_PREFIX};
use photochat_core::session::{SessionError, TurnError};
use photochat_core::{Assistant, Dispatcher, FunctionRegistry, PromptOptions, RasterImage, ScriptedBackend, Session};
use proptest::prelude::*;

fn backend() -> ScriptedBackend {
    let main = |user: &str, reply: &str| {
        ScriptEntry::new(Matcher::contains(user), reply).with_system(Matcher::contains(MAIN_HEADER))
    };
    let sub = |user: &str, reply: &str| {
        ScriptEntry::new(Matcher::contains(user), reply).with_system(Matcher::contains(SUB_HEADER_PREFIX))
    };
    ScriptedBackend::new(ScriptFixture {
        strict: false,
        entries: vec![
            main("warmer", "Functions: [Photo Filters]\nAnalysis: warm it up"),
            sub("warmer", "Functions: [Warm]"),
            main("whiter", "Functions: [Whiten Skin]\nAnalysis: brighten skin"),
            main("garbled", "Sure! I'd pick **Functions:** [Whiten Skin]"),
        ],
    })
    .unwrap()
}

fn assistant() -> (Assistant, Arc<ScriptedBackend>) {
    let backend = Arc::new(backend());
    let dispatcher = Dispatcher::new(FunctionRegistry::bundled(), PromptOptions::default());
    (Assistant::new(dispatcher, backend.clone()), backend)
}

fn photo() -> RasterImage {
    RasterImage::from_fn_rgb(16, 12, |x, y| [(x * 13) as u8, (y * 17) as u8, 90])
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Warmer,
    Whiter,
    Garbled,
    Undo,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Warmer), Just(Op::Whiter), Just(Op::Garbled), Just(Op::Undo)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stack_length_is_one_plus_turns_minus_undos(ops in prop::collection::vec(op(), 50)) {
        let (assistant, _) = assistant();
        let mut session = Session::new();
        session.set_image(photo());
        let mut model = vec![photo()];
        let (mut turns, mut undos) = (0usize, 0usize);
        for op in ops {
            match op {
                Op::Warmer | Op::Whiter => {
                    let text = if matches!(op, Op::Warmer) { "make it warmer" } else { "skin whiter" };
                    let out = assistant.turn(&mut session, text).unwrap();
                    model.push(out.image);
                    turns += 1;
                }
                Op::Garbled => {
                    let before = (session.stack_len(), session.history().len());
                    let err = assistant.turn(&mut session, "garbled request").unwrap_err();
                    prop_assert!(matches!(err, TurnError::Invocation { .. }), "unexpected {:?}", err);
                    prop_assert_eq!(before, (session.stack_len(), session.history().len()));
                }
                Op::Undo => match session.undo() {
                    Ok(_) => {
                        model.pop();
                        undos += 1;
                    }
                    Err(e) => {
                        prop_assert!(matches!(e, SessionError::NothingToUndo), "unexpected {:?}", e);
                        prop_assert_eq!(model.len(), 1);
                    }
                },
            }
            prop_assert_eq!(session.stack_len(), 1 + turns - undos);
            prop_assert_eq!(session.current_image().unwrap(), model.last().unwrap());
            prop_assert_eq!(session.original_image().unwrap(), &photo());
        }
    }
}

#[test]
fn parser_failure_leaves_session_untouched_but_counts_tokens() {
    let (assistant, backend) = assistant();
    let mut session = Session::new();
    session.set_image(photo());
    assistant.turn(&mut session, "make it warmer").unwrap();
    let image = session.current_image().unwrap().clone();
    let history = session.history().to_vec();
    let tokens = session.token_total();

    let err = assistant.turn(&mut session, "garbled again").unwrap_err();
    let TurnError::Invocation { error, .. } = &err else {
        panic!("{err:?}")
    };
    assert!(error.is_format_failure());
    assert_eq!(session.stack_len(), 2);
    assert_eq!(session.current_image().unwrap(), &image);
    assert_eq!(session.history(), &history[..]);
    assert_eq!(session.token_total(), tokens + error.tokens_spent());
    assert!(error.tokens_spent() > 0);
    // One request plus one corrective retry.
    assert_eq!(backend.requests().iter().filter(|r| r.last_user().unwrap().contains("garbled again")).count(), 2);
}

#[test]
fn undo_on_fresh_upload_is_refused() {
    let mut session = Session::new();
    assert!(matches!(session.undo(), Err(SessionError::NothingToUndo)));
    session.set_image(photo());
    assert!(matches!(session.undo(), Err(SessionError::NothingToUndo)));
    assert_eq!(session.stack_len(), 1);
}

#[test]
fn concurrent_sessions_do_not_interfere() {
    use photochat_core::SessionStore;
    use std::time::Duration;

    let (assistant, _) = assistant();
    let store = SessionStore::new(Duration::from_secs(60));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let session = store.create();
            let img = RasterImage::from_fn_rgb(10, 10, move |x, y| [(x * 20) as u8, (y * 20) as u8, (i * 30) as u8]);
            session.lock().unwrap().set_image(img.clone());
            (session, img)
        })
        .collect();
    std::thread::scope(|scope| {
        for (i, (session, _)) in handles.iter().enumerate() {
            let assistant = &assistant;
            scope.spawn(move || {
                for k in 0..(5 + i) {
                    let mut s = session.lock().unwrap();
                    let text = if k % 2 == 0 { "make it warmer" } else { "skin whiter" };
                    assistant.turn(&mut s, text).unwrap();
                }
            });
        }
    });
    for (i, (session, original)) in handles.iter().enumerate() {
        let s = session.lock().unwrap();
        assert_eq!(s.stack_len(), 6 + i);
        assert_eq!(s.history().len(), 5 + i);
        assert_eq!(s.original_image().unwrap(), original);
        // Same instructions on a private copy give the same result.
        let mut solo = Session::new();
        solo.set_image(original.clone());
        for k in 0..(5 + i) {
            let text = if k % 2 == 0 { "make it warmer" } else { "skin whiter" };
            assistant.turn(&mut solo, text).unwrap();
        }
        assert_eq!(solo.current_image(), s.current_image());
    }
}
