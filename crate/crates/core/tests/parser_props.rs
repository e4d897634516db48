use std::panic;

use photochat_core::parser::{parse_invocation, parse_invocation_bytes, render_canonical, ParsedResponse};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn name() -> impl Strategy<Value = String> {
    "[A-Za-z0-9修改照片&'()-]([A-Za-z0-9修改照片&'() -]{0,18}[A-Za-z0-9修改照片&'()-])?"
}

fn analysis() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[A-Za-z0-9.!?,:'-]([A-Za-z0-9 .!?,:'\n-]{0,80}[A-Za-z0-9.!?])?",
    ]
}

fn response() -> impl Strategy<Value = ParsedResponse> {
    (prop::collection::vec(name(), 1..6), analysis())
        .prop_map(|(functions, analysis)| ParsedResponse { functions, analysis })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn canonical_round_trip(r in response()) {
        prop_assert_eq!(parse_invocation(&render_canonical(&r)).unwrap(), r);
    }
}

const PIECES: [&str; 16] = [
    "Functions:", "functions :", "Analysis:", "[", "]", ",", "\n", "```", "```json\n", " ",
    "**", "Sure! ", "Sepia", "Lipstick Coloring", "修改", "\u{0}",
];

fn mutate(rng: &mut ChaCha8Rng, base: &str) -> String {
    let mut s: Vec<char> = base.chars().collect();
    for _ in 0..rng.random_range(1..6) {
        let at = rng.random_range(0..=s.len());
        match rng.random_range(0..3) {
            0 if !s.is_empty() => {
                s.remove(at.min(s.len() - 1));
            }
            1 => {
                let piece = PIECES[rng.random_range(0..PIECES.len())];
                s.splice(at..at, piece.chars());
            }
            _ => s.insert(at, char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?')),
        }
    }
    s.into_iter().collect()
}

#[test]
fn fuzz_ten_thousand_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let seeds = [
        "Functions: [Sepia]\nAnalysis: old photo",
        "Functions: [Lipstick Coloring, Face Shaping]",
        "```\nFunctions: [A]\n```",
        "",
    ];
    let (mut ok, mut format_errors) = (0, 0);
    for i in 0..10_000 {
        let outcome = match i % 3 {
            0 => {
                let bytes: Vec<u8> = (0..rng.random_range(0..200)).map(|_| rng.random()).collect();
                panic::catch_unwind(|| parse_invocation_bytes(&bytes))
            }
            1 => {
                let text: String = (0..rng.random_range(0..12))
                    .map(|_| PIECES[rng.random_range(0..PIECES.len())])
                    .collect();
                panic::catch_unwind(|| parse_invocation(&text))
            }
            _ => {
                let seed = seeds[rng.random_range(0..seeds.len())];
                let text = mutate(&mut rng, seed);
                panic::catch_unwind(|| parse_invocation(&text))
            }
        };
        match outcome.expect("parser panicked") {
            Ok(r) => {
                assert!(!r.functions.is_empty());
                assert!(r.functions.iter().all(|f| !f.is_empty() && f.trim() == f));
                ok += 1;
            }
            Err(_) => format_errors += 1,
        }
    }
    assert_eq!(ok + format_errors, 10_000);
    assert!(ok > 0 && format_errors > 0);
}
