use photochat_core::{count_tokens, FunctionRegistry, PromptEngine, PromptOptions};

fn main() {
    let r = FunctionRegistry::bundled();
    let e = PromptEngine::bundled();
    for (reason, ex) in [(false, 0), (true, 0), (true, 3), (true, 4)] {
        let o = PromptOptions::new(reason, ex, Default::default()).unwrap();
        println!("reason={reason} ex={ex} main={} flat={}", count_tokens(&e.render_main_prompt(&r, &o)), count_tokens(&e.render_flat_prompt(&r, &o)));
    }
    for m in r.mains().iter().filter(|m| m.is_group()) {
        println!("sub {} = {}", m.name, count_tokens(&e.render_sub_prompt(m, Default::default()).unwrap()));
    }
}
