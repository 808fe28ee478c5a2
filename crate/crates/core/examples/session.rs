//! A scripted retrieval session over a synthetic caption corpus: the
//! target's attributes are revealed one answer at a time and the target's
//! rank is printed after every turn.
//!
//! ```text
//! cargo run --release -p dar-core --example session -- [target=123]
//! ```

use std::sync::Arc;

use dar::backends::ReferenceConfig;
use dar::synthetic::{build_caption_index, caption_corpus, scripted_dialogues, DialogueScript};
use dar::{Backends, DarEngine, SessionConfig};

fn main() -> dar::Result<()> {
    let captions = caption_corpus(3000, 2);
    let backends = Backends::reference(256, ReferenceConfig::default());
    let index = Arc::new(build_caption_index(&captions, &backends)?);
    let engine = DarEngine::new(index, backends)?;

    let target: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(123);
    let script = DialogueScript {
        dialogues: 1,
        turns: 10,
        uninformative_rate: 0.0,
        seed: 9,
    };
    let dialogue = scripted_dialogues(&captions[target..=target], script).remove(0);
    println!("target: {}", captions[target].text);

    let mut state = engine.create_session("example", &dialogue.dialog[0], SessionConfig::default(), Some(target as u64))?;
    report(state.latest().expect("turn 0"));
    for line in &dialogue.dialog[1..] {
        if !state.is_active() {
            break;
        }
        let (question, answer) = line.split_once('?').map(|(q, a)| (format!("{q}?"), a.trim())).expect("scripted QA");
        report(engine.submit_turn(&mut state, &question, answer)?);
    }
    println!("status: {:?}, final pick: {}", state.status, engine.finalize(&state)?);
    Ok(())
}

fn report(rec: &dar::TurnRecord) {
    println!(
        "turn {:>2}  rank {:>4}  alpha={:.1}  query: {}",
        rec.turn,
        rec.target_rank.map_or("-".into(), |r| r.to_string()),
        rec.weights.alpha(),
        rec.refined_query.text
    );
    for (p, g) in rec.prompts.iter().zip(&rec.generated) {
        println!("          image {} (seed {:016x}): {p}", g.k, g.seed);
    }
}
