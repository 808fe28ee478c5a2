//! Synthetic closed-loop benchmark: DAR against the concatenation baseline.
//!
//! ```text
//! cargo run --release -p dar-core --example closed_loop_benchmark -- [captions] [dialogues] [seed]
//! ```

use std::sync::Arc;
use std::time::Instant;

use dar::backends::{Backends, ReferenceConfig};
use dar::eval::{dataset::from_raw, run_benchmark, BenchmarkOptions, Variant};
use dar::synthetic::{build_caption_index, caption_corpus, scripted_dialogues, DialogueScript};
use dar::{DarEngine, SessionConfig};

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> dar::Result<()> {
    let captions = arg(1, 5000) as usize;
    let dialogues = arg(2, 500) as usize;
    let seed = arg(3, 7);
    let dim = arg(4, 256) as usize;

    let started = Instant::now();
    let backends = Backends::reference(dim, ReferenceConfig { seed, sigma: 0.1 });
    let corpus = caption_corpus(captions, seed);
    let index = Arc::new(build_caption_index(&corpus, &backends)?);
    let raw = scripted_dialogues(
        &corpus,
        DialogueScript {
            dialogues,
            turns: 10,
            uninformative_rate: 0.2,
            seed,
        },
    );
    let dataset = from_raw(raw, &index)?;
    let engine = DarEngine::new(index, backends)?;
    let report = run_benchmark(
        &dataset,
        &engine,
        &SessionConfig::default(),
        &[Variant::Dar, Variant::Concat],
        BenchmarkOptions::default(),
    )?;

    println!("turn  {:>8}  {:>8}", "dar", "concat");
    let dar = &report.variant(Variant::Dar).expect("dar").curve;
    let concat = &report.variant(Variant::Concat).expect("concat").curve;
    for t in 0..=report.turns {
        println!("{t:>4}  {:>8.4}  {:>8.4}", dar.at(t), concat.at(t));
    }
    println!(
        "margin at turn {}: {:+.2} pp  ({:.1} s)",
        report.turns,
        100.0 * (dar.last() - concat.last()),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
