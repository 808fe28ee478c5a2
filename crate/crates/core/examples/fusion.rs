//! Cosine similarity, the turn-dependent weight schedule and text/image
//! fusion on hand-written vectors.
//!
//! ```text
//! cargo run -p dar-core --example fusion
//! ```

use dar::{cosine_similarity, fuse, schedule_weights, Aggregation, Embedding, WeightSchedule};

fn main() -> dar::Result<()> {
    let text = Embedding::new(vec![1.0, 0.0, 0.0, 0.0])?;
    let images = vec![
        Embedding::new(vec![0.6, 0.8, 0.0, 0.0])?,
        Embedding::new(vec![0.6, 0.0, 0.8, 0.0])?,
        Embedding::new(vec![0.0, 0.0, 0.0, 2.0])?,
    ];
    for (i, img) in images.iter().enumerate() {
        println!("cos(text, image {i}) = {:.3}", cosine_similarity(&text, img)?);
    }

    let schedule = WeightSchedule::default();
    for turn in 0..=4 {
        let w = schedule_weights(&schedule, turn);
        let sum = fuse(&text, &images, w, Aggregation::Sum)?;
        let mean = fuse(&text, &images, w, Aggregation::Mean)?;
        println!(
            "turn {turn}: alpha={:.1} beta={:.1}  sum={:?}  mean={:?}",
            w.alpha(),
            w.beta(),
            rounded(&sum),
            rounded(&mean)
        );
    }

    let w = schedule_weights(&schedule, 0);
    let text_only = fuse(&text, &[], w, Aggregation::Sum)?;
    println!("no images at turn 0: {:?}", rounded(&text_only));
    Ok(())
}

fn rounded(e: &Embedding) -> Vec<f32> {
    e.as_slice().iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
