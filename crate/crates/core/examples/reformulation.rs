//! Shows the prompts sent to the LLM for dialogue reformulation and for
//! diffusion-prompt generation, and what the reference LLM answers.
//!
//! ```text
//! cargo run -p dar-core --example reformulation
//! ```

use dar::backends::ReferenceConfig;
use dar::reformulate::{
    build_question_prompt, build_r1_prompt, build_r2_prompt, concat_context, generate_prompts,
    reformulate_dialogue, DialogueContext, PromptTemplates, ReformulateParams,
};
use dar::Backends;

fn main() -> dar::Result<()> {
    let context = DialogueContext::with_turns(
        "a dog on a beach",
        [
            ("what color is the dog?", "brown with white paws"),
            ("is anyone with it?", "a child throwing a ball"),
            ("what time of day is it?", "not sure"),
        ],
    )?;
    let templates = PromptTemplates::default();
    let params = ReformulateParams::default();
    let backends = Backends::reference(64, ReferenceConfig::default());

    println!("== dialogue reformulation prompt ==\n{}\n", build_r1_prompt(&context, &templates));
    let refined = reformulate_dialogue(&context, &backends, &templates, &params);
    println!("refined query ({:?}): {}\n", refined.method, refined.text);
    println!("concatenation baseline: {}\n", concat_context(&context).text);

    println!("== prompt generation request for k=1 ==\n{}\n", build_r2_prompt(&refined, 1, &templates));
    let prompts = generate_prompts(&refined, 3, &backends, &templates, &params);
    for (k, p) in prompts.prompts.iter().enumerate() {
        println!("prompt {}: {p}", k + 1);
    }

    println!("\n== question prompt ==\n{}", build_question_prompt(&context, &templates));
    Ok(())
}
