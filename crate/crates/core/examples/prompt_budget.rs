//! Builds NLU prompts from the bundled vocabulary under shrinking budgets
//! and shows how many values survive truncation.

use asyncmld::nlu::{build_nlu_prompt, truncate_vocabulary, PromptBudget};
use asyncmld::rtdb::bundled_catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = bundled_catalog();
    let vocab = catalog.vocabulary();
    let text = "I want to eat tofu and drink matcha.";
    println!("full vocabulary: {} values", vocab.value_count());
    for max_chars in [4000, 800, 650, 500] {
        let budget = PromptBudget::new(max_chars)?;
        match build_nlu_prompt(vocab, text, &budget) {
            Ok(prompt) => {
                let kept = truncate_vocabulary(vocab, text, &budget)?;
                println!(
                    "budget {max_chars:>4}: prompt {:>4} chars, {:>3} values kept",
                    prompt.chars().count(),
                    kept.value_count()
                );
            }
            Err(e) => println!("budget {max_chars:>4}: {e}"),
        }
    }
    let budget = PromptBudget::new(700)?;
    println!("\n{}", build_nlu_prompt(vocab, text, &budget)?);
    Ok(())
}
