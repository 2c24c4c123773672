//! Prompt templates shipped with the crate and a small placeholder renderer.

use std::collections::HashMap;

/// Template for the intent-understanding prompt. Placeholders:
/// `{vocabulary}` and `{user_text}`.
pub const NLU_TEMPLATE: &str = include_str!("../templates/nlu_prompt.txt");

/// Template for reply generation. Placeholders: `{phase}`, `{preferences}`,
/// `{context}`, `{user_text}` and `{draft}`.
pub const RESPOND_TEMPLATE: &str = include_str!("../templates/respond_prompt.txt");

/// Marker line after which the draft reply starts.
pub const DRAFT_MARKER: &str = "Draft reply:";

/// Substitutes `{name}` placeholders in a single left-to-right pass, so text
/// inserted for one placeholder is never re-scanned for another. Unknown
/// `{...}` sequences are copied verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let vars: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        match close.and_then(|c| vars.get(&after[..c]).map(|v| (c, v))) {
            Some((c, value)) => {
                out.push_str(value);
                rest = &after[c + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Returns the draft reply embedded in a reply prompt, if any.
pub fn extract_draft(prompt: &str) -> Option<&str> {
    let idx = prompt.rfind(DRAFT_MARKER)?;
    Some(prompt[idx + DRAFT_MARKER.len()..].trim())
}

pub struct RespondPromptParts<'a> {
    pub phase: &'a str,
    pub preferences: &'a str,
    pub context: &'a str,
    pub user_text: &'a str,
    pub draft: &'a str,
}

pub fn respond_prompt(parts: &RespondPromptParts<'_>) -> String {
    render(
        RESPOND_TEMPLATE,
        &[
            ("phase", parts.phase),
            ("preferences", parts.preferences),
            ("context", parts.context),
            ("user_text", parts.user_text),
            ("draft", parts.draft),
        ],
    )
}
