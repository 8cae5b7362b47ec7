//! The three fixed description-generation prompts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnrichError;

/// Which of the three description prompts to send to the chat endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PromptVariant {
    /// The bare entity name, no instruction text.
    NoPrompt,
    /// One-sentence expert instruction wrapping the entity name.
    ExpertPrompt,
    /// Structured template demanding Background/Appearance/Clinical sections.
    StructuredPrompt,
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PromptVariant::NoPrompt => "noprompt",
            PromptVariant::ExpertPrompt => "expert",
            PromptVariant::StructuredPrompt => "structured",
        };
        f.write_str(s)
    }
}

impl FromStr for PromptVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "noprompt" | "no-prompt" | "none" => Ok(PromptVariant::NoPrompt),
            "expert" | "expertprompt" => Ok(PromptVariant::ExpertPrompt),
            "structured" | "structuredprompt" => Ok(PromptVariant::StructuredPrompt),
            other => Err(format!(
                "unknown prompt variant `{other}` (expected noprompt, expert, or structured)"
            )),
        }
    }
}

impl From<PromptVariant> for String {
    fn from(v: PromptVariant) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for PromptVariant {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// Body of the structured prompt; the entity name is appended as
/// `Input: "<name>"` by [`render_prompt`].
pub const STRUCTURED_PROMPT_TEMPLATE: &str = r#"Act as a biomedical knowledge graph specialist. Generate structured, for input biological entities using this template:

**Output Structure:**
1. Background: Classification & core biological significance
2. Appearance: Key structural/morphological features (if applicable)
3. Clinical Relevance: Diagnostic/therapeutic applications (if exists)

**Requirements:**
→ Maintain scientific accuracy
→ Use bullet-resistant phrasing (no markdown)
→ Separate sections with semicolons (;)
→ Exclude disclaimers/examples

**Response Example Format:**
Background: [2-3 sentences];
Appearance: [1-2 attributes];
Clinical: [1-2 applications]

**Key Features:**
- Forces clinical relevance inclusion where available
- Enforces hard token limits through counting directive
- Prevents markdown/formatting bloat
- Prioritizes evidence-based applications
- Maintains domain-specific terminology
- Allows "N/A" for non-applicable sections (e.g., molecular entities)"#;

/// Render the chat message asking for a description of `entity_label`.
pub fn render_prompt(entity_label: &str, variant: PromptVariant) -> Result<String, EnrichError> {
    if entity_label.is_empty() {
        return Err(EnrichError::EmptyEntityLabel);
    }
    Ok(match variant {
        PromptVariant::NoPrompt => entity_label.to_string(),
        PromptVariant::ExpertPrompt => format!(
            "You are an expert providing detailed and accurate information and background \
             about biological entities, Tell me about the background and uses of the \
             ({entity_label})"
        ),
        PromptVariant::StructuredPrompt => {
            format!("{STRUCTURED_PROMPT_TEMPLATE}\n\nInput: \"{entity_label}\"")
        }
    })
}
