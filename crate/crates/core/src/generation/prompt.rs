use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Variant;
use crate::error::{Error, Result};

pub const START: &str = "<START>";
pub const END: &str = "<END>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    fn new(role: Role, content: String) -> Self {
        Self { role, content }
    }
}

/// Per-dataset slots of the prompt templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    /// `{Task}`, e.g. "new academic articles".
    pub dataset_task: String,
    /// `{Dataset}`, e.g. "Cora".
    pub dataset_name: String,
    /// `{Text}`, e.g. "article".
    pub text_noun: String,
    /// `{Format}`: bracketed placeholders the generator fills, emitted between
    /// the `<START>` and `<END>` markers.
    pub format_template: String,
}

impl PromptSpec {
    pub fn new(task: &str, dataset: &str, text: &str, format: &str) -> Result<Self> {
        let spec = Self {
            dataset_task: task.into(),
            dataset_name: dataset.into(),
            text_noun: text.into(),
            format_template: format.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.format_template;
        if f.contains(START) || f.contains(END) {
            return Err(Error::invalid(
                "format_template must not contain the <START>/<END> markers itself",
            ));
        }
        let has_slot = f
            .find('[')
            .is_some_and(|open| f[open..].find(']').is_some_and(|close| close > 1));
        if !has_slot {
            return Err(Error::invalid(
                "format_template needs at least one [Placeholder]",
            ));
        }
        Ok(())
    }

    /// The format framed by the literal markers.
    pub fn framed_format(&self) -> String {
        format!("{START}{}{END}", self.format_template)
    }

    /// Hex SHA-256 over the four slots.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for part in [
            &self.dataset_task,
            &self.dataset_name,
            &self.text_noun,
            &self.format_template,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Template parameters for the benchmark datasets, by case-insensitive name.
    pub fn preset(name: &str) -> Option<Self> {
        const ARTICLES: &str = "new academic articles";
        const REVIEWS: &str = "reviews of products from Amazon";
        let (task, dataset, text, format) = match name.to_ascii_lowercase().as_str() {
            "cora" => (ARTICLES, "Cora", "article", "[New Title] : [New Abstract]"),
            "pubmed" => (
                ARTICLES,
                "Pubmed",
                "article",
                "Title: [New Title]\n Abstract: [New Abstract]",
            ),
            "citeseer" => (ARTICLES, "Citeseer", "article", "[New Title] : [New Abstract]"),
            "photo" => (REVIEWS, "Photo", "review", "Review: [New Review]"),
            "computer" => (REVIEWS, "Computer", "review", "Review: [New Review]"),
            "children" => (
                "new book descriptions",
                "Children",
                "book description",
                "Title: [New Title]\n Book Description: [New Description]",
            ),
            _ => return None,
        };
        Some(Self::new(task, dataset, text, format).expect("presets are valid"))
    }
}

fn quoted(text: &str) -> String {
    format!("{START}{text}{END}")
}

/// Builds the chat transcript for one interpolation request.
///
/// Variants S and M take two seed texts and produce six messages; variant O
/// takes one seed text and produces four. The final request always names
/// `class1`, the anchor's class.
pub fn build_prompt(
    variant: Variant,
    t1: &str,
    t2: Option<&str>,
    class1: &str,
    class2: &str,
    spec: &PromptSpec,
) -> Result<Vec<ChatMessage>> {
    let dataset = &spec.dataset_name;
    match variant {
        Variant::O => {
            let task = &spec.dataset_task;
            Ok(vec![
                ChatMessage::new(
                    Role::System,
                    format!(
                        "You are a helpful AI assistant for generating {task} from {dataset}, where each {task} follows the format {}.",
                        spec.framed_format()
                    ),
                ),
                ChatMessage::new(
                    Role::User,
                    format!("Give me the first {task} from {dataset} with topic {class1}."),
                ),
                ChatMessage::new(Role::Assistant, quoted(t1)),
                ChatMessage::new(
                    Role::User,
                    format!(
                        "Give me the second {task} from {dataset} with topic {class1}. It should be more similar to the first {task}."
                    ),
                ),
            ])
        }
        Variant::S | Variant::M => {
            if variant == Variant::S && class1 != class2 {
                return Err(Error::invalid(format!(
                    "variant S interpolates within one class, got `{class1}` and `{class2}`"
                )));
            }
            let t2 = t2.ok_or_else(|| {
                Error::invalid(format!("variant {variant} needs a second seed text"))
            })?;
            let task = &spec.dataset_task;
            let text = &spec.text_noun;
            Ok(vec![
                ChatMessage::new(
                    Role::System,
                    format!(
                        "You are a helpful AI assistant for generating {task} from {dataset}, where each {text} follows the format {}.",
                        spec.framed_format()
                    ),
                ),
                ChatMessage::new(
                    Role::User,
                    format!("Give me the first {text} from {dataset} with topic {class1}."),
                ),
                ChatMessage::new(Role::Assistant, quoted(t1)),
                ChatMessage::new(
                    Role::User,
                    format!("Give me the second {text} from {dataset} with topic {class2}."),
                ),
                ChatMessage::new(Role::Assistant, quoted(t2)),
                ChatMessage::new(
                    Role::User,
                    format!(
                        "Give me the third {text} from {dataset} with topic {class1}. It should be more similar to the first {text} and less similar to the second {text}."
                    ),
                ),
            ])
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

/// Extracts the text between the first `<START>` and the next `<END>`.
///
/// In lenient mode a missing marker falls back to the available side (or the
/// whole output) with a warning; strict mode rejects it.
pub fn parse_generation(raw: &str, mode: ParseMode) -> Result<String> {
    let start = raw.find(START);
    let body = match start {
        Some(s) => {
            let after = &raw[s + START.len()..];
            match after.find(END) {
                Some(e) => &after[..e],
                None if mode == ParseMode::Strict => return Err(Error::MissingMarker(END)),
                None => {
                    log::warn!("generation has no {END} marker; keeping text after {START}");
                    after
                }
            }
        }
        None if mode == ParseMode::Strict => return Err(Error::MissingMarker(START)),
        None => match raw.find(END) {
            Some(e) => {
                log::warn!("generation has no {START} marker; keeping text before {END}");
                &raw[..e]
            }
            None => {
                log::warn!("generation has no markers; keeping the whole output");
                raw
            }
        },
    };
    let text = body.trim();
    if text.is_empty() {
        return Err(Error::EmptyGeneration);
    }
    Ok(text.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cora() -> PromptSpec {
        PromptSpec::preset("cora").unwrap()
    }

    #[test]
    fn variant_s_same_class() {
        let msgs = build_prompt(Variant::S, "t one", Some("t two"), "Theory", "Theory", &cora())
            .unwrap();
        assert_eq!(msgs.len(), 6);
        let roles: Vec<Role> = msgs.iter().map(|m| m.role).collect();
        use Role::*;
        assert_eq!(roles, [System, User, Assistant, User, Assistant, User]);
        assert_eq!(
            msgs[0].content,
            "You are a helpful AI assistant for generating new academic articles from Cora, where each article follows the format <START>[New Title] : [New Abstract]<END>."
        );
        assert_eq!(msgs[2].content, "<START>t one<END>");
        assert_eq!(msgs[4].content, "<START>t two<END>");
        assert_eq!(
            msgs[5].content,
            "Give me the third article from Cora with topic Theory. It should be more similar to the first article and less similar to the second article."
        );
        assert!(msgs[1].content.ends_with("with topic Theory."));
        assert!(msgs[3].content.ends_with("with topic Theory."));
    }

    #[test]
    fn variant_s_rejects_mixed_classes() {
        assert!(build_prompt(Variant::S, "a", Some("b"), "Theory", "Neural Networks", &cora())
            .is_err());
    }

    #[test]
    fn variant_m_names_both_topics() {
        let msgs = build_prompt(
            Variant::M,
            "a",
            Some("b"),
            "Theory",
            "Neural Networks",
            &cora(),
        )
        .unwrap();
        assert_eq!(msgs.len(), 6);
        assert!(msgs[1].content.ends_with("with topic Theory."));
        assert!(msgs[3].content.ends_with("with topic Neural Networks."));
        assert!(msgs[5].content.contains("with topic Theory."));
    }

    #[test]
    fn variant_o_has_four_messages() {
        let msgs = build_prompt(Variant::O, "seed", None, "Theory", "Theory", &cora()).unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(
            msgs[3].content,
            "Give me the second new academic articles from Cora with topic Theory. It should be more similar to the first new academic articles."
        );
        assert!(msgs[0].content.contains("where each new academic articles follows"));
    }

    #[test]
    fn presets_cover_benchmarks() {
        for name in ["cora", "pubmed", "citeseer", "photo", "computer", "children"] {
            assert!(PromptSpec::preset(name).is_some(), "{name}");
        }
        assert!(PromptSpec::preset("imdb").is_none());
        assert!(PromptSpec::new("t", "d", "x", "no placeholder").is_err());
        assert!(PromptSpec::new("t", "d", "x", "<START>[A]<END>").is_err());
    }

    #[test]
    fn parse_cases() {
        assert_eq!(
            parse_generation("<START>Title: X\nAbstract: Y<END>", ParseMode::Lenient).unwrap(),
            "Title: X\nAbstract: Y"
        );
        assert_eq!(
            parse_generation("noise <START>a<END> tail <START>b<END>", ParseMode::Strict)
                .unwrap(),
            "a"
        );
        assert!(matches!(
            parse_generation("<START><END>", ParseMode::Lenient),
            Err(Error::EmptyGeneration)
        ));
        assert!(matches!(
            parse_generation("<START>  \n <END>", ParseMode::Strict),
            Err(Error::EmptyGeneration)
        ));
    }

    #[test]
    fn parse_missing_markers() {
        assert_eq!(
            parse_generation("  plain text \n", ParseMode::Lenient).unwrap(),
            "plain text"
        );
        assert!(matches!(
            parse_generation("plain", ParseMode::Strict),
            Err(Error::MissingMarker(START))
        ));
        assert_eq!(
            parse_generation("<START> cut off", ParseMode::Lenient).unwrap(),
            "cut off"
        );
        assert!(matches!(
            parse_generation("<START> cut off", ParseMode::Strict),
            Err(Error::MissingMarker(END))
        ));
    }
}
