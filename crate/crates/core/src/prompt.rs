//! Preference-annotation prompt templates.
//!
//! A template file is a sequence of `[section]` headers. `[template]` holds
//! the prompt text; every other section defines a named block that the
//! prompt can reference as `{name}`. `{source}` and `{reference}` come from
//! the example being annotated. `{{` and `}}` produce literal braces.

use std::collections::BTreeMap;

use crate::corpus::ParallelExample;
use crate::error::{Error, Result};

pub const BUNDLED_ZH_EN: &str = include_str!("../assets/prompt_zh_en.txt");

/// Blocks every preference prompt is expected to carry.
pub const PREFERENCE_BLOCKS: [&str; 4] = ["quality", "monotonicity", "key_points", "simplicity"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub text: String,
    pub blocks: BTreeMap<String, String>,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            blocks: BTreeMap::new(),
        }
    }

    pub fn with_block(mut self, name: impl Into<String>, body: impl Into<String>) -> Self {
        self.blocks.insert(name.into(), body.into());
        self
    }

    pub fn parse(input: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, line) in input.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if sections.contains_key(name) {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("section [{name}] repeated"),
                    });
                }
                sections.insert(name.to_string(), String::new());
                current = Some(name.to_string());
                continue;
            }
            match &current {
                Some(name) => {
                    let body = sections.get_mut(name).expect("section exists");
                    body.push_str(line);
                    body.push('\n');
                }
                None if trimmed.is_empty() => {}
                None => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "text before the first [section]".into(),
                    })
                }
            }
        }
        let text = sections
            .remove("template")
            .ok_or_else(|| Error::Validation("template file has no [template] section".into()))?;
        let blocks = sections
            .into_iter()
            .map(|(k, v)| (k, v.trim_end().to_string()))
            .collect();
        Ok(Self {
            text: text.trim_end().to_string() + "\n",
            blocks,
        })
    }

    pub fn bundled_zh_en() -> Self {
        Self::parse(BUNDLED_ZH_EN).expect("bundled template parses")
    }
}

fn substitute(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            out.push_str(&tail[..1]);
            rest = &tail[2..];
        } else if tail.starts_with('}') {
            return Err(Error::Validation("unmatched '}' in template".into()));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| Error::Validation("unclosed '{' in template".into()))?;
            let name = &tail[1..end];
            out.push_str(&lookup(name).ok_or_else(|| Error::Render(name.to_string()))?);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Fills the template for one example. Blocks may themselves reference
/// `{source}` and `{reference}`.
pub fn render_preference_prompt(template: &PromptTemplate, example: &ParallelExample) -> Result<String> {
    let source = example.source.text();
    let reference = example.preferred.text();
    let fields = |name: &str| match name {
        "source" => Some(source.clone()),
        "reference" => Some(reference.clone()),
        _ => None,
    };
    let mut rendered_blocks = BTreeMap::new();
    for (name, body) in &template.blocks {
        rendered_blocks.insert(name.as_str(), substitute(body, &fields)?);
    }
    substitute(&template.text, &|name| {
        fields(name).or_else(|| rendered_blocks.get(name).cloned())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn example(src: &str) -> ParallelExample {
        ParallelExample {
            source: Sentence::from_text(src, "zh").unwrap(),
            preferred: Sentence::from_text("x y", "en").unwrap(),
            rejected: None,
        }
    }

    #[test]
    fn simple_substitution() {
        let t = PromptTemplate::new("Translate: {source}");
        assert_eq!(render_preference_prompt(&t, &example("a b")).unwrap(), "Translate: a b");
    }

    #[test]
    fn missing_placeholder_is_named() {
        let t = PromptTemplate::new("Do {tone} with {source}");
        let err = render_preference_prompt(&t, &example("a")).unwrap_err();
        assert!(matches!(&err, Error::Render(n) if n == "tone"));
        assert_eq!(err.to_string(), "unresolved placeholder {tone}");
    }

    #[test]
    fn literal_braces_and_blocks() {
        let t = PromptTemplate::new("{{json}} {rule}").with_block("rule", "keep {reference}");
        assert_eq!(render_preference_prompt(&t, &example("a")).unwrap(), "{json} keep x y");
        assert!(render_preference_prompt(&PromptTemplate::new("oops }"), &example("a")).is_err());
    }

    #[test]
    fn bundled_template_has_every_block() {
        let t = PromptTemplate::bundled_zh_en();
        let out = render_preference_prompt(&t, &example("你好 世界")).unwrap();
        for block in PREFERENCE_BLOCKS {
            assert!(out.contains(t.blocks[block].as_str()), "{block}");
        }
        assert!(out.contains("你好 世界") && out.contains("x y"));
        assert!(!out.contains('{'));
    }

    #[test]
    fn parse_errors() {
        assert!(PromptTemplate::parse("stray\n[template]\nx").is_err());
        assert!(PromptTemplate::parse("[a]\nx").is_err());
        assert!(PromptTemplate::parse("[template]\n[template]\n").is_err());
    }
}
