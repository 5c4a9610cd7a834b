//! Versioned prompt templates. User-controlled values never reach the
//! provider raw: each bound value is escaped and wrapped in a delimiter
//! element so it cannot close the element or open a placeholder.

use std::collections::BTreeMap;

use super::GatewayError;

const DEFAULT_PROMPTS: &str = include_str!("../../data/prompts.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub version: u32,
    pub body: String,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find("{{") {
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else { break };
            let name = after[..close].trim().to_string();
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[close + 2..];
        }
        out
    }

    fn fill(&self, vars: &[(&str, String)], wrap: impl Fn(&str, &str) -> String) -> Result<String, GatewayError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else {
                out.push_str(&rest[open..]);
                rest = "";
                break;
            };
            let name = after[..close].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| GatewayError::MissingVariable {
                    template: self.name.clone(),
                    name: name.to_string(),
                })?;
            out.push_str(&wrap(name, value));
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// A template with its variables bound, ready for a provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub template: String,
    pub version: u32,
    /// Escaped, delimited text sent to a live provider.
    pub text: String,
    /// Raw bindings, for backends that answer without a model.
    pub vars: Vec<(String, String)>,
}

impl RenderedPrompt {
    pub fn var(&self, name: &str) -> Option<&str> {
        self.vars.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

/// Escapes markup and placeholder delimiters in user-supplied text.
pub fn escape_user_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '{' => out.push_str("&#123;"),
            '}' => out.push_str("&#125;"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLibrary {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        PromptLibrary::parse(DEFAULT_PROMPTS).expect("bundled prompts parse")
    }
}

impl PromptLibrary {
    /// Parses `@@ <name> v<version>` sections. Lines starting with `#`
    /// before the first header are comments. When a name repeats, the
    /// highest version wins.
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut templates: BTreeMap<String, PromptTemplate> = BTreeMap::new();
        let mut current: Option<PromptTemplate> = None;
        let finish = |t: Option<PromptTemplate>, templates: &mut BTreeMap<String, PromptTemplate>| {
            if let Some(mut t) = t {
                t.body = t.body.trim().to_string();
                match templates.get(&t.name) {
                    Some(old) if old.version >= t.version => {}
                    _ => {
                        templates.insert(t.name.clone(), t);
                    }
                }
            }
        };
        for line in text.lines() {
            if let Some(head) = line.strip_prefix("@@") {
                finish(current.take(), &mut templates);
                let mut parts = head.split_whitespace();
                let name = parts.next().ok_or_else(|| GatewayError::UnknownTemplate(line.to_string()))?;
                let version = parts
                    .next()
                    .and_then(|v| v.strip_prefix('v'))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| GatewayError::UnknownTemplate(line.to_string()))?;
                current = Some(PromptTemplate {
                    name: name.to_string(),
                    version,
                    body: String::new(),
                });
            } else if let Some(t) = current.as_mut() {
                t.body.push_str(line);
                t.body.push('\n');
            }
        }
        finish(current.take(), &mut templates);
        Ok(PromptLibrary { templates })
    }

    pub fn get(&self, name: &str) -> Option<&PromptTemplate> {
        self.templates.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, name: &str, vars: &[(&str, String)]) -> Result<RenderedPrompt, GatewayError> {
        let t = self.get(name).ok_or_else(|| GatewayError::UnknownTemplate(name.to_string()))?;
        let text = t.fill(vars, |k, v| format!("<user_input name=\"{k}\">{}</user_input>", escape_user_text(v)))?;
        Ok(RenderedPrompt {
            template: t.name.clone(),
            version: t.version,
            text,
            vars: vars.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        })
    }

    /// Fills a template with raw values; used for canned offline replies.
    pub fn fill_plain(&self, name: &str, vars: &[(String, String)]) -> Result<String, GatewayError> {
        let t = self.get(name).ok_or_else(|| GatewayError::UnknownTemplate(name.to_string()))?;
        let borrowed: Vec<(&str, String)> = vars.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        t.fill(&borrowed, |_, v| v.to_string())
    }
}
