//! Prompt templates as TOML files. Omitted keys keep the built-in wording.

use std::fs;
use std::path::Path;

use trajprompt_core::PromptTemplate;

use crate::error::{Error, IoContext, Result};

pub fn parse_template(text: &str) -> Result<PromptTemplate> {
    let t: PromptTemplate = toml::from_str(text).map_err(|e| Error::Config(format!("prompt template: {e}")))?;
    t.validate()?;
    Ok(t)
}

pub fn load_template(path: &Path) -> Result<PromptTemplate> {
    let text = fs::read_to_string(path).at(path)?;
    parse_template(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn default_template_toml() -> String {
    toml::to_string(&PromptTemplate::default()).expect("template serialises")
}
