//! Prompt assembly.
//!
//! Every prompt is the concatenation of four blocks, in order: a role-setting
//! prefix, the function list, the fixed output format, and a number of worked
//! examples. The main conversation lists only main functions; each group gets
//! its own sub-prompt listing just its children.
//!
//! The template text lives in versioned asset files (`assets/templates/v1`)
//! and can be replaced wholesale by pointing [`PromptEngine::from_dir`] at a
//! directory with the same layout.

mod tokens;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{FunctionKind, FunctionRegistry, FunctionSpec};

pub use tokens::{count_tokens, QuarterByteCounter, TokenCounter};

pub const TEMPLATE_VERSION: &str = "v1";
pub const MAX_EXAMPLES: usize = 4;
pub const DEFAULT_EXAMPLES: usize = 3;

/// Header lines. Scripted fixtures key on these to tell the prompts apart.
pub const MAIN_HEADER: &str = "Main functions:";
pub const FLAT_HEADER: &str = "All functions:";
pub const SUB_HEADER_PREFIX: &str = "Sub-functions of ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    #[serde(alias = "EN")]
    En,
    #[serde(alias = "CN")]
    Cn,
}

impl Language {
    pub fn dir_name(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Cn => "cn",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("example_count {0} outside 0..={MAX_EXAMPLES}")]
    ExampleCount(usize),
    #[error("{0:?} is not a group")]
    NotAGroup(String),
    #[error("template assets: {0}")]
    Assets(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub reasoning_enabled: bool,
    example_count: usize,
    pub language: Language,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            reasoning_enabled: true,
            example_count: DEFAULT_EXAMPLES,
            language: Language::En,
        }
    }
}

impl PromptOptions {
    pub fn new(reasoning_enabled: bool, example_count: usize, language: Language) -> Result<Self, PromptError> {
        if example_count > MAX_EXAMPLES {
            return Err(PromptError::ExampleCount(example_count));
        }
        Ok(Self {
            reasoning_enabled,
            example_count,
            language,
        })
    }

    pub fn example_count(&self) -> usize {
        self.example_count
    }
}

/// A worked exchange. `main` answers against main functions, `flat` against leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub user: String,
    pub main: Vec<String>,
    pub flat: Vec<String>,
    pub analysis: String,
}

/// Template text for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateAssets {
    pub prefix: String,
    pub reasoning: String,
    pub sub_prefix: String,
    pub format: String,
    pub descriptor: String,
    pub examples: Vec<FewShotExample>,
}

macro_rules! bundled_asset {
    ($lang:literal, $file:literal) => {
        include_str!(concat!("../../assets/templates/v1/", $lang, "/", $file))
    };
}

impl TemplateAssets {
    pub fn bundled(language: Language) -> Self {
        let (prefix, reasoning, sub_prefix, format, descriptor, examples) = match language {
            Language::En => (
                bundled_asset!("en", "prefix.txt"),
                bundled_asset!("en", "reasoning.txt"),
                bundled_asset!("en", "sub_prefix.txt"),
                bundled_asset!("en", "format.txt"),
                bundled_asset!("en", "descriptor.txt"),
                bundled_asset!("en", "examples.json"),
            ),
            Language::Cn => (
                bundled_asset!("cn", "prefix.txt"),
                bundled_asset!("cn", "reasoning.txt"),
                bundled_asset!("cn", "sub_prefix.txt"),
                bundled_asset!("cn", "format.txt"),
                bundled_asset!("cn", "descriptor.txt"),
                bundled_asset!("cn", "examples.json"),
            ),
        };
        Self::from_parts(prefix, reasoning, sub_prefix, format, descriptor, examples)
            .expect("bundled templates are valid")
    }

    fn from_parts(
        prefix: &str,
        reasoning: &str,
        sub_prefix: &str,
        format: &str,
        descriptor: &str,
        examples: &str,
    ) -> Result<Self, PromptError> {
        let examples: Vec<FewShotExample> =
            serde_json::from_str(examples).map_err(|e| PromptError::Assets(format!("examples.json: {e}")))?;
        if examples.len() < MAX_EXAMPLES {
            return Err(PromptError::Assets(format!(
                "examples.json has {} examples, need {MAX_EXAMPLES}",
                examples.len()
            )));
        }
        Ok(Self {
            prefix: prefix.trim().to_string(),
            reasoning: reasoning.trim().to_string(),
            sub_prefix: sub_prefix.trim().to_string(),
            format: format.trim().to_string(),
            descriptor: descriptor.trim().to_string(),
            examples,
        })
    }

    /// Reads `<dir>/<lang>/{prefix,reasoning,sub_prefix,format,descriptor}.txt`
    /// and `<dir>/<lang>/examples.json`.
    pub fn load(dir: &Path, language: Language) -> Result<Self, PromptError> {
        let base = dir.join(language.dir_name());
        let read = |name: &str| {
            std::fs::read_to_string(base.join(name))
                .map_err(|e| PromptError::Assets(format!("{}: {e}", base.join(name).display())))
        };
        Self::from_parts(
            &read("prefix.txt")?,
            &read("reasoning.txt")?,
            &read("sub_prefix.txt")?,
            &read("format.txt")?,
            &read("descriptor.txt")?,
            &read("examples.json")?,
        )
    }
}

/// The four blocks of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub prefix: String,
    pub functions_block: String,
    pub format_block: String,
    pub examples_block: String,
    pub options: PromptOptions,
}

impl PromptTemplate {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(
            self.prefix.len()
                + self.functions_block.len()
                + self.format_block.len()
                + self.examples_block.len(),
        );
        out.push_str(&self.prefix);
        out.push_str(&self.functions_block);
        out.push_str(&self.format_block);
        out.push_str(&self.examples_block);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExampleView {
    Main,
    Flat,
}

fn function_lines<'a>(header: &str, specs: impl Iterator<Item = &'a FunctionSpec>) -> String {
    let mut block = String::new();
    block.push_str(header);
    block.push('\n');
    for spec in specs {
        block.push_str("- ");
        block.push_str(&spec.name);
        block.push_str(": ");
        block.push_str(&spec.description);
        block.push('\n');
    }
    block.push('\n');
    block
}

/// Every leaf on its own line. A nested leaf has no group header to lean on,
/// so its line carries the group's description ahead of its own.
fn flat_lines(header: &str, registry: &FunctionRegistry) -> String {
    let mut block = String::new();
    block.push_str(header);
    block.push('\n');
    for main in registry.mains() {
        let own = if main.is_leaf() {
            std::slice::from_ref(main)
        } else {
            main.children.as_slice()
        };
        for leaf in own {
            block.push_str("- ");
            block.push_str(&leaf.name);
            block.push_str(": ");
            if main.is_group() {
                block.push_str(&main.description);
                block.push(' ');
            }
            block.push_str(&leaf.description);
            block.push('\n');
        }
    }
    block.push('\n');
    block
}

/// Renders prompts from a set of template assets.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    en: TemplateAssets,
    cn: TemplateAssets,
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PromptEngine {
    pub fn bundled() -> Self {
        Self {
            en: TemplateAssets::bundled(Language::En),
            cn: TemplateAssets::bundled(Language::Cn),
        }
    }

    /// Loads both languages from a directory laid out like `assets/templates/v1`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        Ok(Self {
            en: TemplateAssets::load(dir.as_ref(), Language::En)?,
            cn: TemplateAssets::load(dir.as_ref(), Language::Cn)?,
        })
    }

    pub fn assets(&self, language: Language) -> &TemplateAssets {
        match language {
            Language::En => &self.en,
            Language::Cn => &self.cn,
        }
    }

    fn prefix_block(&self, options: &PromptOptions) -> String {
        let assets = self.assets(options.language);
        let mut prefix = assets.prefix.clone();
        if options.reasoning_enabled {
            prefix.push(' ');
            prefix.push_str(&assets.reasoning);
        }
        prefix.push_str("\n\n");
        prefix
    }

    fn format_block(&self, language: Language) -> String {
        format!("{}\n", self.assets(language).format)
    }

    fn examples_block(&self, options: &PromptOptions, view: ExampleView) -> String {
        let assets = self.assets(options.language);
        let mut block = String::new();
        for (i, ex) in assets.examples.iter().take(options.example_count).enumerate() {
            let names = match view {
                ExampleView::Main => &ex.main,
                ExampleView::Flat => &ex.flat,
            };
            block.push_str(&format!(
                "\nExample {}:\nUser: {}\nFunctions: [{}]\nAnalysis: {}\n",
                i + 1,
                ex.user,
                names.join(", "),
                ex.analysis
            ));
        }
        block
    }

    /// Main-conversation template: main functions only, groups summarized by
    /// their own name and description.
    pub fn main_template(&self, registry: &FunctionRegistry, options: &PromptOptions) -> PromptTemplate {
        PromptTemplate {
            prefix: self.prefix_block(options),
            functions_block: function_lines(MAIN_HEADER, registry.mains().iter()),
            format_block: self.format_block(options.language),
            examples_block: self.examples_block(options, ExampleView::Main),
            options: *options,
        }
    }

    pub fn render_main_prompt(&self, registry: &FunctionRegistry, options: &PromptOptions) -> String {
        self.main_template(registry, options).render()
    }

    /// Baseline template that lists every leaf in one prompt.
    pub fn flat_template(&self, registry: &FunctionRegistry, options: &PromptOptions) -> PromptTemplate {
        let header = if registry.has_groups() { FLAT_HEADER } else { MAIN_HEADER };
        let view = if registry.has_groups() {
            ExampleView::Flat
        } else {
            ExampleView::Main
        };
        PromptTemplate {
            prefix: self.prefix_block(options),
            functions_block: flat_lines(header, registry),
            format_block: self.format_block(options.language),
            examples_block: self.examples_block(options, view),
            options: *options,
        }
    }

    pub fn render_flat_prompt(&self, registry: &FunctionRegistry, options: &PromptOptions) -> String {
        self.flat_template(registry, options).render()
    }

    /// Sub-prompt for one group: its children and the output format, nothing
    /// about any other main function.
    pub fn render_sub_prompt(&self, group: &FunctionSpec, language: Language) -> Result<String, PromptError> {
        if group.kind != FunctionKind::Group {
            return Err(PromptError::NotAGroup(group.name.clone()));
        }
        let assets = self.assets(language);
        let mut out = assets.sub_prefix.replace("{group}", &group.name);
        out.push_str("\n\n");
        out.push_str(&function_lines(
            &format!("{SUB_HEADER_PREFIX}{}:", group.name),
            group.children.iter(),
        ));
        out.push_str(&self.format_block(language));
        Ok(out)
    }

    /// System prompt for the object descriptor call of the removal pipeline.
    pub fn render_descriptor_prompt(&self, language: Language) -> String {
        format!("{}\n", self.assets(language).descriptor)
    }
}

/// [`PromptEngine::render_main_prompt`] with the bundled templates.
pub fn render_main_prompt(registry: &FunctionRegistry, options: &PromptOptions) -> String {
    PromptEngine::bundled().render_main_prompt(registry, options)
}

/// [`PromptEngine::render_sub_prompt`] with the bundled English templates.
pub fn render_sub_prompt(group: &FunctionSpec) -> Result<String, PromptError> {
    PromptEngine::bundled().render_sub_prompt(group, Language::En)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{FunctionRegistry, Scope};

    const REASONING: &str = "You first analyze the needs of users, and then answer your reasons and suggestions for choosing these functions";

    #[test]
    fn main_prompt_with_reasoning_and_three_examples() {
        let reg = FunctionRegistry::bundled();
        let opts = PromptOptions::new(true, 3, Language::En).unwrap();
        let text = render_main_prompt(&reg, &opts);
        assert!(text.contains(REASONING));
        assert!(text.contains("[Name of function 1,..., Name of function N]"));
        assert!(text.contains("Example 3:"));
        assert!(!text.contains("Example 4:"));
        for main in reg.mains() {
            assert_eq!(text.matches(&format!("- {}: ", main.name)).count(), 1);
        }
        assert!(!text.contains("Burnt Tomato"));
    }

    #[test]
    fn reasoning_off_omits_sentence() {
        let reg = FunctionRegistry::bundled();
        let opts = PromptOptions::new(false, 0, Language::En).unwrap();
        assert!(!render_main_prompt(&reg, &opts).contains(REASONING));
    }

    #[test]
    fn ordering_and_empty_examples() {
        let reg = FunctionRegistry::new(["x"])
            .register_function(FunctionSpec::leaf("A", "first", "x"))
            .unwrap()
            .register_function(FunctionSpec::leaf("B", "second", "x"))
            .unwrap();
        let opts = PromptOptions::new(true, 0, Language::En).unwrap();
        let tpl = PromptEngine::bundled().main_template(&reg, &opts);
        assert!(tpl.functions_block.find("- A:").unwrap() < tpl.functions_block.find("- B:").unwrap());
        assert!(tpl.examples_block.is_empty());
        let rendered = tpl.render();
        assert_eq!(
            rendered,
            format!("{}{}{}{}", tpl.prefix, tpl.functions_block, tpl.format_block, tpl.examples_block)
        );
    }

    #[test]
    fn rendering_is_deterministic() {
        let reg = FunctionRegistry::bundled();
        let opts = PromptOptions::default();
        assert_eq!(render_main_prompt(&reg, &opts), render_main_prompt(&reg, &opts));
    }

    #[test]
    fn example_count_is_bounded() {
        assert!(matches!(
            PromptOptions::new(true, 5, Language::En),
            Err(PromptError::ExampleCount(5))
        ));
    }

    #[test]
    fn sub_prompt_lists_only_children() {
        let reg = FunctionRegistry::bundled();
        let group = reg.resolve("Lipstick Coloring", Scope::Main).unwrap();
        let text = render_sub_prompt(group).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("- ")).count(), 9);
        assert!(!text.contains("Object Removal"));
        assert!(text.contains("Pure Orange"));

        let open_eyes = reg.resolve("Open Eyes", Scope::Main).unwrap();
        assert!(matches!(render_sub_prompt(open_eyes), Err(PromptError::NotAGroup(_))));
    }

    #[test]
    fn two_child_group_has_two_lines() {
        let g = FunctionSpec::group(
            "G",
            "g",
            vec![FunctionSpec::leaf("x", "dx", "e"), FunctionSpec::leaf("y", "dy", "e")],
        );
        let text = render_sub_prompt(&g).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("- ")).count(), 2);
    }

    #[test]
    fn flat_equals_main_without_groups() {
        let reg = FunctionRegistry::new(["x"])
            .register_function(FunctionSpec::leaf("A", "first", "x"))
            .unwrap()
            .register_function(FunctionSpec::leaf("B", "second", "x"))
            .unwrap();
        let engine = PromptEngine::bundled();
        let opts = PromptOptions::default();
        assert_eq!(engine.render_flat_prompt(&reg, &opts), engine.render_main_prompt(&reg, &opts));
    }

    #[test]
    fn flat_prompt_is_longer_on_bundled_registry() {
        let reg = FunctionRegistry::bundled();
        let engine = PromptEngine::bundled();
        let opts = PromptOptions::default();
        assert!(
            count_tokens(&engine.render_flat_prompt(&reg, &opts))
                > count_tokens(&engine.render_main_prompt(&reg, &opts))
        );
    }

    #[test]
    fn chinese_assets_render() {
        let reg = FunctionRegistry::bundled();
        let opts = PromptOptions::new(true, 2, Language::Cn).unwrap();
        let text = render_main_prompt(&reg, &opts);
        assert!(text.contains("Example 2:"));
        assert!(text.contains("Functions: [Name of function 1,..., Name of function N]"));
    }
}
