//! Descriptor grammar for texture prompts.
//!
//! A [`DescriptorTable`] lists the words of each descriptor category plus a
//! set of render templates. [`enumerate_prompts`] expands the full cartesian
//! product in a fixed mixed-radix order, so a prompt's id is simply its rank:
//! texture is the most significant digit, then artistic, spatial, enhancer,
//! color and finally the template index. Ranks follow the position of each
//! word in its category list, not alphabetical order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TEMPLATE: &str = "{artistic} {spatial} {enhancer} {color} {texture} texture";

const DEFAULT_TEXTURES: [&str; 56] = [
    "banded",
    "blotchy",
    "braided",
    "bubbly",
    "bumpy",
    "checkered",
    "cobwebbed",
    "cracked",
    "crosshatched",
    "crystalline",
    "dotted",
    "fibrous",
    "flecked",
    "freckled",
    "frilly",
    "gauzy",
    "grid",
    "grooved",
    "honeycombed",
    "interlaced",
    "knitted",
    "lacelike",
    "lined",
    "marbled",
    "matted",
    "meshed",
    "paisley",
    "perforated",
    "pitted",
    "pleated",
    "polka-dotted",
    "porous",
    "potholed",
    "scaly",
    "smeared",
    "spiraled",
    "sprinkled",
    "stained",
    "stratified",
    "striped",
    "studded",
    "swirly",
    "veined",
    "waffled",
    "woven",
    "wrinkled",
    "zigzagged",
    "flaky",
    "chapped",
    "hairy",
    "leathery",
    "feathered",
    "spiky",
    "fluffy",
    "ribbed",
    "wavy",
];
const DEFAULT_ARTISTIC: [&str; 4] = ["", "impressionist", "photorealistic", "minimal"];
const DEFAULT_SPATIAL: [&str; 3] = ["", "randomized", "symmetrical"];
const DEFAULT_ENHANCER: [&str; 9] = [
    "",
    "gradient",
    "vivid",
    "muted",
    "iridescent",
    "neon",
    "faded",
    "watercolor",
    "earthy",
];
const DEFAULT_COLOR: [&str; 8] = [
    "",
    "red",
    "green",
    "blue",
    "yellow",
    "black-and-white",
    "pastel",
    "neutral",
];

/// The five descriptor slots, in adjective order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Artistic,
    Spatial,
    Enhancer,
    Color,
    Texture,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Artistic,
        Category::Spatial,
        Category::Enhancer,
        Category::Color,
        Category::Texture,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Artistic => "artistic",
            Category::Spatial => "spatial",
            Category::Enhancer => "enhancer",
            Category::Color => "color",
            Category::Texture => "texture",
        }
    }

    /// Whether Table-style empty entries are allowed in this category.
    pub fn allows_empty(self) -> bool {
        !matches!(self, Category::Texture)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("category `{0}` is empty")]
    EmptyCategory(&'static str),
    #[error("category `{category}` lists `{word}` more than once")]
    DuplicateWord {
        category: &'static str,
        word: String,
    },
    #[error("category `{0}` may not contain an empty entry")]
    EmptyWordNotAllowed(&'static str),
    #[error("no templates configured")]
    NoTemplates,
    #[error("template {index} is listed twice")]
    DuplicateTemplate { index: usize },
    #[error("template {index} references unknown placeholder `{{{name}}}`")]
    UnknownPlaceholder { index: usize, name: String },
    #[error("template {index} has an unterminated placeholder")]
    UnterminatedPlaceholder { index: usize },
    #[error("unknown {category} word `{word}`")]
    UnknownWord {
        category: &'static str,
        word: String,
    },
    #[error("template id {template_id} out of range ({count} templates)")]
    UnknownTemplate { template_id: usize, count: usize },
    #[error("rank {rank} out of range (total {total})")]
    RankOutOfRange { rank: u64, total: u64 },
    #[error("reading table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing table {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
}

/// Descriptor category word lists plus render templates.
///
/// The on-disk form is TOML with one array per category:
///
/// ```toml
/// textures = ["banded", "woven"]
/// artistic = ["", "photorealistic"]
/// spatial = [""]
/// enhancer = ["", "vivid"]
/// color = ["", "red"]
/// templates = ["{artistic} {spatial} {enhancer} {color} {texture} texture"]
/// ```
///
/// An empty string marks the empty descriptor. `templates` may be omitted, in
/// which case the single default template is used.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorTable {
    pub textures: Vec<String>,
    pub artistic: Vec<String>,
    pub spatial: Vec<String>,
    pub enhancer: Vec<String>,
    pub color: Vec<String>,
    #[serde(default = "default_templates")]
    pub templates: Vec<String>,
}

fn default_templates() -> Vec<String> {
    vec![DEFAULT_TEMPLATE.to_string()]
}

fn owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for DescriptorTable {
    fn default() -> Self {
        Self {
            textures: owned(&DEFAULT_TEXTURES),
            artistic: owned(&DEFAULT_ARTISTIC),
            spatial: owned(&DEFAULT_SPATIAL),
            enhancer: owned(&DEFAULT_ENHANCER),
            color: owned(&DEFAULT_COLOR),
            templates: default_templates(),
        }
    }
}

impl DescriptorTable {
    /// Reads and validates a TOML table file.
    pub fn from_path(path: &Path) -> Result<Self, GrammarError> {
        let text = std::fs::read_to_string(path).map_err(|source| GrammarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table: DescriptorTable =
            toml::from_str(&text).map_err(|source| GrammarError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        table.validate()?;
        Ok(table)
    }

    /// Returns the default table with `templates` replaced.
    pub fn with_templates<I, S>(mut self, templates: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.templates = templates.into_iter().map(Into::into).collect();
        self
    }

    pub fn words(&self, category: Category) -> &[String] {
        match category {
            Category::Artistic => &self.artistic,
            Category::Spatial => &self.spatial,
            Category::Enhancer => &self.enhancer,
            Category::Color => &self.color,
            Category::Texture => &self.textures,
        }
    }

    pub fn validate(&self) -> Result<(), GrammarError> {
        for category in Category::ALL {
            let words = self.words(category);
            if words.is_empty() {
                return Err(GrammarError::EmptyCategory(category.name()));
            }
            let mut seen = HashMap::with_capacity(words.len());
            for word in words {
                if word.trim().is_empty() && !category.allows_empty() {
                    return Err(GrammarError::EmptyWordNotAllowed(category.name()));
                }
                if seen.insert(word.as_str(), ()).is_some() {
                    return Err(GrammarError::DuplicateWord {
                        category: category.name(),
                        word: word.clone(),
                    });
                }
            }
        }
        if self.templates.is_empty() {
            return Err(GrammarError::NoTemplates);
        }
        for (index, template) in self.templates.iter().enumerate() {
            if self.templates[..index].contains(template) {
                return Err(GrammarError::DuplicateTemplate { index });
            }
            check_template(index, template)?;
        }
        Ok(())
    }

    /// Number of prompts [`enumerate_prompts`] emits.
    pub fn prompt_count(&self) -> u64 {
        self.radices().iter().product()
    }

    // Digit sizes from most to least significant.
    fn radices(&self) -> [u64; 6] {
        [
            self.textures.len() as u64,
            self.artistic.len() as u64,
            self.spatial.len() as u64,
            self.enhancer.len() as u64,
            self.color.len() as u64,
            self.templates.len() as u64,
        ]
    }

    fn index_of(&self, category: Category, word: &str) -> Result<u64, GrammarError> {
        self.words(category)
            .iter()
            .position(|w| w == word)
            .map(|p| p as u64)
            .ok_or_else(|| GrammarError::UnknownWord {
                category: category.name(),
                word: word.to_string(),
            })
    }

    /// The descriptor tuple at `rank` in enumeration order.
    pub fn tuple_at(&self, rank: u64) -> Result<DescriptorTuple, GrammarError> {
        let total = self.prompt_count();
        if rank >= total {
            return Err(GrammarError::RankOutOfRange { rank, total });
        }
        let radices = self.radices();
        let mut digits = [0u64; 6];
        let mut rest = rank;
        for i in (0..6).rev() {
            digits[i] = rest % radices[i];
            rest /= radices[i];
        }
        Ok(DescriptorTuple {
            slots: Slots {
                texture: self.textures[digits[0] as usize].clone(),
                artistic: self.artistic[digits[1] as usize].clone(),
                spatial: self.spatial[digits[2] as usize].clone(),
                enhancer: self.enhancer[digits[3] as usize].clone(),
                color: self.color[digits[4] as usize].clone(),
            },
            template_id: digits[5] as usize,
        })
    }

    /// Renders one tuple with its template.
    pub fn render(&self, tuple: &DescriptorTuple) -> Result<String, GrammarError> {
        let template =
            self.templates
                .get(tuple.template_id)
                .ok_or(GrammarError::UnknownTemplate {
                    template_id: tuple.template_id,
                    count: self.templates.len(),
                })?;
        Ok(render_template(template, &tuple.slots))
    }

    pub fn record_at(&self, rank: u64) -> Result<PromptRecord, GrammarError> {
        let tuple = self.tuple_at(rank)?;
        let text = self.render(&tuple)?;
        Ok(PromptRecord {
            prompt_id: rank,
            slots: tuple.slots,
            template_id: tuple.template_id,
            text,
        })
    }
}

fn check_template(index: usize, template: &str) -> Result<(), GrammarError> {
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or(GrammarError::UnterminatedPlaceholder { index })?;
        let name = &after[..close];
        if !Category::ALL.iter().any(|c| c.name() == name) {
            return Err(GrammarError::UnknownPlaceholder {
                index,
                name: name.to_string(),
            });
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

enum Piece<'a> {
    Text(&'a str),
    Slot(Category),
}

/// Splits a validated template into literal text and slot placeholders.
fn parse_template(template: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let name = &after[..close];
        if let Some(c) = Category::ALL.into_iter().find(|c| c.name() == name) {
            pieces.push(Piece::Text(&rest[..open]));
            pieces.push(Piece::Slot(c));
        } else {
            pieces.push(Piece::Text(&rest[..open + close + 2]));
        }
        rest = &after[close + 1..];
    }
    pieces.push(Piece::Text(rest));
    pieces
}

/// Substitutes slot words and collapses runs of whitespace left by empty
/// slots, as `split_whitespace().join(" ")` would.
fn render_pieces(pieces: &[Piece<'_>], slots: &Slots) -> String {
    let mut out = String::with_capacity(64);
    let mut pending_space = false;
    for piece in pieces {
        let text = match piece {
            Piece::Text(t) => t,
            Piece::Slot(c) => slots.get(*c),
        };
        for ch in text.chars() {
            if ch.is_whitespace() {
                pending_space = !out.is_empty();
            } else {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(ch);
            }
        }
    }
    out
}

fn render_template(template: &str, slots: &Slots) -> String {
    render_pieces(&parse_template(template), slots)
}

/// Words filling the five descriptor slots. Empty strings are empty slots.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slots {
    pub texture: String,
    pub artistic: String,
    pub spatial: String,
    pub enhancer: String,
    pub color: String,
}

impl Slots {
    pub fn get(&self, category: Category) -> &str {
        match category {
            Category::Artistic => &self.artistic,
            Category::Spatial => &self.spatial,
            Category::Enhancer => &self.enhancer,
            Category::Color => &self.color,
            Category::Texture => &self.texture,
        }
    }

    /// Non-empty words with their categories.
    pub fn present_words(&self) -> impl Iterator<Item = (Category, &str)> {
        Category::ALL
            .into_iter()
            .map(|c| (c, self.get(c)))
            .filter(|(_, w)| !w.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DescriptorTuple {
    pub slots: Slots,
    pub template_id: usize,
}

impl DescriptorTuple {
    /// Builds a tuple from words in adjective order, texture last.
    pub fn new(
        artistic: &str,
        spatial: &str,
        enhancer: &str,
        color: &str,
        texture: &str,
        template_id: usize,
    ) -> Self {
        Self {
            slots: Slots {
                texture: texture.into(),
                artistic: artistic.into(),
                spatial: spatial.into(),
                enhancer: enhancer.into(),
                color: color.into(),
            },
            template_id,
        }
    }
}

/// One expanded prompt. Serializes to the prompt manifest line format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub prompt_id: u64,
    pub slots: Slots,
    pub template_id: usize,
    pub text: String,
}

impl PromptRecord {
    pub fn texture_class(&self) -> &str {
        &self.slots.texture
    }
}

/// Expands the whole table in rank order.
pub fn enumerate_prompts(table: &DescriptorTable) -> Result<Vec<PromptRecord>, GrammarError> {
    table.validate()?;
    let templates: Vec<Vec<Piece<'_>>> =
        table.templates.iter().map(|t| parse_template(t)).collect();
    (0..table.prompt_count())
        .map(|rank| {
            let tuple = table.tuple_at(rank)?;
            let text = render_pieces(&templates[tuple.template_id], &tuple.slots);
            Ok(PromptRecord {
                prompt_id: rank,
                slots: tuple.slots,
                template_id: tuple.template_id,
                text,
            })
        })
        .collect()
}

/// Rank of a tuple in [`enumerate_prompts`] order.
pub fn rank_of(tuple: &DescriptorTuple, table: &DescriptorTable) -> Result<u64, GrammarError> {
    let digits = [
        table.index_of(Category::Texture, &tuple.slots.texture)?,
        table.index_of(Category::Artistic, &tuple.slots.artistic)?,
        table.index_of(Category::Spatial, &tuple.slots.spatial)?,
        table.index_of(Category::Enhancer, &tuple.slots.enhancer)?,
        table.index_of(Category::Color, &tuple.slots.color)?,
        {
            let count = table.templates.len();
            if tuple.template_id >= count {
                return Err(GrammarError::UnknownTemplate {
                    template_id: tuple.template_id,
                    count,
                });
            }
            tuple.template_id as u64
        },
    ];
    Ok(digits
        .iter()
        .zip(table.radices())
        .fold(0u64, |acc, (&d, radix)| acc * radix + d))
}

/// A rendered text shared by more than one prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DuplicateText {
    pub text: String,
    pub prompt_ids: Vec<u64>,
}

/// Reports every rendered text that occurs more than once.
pub fn find_duplicate_texts(records: &[PromptRecord]) -> Vec<DuplicateText> {
    let mut by_text: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in records {
        by_text.entry(&r.text).or_default().push(r.prompt_id);
    }
    by_text
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .map(|(text, prompt_ids)| DuplicateText {
            text: text.to_string(),
            prompt_ids,
        })
        .collect()
}
