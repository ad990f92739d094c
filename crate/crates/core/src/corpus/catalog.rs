use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_name, CorpusError};

/// Index of a template in a [`TemplateCatalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub usize);

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Pixel rectangle the caption is rendered into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Vertical anchoring of the caption block inside its box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    #[default]
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    /// Reserved vocabulary token that stands for this template.
    pub token: String,
    pub image_paths: Vec<PathBuf>,
    pub caption_box: CaptionBox,
    pub position: Position,
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    templates: Vec<CatalogFileEntry>,
}

#[derive(Debug, Deserialize)]
struct CatalogFileEntry {
    name: String,
    images: Vec<PathBuf>,
    caption_box: CaptionBox,
    #[serde(default)]
    position: Position,
}

/// Ordered list of meme templates. Position in the list is the [`TemplateId`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCatalog {
    entries: Vec<CatalogEntry>,
    by_name: HashMap<String, TemplateId>,
}

/// Derives the reserved token for a template name, e.g. `Success Kid` -> `<success_kid>`.
pub fn template_token(name: &str) -> String {
    let slug: Vec<String> = name.split_whitespace().map(|w| w.to_lowercase()).collect();
    format!("<{}>", slug.join("_"))
}

impl TemplateCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, CorpusError> {
        if entries.len() < 2 {
            return Err(CorpusError::InvalidCatalog(format!(
                "catalog needs at least 2 templates, got {}",
                entries.len()
            )));
        }
        let mut by_name = HashMap::new();
        let mut tokens = std::collections::HashSet::new();
        for (idx, entry) in entries.iter().enumerate() {
            if entry.image_paths.is_empty() {
                return Err(CorpusError::InvalidCatalog(format!(
                    "template {:?} has no images",
                    entry.name
                )));
            }
            if by_name.insert(normalize_name(&entry.name), TemplateId(idx)).is_some() {
                return Err(CorpusError::InvalidCatalog(format!(
                    "duplicate template name {:?}",
                    entry.name
                )));
            }
            if !tokens.insert(entry.token.clone()) {
                return Err(CorpusError::InvalidCatalog(format!(
                    "duplicate template token {:?}",
                    entry.token
                )));
            }
        }
        Ok(Self { entries, by_name })
    }

    /// Parses the catalog JSON; relative image paths resolve against `base_dir`.
    pub fn from_json(json: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let file: CatalogFile = serde_json::from_str(json).map_err(|e| CorpusError::InvalidCatalog(e.to_string()))?;
        let entries = file
            .templates
            .into_iter()
            .map(|t| CatalogEntry {
                token: template_token(&t.name),
                image_paths: t.images.into_iter().map(|p| base_dir.join(p)).collect(),
                name: t.name,
                caption_box: t.caption_box,
                position: t.position,
            })
            .collect();
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let json = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&json, base)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, id: TemplateId) -> Option<&CatalogEntry> {
        self.entries.get(id.0)
    }

    pub fn ids(&self) -> impl Iterator<Item = TemplateId> {
        (0..self.entries.len()).map(TemplateId)
    }

    /// Case-insensitive, whitespace-collapsed name lookup.
    pub fn find(&self, name: &str) -> Option<TemplateId> {
        self.by_name.get(&normalize_name(name)).copied()
    }
}
