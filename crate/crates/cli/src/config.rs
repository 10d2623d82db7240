use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use strata_core::hca::Captioner;
use strata_core::index::{Embedder, HashingEmbedder, KeywordExtractor, PartNumberExtractor, DEFAULT_B, DEFAULT_DIM, DEFAULT_K1};
use strata_core::plugin::{ExternalCaptioner, ExternalEmbedder, ExternalKeywordExtractor};
use strata_core::retriever::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginCommand {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    External(PluginCommand),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExtractorConfig {
    PartNumber,
    External(PluginCommand),
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

/// Everything a run depends on. Relative paths resolve against the
/// directory of the config file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus_dir: Option<PathBuf>,
    /// Restricts and annotates the corpus files; see `load_corpus`.
    pub manifest: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub window_words: usize,
    pub padding_words: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub top_k: usize,
    pub k1: f64,
    pub b: f64,
    pub embedder: EmbedderConfig,
    pub keyword_extractor: ExtractorConfig,
    /// Newline-separated user keywords; `#` starts a comment.
    pub keyword_dictionary: Option<PathBuf>,
    pub captioner: Option<PluginCommand>,
    pub answer_plugin: Option<PluginCommand>,
    pub cascade: bool,
    pub table_projection: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            corpus_dir: None,
            manifest: None,
            index_dir: PathBuf::from("index"),
            window_words: 400,
            padding_words: 50,
            alpha: 0.5,
            beta: 0.1,
            gamma: 1.0,
            top_k: 5,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            embedder: EmbedderConfig::Hashing { dim: DEFAULT_DIM },
            keyword_extractor: ExtractorConfig::PartNumber,
            keyword_dictionary: None,
            captioner: None,
            answer_plugin: None,
            cascade: true,
            table_projection: true,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: Self =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.corpus_dir.as_mut().map(resolve);
        config.manifest.as_mut().map(resolve);
        config.keyword_dictionary.as_mut().map(resolve);
        resolve(&mut config.index_dir);
        Ok(config)
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            alpha: self.alpha,
            beta: self.beta,
            top_k: self.top_k,
            gamma: self.gamma,
        }
    }

    /// Range checks for every numeric setting.
    pub fn validate(&self) -> strata_core::Result<()> {
        self.retrieval().validate()?;
        strata_core::index::validate_params(self.k1, self.b)?;
        strata_core::formatter::plan_windows(0, self.window_words, self.padding_words)?;
        if let EmbedderConfig::Hashing { dim: 0 } = self.embedder {
            return Err(strata_core::Error::InvalidParameter {
                name: "embedder.dim",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        Ok(match &self.embedder {
            EmbedderConfig::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)),
            EmbedderConfig::External(p) => Box::new(ExternalEmbedder::spawn(&p.command, &p.args)?),
        })
    }

    pub fn extractor(&self) -> Result<Box<dyn KeywordExtractor>> {
        Ok(match &self.keyword_extractor {
            ExtractorConfig::PartNumber => Box::new(PartNumberExtractor),
            ExtractorConfig::External(p) => Box::new(ExternalKeywordExtractor::spawn(&p.command, &p.args)?),
        })
    }

    pub fn captioner(&self) -> Result<Option<Box<dyn Captioner>>> {
        self.captioner
            .as_ref()
            .map(|p| Ok(Box::new(ExternalCaptioner::spawn(&p.command, &p.args)?) as Box<dyn Captioner>))
            .transpose()
    }

    pub fn dictionary(&self) -> Result<BTreeSet<String>> {
        let Some(path) = &self.keyword_dictionary else {
            return Ok(BTreeSet::new());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read keyword dictionary {}", path.display()))?;
        Ok(text
            .lines()
            .map(|l| l.split('#').next().unwrap_or_default().trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect())
    }
}
