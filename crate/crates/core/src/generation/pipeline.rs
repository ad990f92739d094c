use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{beam_search, DecodeParams, GenerationError, GeneratorScorer};
use crate::compositor::{compose_image, encode_png, BitmapFont, CaptionStyle};
use crate::corpus::{TemplateCatalog, TemplateId};
use crate::models::{select_template, CaptionGenerator, TemplateSelector};
use crate::text::{tokenize, TagLexicon, TokenId};

/// Everything needed to turn a sentence into a meme.
#[derive(Debug, Clone)]
pub struct MemePipeline {
    pub selector: TemplateSelector,
    pub generator: CaptionGenerator,
    pub catalog: TemplateCatalog,
    pub tagger: TagLexicon,
    pub font: BitmapFont,
    pub style: CaptionStyle,
}

impl MemePipeline {
    /// Checks that both models were built for this catalog. Uses the
    /// embedded tagger and font.
    pub fn new(
        selector: TemplateSelector,
        generator: CaptionGenerator,
        catalog: TemplateCatalog,
    ) -> Result<Self, GenerationError> {
        for (what, n) in [
            ("selector", selector.num_templates()),
            ("generator", generator.vocab().num_templates()),
        ] {
            if n != catalog.len() {
                return Err(GenerationError::CatalogMismatch {
                    model: what,
                    model_templates: n,
                    catalog: catalog.len(),
                });
            }
        }
        Ok(Self {
            selector,
            generator,
            catalog,
            tagger: TagLexicon::embedded(),
            font: BitmapFont::embedded(),
            style: CaptionStyle::default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedMeme {
    pub sentence: String,
    pub template: TemplateId,
    pub template_name: String,
    /// Selector probability of the chosen template; `None` when forced.
    pub probability: Option<f64>,
    /// Full selector ranking; empty when forced.
    pub ranking: Vec<(TemplateId, f64)>,
    pub caption: String,
    pub caption_ids: Vec<TokenId>,
    /// Length-normalized beam score.
    pub score: f64,
    pub log_prob: f64,
    pub image_variant: usize,
    pub image_path: PathBuf,
    #[serde(skip)]
    pub png: Vec<u8>,
}

/// Sentence to template to caption to image.
///
/// The template is `params.forced_template` if set, otherwise the selector's
/// top choice. The image variant is a uniform draw seeded by `seed`.
pub fn generate_meme(
    sentence: &str,
    pipeline: &MemePipeline,
    params: &DecodeParams,
    seed: u64,
) -> Result<GeneratedMeme, GenerationError> {
    params.validate()?;
    if tokenize(sentence).is_empty() {
        return Err(GenerationError::EmptyInput);
    }
    let (template, probability, ranking) = match params.forced_template {
        Some(t) => {
            if pipeline.catalog.get(t).is_none() {
                return Err(GenerationError::UnknownTemplate {
                    id: t.0,
                    count: pipeline.catalog.len(),
                });
            }
            (t, None, Vec::new())
        }
        None => {
            let ranking = select_template(sentence, &pipeline.selector, &pipeline.catalog)?;
            (ranking[0].0, Some(ranking[0].1), ranking)
        }
    };
    let generator = &pipeline.generator;
    let source = generator.source_tokens(sentence, &pipeline.tagger);
    let memory = generator.encode_meme(template, &source)?;
    let scorer = GeneratorScorer::new(generator, memory);
    let mut decode = *params;
    decode.max_len = decode.max_len.min(generator.config().max_len);
    let best = beam_search(&scorer, &decode)?;
    let caption_ids = best.caption_ids().to_vec();
    let caption = generator
        .vocab()
        .decode(&caption_ids)
        .map_err(crate::models::ModelError::from)?;

    let entry = pipeline.catalog.get(template).expect("template checked above");
    let image_variant = ChaCha8Rng::seed_from_u64(seed).random_range(0..entry.image_paths.len());
    let image = compose_image(entry, &caption, image_variant, &pipeline.font, &pipeline.style)?;
    Ok(GeneratedMeme {
        sentence: sentence.to_string(),
        template,
        template_name: entry.name.clone(),
        probability,
        ranking,
        caption,
        caption_ids,
        score: best.score(decode.alpha),
        log_prob: best.log_prob,
        image_variant,
        image_path: entry.image_paths[image_variant].clone(),
        png: encode_png(&image),
    })
}
