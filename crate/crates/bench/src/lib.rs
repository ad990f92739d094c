//! Fixtures shared by the benchmarks.

use std::path::Path;

use image::{Rgba, RgbaImage};
use memebot_core::corpus::{template_token, CaptionBox, CatalogEntry, Position};
use memebot_core::models::{CaptionGenerator, Variant};
use memebot_core::neural::ModelConfig;
use memebot_core::text::{Vocabulary, RESERVED_TOKENS};

/// Untrained generator with `templates` template tokens and `words` plain
/// words. Weights are random, which is all timing needs.
pub fn generator(config: fn(usize) -> ModelConfig, templates: usize, words: usize) -> CaptionGenerator {
    let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend((0..templates).map(|t| template_token(&format!("bench {t}"))));
    tokens.extend((0..words).map(|i| format!("w{i}")));
    let vocab = Vocabulary::from_tokens(tokens, templates).expect("distinct tokens");
    let mut cfg = config(vocab.len());
    cfg.dropout = 0.0;
    CaptionGenerator::new(Variant::Smt2mc, true, cfg, vocab, 17).expect("valid config")
}

/// Catalog entry backed by a `width`x`height` gradient written under `dir`.
pub fn entry(dir: &Path, width: u32, height: u32) -> CatalogEntry {
    let path = dir.join("bench.png");
    RgbaImage::from_fn(width, height, |x, y| Rgba([(x % 256) as u8, (y % 256) as u8, 128, 255]))
        .save(&path)
        .expect("temp dir writable");
    CatalogEntry {
        name: "Bench".into(),
        token: template_token("Bench"),
        image_paths: vec![path],
        caption_box: CaptionBox {
            x: width / 20,
            y: height / 20,
            w: width * 9 / 10,
            h: height / 3,
        },
        position: Position::Top,
    }
}
