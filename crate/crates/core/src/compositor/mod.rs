//! Caption rendering onto template images.

mod font;

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgba, RgbaImage};

pub use font::{BitmapFont, Glyph, FALLBACK};

use crate::corpus::{CaptionBox, CatalogEntry, Position};

#[derive(Debug, thiserror::Error)]
pub enum CompositorError {
    #[error("caption box {caption_box:?} does not fit a {width}x{height} image")]
    BoxOutOfBounds {
        caption_box: CaptionBox,
        width: u32,
        height: u32,
    },
    #[error("template {template:?} image {variant}: {reason}")]
    MissingImage {
        template: String,
        variant: usize,
        reason: String,
    },
    #[error("cannot write {path}: {reason}")]
    WriteFailure { path: PathBuf, reason: String },
    #[error("bad font file: {0}")]
    BadFont(String),
}

/// Greedy word wrap. Words wider than `box_width` are broken at the last
/// character that fits; every line holds at least one character.
pub fn wrap_text(caption: &str, font: &BitmapFont, box_width: u32) -> Vec<String> {
    let space = font.glyph(' ').advance();
    let mut lines = Vec::new();
    let mut line = String::new();
    let mut width = 0u32;
    for word in caption.split_whitespace() {
        let w = font.text_width(word);
        if !line.is_empty() && width + space + w <= box_width {
            line.push(' ');
            line.push_str(word);
            width += space + w;
            continue;
        }
        if !line.is_empty() {
            lines.push(std::mem::take(&mut line));
        }
        if w <= box_width {
            line.push_str(word);
            width = w;
            continue;
        }
        // hard break
        width = 0;
        for c in word.chars() {
            let a = font.glyph(c).advance();
            if !line.is_empty() && width + a > box_width {
                lines.push(std::mem::take(&mut line));
                width = 0;
            }
            line.push(c);
            width += a;
        }
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

/// How a caption is drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionStyle {
    pub fill: Rgba<u8>,
    pub outline: Rgba<u8>,
    pub uppercase: bool,
    /// Extra pixels between lines.
    pub line_spacing: u32,
}

impl Default for CaptionStyle {
    fn default() -> Self {
        Self {
            fill: Rgba([255, 255, 255, 255]),
            outline: Rgba([0, 0, 0, 255]),
            uppercase: true,
            line_spacing: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSpec {
    pub text: String,
    pub caption_box: CaptionBox,
    pub position: Position,
    pub style: CaptionStyle,
}

impl RenderSpec {
    pub fn for_entry(entry: &CatalogEntry, text: &str, style: CaptionStyle) -> Self {
        Self {
            text: text.to_string(),
            caption_box: entry.caption_box,
            position: entry.position,
            style,
        }
    }
}

/// Where each line of `spec` lands: `(text, x, y)` in image coordinates.
pub fn layout(spec: &RenderSpec, font: &BitmapFont) -> Vec<(String, u32, u32)> {
    let text = if spec.style.uppercase {
        spec.text.to_uppercase()
    } else {
        spec.text.clone()
    };
    let b = spec.caption_box;
    let lines = wrap_text(&text, font, b.w);
    if lines.is_empty() {
        return Vec::new();
    }
    let pitch = font.height() + spec.style.line_spacing;
    let block = lines.len() as u32 * pitch - spec.style.line_spacing;
    let top = match spec.position {
        Position::Top => b.y,
        Position::Bottom => b.y + b.h.saturating_sub(block),
    };
    lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let x = b.x + b.w.saturating_sub(font.text_width(&line)) / 2;
            (line, x, top + i as u32 * pitch)
        })
        .collect()
}

/// Draws the caption: fill pixels from the glyph bitmaps, a one-pixel
/// outline around them, everything clipped to the caption box.
pub fn render_caption(image: &RgbaImage, spec: &RenderSpec, font: &BitmapFont) -> Result<RgbaImage, CompositorError> {
    let b = spec.caption_box;
    let (iw, ih) = image.dimensions();
    if b.x.checked_add(b.w).is_none_or(|r| r > iw) || b.y.checked_add(b.h).is_none_or(|r| r > ih) {
        return Err(CompositorError::BoxOutOfBounds {
            caption_box: b,
            width: iw,
            height: ih,
        });
    }
    let mut out = image.clone();
    if b.w == 0 || b.h == 0 {
        return Ok(out);
    }
    // fill mask over the box
    let (bw, bh) = (b.w as usize, b.h as usize);
    let mut fill = vec![false; bw * bh];
    for (line, x0, y0) in layout(spec, font) {
        let mut x = x0;
        for c in line.chars() {
            let g = font.glyph(c);
            for gy in 0..font.height() {
                for gx in 0..g.advance() {
                    if !g.pixel(gx, gy) {
                        continue;
                    }
                    let (px, py) = (x + gx, y0 + gy);
                    if (b.x..b.x + b.w).contains(&px) && (b.y..b.y + b.h).contains(&py) {
                        fill[(py - b.y) as usize * bw + (px - b.x) as usize] = true;
                    }
                }
            }
            x += g.advance();
        }
    }
    for ly in 0..bh {
        for lx in 0..bw {
            let color = if fill[ly * bw + lx] {
                spec.style.fill
            } else if neighbors(lx, ly, bw, bh).any(|(nx, ny)| fill[ny * bw + nx]) {
                spec.style.outline
            } else {
                continue;
            };
            out.put_pixel(b.x + lx as u32, b.y + ly as u32, color);
        }
    }
    Ok(out)
}

fn neighbors(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then_some((nx as usize, ny as usize))
        })
}

/// PNG bytes with fixed encoder settings.
pub fn encode_png(image: &RgbaImage) -> Vec<u8> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(Cursor::new(&mut buf), CompressionType::Default, FilterType::Adaptive)
        .write_image(
            image.as_raw(),
            image.width(),
            image.height(),
            image::ExtendedColorType::Rgba8,
        )
        .expect("in-memory PNG encoding");
    buf
}

/// Loads `entry.image_paths[variant]` and renders the caption onto it.
pub fn compose_image(
    entry: &CatalogEntry,
    caption: &str,
    variant: usize,
    font: &BitmapFont,
    style: &CaptionStyle,
) -> Result<RgbaImage, CompositorError> {
    let missing = |reason: String| CompositorError::MissingImage {
        template: entry.name.clone(),
        variant,
        reason,
    };
    let path = entry
        .image_paths
        .get(variant)
        .ok_or_else(|| missing(format!("only {} image(s)", entry.image_paths.len())))?;
    let image = image::open(path)
        .map_err(|e| missing(format!("{}: {e}", path.display())))?
        .to_rgba8();
    render_caption(&image, &RenderSpec::for_entry(entry, caption, style.clone()), font)
}

/// Composes the meme and writes it as PNG; returns the image dimensions.
pub fn compose_meme(
    entry: &CatalogEntry,
    caption: &str,
    variant: usize,
    out_path: &Path,
    font: &BitmapFont,
    style: &CaptionStyle,
) -> Result<(u32, u32), CompositorError> {
    let image = compose_image(entry, caption, variant, font, style)?;
    std::fs::write(out_path, encode_png(&image)).map_err(|e| CompositorError::WriteFailure {
        path: out_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(image.dimensions())
}
