use std::collections::BTreeMap;

use super::CompositorError;

const MAGIC: &[u8; 4] = b"MBF1";
/// Glyph drawn for characters the font does not cover.
pub const FALLBACK: u32 = 0xFFFD;

static EMBEDDED: &[u8] = include_bytes!("../../data/font.mbf");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    advance: u8,
    row_bytes: usize,
    bits: Vec<u8>,
}

impl Glyph {
    pub fn advance(&self) -> u32 {
        self.advance as u32
    }

    /// Whether pixel `(x, y)` of the glyph cell is set. Out-of-cell is unset.
    pub fn pixel(&self, x: u32, y: u32) -> bool {
        if x >= self.advance as u32 {
            return false;
        }
        let i = y as usize * self.row_bytes + x as usize / 8;
        self.bits.get(i).is_some_and(|b| b & (0x80 >> (x % 8)) != 0)
    }
}

/// Fixed-height 1-bit font.
///
/// File layout: `MBF1`, u8 glyph height, then per glyph a little-endian u32
/// codepoint, u8 advance and `height` rows of `ceil(advance / 8)` bytes,
/// most significant bit leftmost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitmapFont {
    height: u32,
    glyphs: BTreeMap<u32, Glyph>,
}

impl BitmapFont {
    pub fn parse(bytes: &[u8]) -> Result<Self, CompositorError> {
        let bad = |m: &str| CompositorError::BadFont(m.to_string());
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(bad("missing MBF1 header"));
        }
        let height = bytes[4] as u32;
        if height == 0 {
            return Err(bad("zero glyph height"));
        }
        let mut glyphs = BTreeMap::new();
        let mut at = 5;
        while at < bytes.len() {
            if at + 5 > bytes.len() {
                return Err(bad("truncated glyph record"));
            }
            let cp = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            let advance = bytes[at + 4];
            at += 5;
            let row_bytes = (advance as usize).div_ceil(8);
            let len = row_bytes * height as usize;
            let bits = bytes
                .get(at..at + len)
                .ok_or_else(|| bad("truncated glyph bitmap"))?
                .to_vec();
            at += len;
            glyphs.insert(
                cp,
                Glyph {
                    advance,
                    row_bytes,
                    bits,
                },
            );
        }
        if !glyphs.contains_key(&FALLBACK) {
            return Err(bad("no fallback glyph"));
        }
        if let Some(cp) = (0x20..0x7f).find(|cp| !glyphs.contains_key(cp)) {
            return Err(bad(&format!("no glyph for {:?}", char::from_u32(cp).unwrap())));
        }
        Ok(Self { height, glyphs })
    }

    /// The font shipped with the crate.
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded font is valid")
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn glyph(&self, c: char) -> &Glyph {
        self.glyphs.get(&(c as u32)).unwrap_or(&self.glyphs[&FALLBACK])
    }

    pub fn text_width(&self, text: &str) -> u32 {
        text.chars().map(|c| self.glyph(c).advance()).sum()
    }

    pub fn max_advance(&self) -> u32 {
        self.glyphs.values().map(Glyph::advance).max().unwrap_or(0)
    }
}
