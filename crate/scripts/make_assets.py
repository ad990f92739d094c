"""Regenerates the embedded bitmap font and the synthetic template images.

Outputs are committed; rerunning is only needed when changing the assets.
"""
import json
import struct
import sys
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

ROOT = Path(__file__).resolve().parent.parent
FONT_TTF = "/usr/share/fonts/truetype/dejavu/DejaVuSans-Bold.ttf"
FONT_PX = 14


def make_font(out: Path) -> None:
    font = ImageFont.truetype(FONT_TTF, FONT_PX)
    ascent, descent = font.getmetrics()
    height = ascent + descent
    records = bytearray()
    for cp in list(range(32, 127)) + [0xFFFD]:
        ch = chr(cp) if cp != 0xFFFD else "?"
        advance = int(round(font.getlength(ch))) + 1
        img = Image.new("L", (advance, height), 0)
        ImageDraw.Draw(img).text((0, 0), ch, font=font, fill=255)
        row_bytes = (advance + 7) // 8
        records += struct.pack("<IB", cp, advance)
        for y in range(height):
            bits = bytearray(row_bytes)
            for x in range(advance):
                if img.getpixel((x, y)) >= 128:
                    bits[x // 8] |= 0x80 >> (x % 8)
            records += bits
    out.write_bytes(b"MBF1" + struct.pack("<B", height) + bytes(records))


def make_images(catalog_path: Path, image_dir: Path) -> None:
    catalog = json.loads(catalog_path.read_text())
    for idx, entry in enumerate(catalog["templates"]):
        for variant, rel in enumerate(entry["images"]):
            hue = (idx * 37 + variant * 11) % 256
            img = Image.new("RGB", (320, 320))
            draw = ImageDraw.Draw(img)
            for y in range(320):
                shade = int(60 + 120 * y / 319)
                draw.line([(0, y), (319, y)], fill=((hue + shade) % 256, (shade * 2 + idx * 9) % 256, (255 - shade + variant * 40) % 256))
            draw.ellipse([100 + variant * 20, 110, 220 + variant * 20, 230], fill=((hue * 3) % 256, 200, 120))
            path = catalog_path.parent / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            img.save(path, optimize=True)


if __name__ == "__main__":
    make_font(ROOT / "crates/core/data/font.mbf")
    if len(sys.argv) > 1:
        make_images(Path(sys.argv[1]), ROOT / "data/images")
