//! Tiny 5x7 bitmap font for montage captions. Each glyph is seven rows
//! of five bits, most significant bit leftmost. Text rendering is pure
//! pixel writes — deterministic by construction.

use synmap_core::imgproc::ImageU8;

/// Advance per character at scale 1 (5 px glyph + 1 px gap).
pub const CHAR_ADVANCE: u32 = 6;
/// Glyph height at scale 1.
pub const CHAR_HEIGHT: u32 = 7;

/// Unknown characters render as a hollow box, so missing glyph coverage
/// is visible in the output rather than silently blank.
const UNKNOWN: [u8; 7] = [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F];

/// Returns the 7-row bitmap for a character. Lowercase letters map to
/// uppercase; unmapped characters get `None`.
pub fn glyph(c: char) -> Option<[u8; 7]> {
    let rows = match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '#' => [0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A],
        ' ' => [0x00; 7],
        _ => return None,
    };
    Some(rows)
}

/// Pixel width of a rendered string (no trailing gap).
pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        (n * CHAR_ADVANCE - 1) * scale
    }
}

/// Draws text onto an RGB raster; pixels outside the raster are
/// clipped. Returns the x coordinate just past the rendered text.
pub fn draw_text(
    img: &mut ImageU8,
    x: u32,
    y: u32,
    scale: u32,
    text: &str,
    color: (u8, u8, u8),
) -> u32 {
    assert_eq!(img.channels, 3, "captions render onto RGB rasters");
    let px = [color.0, color.1, color.2];
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c).unwrap_or(UNKNOWN);
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..5u32 {
                if bits & (0x10 >> rx) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let (tx, ty) = (cx + rx * scale + sx, y + ry as u32 * scale + sy);
                        if tx < img.width && ty < img.height {
                            img.set_pixel(tx, ty, &px);
                        }
                    }
                }
            }
        }
        cx += CHAR_ADVANCE * scale;
    }
    cx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_alphabet_is_fully_covered() {
        for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-.:# ".chars() {
            assert!(glyph(c).is_some(), "missing glyph {c:?}");
            assert!(glyph(c.to_ascii_lowercase()).is_some());
        }
        assert!(glyph('~').is_none());
    }

    #[test]
    fn glyphs_fit_five_bits() {
        for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-.:# ".chars() {
            for row in glyph(c).unwrap() {
                assert!(row <= 0x1F, "{c:?} row {row:#x} exceeds 5 bits");
            }
        }
    }

    #[test]
    fn text_renders_where_expected() {
        let mut img = ImageU8::filled(40, 12, 3, 255).unwrap();
        let end = draw_text(&mut img, 1, 2, 1, "T.", (0, 0, 0));
        assert_eq!(end, 1 + 2 * CHAR_ADVANCE);
        // 'T': full top row, stem below.
        for rx in 0..5 {
            assert_eq!(img.pixel(1 + rx, 2), &[0, 0, 0]);
        }
        assert_eq!(img.pixel(3, 8), &[0, 0, 0]);
        assert_eq!(img.pixel(1, 8), &[255, 255, 255]);
        // '.' sits in the lower-right of its cell.
        assert_eq!(img.pixel(1 + CHAR_ADVANCE + 2, 2 + 6), &[0, 0, 0]);
        assert_eq!(text_width("T.", 1), 11);
        assert_eq!(text_width("", 3), 0);
    }

    #[test]
    fn drawing_is_deterministic_and_clips() {
        let render = || {
            let mut img = ImageU8::filled(20, 10, 3, 250).unwrap();
            draw_text(&mut img, 14, 4, 2, "88", (10, 20, 30));
            img
        };
        assert_eq!(render(), render());
    }
}
