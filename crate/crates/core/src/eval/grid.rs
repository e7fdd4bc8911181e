//! Composite comparison grids with row and column labels.
//!
//! Layout for `rows x cols` tiles of `h x w` with gutter `g`:
//!
//! ```text
//! width  = left + cols * w + (cols + 1) * g
//! height = top  + rows * h + (rows + 1) * g
//! tile (i, j) origin = (top + g + i * (h + g), left + g + j * (w + g))
//! ```
//!
//! `top` is the label band plus the marker bar; `left` fits the longest row
//! label. Tiles are copied without resampling.

use crate::error::{Error, Result};
use crate::image::Image;

pub const GLYPH_W: usize = 3;
pub const GLYPH_H: usize = 5;
const GLYPH_ADVANCE: usize = GLYPH_W + 1;
const LABEL_PAD: usize = 2;
pub const MARKER_H: usize = 2;
const BACKGROUND: [f64; 3] = [1.0, 1.0, 1.0];
const INK: [f64; 3] = [0.0, 0.0, 0.0];
const MARKER: [f64; 3] = [1.0, 0.85, 0.0];

/// Rows of a 3x5 glyph, most significant bit leftmost. Unknown characters
/// render as a filled box.
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c.to_ascii_lowercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 3, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'a' => [2, 5, 7, 5, 5],
        'b' => [6, 5, 6, 5, 6],
        'c' => [3, 4, 4, 4, 3],
        'd' => [6, 5, 5, 5, 6],
        'e' => [7, 4, 6, 4, 7],
        'f' => [7, 4, 6, 4, 4],
        'g' => [3, 4, 5, 5, 3],
        'h' => [5, 5, 7, 5, 5],
        'i' => [7, 2, 2, 2, 7],
        'j' => [1, 1, 1, 5, 2],
        'k' => [5, 5, 6, 5, 5],
        'l' => [4, 4, 4, 4, 7],
        'm' => [5, 7, 7, 5, 5],
        'n' => [6, 5, 5, 5, 5],
        'o' => [2, 5, 5, 5, 2],
        'p' => [6, 5, 6, 4, 4],
        'q' => [2, 5, 5, 7, 3],
        'r' => [6, 5, 6, 5, 5],
        's' => [3, 4, 2, 1, 6],
        't' => [7, 2, 2, 2, 2],
        'u' => [5, 5, 5, 5, 7],
        'v' => [5, 5, 5, 5, 2],
        'w' => [5, 5, 7, 7, 5],
        'x' => [5, 5, 2, 5, 5],
        'y' => [5, 5, 2, 2, 2],
        'z' => [7, 1, 2, 4, 7],
        ' ' => [0; GLYPH_H],
        '-' => [0, 0, 7, 0, 0],
        '_' => [0, 0, 0, 0, 7],
        '.' => [0, 0, 0, 0, 2],
        ':' => [0, 2, 0, 2, 0],
        '=' => [0, 7, 0, 7, 0],
        '/' => [1, 1, 2, 4, 4],
        _ => [7; GLYPH_H],
    }
}

pub fn text_width(text: &str) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        n * GLYPH_ADVANCE - 1
    }
}

fn put(img: &mut Image, y: usize, x: usize, rgb: [f64; 3]) {
    if y < img.height() && x < img.width() {
        for (c, v) in rgb.iter().enumerate().take(img.channels()) {
            img.set(y, x, c, *v);
        }
    }
}

/// Draws `text` with its top-left corner at `(y, x)`, clipped to `max_w`.
fn draw_text(img: &mut Image, y: usize, x: usize, text: &str, max_w: usize) {
    for (k, ch) in text.chars().enumerate() {
        let rows = glyph(ch);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                let px = k * GLYPH_ADVANCE + dx;
                if px < max_w && bits & (1 << (GLYPH_W - 1 - dx)) != 0 {
                    put(img, y + dy, x + px, INK);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridLabels {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Column indices holding training views; marked with a bar.
    pub train_cols: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub tile: (usize, usize),
    pub gutter: usize,
    pub top: usize,
    pub left: usize,
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, tile: (usize, usize), gutter: usize, labels: &GridLabels) -> Self {
        let row_label = labels.rows.iter().map(|l| text_width(l)).max().unwrap_or(0);
        Self {
            rows,
            cols,
            tile,
            gutter,
            top: GLYPH_H + 2 * LABEL_PAD + MARKER_H,
            left: if row_label > 0 { row_label + 2 * LABEL_PAD } else { 0 },
        }
    }

    pub fn size(&self) -> (usize, usize) {
        let (h, w) = self.tile;
        (
            self.top + self.rows * h + (self.rows + 1) * self.gutter,
            self.left + self.cols * w + (self.cols + 1) * self.gutter,
        )
    }

    pub fn origin(&self, i: usize, j: usize) -> (usize, usize) {
        let (h, w) = self.tile;
        (
            self.top + self.gutter + i * (h + self.gutter),
            self.left + self.gutter + j * (w + self.gutter),
        )
    }
}

/// Lays `images[i][j]` out on a white canvas. Every row must have the same
/// length and every tile the same shape.
pub fn render_grid(images: &[Vec<Image>], labels: &GridLabels, gutter: usize) -> Result<Image> {
    let cols = images.first().map_or(0, Vec::len);
    if images.is_empty() || cols == 0 {
        return Err(Error::Data("grid needs at least one tile".into()));
    }
    for (row, r) in images.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::RaggedGrid {
                row,
                got: r.len(),
                expected: cols,
            });
        }
    }
    let first = &images[0][0];
    for img in images.iter().flatten() {
        if img.shape() != first.shape() {
            return Err(Error::ShapeMismatch {
                a: first.shape(),
                b: img.shape(),
            });
        }
    }
    if let Some(&j) = labels.train_cols.iter().find(|&&j| j >= cols) {
        return Err(Error::Data(format!("train column {j} outside a {cols}-column grid")));
    }

    let layout = GridLayout::new(images.len(), cols, (first.height(), first.width()), gutter, labels);
    let (gh, gw) = layout.size();
    let mut out = Image::from_fn(gh, gw, 3, |_, _, c| BACKGROUND[c]);
    for (i, row) in images.iter().enumerate() {
        for (j, tile) in row.iter().enumerate() {
            let (oy, ox) = layout.origin(i, j);
            for y in 0..tile.height() {
                for x in 0..tile.width() {
                    for c in 0..3 {
                        let v = tile.get(y, x, c.min(tile.channels() - 1));
                        out.set(oy + y, ox + x, c, v);
                    }
                }
            }
        }
    }
    for (j, label) in labels.cols.iter().enumerate().take(cols) {
        let (_, ox) = layout.origin(0, j);
        draw_text(&mut out, LABEL_PAD, ox, label, layout.tile.1 + gutter);
    }
    for &j in &labels.train_cols {
        let (_, ox) = layout.origin(0, j);
        for y in 0..MARKER_H {
            for x in 0..layout.tile.1 {
                put(&mut out, layout.top - MARKER_H + y, ox + x, MARKER);
            }
        }
    }
    for (i, label) in labels.rows.iter().enumerate().take(images.len()) {
        let (oy, _) = layout.origin(i, 0);
        draw_text(&mut out, oy, LABEL_PAD, label, layout.left.saturating_sub(LABEL_PAD));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(seed: usize) -> Image {
        Image::from_fn(16, 16, 3, |y, x, c| ((seed * 31 + y * 7 + x * 3 + c) % 17) as f64 / 16.0)
    }

    #[test]
    fn one_by_one_adds_margins_only() {
        let g = render_grid(&[vec![tile(0)]], &GridLabels::default(), 0).unwrap();
        assert_eq!((g.height(), g.width()), (16 + GLYPH_H + 2 * LABEL_PAD + MARKER_H, 16));
    }

    #[test]
    fn layout_formula_and_exact_tiles() {
        let labels = GridLabels {
            rows: vec!["gt".into(), "ours".into()],
            cols: vec!["v1".into(), "v8".into(), "v12".into()],
            train_cols: vec![1],
        };
        let images: Vec<Vec<Image>> = (0..2).map(|i| (0..3).map(|j| tile(i * 3 + j)).collect()).collect();
        let g = render_grid(&images, &labels, 2).unwrap();
        let left = text_width("ours") + 2 * LABEL_PAD;
        let top = GLYPH_H + 2 * LABEL_PAD + MARKER_H;
        assert_eq!((g.height(), g.width()), (top + 2 * 16 + 3 * 2, left + 3 * 16 + 4 * 2));
        let layout = GridLayout::new(2, 3, (16, 16), 2, &labels);
        for (i, row) in images.iter().enumerate() {
            for (j, t) in row.iter().enumerate() {
                let (oy, ox) = layout.origin(i, j);
                for y in 0..16 {
                    for x in 0..16 {
                        for c in 0..3 {
                            assert_eq!(g.get(oy + y, ox + x, c), t.get(y, x, c));
                        }
                    }
                }
            }
        }
        let (_, ox) = layout.origin(0, 1);
        assert_eq!(g.get(top - 1, ox, 0), MARKER[0]);
        assert_eq!(g.get(top - 1, ox, 2), MARKER[2]);
    }

    #[test]
    fn ragged_grid_errors() {
        let err = render_grid(&[vec![tile(0), tile(1)], vec![tile(2)]], &GridLabels::default(), 1).unwrap_err();
        assert!(matches!(err, Error::RaggedGrid { row: 1, got: 1, expected: 2 }));
    }
}
