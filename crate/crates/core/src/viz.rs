//! SVG arrow fields and PPM renderings of hardened transforms on a grid.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Result};
use crate::transform::{apply_hard, HardTransforms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 5] = [Self::Stay, Self::Up, Self::Down, Self::Left, Self::Right];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stay => "self",
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
        }
    }

    fn offset(self) -> (f64, f64) {
        match self {
            Self::Stay => (0.0, 0.0),
            Self::Up => (-1.0, 0.0),
            Self::Down => (1.0, 0.0),
            Self::Left => (0.0, -1.0),
            Self::Right => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowField {
    pub height: usize,
    pub width: usize,
    pub directions: Vec<Direction>,
    pub majority: Direction,
}

impl ArrowField {
    /// Fails if `slice` does not cover the grid or moves a vertex further than
    /// one of its four neighbors.
    pub fn new(slice: &[usize], height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        if height == 0 || width == 0 || slice.len() != n {
            return Err(invalid(format!(
                "transform has {} vertices, grid {height}x{width} has {n}",
                slice.len()
            )));
        }
        let directions = slice
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                let (r, c) = (i / width, i % width);
                let (tr, tc) = (j / width, j % width);
                match (tr as isize - r as isize, tc as isize - c as isize) {
                    _ if j >= n => Err(invalid(format!("target {j} outside the grid"))),
                    (0, 0) => Ok(Direction::Stay),
                    (-1, 0) => Ok(Direction::Up),
                    (1, 0) => Ok(Direction::Down),
                    (0, -1) => Ok(Direction::Left),
                    (0, 1) => Ok(Direction::Right),
                    _ => Err(invalid(format!("vertex {i} maps to non-neighbor {j}"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let count = |d: Direction| directions.iter().filter(|&&x| x == d).count();
        let mut majority = Direction::Stay;
        for d in Direction::ALL {
            if count(d) > count(majority) {
                majority = d;
            }
        }
        Ok(Self {
            height,
            width,
            directions,
            majority,
        })
    }

    pub fn count(&self, d: Direction) -> usize {
        self.directions.iter().filter(|&&x| x == d).count()
    }
}

const CELL: f64 = 20.0;

/// Standalone SVG 1.1 document: an arrow per moved vertex, a dot per fixed
/// vertex, majority-direction glyphs drawn in red.
pub fn arrow_field_svg(slice: &[usize], height: usize, width: usize) -> Result<String> {
    let field = ArrowField::new(slice, height, width)?;
    let (w, h) = (width as f64 * CELL, height as f64 * CELL);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<title>arrow field, majority {}</title>"#, field.majority.name());
    let _ = writeln!(
        svg,
        r##"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#444444"/></marker></defs>"##
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (i, &d) in field.directions.iter().enumerate() {
        let cx = (i % width) as f64 * CELL + CELL / 2.0;
        let cy = (i / width) as f64 * CELL + CELL / 2.0;
        let color = if d == field.majority { "#d62728" } else { "#444444" };
        let class = if d == field.majority { "majority" } else { "other" };
        if d == Direction::Stay {
            let _ = writeln!(
                svg,
                r#"<circle class="dot {class}" cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#
            );
        } else {
            let (dy, dx) = d.offset();
            let len = CELL * 0.7;
            let (x1, y1) = (cx - dx * len / 2.0, cy - dy * len / 2.0);
            let (x2, y2) = (cx + dx * len / 2.0, cy + dy * len / 2.0);
            let _ = writeln!(
                svg,
                r#"<line class="arrow {class} {}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{color}" stroke-width="1.5" marker-end="url(#head)"/>"#,
                d.name()
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Applies slice `k` to an `N x 3` RGB signal and writes a binary P6 image.
/// Collisions are summed, then clamped to `[0, 1]`.
pub fn translated_image_ppm(
    hard: &HardTransforms,
    k: usize,
    image: ArrayView2<'_, f64>,
    height: usize,
    width: usize,
) -> Result<Vec<u8>> {
    if height == 0 || width == 0 || height * width != hard.n() {
        return Err(invalid(format!(
            "grid {height}x{width} does not match {} vertices",
            hard.n()
        )));
    }
    if image.ncols() != 3 {
        return Err(invalid(format!("image must have 3 channels, got {}", image.ncols())));
    }
    let moved = apply_hard(hard, k, image)?;
    Ok(ppm_bytes(&moved, height, width))
}

/// P6 encoding of an `N x 3` signal with values clamped to `[0, 1]`.
pub fn ppm_bytes(image: &Array2<f64>, height: usize, width: usize) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(image.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Parses a binary P6 image with maxval at most 255 into an `N x 3` signal
/// in `[0, 1]`, returning `(signal, height, width)`.
pub fn read_ppm(bytes: &[u8]) -> Result<(Array2<f64>, usize, usize)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated PPM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(invalid(format!("expected a binary P6 image, found magic {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| invalid(format!("bad PPM {what} {s:?}")))
    };
    let (width, height, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
        return Err(invalid(format!("unsupported PPM {width}x{height} with maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * 3;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| invalid(format!("PPM raster holds {} of {need} bytes", bytes.len().saturating_sub(pos))))?;
    let image = Array2::from_shape_fn((width * height, 3), |(v, c)| {
        f64::from(raster[v * 3 + c]) / maxval as f64
    });
    Ok((image, height, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::canonical_transforms;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parse(svg: &str) -> usize {
        let doc = roxmltree::Document::parse(svg).expect("well-formed XML");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        doc.descendants().filter(|n| n.is_element()).count()
    }

    #[test]
    fn right_on_4x4() {
        let right = &canonical_transforms(4, 4).unwrap()[4].target;
        let f = ArrowField::new(right, 4, 4).unwrap();
        assert_eq!(f.count(Direction::Right), 12);
        assert_eq!(f.count(Direction::Stay), 4);
        assert_eq!(f.majority, Direction::Right);
        let svg = arrow_field_svg(right, 4, 4).unwrap();
        parse(&svg);
        assert_eq!(svg.matches("<line class=\"arrow majority right\"").count(), 12);
        assert_eq!(svg.matches("<circle class=\"dot other\"").count(), 4);
    }

    #[test]
    fn identity_is_all_dots() {
        let id: Vec<usize> = (0..9).collect();
        let f = ArrowField::new(&id, 3, 3).unwrap();
        assert_eq!(f.majority, Direction::Stay);
        let svg = arrow_field_svg(&id, 3, 3).unwrap();
        assert_eq!(svg.matches("<circle").count(), 9);
        assert_eq!(svg.matches("<line").count(), 0);
    }

    #[test]
    fn ties_prefer_earlier_direction() {
        // 2x2: two up, two left.
        let t = vec![0, 0, 0, 2];
        let f = ArrowField::new(&t, 2, 2).unwrap();
        assert_eq!(f.count(Direction::Stay), 1);
        let t = vec![0, 0, 0, 1];
        let f = ArrowField::new(&t, 2, 2).unwrap();
        assert_eq!((f.count(Direction::Up), f.count(Direction::Left)), (2, 1));
        assert_eq!(f.majority, Direction::Up);
        let t = vec![1, 0, 3, 2];
        assert_eq!(ArrowField::new(&t, 2, 2).unwrap().majority, Direction::Left);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(arrow_field_svg(&[0, 1, 2], 2, 2).is_err());
        assert!(arrow_field_svg(&[3, 1, 2, 3], 2, 2).is_err());
        let hard = HardTransforms::new(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let img = Array2::zeros((4, 3));
        assert!(translated_image_ppm(&hard, 0, img.view(), 3, 1).is_err());
    }

    #[test]
    fn random_edge_constrained_fields_are_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (h, w) in [(2, 2), (7, 5), (64, 64)] {
            let canon = canonical_transforms(h, w).unwrap();
            let t: Vec<usize> = (0..h * w).map(|i| canon[rng.random_range(0..5)].target[i]).collect();
            let svg = arrow_field_svg(&t, h, w).unwrap();
            assert_eq!(parse(&svg), h * w + 6);
        }
    }

    #[test]
    fn ppm_moves_and_clamps() {
        let right = canonical_transforms(2, 3).unwrap()[4].target.clone();
        let hard = HardTransforms::new(6, vec![right, vec![1, 1, 2, 3, 4, 5]]).unwrap();
        let mut img = Array2::zeros((6, 3));
        img.row_mut(0).fill(1.0);
        let bytes = translated_image_ppm(&hard, 0, img.view(), 2, 3).unwrap();
        let header = b"P6\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px.len(), 18);
        assert_eq!(&px[0..6], &[0, 0, 0, 255, 255, 255]);
        img.row_mut(1).fill(0.8);
        let px = translated_image_ppm(&hard, 1, img.view(), 2, 3).unwrap()[header.len()..].to_vec();
        assert_eq!(&px[0..6], &[0, 0, 0, 255, 255, 255]);
        assert!(px[6..].iter().all(|&b| b == 0));
    }

    #[test]
    fn ppm_reader_inverts_writer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Array2::from_shape_fn((6, 3), |_| f64::from(rng.random_range(0u8..=255)) / 255.0);
        let bytes = ppm_bytes(&img, 2, 3);
        let (back, h, w) = read_ppm(&bytes).unwrap();
        assert_eq!((h, w), (2, 3));
        assert!(back.iter().zip(img.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let commented = b"P6\n# made by hand\n1 1\n255\n\x00\x80\xff";
        let (px, _, _) = read_ppm(commented).unwrap();
        assert_eq!(px[[0, 2]], 1.0);
        assert!(read_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(read_ppm(b"P6\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn identity_round_trips_within_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Array2::from_shape_fn((12, 3), |_| rng.random::<f64>());
        let hard = HardTransforms::new(12, vec![(0..12).collect()]).unwrap();
        let px = translated_image_ppm(&hard, 0, img.view(), 3, 4).unwrap();
        let px = &px[px.len() - 36..];
        for (b, v) in px.iter().zip(img.iter()) {
            assert!((*b as f64 / 255.0 - v).abs() <= 1.0 / 255.0);
        }
    }
}
