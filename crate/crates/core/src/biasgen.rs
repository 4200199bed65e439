//! Synthetic artifact insertion: black frames, ruler marks and red circles.
//!
//! Frames are deterministic. Rulers and circles draw their geometry from a
//! ChaCha8 stream keyed by `SHA-256("gebi-bias" || seed_le64 || sample_id)`,
//! so output depends only on `(image, spec, sample_id)` on every platform.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::RgbImage;

const BLACK: [f32; 3] = [0.0, 0.0, 0.0];
const RED: [f32; 3] = [1.0, 0.0, 0.0];

#[derive(Debug, Error, PartialEq)]
pub enum BiasError {
    #[error("invalid bias spec: {0}")]
    InvalidSpec(String),
    #[error("frame thickness {thickness}px leaves no interior in a {width}x{height} image")]
    NoInterior {
        thickness: usize,
        width: usize,
        height: usize,
    },
    #[error("unknown bias kind `{0}` (expected black_frame, ruler, red_circle or none)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    BlackFrame,
    Ruler,
    RedCircle,
    None,
}

impl BiasKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasKind::BlackFrame => "black_frame",
            BiasKind::Ruler => "ruler",
            BiasKind::RedCircle => "red_circle",
            BiasKind::None => "none",
        }
    }

    /// Row title used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            BiasKind::BlackFrame => "Frame",
            BiasKind::Ruler => "Ruler",
            BiasKind::RedCircle => "Red circle",
            BiasKind::None => "None",
        }
    }
}

impl fmt::Display for BiasKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BiasKind {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "black_frame" => Ok(BiasKind::BlackFrame),
            "ruler" => Ok(BiasKind::Ruler),
            "red_circle" => Ok(BiasKind::RedCircle),
            "none" => Ok(BiasKind::None),
            other => Err(BiasError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameShape {
    #[default]
    Rect,
    Round,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub seed: u64,
    pub frame_thickness_frac: f64,
    pub frame_shape: FrameShape,
    /// Multiplier range applied to ruler tick spacing and tick length.
    pub ruler_scale_range: [f64; 2],
    pub circle_radius_frac_range: [f64; 2],
}

impl Default for BiasSpec {
    fn default() -> Self {
        Self {
            kind: BiasKind::None,
            seed: 0,
            frame_thickness_frac: 0.08,
            frame_shape: FrameShape::Rect,
            ruler_scale_range: [0.8, 1.2],
            circle_radius_frac_range: [0.03, 0.08],
        }
    }
}

impl BiasSpec {
    pub fn new(kind: BiasKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), BiasError> {
        let frac_ok = |v: f64| v > 0.0 && v < 0.5;
        if !frac_ok(self.frame_thickness_frac) {
            return Err(BiasError::InvalidSpec(format!(
                "frame_thickness_frac {} not in (0, 0.5)",
                self.frame_thickness_frac
            )));
        }
        let [lo, hi] = self.circle_radius_frac_range;
        if !(frac_ok(lo) && frac_ok(hi) && lo <= hi) {
            return Err(BiasError::InvalidSpec(format!(
                "circle_radius_frac_range [{lo}, {hi}] must be ordered within (0, 0.5)"
            )));
        }
        let [lo, hi] = self.ruler_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(BiasError::InvalidSpec(format!(
                "ruler_scale_range [{lo}, {hi}] must be ordered and positive"
            )));
        }
        Ok(())
    }
}

/// RNG stream for one sample under one spec seed.
pub fn keyed_rng(seed: u64, sample_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"gebi-bias");
    h.update(seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Border thickness in pixels: `ceil(frac * min(W, H))`, at least 1.
pub fn frame_thickness(width: usize, height: usize, frac: f64) -> usize {
    let raw = frac * width.min(height) as f64;
    ((raw - 1e-9).ceil() as usize).max(1)
}

pub fn insert_black_frame(image: &RgbImage, spec: &BiasSpec) -> Result<RgbImage, BiasError> {
    spec.validate()?;
    let (w, h) = (image.width(), image.height());
    let t = frame_thickness(w, h, spec.frame_thickness_frac);
    if 2 * t >= w.min(h) {
        return Err(BiasError::NoInterior {
            thickness: t,
            width: w,
            height: h,
        });
    }
    let mut out = image.clone();
    match spec.frame_shape {
        FrameShape::Rect => {
            for y in 0..h {
                for x in 0..w {
                    if x < t || y < t || x >= w - t || y >= h - t {
                        out.set(x, y, BLACK);
                    }
                }
            }
        }
        FrameShape::Round => {
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            let (a, b) = (cx - t as f64, cy - t as f64);
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 + 0.5 - cx) / a;
                    let dy = (y as f64 + 0.5 - cy) / b;
                    if dx * dx + dy * dy > 1.0 {
                        out.set(x, y, BLACK);
                    }
                }
            }
        }
    }
    Ok(out)
}

type Point = (f64, f64);

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Paints every pixel whose centre lies within `half` of segment `a-b`.
fn stroke_segment(img: &mut RgbImage, a: Point, b: Point, half: f64, rgb: [f32; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (a.0.min(b.0) - half - 1.0).floor().max(0.0) as usize;
    let x1 = (a.0.max(b.0) + half + 1.0).ceil().min(w) as usize;
    let y0 = (a.1.min(b.1) - half - 1.0).floor().max(0.0) as usize;
    let y1 = (a.1.max(b.1) + half + 1.0).ceil().min(h) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b) <= half {
                img.set(x, y, rgb);
            }
        }
    }
}

fn stroke_width(width: usize) -> f64 {
    (width as f64 / 128.0).max(1.0)
}

/// Geometry of one procedural ruler, in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RulerGeometry {
    pub start: Point,
    pub end: Point,
    pub ticks: Vec<(Point, Point)>,
    pub stroke: f64,
}

pub fn ruler_geometry(width: usize, height: usize, spec: &BiasSpec, sample_id: &str) -> RulerGeometry {
    let mut rng = keyed_rng(spec.seed, sample_id);
    let (w, h) = (width as f64, height as f64);
    let length = rng.random_range(0.4..=0.6) * w;
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let cx = rng.random_range(0.1 * w..=0.9 * w);
    let cy = rng.random_range(0.1 * h..=0.9 * h);
    let [slo, shi] = spec.ruler_scale_range;
    let scale = if shi > slo { rng.random_range(slo..=shi) } else { slo };

    let (dx, dy) = (angle.cos(), angle.sin());
    let (nx, ny) = (-dy, dx);
    let start = (cx - dx * length / 2.0, cy - dy * length / 2.0);
    let end = (cx + dx * length / 2.0, cy + dy * length / 2.0);
    let spacing = 0.03 * w * scale;
    let tick_len = 0.02 * h * scale;
    let mut ticks = Vec::new();
    let mut s = 0.0;
    while s <= length + 1e-9 {
        let base = (start.0 + dx * s, start.1 + dy * s);
        ticks.push((base, (base.0 + nx * tick_len, base.1 + ny * tick_len)));
        s += spacing;
    }
    RulerGeometry {
        start,
        end,
        ticks,
        stroke: stroke_width(width),
    }
}

pub fn insert_ruler(image: &RgbImage, spec: &BiasSpec, sample_id: &str) -> Result<RgbImage, BiasError> {
    spec.validate()?;
    let geo = ruler_geometry(image.width(), image.height(), spec, sample_id);
    let mut out = image.clone();
    let half = geo.stroke / 2.0;
    stroke_segment(&mut out, geo.start, geo.end, half, BLACK);
    for &(a, b) in &geo.ticks {
        stroke_segment(&mut out, a, b, half, BLACK);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleGeometry {
    pub center: Point,
    pub radius: f64,
    pub stroke: f64,
}

pub fn circle_geometry(width: usize, height: usize, spec: &BiasSpec, sample_id: &str) -> CircleGeometry {
    let mut rng = keyed_rng(spec.seed, sample_id);
    let [lo, hi] = spec.circle_radius_frac_range;
    let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let radius = frac * width.min(height) as f64;
    let center = (
        rng.random_range(0.0..width as f64),
        rng.random_range(0.0..height as f64),
    );
    CircleGeometry {
        center,
        radius,
        stroke: stroke_width(width),
    }
}

/// One red outline circle, clipped at the image border.
pub fn insert_red_circle(image: &RgbImage, spec: &BiasSpec, sample_id: &str) -> Result<RgbImage, BiasError> {
    spec.validate()?;
    let (w, h) = (image.width(), image.height());
    let c = circle_geometry(w, h, spec, sample_id);
    let half = c.stroke / 2.0;
    let reach = c.radius + half + 1.0;
    let x0 = (c.center.0 - reach).floor().max(0.0) as usize;
    let x1 = ((c.center.0 + reach).ceil() as usize).min(w);
    let y0 = (c.center.1 - reach).floor().max(0.0) as usize;
    let y1 = ((c.center.1 + reach).ceil() as usize).min(h);
    let mut out = image.clone();
    for y in y0..y1 {
        for x in x0..x1 {
            let d = ((x as f64 + 0.5 - c.center.0).powi(2) + (y as f64 + 0.5 - c.center.1).powi(2)).sqrt();
            if (d - c.radius).abs() <= half {
                out.set(x, y, RED);
            }
        }
    }
    Ok(out)
}

pub fn apply_bias(image: &RgbImage, spec: &BiasSpec, sample_id: &str) -> Result<RgbImage, BiasError> {
    match spec.kind {
        BiasKind::BlackFrame => insert_black_frame(image, spec),
        BiasKind::Ruler => insert_ruler(image, spec, sample_id),
        BiasKind::RedCircle => insert_red_circle(image, spec, sample_id),
        BiasKind::None => {
            spec.validate()?;
            Ok(image.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn white(w: usize, h: usize) -> RgbImage {
        RgbImage::filled(w, h, [1.0, 1.0, 1.0])
    }

    fn random_image(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    fn changed(a: &RgbImage, b: &RgbImage) -> usize {
        (0..a.height())
            .flat_map(|y| (0..a.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| a.get(x, y) != b.get(x, y))
            .count()
    }

    #[test]
    fn rect_frame_on_white_100() {
        let img = white(100, 100);
        let out = insert_black_frame(&img, &BiasSpec::new(BiasKind::BlackFrame, 0)).unwrap();
        // Direct scan: every pixel with border distance < 8 is black.
        let mut black = 0;
        for y in 0..100 {
            for x in 0..100 {
                let border = x.min(y).min(99 - x).min(99 - y);
                let px = out.get(x, y);
                if border < 8 {
                    assert_eq!(px, BLACK);
                    black += 1;
                } else {
                    assert_eq!(px, [1.0, 1.0, 1.0]);
                }
            }
        }
        assert_eq!(black, 2944);
        assert_eq!(changed(&img, &out), 2944);
    }

    #[test]
    fn tiny_frac_gives_one_pixel_ring() {
        let img = white(50, 40);
        let spec = BiasSpec {
            kind: BiasKind::BlackFrame,
            frame_thickness_frac: 1e-4,
            ..Default::default()
        };
        let out = insert_black_frame(&img, &spec).unwrap();
        assert_eq!(changed(&img, &out), 50 * 40 - 48 * 38);
    }

    #[test]
    fn frame_is_idempotent() {
        let img = random_image(1, 64, 48);
        for shape in [FrameShape::Rect, FrameShape::Round] {
            let spec = BiasSpec {
                kind: BiasKind::BlackFrame,
                frame_shape: shape,
                ..Default::default()
            };
            let once = insert_black_frame(&img, &spec).unwrap();
            assert_eq!(insert_black_frame(&once, &spec).unwrap(), once);
        }
    }

    #[test]
    fn frame_needs_interior() {
        let spec = BiasSpec {
            kind: BiasKind::BlackFrame,
            frame_thickness_frac: 0.49,
            ..Default::default()
        };
        assert!(matches!(
            insert_black_frame(&white(10, 10), &spec),
            Err(BiasError::NoInterior { .. })
        ));
    }

    #[test]
    fn round_frame_keeps_inscribed_ellipse() {
        let img = random_image(4, 80, 60);
        let spec = BiasSpec {
            kind: BiasKind::BlackFrame,
            frame_shape: FrameShape::Round,
            ..Default::default()
        };
        let out = insert_black_frame(&img, &spec).unwrap();
        let t = frame_thickness(80, 60, 0.08) as f64;
        let (a, b) = (40.0 - t, 30.0 - t);
        for y in 0..60 {
            for x in 0..80 {
                let dx = (x as f64 + 0.5 - 40.0) / a;
                let dy = (y as f64 + 0.5 - 30.0) / b;
                if dx * dx + dy * dy <= 1.0 {
                    assert_eq!(out.get(x, y), img.get(x, y));
                } else {
                    assert_eq!(out.get(x, y), BLACK);
                }
            }
        }
        // Corners go black well beyond the rectangular ring.
        assert_eq!(out.get(10, 10), BLACK);
    }

    #[test]
    fn ruler_keyed_determinism() {
        let img = white(100, 100);
        let spec = BiasSpec::new(BiasKind::Ruler, 7);
        let a = insert_ruler(&img, &spec, "ISIC_0001").unwrap();
        let b = insert_ruler(&img, &spec, "ISIC_0001").unwrap();
        assert_eq!(a, b);
        let others: Vec<RgbImage> = (0..10)
            .map(|i| insert_ruler(&img, &spec, &format!("s{i}")).unwrap())
            .collect();
        for i in 0..10 {
            for j in (i + 1)..10 {
                assert_ne!(others[i], others[j], "ids s{i} and s{j} rendered identically");
            }
        }
    }

    #[test]
    fn ruler_blackened_fraction_is_small() {
        let img = white(100, 100);
        for seed in 0..50 {
            let out = insert_ruler(&img, &BiasSpec::new(BiasKind::Ruler, seed), "x").unwrap();
            let frac = changed(&img, &out) as f64 / 10_000.0;
            assert!(frac > 0.0 && frac < 0.1, "seed {seed}: {frac}");
            assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn ruler_geometry_ranges() {
        for i in 0..100 {
            let g = ruler_geometry(200, 100, &BiasSpec::new(BiasKind::Ruler, i), "id");
            let len = ((g.end.0 - g.start.0).powi(2) + (g.end.1 - g.start.1).powi(2)).sqrt();
            assert!((80.0 - 1e-9..=120.0 + 1e-9).contains(&len));
            let mid = ((g.start.0 + g.end.0) / 2.0, (g.start.1 + g.end.1) / 2.0);
            assert!((20.0 - 1e-9..=180.0 + 1e-9).contains(&mid.0));
            assert!((10.0 - 1e-9..=90.0 + 1e-9).contains(&mid.1));
            assert!(g.ticks.len() >= 2);
        }
    }

    #[test]
    fn circle_is_pure_red_and_bounded() {
        let img = white(120, 120);
        for seed in 0..30 {
            let spec = BiasSpec::new(BiasKind::RedCircle, seed);
            let out = insert_red_circle(&img, &spec, "s").unwrap();
            let geo = circle_geometry(120, 120, &spec, "s");
            let mut count = 0;
            for y in 0..120 {
                for x in 0..120 {
                    if out.get(x, y) != img.get(x, y) {
                        assert_eq!(out.get(x, y), RED);
                        count += 1;
                    }
                }
            }
            let bound = 2.0 * std::f64::consts::PI * geo.radius * geo.stroke * 1.25 + 8.0;
            assert!((count as f64) <= bound, "seed {seed}: {count} > {bound}");
            assert_eq!(out, insert_red_circle(&img, &spec, "s").unwrap());
        }
    }

    #[test]
    fn none_is_identity() {
        let img = random_image(2, 30, 30);
        assert_eq!(apply_bias(&img, &BiasSpec::new(BiasKind::None, 3), "a").unwrap(), img);
    }

    #[test]
    fn dispatch_and_unknown_kind() {
        let img = white(64, 64);
        for kind in [BiasKind::BlackFrame, BiasKind::Ruler, BiasKind::RedCircle] {
            let spec = BiasSpec::new(kind, 1);
            let direct = match kind {
                BiasKind::BlackFrame => insert_black_frame(&img, &spec),
                BiasKind::Ruler => insert_ruler(&img, &spec, "q"),
                _ => insert_red_circle(&img, &spec, "q"),
            }
            .unwrap();
            assert_eq!(apply_bias(&img, &spec, "q").unwrap(), direct);
        }
        assert_eq!(
            "hair".parse::<BiasKind>(),
            Err(BiasError::UnknownKind("hair".into()))
        );
        assert!(serde_json::from_str::<BiasSpec>(r#"{"kind":"hair"}"#).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = BiasSpec::new(BiasKind::RedCircle, 0);
        spec.circle_radius_frac_range = [0.1, 0.05];
        assert!(apply_bias(&white(10, 10), &spec, "a").is_err());
    }

    proptest! {
        #[test]
        fn rect_frame_locality(seed in any::<u64>(), w in 20usize..70, h in 20usize..70, frac in 0.01f64..0.3) {
            let img = random_image(seed, w, h);
            let spec = BiasSpec { kind: BiasKind::BlackFrame, frame_thickness_frac: frac, ..Default::default() };
            let t = frame_thickness(w, h, frac);
            prop_assume!(2 * t < w.min(h));
            let out = insert_black_frame(&img, &spec).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let border = x.min(y).min(w - 1 - x).min(h - 1 - y);
                    if border >= t {
                        prop_assert_eq!(out.get(x, y), img.get(x, y));
                    }
                }
            }
        }

        #[test]
        fn outputs_stay_in_range(seed in any::<u64>(), kind in 0usize..4) {
            let kinds = [BiasKind::BlackFrame, BiasKind::Ruler, BiasKind::RedCircle, BiasKind::None];
            let img = random_image(seed, 40, 32);
            let out = apply_bias(&img, &BiasSpec::new(kinds[kind], seed), "p").unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
