//! Input normalization shared by images and attribution maps.
//!
//! Images are resized, contrast-equalized on luminance (CLAHE) and min-max
//! stretched per channel. Attribution grids go through the same resize and
//! are then scaled by their largest magnitude, so both modalities end up on
//! one spatial grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Grid, RgbImage};

const BINS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("invalid preprocess config: {0}")]
    InvalidConfig(String),
    #[error("resize target must be at least 1 pixel")]
    ZeroSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub target_side: usize,
    pub clahe_tiles: usize,
    pub clahe_clip: f64,
    pub downsample_side: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_side: 224,
            clahe_tiles: 8,
            clahe_clip: 2.0,
            downsample_side: 32,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::InvalidConfig(m.into()));
        if self.target_side < 32 {
            return bad("target_side must be >= 32");
        }
        if self.clahe_tiles < 1 {
            return bad("clahe_tiles must be >= 1");
        }
        if !(self.clahe_clip >= 1.0) {
            return bad("clahe_clip must be >= 1.0");
        }
        if self.downsample_side < 4 {
            return bad("downsample_side must be >= 4");
        }
        Ok(())
    }
}

/// Square bilinear resampling with pixel-center alignment.
pub trait Resample: Sized {
    fn resize_bilinear(&self, side: usize) -> Result<Self, PreprocessError>;

    /// Resize to `side x side`, then flatten row-major. Multi-channel rasters
    /// are flattened plane by plane.
    fn flatten_downsized(&self, side: usize) -> Result<Vec<f64>, PreprocessError>;
}

impl Resample for Grid {
    fn resize_bilinear(&self, side: usize) -> Result<Self, PreprocessError> {
        if side == 0 {
            return Err(PreprocessError::ZeroSize);
        }
        let values = resize_plane(self.values(), self.width(), self.height(), side, side);
        Ok(Grid::new(side, side, values).expect("resampled grid is finite"))
    }

    fn flatten_downsized(&self, side: usize) -> Result<Vec<f64>, PreprocessError> {
        let g = self.resize_bilinear(side)?;
        Ok(g.values().iter().map(|&v| v as f64).collect())
    }
}

impl Resample for RgbImage {
    fn resize_bilinear(&self, side: usize) -> Result<Self, PreprocessError> {
        if side == 0 {
            return Err(PreprocessError::ZeroSize);
        }
        let planes: Vec<Vec<f32>> = (0..3)
            .map(|c| resize_plane(&self.channel(c), self.width(), self.height(), side, side))
            .collect();
        Ok(RgbImage::from_planes(
            side,
            side,
            [&planes[0], &planes[1], &planes[2]],
        ))
    }

    fn flatten_downsized(&self, side: usize) -> Result<Vec<f64>, PreprocessError> {
        let img = self.resize_bilinear(side)?;
        Ok((0..3)
            .flat_map(|c| img.channel(c))
            .map(|v| v as f64)
            .collect())
    }
}

/// Bilinear resampling of one plane. Output samples are convex combinations
/// of their four source neighbours, so the value range never grows.
pub fn resize_plane(src: &[f32], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f32> {
    debug_assert_eq!(src.len(), w * h);
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let xs = axis(out_w, w);
    let ys = axis(out_h, h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let p00 = src[y0 * w + x0] as f64;
            let p01 = src[y0 * w + x1] as f64;
            let p10 = src[y1 * w + x0] as f64;
            let p11 = src[y1 * w + x1] as f64;
            let top = p00 + (p01 - p00) * tx;
            let bottom = p10 + (p11 - p10) * tx;
            let v = top + (bottom - top) * ty;
            let lo = p00.min(p01).min(p10).min(p11);
            let hi = p00.max(p01).max(p10).max(p11);
            out.push(v.clamp(lo, hi) as f32);
        }
    }
    out
}

#[inline]
fn bin_of(y: f32) -> usize {
    ((y.clamp(0.0, 1.0) * (BINS - 1) as f32).round() as usize).min(BINS - 1)
}

/// Per-tile intensity mapping. `None` marks a single-level tile, which is
/// left as-is.
type TileMap = Option<[f32; BINS]>;

fn tile_mapping(lum: &[f32], width: usize, xr: (usize, usize), yr: (usize, usize), clip: f64) -> TileMap {
    let mut hist = [0.0f64; BINS];
    for y in yr.0..yr.1 {
        for x in xr.0..xr.1 {
            hist[bin_of(lum[y * width + x])] += 1.0;
        }
    }
    let total: f64 = hist.iter().sum();
    if total == 0.0 || hist.iter().filter(|&&c| c > 0.0).count() < 2 {
        return None;
    }
    let limit = clip * total / BINS as f64;
    let mut excess = 0.0;
    for c in hist.iter_mut() {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    let share = excess / BINS as f64;
    for c in hist.iter_mut() {
        *c += share;
    }
    let mut cdf = [0.0f64; BINS];
    let mut acc = 0.0;
    for (i, c) in hist.iter().enumerate() {
        acc += c;
        cdf[i] = acc;
    }
    let cdf_min = cdf[hist.iter().position(|&c| c > 0.0).unwrap()];
    let denom = cdf[BINS - 1] - cdf_min;
    let mut lut = [0.0f32; BINS];
    for i in 0..BINS {
        lut[i] = ((cdf[i] - cdf_min) / denom).clamp(0.0, 1.0) as f32;
    }
    Some(lut)
}

/// Contrast-limited adaptive histogram equalization on the luminance plane.
///
/// `tiles` is the tile count per axis and `clip` the histogram clip limit as a
/// multiple of the uniform bin height. Colour is rescaled by the luminance
/// gain, so channel ratios are kept; output is clamped to `[0, 1]`.
pub fn clahe(image: &RgbImage, tiles: usize, clip: f64) -> RgbImage {
    let (w, h) = (image.width(), image.height());
    let lum: Vec<f32> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| image.luminance(x, y))
        .collect();
    let (lo, hi) = lum
        .iter()
        .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 0.0 {
        return image.clone();
    }

    let tx = tiles.clamp(1, w);
    let ty = tiles.clamp(1, h);
    let bounds = |i: usize, n: usize, t: usize| (i * n / t, (i + 1) * n / t);
    let maps: Vec<TileMap> = (0..ty)
        .flat_map(|j| (0..tx).map(move |i| (i, j)))
        .map(|(i, j)| tile_mapping(&lum, w, bounds(i, w, tx), bounds(j, h, ty), clip))
        .collect();

    // Neighbouring tile indices and weight for each coordinate along an axis.
    let axis = |n: usize, t: usize| -> Vec<(usize, usize, f32)> {
        let tile = n as f32 / t as f32;
        (0..n)
            .map(|p| {
                let f = (p as f32 + 0.5) / tile - 0.5;
                let i0 = f.floor().clamp(0.0, (t - 1) as f32) as usize;
                let i1 = (i0 + 1).min(t - 1);
                let wgt = if i1 == i0 { 0.0 } else { (f - i0 as f32).clamp(0.0, 1.0) };
                (i0, i1, wgt)
            })
            .collect()
    };
    let xa = axis(w, tx);
    let ya = axis(h, ty);
    let apply = |m: &TileMap, v: f32| match m {
        Some(lut) => lut[bin_of(v)],
        None => v,
    };

    let mut out = image.clone();
    for y in 0..h {
        let (j0, j1, wy) = ya[y];
        for x in 0..w {
            let (i0, i1, wx) = xa[x];
            let v = lum[y * w + x];
            let a = apply(&maps[j0 * tx + i0], v);
            let b = apply(&maps[j0 * tx + i1], v);
            let c = apply(&maps[j1 * tx + i0], v);
            let d = apply(&maps[j1 * tx + i1], v);
            let top = a + (b - a) * wx;
            let bottom = c + (d - c) * wx;
            let eq = top + (bottom - top) * wy;
            let rgb = image.get(x, y);
            let mapped = if v > 1e-6 {
                let gain = eq / v;
                [rgb[0] * gain, rgb[1] * gain, rgb[2] * gain]
            } else {
                [eq, eq, eq]
            };
            out.set(x, y, mapped);
        }
    }
    out
}

/// Per-channel min-max stretch to `[0, 1]`; constant channels are untouched.
pub fn contrast_stretch(image: &RgbImage) -> RgbImage {
    let planes: Vec<Vec<f32>> = (0..3)
        .map(|c| {
            let mut p = image.channel(c);
            let (lo, hi) = p
                .iter()
                .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > lo {
                let span = hi - lo;
                p.iter_mut().for_each(|v| *v = (*v - lo) / span);
            }
            p
        })
        .collect();
    RgbImage::from_planes(
        image.width(),
        image.height(),
        [&planes[0], &planes[1], &planes[2]],
    )
}

/// Divides by the largest magnitude; an all-zero grid is returned unchanged.
pub fn normalize_attribution(grid: &Grid) -> Grid {
    let m = grid.max_abs();
    if m == 0.0 {
        return grid.clone();
    }
    let values = grid.values().iter().map(|v| v / m).collect();
    Grid::new(grid.height(), grid.width(), values).expect("scaled grid is finite")
}

pub fn preprocess_image(image: &RgbImage, cfg: &PreprocessConfig) -> Result<RgbImage, PreprocessError> {
    let resized = image.resize_bilinear(cfg.target_side)?;
    let equalized = clahe(&resized, cfg.clahe_tiles, cfg.clahe_clip);
    Ok(contrast_stretch(&equalized))
}

pub fn preprocess_attribution(grid: &Grid, cfg: &PreprocessConfig) -> Result<Grid, PreprocessError> {
    Ok(normalize_attribution(&grid.resize_bilinear(cfg.target_side)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::luma;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
        let data = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
        RgbImage::new(w, h, data).unwrap()
    }

    /// Textbook global histogram equalization on a scalar plane.
    fn equalize_oracle(plane: &[f32]) -> Vec<f32> {
        let mut hist = [0usize; 256];
        for &v in plane {
            hist[(v * 255.0).round() as usize] += 1;
        }
        let mut cdf = [0usize; 256];
        let mut acc = 0;
        for i in 0..256 {
            acc += hist[i];
            cdf[i] = acc;
        }
        let cdf_min = cdf[hist.iter().position(|&c| c > 0).unwrap()];
        let n = plane.len();
        plane
            .iter()
            .map(|&v| {
                let b = (v * 255.0).round() as usize;
                (cdf[b] - cdf_min) as f32 / (n - cdf_min) as f32
            })
            .collect()
    }

    #[test]
    fn resize_constant() {
        let img = RgbImage::filled(7, 5, [0.5, 0.5, 0.5]);
        for side in [1, 3, 16, 40] {
            let r = img.resize_bilinear(side).unwrap();
            assert!(r.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn resize_checkerboard_to_single_pixel() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(g.resize_bilinear(1).unwrap().values(), &[0.5]);
    }

    #[test]
    fn resize_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 12, 12);
        let r = img.resize_bilinear(12).unwrap();
        for (a, b) in img.data().iter().zip(r.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert_eq!(img.resize_bilinear(0), Err(PreprocessError::ZeroSize));
    }

    #[test]
    fn clahe_constant_unchanged() {
        let img = RgbImage::filled(40, 30, [0.7, 0.4, 0.2]);
        assert_eq!(clahe(&img, 8, 2.0), img);
    }

    #[test]
    fn clahe_two_level_matches_global_equalization() {
        // Left half 0.2, right half 0.8, one tile, clip effectively disabled.
        let (w, h) = (32, 16);
        let mut data = Vec::new();
        for _y in 0..h {
            for x in 0..w {
                let v = if x < w / 2 { 0.2 } else { 0.8 };
                data.extend([v, v, v]);
            }
        }
        let img = RgbImage::new(w, h, data).unwrap();
        let out = clahe(&img, 1, 1e6);
        let lum: Vec<f32> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| img.luminance(x, y))
            .collect();
        let expected = equalize_oracle(&lum);
        let mut levels: Vec<f32> = Vec::new();
        for (i, e) in expected.iter().enumerate() {
            let v = out.data()[i * 3];
            assert!((v - e).abs() < 1e-5, "pixel {i}: {v} vs {e}");
            if !levels.iter().any(|l| (l - v).abs() < 1e-6) {
                levels.push(v);
            }
        }
        levels.sort_by(f32::total_cmp);
        assert_eq!(levels.len(), 2);
        assert!(levels[0] < 0.2 && levels[1] > 0.8);
    }

    #[test]
    fn clahe_tiled_checkerboard_stays_two_valued() {
        // Every tile sees the same two-level histogram, so every tile mapping
        // is identical and interpolation cannot introduce new levels.
        let side = 64;
        let mut data = Vec::new();
        for y in 0..side {
            for x in 0..side {
                let v = if (x + y) % 2 == 0 { 0.3 } else { 0.6 };
                data.extend([v, v, v]);
            }
        }
        let img = RgbImage::new(side, side, data).unwrap();
        let out = clahe(&img, 8, 1e6);
        let mut levels: Vec<f32> = out.channel(0);
        levels.sort_by(f32::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-5);
        assert_eq!(levels.len(), 2);
        assert!(levels[0] < 0.3 && levels[1] > 0.6);
    }

    #[test]
    fn clahe_preserves_chroma_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 24, 24);
        let out = clahe(&img, 4, 2.0);
        for y in 0..24 {
            for x in 0..24 {
                let [r, g, b] = img.get(x, y);
                let [r2, g2, b2] = out.get(x, y);
                // Only check pixels that were not clamped.
                if r2 < 1.0 && g2 < 1.0 && b2 < 1.0 && r > 0.05 && g > 0.05 && luma(r, g, b) > 0.01 {
                    assert!((r2 / g2 - r / g).abs() < 1e-3 * (r / g).max(1.0));
                    assert!((b2 / g2 - b / g).abs() < 1e-3 * (b / g).max(1.0));
                }
            }
        }
    }

    #[test]
    fn clahe_output_in_unit_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let w = rng.random_range(8..40);
            let h = rng.random_range(8..40);
            let img = random_image(&mut rng, w, h);
            let out = clahe(&img, rng.random_range(1..9), rng.random_range(1.0..4.0));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn normalize_examples() {
        let g = Grid::new(1, 2, vec![2.0, -4.0]).unwrap();
        assert_eq!(normalize_attribution(&g).values(), &[0.5, -1.0]);
        let z = Grid::zeros(3, 3);
        assert_eq!(normalize_attribution(&z), z);
    }

    #[test]
    fn flatten_shapes() {
        let g = Grid::new(4, 4, (0..16).map(|v| v as f32).collect()).unwrap();
        assert_eq!(g.flatten_downsized(2).unwrap().len(), 4);
        let img = RgbImage::filled(10, 10, [0.25, 0.25, 0.25]);
        let v = img.flatten_downsized(4).unwrap();
        assert_eq!(v.len(), 48);
        assert!(v.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn flatten_is_resize_then_flatten() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(&mut rng, 20, 13);
        let resized = img.resize_bilinear(6).unwrap();
        let mut manual = Vec::new();
        for c in 0..3 {
            manual.extend(resized.channel(c).into_iter().map(|v| v as f64));
        }
        assert_eq!(img.flatten_downsized(6).unwrap(), manual);
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let bad = PreprocessConfig {
            target_side: 16,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            clahe_clip: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn image_and_attribution_share_grid() {
        let cfg = PreprocessConfig {
            target_side: 48,
            ..Default::default()
        };
        let img = RgbImage::filled(100, 80, [0.3, 0.5, 0.7]);
        let g = Grid::new(25, 20, vec![1.0; 500]).unwrap();
        let pi = preprocess_image(&img, &cfg).unwrap();
        let pa = preprocess_attribution(&g, &cfg).unwrap();
        assert_eq!((pi.width(), pi.height()), (pa.width(), pa.height()));
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(
            values in proptest::collection::vec(-100.0f32..100.0, 1..50),
            c in 0.01f32..100.0,
        ) {
            let n = values.len();
            let g = Grid::new(1, n, values.clone()).unwrap();
            let scaled = Grid::new(1, n, values.iter().map(|v| v * c).collect()).unwrap();
            let a = normalize_attribution(&g);
            let b = normalize_attribution(&scaled);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-5);
            }
            if g.max_abs() > 0.0 {
                prop_assert!((a.max_abs() - 1.0).abs() <= 1e-6);
            }
        }

        #[test]
        fn resize_never_expands_range(
            w in 1usize..12, h in 1usize..12, side in 1usize..20,
            vals in proptest::collection::vec(-5.0f32..5.0, 144),
        ) {
            let g = Grid::new(h, w, vals[..w * h].to_vec()).unwrap();
            let lo = g.values().iter().copied().fold(f32::MAX, f32::min);
            let hi = g.values().iter().copied().fold(f32::MIN, f32::max);
            let r = g.resize_bilinear(side).unwrap();
            prop_assert!(r.values().iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
