//! Synthetic dermoscopy-like corpora with planted artifacts, for tests and
//! demos. Every colour is quantized to 8 bits so a corpus written to PNG
//! reloads bit-identically.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biasgen::{apply_bias, BiasKind, BiasSpec};
use crate::data::{gatr, luma, write_manifest, DataError, DatasetManifest, Grid, Label, ManifestEntry, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n: usize,
    pub side: usize,
    pub seed: u64,
    pub malignant_fraction: f64,
    /// Share of samples carrying a planted black frame.
    pub frame_fraction: f64,
    pub ruler_fraction: f64,
    /// Half-width of uniform per-pixel noise.
    pub noise: f32,
    pub attributions: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n: 60,
            side: 64,
            seed: 0,
            malignant_fraction: 0.0,
            frame_fraction: 0.25,
            ruler_fraction: 0.0,
            noise: 0.02,
            attributions: true,
        }
    }
}

/// Elliptical lesion, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub color: [f32; 3],
}

impl Lesion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        dx * dx + dy * dy <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub label: Label,
    pub image: RgbImage,
    pub attribution: Option<Grid>,
    pub planted: BiasKind,
    pub skin: [f32; 3],
    pub lesion: Lesion,
}

fn q8(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn scaled(base: [f32; 3], s: f32) -> [f32; 3] {
    base.map(|c| q8(c * s))
}

const SKIN: [f32; 3] = [0.92, 0.78, 0.70];
const LESION: [f32; 3] = [0.72, 0.52, 0.42];

/// Generates `spec.n` samples. Planted artifacts go to a seeded random
/// subset: the first `round(frame_fraction * n)` of a shuffled order get a
/// frame, the next `round(ruler_fraction * n)` a ruler.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let n_frame = (spec.frame_fraction * n as f64).round() as usize;
    let n_ruler = (spec.ruler_fraction * n as f64).round() as usize;
    let n_mal = (spec.malignant_fraction * n as f64).round() as usize;
    let mut planted = vec![BiasKind::None; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_frame {
            planted[i] = BiasKind::BlackFrame;
        } else if rank < n_frame + n_ruler {
            planted[i] = BiasKind::Ruler;
        }
    }
    (0..n)
        .map(|i| {
            let label = if i < n_mal { Label::Malignant } else { Label::Benign };
            sample(spec, i, label, planted[i], &mut rng)
        })
        .collect()
}

fn sample(spec: &CorpusSpec, i: usize, label: Label, planted: BiasKind, rng: &mut ChaCha8Rng) -> SyntheticSample {
    let s = spec.side as f64;
    let skin = scaled(SKIN, rng.random_range(0.95..1.05));
    let darker = if label == Label::Malignant { 0.8 } else { 1.0 };
    let lesion = Lesion {
        cx: s / 2.0 + rng.random_range(-0.05..0.05) * s,
        cy: s / 2.0 + rng.random_range(-0.05..0.05) * s,
        rx: rng.random_range(0.14..0.22) * s,
        ry: rng.random_range(0.14..0.22) * s,
        color: scaled(LESION, rng.random_range(0.9..1.1) * darker),
    };
    let mut data = Vec::with_capacity(spec.side * spec.side * 3);
    for y in 0..spec.side {
        for x in 0..spec.side {
            let base = if lesion.contains(x as f64 + 0.5, y as f64 + 0.5) { lesion.color } else { skin };
            let jitter = if spec.noise > 0.0 { rng.random_range(-spec.noise..spec.noise) } else { 0.0 };
            data.extend(base.map(|c| q8(c + jitter)));
        }
    }
    let id = format!("syn{i:04}");
    let clean = RgbImage::new(spec.side, spec.side, data).expect("quantized values lie in [0, 1]");
    let image = apply_bias(&clean, &BiasSpec::new(planted, spec.seed), &id).expect("default geometry is valid");
    let attribution = spec.attributions.then(|| synthetic_attribution(&image, skin, rng));
    SyntheticSample {
        id,
        label,
        image,
        attribution,
        planted,
        skin,
        lesion,
    }
}

/// Half-resolution relevance: darkness relative to the skin tone, plus a
/// random negative blob and noise.
fn synthetic_attribution(image: &RgbImage, skin: [f32; 3], rng: &mut ChaCha8Rng) -> Grid {
    let (gw, gh) = (image.width().div_ceil(2), image.height().div_ceil(2));
    let skin_l = luma(skin[0], skin[1], skin[2]);
    let (bx, by) = (rng.random_range(0.0..gw as f32), rng.random_range(0.0..gh as f32));
    let br = rng.random_range(0.1..0.25) * gw as f32;
    let mut values = Vec::with_capacity(gw * gh);
    for r in 0..gh {
        for c in 0..gw {
            let (x, y) = ((2 * c).min(image.width() - 1), (2 * r).min(image.height() - 1));
            let dark = (skin_l - image.luminance(x, y)).max(0.0);
            let d2 = ((c as f32 - bx).powi(2) + (r as f32 - by).powi(2)) / (br * br);
            let blob = -0.3 * (-d2).exp();
            values.push(dark + blob + rng.random_range(-0.05..0.05));
        }
    }
    Grid::new(gh, gw, values).expect("finite relevance")
}

/// Writes `images/<id>.png`, `attributions/<id>.gatr` and `manifest.csv`
/// under `dir`; returns the manifest path.
pub fn write_corpus(samples: &[SyntheticSample], dir: &Path) -> Result<PathBuf, DataError> {
    let img_dir = dir.join("images");
    let attr_dir = dir.join("attributions");
    std::fs::create_dir_all(&img_dir).map_err(|e| DataError::io(&img_dir, e))?;
    std::fs::create_dir_all(&attr_dir).map_err(|e| DataError::io(&attr_dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image = img_dir.join(format!("{}.png", s.id));
        s.image.save_png(&image)?;
        let attribution = match &s.attribution {
            Some(g) => {
                let p = attr_dir.join(format!("{}.gatr", s.id));
                gatr::write_attribution_grid(g, &p)?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image,
            attribution,
            label: s.label,
        });
    }
    let manifest = DatasetManifest {
        root_dir: dir.to_path_buf(),
        entries,
    };
    let path = dir.join("manifest.csv");
    write_manifest(&manifest, &path)?;
    Ok(path)
}
