use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, RgbImage};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("invalid predictor: {0}")]
    Invalid(String),
    #[error("transport failure calling {endpoint} after {attempts} attempts: {message}")]
    Transport {
        endpoint: String,
        attempts: usize,
        message: String,
    },
    #[error("predictor returned HTTP {0}")]
    Status(u16),
    #[error("malformed predictor response: {0}")]
    BadResponse(String),
    #[error("predictor score {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Encode(#[from] DataError),
}

/// A binary classifier scoring images in `[0, 1]`; 1 means malignant.
pub trait Predictor: Send + Sync {
    fn predict(&self, image: &RgbImage) -> Result<f64, PredictError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyWeights {
    pub w_border: f64,
    pub w_center: f64,
    pub bias: f64,
}

impl Default for ToyWeights {
    fn default() -> Self {
        Self {
            w_border: 6.0,
            w_center: 2.0,
            bias: -4.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Closed-form scorer driven by border and centre darkness.
///
/// `b` is one minus the mean luminance of the border ring, whose thickness
/// per side is `max(1, round(0.05 * min(W, H)))`; `m` is one minus the mean
/// luminance of pixels whose centres lie within `0.3 * min(W, H)` of the
/// image centre. The score is `sigmoid(w_border * b + w_center * m + bias)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuiltinToy {
    pub weights: ToyWeights,
}

pub fn toy_ring_thickness(width: usize, height: usize) -> usize {
    ((0.05 * width.min(height) as f64).round() as usize).max(1)
}

impl BuiltinToy {
    /// `(b, m)` darkness features.
    pub fn features(image: &RgbImage) -> (f64, f64) {
        let (w, h) = (image.width(), image.height());
        let t = toy_ring_thickness(w, h);
        let r = 0.3 * w.min(h) as f64;
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (mut ring, mut ring_n, mut disk, mut disk_n) = (0.0f64, 0usize, 0.0f64, 0usize);
        for y in 0..h {
            for x in 0..w {
                let l = image.luminance(x, y) as f64;
                if x < t || y < t || x >= w - t || y >= h - t {
                    ring += l;
                    ring_n += 1;
                }
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    disk += l;
                    disk_n += 1;
                }
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { 1.0 } else { s / n as f64 };
        (1.0 - mean(ring, ring_n), 1.0 - mean(disk, disk_n))
    }
}

impl Predictor for BuiltinToy {
    fn predict(&self, image: &RgbImage) -> Result<f64, PredictError> {
        let (b, m) = Self::features(image);
        let wt = &self.weights;
        Ok(sigmoid(wt.w_border * b + wt.w_center * m + wt.bias))
    }
}

/// HTTP scorer: `POST` the PNG-encoded image, expect `{"score": x}`.
/// Transport errors are retried twice; HTTP errors and bad scores are not.
pub struct RemotePredictor {
    endpoint: String,
    agent: ureq::Agent,
}

const REMOTE_ATTEMPTS: usize = 3;

#[derive(Deserialize)]
struct ScoreBody {
    score: f64,
}

impl RemotePredictor {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.to_string(),
            agent,
        }
    }

    fn attempt(&self, png: &[u8]) -> Result<(u16, String), ureq::Error> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "image/png")
            .send(png)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string()?;
        Ok((status, body))
    }
}

impl Predictor for RemotePredictor {
    fn predict(&self, image: &RgbImage) -> Result<f64, PredictError> {
        let png = image.to_png_bytes()?;
        let mut last = None;
        for attempt in 1..=REMOTE_ATTEMPTS {
            match self.attempt(&png) {
                Ok((200, body)) => {
                    let parsed: ScoreBody = serde_json::from_str(&body)
                        .map_err(|e| PredictError::BadResponse(e.to_string()))?;
                    let s = parsed.score;
                    if !(0.0..=1.0).contains(&s) {
                        return Err(PredictError::OutOfRange(s));
                    }
                    return Ok(s);
                }
                Ok((status, _)) => return Err(PredictError::Status(status)),
                Err(e) => {
                    log::warn!("predictor call {attempt}/{REMOTE_ATTEMPTS} to {} failed: {e}", self.endpoint);
                    last = Some(e);
                }
            }
        }
        Err(PredictError::Transport {
            endpoint: self.endpoint.clone(),
            attempts: REMOTE_ATTEMPTS,
            message: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

fn default_timeout() -> f64 {
    30.0
}

/// Serializable predictor selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorRef {
    BuiltinToy {
        #[serde(default)]
        weights: ToyWeights,
    },
    Remote {
        endpoint: String,
        /// Seconds.
        #[serde(default = "default_timeout")]
        timeout: f64,
    },
}

impl Default for PredictorRef {
    fn default() -> Self {
        PredictorRef::BuiltinToy {
            weights: ToyWeights::default(),
        }
    }
}

impl PredictorRef {
    pub fn build(&self) -> Result<Box<dyn Predictor>, PredictError> {
        match self {
            PredictorRef::BuiltinToy { weights } => {
                if ![weights.w_border, weights.w_center, weights.bias].iter().all(|v| v.is_finite()) {
                    return Err(PredictError::Invalid("toy weights must be finite".into()));
                }
                Ok(Box::new(BuiltinToy { weights: *weights }))
            }
            PredictorRef::Remote { endpoint, timeout } => {
                if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                    return Err(PredictError::Invalid(format!("endpoint `{endpoint}` is not an http(s) URL")));
                }
                if !(timeout.is_finite() && *timeout > 0.0) {
                    return Err(PredictError::Invalid(format!("timeout must be positive, got {timeout}")));
                }
                Ok(Box::new(RemotePredictor::new(endpoint, Duration::from_secs_f64(*timeout))))
            }
        }
    }
}
