//! Embedding arithmetic shared by every stage of the pipeline.
//!
//! Vectors are stored as `f32`; every reduction (dot products, norms, fused
//! sums) is accumulated in `f64` and rounded once on store.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Tolerance on `alpha + beta = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A dense vector in the shared text/image embedding space.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps `components`, rejecting empty or non-finite input.
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyVector);
        }
        if components.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Embedding::new(v)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 6;
        write!(f, "Embedding(dim={}, [", self.dim())?;
        for (i, x) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x:.4}")?;
        }
        if self.dim() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "])")
    }
}

/// Dot product accumulated in `f64`.
///
/// Four independent accumulators keep the loop vectorizable; the summation
/// order is fixed, so results are reproducible across runs.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] as f64 * y[0] as f64;
        acc[1] += x[1] as f64 * y[1] as f64;
        acc[2] += x[2] as f64 * y[2] as f64;
        acc[3] += x[3] as f64 * y[3] as f64;
    }
    let mut tail = 0.0f64;
    for (x, y) in ra.iter().zip(rb) {
        tail += *x as f64 * *y as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// [`dot`] against a query already widened to `f64`. Bit-identical to
/// `dot(a, q)` where `q` holds the narrowed query.
#[inline]
pub fn dot_wide(a: &[f32], q: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), q.len());
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { dot_wide_avx(a, q) };
        }
    }
    dot_wide_generic(a, q)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn dot_wide_avx(a: &[f32], q: &[f64]) -> f64 {
    // same operations in the same order; only the instruction set differs
    dot_wide_generic(a, q)
}

#[inline(always)]
fn dot_wide_generic(a: &[f32], q: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cq = q.chunks_exact(4);
    let (ra, rq) = (ca.remainder(), cq.remainder());
    for (x, y) in ca.zip(cq) {
        acc[0] += x[0] as f64 * y[0];
        acc[1] += x[1] as f64 * y[1];
        acc[2] += x[2] as f64 * y[2];
        acc[3] += x[3] as f64 * y[3];
    }
    let mut tail = 0.0f64;
    for (x, y) in ra.iter().zip(rq) {
        tail += *x as f64 * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Scales `e` to unit L2 norm.
pub fn l2_normalize(e: &Embedding) -> Result<Embedding> {
    let norm = e.norm();
    if norm < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(Embedding(
        e.0.iter().map(|&x| (x as f64 / norm) as f32).collect(),
    ))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    a.ensure_dim(b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// Relative weight of the text embedding (`alpha`) and of the generated
/// image embeddings (`beta`). Always sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct FusionWeights {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawWeights> for FusionWeights {
    type Error = Error;

    fn try_from(raw: RawWeights) -> Result<Self> {
        FusionWeights::new(raw.alpha, raw.beta)
    }
}

impl FusionWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !in_unit(alpha) || !in_unit(beta) || (alpha + beta - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// `beta` is derived as `1 - alpha`.
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0 - alpha)
    }

    pub fn text_only() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// How generated-image embeddings are combined before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `beta * sum(images)`.
    #[default]
    Sum,
    /// `beta * sum(images) / K`.
    Mean,
}

/// Computes `alpha * text + beta * agg(images)`.
///
/// With no images the result is exactly `alpha * text`. The result is not
/// normalized.
pub fn fuse(
    text: &Embedding,
    images: &[Embedding],
    weights: FusionWeights,
    aggregation: Aggregation,
) -> Result<Embedding> {
    let dim = text.dim();
    for img in images {
        img.ensure_dim(dim)?;
    }
    let image_scale = match aggregation {
        Aggregation::Sum => weights.beta,
        Aggregation::Mean if images.is_empty() => 0.0,
        Aggregation::Mean => weights.beta / images.len() as f64,
    };
    let fused = (0..dim)
        .map(|i| {
            let visual: f64 = images.iter().map(|img| img.0[i] as f64).sum();
            let text_part = weights.alpha * text.0[i] as f64;
            if images.is_empty() {
                text_part as f32
            } else {
                (text_part + image_scale * visual) as f32
            }
        })
        .collect();
    Ok(Embedding(fused))
}

/// Turn-indexed fusion weights. A lookup returns the weights attached to
/// the greatest threshold that is `<= turn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ScheduleStep>", into = "Vec<ScheduleStep>")]
pub struct WeightSchedule {
    steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub from_turn: usize,
    #[serde(flatten)]
    pub weights: FusionWeights,
}

impl WeightSchedule {
    pub fn new(steps: Vec<ScheduleStep>) -> Result<Self> {
        match steps.first() {
            None => return Err(Error::InvalidSchedule("schedule is empty".into())),
            Some(first) if first.from_turn != 0 => {
                return Err(Error::InvalidSchedule(
                    "first threshold must be turn 0".into(),
                ))
            }
            _ => {}
        }
        if steps.windows(2).any(|w| w[0].from_turn >= w[1].from_turn) {
            return Err(Error::InvalidSchedule(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self { steps })
    }

    /// A single set of weights for every turn.
    pub fn constant(weights: FusionWeights) -> Self {
        Self {
            steps: vec![ScheduleStep {
                from_turn: 0,
                weights,
            }],
        }
    }

    pub fn steps(&self) -> &[ScheduleStep] {
        &self.steps
    }

    pub fn weights_for(&self, turn: usize) -> FusionWeights {
        let idx = self.steps.partition_point(|s| s.from_turn <= turn);
        // idx >= 1 because the first threshold is 0.
        self.steps[idx - 1].weights
    }
}

/// Text-heavy (0.7 / 0.3) through turn 2, balanced (0.5 / 0.5) from turn 3.
impl Default for WeightSchedule {
    fn default() -> Self {
        Self {
            steps: vec![
                ScheduleStep {
                    from_turn: 0,
                    weights: FusionWeights {
                        alpha: 0.7,
                        beta: 0.3,
                    },
                },
                ScheduleStep {
                    from_turn: 3,
                    weights: FusionWeights {
                        alpha: 0.5,
                        beta: 0.5,
                    },
                },
            ],
        }
    }
}

impl TryFrom<Vec<ScheduleStep>> for WeightSchedule {
    type Error = Error;

    fn try_from(steps: Vec<ScheduleStep>) -> Result<Self> {
        WeightSchedule::new(steps)
    }
}

impl From<WeightSchedule> for Vec<ScheduleStep> {
    fn from(s: WeightSchedule) -> Self {
        s.steps
    }
}

pub fn schedule_weights(schedule: &WeightSchedule, turn: usize) -> FusionWeights {
    schedule.weights_for(turn)
}
