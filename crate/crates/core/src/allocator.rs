//! Context-aware bit allocation.
//!
//! A [`CorrelationMap`] holds the semantic correlation between the current
//! user words and each square patch of the latest frame. Each correlation is
//! mapped to a quantization parameter with a temperature curve, and a
//! parametric rate model turns the QP grid into a per-frame bit budget.
//! Patches that matter to the conversation keep a low QP (more bits); the
//! rest are pushed towards QP 51.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest codec quantization parameter.
pub const QP_MAX: u8 = 51;
/// Default temperature of the correlation-to-QP curve.
pub const DEFAULT_GAMMA: f64 = 3.0;
/// Default patch edge in pixels.
pub const DEFAULT_PATCH_SIZE: u16 = 64;

/// A feature embedding (visual patch or text).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("feature vector"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("feature vector", format!("non-finite entry {v}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two features, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Per-patch semantic correlations for one frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    rows: usize,
    cols: usize,
    patch_size: u16,
    values: Vec<f32>,
}

impl CorrelationMap {
    pub fn new(rows: usize, cols: usize, patch_size: u16, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("rows/cols", "map must have at least one patch"));
        }
        if patch_size == 0 {
            return Err(Error::param("patch_size", "must be positive"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: rows * cols,
            });
        }
        if let Some(&v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::CorrelationOutOfRange(f64::from(v)));
        }
        Ok(Self {
            rows,
            cols,
            patch_size,
            values,
        })
    }

    pub fn uniform(rows: usize, cols: usize, patch_size: u16, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::CorrelationOutOfRange(rho));
        }
        Self::new(rows, cols, patch_size, vec![rho as f32; rows * cols])
    }

    /// Uniform map covering a `width`×`height` frame with `⌊H/N⌋×⌊W/N⌋` patches.
    pub fn uniform_for_frame(width: u32, height: u32, patch_size: u16, rho: f64) -> Result<Self> {
        let (rows, cols) = grid_for_frame(width, height, patch_size)?;
        Self::uniform(rows, cols, patch_size, rho)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn patch_size(&self) -> u16 {
        self.patch_size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        (row < self.rows && col < self.cols).then(|| self.values[row * self.cols + col])
    }

    /// Checks that the grid matches a `width`×`height` source frame.
    pub fn check_frame(&self, width: u32, height: u32) -> Result<()> {
        let (rows, cols) = grid_for_frame(width, height, self.patch_size)?;
        if (rows, cols) != (self.rows, self.cols) {
            return Err(Error::MapFormat(format!(
                "{}x{} grid does not match {width}x{height} frame at patch {} (expected {rows}x{cols})",
                self.rows, self.cols, self.patch_size
            )));
        }
        Ok(())
    }
}

fn grid_for_frame(width: u32, height: u32, patch_size: u16) -> Result<(usize, usize)> {
    if patch_size == 0 {
        return Err(Error::param("patch_size", "must be positive"));
    }
    let n = u32::from(patch_size);
    let (rows, cols) = ((height / n) as usize, (width / n) as usize);
    if rows == 0 || cols == 0 {
        return Err(Error::param(
            "patch_size",
            format!("{patch_size} px patches do not fit a {width}x{height} frame"),
        ));
    }
    Ok((rows, cols))
}

/// `51·(1 − ((ρ+1)/2)^γ)`, rounded half-up to an integer QP.
pub fn qp_from_correlation(rho: f64, gamma: f64) -> Result<u8> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::param("gamma", format!("{gamma} is not a positive real")));
    }
    let weight = ((rho + 1.0) / 2.0).powf(gamma);
    let raw = f64::from(QP_MAX) * (1.0 - weight);
    Ok((raw + 0.5).floor().clamp(0.0, f64::from(QP_MAX)) as u8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QpMap {
    rows: usize,
    cols: usize,
    qp: Vec<u8>,
}

impl QpMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[u8] {
        &self.qp
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        (row < self.rows && col < self.cols).then(|| self.qp[row * self.cols + col])
    }
}

pub fn build_qp_map(map: &CorrelationMap, gamma: f64) -> Result<QpMap> {
    let qp = map
        .values
        .iter()
        .map(|&rho| qp_from_correlation(f64::from(rho), gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(QpMap {
        rows: map.rows,
        cols: map.cols,
        qp,
    })
}

/// Exponential rate–QP model: bits halve every `halving_step` QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModelParams {
    ref_bits_per_patch: f64,
    ref_qp: u8,
    halving_step: f64,
}

impl RateModelParams {
    pub fn new(ref_bits_per_patch: f64, ref_qp: u8, halving_step: f64) -> Result<Self> {
        if !(ref_bits_per_patch.is_finite() && ref_bits_per_patch > 0.0) {
            return Err(Error::param("ref_bits_per_patch", "must be a positive real"));
        }
        if ref_qp > QP_MAX {
            return Err(Error::param("ref_qp", format!("{ref_qp} exceeds {QP_MAX}")));
        }
        if !(halving_step.is_finite() && halving_step > 0.0) {
            return Err(Error::param("halving_step", "must be a positive real"));
        }
        Ok(Self {
            ref_bits_per_patch,
            ref_qp,
            halving_step,
        })
    }

    pub fn ref_bits_per_patch(&self) -> f64 {
        self.ref_bits_per_patch
    }

    pub fn ref_qp(&self) -> u8 {
        self.ref_qp
    }

    pub fn halving_step(&self) -> f64 {
        self.halving_step
    }
}

impl Default for RateModelParams {
    fn default() -> Self {
        Self {
            ref_bits_per_patch: 3000.0,
            ref_qp: 30,
            halving_step: 6.0,
        }
    }
}

pub fn patch_bits(qp: u8, params: &RateModelParams) -> Result<f64> {
    if qp > QP_MAX {
        return Err(Error::param("qp", format!("{qp} exceeds {QP_MAX}")));
    }
    let exponent = -(f64::from(qp) - f64::from(params.ref_qp)) / params.halving_step;
    Ok(params.ref_bits_per_patch * exponent.exp2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBudget {
    qp_map: QpMap,
    patch_bits: Vec<f64>,
    total_bits: f64,
    context_fallback: bool,
}

impl FrameBudget {
    pub fn qp_map(&self) -> &QpMap {
        &self.qp_map
    }

    pub fn patch_bits(&self) -> &[f64] {
        &self.patch_bits
    }

    pub fn total_bits(&self) -> f64 {
        self.total_bits
    }

    /// True when the budget was built without any chat context.
    pub fn context_fallback(&self) -> bool {
        self.context_fallback
    }
}

pub fn build_frame_budget(
    map: &CorrelationMap,
    gamma: f64,
    params: &RateModelParams,
) -> Result<FrameBudget> {
    let qp_map = build_qp_map(map, gamma)?;
    let patch_bits = qp_map
        .qp
        .iter()
        .map(|&qp| patch_bits(qp, params))
        .collect::<Result<Vec<_>>>()?;
    let total_bits = patch_bits.iter().sum();
    Ok(FrameBudget {
        qp_map,
        patch_bits,
        total_bits,
        context_fallback: false,
    })
}

/// Holds the budget for the most recent correlation map.
///
/// The budget is recomputed only when a new map arrives; frames captured in
/// between reuse it.
#[derive(Debug, Clone)]
pub struct SemanticAllocator {
    gamma: f64,
    params: RateModelParams,
    current: Arc<FrameBudget>,
}

impl SemanticAllocator {
    pub fn new(map: &CorrelationMap, gamma: f64, params: RateModelParams) -> Result<Self> {
        let current = Arc::new(build_frame_budget(map, gamma, &params)?);
        Ok(Self {
            gamma,
            params,
            current,
        })
    }

    /// Allocator for a session with no user words yet: every patch sits at ρ = 0.
    pub fn without_context(
        rows: usize,
        cols: usize,
        patch_size: u16,
        gamma: f64,
        params: RateModelParams,
    ) -> Result<Self> {
        let mut alloc = Self::new(&CorrelationMap::uniform(rows, cols, patch_size, 0.0)?, gamma, params)?;
        Arc::make_mut(&mut alloc.current).context_fallback = true;
        Ok(alloc)
    }

    pub fn update_map(&mut self, map: &CorrelationMap) -> Result<()> {
        self.current = Arc::new(build_frame_budget(map, self.gamma, &self.params)?);
        Ok(())
    }

    pub fn budget(&self) -> Arc<FrameBudget> {
        Arc::clone(&self.current)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}
