//! Minimum-time consensus detection.
//!
//! Each scalar signal coming out of a consensus filter satisfies a linear
//! recurrence whose order is bounded by the stacked system dimension. A
//! detector accumulates the signal, builds square Hankel matrices from its
//! first differences, and watches for rank loss. The kernel of the defective
//! Hankel matrix yields the recurrence coefficients, and the final-value
//! formula `φ = y_dᵀβ / 1ᵀβ` produces the exact asymptotic value from
//! finitely many samples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square Hankel matrix over an odd-length difference sequence:
/// entry `(i, j)` is `diffs[i + j]`.
pub fn hankel_of_differences(diffs: &[f64]) -> Result<DMatrix<f64>> {
    if diffs.is_empty() || diffs.len() % 2 == 0 {
        return Err(Error::WrongLength { len: diffs.len() });
    }
    let k = (diffs.len() + 1) / 2;
    Ok(DMatrix::from_fn(k, k, |i, j| diffs[i + j]))
}

/// Final value of a recurrence-consistent sequence: `y_dᵀβ / 1ᵀβ` over the
/// first `d + 1` samples.
pub fn final_value(history: &[f64], beta: &DVector<f64>) -> Result<f64> {
    let d1 = beta.nrows();
    if history.len() < d1 {
        return Err(Error::WrongLength { len: history.len() });
    }
    let denom: f64 = beta.iter().sum();
    if denom.abs() < 1e-12 {
        return Err(Error::NumericalFailure {
            context: "kernel coefficient sum vanishes in the final-value formula",
        });
    }
    let num: f64 = history[..d1]
        .iter()
        .zip(beta.iter())
        .map(|(y, b)| y * b)
        .sum();
    Ok(num / denom)
}

/// Divides the monic polynomial with ascending coefficients
/// `[α_0, …, α_d, 1]` by `(t − 1)` and returns the quotient's coefficients.
///
/// Requires a root at one: `1 + Σ α_i = 0` within 1e-9.
pub fn beta_from_alpha(alpha: &[f64]) -> Result<Vec<f64>> {
    let sum = 1.0 + alpha.iter().sum::<f64>();
    if sum.abs() > 1e-9 {
        return Err(Error::NoRootAtOne { sum });
    }
    // β_j = 1 + Σ_{i>j} α_i, accumulated as a running tail sum.
    let mut beta = vec![0.0; alpha.len()];
    let mut tail = 1.0;
    for j in (0..alpha.len()).rev() {
        beta[j] = tail;
        tail += alpha[j];
    }
    // by construction conv(beta, [-1, 1]) reproduces the input polynomial
    Ok(beta)
}

/// Result of feeding one more sample to a detector.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorStatus {
    /// Not enough structure exposed yet.
    Collecting,
    /// Rank loss observed; the signal's limit is `phi`.
    Detected {
        /// Kernel of the defective Hankel matrix, normalized to last
        /// component one.
        beta: DVector<f64>,
        /// Computed asymptotic value.
        phi: f64,
        /// Index (within the pushed history) of the sample that completed
        /// detection.
        detected_at: usize,
    },
}

impl DetectorStatus {
    pub fn is_detected(&self) -> bool {
        matches!(self, DetectorStatus::Detected { .. })
    }
}

/// Rank-loss detector for one scalar signal.
///
/// Grows a Hankel matrix by one size per two new observations and fires on
/// the relative smallest-singular-value test
/// `σ_min ≤ σ̄ · max(1, σ_max)`. After firing it freezes: further pushes
/// return the stored result.
#[derive(Debug, Clone)]
pub struct MinTimeDetector {
    history: Vec<f64>,
    diffs: Vec<f64>,
    sigma_threshold: f64,
    status: DetectorStatus,
}

impl MinTimeDetector {
    pub fn new(sigma_threshold: f64) -> Self {
        MinTimeDetector {
            history: Vec::new(),
            diffs: Vec::new(),
            sigma_threshold,
            status: DetectorStatus::Collecting,
        }
    }

    pub fn status(&self) -> &DetectorStatus {
        &self.status
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn observation_count(&self) -> usize {
        self.history.len()
    }

    /// Appends one sample and re-runs the rank test when the difference
    /// count is odd (a fresh square Hankel size).
    pub fn push_observation(&mut self, y: f64) -> Result<&DetectorStatus> {
        if self.status.is_detected() {
            return Ok(&self.status);
        }
        if let Some(&last) = self.history.last() {
            self.diffs.push(y - last);
        }
        self.history.push(y);
        if self.diffs.is_empty() || self.diffs.len() % 2 == 0 {
            return Ok(&self.status);
        }

        let gamma = hankel_of_differences(&self.diffs)?;
        if let Some((sigma_min, v_min, sigma_max)) = smallest_singular_pair(&gamma) {
            if sigma_min <= self.sigma_threshold * sigma_max.max(1.0) {
                let beta = normalize_kernel(&v_min)?;
                let phi = final_value(&self.history, &beta)?;
                self.status = DetectorStatus::Detected {
                    beta,
                    phi,
                    detected_at: self.history.len() - 1,
                };
            }
        }
        Ok(&self.status)
    }
}

/// Smallest singular value, its right singular vector, and the largest
/// singular value.
pub(crate) fn smallest_singular_pair(m: &DMatrix<f64>) -> Option<(f64, DVector<f64>, f64)> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t?;
    let (mut min_i, mut max_i) = (0, 0);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < svd.singular_values[min_i] {
            min_i = i;
        }
        if s > svd.singular_values[max_i] {
            max_i = i;
        }
    }
    Some((
        svd.singular_values[min_i],
        v_t.row(min_i).transpose(),
        svd.singular_values[max_i],
    ))
}

/// Scales a kernel vector so its last component equals one.
pub(crate) fn normalize_kernel(v: &DVector<f64>) -> Result<DVector<f64>> {
    let last = v[v.nrows() - 1];
    if last.abs() < 1e-12 {
        return Err(Error::DegenerateKernel);
    }
    Ok(v / last)
}

/// Per-element detector bank for a matrix-valued consensus signal.
///
/// Symmetric mode (the default for symmetric inputs) runs one detector per
/// upper-triangle element and mirrors the assembled matrix.
///
/// Cold-started consensus filters emit structural zeros until data reaches a
/// node, and a zero prefix looks like an already-converged constant to the
/// rank test. Each element therefore gates its detector: samples stream only
/// once the value first moves, keeping the sample just before the movement
/// so the first difference is nonzero. An element still flat after
/// `quiet_horizon` steps is genuinely constant (information traverses the
/// network within its diameter) and is streamed as-is.
#[derive(Debug, Clone)]
pub struct MatrixConsensusTracker {
    dim: usize,
    symmetric: bool,
    quiet_horizon: usize,
    cells: Vec<Cell>,
}

#[derive(Debug, Clone)]
struct Cell {
    h: usize,
    l: usize,
    gate: Gate,
    base_step: usize,
    detector: ElementDetector,
}

/// The two detection backends a tracker can run per element.
#[derive(Debug, Clone)]
enum ElementDetector {
    Exact(MinTimeDetector),
    Robust(crate::robust::RobustDetector),
}

impl ElementDetector {
    fn push_observation(&mut self, y: f64) -> Result<&DetectorStatus> {
        match self {
            ElementDetector::Exact(d) => d.push_observation(y),
            ElementDetector::Robust(d) => d.push_observation(y),
        }
    }

    fn status(&self) -> &DetectorStatus {
        match self {
            ElementDetector::Exact(d) => d.status(),
            ElementDetector::Robust(d) => d.status(),
        }
    }

    fn observation_count(&self) -> usize {
        match self {
            ElementDetector::Exact(d) => d.observation_count(),
            ElementDetector::Robust(d) => d.observation_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Gate {
    Waiting { initial: f64 },
    Streaming,
}

/// A completed per-element detection, in simulation-step time.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementDetection {
    pub h: usize,
    pub l: usize,
    /// Simulation step of the observation that completed detection.
    pub step: usize,
    pub phi: f64,
    /// Number of samples the detector consumed.
    pub observations: usize,
}

impl MatrixConsensusTracker {
    /// Tracker backed by exact rank-loss detectors.
    pub fn new(dim: usize, sigma_threshold: f64, quiet_horizon: usize, symmetric: bool) -> Self {
        Self::build(dim, quiet_horizon, symmetric, || {
            ElementDetector::Exact(MinTimeDetector::new(sigma_threshold))
        })
    }

    /// Tracker backed by noise-tolerant detectors.
    pub fn new_robust(dim: usize, rho_base: f64, quiet_horizon: usize, symmetric: bool) -> Self {
        Self::build(dim, quiet_horizon, symmetric, || {
            ElementDetector::Robust(crate::robust::RobustDetector::new(rho_base))
        })
    }

    fn build(
        dim: usize,
        quiet_horizon: usize,
        symmetric: bool,
        mut make: impl FnMut() -> ElementDetector,
    ) -> Self {
        let mut cells = Vec::new();
        for h in 0..dim {
            for l in 0..dim {
                if symmetric && l < h {
                    continue;
                }
                cells.push(Cell {
                    h,
                    l,
                    gate: Gate::Waiting { initial: f64::NAN },
                    base_step: 0,
                    detector: make(),
                });
            }
        }
        MatrixConsensusTracker {
            dim,
            symmetric,
            quiet_horizon: quiet_horizon.max(1),
            cells,
        }
    }

    /// Feeds the matrix value observed at `step`. Steps must be pushed in
    /// order starting from 0.
    pub fn observe_matrix(&mut self, step: usize, value: &DMatrix<f64>) -> Result<()> {
        for cell in &mut self.cells {
            let y = value[(cell.h, cell.l)];
            if cell.detector.status().is_detected() {
                continue;
            }
            match cell.gate {
                Gate::Waiting { initial } if initial.is_nan() => {
                    cell.gate = Gate::Waiting { initial: y };
                }
                Gate::Waiting { initial } => {
                    if y != initial || step >= self.quiet_horizon {
                        cell.base_step = step - 1;
                        cell.gate = Gate::Streaming;
                        cell.detector.push_observation(initial)?;
                        cell.detector.push_observation(y)?;
                    }
                }
                Gate::Streaming => {
                    cell.detector.push_observation(y)?;
                }
            }
        }
        Ok(())
    }

    /// Completed detections so far, in element order.
    pub fn detections(&self) -> Vec<ElementDetection> {
        self.cells
            .iter()
            .filter_map(|cell| match cell.detector.status() {
                DetectorStatus::Detected {
                    phi, detected_at, ..
                } => Some(ElementDetection {
                    h: cell.h,
                    l: cell.l,
                    step: cell.base_step + detected_at,
                    phi: *phi,
                    observations: cell.detector.observation_count(),
                }),
                DetectorStatus::Collecting => None,
            })
            .collect()
    }

    /// Assembled consensus matrix once every element has fired: the matrix
    /// of limits and the latest detection step.
    pub fn matrix_consensus(&self) -> Option<(DMatrix<f64>, usize)> {
        let detections = self.detections();
        if detections.len() != self.cells.len() {
            return None;
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let mut done_at = 0;
        for det in &detections {
            out[(det.h, det.l)] = det.phi;
            if self.symmetric {
                out[(det.l, det.h)] = det.phi;
            }
            done_at = done_at.max(det.step);
        }
        Some((out, done_at))
    }
}
