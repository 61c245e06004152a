//! Discretized low-pass and band-pass consensus filters, plus the stacked
//! per-element state-space form used for spectral analysis.
//!
//! Every update is a synchronous round: all nodes read the same pre-step
//! snapshot, then the whole state vector swaps at once. The step functions
//! are pure; calling twice with identical arguments gives bitwise-identical
//! results.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-node consensus filter state: the low-pass vector state `g`, the
/// band-pass output matrix `s`, and the band-pass internal matrix `p_band`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusFilterState {
    pub g: DVector<f64>,
    pub s: DMatrix<f64>,
    pub p_band: DMatrix<f64>,
}

impl ConsensusFilterState {
    pub fn zeros(dim: usize) -> Self {
        ConsensusFilterState {
            g: DVector::zeros(dim),
            s: DMatrix::zeros(dim, dim),
            p_band: DMatrix::zeros(dim, dim),
        }
    }
}

/// How the band-pass second stage reads its first stage.
///
/// The first stage tracks the deviation of each input from the running
/// network average; its output signal is `p_band + u`. Coupling the second
/// stage to that stage output drives `s` to the exact input average from any
/// zero start. Coupling it to the internal state alone reproduces the same
/// recursion with the direct input term dropped, which biases the limit by
/// the input profile; it is kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandpassCoupling {
    /// Second stage reads the first stage's internal state `p_band`.
    InternalState,
    /// Second stage reads the stage output `p_band + u`.
    StageOutput,
}

fn check_step_size(graph: &Graph, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::StepSizeTooLarge {
            eps,
            bound: f64::INFINITY,
        });
    }
    if let Ok(bound) = graph.max_step_size() {
        if eps >= bound {
            return Err(Error::StepSizeTooLarge { eps, bound });
        }
    }
    Ok(())
}

/// One synchronous low-pass round:
/// `g_i ← g_i + ε[Σ_{j∈N_i} w_ij (g_j − g_i) + Σ_{j∈N_i∪{i}} (u_j − g_i)]`
/// where the self term enters with unit weight.
pub fn lowpass_step(
    graph: &Graph,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    eps: f64,
) -> Result<Vec<DVector<f64>>> {
    check_step_size(graph, eps)?;
    let n = graph.node_count();
    if states.len() != n || inputs.len() != n {
        return Err(Error::InvalidScenario(
            "low-pass states/inputs must cover all nodes".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut delta = &inputs[i] - &states[i];
        for &(j, w) in graph.neighbors(i) {
            delta += (&states[j] - &states[i]) * w;
            delta += (&inputs[j] - &states[i]) * w;
        }
        out.push(&states[i] + delta * eps);
    }
    Ok(out)
}

/// One synchronous band-pass round over matrix-valued signals.
///
/// The internal stage always runs
/// `p_i ← p_i + ε Σ_{j∈N_i} w_ij [(p_j − p_i) + (u_j − u_i)]`;
/// the output stage reads either `p_j` or `p_j + u_j` per `coupling`. Both
/// stages read the pre-step snapshot.
pub fn bandpass_step(
    graph: &Graph,
    states: &[(DMatrix<f64>, DMatrix<f64>)],
    inputs: &[DMatrix<f64>],
    eps: f64,
    coupling: BandpassCoupling,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    check_step_size(graph, eps)?;
    let n = graph.node_count();
    if states.len() != n || inputs.len() != n {
        return Err(Error::InvalidScenario(
            "band-pass states/inputs must cover all nodes".into(),
        ));
    }
    let stage = |i: usize| -> DMatrix<f64> {
        let (_, ref p) = states[i];
        match coupling {
            BandpassCoupling::InternalState => p.clone(),
            BandpassCoupling::StageOutput => p + &inputs[i],
        }
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (ref s_i, ref p_i) = states[i];
        let mut dp = DMatrix::zeros(p_i.nrows(), p_i.ncols());
        let mut ds = stage(i) - s_i;
        for &(j, w) in graph.neighbors(i) {
            let (ref s_j, ref p_j) = states[j];
            dp += ((p_j - p_i) + (&inputs[j] - &inputs[i])) * w;
            ds += (s_j - s_i) * w;
            ds += (stage(j) - s_i) * w;
        }
        out.push((s_i + ds * eps, p_i + dp * eps));
    }
    Ok(out)
}

/// Which block structure the stacked system carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackedForm {
    /// Coupling blocks are the bare degree and adjacency matrices.
    NeighborSums,
    /// Degree and adjacency blocks augmented by the identity, matching a
    /// direct vectorization of the filter recursion (each node's input sum
    /// includes its own term).
    SelfInclusive,
}

/// Stacked per-element consensus dynamics
/// `[s(k+1); p(k+1)] = 𝒜 [s(k); p(k)] + ℬ u(k)`, `y = 𝒞 [s; p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedConsensusSystem {
    pub a_mat: DMatrix<f64>,
    pub b_mat: DMatrix<f64>,
    pub c_row: RowDVector<f64>,
}

/// Stacked system in the block form with bare degree/adjacency coupling and
/// input entering only the internal block.
pub fn build_stacked_system(graph: &Graph, eps: f64, node: usize) -> StackedConsensusSystem {
    assemble(graph, eps, node, StackedForm::NeighborSums, BandpassCoupling::InternalState)
}

/// Stacked system whose blocks match the band-pass recursion as executed,
/// for the requested second-stage coupling.
pub fn build_stacked_system_filter_form(
    graph: &Graph,
    eps: f64,
    node: usize,
    coupling: BandpassCoupling,
) -> StackedConsensusSystem {
    assemble(graph, eps, node, StackedForm::SelfInclusive, coupling)
}

fn assemble(
    graph: &Graph,
    eps: f64,
    node: usize,
    form: StackedForm,
    coupling: BandpassCoupling,
) -> StackedConsensusSystem {
    let n = graph.node_count();
    let m = graph.derive_matrices();
    let eye = DMatrix::<f64>::identity(n, n);
    let (deg, adj) = match form {
        StackedForm::NeighborSums => (m.degree.clone(), m.adjacency.clone()),
        StackedForm::SelfInclusive => (&m.degree + &eye, &m.adjacency + &eye),
    };
    let top_left = &eye - &m.laplacian * eps - &deg * eps;
    let top_right = &adj * eps;
    let bottom_right = &eye - &m.laplacian * eps;

    let mut a_mat = DMatrix::zeros(2 * n, 2 * n);
    a_mat.view_mut((0, 0), (n, n)).copy_from(&top_left);
    a_mat.view_mut((0, n), (n, n)).copy_from(&top_right);
    a_mat.view_mut((n, n), (n, n)).copy_from(&bottom_right);

    let mut b_mat = DMatrix::zeros(2 * n, n);
    b_mat
        .view_mut((n, 0), (n, n))
        .copy_from(&(&m.laplacian * (-eps)));
    if form == StackedForm::SelfInclusive && coupling == BandpassCoupling::StageOutput {
        b_mat.view_mut((0, 0), (n, n)).copy_from(&(&adj * eps));
    }

    let mut c_row = RowDVector::zeros(2 * n);
    c_row[node] = 1.0;
    StackedConsensusSystem { a_mat, b_mat, c_row }
}

/// Eigenvalue classification of a stacked system.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Count of eigenvalues with `|λ − 1| ≤ 1e-9`.
    pub unit_count: usize,
    /// True iff exactly one eigenvalue sits at 1 and none leave the closed
    /// unit disk (tolerance 1e-9).
    pub stable: bool,
}

/// Classifies the eigenvalues of the stacked system matrix.
pub fn spectrum_check(sys: &StackedConsensusSystem) -> SpectrumReport {
    const TOL: f64 = 1e-9;
    let eig = sys.a_mat.complex_eigenvalues();
    let eigenvalues: Vec<Complex<f64>> = eig.iter().copied().collect();
    let unit_count = eigenvalues
        .iter()
        .filter(|l| (*l - Complex::new(1.0, 0.0)).norm() <= TOL)
        .count();
    let inside = eigenvalues.iter().all(|l| l.norm() <= 1.0 + TOL);
    SpectrumReport {
        stable: unit_count == 1 && inside,
        unit_count,
        eigenvalues,
    }
}
