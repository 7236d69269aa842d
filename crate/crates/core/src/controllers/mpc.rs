use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ControlOutput, ControllerInput, InputBounds};
use crate::error::{Error, Result};
use crate::polytope::Polytope;
use crate::solvers::{QpSolver, SolveStatus, WarmStart, DEFAULT_TOL};
use crate::synthesis::{CostWeights, LqrLaw, LtiModel};

/// Lengths, in fine samples, of the blocks over which a predicted input is
/// held. A horizon without blocking is all ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPattern {
    blocks: Vec<usize>,
}

impl BlockingPattern {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || blocks.contains(&0) {
            return Err(Error::InvalidArgument("blocks must be nonempty and positive".into()));
        }
        Ok(BlockingPattern { blocks })
    }

    /// `n` single-sample blocks.
    pub fn full(n: usize) -> Result<Self> {
        BlockingPattern::new(vec![1; n])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    /// Number of decision instants per input.
    pub fn moves(&self) -> usize {
        self.blocks.len()
    }

    /// Horizon length in fine samples.
    pub fn horizon(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Fraction of decision instants removed relative to no blocking.
    pub fn reduction(&self) -> f64 {
        1.0 - self.moves() as f64 / self.horizon() as f64
    }
}

/// One fine step followed by coarse blocks covering the rest of the horizon;
/// a trailing remainder shorter than a coarse block becomes its own block.
pub fn build_move_blocking(horizon_s: f64, ts_fine: f64, ts_coarse: f64) -> Result<BlockingPattern> {
    if !(ts_fine > 0.0) || !(ts_coarse > 0.0) || !horizon_s.is_finite() {
        return Err(Error::InvalidArgument("periods must be positive".into()));
    }
    let ratio = |a: f64, b: f64, what: &str| -> Result<usize> {
        let k = (a / b).round();
        if k < 1.0 || (k * b - a).abs() > 1e-9 * a.abs().max(b) {
            return Err(Error::InvalidArgument(format!("{what} is not a whole multiple of the fine period")));
        }
        Ok(k as usize)
    };
    let n = ratio(horizon_s, ts_fine, "horizon")?;
    let coarse = ratio(ts_coarse, ts_fine, "coarse period")?;
    let mut blocks = vec![1];
    let mut left = n - 1;
    while left > 0 {
        let b = coarse.min(left);
        blocks.push(b);
        left -= b;
    }
    BlockingPattern::new(blocks)
}

/// Receding-horizon controller solving a condensed QP per step.
///
/// Predicted states are taken at block boundaries. Block `i` contributes
/// `b_i·uᵢᵀRuᵢ`; the state closing block `i` is weighted by the length of
/// the next block (`Q` for the terminal state), so an unblocked horizon gives
/// exactly the stage-plus-terminal cost.
#[derive(Debug, Clone)]
pub struct MpcController {
    pattern: BlockingPattern,
    /// Fine-sample index of each block's end.
    ends: Vec<usize>,
    n: usize,
    m: usize,
    /// `f = f_x x₀ − f_r x̄_stack`.
    f_x: DMatrix<f64>,
    f_r: DMatrix<f64>,
    /// `b_ub = b_base − b_x x₀`.
    b_base: DVector<f64>,
    b_x: DMatrix<f64>,
    solver: QpSolver,
    warm: Option<WarmStart>,
    bounds: InputBounds,
    fallback: LqrLaw,
    tol: f64,
    steps: usize,
}

impl MpcController {
    pub fn new(
        model: &LtiModel,
        weights: &CostWeights,
        x_set: &Polytope,
        u_set: &Polytope,
        pattern: BlockingPattern,
        fallback: LqrLaw,
    ) -> Result<Self> {
        let (n, m) = (model.state_dim(), model.input_dim());
        if weights.q.nrows() != n {
            return Err(Error::dim(n, weights.q.nrows()));
        }
        if weights.r.nrows() != m {
            return Err(Error::dim(m, weights.r.nrows()));
        }
        if x_set.dim() != n {
            return Err(Error::dim(n, x_set.dim()));
        }
        if u_set.dim() != m {
            return Err(Error::dim(m, u_set.dim()));
        }
        let blocks = pattern.blocks().to_vec();
        let nb = blocks.len();
        let mut lifted: HashMap<usize, LtiModel> = HashMap::new();
        for &b in &blocks {
            if let std::collections::hash_map::Entry::Vacant(e) = lifted.entry(b) {
                e.insert(model.lifted(b)?);
            }
        }

        // Φ (n·nb × n) and Γ (n·nb × m·nb), block row i = state closing block i.
        let mut phi = DMatrix::zeros(n * nb, n);
        let mut gamma = DMatrix::zeros(n * nb, m * nb);
        let mut prev_phi = DMatrix::identity(n, n);
        for (i, b) in blocks.iter().enumerate() {
            let lm = &lifted[b];
            let cur = &lm.a * &prev_phi;
            phi.rows_mut(n * i, n).copy_from(&cur);
            prev_phi = cur;
            if i > 0 {
                let prev = gamma.view((n * (i - 1), 0), (n, m * i)).clone_owned();
                gamma.view_mut((n * i, 0), (n, m * i)).copy_from(&(&lm.a * prev));
            }
            gamma.view_mut((n * i, m * i), (n, m)).copy_from(&lm.b);
        }
        let mut ends = Vec::with_capacity(nb);
        let mut acc = 0;
        for b in &blocks {
            acc += b;
            ends.push(acc);
        }

        // Q̄Γ and Q̄Φ with per-boundary weights.
        let mut qg = DMatrix::zeros(n * nb, m * nb);
        let mut qp = DMatrix::zeros(n * nb, n);
        for i in 0..nb {
            let w = if i + 1 < nb { blocks[i + 1] as f64 } else { 1.0 };
            let wq = &weights.q * w;
            qg.rows_mut(n * i, n).copy_from(&(&wq * gamma.rows(n * i, n)));
            qp.rows_mut(n * i, n).copy_from(&(&wq * phi.rows(n * i, n)));
        }
        let gt = gamma.transpose();
        let mut h = &gt * &qg;
        for (i, &b) in blocks.iter().enumerate() {
            let mut blk = h.view_mut((m * i, m * i), (m, m));
            blk += &weights.r * b as f64;
        }
        let f_x = &gt * &qp;
        let f_r = qg.transpose();

        // State rows at every boundary, then input rows for every move.
        let (px, pu) = (x_set.num_rows(), u_set.num_rows());
        let rows = px * nb + pu * nb;
        let mut a_ub = DMatrix::zeros(rows, m * nb);
        let mut b_base = DVector::zeros(rows);
        let mut b_x = DMatrix::zeros(rows, n);
        for i in 0..nb {
            let r0 = px * i;
            a_ub.view_mut((r0, 0), (px, m * nb)).copy_from(&(x_set.f() * gamma.rows(n * i, n)));
            b_base.rows_mut(r0, px).copy_from(x_set.g());
            b_x.rows_mut(r0, px).copy_from(&(x_set.f() * phi.rows(n * i, n)));
        }
        for i in 0..nb {
            let r0 = px * nb + pu * i;
            a_ub.view_mut((r0, m * i), (pu, m)).copy_from(u_set.f());
            b_base.rows_mut(r0, pu).copy_from(u_set.g());
        }
        let solver = QpSolver::new(h, a_ub, DMatrix::zeros(0, m * nb))?;
        Ok(MpcController {
            pattern,
            ends,
            n,
            m,
            f_x,
            f_r,
            b_base,
            b_x,
            solver,
            warm: None,
            bounds: InputBounds::from_polytope(u_set)?,
            fallback,
            tol: DEFAULT_TOL,
            steps: 0,
        })
    }

    pub fn pattern(&self) -> &BlockingPattern {
        &self.pattern
    }

    /// Forgets the warm start.
    pub fn reset(&mut self) {
        self.warm = None;
        self.steps = 0;
    }

    /// Solves the QP and returns all predicted moves (`None` when the solver
    /// did not certify an optimum) together with its status.
    pub fn solve_moves(&mut self, input: &ControllerInput) -> Result<(Option<DVector<f64>>, SolveStatus)> {
        let horizon = self.pattern.horizon();
        input.check(self.n, horizon + 1)?;
        let mut xbar = DVector::zeros(self.n * self.ends.len());
        for (i, &e) in self.ends.iter().enumerate() {
            xbar.rows_mut(self.n * i, self.n).copy_from(&input.window[e]);
        }
        let f = &self.f_x * input.x - &self.f_r * xbar;
        let b_ub = &self.b_base - &self.b_x * input.x;
        let (res, warm) = self.solver.solve(&f, &b_ub, &DVector::zeros(0), self.tol, self.warm.as_ref())?;
        self.steps += 1;
        if res.is_optimal() {
            self.warm = Some(warm);
            Ok((res.x, res.status))
        } else {
            Ok((None, res.status))
        }
    }

    /// First predicted input, or the clamped LQR tracking law when the QP
    /// fails (flagged in the output).
    pub fn step(&mut self, input: &ControllerInput) -> Result<ControlOutput> {
        let start = Instant::now();
        let (moves, status) = self.solve_moves(input)?;
        let (mut u, fallback, diagnostic) = match moves {
            Some(z) => (z.rows(0, self.m).clone_owned(), false, None),
            None => {
                let n = (self.pattern.horizon() + 1).min(input.window.len());
                let u = self.fallback.tracking_control(input.x, &input.window[..n])?;
                (u, true, Some(format!("QP ended with status {}", status.as_str())))
            }
        };
        let saturated = self.bounds.clamp(&mut u);
        Ok(ControlOutput {
            u,
            c_star: None,
            region: None,
            solve_time: start.elapsed(),
            solver_status: Some(status),
            fallback,
            saturated,
            diagnostic,
        })
    }
}
