use nalgebra::DMatrix;

use super::state::{mean_row, AgentStreams, AlgorithmState, HyperParams, Variant};
use crate::error::{LabError, Result};
use crate::oracle::{ObjectiveSuite, Sampling};
use crate::topology::{LcaOperator, MixingMatrix};

/// Everything a stepper reads besides the state and the random streams.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Absent for centralized variants.
    pub mixing: Option<&'a MixingMatrix>,
    /// Present exactly for DSMT.
    pub lca: Option<&'a LcaOperator>,
    pub oracle: &'a ObjectiveSuite,
    pub hp: HyperParams,
    pub sampling: Sampling,
    /// Heavy-ball coefficient of DSGT_HB.
    pub hb_momentum: f64,
}

impl<'a> StepContext<'a> {
    /// Context with the operators `variant` expects and nothing else.
    pub fn for_variant(
        variant: Variant,
        mixing: &'a MixingMatrix,
        lca: &'a LcaOperator,
        oracle: &'a ObjectiveSuite,
        hp: HyperParams,
        sampling: Sampling,
    ) -> Self {
        Self {
            mixing: (!variant.is_centralized()).then_some(mixing),
            lca: variant.uses_lca().then_some(lca),
            oracle,
            hp,
            sampling,
            hb_momentum: 0.9,
        }
    }

    fn check(&self, variant: Variant, n: usize) -> Result<()> {
        self.hp.validate()?;
        if variant.uses_lca() != self.lca.is_some() {
            return Err(LabError::Domain(format!("{variant} requires lca present={}", variant.uses_lca())));
        }
        if variant.is_centralized() == self.mixing.is_some() {
            return Err(LabError::Domain(format!(
                "{variant} requires mixing present={}",
                !variant.is_centralized()
            )));
        }
        if let Some(m) = self.mixing.or(self.lca.map(|l| l.mixing())) {
            if m.n() != n {
                return Err(LabError::shape(format!("{n} agents"), format!("{} agents in mixing", m.n())));
            }
        }
        if self.oracle.n_agents() != n {
            return Err(LabError::shape(format!("{n} agents"), format!("{} agents in oracle", self.oracle.n_agents())));
        }
        if variant == Variant::DsgtHb && !(0.0..1.0).contains(&self.hb_momentum) {
            return Err(LabError::Domain(format!("heavy-ball momentum must lie in [0, 1), got {}", self.hb_momentum)));
        }
        Ok(())
    }

    fn mix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mixing.expect("checked by StepContext::check").mix(m)
    }

    fn lca(&self) -> &LcaOperator {
        self.lca.expect("checked by StepContext::check")
    }
}

fn guard(m: &DMatrix<f64>, k: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LabError::Divergence { k })
    }
}

/// One gradient per agent at its own row of `x`; centralized variants get the
/// mean replicated on every row.
fn sample_all(
    variant: Variant,
    ctx: &StepContext<'_>,
    x: &DMatrix<f64>,
    streams: &mut AgentStreams,
    k: usize,
) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if streams.len() != n {
        return Err(LabError::shape(format!("{n} streams"), streams.len()));
    }
    let mut g = DMatrix::zeros(n, p);
    for i in 0..n {
        let row = x.row(i).transpose();
        let s = match ctx.oracle.sample_grad(i, &row, ctx.sampling, streams.agent(i)) {
            Ok(s) => s,
            Err(LabError::NonFinite(_)) => return Err(LabError::Divergence { k }),
            Err(e) => return Err(e),
        };
        g.set_row(i, &s.value.transpose());
    }
    if variant.is_centralized() {
        let mean = mean_row(&g).transpose();
        for i in 0..n {
            g.set_row(i, &mean);
        }
    }
    Ok(g)
}

fn empty(p: usize) -> DMatrix<f64> {
    DMatrix::zeros(0, p)
}

/// Builds the `k = 0` state, sampling `g₀` once per agent at `x0`.
///
/// Momentum variants start from `y = yˡ = z = (1−β)g₀` with `z₋₁ = 0`;
/// DSGT and DSGT_HB start from `y = g₀`. Centralized variants start every row
/// at the mean of `x0`.
pub fn init_state(
    variant: Variant,
    x0: &DMatrix<f64>,
    ctx: &StepContext<'_>,
    streams: &mut AgentStreams,
) -> Result<AlgorithmState> {
    let (n, p) = x0.shape();
    if p != ctx.oracle.dim() {
        return Err(LabError::shape(format!("x0 with {} columns", ctx.oracle.dim()), format!("{n}x{p}")));
    }
    ctx.check(variant, n)?;
    let x = if variant.is_centralized() {
        let mean = mean_row(x0).transpose();
        DMatrix::from_fn(n, p, |_, q| mean[q])
    } else {
        x0.clone()
    };
    guard(&x, 0)?;
    let g = sample_all(variant, ctx, &x, streams, 0)?;
    let beta = ctx.hp.beta;
    let momentum = &g * (1.0 - beta);
    let x_bar = mean_row(&x);
    let mut s = AlgorithmState {
        variant,
        k: 0,
        x_l: empty(p),
        y: empty(p),
        y_l: empty(p),
        z: empty(p),
        z_prev: empty(p),
        g: empty(p),
        x_prev: empty(p),
        g_prev: empty(p),
        g_bar_last: mean_row(&g),
        x_bar_prev: x_bar,
        x,
    };
    match variant {
        Variant::Dsmt => {
            s.x_l = s.x.clone();
            s.y = momentum.clone();
            s.y_l = momentum.clone();
            s.z = momentum;
            s.z_prev = DMatrix::zeros(n, p);
        }
        Variant::DsmtNoLca => {
            s.y = momentum.clone();
            s.z = momentum;
            s.z_prev = DMatrix::zeros(n, p);
        }
        Variant::Csgdm => {
            s.z = momentum;
            s.z_prev = DMatrix::zeros(n, p);
        }
        Variant::Dsgt => {
            s.y = g.clone();
            s.g = g;
        }
        Variant::DsgtHb => {
            s.y = g.clone();
            s.g = g;
            s.x_prev = s.x.clone();
        }
        Variant::Ed => {
            s.x_prev = s.x.clone();
            s.g_prev = g.clone();
            s.g = g;
        }
        Variant::Dsgd | Variant::Csgd => s.g = g,
    }
    Ok(s)
}

fn finish(mut next: AlgorithmState, prev: &AlgorithmState, g: &DMatrix<f64>) -> Result<AlgorithmState> {
    next.k = prev.k + 1;
    next.g_bar_last = mean_row(g);
    next.x_bar_prev = prev.x_bar();
    if !next.is_finite() {
        return Err(LabError::Divergence { k: next.k });
    }
    Ok(next)
}

fn expect_variant(state: &AlgorithmState, allowed: &[Variant]) -> Result<()> {
    if allowed.contains(&state.variant) {
        Ok(())
    } else {
        Err(LabError::Domain(format!("stepper does not handle {}", state.variant)))
    }
}

/// One DSMT iteration: two LCA rounds and one gradient sample per agent.
pub fn dsmt_step(state: &AlgorithmState, ctx: &StepContext<'_>, streams: &mut AgentStreams) -> Result<AlgorithmState> {
    expect_variant(state, &[Variant::Dsmt])?;
    ctx.check(state.variant, state.n())?;
    let HyperParams { alpha, beta, .. } = ctx.hp;
    let k = state.k + 1;
    let x_half = &state.x - &state.y * alpha;
    let xl_half = &state.x_l - &state.y * alpha;
    let (x, x_l) = ctx.lca().apply(&x_half, &xl_half)?;
    guard(&x, k)?;
    let g = sample_all(state.variant, ctx, &x, streams, k)?;
    let z = &state.z * beta + &g * (1.0 - beta);
    let y_half = &state.y + &z - &state.z;
    let yl_half = &state.y_l + &z - &state.z;
    let (y, y_l) = ctx.lca().apply(&y_half, &yl_half)?;
    let next = AlgorithmState {
        x,
        x_l,
        y,
        y_l,
        z_prev: state.z.clone(),
        z,
        ..state.clone()
    };
    finish(next, state, &g)
}

/// Momentum tracking with plain mixing (DSMT_noLCA).
pub fn smt_step(state: &AlgorithmState, ctx: &StepContext<'_>, streams: &mut AgentStreams) -> Result<AlgorithmState> {
    expect_variant(state, &[Variant::DsmtNoLca])?;
    ctx.check(state.variant, state.n())?;
    let HyperParams { alpha, beta, .. } = ctx.hp;
    let k = state.k + 1;
    let x = ctx.mix(&(&state.x - &state.y * alpha))?;
    guard(&x, k)?;
    let g = sample_all(state.variant, ctx, &x, streams, k)?;
    let z = &state.z * beta + &g * (1.0 - beta);
    let y = ctx.mix(&(&state.y + &z - &state.z))?;
    let next = AlgorithmState {
        x,
        y,
        z_prev: state.z.clone(),
        z,
        ..state.clone()
    };
    finish(next, state, &g)
}

/// Gradient tracking.
pub fn dsgt_step(state: &AlgorithmState, ctx: &StepContext<'_>, streams: &mut AgentStreams) -> Result<AlgorithmState> {
    expect_variant(state, &[Variant::Dsgt])?;
    ctx.check(state.variant, state.n())?;
    let alpha = ctx.hp.alpha;
    let k = state.k + 1;
    let x = ctx.mix(&(&state.x - &state.y * alpha))?;
    guard(&x, k)?;
    let g = sample_all(state.variant, ctx, &x, streams, k)?;
    let y = ctx.mix(&(&state.y + &g - &state.g))?;
    let next = AlgorithmState {
        x,
        y,
        g: g.clone(),
        ..state.clone()
    };
    finish(next, state, &g)
}

/// DSGD, ED, DSGT_HB, CSGD and CSGDM.
pub fn baseline_step(state: &AlgorithmState, ctx: &StepContext<'_>, streams: &mut AgentStreams) -> Result<AlgorithmState> {
    expect_variant(
        state,
        &[Variant::Dsgd, Variant::Ed, Variant::DsgtHb, Variant::Csgd, Variant::Csgdm],
    )?;
    ctx.check(state.variant, state.n())?;
    let HyperParams { alpha, beta, .. } = ctx.hp;
    let k = state.k + 1;
    let v = state.variant;
    let x = match v {
        Variant::Dsgd => ctx.mix(&(&state.x - &state.g * alpha))?,
        Variant::Ed if state.k == 0 => ctx.mix(&(&state.x - &state.g * alpha))?,
        Variant::Ed => {
            let inner = &state.x * 2.0 - &state.x_prev - (&state.g - &state.g_prev) * alpha;
            ctx.mix(&inner)?
        }
        Variant::DsgtHb => {
            ctx.mix(&(&state.x - &state.y * alpha))? + (&state.x - &state.x_prev) * ctx.hb_momentum
        }
        Variant::Csgd => &state.x - &state.g * alpha,
        Variant::Csgdm => &state.x - &state.z * alpha,
        _ => unreachable!("filtered by expect_variant"),
    };
    guard(&x, k)?;
    let g = sample_all(v, ctx, &x, streams, k)?;
    let mut next = state.clone();
    match v {
        Variant::Dsgd | Variant::Csgd => next.g = g.clone(),
        Variant::Ed => {
            next.x_prev = state.x.clone();
            next.g_prev = state.g.clone();
            next.g = g.clone();
        }
        Variant::DsgtHb => {
            next.y = ctx.mix(&(&state.y + &g - &state.g))?;
            next.x_prev = state.x.clone();
            next.g = g.clone();
        }
        Variant::Csgdm => {
            next.z = &state.z * beta + &g * (1.0 - beta);
            next.z_prev = state.z.clone();
        }
        _ => unreachable!("filtered by expect_variant"),
    }
    next.x = x;
    finish(next, state, &g)
}

/// Dispatches on `state.variant`.
pub fn step(state: &AlgorithmState, ctx: &StepContext<'_>, streams: &mut AgentStreams) -> Result<AlgorithmState> {
    match state.variant {
        Variant::Dsmt => dsmt_step(state, ctx, streams),
        Variant::DsmtNoLca => smt_step(state, ctx, streams),
        Variant::Dsgt => dsgt_step(state, ctx, streams),
        _ => baseline_step(state, ctx, streams),
    }
}
