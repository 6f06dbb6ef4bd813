//! Theorem-driven stepsize and momentum selection.
//!
//! Nonconvex (`n^{1/3}` momentum schedule):
//! `α = 1/(√(L(2Cσ*_f+σ²)K/(3nΔ₀)) + γ)`, `β = 1 − (1−ρ̃)/n^{1/3}`, with
//! `γ = (4032c₀²L²(C+L)/(n^{1/3}(1−ρ̃)²))^{1/3} + 24c₀n^{1/3}(L+C)/(1−ρ̃)
//!     + √(8CLK/n) + (480c₀²CL²K/(n^{2/3}(1−ρ̃)))^{1/3}`.
//! Admissibility:
//! - `ncvx_1 = √((1−ρ̃)²/(240c₀²L(L+C)))`
//! - `ncvx_2 = (1−β)/(24(L+C))`
//! - `ncvx_3 = ((1−ρ̃)³/(4032c₀²(1−β)L²(C+L)))^{1/3}`
//! - `ncvx_4 = √(n/(8CLK))`
//! - `ncvx_5 = ((1−ρ̃)³/(480c₀²CL²(1−β)²K))^{1/3}`
//!
//! PL (`√n` momentum schedule):
//! `α = (4/(μK))·ln(33nμ²K𝓛₀/((2Cσ*_f+σ²)L))`, `β = 1 − (1−ρ̃)/√n`.
//! Admissibility:
//! - `pl_1 = (1−β)/(3μ)`
//! - `pl_2 = (1−β)/(486c₀²(L+C))`
//! - `pl_3 = √((1−ρ̃)²/(240c₀²L(L+C)))`
//! - `pl_4 = √((1−ρ̃)/(324c₀²(L+C)²))`
//! - `pl_5 = √(μ(1−β)²/(960c₀²L(L+C)²))`

use serde::{Deserialize, Serialize};

use super::state::HyperParams;
use crate::error::{LabError, Result};
use crate::oracle::ProblemConstants;
use crate::topology::C0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub name: String,
    pub value: f64,
}

/// Outcome of a selector: the clamped parameters plus everything needed to
/// see how they were reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSelection {
    /// `α = min(formula, bounds)`.
    pub hp: HyperParams,
    pub formula_alpha: f64,
    /// `"formula"` or the name of the smallest bound.
    pub active_bound: String,
    pub bounds: Vec<Bound>,
}

impl ParamSelection {
    fn assemble(formula_alpha: f64, beta: f64, iterations: usize, bounds: Vec<Bound>) -> Result<Self> {
        let mut alpha = formula_alpha;
        let mut active = "formula".to_string();
        for b in &bounds {
            if b.value < alpha {
                alpha = b.value;
                active = b.name.clone();
            }
        }
        Ok(Self {
            hp: HyperParams::new(alpha, beta, iterations)?,
            formula_alpha,
            active_bound: active,
            bounds,
        })
    }

    /// Parameters with the formula stepsize left as printed.
    pub fn unclamped(&self) -> HyperParams {
        HyperParams {
            alpha: self.formula_alpha,
            ..self.hp
        }
    }

    /// Bounds that `alpha` violates.
    pub fn violations(&self, alpha: f64) -> Vec<&Bound> {
        self.bounds.iter().filter(|b| alpha > b.value).collect()
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(LabError::Params(format!("{name} must be positive, got {v}")))
    }
}

fn require_nonnegative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(LabError::Params(format!("{name} must be nonnegative, got {v}")))
    }
}

fn common_checks(c: &ProblemConstants, iterations: usize, n: usize, rho_tilde: f64) -> Result<()> {
    require_positive("L", c.l)?;
    require_nonnegative("C", c.c)?;
    require_nonnegative("sigma", c.sigma)?;
    require_nonnegative("sigma_star_f", c.sigma_star_f)?;
    if iterations == 0 {
        return Err(LabError::Params("K must be at least 1".into()));
    }
    if n == 0 {
        return Err(LabError::Params("n must be at least 1".into()));
    }
    if !(rho_tilde > 0.0 && rho_tilde < 1.0) {
        return Err(LabError::Params(format!("rho_tilde must lie in (0, 1), got {rho_tilde}")));
    }
    Ok(())
}

/// `√(num/den)` with `num/0 = ∞`.
fn sqrt_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).sqrt()
    }
}

fn cbrt_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        (num / den).cbrt()
    }
}

/// Nonconvex selector.
pub fn select_params_ncvx(
    constants: &ProblemConstants,
    iterations: usize,
    n: usize,
    rho_tilde: f64,
) -> Result<ParamSelection> {
    common_checks(constants, iterations, n, rho_tilde)?;
    require_positive("delta0", constants.delta0)?;
    let ProblemConstants { l, c, .. } = *constants;
    let k = iterations as f64;
    let nf = n as f64;
    let gap = 1.0 - rho_tilde;
    let c0 = C0;
    let n13 = nf.cbrt();
    let gamma = (4032.0 * c0 * c0 * l * l * (c + l) / (n13 * gap * gap)).cbrt()
        + 24.0 * c0 * n13 * (l + c) / gap
        + (8.0 * c * l * k / nf).sqrt()
        + (480.0 * c0 * c0 * c * l * l * k / (n13 * n13 * gap)).cbrt();
    let lead = (l * constants.noise_level() * k / (3.0 * nf * constants.delta0)).sqrt();
    let formula = 1.0 / (lead + gamma);
    let beta = 1.0 - gap / n13;
    let one_minus_beta = 1.0 - beta;
    let bounds = vec![
        Bound {
            name: "ncvx_1".into(),
            value: (gap * gap / (240.0 * c0 * c0 * l * (l + c))).sqrt(),
        },
        Bound {
            name: "ncvx_2".into(),
            value: one_minus_beta / (24.0 * (l + c)),
        },
        Bound {
            name: "ncvx_3".into(),
            value: (gap.powi(3) / (4032.0 * c0 * c0 * one_minus_beta * l * l * (c + l))).cbrt(),
        },
        Bound {
            name: "ncvx_4".into(),
            value: sqrt_ratio(nf, 8.0 * c * l * k),
        },
        Bound {
            name: "ncvx_5".into(),
            value: cbrt_ratio(gap.powi(3), 480.0 * c0 * c0 * c * l * l * one_minus_beta * one_minus_beta * k),
        },
    ];
    ParamSelection::assemble(formula, beta, iterations, bounds)
}

/// PL selector; `lyap0` estimates the initial Lyapunov value `𝓛₀`.
pub fn select_params_pl(
    constants: &ProblemConstants,
    iterations: usize,
    n: usize,
    rho_tilde: f64,
    lyap0: f64,
) -> Result<ParamSelection> {
    common_checks(constants, iterations, n, rho_tilde)?;
    let mu = constants
        .mu
        .ok_or_else(|| LabError::Params("mu is required for the PL selector".into()))?;
    require_positive("mu", mu)?;
    require_positive("lyapunov estimate", lyap0)?;
    require_positive("noise level 2C*sigma_star_f + sigma^2", constants.noise_level())?;
    if n < 2 {
        return Err(LabError::Params(format!("PL selector needs n >= 2, got {n}")));
    }
    let ProblemConstants { l, c, .. } = *constants;
    let k = iterations as f64;
    let nf = n as f64;
    let arg = 33.0 * nf * mu * mu * k * lyap0 / (constants.noise_level() * l);
    if !(arg > 1.0) {
        return Err(LabError::Params(format!(
            "log argument {arg} <= 1; increase K (currently {iterations})"
        )));
    }
    let formula = 4.0 / (mu * k) * arg.ln();
    let gap = 1.0 - rho_tilde;
    let beta = 1.0 - gap / nf.sqrt();
    let one_minus_beta = 1.0 - beta;
    let c0 = C0;
    let bounds = vec![
        Bound {
            name: "pl_1".into(),
            value: one_minus_beta / (3.0 * mu),
        },
        Bound {
            name: "pl_2".into(),
            value: one_minus_beta / (486.0 * c0 * c0 * (l + c)),
        },
        Bound {
            name: "pl_3".into(),
            value: (gap * gap / (240.0 * c0 * c0 * l * (l + c))).sqrt(),
        },
        Bound {
            name: "pl_4".into(),
            value: (gap / (324.0 * c0 * c0 * (l + c) * (l + c))).sqrt(),
        },
        Bound {
            name: "pl_5".into(),
            value: (mu * one_minus_beta * one_minus_beta / (960.0 * c0 * c0 * l * (l + c) * (l + c))).sqrt(),
        },
    ];
    ParamSelection::assemble(formula, beta, iterations, bounds)
}
