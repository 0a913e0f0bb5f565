//! Lagrangian relaxation of the cost-per-click and risk constraints.
//!
//! The penalty is `lambda_c * max(0, cpc - c_max) + lambda_r * max(0, risk - r_max)`;
//! the multipliers are learned by projected dual ascent between epochs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lagrange multipliers together with the thresholds they enforce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda_c: f64,
    pub lambda_r: f64,
    /// Currency per click.
    pub c_max: f64,
    /// Probability threshold on mean predicted risk.
    pub r_max: f64,
    pub eta_dual: f64,
}

impl DualState {
    pub fn new(lambda_c: f64, lambda_r: f64, c_max: f64, r_max: f64, eta_dual: f64) -> Result<Self> {
        if !(lambda_c >= 0.0 && lambda_r >= 0.0) {
            return Err(Error::config("dual.lambda", "multipliers must be nonnegative"));
        }
        if !(c_max > 0.0 && c_max.is_finite()) {
            return Err(Error::config("dual.c_max", "must be positive"));
        }
        if !(0.0..=1.0).contains(&r_max) {
            return Err(Error::config("dual.r_max", "must lie in [0, 1]"));
        }
        if !(eta_dual > 0.0 && eta_dual.is_finite()) {
            return Err(Error::config("dual.eta_dual", "must be positive"));
        }
        Ok(DualState {
            lambda_c,
            lambda_r,
            c_max,
            r_max,
            eta_dual,
        })
    }
}

/// Score-weighted mean bid `sum(bid * s) / sum(s)` and its gradient w.r.t. `s`.
pub fn batch_cpc(bids: &[f64], s_rel: &[f64]) -> Result<(f64, Vec<f64>)> {
    if bids.is_empty() {
        return Err(Error::EmptyInput("cpc batch"));
    }
    if bids.len() != s_rel.len() {
        return Err(Error::LengthMismatch {
            what: "bids vs relevance scores",
            left: bids.len(),
            right: s_rel.len(),
        });
    }
    let mass: f64 = s_rel.iter().sum();
    if !(mass >= 1e-12) {
        return Err(Error::DegenerateBatch(mass));
    }
    let cpc = bids.iter().zip(s_rel).map(|(b, s)| b * s).sum::<f64>() / mass;
    let grad = bids.iter().map(|b| (b - cpc) / mass).collect();
    Ok((cpc, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintPenalty {
    pub penalty: f64,
    pub d_cpc: f64,
    pub d_risk: f64,
}

/// Hinge penalty with zero subgradient at the boundary.
pub fn constraint_penalty(cpc: f64, mean_risk: f64, dual: &DualState) -> ConstraintPenalty {
    let vc = cpc - dual.c_max;
    let vr = mean_risk - dual.r_max;
    let (pc, dc) = if vc > 0.0 { (dual.lambda_c * vc, dual.lambda_c) } else { (0.0, 0.0) };
    let (pr, dr) = if vr > 0.0 { (dual.lambda_r * vr, dual.lambda_r) } else { (0.0, 0.0) };
    ConstraintPenalty {
        penalty: pc + pr,
        d_cpc: dc,
        d_risk: dr,
    }
}

/// Projected ascent step on both multipliers.
pub fn dual_update(dual: &DualState, cpc: f64, mean_risk: f64) -> DualState {
    DualState {
        lambda_c: (dual.lambda_c + dual.eta_dual * (cpc - dual.c_max)).max(0.0),
        lambda_r: (dual.lambda_r + dual.eta_dual * (mean_risk - dual.r_max)).max(0.0),
        ..*dual
    }
}

/// Optional exposure-fairness hinge: each segment's share of relevance mass
/// may exceed an equal share by at most `slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessConfig {
    pub enabled: bool,
    pub slack: f64,
    pub lambda_init: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            enabled: false,
            slack: 0.05,
            lambda_init: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessPenalty {
    pub penalty: f64,
    /// Largest share excess over the target (may be negative).
    pub max_violation: f64,
    pub grad: Vec<f64>,
}

/// `lambda * sum_g max(0, share_g - 1/G - slack)` where `share_g` is segment
/// `g`'s fraction of `sum(s_rel)` and `G` counts segments present in the batch.
pub fn fairness_penalty(
    s_rel: &[f64],
    segments: &[usize],
    lambda: f64,
    slack: f64,
) -> Result<FairnessPenalty> {
    if s_rel.len() != segments.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs segments",
            left: s_rel.len(),
            right: segments.len(),
        });
    }
    let mass: f64 = s_rel.iter().sum();
    if !(mass >= 1e-12) {
        return Err(Error::DegenerateBatch(mass));
    }
    let n_groups = segments.iter().map(|&g| g + 1).max().unwrap_or(0);
    let mut group_mass = vec![0.0; n_groups];
    let mut present = vec![false; n_groups];
    for (&s, &g) in s_rel.iter().zip(segments) {
        group_mass[g] += s;
        present[g] = true;
    }
    let g_count = present.iter().filter(|&&p| p).count() as f64;
    let target = 1.0 / g_count + slack;
    let mut penalty = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    // d share_g / d s_i = ([g(i) = g] - share_g) / mass
    let mut active = vec![false; n_groups];
    let mut active_share_sum = 0.0;
    for g in 0..n_groups {
        if !present[g] {
            continue;
        }
        let share = group_mass[g] / mass;
        let v = share - target;
        max_violation = max_violation.max(v);
        if v > 0.0 {
            penalty += lambda * v;
            active[g] = true;
            active_share_sum += share;
        }
    }
    let grad = segments
        .iter()
        .map(|&g| lambda * ((if active[g] { 1.0 } else { 0.0 }) - active_share_sum) / mass)
        .collect();
    Ok(FairnessPenalty {
        penalty,
        max_violation,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(lc: f64, lr: f64) -> DualState {
        DualState::new(lc, lr, 1.0, 0.3, 0.1).unwrap()
    }

    #[test]
    fn cpc_of_constant_bids() {
        let (cpc, _) = batch_cpc(&[2.5; 4], &[0.1, 0.9, 0.3, 0.4]).unwrap();
        assert!((cpc - 2.5).abs() < 1e-15);
        let (cpc, _) = batch_cpc(&[1.0, 3.0], &[0.5, 0.5]).unwrap();
        assert_eq!(cpc, 2.0);
    }

    #[test]
    fn cpc_degenerate_batch() {
        assert!(matches!(batch_cpc(&[1.0], &[0.0]), Err(Error::DegenerateBatch(_))));
        assert!(batch_cpc(&[], &[]).is_err());
    }

    #[test]
    fn inactive_constraints() {
        let p = constraint_penalty(0.8, 0.2, &dual(0.5, 0.5));
        assert_eq!((p.penalty, p.d_cpc, p.d_risk), (0.0, 0.0, 0.0));
        // exactly at the boundary the subgradient is zero
        let p = constraint_penalty(1.0, 0.3, &dual(0.5, 0.5));
        assert_eq!((p.penalty, p.d_cpc, p.d_risk), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_evaluated_penalty() {
        let p = constraint_penalty(1.2, 0.1, &dual(0.5, 0.5));
        assert!((p.penalty - 0.1).abs() < 1e-12);
        assert_eq!(p.d_cpc, 0.5);
        assert_eq!(p.d_risk, 0.0);
    }

    #[test]
    fn dual_steps() {
        let d = dual(0.5, 0.5);
        assert_eq!(dual_update(&d, 1.0, 0.3), d);
        let d0 = dual(0.0, 0.0);
        assert_eq!(dual_update(&d0, -4.0, 0.3).lambda_c, 0.0);
        let up = dual_update(&d, 1.2, 0.3);
        assert!((up.lambda_c - 0.52).abs() < 1e-12);
        assert_eq!(up.lambda_r, 0.5);
        assert_eq!((up.c_max, up.r_max, up.eta_dual), (d.c_max, d.r_max, d.eta_dual));
    }

    #[test]
    fn fairness_inactive_when_balanced() {
        let f = fairness_penalty(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1], 1.0, 0.0).unwrap();
        assert_eq!(f.penalty, 0.0);
        assert!(f.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn fairness_gradient_matches_finite_differences() {
        let s = [0.9, 0.2, 0.6, 0.1, 0.3];
        let g = [0, 1, 0, 2, 1];
        let f = fairness_penalty(&s, &g, 0.7, 0.02).unwrap();
        assert!(f.penalty > 0.0);
        let h = 1e-6;
        for i in 0..s.len() {
            let mut up = s;
            up[i] += h;
            let mut dn = s;
            dn[i] -= h;
            let fd = (fairness_penalty(&up, &g, 0.7, 0.02).unwrap().penalty
                - fairness_penalty(&dn, &g, 0.7, 0.02).unwrap().penalty)
                / (2.0 * h);
            assert!((fd - f.grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", f.grad[i]);
        }
    }
}
