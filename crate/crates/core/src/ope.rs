//! Off-policy evaluation over logged rows and the conservative rollout gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRow {
    pub context_ref: String,
    pub action: String,
    pub behavior_propensity: f64,
    pub target_propensity: f64,
    pub reward: f64,
    pub reward_model_chosen: f64,
    pub reward_model_policy: f64,
}

impl LoggedRow {
    fn weight(&self) -> f64 {
        self.target_propensity / self.behavior_propensity
    }
}

/// Bounded reward model from a calibrated score: `clip[-1,1](2 s0 - 1)`.
pub fn reward_model(s0: f64) -> f64 {
    (2.0 * s0 - 1.0).clamp(-1.0, 1.0)
}

/// Expected reward model value under the target policy.
pub fn policy_reward_model(propensities: &[f64], q: &[f64]) -> f64 {
    propensities
        .iter()
        .zip(q)
        .map(|(p, q)| p * q)
        .sum::<f64>()
        .clamp(-1.0, 1.0)
}

fn check_rows(rows: &[LoggedRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no logged rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| !(r.behavior_propensity > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "row {} has non-positive behavior propensity",
            r.context_ref
        )));
    }
    if let Some(r) = rows
        .iter()
        .find(|r| !(0.0..=1.0).contains(&r.target_propensity))
    {
        return Err(Error::InvalidArgument(format!(
            "row {} has target propensity outside [0,1]",
            r.context_ref
        )));
    }
    Ok(())
}

pub fn estimate_ips(rows: &[LoggedRow]) -> Result<f64> {
    check_rows(rows)?;
    Ok(rows.iter().map(|r| r.weight() * r.reward).sum::<f64>() / rows.len() as f64)
}

pub fn estimate_snips(rows: &[LoggedRow]) -> Result<f64> {
    check_rows(rows)?;
    let total: f64 = rows.iter().map(LoggedRow::weight).sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData(
            "total importance weight is zero".into(),
        ));
    }
    // Incremental weighted mean: a constant reward is returned unchanged.
    let mut mean = 0.0;
    let mut seen = 0.0;
    for r in rows {
        let w = r.weight();
        if w > 0.0 {
            seen += w;
            mean += (w / seen) * (r.reward - mean);
        }
    }
    Ok(mean)
}

fn dr_term(row: &LoggedRow, weight: f64) -> f64 {
    row.reward_model_policy + weight * (row.reward - row.reward_model_chosen)
}

pub fn estimate_dr(rows: &[LoggedRow]) -> Result<f64> {
    check_rows(rows)?;
    Ok(rows.iter().map(|r| dr_term(r, r.weight())).sum::<f64>() / rows.len() as f64)
}

/// Per-row DR contributions with the importance weight capped at `cap`.
pub fn dr_contributions(rows: &[LoggedRow], cap: f64) -> Result<Vec<f64>> {
    check_rows(rows)?;
    Ok(rows
        .iter()
        .map(|r| dr_term(r, r.weight().min(cap)))
        .collect())
}

/// Nearest-rank percentile (`q` in (0,1]) of an ascending slice.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Lower `1 - level` percentile of bootstrap resample means.
pub fn bootstrap_lcb(
    contributions: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if contributions.is_empty() || resamples == 0 {
        return Err(Error::InsufficientData(
            "bootstrap needs rows and resamples".into(),
        ));
    }
    let n = contributions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..n)
                .map(|_| contributions[rng.gen_range(0..n)])
                .sum::<f64>()
                / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(nearest_rank(&means, 1.0 - level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub n_min: usize,
    pub rho_max: f64,
    pub epsilon: f64,
    pub latency_max_ms: f64,
    pub resamples: usize,
    pub seed: u64,
    pub weight_cap: f64,
    /// Target propensity a row needs on its logged action to count as supported.
    pub min_target_support: f64,
    pub level: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            n_min: 50,
            rho_max: 0.02,
            epsilon: 0.01,
            latency_max_ms: 100.0,
            resamples: 1000,
            seed: 7,
            weight_cap: 10.0,
            min_target_support: 0.01,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeReport {
    pub n_rows: usize,
    pub ips: f64,
    pub snips: f64,
    pub dr: f64,
    pub lcb_95: f64,
    pub support: usize,
    pub fp_rate: f64,
    pub latency_p95_ms: f64,
    pub baseline_value: f64,
    pub insufficient_data: bool,
}

/// Build the report. `fp_rate` and `latency_p95_ms` come from outside the
/// rows. The reported bound never exceeds the DR point estimate.
pub fn build_report(
    rows: &[LoggedRow],
    fp_rate: f64,
    latency_p95_ms: f64,
    cfg: &GateConfig,
) -> Result<OpeReport> {
    if rows.is_empty() {
        return Ok(OpeReport {
            n_rows: 0,
            ips: 0.0,
            snips: 0.0,
            dr: 0.0,
            lcb_95: 0.0,
            support: 0,
            fp_rate,
            latency_p95_ms,
            baseline_value: 0.0,
            insufficient_data: true,
        });
    }
    let ips = estimate_ips(rows)?;
    let snips = estimate_snips(rows).unwrap_or(0.0);
    let dr = estimate_dr(rows)?;
    let lcb = bootstrap_lcb(
        &dr_contributions(rows, cfg.weight_cap)?,
        cfg.level,
        cfg.resamples,
        cfg.seed,
    )?;
    let support = rows
        .iter()
        .filter(|r| r.behavior_propensity > 0.0 && r.target_propensity >= cfg.min_target_support)
        .count();
    let baseline = rows.iter().map(|r| r.reward).sum::<f64>() / rows.len() as f64;
    Ok(OpeReport {
        n_rows: rows.len(),
        ips,
        snips,
        dr,
        lcb_95: lcb.min(dr),
        support,
        fp_rate,
        latency_p95_ms,
        baseline_value: baseline,
        insufficient_data: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    HoldShadow,
    Blocked,
    EligibleForCanary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    InsufficientSupport,
    FalsePositiveRisk,
    LcbBelowBaseline,
    OperationalSafety,
    Eligible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub recommendation: Recommendation,
    pub reason: GateReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateFlags {
    pub low_risk: bool,
    pub rl_control: bool,
}

pub fn evaluate_gate(report: &OpeReport, cfg: &GateConfig, flags: GateFlags) -> GateVerdict {
    let verdict = |recommendation, reason| GateVerdict {
        recommendation,
        reason,
    };
    if report.support < cfg.n_min {
        verdict(Recommendation::Blocked, GateReason::InsufficientSupport)
    } else if report.fp_rate > cfg.rho_max {
        verdict(Recommendation::Blocked, GateReason::FalsePositiveRisk)
    } else if report.lcb_95 <= report.baseline_value + cfg.epsilon {
        verdict(Recommendation::HoldShadow, GateReason::LcbBelowBaseline)
    } else if report.latency_p95_ms > cfg.latency_max_ms || !flags.low_risk || flags.rl_control {
        verdict(Recommendation::Blocked, GateReason::OperationalSafety)
    } else {
        verdict(Recommendation::EligibleForCanary, GateReason::Eligible)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(p: f64, pi: f64, r: f64, qa: f64, qp: f64) -> LoggedRow {
        LoggedRow {
            context_ref: "c".into(),
            action: "a".into(),
            behavior_propensity: p,
            target_propensity: pi,
            reward: r,
            reward_model_chosen: qa,
            reward_model_policy: qp,
        }
    }

    #[test]
    fn ips_examples() {
        assert_eq!(estimate_ips(&[row(1.0, 0.5, 1.0, 0.0, 0.0)]).unwrap(), 0.5);
        let rows = [
            row(0.5, 0.5, 1.0, 0.0, 0.0),
            row(0.25, 0.25, -0.5, 0.0, 0.0),
        ];
        assert_eq!(estimate_ips(&rows).unwrap(), 0.25);
        let rows = [
            row(1.0, 0.2, 1.0, 0.0, 0.0),
            row(0.5, 0.9, -0.6, 0.0, 0.0),
            row(0.8, 0.4, 0.35, 0.0, 0.0),
        ];
        // 0.2 - 1.08 + 0.175 = -0.705, over 3
        assert!((estimate_ips(&rows).unwrap() - (-0.705 / 3.0)).abs() < 1e-15);
        assert!(estimate_ips(&[]).is_err());
        assert!(estimate_ips(&[row(0.0, 0.5, 1.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn snips_examples() {
        let rows = [row(1.0, 0.2, 0.4, 0.0, 0.0), row(0.5, 0.9, 0.4, 0.0, 0.0)];
        assert_eq!(estimate_snips(&rows).unwrap(), 0.4);
        assert_eq!(
            estimate_snips(&[row(0.3, 0.7, -0.6, 0.0, 0.0)]).unwrap(),
            -0.6
        );
        assert!(estimate_snips(&[row(1.0, 0.0, 1.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn dr_examples() {
        let rows = [row(1.0, 0.5, 1.0, 0.0, 0.0), row(0.5, 0.25, -1.0, 0.0, 0.0)];
        assert_eq!(estimate_dr(&rows).unwrap(), estimate_ips(&rows).unwrap());
        let rows = [
            row(1.0, 0.5, 0.3, 0.3, 0.1),
            row(0.5, 0.25, -0.2, -0.2, 0.5),
        ];
        assert!((estimate_dr(&rows).unwrap() - 0.3).abs() < 1e-15);
        let rows = [
            row(1.0, 0.6, 1.0, 0.2, 0.4),
            row(0.5, 0.2, -1.0, -0.4, 0.1),
            row(0.25, 0.5, 0.35, 0.6, -0.2),
        ];
        // 0.4 + 0.6*0.8 = 0.88; 0.1 + 0.4*(-0.6) = -0.14; -0.2 + 2*(-0.25) = -0.7
        assert!((estimate_dr(&rows).unwrap() - (0.88 - 0.14 - 0.7) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_examples() {
        assert_eq!(bootstrap_lcb(&[0.3, 0.3, 0.3], 0.95, 200, 1).unwrap(), 0.3);
        assert_eq!(bootstrap_lcb(&[0.0, 1.0], 0.95, 1000, 1).unwrap(), 0.0);
        let c = [0.1, -0.4, 0.9, 0.2];
        assert_eq!(
            bootstrap_lcb(&c, 0.95, 500, 42).unwrap(),
            bootstrap_lcb(&c, 0.95, 500, 42).unwrap()
        );
    }

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(nearest_rank(&[5.0; 100], 0.95), 5.0);
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.95), 19.0);
        assert_eq!(nearest_rank(&v, 0.05), 1.0);
    }

    fn report(support: usize, fp: f64, lcb: f64, latency: f64) -> OpeReport {
        OpeReport {
            n_rows: support,
            ips: 0.0,
            snips: 0.0,
            dr: lcb,
            lcb_95: lcb,
            support,
            fp_rate: fp,
            latency_p95_ms: latency,
            baseline_value: 0.2,
            insufficient_data: false,
        }
    }

    #[test]
    fn gate_examples() {
        let cfg = GateConfig::default();
        let ok = GateFlags {
            low_risk: true,
            rl_control: false,
        };
        assert_eq!(
            evaluate_gate(&report(10, 0.0, 0.9, 10.0), &cfg, ok).reason,
            GateReason::InsufficientSupport
        );
        assert_eq!(
            evaluate_gate(&report(60, 0.0, 0.21, 10.0), &cfg, ok).recommendation,
            Recommendation::HoldShadow
        );
        let rl = GateFlags {
            low_risk: true,
            rl_control: true,
        };
        assert_eq!(
            evaluate_gate(&report(60, 0.0, 0.9, 10.0), &cfg, rl).reason,
            GateReason::OperationalSafety
        );
        assert_eq!(
            evaluate_gate(&report(60, 0.0, 0.9, 10.0), &cfg, ok).recommendation,
            Recommendation::EligibleForCanary
        );
    }

    #[test]
    fn empty_report_is_flagged() {
        let r = build_report(&[], 0.0, 0.0, &GateConfig::default()).unwrap();
        assert!(r.insufficient_data);
        let v = evaluate_gate(&r, &GateConfig::default(), GateFlags::default());
        assert_eq!(
            (v.recommendation, v.reason),
            (Recommendation::Blocked, GateReason::InsufficientSupport)
        );
    }

    fn rank_of(v: GateVerdict) -> u8 {
        match v.recommendation {
            Recommendation::Blocked => 0,
            Recommendation::HoldShadow => 1,
            Recommendation::EligibleForCanary => 2,
        }
    }

    proptest! {
        #[test]
        fn snips_bounded(rows in prop::collection::vec((0.01f64..=1.0, 0.01f64..=1.0, -1.0f64..=1.0), 1..10)) {
            let rows: Vec<LoggedRow> = rows.into_iter().map(|(p, pi, r)| row(p, pi, r, 0.0, 0.0)).collect();
            let s = estimate_snips(&rows).unwrap();
            let lo = rows.iter().map(|r| r.reward).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        }

        #[test]
        fn gate_support_monotone(extra in 0usize..200, fp in 0.0f64..0.05, lcb in -1.0f64..1.0, lat in 0.0f64..200.0, lr: bool, rl: bool) {
            let cfg = GateConfig::default();
            let flags = GateFlags { low_risk: lr, rl_control: rl };
            let low = evaluate_gate(&report(10, fp, lcb, lat), &cfg, flags);
            let high = evaluate_gate(&report(cfg.n_min + extra, fp, lcb, lat), &cfg, flags);
            prop_assert_eq!(low.reason, GateReason::InsufficientSupport);
            prop_assert!(rank_of(high) >= rank_of(low));
        }
    }
}
