//! Shape and orientation rewards, success tests, and evaluation statistics.

use std::fmt;
use std::str::FromStr;

use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::geometry::angular_difference;

/// Default position success threshold, meters.
pub const DELTA_P: f64 = 0.05;
/// Tighter position threshold also reported by evaluations, meters.
pub const DELTA_P_TIGHT: f64 = 0.03;
/// Default orientation threshold: 3 degrees in radians.
pub const DELTA_O: f64 = 0.0524;

pub fn pairwise_distances(f: &[DVec3], f_d: &[DVec3]) -> Result<Vec<f64>> {
    ensure_len("feature point sets", f_d.len(), f.len())?;
    Ok(f.iter().zip(f_d).map(|(a, b)| a.distance(*b)).collect())
}

pub fn max_distance(f: &[DVec3], f_d: &[DVec3]) -> Result<f64> {
    Ok(pairwise_distances(f, f_d)?.into_iter().fold(0.0, f64::max))
}

pub fn reward_max_error(f: &[DVec3], f_d: &[DVec3]) -> Result<f64> {
    Ok(-max_distance(f, f_d)?)
}

pub fn reward_mean_error(f: &[DVec3], f_d: &[DVec3]) -> Result<f64> {
    let d = pairwise_distances(f, f_d)?;
    if d.is_empty() {
        return Ok(0.0);
    }
    Ok(-d.iter().sum::<f64>() / d.len() as f64)
}

/// Negative sum of paired distances. Computed as `m` times the mean reward so
/// the two agree exactly; the difference from a direct sum is one rounding.
pub fn reward_dtw(f: &[DVec3], f_d: &[DVec3]) -> Result<f64> {
    Ok(f.len() as f64 * reward_mean_error(f, f_d)?)
}

/// Root mean square of the shortest-arc Euler component errors.
pub fn orientation_rmse(theta: DVec3, zeta: DVec3) -> f64 {
    let d = angular_difference(theta, zeta);
    (d.length_squared() / 3.0).sqrt()
}

pub fn reward_orientation(theta: DVec3, zeta: DVec3) -> f64 {
    -orientation_rmse(theta, zeta)
}

pub fn success_position(f: &[DVec3], f_d: &[DVec3], delta_p: f64) -> Result<bool> {
    Ok(max_distance(f, f_d)? <= delta_p)
}

pub fn success_orientation(theta: DVec3, zeta: DVec3, delta_o: f64) -> bool {
    orientation_rmse(theta, zeta) <= delta_o
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Max,
    Mean,
    Dtw,
}

impl RewardKind {
    pub fn evaluate(self, f: &[DVec3], f_d: &[DVec3]) -> Result<f64> {
        match self {
            RewardKind::Max => reward_max_error(f, f_d),
            RewardKind::Mean => reward_mean_error(f, f_d),
            RewardKind::Dtw => reward_dtw(f, f_d),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::Max => "max",
            RewardKind::Mean => "mean",
            RewardKind::Dtw => "dtw",
        })
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(RewardKind::Max),
            "mean" => Ok(RewardKind::Mean),
            "dtw" => Ok(RewardKind::Dtw),
            other => Err(Error::Usage(format!(
                "unknown reward '{other}', expected max, mean or dtw"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub goal_id: usize,
    pub success: bool,
    /// Maximum feature point distance at episode end, meters.
    pub final_error: f64,
    pub steps_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sr: f64,
    pub ae: f64,
    /// Population standard deviation of the final errors.
    pub sigma: f64,
    pub me: f64,
    pub per_goal: Vec<EvalOutcome>,
}

pub fn aggregate(outcomes: Vec<EvalOutcome>) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(Error::Usage("cannot aggregate zero outcomes".into()));
    }
    let n = outcomes.len() as f64;
    let successes = outcomes.iter().filter(|o| o.success).count();
    let ae = outcomes.iter().map(|o| o.final_error).sum::<f64>() / n;
    let var = outcomes
        .iter()
        .map(|o| (o.final_error - ae).powi(2))
        .sum::<f64>()
        / n;
    let me = outcomes
        .iter()
        .map(|o| o.final_error)
        .fold(f64::INFINITY, f64::min);
    Ok(EvalReport {
        sr: successes as f64 / n,
        ae,
        sigma: var.sqrt(),
        me,
        per_goal: outcomes,
    })
}

/// One labelled row of a results table.
#[derive(Clone, Debug)]
pub struct ReportRow<'a> {
    pub label: String,
    pub delta_p: f64,
    pub report: &'a EvalReport,
}

/// Plain-text table with errors in centimeters.
pub fn render_table(rows: &[ReportRow<'_>]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(7);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>6}  {:>15}  {:>7}\n",
        "dataset", "δp (cm)", "SR↑", "AE↓ ± σ (cm)", "ME↓ (cm)"
    );
    for r in rows {
        let ae_sigma = format!("{:.2} ± {:.2}", r.report.ae * 100.0, r.report.sigma * 100.0);
        out.push_str(&format!(
            "{:<width$}  {:>7}  {:>6.3}  {:>15}  {:>7.2}\n",
            r.label,
            format!("{:.0}", r.delta_p * 100.0),
            r.report.sr,
            ae_sigma,
            r.report.me * 100.0
        ));
    }
    out
}

pub const REPORT_CSV_HEADER: &str = "dataset,delta_p_m,sr,ae_m,sigma_m,me_m,goals";

pub fn render_csv(rows: &[ReportRow<'_>]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.label,
            r.delta_p,
            r.report.sr,
            r.report.ae,
            r.report.sigma,
            r.report.me,
            r.report.per_goal.len()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pts(d: &[f64]) -> (Vec<DVec3>, Vec<DVec3>) {
        let f = vec![DVec3::ZERO; d.len()];
        let fd = d.iter().map(|&x| DVec3::new(x, 0.0, 0.0)).collect();
        (f, fd)
    }

    #[test]
    fn distance_examples() {
        let d = pairwise_distances(&[DVec3::ZERO], &[DVec3::new(3.0, 4.0, 0.0)]).unwrap();
        assert_eq!(d, vec![5.0]);
        assert!(matches!(
            pairwise_distances(&[DVec3::ZERO], &[]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn reward_examples() {
        let (f, fd) = pts(&[0.03, 0.04]);
        assert_eq!(reward_max_error(&f, &fd).unwrap(), -0.04);
        assert!((reward_mean_error(&f, &fd).unwrap() + 0.035).abs() < 1e-15);
        assert!((reward_dtw(&f, &fd).unwrap() + 0.07).abs() < 1e-15);
        assert_eq!(reward_max_error(&f, &f).unwrap(), 0.0);
        assert_eq!(reward_dtw(&f, &f).unwrap(), 0.0);
        let (f2, fd2) = pts(&[0.04, 0.03]);
        assert_eq!(reward_max_error(&f2, &fd2).unwrap(), -0.04);
    }

    #[test]
    fn orientation_examples() {
        let r = reward_orientation(DVec3::new(0.03, 0.0, 0.0), DVec3::ZERO);
        assert!((r + (0.0009f64 / 3.0).sqrt()).abs() < 1e-15);
        let a = DVec3::new(PI - 0.01, 0.0, 0.0);
        let b = DVec3::new(-PI + 0.01, 0.0, 0.0);
        assert!((orientation_rmse(a, b) - 0.02 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(reward_orientation(a, a), 0.0);
    }

    #[test]
    fn success_boundaries() {
        let (f, fd) = pts(&[0.049]);
        assert!(success_position(&f, &fd, 0.05).unwrap());
        let (f, fd) = pts(&[0.05]);
        assert!(success_position(&f, &fd, 0.05).unwrap());
        let (f, fd) = pts(&[0.051]);
        assert!(!success_position(&f, &fd, 0.05).unwrap());
        let rmse = |x: f64| DVec3::new(x * 3f64.sqrt(), 0.0, 0.0);
        assert!(success_orientation(rmse(0.05), DVec3::ZERO, DELTA_O));
        assert!(!success_orientation(rmse(0.06), DVec3::ZERO, DELTA_O));
        assert!(success_orientation(DVec3::ONE, DVec3::ONE, 1e-9));
    }

    fn outcome(id: usize, e: f64, success: bool) -> EvalOutcome {
        EvalOutcome {
            goal_id: id,
            success,
            final_error: e,
            steps_used: 1,
        }
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(vec![outcome(0, 0.02, true), outcome(1, 0.04, true)]).unwrap();
        assert_eq!(r.sr, 1.0);
        assert!((r.ae - 0.03).abs() < 1e-15);
        assert!((r.sigma - 0.01).abs() < 1e-15);
        assert_eq!(r.me, 0.02);
        let single = aggregate(vec![outcome(0, 0.07, false)]).unwrap();
        assert_eq!(single.sigma, 0.0);
        assert_eq!(single.me, single.ae);
        assert_eq!(single.sr, 0.0);
        assert!(matches!(aggregate(vec![]), Err(Error::Usage(_))));
    }

    #[test]
    fn reward_kind_parsing() {
        for k in [RewardKind::Max, RewardKind::Mean, RewardKind::Dtw] {
            assert_eq!(k.to_string().parse::<RewardKind>().unwrap(), k);
        }
        assert!("l2".parse::<RewardKind>().is_err());
    }

    #[test]
    fn table_has_all_rows() {
        let r = aggregate(vec![outcome(0, 0.02, true)]).unwrap();
        let rows = [
            ReportRow { label: "seen".into(), delta_p: 0.05, report: &r },
            ReportRow { label: "seen".into(), delta_p: 0.03, report: &r },
        ];
        let table = render_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("SR↑"));
        assert_eq!(render_csv(&rows).lines().count(), 3);
    }
}
