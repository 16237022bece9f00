//! Summary statistics and the significance tests used in reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

use crate::error::{EhdError, Result};

/// Mean, population standard deviation and count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Summary {
            mean,
            std: var.sqrt(),
            count: n,
        }
    }
}

/// One-sided paired t-test of `mean(a - b) > 0`. Returns `(t, p)`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(EhdError::InvalidData(format!(
            "paired t-test needs two equal samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        return Ok((if mean > 0.0 { f64::INFINITY } else { 0.0 }, p));
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| EhdError::domain("t_test", e.to_string()))?;
    Ok((t, dist.sf(t)))
}

/// One-sided sign test that `a > b` more often than not; ties are dropped.
/// Returns `(wins, losses, p)`.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> Result<(u64, u64, f64)> {
    if a.len() != b.len() {
        return Err(EhdError::InvalidData("sign test needs paired samples".into()));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count() as u64;
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count() as u64;
    let n = wins + losses;
    if n == 0 {
        return Ok((0, 0, 1.0));
    }
    let dist = Binomial::new(0.5, n).map_err(|e| EhdError::domain("sign_test", e.to_string()))?;
    // P(W >= wins)
    let p = if wins == 0 { 1.0 } else { dist.sf(wins - 1) };
    Ok((wins, losses, p))
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EhdError::InvalidData(
            "spearman needs two equal samples of at least 2".into(),
        ));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    Ok(pearson(&rx, &ry))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Two-proportion z-test. Returns `(z, one-sided p for p1 > p2, two-sided p)`.
pub fn two_proportion_z(hits1: u64, n1: u64, hits2: u64, n2: u64) -> Result<(f64, f64, f64)> {
    if n1 == 0 || n2 == 0 {
        return Err(EhdError::InvalidData(
            "two-proportion test needs non-empty groups".into(),
        ));
    }
    let p1 = hits1 as f64 / n1 as f64;
    let p2 = hits2 as f64 / n2 as f64;
    let pooled = (hits1 + hits2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return Ok((0.0, 1.0, 1.0));
    }
    let z = (p1 - p2) / se;
    let norm = Normal::standard();
    Ok((z, norm.sf(z), 2.0 * norm.sf(z.abs())))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(EhdError::InvalidData(
            "log-log slope needs at least 2 positive pairs".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(EhdError::InvalidData("log-log slope needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}
