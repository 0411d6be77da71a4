use serde::{Deserialize, Serialize};

use super::MetricError;

/// Histogram settings for the Jensen-Shannon estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JsdConfig {
    pub bins: usize,
    pub epsilon: f64,
}

impl Default for JsdConfig {
    fn default() -> Self {
        Self { bins: 50, epsilon: 1e-12 }
    }
}

/// The dissimilarity `rho` between two one-dimensional samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dissimilarity {
    Wasserstein2,
    Jsd(JsdConfig),
}

impl Dissimilarity {
    pub fn jsd() -> Self {
        Dissimilarity::Jsd(JsdConfig::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dissimilarity::Wasserstein2 => "wasserstein2",
            Dissimilarity::Jsd(_) => "jsd",
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if let Dissimilarity::Jsd(c) = self {
            if c.bins < 2 || !(c.epsilon > 0.0) {
                return Err(MetricError::InvalidArgument(format!(
                    "jsd needs bins >= 2 and epsilon > 0, got {c:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn between(&self, p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
        match self {
            Dissimilarity::Wasserstein2 => wasserstein2_1d(p, q),
            Dissimilarity::Jsd(cfg) => jsd(p, q, cfg),
        }
    }

    /// Same as [`Self::between`] for inputs already sorted ascending.
    pub(crate) fn between_sorted(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Dissimilarity::Wasserstein2 => w2_sorted(p, q),
            Dissimilarity::Jsd(cfg) => jsd_ranged(p, q, p[0].min(q[0]), p[p.len() - 1].max(q[q.len() - 1]), cfg),
        }
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Wasserstein-2 distance between the empirical distributions of `p` and `q`
/// (uniform weights), via the quantile-function coupling.
pub fn wasserstein2_1d(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricError::EmptySample);
    }
    Ok(w2_sorted(&sorted(p), &sorted(q)))
}

/// Integrates `(F_p^{-1}(t) - F_q^{-1}(t))^2` over the merged quantile grid.
/// Positions are tracked in integer units of `1 / (n m)`.
pub(crate) fn w2_sorted(p: &[f64], q: &[f64]) -> f64 {
    let (n, m) = (p.len(), q.len());
    if n == m {
        let s: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        return (s / n as f64).sqrt();
    }
    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0usize;
    let mut acc = 0.0;
    while i < n && j < m {
        let next_p = (i + 1) * m;
        let next_q = (j + 1) * n;
        let t_next = next_p.min(next_q);
        let d = p[i] - q[j];
        acc += (t_next - t) as f64 * d * d;
        t = t_next;
        if next_p == t_next {
            i += 1;
        }
        if next_q == t_next {
            j += 1;
        }
    }
    (acc / (n * m) as f64).sqrt()
}

/// Jensen-Shannon divergence (base 2, so in `[0, 1]`) between histograms of
/// `p` and `q` built on their shared min-max range.
pub fn jsd(p: &[f64], q: &[f64], cfg: &JsdConfig) -> Result<f64, MetricError> {
    if p.is_empty() || q.is_empty() {
        return Err(MetricError::EmptySample);
    }
    Dissimilarity::Jsd(*cfg).validate()?;
    let lo = p.iter().chain(q).copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().chain(q).copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(jsd_ranged(p, q, lo, hi, cfg))
}

fn histogram(x: &[f64], lo: f64, width: f64, cfg: &JsdConfig) -> Vec<f64> {
    let mut h = vec![cfg.epsilon; cfg.bins];
    for &v in x {
        let b = if width > 0.0 { (((v - lo) / width) as usize).min(cfg.bins - 1) } else { 0 };
        h[b] += 1.0;
    }
    let total = x.len() as f64 + cfg.bins as f64 * cfg.epsilon;
    h.iter_mut().for_each(|c| *c /= total);
    h
}

fn jsd_ranged(p: &[f64], q: &[f64], lo: f64, hi: f64, cfg: &JsdConfig) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / cfg.bins as f64;
    let hp = histogram(p, lo, width, cfg);
    let hq = histogram(q, lo, width, cfg);
    jsd_discrete(&hp, &hq)
}

/// Jensen-Shannon divergence in bits between two discrete distributions of
/// equal length. Zero-mass entries contribute nothing.
pub fn jsd_discrete(p: &[f64], q: &[f64]) -> f64 {
    let kl_to_mid = |a: f64, b: f64| if a > 0.0 { a * (2.0 * a / (a + b)).log2() } else { 0.0 };
    let s: f64 = p.iter().zip(q).map(|(&a, &b)| 0.5 * kl_to_mid(a, b) + 0.5 * kl_to_mid(b, a)).sum();
    s.clamp(0.0, 1.0)
}
