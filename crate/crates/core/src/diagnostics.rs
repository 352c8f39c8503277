//! Theoretical constants and error recurrences of the orbital-updating
//! iterations, and their comparison with observed traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterLayout;
use crate::error::{Error, Result};
use crate::model::SpectrumEntry;
use crate::solver::TraceRecord;

/// Default window of observed distances used for rate estimates.
pub const DEFAULT_WINDOW: (f64, f64) = (1e-12, 1e-2);

/// Spectral quantities that drive the convergence rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    /// Smallest gap between the top of a cluster and the bottom of any later
    /// cluster, `λ_{q+1,1}` included.
    pub g: f64,
    /// Largest spread inside a cluster.
    pub gamma: f64,
    /// Largest multiplicity.
    pub d_max: usize,
    /// Largest distance between a shift and an eigenvalue of its cluster.
    pub delta0: f64,
    /// Shift error beyond the spread, `max(δ − γ, 0)`, per iteration.
    pub zeta: Vec<f64>,
    pub lambda_next: f64,
    pub delta0_below_half_gap: bool,
    pub zeta0_over_g: f64,
    pub gamma_over_g: f64,
}

/// `values` are the ascending discrete eigenvalues; they must reach one past
/// the layout.
pub fn gap_stats(values: &[f64], layout: &ClusterLayout, shifts: &[f64]) -> Result<GapStats> {
    let n = layout.total();
    if values.len() < n + 1 {
        return Err(Error::InsufficientSpectrum {
            available: values.len(),
            required: n + 1,
        });
    }
    if shifts.len() != layout.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} shifts for {} clusters",
            shifts.len(),
            layout.q()
        )));
    }
    let mut g = f64::INFINITY;
    let mut gamma = 0.0_f64;
    let mut delta0 = 0.0_f64;
    for i in 0..layout.q() {
        let r = layout.range(i);
        let (lo, hi) = (values[r.start], values[r.end - 1]);
        gamma = gamma.max(hi - lo);
        g = g.min(values[r.end] - hi);
        for &v in &values[r] {
            delta0 = delta0.max((v - shifts[i]).abs());
        }
    }
    if !(g > 0.0) {
        let k = (0..layout.q())
            .map(|i| layout.range(i).end)
            .find(|&e| values[e] - values[e - 1] <= 0.0)
            .unwrap_or(n);
        return Err(Error::DegenerateGap(values[k - 1], values[k]));
    }
    let zeta0 = (delta0 - gamma).max(0.0);
    Ok(GapStats {
        g,
        gamma,
        d_max: layout.max_multiplicity(),
        delta0,
        zeta: vec![zeta0],
        lambda_next: values[n],
        delta0_below_half_gap: delta0 < g / 2.0,
        zeta0_over_g: zeta0 / g,
        gamma_over_g: gamma / g,
    })
}

/// An error-bound sequence with its step ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSequence {
    pub eps: Vec<f64>,
    /// `ε_{n+1} / ε_n`, zero where `ε_n = 0`.
    pub ratios: Vec<f64>,
    /// `ε_{n+1} / ε_n³`, zero where `ε_n = 0`.
    pub cubic_ratios: Vec<f64>,
    /// Coupled eigenvalue bounds, for the shifted recurrence.
    pub zeta: Option<Vec<f64>>,
    pub limit_ratio: Option<f64>,
    pub limit_cubic_ratio: Option<f64>,
}

impl BoundSequence {
    fn from_eps(eps: Vec<f64>) -> Self {
        let step = |p: i32| -> Vec<f64> {
            eps.windows(2)
                .map(|w| if w[0] > 0.0 { w[1] / w[0].powi(p) } else { 0.0 })
                .collect()
        };
        let ratios = step(1);
        let cubic_ratios = step(3);
        Self {
            eps,
            ratios,
            cubic_ratios,
            zeta: None,
            limit_ratio: None,
            limit_cubic_ratio: None,
        }
    }
}

/// `ε_{n+1} = δ₀ε_n / √((g − δ₀)²(1 − ε_n²) + δ₀²ε_n²)` for fixed shifts.
pub fn recurrence_simplified(
    eps0: f64,
    delta0: f64,
    g: f64,
    steps: usize,
) -> Result<BoundSequence> {
    if !(0.0..=1.0).contains(&eps0) {
        return Err(Error::InvalidConfig(format!(
            "eps0 must lie in [0, 1], got {eps0}"
        )));
    }
    if !(g > 0.0) || !(delta0 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need g > 0 and delta0 >= 0, got g = {g}, delta0 = {delta0}"
        )));
    }
    if delta0 >= g / 2.0 {
        return Err(Error::HypothesisViolated(format!(
            "delta0 = {delta0} is not below g/2 = {}",
            g / 2.0
        )));
    }
    let mut eps = Vec::with_capacity(steps + 1);
    eps.push(eps0);
    let a = (g - delta0) * (g - delta0);
    let b = delta0 * delta0;
    for _ in 0..steps {
        let e = *eps.last().unwrap();
        let den = (a * (1.0 - e * e) + b * e * e).sqrt();
        eps.push(if e == 0.0 {
            0.0
        } else {
            (delta0 * e / den).min(1.0)
        });
    }
    let mut seq = BoundSequence::from_eps(eps);
    seq.limit_ratio = Some(delta0 / (g - delta0));
    Ok(seq)
}

/// Inputs of the coupled recurrence for the projected iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedRecurrence {
    pub eps0: f64,
    pub zeta0: f64,
    pub gamma: f64,
    pub g: f64,
    pub d_max: usize,
    pub n_total: usize,
    pub c_tilde: f64,
    pub lambda_next: f64,
    pub steps: usize,
}

/// `ε_{n+1} = C̃√(DN)(γ+ζ_n)ε_n / √((g−γ−ζ_n)²(1−Dε_n²) + D(γ+ζ_n)²ε_n²)`
/// clamped to `[0, 1]`, with `ζ_{n+1} = λ_next ε_{n+1}² / C̃²`.
pub fn recurrence_shifted(p: &ShiftedRecurrence) -> BoundSequence {
    let d = p.d_max as f64;
    let k = p.c_tilde * (d * p.n_total as f64).sqrt();
    let mut eps = vec![p.eps0];
    let mut zeta = vec![p.zeta0];
    for _ in 0..p.steps {
        let (e, z) = (*eps.last().unwrap(), *zeta.last().unwrap());
        let s = p.gamma + z;
        let num = k * s * e;
        let den = ((p.g - s).powi(2) * (1.0 - d * e * e) + d * s * s * e * e).sqrt();
        let next = if num == 0.0 {
            0.0
        } else if den.is_finite() && den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            1.0
        };
        eps.push(next);
        zeta.push(p.lambda_next * next * next / (p.c_tilde * p.c_tilde));
    }
    let mut seq = BoundSequence::from_eps(eps);
    seq.zeta = Some(zeta);
    seq.limit_ratio = Some(k * p.gamma / (p.g - p.gamma));
    if p.gamma == 0.0 {
        seq.limit_cubic_ratio =
            Some((d * p.n_total as f64).sqrt() * p.lambda_next / (p.g * p.c_tilde));
    }
    seq
}

/// Approximation constants of the continuous problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnyazevConstants {
    pub eps_star: f64,
    pub c_star: f64,
    pub c_dstar: f64,
}

/// `spectrum` lists distinct eigenvalues with multiplicities, ascending; the
/// first `q + 1` are used.
pub fn knyazev_constants(
    spectrum: &[SpectrumEntry],
    q: usize,
    alpha: f64,
) -> Result<KnyazevConstants> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if q == 0 {
        return Err(Error::InvalidConfig("q must be >= 1".into()));
    }
    if spectrum.len() < q + 1 {
        return Err(Error::InsufficientSpectrum {
            available: spectrum.len(),
            required: q + 1,
        });
    }
    // lam[0] = 0, lam[i] = λ_i
    let lam: Vec<f64> = std::iter::once(0.0)
        .chain(spectrum[..=q].iter().map(|e| e.value))
        .collect();
    for w in lam.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::DegenerateGap(w[0], w[1]));
        }
    }
    let eps_star = alpha
        * (1..=q + 1)
            .map(|i| ((lam[i] - lam[i - 1]) / lam[i]).sqrt())
            .fold(f64::INFINITY, f64::min);
    let c_star = (1..=q)
        .map(|i| {
            (2.0 * (lam[i + 1] - lam[i - 1]) * lam[i]
                / ((1.0 - alpha * alpha) * (lam[i] - lam[i - 1]) * (lam[i + 1] - lam[i])))
                .sqrt()
        })
        .fold(0.0, f64::max);
    let c_dstar = (1..=q)
        .map(|i| {
            let d = spectrum[i - 1].multiplicity as f64;
            2.0 * (d.sqrt() + 1.0) / lam[i].sqrt() * c_star
        })
        .fold(0.0, f64::max);
    Ok(KnyazevConstants {
        eps_star,
        c_star,
        c_dstar,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Observed distances inside `[lo, hi]` take part in rate estimates.
    pub window: (f64, f64),
    /// Overrides the estimate of the projection constant.
    pub c_tilde: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            c_tilde: None,
        }
    }
}

/// Observed quantities at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedStep {
    pub iter: usize,
    /// `max_i dist(M_h(λ_i), U_n^{(i)})`.
    pub eps_hat: f64,
    pub ratio: Option<f64>,
    pub cubic_ratio: Option<f64>,
    /// `max |λ_ij^{(n)} − λ^h_ij|`.
    pub value_error: f64,
    /// `max(max |λ̄_i^{(n)} − λ^h_ij| − γ, 0)`.
    pub zeta: f64,
    /// Bound from the fixed-shift recurrence seeded at `ε̂_0`.
    pub bound_simplified: Option<f64>,
    /// Bound from the coupled recurrence seeded at `(ε̂_0, ζ_0)`.
    pub bound_shifted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub layout: ClusterLayout,
    pub gap: GapStats,
    pub window: (f64, f64),
    pub steps: Vec<ObservedStep>,
    /// Step ratios whose endpoints both lie in the window.
    pub window_samples: usize,
    /// Geometric mean of the in-window ratios.
    pub ratio_geometric_mean: Option<f64>,
    /// Least-squares slope of `ln ε̂_{n+1}` against `ln ε̂_n` in the window.
    pub fitted_order: Option<f64>,
    pub limit_ratio_simplified: Option<f64>,
    pub limit_ratio_shifted: Option<f64>,
    pub limit_cubic_ratio_shifted: Option<f64>,
    pub c_tilde: f64,
    pub theory_simplified: Option<BoundSequence>,
    pub theory_shifted: Option<BoundSequence>,
}

impl TraceReport {
    /// Largest `ε̂_n / ε_n` against the fixed-shift bound, over iterations
    /// where the bound is positive.
    pub fn max_excess_over_simplified(&self) -> Option<f64> {
        self.steps
            .iter()
            .filter_map(|s| {
                s.bound_simplified
                    .filter(|&b| b > 0.0)
                    .map(|b| s.eps_hat / b)
            })
            .reduce(f64::max)
    }

    /// Plain-text table of observed and theoretical sequences.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let g = &self.gap;
        out.push_str(&format!("layout        {}\n", self.layout));
        out.push_str(&format!(
            "g {:.6e}  gamma {:.6e}  D {}  delta0 {:.6e}  lambda_next {:.6e}\n",
            g.g, g.gamma, g.d_max, g.delta0, g.lambda_next
        ));
        out.push_str(&format!(
            "delta0 < g/2 {}  zeta0/g {:.3e}  gamma/g {:.3e}  c_tilde {:.4}\n",
            g.delta0_below_half_gap, g.zeta0_over_g, g.gamma_over_g, self.c_tilde
        ));
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
        out.push_str(&format!(
            "window [{:e}, {:e}]  samples {}  geo-mean ratio {}  fitted order {}\n",
            self.window.0,
            self.window.1,
            self.window_samples,
            opt(self.ratio_geometric_mean),
            opt(self.fitted_order)
        ));
        out.push_str(&format!(
            "limit ratio (fixed shifts) {}  limit ratio (projected) {}  limit cubic ratio {}\n\n",
            opt(self.limit_ratio_simplified),
            opt(self.limit_ratio_shifted),
            opt(self.limit_cubic_ratio_shifted)
        ));
        out.push_str(&format!(
            "{:>5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "iter", "eps_hat", "ratio", "cubic", "val_err", "zeta", "bound_fix", "bound_proj"
        ));
        for s in &self.steps {
            out.push_str(&format!(
                "{:>5} {:>12.4e} {:>12} {:>12} {:>12.4e} {:>12.4e} {:>12} {:>12}\n",
                s.iter,
                s.eps_hat,
                opt(s.ratio),
                opt(s.cubic_ratio),
                s.value_error,
                s.zeta,
                opt(s.bound_simplified),
                opt(s.bound_shifted)
            ));
        }
        out
    }
}

/// Recovers the layout from the `(cluster, j)` columns of a trace.
pub fn layout_from_records(records: &[TraceRecord]) -> Result<ClusterLayout> {
    let mut d: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        let e = d.entry(r.cluster).or_insert(0);
        *e = (*e).max(r.j + 1);
    }
    if d.keys().copied().ne(0..d.len()) {
        return Err(Error::InvalidConfig(
            "trace cluster indices are not contiguous".into(),
        ));
    }
    ClusterLayout::new(d.into_values().collect())
}

/// Compares a trace with the recurrences. `values` are the ascending
/// discrete eigenvalues, at least one past the layout.
pub fn trace_analysis(
    records: &[TraceRecord],
    values: &[f64],
    layout: &ClusterLayout,
    opts: &AnalysisOptions,
) -> Result<TraceReport> {
    if records.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let n = layout.total();
    let mut by_iter: BTreeMap<usize, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        by_iter.entry(r.iter).or_default().push(r);
    }

    struct Row {
        iter: usize,
        eps: f64,
        value_error: f64,
        delta: f64,
        shifts: Vec<f64>,
    }
    let mut rows = Vec::with_capacity(by_iter.len());
    for (iter, recs) in by_iter {
        let mut shifts = vec![f64::NAN; layout.q()];
        let mut eps = 0.0_f64;
        let mut value_error = 0.0_f64;
        let mut delta = 0.0_f64;
        for r in recs {
            if r.cluster >= layout.q() || r.j >= layout.multiplicity(r.cluster) {
                return Err(Error::DimensionMismatch(format!(
                    "trace pair ({}, {}) outside layout {layout}",
                    r.cluster, r.j
                )));
            }
            let k = layout.flat_index(r.cluster, r.j);
            if k >= values.len() {
                return Err(Error::InsufficientSpectrum {
                    available: values.len(),
                    required: n + 1,
                });
            }
            let d = r.dist_to_oracle.ok_or_else(|| {
                Error::InvalidConfig(format!("iteration {iter} has no oracle distance"))
            })?;
            eps = eps.max(d);
            value_error = value_error.max((r.ritz_value - values[k]).abs());
            delta = delta.max((r.shift - values[k]).abs());
            shifts[r.cluster] = r.shift;
        }
        rows.push(Row {
            iter,
            eps,
            value_error,
            delta,
            shifts,
        });
    }
    if rows[0].shifts.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig(
            "first trace iteration misses a cluster".into(),
        ));
    }

    let mut gap = gap_stats(values, layout, &rows[0].shifts)?;
    gap.zeta = rows
        .iter()
        .map(|r| (r.delta - gap.gamma).max(0.0))
        .collect();

    let (lo, hi) = opts.window;
    let inside = |e: f64| e >= lo && e <= hi;
    let mut logs = Vec::new();
    for w in rows.windows(2) {
        if inside(w[0].eps) && inside(w[1].eps) {
            logs.push((w[0].eps.ln(), w[1].eps.ln()));
        }
    }
    let window_samples = logs.len();
    let ratio_geometric_mean = (window_samples > 0)
        .then(|| (logs.iter().map(|(a, b)| b - a).sum::<f64>() / window_samples as f64).exp());
    let fitted_order = (window_samples >= 2)
        .then(|| {
            let m = window_samples as f64;
            let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
            let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
            let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
            (sxx > 0.0).then(|| sxy / sxx)
        })
        .flatten();

    let steps_ahead = rows.len() - 1;
    let eps0 = rows[0].eps.min(1.0);
    let theory_simplified = recurrence_simplified(eps0, gap.delta0, gap.g, steps_ahead).ok();
    let c_tilde = opts.c_tilde.unwrap_or(1.0);
    let theory_shifted = recurrence_shifted(&ShiftedRecurrence {
        eps0,
        zeta0: gap.zeta[0],
        gamma: gap.gamma,
        g: gap.g,
        d_max: gap.d_max,
        n_total: n,
        c_tilde,
        lambda_next: gap.lambda_next,
        steps: steps_ahead,
    });

    let steps = rows
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let prev = idx.checked_sub(1).map(|p| rows[p].eps);
            ObservedStep {
                iter: r.iter,
                eps_hat: r.eps,
                ratio: prev.filter(|&p| p > 0.0).map(|p| r.eps / p),
                cubic_ratio: prev.filter(|&p| p > 0.0).map(|p| r.eps / p.powi(3)),
                value_error: r.value_error,
                zeta: gap.zeta[idx],
                bound_simplified: theory_simplified.as_ref().map(|t| t.eps[idx]),
                bound_shifted: Some(theory_shifted.eps[idx]),
            }
        })
        .collect();

    Ok(TraceReport {
        layout: layout.clone(),
        window: opts.window,
        steps,
        window_samples,
        ratio_geometric_mean,
        fitted_order,
        limit_ratio_simplified: theory_simplified.as_ref().and_then(|t| t.limit_ratio),
        limit_ratio_shifted: theory_shifted.limit_ratio,
        limit_cubic_ratio_shifted: theory_shifted.limit_cubic_ratio,
        c_tilde,
        theory_simplified,
        theory_shifted: Some(theory_shifted),
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entries(v: &[(f64, usize)]) -> Vec<SpectrumEntry> {
        v.iter()
            .map(|&(value, multiplicity)| SpectrumEntry {
                value,
                multiplicity,
            })
            .collect()
    }

    #[test]
    fn gap_example() {
        let values = [1.0, 1.0, 5.0, 9.0];
        let l = ClusterLayout::new(vec![2, 1]).unwrap();
        let s = gap_stats(&values, &l, &[1.0, 5.0]).unwrap();
        assert_eq!((s.g, s.gamma, s.delta0, s.d_max), (4.0, 0.0, 0.0, 2));
        assert_eq!(s.lambda_next, 9.0);
        let s = gap_stats(&values, &l, &[1.1, 5.0]).unwrap();
        assert!((s.delta0 - 0.1).abs() < 1e-15);
        let l3 = ClusterLayout::new(vec![2, 1, 1]).unwrap();
        assert!(matches!(
            gap_stats(&values, &l3, &[1.0, 5.0, 9.0]),
            Err(Error::InsufficientSpectrum {
                available: 4,
                required: 5
            })
        ));
    }

    #[test]
    fn simplified_example() {
        let s = recurrence_simplified(0.5, 0.1, 1.0, 30).unwrap();
        assert!((s.eps[1] - 0.064018).abs() < 1e-6, "{}", s.eps[1]);
        assert!((s.limit_ratio.unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!((s.ratios[29] - 1.0 / 9.0).abs() < 1e-10);
        let tiny = recurrence_simplified(1e-9, 0.1, 1.0, 1).unwrap();
        assert!((tiny.ratios[0] - 1.0 / 9.0).abs() < 1e-12);
        assert!(matches!(
            recurrence_simplified(0.5, 0.5, 1.0, 3),
            Err(Error::HypothesisViolated(_))
        ));
    }

    fn shifted_reference(p: &ShiftedRecurrence) -> (Vec<f64>, Vec<f64>) {
        let (mut e, mut z) = (p.eps0, p.zeta0);
        let (mut es, mut zs) = (vec![e], vec![z]);
        let dn = (p.d_max * p.n_total) as f64;
        for _ in 0..p.steps {
            let t = p.gamma + z;
            let top = p.c_tilde * dn.sqrt() * t * e;
            let bottom = ((p.g - t) * (p.g - t) * (1.0 - p.d_max as f64 * e * e)
                + p.d_max as f64 * t * t * e * e)
                .sqrt();
            e = (top / bottom).clamp(0.0, 1.0);
            z = e * e * p.lambda_next / p.c_tilde.powi(2);
            es.push(e);
            zs.push(z);
        }
        (es, zs)
    }

    #[test]
    fn shifted_cross_check() {
        let samples = [
            ShiftedRecurrence {
                eps0: 0.1,
                zeta0: 0.05,
                gamma: 0.01,
                g: 3.0,
                d_max: 2,
                n_total: 4,
                c_tilde: 1.3,
                lambda_next: 10.0,
                steps: 6,
            },
            ShiftedRecurrence {
                eps0: 0.02,
                zeta0: 0.0,
                gamma: 0.0,
                g: 29.6,
                d_max: 1,
                n_total: 5,
                c_tilde: 0.8,
                lambda_next: 355.0,
                steps: 4,
            },
        ];
        for p in samples {
            let s = recurrence_shifted(&p);
            let (e, z) = shifted_reference(&p);
            for k in 0..=p.steps {
                assert!((s.eps[k] - e[k]).abs() <= 1e-14 * e[k].max(1e-300));
                assert!((s.zeta.as_ref().unwrap()[k] - z[k]).abs() <= 1e-14 * z[k].max(1e-300));
            }
        }
    }

    #[test]
    fn shifted_cubic_limit() {
        let p = ShiftedRecurrence {
            eps0: 1e-2,
            zeta0: 0.0,
            gamma: 0.0,
            g: 2.0,
            d_max: 1,
            n_total: 2,
            c_tilde: 1.0,
            lambda_next: 3.0,
            steps: 3,
        };
        let s = recurrence_shifted(&p);
        let limit = s.limit_cubic_ratio.unwrap();
        assert!((limit - 2f64.sqrt() * 3.0 / 2.0).abs() < 1e-15);
        // ζ_0 = 0 freezes the first step; the next ones track the limit
        assert_eq!(s.eps[1], 0.0);
        let p = ShiftedRecurrence {
            zeta0: 3.0 * 1e-4,
            ..p
        };
        let s = recurrence_shifted(&p);
        assert!((s.cubic_ratios[0] / limit - 1.0).abs() < 1e-3);
        assert!((s.cubic_ratios[1] / limit - 1.0).abs() < 1e-3);
        let zero = recurrence_shifted(&ShiftedRecurrence {
            eps0: 0.0,
            zeta0: 0.0,
            ..p
        });
        assert!(zero.eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn knyazev_example() {
        let spec = entries(&[(1.0, 1), (2.0, 1), (4.0, 1)]);
        let c = knyazev_constants(&spec, 1, 0.5).unwrap();
        assert!((c.eps_star - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        assert!((c.c_star - (4.0f64 / 0.75).sqrt()).abs() < 1e-14);
        assert!((c.c_dstar - 4.0 * c.c_star).abs() < 1e-13);
        let near_one = knyazev_constants(&spec, 1, 1.0 - 1e-12).unwrap();
        assert!(near_one.c_star > 1e5);
        assert!(matches!(
            knyazev_constants(&entries(&[(1.0, 1), (1.0, 1)]), 1, 0.5),
            Err(Error::DegenerateGap(_, _))
        ));
    }

    #[test]
    fn layout_recovery() {
        let rec = |cluster, j| TraceRecord {
            iter: 0,
            cluster,
            j,
            ritz_value: 0.0,
            shift: 0.0,
            dist_to_oracle: None,
            locked: false,
        };
        let l = layout_from_records(&[rec(0, 0), rec(1, 0), rec(1, 1), rec(2, 0)]).unwrap();
        assert_eq!(l.multiplicities(), &[1, 2, 1]);
        assert!(layout_from_records(&[rec(1, 0)]).is_err());
    }

    proptest! {
        #[test]
        fn simplified_is_monotone(eps0 in 0.0f64..1.0, r in 0.0f64..0.499, g in 0.1f64..100.0) {
            let s = recurrence_simplified(eps0, r * g, g, 40).unwrap();
            for w in s.eps.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-14));
                prop_assert!((0.0..=1.0).contains(&w[1]));
            }
        }

        #[test]
        fn simplified_is_scale_consistent(eps0 in 0.0f64..1.0, r in 0.0f64..0.499, g in 0.1f64..100.0) {
            let base = recurrence_simplified(eps0, r * g, g, 10).unwrap();
            for t in [0.5, 2.0] {
                let scaled = recurrence_simplified(eps0, t * r * g, t * g, 10).unwrap();
                for (a, b) in base.eps.iter().zip(&scaled.eps) {
                    prop_assert!((a - b).abs() <= 1e-13 * a.max(1e-300));
                }
            }
        }

        #[test]
        fn shifted_is_scale_consistent(
            eps0 in 0.0f64..0.3,
            zeta0 in 0.0f64..0.1,
            gamma in 0.0f64..0.1,
            g in 1.0f64..10.0,
            lambda_next in 1.0f64..100.0,
        ) {
            let p = ShiftedRecurrence {
                eps0, zeta0, gamma, g, d_max: 2, n_total: 3, c_tilde: 1.0, lambda_next, steps: 5,
            };
            let base = recurrence_shifted(&p);
            for t in [0.5, 2.0] {
                let q = ShiftedRecurrence {
                    zeta0: t * zeta0, gamma: t * gamma, g: t * g, lambda_next: t * lambda_next, ..p
                };
                let scaled = recurrence_shifted(&q);
                for (a, b) in base.eps.iter().zip(&scaled.eps) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
                }
            }
        }

        #[test]
        fn eps_star_in_unit_interval(
            mut gaps in proptest::collection::vec(1e-3f64..10.0, 2..8),
            alpha in 0.01f64..0.99,
        ) {
            let mut acc = 0.0;
            for g in gaps.iter_mut() {
                acc += *g;
                *g = acc;
            }
            let spec: Vec<SpectrumEntry> = gaps
                .iter()
                .map(|&value| SpectrumEntry { value, multiplicity: 1 })
                .collect();
            let c = knyazev_constants(&spec, spec.len() - 1, alpha).unwrap();
            prop_assert!(c.eps_star > 0.0 && c.eps_star < 1.0);
            let lam_q = spec[spec.len() - 2].value;
            prop_assert!(c.c_dstar >= c.c_star * 2.0 * 2.0 / lam_q.sqrt() * (1.0 - 1e-12));
        }
    }
}
