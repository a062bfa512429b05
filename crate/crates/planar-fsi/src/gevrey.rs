//! Derivative-growth estimation from sampled time series.
//!
//! The fitter estimates `(C, L, M)` in the growth model
//! `‖f^(k)‖ ≤ C L^k (k!)^M` from a sequence of derivative sup-norms. The
//! magnitudes come either from closed forms (calibration, tests) or from
//! [`spectral_derivatives`], which differentiates a Chebyshev least-squares
//! fit of the samples and takes sup-norms over the interior half of the
//! sampling window. High-order differentiation of double-precision data hits
//! a noise floor around order 8 to 10; everything past the floor is
//! truncated and the fit range is reported, never extrapolated.

use crate::dynamics::Trajectory;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Where a derivative sequence came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Spectral,
    FiniteDifference,
    Synthetic,
}

/// Sup-norms of successive time derivatives, `magnitudes[k] = ‖f^(k)‖`.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeSequence {
    magnitudes: Vec<f64>,
    pub provenance: Provenance,
    /// Highest order (inclusive) the producer trusts; the fit never looks
    /// past it.
    pub usable_orders: usize,
}

impl DerivativeSequence {
    pub fn new(magnitudes: Vec<f64>, provenance: Provenance) -> Result<DerivativeSequence> {
        if magnitudes.is_empty() {
            return Err(Error::IncompatibleData(
                "empty derivative sequence".into(),
            ));
        }
        if let Some(k) = magnitudes.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::IncompatibleData(format!(
                "derivative magnitude at order {k} is not positive and finite"
            )));
        }
        let usable_orders = magnitudes.len() - 1;
        Ok(DerivativeSequence {
            magnitudes,
            provenance,
            usable_orders,
        })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn max_order(&self) -> usize {
        self.magnitudes.len() - 1
    }
}

/// Closed-form sequence `C L^k (k!)^M`, for calibration runs.
pub fn synthetic_sequence(scale: f64, rate: f64, order: f64, max_order: usize) -> DerivativeSequence {
    let magnitudes = (0..=max_order)
        .map(|k| scale * rate.powi(k as i32) * (order * log_factorial(k)).exp())
        .collect();
    DerivativeSequence::new(magnitudes, Provenance::Synthetic)
        .expect("synthetic magnitudes are positive")
}

/// Result of regressing `log ‖f^(k)‖` on `[1, k, log k!]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GevreyFit {
    /// Prefactor `C`.
    #[serde(rename = "C")]
    pub scale: f64,
    /// Geometric rate `L`.
    #[serde(rename = "L")]
    pub rate: f64,
    /// Factorial power `M` (0 entire-like, 1 analytic-like).
    #[serde(rename = "M")]
    pub order: f64,
    /// Root-mean-square log residual over the fit range.
    pub residual: f64,
    /// Highest derivative order that entered the fit.
    pub usable_orders: usize,
}

fn log_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Three-parameter log-linear least squares over the given orders.
fn fit_log_growth(orders: &[usize], logs: &[f64]) -> Result<(DVector<f64>, f64)> {
    let rows = orders.len();
    let mut design = DMatrix::zeros(rows, 3);
    for (i, &k) in orders.iter().enumerate() {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = k as f64;
        design[(i, 2)] = log_factorial(k);
    }
    let rhs = DVector::from_column_slice(logs);
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 0.0) || s_max / s_min > 1e12 {
        return Err(Error::IllConditioned(format!(
            "regression design condition number {:.3e}",
            if s_min > 0.0 { s_max / s_min } else { f64::INFINITY }
        )));
    }
    let beta = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    let residual = (&rhs - design * &beta).norm() / (rows as f64).sqrt();
    Ok((beta, residual))
}

/// Fit the growth model to a derivative sequence.
pub fn fit_gevrey(seq: &DerivativeSequence) -> Result<GevreyFit> {
    let usable = seq.usable_orders.min(seq.max_order());
    if usable < 3 {
        return Err(Error::NoiseFloor(format!(
            "only {usable} usable derivative orders, need at least 3 to fit"
        )));
    }
    // k = 0 is excluded: a constant offset in the signal inflates the sup
    // norm at order zero only and says nothing about derivative growth.
    let orders: Vec<usize> = (1..=usable).collect();
    let logs: Vec<f64> = orders.iter().map(|&k| seq.magnitudes[k].ln()).collect();
    let (beta, residual) = fit_log_growth(&orders, &logs)?;
    Ok(GevreyFit {
        scale: beta[0].exp(),
        rate: beta[1].exp(),
        order: beta[2],
        residual,
        usable_orders: usable,
    })
}

/// Chebyshev values `T_0..T_degree` at each abscissa, one row per sample.
fn chebyshev_design(xs: &[f64], degree: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(xs.len(), degree + 1);
    for (row, &x) in xs.iter().enumerate() {
        let mut prev = 1.0;
        let mut cur = x;
        m[(row, 0)] = 1.0;
        if degree >= 1 {
            m[(row, 1)] = x;
        }
        for j in 2..=degree {
            let next = 2.0 * x * cur - prev;
            m[(row, j)] = next;
            prev = cur;
            cur = next;
        }
    }
    m
}

/// Coefficients of the derivative of `sum a_j T_j`, same variable.
///
/// Uses `b_i = b_{i+2} + 2 (i+1) a_{i+1}` downward, then halves `b_0`
/// because `T'_j` expands over `2 T_i` with the `T_0` weight halved.
fn differentiate(coeffs: &[f64]) -> Vec<f64> {
    let m = coeffs.len();
    if m <= 1 {
        return vec![0.0];
    }
    let mut out = vec![0.0; m - 1];
    for i in (0..m - 1).rev() {
        let above = if i + 2 < m - 1 { out[i + 2] } else { 0.0 };
        out[i] = above + 2.0 * (i as f64 + 1.0) * coeffs[i + 1];
    }
    out[0] *= 0.5;
    out
}

fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + x * b1 - b2
}

/// Sup over the interior half of the window, `x in [-1/2, 1/2]`.
fn half_window_sup(coeffs: &[f64]) -> f64 {
    const POINTS: usize = 2049;
    (0..POINTS)
        .map(|i| {
            let x = -0.5 + i as f64 / (POINTS as f64 - 1.0);
            clenshaw(coeffs, x).abs()
        })
        .fold(0.0, f64::max)
}

struct SpectralAnalysis {
    magnitudes: Vec<f64>,
    usable: usize,
}

/// Highest order before the magnitude sequence stops growing consistently:
/// either the derivative collapses to rounding noise of the previous order,
/// or it jumps far beyond every growth ratio seen so far (the signature of
/// differentiated coefficient noise taking over).
fn consistent_orders(magnitudes: &[f64]) -> usize {
    let mut usable = 0;
    let mut max_ratio = 0.0f64;
    for k in 1..magnitudes.len() {
        let prev = magnitudes[k - 1];
        let cur = magnitudes[k];
        if cur <= prev * 1e-10 {
            break;
        }
        let ratio = cur / prev;
        if max_ratio > 0.0 && ratio > 10.0 * max_ratio {
            break;
        }
        max_ratio = max_ratio.max(ratio);
        usable = k;
    }
    usable
}

fn analyze(samples: &[f64], half_width: f64, max_order: usize) -> Result<SpectralAnalysis> {
    let n = samples.len();
    if n < (4 * max_order).max(8) {
        return Err(Error::IncompatibleData(format!(
            "{n} samples cannot support {max_order} derivative orders (need at least {})",
            (4 * max_order).max(8)
        )));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::IncompatibleData(format!(
            "window half-width {half_width} is not positive"
        )));
    }
    let degree = n / 4;
    let xs: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n as f64 - 1.0))
        .collect();
    let design = chebyshev_design(&xs, degree);
    let rhs = DVector::from_column_slice(samples);
    let svd = design.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let fitted = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    let coeffs: Vec<f64> = fitted.iter().copied().collect();

    // Suffix maxima of |a_j|. The series is chopped where their decay
    // stalls well below the signal scale: that is the rounding plateau of
    // the least-squares fit, and differentiation amplifies anything kept
    // past it by roughly 2j per order.
    let mut suffix = vec![0.0f64; degree + 2];
    for j in (0..=degree).rev() {
        suffix[j] = suffix[j + 1].max(coeffs[j].abs());
    }
    let scale = suffix[0];
    if scale == 0.0 {
        return Err(Error::NoiseFloor("samples are identically zero".into()));
    }
    let gap = 8;
    let mut chop = degree + 1;
    for d in 1..=degree {
        let here = suffix[d];
        if here > 1e-8 * scale {
            continue;
        }
        let ahead = suffix[(d + gap).min(degree + 1)];
        if here == 0.0 || ahead >= 0.5 * here {
            chop = d;
            break;
        }
    }

    let mut series = coeffs[..chop].to_vec();
    let mut magnitudes = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        if k > 0 {
            series = differentiate(&series);
            for c in series.iter_mut() {
                *c /= half_width;
            }
        }
        magnitudes.push(half_window_sup(&series));
    }
    let usable = consistent_orders(&magnitudes);
    Ok(SpectralAnalysis { magnitudes, usable })
}

/// Derivative sup-norms of a uniformly sampled series on `[-tau, tau]`,
/// measured over the interior half `[-tau/2, tau/2]`.
///
/// The samples are fit by a Chebyshev series of degree `n/4` and
/// differentiated in coefficient space. Orders past the noise floor are
/// truncated; the highest kept order lands in `usable_orders`.
pub fn spectral_derivatives(
    samples: &[f64],
    half_width: f64,
    max_order: usize,
) -> Result<DerivativeSequence> {
    let analysis = analyze(samples, half_width, max_order)?;
    if analysis.usable < 3 {
        return Err(Error::NoiseFloor(format!(
            "derivatives fall to the noise floor at order {}, need 3 clean orders",
            analysis.usable + 1
        )));
    }
    DerivativeSequence::new(
        analysis.magnitudes[..=analysis.usable].to_vec(),
        Provenance::Spectral,
    )
}

/// Raw spectral magnitudes plus the detected usable order, without the
/// noise-floor gate. Diagnostic companion to [`spectral_derivatives`].
pub fn derivative_magnitudes(
    samples: &[f64],
    half_width: f64,
    max_order: usize,
) -> Result<(Vec<f64>, usize)> {
    analyze(samples, half_width, max_order).map(|a| (a.magnitudes, a.usable))
}

/// One trajectory channel's fit, or the reason it was skipped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: String,
    /// Spectral magnitudes that entered (or failed to enter) the fit.
    pub magnitudes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<GevreyFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrajectoryGevreyReport {
    pub channels: Vec<ChannelFit>,
}

/// Fit every rigid position channel of a trajectory.
///
/// Channels whose derivatives die at the noise floor (straight lines,
/// frozen angles) are flagged degenerate rather than failing the report;
/// any other error aborts.
pub fn trajectory_gevrey_report(
    trajectory: &Trajectory,
    max_order: usize,
) -> Result<TrajectoryGevreyReport> {
    if trajectory.len() < 2 {
        return Err(Error::IncompatibleData(
            "trajectory has fewer than two samples".into(),
        ));
    }
    let half_width = 0.5 * (trajectory.times[trajectory.len() - 1] - trajectory.times[0]);
    let mut channels = Vec::new();
    for name in ["hx", "hy", "theta"] {
        let mut samples = trajectory.channel(name).expect("built-in channel");
        // Remove the constant offset: it is invisible to every derivative
        // and would only bias the zeroth sup norm.
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut amplitude = 0.0f64;
        for s in &mut samples {
            *s -= mean;
            amplitude = amplitude.max(s.abs());
        }
        if amplitude <= 1e-12 * mean.abs().max(1.0) {
            channels.push(ChannelFit {
                channel: name.into(),
                magnitudes: Vec::new(),
                fit: None,
                degenerate: Some(format!(
                    "channel is constant to within roundoff (amplitude {amplitude:.1e})"
                )),
            });
            continue;
        }
        let entry = match spectral_derivatives(&samples, half_width, max_order) {
            Ok(seq) => {
                let magnitudes = seq.magnitudes().to_vec();
                match fit_gevrey(&seq) {
                    Ok(fit) => ChannelFit {
                        channel: name.into(),
                        magnitudes,
                        fit: Some(fit),
                        degenerate: None,
                    },
                    Err(Error::NoiseFloor(msg)) => ChannelFit {
                        channel: name.into(),
                        magnitudes,
                        fit: None,
                        degenerate: Some(msg),
                    },
                    Err(other) => return Err(other),
                }
            }
            Err(Error::NoiseFloor(msg)) => ChannelFit {
                channel: name.into(),
                magnitudes: Vec::new(),
                fit: None,
                degenerate: Some(msg),
            },
            Err(other) => return Err(other),
        };
        channels.push(entry);
    }
    Ok(TrajectoryGevreyReport { channels })
}
