//! Real trigonometric interpolation on the uniform periodic grid.
//!
//! Boundary quantities live on the parameter grid `t_j = 2 pi j / N`; their
//! trigonometric interpolants give spectral interpolation at off-node points
//! and spectral differentiation. Sizes are a few hundred, so the naive DFT
//! is used on purpose (no FFT dependency, exact determinism).

/// Interpolant `a0 + sum_{m=1}^{N/2-1} (a_m cos ms + b_m sin ms)
/// + a_ny cos((N/2) s)`.
#[derive(Clone, Debug)]
pub struct TrigSeries {
    pub a: Vec<f64>, // a[0] = mean, a[m] cosine coefficients
    pub b: Vec<f64>, // b[0] unused, sine coefficients
    pub a_ny: f64,   // Nyquist cosine coefficient (N even)
    pub n: usize,
}

impl TrigSeries {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 4 && n % 2 == 0, "need an even number of samples");
        let half = n / 2;
        let mut a = vec![0.0; half];
        let mut b = vec![0.0; half];
        let step = std::f64::consts::TAU / n as f64;
        a[0] = values.iter().sum::<f64>() / n as f64;
        for m in 1..half {
            let (mut ca, mut cb) = (0.0, 0.0);
            for (j, &v) in values.iter().enumerate() {
                let ang = m as f64 * j as f64 * step;
                ca += v * ang.cos();
                cb += v * ang.sin();
            }
            a[m] = 2.0 * ca / n as f64;
            b[m] = 2.0 * cb / n as f64;
        }
        let mut ny = 0.0;
        for (j, &v) in values.iter().enumerate() {
            ny += v * if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        TrigSeries {
            a,
            b,
            a_ny: ny / n as f64,
            n,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let mut acc = self.a[0];
        for m in 1..self.a.len() {
            let ang = m as f64 * s;
            acc += self.a[m] * ang.cos() + self.b[m] * ang.sin();
        }
        acc + self.a_ny * ((self.n as f64 / 2.0) * s).cos()
    }

    /// Derivative d/ds. The Nyquist mode is dropped (standard real-grid
    /// convention, consistent with spectral differentiation matrices).
    pub fn derivative(&self) -> TrigSeries {
        let mut a = vec![0.0; self.a.len()];
        let mut b = vec![0.0; self.b.len()];
        for m in 1..self.a.len() {
            a[m] = m as f64 * self.b[m];
            b[m] = -(m as f64) * self.a[m];
        }
        TrigSeries {
            a,
            b,
            a_ny: 0.0,
            n: self.n,
        }
    }

    /// Values of the derivative at the sample nodes.
    pub fn derivative_at_nodes(&self) -> Vec<f64> {
        let d = self.derivative();
        let step = std::f64::consts::TAU / self.n as f64;
        (0..self.n).map(|j| d.eval(j as f64 * step)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interpolates_band_limited_samples_exactly() {
        let n = 16;
        let f = |s: f64| 1.0 + 0.5 * s.cos() - 2.0 * (3.0 * s).sin() + 0.25 * (5.0 * s).cos();
        let samples: Vec<f64> = (0..n)
            .map(|j| f(j as f64 * std::f64::consts::TAU / n as f64))
            .collect();
        let t = TrigSeries::from_samples(&samples);
        for i in 0..40 {
            let s = 0.1571 * i as f64;
            assert_relative_eq!(t.eval(s), f(s), epsilon = 1e-12);
        }
    }

    #[test]
    fn differentiates_band_limited_samples_exactly() {
        let n = 32;
        let f = |s: f64| (2.0 * s).sin() - 0.3 * (4.0 * s).cos();
        let df = |s: f64| 2.0 * (2.0 * s).cos() + 1.2 * (4.0 * s).sin();
        let samples: Vec<f64> = (0..n)
            .map(|j| f(j as f64 * std::f64::consts::TAU / n as f64))
            .collect();
        let d = TrigSeries::from_samples(&samples).derivative_at_nodes();
        for (j, &v) in d.iter().enumerate() {
            let s = j as f64 * std::f64::consts::TAU / n as f64;
            assert_relative_eq!(v, df(s), epsilon = 1e-11);
        }
    }

    #[test]
    fn smooth_function_converges_spectrally() {
        let f = |s: f64| (s.sin()).exp();
        let err = |n: usize| {
            let samples: Vec<f64> = (0..n)
                .map(|j| f(j as f64 * std::f64::consts::TAU / n as f64))
                .collect();
            let t = TrigSeries::from_samples(&samples);
            (0..97)
                .map(|i| {
                    let s = i as f64 * 0.0648;
                    (t.eval(s) - f(s)).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(err(32) < 1e-10);
        assert!(err(64) < 1e-14 * 10.0);
    }
}
