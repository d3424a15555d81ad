//! Piecewise cubic Hermite interpolation that preserves monotonicity of the
//! data (Fritsch–Carlson). Beyond the end nodes the interpolant continues
//! linearly with the end slopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

fn check_nodes(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("table", "abscissae and values differ in length"));
    }
    if x.is_empty() {
        return Err(Error::invalid("table", "needs at least one node"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("table", "non-finite entry"));
    }
    if x.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::invalid("table", "abscissae must be strictly increasing"));
    }
    Ok(())
}

impl MonotoneCubic {
    /// Slopes from the weighted harmonic mean of neighbouring secants.
    pub fn pchip(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_nodes(&x, &y)?;
        let n = x.len();
        let mut slope = vec![0.0; n];
        if n == 2 {
            let s = (y[1] - y[0]) / (x[1] - x[0]);
            slope = vec![s, s];
        } else if n > 2 {
            let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
            let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
            for k in 1..n - 1 {
                if del[k - 1] * del[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slope[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            slope[0] = end_slope(h[0], h[1], del[0], del[1]);
            slope[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self { x, y, slope })
    }

    /// Hermite interpolant with caller-supplied slopes, limited where they
    /// would break monotonicity on an interval.
    pub fn hermite(x: Vec<f64>, y: Vec<f64>, mut slope: Vec<f64>) -> Result<Self> {
        check_nodes(&x, &y)?;
        if slope.len() != x.len() || slope.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("table", "slopes must be finite, one per node"));
        }
        for k in 0..x.len().saturating_sub(1) {
            let del = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if del == 0.0 {
                slope[k] = 0.0;
                slope[k + 1] = 0.0;
                continue;
            }
            let mut a = slope[k] / del;
            let mut b = slope[k + 1] / del;
            if a < 0.0 {
                slope[k] = 0.0;
                a = 0.0;
            }
            if b < 0.0 {
                slope[k + 1] = 0.0;
                b = 0.0;
            }
            let norm = a * a + b * b;
            if norm > 9.0 {
                let t = 3.0 / norm.sqrt();
                slope[k] = t * a * del;
                slope[k + 1] = t * b * del;
            }
        }
        Ok(Self { x, y, slope })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Index `k` with `x[k] <= t < x[k+1]`, clamped to a valid interval.
    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        let k = self.x.partition_point(|&v| v <= t);
        k.saturating_sub(1).min(n.saturating_sub(2))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return self.y[0] + self.slope[0] * (t - self.x[0]);
        }
        if t <= self.x[0] {
            return self.y[0] + self.slope[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slope[n - 1] * (t - self.x[n - 1]);
        }
        let k = self.interval(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.slope[k] + h01 * self.y[k + 1] + h11 * h * self.slope[k + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return self.slope[0];
        }
        if t >= self.x[n - 1] {
            return self.slope[n - 1];
        }
        let k = self.interval(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        d00 * self.y[k] + d10 * self.slope[k] + d01 * self.y[k + 1] + d11 * self.slope[k + 1]
    }
}

/// Three-point end slope, forced to respect the sign of the end secant.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
