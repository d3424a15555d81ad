//! Classical fourth-order Runge–Kutta for scalar initial-value problems.

/// One RK4 step of size `h` for `y' = f(t, y)`.
pub fn rk4_step<F>(f: &mut F, t: f64, y: f64, h: f64) -> f64
where
    F: FnMut(f64, f64) -> f64,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Fallible variant: the right-hand side may fail (e.g. an inner root solve).
pub fn try_rk4_step<F, E>(f: &mut F, t: f64, y: f64, h: f64) -> Result<f64, E>
where
    F: FnMut(f64, f64) -> Result<f64, E>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1)?;
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2)?;
    let k4 = f(t + h, y + h * k3)?;
    Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_exponential() {
        let err = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = 1.0;
            for i in 0..n {
                y = rk4_step(&mut |_, y| y, i as f64 * h, y, h);
            }
            (y - 1f64.exp()).abs()
        };
        let ratio = err(10) / err(20);
        assert!((ratio.log2() - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn quadrature_case_is_simpson() {
        // y' = t^3 integrates exactly.
        let y = rk4_step(&mut |t, _| t * t * t, 0.0, 0.0, 2.0);
        assert!((y - 4.0).abs() < 1e-14);
    }
}
