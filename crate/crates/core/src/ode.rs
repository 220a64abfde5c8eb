//! Dormand–Prince 5(4) embedded Runge–Kutta steps on fixed-size states.

use crate::error::Result;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub y: [f64; N],
    pub err: [f64; N],
    /// Right-hand side at the new point (first stage of the next step).
    pub f_end: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One Dormand–Prince step of size `h` from `(t, y)` with `f0 = f(t, y)`.
pub fn dp_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], f0: &[f64; N], h: f64) -> Result<Step<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k1 = *f0;
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, &k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y_new = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(t + h, &y_new)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(Step {
        y: y_new,
        err,
        f_end: k7,
    })
}

/// Weighted RMS norm of the local error estimate; a step is acceptable when `<= 1`.
pub fn error_norm<const N: usize>(step: &Step<N>, y0: &[f64; N], abs_tol: f64, rel_tol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let scale = abs_tol + rel_tol * y0[i].abs().max(step.y[i].abs());
        let e = step.err[i] / scale;
        acc += e * e;
    }
    (acc / N as f64).sqrt()
}

/// Step-size update factor from an error norm.
pub fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        return 5.0;
    }
    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate<const N: usize, F>(mut f: F, y0: [f64; N], t1: f64, tol: f64) -> [f64; N]
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let (mut t, mut y) = (0.0, y0);
        let mut fy = f(t, &y).unwrap();
        let mut h: f64 = 1e-3;
        while t < t1 {
            h = h.min(t1 - t);
            let s = dp_step(&mut f, t, &y, &fy, h).unwrap();
            let e = error_norm(&s, &y, tol, tol);
            if e <= 1.0 {
                t += h;
                y = s.y;
                fy = s.f_end;
            }
            h *= step_factor(e);
        }
        y
    }

    #[test]
    fn exponential_decay() {
        let y = integrate(|_, y: &[f64; 1]| Ok([-y[0]]), [1.0], 3.0, 1e-12);
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_conserves_phase() {
        let y = integrate(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), [0.0, 1.0], 10.0, 1e-12);
        assert!((y[0] - 10f64.sin()).abs() < 1e-10);
        assert!((y[1] - 10f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn fifth_order_convergence() {
        let run = |h: f64| {
            let mut f = |t: f64, _: &[f64; 1]| Ok([t.cos()]);
            let (mut t, mut y) = (0.0, [0.0]);
            let mut fy = f(t, &y).unwrap();
            while t < 1.0 - 1e-12 {
                let s = dp_step(&mut f, t, &y, &fy, h).unwrap();
                t += h;
                y = s.y;
                fy = s.f_end;
            }
            (y[0] - 1f64.sin()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 25.0, "ratio {ratio}");
    }
}
