//! Adaptive Dormand–Prince 5(4) integrator for complex first-order systems,
//! stepping exactly onto requested output abscissae.

use crate::error::{Error, Result};
use crate::matops::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-13, h_max: 0.25, max_steps: 5_000_000 }
    }
}

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
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(x, y)` from `x0` through each abscissa in `outputs`
/// (monotone, in the direction of travel) and return the state at each one.
/// An output equal to `x0` returns `y0` unchanged.
pub fn integrate<F>(mut f: F, x0: f64, y0: &[C64], outputs: &[f64], cfg: &OdeConfig) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let dim = y0.len();
    let mut out = Vec::with_capacity(outputs.len());
    let Some(&last) = outputs.last() else { return Ok(out) };
    let dir = if last >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::default(); dim]; 7];
    let mut tmp = vec![C64::default(); dim];
    let mut ynew = vec![C64::default(); dim];
    f(x, &y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], cfg) * dir;
    let mut steps = 0usize;

    for &target in outputs {
        if (target - x) * dir < -1e-14 * x.abs().max(1.0) {
            return Err(Error::numerical("ode: output abscissae must be monotone in the direction of travel"));
        }
        while (target - x) * dir > 1e-14 * x.abs().max(1.0) {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::numerical(format!("ode: step budget exhausted near x = {x}")));
            }
            let remaining = target - x;
            let hit = h.abs() >= remaining.abs();
            let hs = if hit { remaining } else { h };

            macro_rules! stage {
                ($dst:expr, $c:expr, [$(($a:expr, $i:expr)),*]) => {{
                    for j in 0..dim {
                        tmp[j] = y[j] $(+ k[$i][j] * (hs * $a))*;
                    }
                    let (xs, dst) = (x + $c * hs, $dst);
                    let (head, tail) = k.split_at_mut(dst);
                    let _ = head;
                    f(xs, &tmp, &mut tail[0]);
                }};
            }
            stage!(1, C2, [(A21, 0)]);
            stage!(2, C3, [(A31, 0), (A32, 1)]);
            stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
            stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
            stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
            for j in 0..dim {
                ynew[j] = y[j] + (k[0][j] * B1 + k[2][j] * B3 + k[3][j] * B4 + k[4][j] * B5 + k[5][j] * B6) * hs;
            }
            let xnew = if hit { target } else { x + hs };
            {
                let (head, tail) = k.split_at_mut(6);
                let _ = head;
                f(xnew, &ynew, &mut tail[0]);
            }
            let mut err = 0.0f64;
            for j in 0..dim {
                let e = (k[0][j] * E1 + k[2][j] * E3 + k[3][j] * E4 + k[4][j] * E5 + k[5][j] * E6 + k[6][j] * E7) * hs;
                let sc = cfg.atol + cfg.rtol * y[j].norm().max(ynew[j].norm());
                let r = e.norm() / sc;
                err = err.max(r);
            }
            if !err.is_finite() {
                return Err(Error::numerical(format!("ode: non-finite state near x = {x}")));
            }
            if err <= 1.0 {
                x = xnew;
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !hit || fac < 1.0 {
                    h = (hs * fac).abs().min(cfg.h_max) * dir;
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                h = hs * fac;
                if h.abs() < 1e-14 * x.abs().max(1.0) {
                    return Err(Error::numerical(format!("ode: step size underflow near x = {x}")));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(y: &[C64], dy: &[C64], cfg: &OdeConfig) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for (a, b) in y.iter().zip(dy) {
        let sc = cfg.atol + cfg.rtol * a.norm();
        d0 = d0.max(a.norm() / sc);
        d1 = d1.max(b.norm() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(cfg.h_max).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::c;

    #[test]
    fn harmonic_oscillator() {
        // y'' = -y as a first-order system; exact y = cos x.
        let f = |_x: f64, y: &[C64], d: &mut [C64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let outs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let res = integrate(f, 0.0, &[c(1.0, 0.0), c(0.0, 0.0)], &outs, &OdeConfig::default()).unwrap();
        for (x, y) in outs.iter().zip(&res) {
            assert!((y[0].re - x.cos()).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn complex_exponential_backward() {
        // y' = i k y from x = 5 back to 0.
        let k = c(1.3, 0.4);
        let f = move |_x: f64, y: &[C64], d: &mut [C64]| d[0] = k * c(0.0, 1.0) * y[0];
        let y5 = (k * c(0.0, 5.0)).exp();
        let res = integrate(f, 5.0, &[y5], &[5.0, 2.5, 0.0], &OdeConfig::default()).unwrap();
        assert_eq!(res[0][0], y5);
        assert!((res[2][0] - c(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn rejects_wrong_direction() {
        let f = |_x: f64, _y: &[C64], d: &mut [C64]| d[0] = C64::default();
        assert!(integrate(f, 0.0, &[c(1.0, 0.0)], &[1.0, 0.5], &OdeConfig::default()).is_err());
    }
}
