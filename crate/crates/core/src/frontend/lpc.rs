//! Autocorrelation-method LPC analysis and the LPC → cepstrum recursion.
//!
//! Sign convention throughout: the prediction polynomial is
//! `A(z) = 1 + Σ a_i z^-i`, so the normal equations read `R a = -r[1..=p]`.

use super::{FeatureVector, LPC_ORDER};
use crate::error::{Error, Result};

/// `r[k] = Σ_n x[n] x[n + k]` for `k = 0..=max_lag`.
pub fn autocorrelate(frame: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= frame.len() {
                return 0.0;
            }
            frame[..frame.len() - k]
                .iter()
                .zip(&frame[k..])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Prediction polynomial coefficients `a_1..a_p` and the final prediction error power.
#[derive(Debug, Clone, PartialEq)]
pub struct Lpc {
    pub coeffs: Vec<f64>,
    pub gain: f64,
    pub reflection: Vec<f64>,
}

/// Levinson-Durbin recursion on `r[0..=order]`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<Lpc> {
    if r.len() <= order {
        return Err(Error::DimensionMismatch {
            expected: order + 1,
            found: r.len(),
        });
    }
    if !(r[0] > 0.0) || !r[0].is_finite() {
        return Err(Error::SilentFrame);
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for i in 0..order {
        let acc: f64 = r[i + 1] + (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::UnstableFrame {
                order: i + 1,
                reflection: k,
            });
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] + k * prev[i - 1 - j];
        }
        a[i] = k;
        reflection.push(k);
        err *= 1.0 - k * k;
    }
    Ok(Lpc {
        coeffs: a,
        gain: err,
        reflection,
    })
}

/// `c_n = -a_n - Σ_{k=1}^{n-1} (k/n) c_k a_{n-k}` for `n = 1..=12`.
pub fn lpc_to_lpcc(lpc: &[f64]) -> FeatureVector {
    let a = |i: usize| if i >= 1 && i <= lpc.len() { lpc[i - 1] } else { 0.0 };
    let mut c = [0.0; LPC_ORDER];
    for n in 1..=LPC_ORDER {
        let mut acc = -a(n);
        for k in 1..n {
            acc -= (k as f64 / n as f64) * c[k - 1] * a(n - k);
        }
        c[n - 1] = acc;
    }
    FeatureVector(c)
}
