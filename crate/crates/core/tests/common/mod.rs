//! Test-only helpers: a quadrature oracle for the regularized incomplete
//! beta function, independent of the continued-fraction implementation and
//! of any gamma-function evaluation.

#![allow(dead_code)]

use specpolicy::FeatureMatrix;

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson_step(f, a, fa, m, fm);
    let (rm, frm, right) = simpson_step(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, eps / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson_step(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, m, fm, whole, eps, 60)
}

/// `∫_0^x t^(a-1) (1-t)^(b-1) dt` for `x <= 0.5`. For `a < 1` the integrable
/// singularity at 0 is removed by substituting `u = t^a`.
fn lower_tail(x: f64, a: f64, b: f64, eps: f64) -> f64 {
    assert!(x <= 0.5);
    if a >= 1.0 {
        integrate(|t| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0), 0.0, x, eps)
    } else {
        let inv = 1.0 / a;
        integrate(|u| (1.0 - u.powf(inv)).powf(b - 1.0), 0.0, x.powf(a), eps) / a
    }
}

/// Complete beta integral `B(a, b)` by quadrature.
pub fn beta_integral(a: f64, b: f64) -> f64 {
    lower_tail(0.5, a, b, 1e-13) + lower_tail(0.5, b, a, 1e-13)
}

/// `I_x(a, b)` by quadrature of the beta density.
pub fn reg_inc_beta_oracle(x: f64, a: f64, b: f64) -> f64 {
    reg_inc_beta_oracle_with(x, a, b, beta_integral(a, b))
}

/// As [`reg_inc_beta_oracle`] with a precomputed `B(a, b)`.
pub fn reg_inc_beta_oracle_with(x: f64, a: f64, b: f64, complete: f64) -> f64 {
    const EPS: f64 = 1e-13;
    if x <= 0.5 {
        lower_tail(x, a, b, EPS) / complete
    } else {
        // Mass on [x, 1] is the lower tail of the mirrored density.
        1.0 - lower_tail(1.0 - x, b, a, EPS) / complete
    }
}

pub fn bytes_of(m: &FeatureMatrix) -> Vec<u8> {
    specpolicy::formats::encode_features(m).unwrap()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
