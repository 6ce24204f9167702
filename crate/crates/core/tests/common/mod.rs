//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's geometry or network code.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type M3 = [[f64; 3]; 3];

pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn apply(m: &M3, v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for r in 0..3 {
        out[r] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2];
    }
    out
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Marsaglia polar method.
    loop {
        let u: f64 = rng.gen_range(-1.0..1.0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> M3 {
    let (w, x, y, z) = loop {
        let q = [std_normal(rng), std_normal(rng), std_normal(rng), std_normal(rng)];
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if n > 1e-6 {
            break (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// 21 points in [-1, 1]³ whose palm triangle is comfortably non-degenerate.
pub fn random_hand(rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    loop {
        let pts: Vec<[f64; 3]> = (0..21)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let a = sub(pts[5], pts[0]);
        let b = sub(pts[9], pts[0]);
        if norm(a) > 0.2 && norm(b) > 0.2 && norm(cross(a, b)) > 0.1 * norm(a) * norm(b) {
            return pts;
        }
    }
}

/// Canonical coordinates computed directly from the definition.
pub fn oracle_canonical(pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let a = sub(pts[5], pts[0]);
    let b = sub(pts[9], pts[0]);
    let s = norm(a);
    let z = [a[0] / s, a[1] / s, a[2] / s];
    let axb = cross(a, b);
    let n = norm(axb);
    let y = [axb[0] / n, axb[1] / n, axb[2] / n];
    let x = cross(y, z);
    pts.iter()
        .map(|p| {
            let d = sub(*p, pts[0]);
            let dot = |u: [f64; 3]| (u[0] * d[0] + u[1] * d[1] + u[2] * d[2]) / s;
            [dot(x), dot(y), dot(z)]
        })
        .collect()
}

/// Central differences of `f` with respect to every coordinate of `params`.
pub fn central_differences(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Per-parameter relative error `|a − n| / max(|a|, |n|, floor)`; the floor
/// keeps entries whose true value is at the finite-difference noise level
/// from dominating.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Step-by-step LSTM written from the textbook equations with per-gate
/// matrices. `w` is `4H × (n + H)` with gate blocks i, f, o, g; the readout
/// `r` is `H × n`. Returns softmax probabilities.
pub fn naive_lstm(
    n: usize,
    hd: usize,
    w: &[f64],
    b: &[f64],
    r: &[f64],
    rb: &[f64],
    steps: &[Vec<f64>],
) -> Vec<f64> {
    let cols = n + hd;
    let gate = |g: usize, j: usize, x: &[f64], h: &[f64]| -> f64 {
        let row = g * hd + j;
        let mut s = b[row];
        for k in 0..n {
            s += w[row * cols + k] * x[k];
        }
        for k in 0..hd {
            s += w[row * cols + n + k] * h[k];
        }
        s
    };
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for x in steps {
        let mut h_next = vec![0.0; hd];
        let mut c_next = vec![0.0; hd];
        for j in 0..hd {
            let i_t = sigmoid(gate(0, j, x, &h));
            let f_t = sigmoid(gate(1, j, x, &h));
            let o_t = sigmoid(gate(2, j, x, &h));
            let g_t = gate(3, j, x, &h).tanh();
            c_next[j] = f_t * c[j] + i_t * g_t;
            h_next[j] = o_t * c_next[j].tanh();
        }
        h = h_next;
        c = c_next;
    }
    let logits: Vec<f64> = (0..n)
        .map(|k| rb[k] + (0..hd).map(|j| h[j] * r[j * n + k]).sum::<f64>())
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// 101 random probability rows of width `n`.
pub fn random_prob_steps(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..101)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect()
}
