//! Brute-force metric evaluations written independently of the library:
//! explicit loops, two-pass moments, natural logs converted to base 2.

pub fn mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

pub fn pcc(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

fn minmax(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    x.iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

pub fn ssim(x: &[f64], y: &[f64]) -> f64 {
    let (x, y) = (minmax(x), minmax(y));
    let n = x.len() as f64;
    let (mx, my) = (mean(&x), mean(&y));
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        vx += (x[i] - mx).powi(2) / n;
        vy += (y[i] - my).powi(2) / n;
        cov += (x[i] - mx) * (y[i] - my) / n;
    }
    let (c1, c2) = (0.01, 0.03);
    (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn rmse(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        s += (x[i] - y[i]).powi(2);
    }
    (s / x.len() as f64).sqrt()
}

fn kl2(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            s += p[i] * (p[i] / q[i]).ln();
        }
    }
    s / std::f64::consts::LN_2
}

pub fn js(x: &[f64], y: &[f64]) -> f64 {
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let p: Vec<f64> = x.iter().map(|v| v / sx).collect();
    let q: Vec<f64> = y.iter().map(|v| v / sy).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a + b) / 2.0).collect();
    0.5 * kl2(&p, &m) + 0.5 * kl2(&q, &m)
}

/// Rank of `v` among `all` (1-based, ascending), ties averaged: one plus
/// the count strictly below plus half the other equal entries.
pub fn avg_rank(v: f64, all: &[f64]) -> f64 {
    let below = all.iter().filter(|&&a| a < v).count() as f64;
    let equal = all.iter().filter(|&&a| a == v).count() as f64;
    below + (equal + 1.0) / 2.0
}

/// `rows[m] = [pcc, ssim, rmse, js]`; higher is better for the first two.
pub fn accuracy_scores(rows: &[[f64; 4]]) -> Vec<f64> {
    let n = rows.len() as f64;
    rows.iter()
        .map(|row| {
            let mut total = 0.0;
            for k in 0..4 {
                let col: Vec<f64> = rows
                    .iter()
                    .map(|r| if k < 2 { r[k] } else { -r[k] })
                    .collect();
                let v = if k < 2 { row[k] } else { -row[k] };
                total += avg_rank(v, &col) / n;
            }
            total / 4.0
        })
        .collect()
}
