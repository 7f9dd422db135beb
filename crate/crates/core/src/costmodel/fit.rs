// SPDX-License-Identifier: Apache-2.0

//! Recency-weighted non-negative least squares for one- and two-variable
//! linear cost functions.

/// One observation; `index` is the arrival order within its key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub a: f64,
    pub b: f64,
    pub b2: f64,
}

fn weights(samples: &[WeightedSample], lambda: f64) -> Vec<f64> {
    let newest = samples.iter().map(|s| s.index).max().unwrap_or(0);
    samples
        .iter()
        .map(|s| lambda.powf((newest - s.index) as f64))
        .collect()
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v.len()
}

/// Fits `t = a + b*x` with `a, b >= 0`. `None` when fewer than two distinct
/// `x` values are present.
pub fn fit_univariate(samples: &[WeightedSample], lambda: f64) -> Option<Fit> {
    if distinct(samples.iter().map(|s| s.x)) < 2 {
        return None;
    }
    let w = weights(samples, lambda);
    let sw: f64 = w.iter().sum();
    let xm = samples.iter().zip(&w).map(|(s, w)| w * s.x).sum::<f64>() / sw;
    let tm = samples.iter().zip(&w).map(|(s, w)| w * s.t).sum::<f64>() / sw;
    let sxx: f64 = samples
        .iter()
        .zip(&w)
        .map(|(s, w)| w * (s.x - xm).powi(2))
        .sum();
    let sxt: f64 = samples
        .iter()
        .zip(&w)
        .map(|(s, w)| w * (s.x - xm) * (s.t - tm))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let b = sxt / sxx;
    let a = tm - b * xm;
    if a >= 0.0 && b >= 0.0 {
        return Some(Fit { a, b, b2: 0.0 });
    }
    // The unconstrained optimum is infeasible, so the constrained one lies
    // on a boundary: either b = 0 or a = 0.
    let sse = |a: f64, b: f64| -> f64 {
        samples
            .iter()
            .zip(&w)
            .map(|(s, w)| w * (s.t - a - b * s.x).powi(2))
            .sum()
    };
    let a_only = Fit {
        a: tm.max(0.0),
        b: 0.0,
        b2: 0.0,
    };
    let sxx0: f64 = samples.iter().zip(&w).map(|(s, w)| w * s.x * s.x).sum();
    let sxt0: f64 = samples.iter().zip(&w).map(|(s, w)| w * s.x * s.t).sum();
    let b_only = Fit {
        a: 0.0,
        b: if sxx0 > 0.0 {
            (sxt0 / sxx0).max(0.0)
        } else {
            0.0
        },
        b2: 0.0,
    };
    if sse(b_only.a, b_only.b) < sse(a_only.a, a_only.b) {
        Some(b_only)
    } else {
        Some(a_only)
    }
}

/// Solves a small symmetric system in place; `None` if singular.
fn solve(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.len();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= scale * 1e-12 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let pivot = m[col].clone();
            for (dst, src) in m[row][col..n].iter_mut().zip(&pivot[col..n]) {
                *dst -= f * src;
            }
            v[row] -= f * v[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * out[c]).sum();
        out[row] = (v[row] - s) / m[row][row];
    }
    Some(out)
}

/// Fits `t = a + bj*x + bk*y` with all coefficients non-negative by trying
/// each active set and keeping the feasible one with least weighted error.
/// `None` when fewer than two distinct `(x, y)` points are present.
pub fn fit_bivariate(samples: &[WeightedSample], lambda: f64) -> Option<Fit> {
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.x, s.y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 2 {
        return None;
    }
    let w = weights(samples, lambda);
    let sw: f64 = w.iter().sum();
    let mean = |f: &dyn Fn(&WeightedSample) -> f64| -> f64 {
        samples.iter().zip(&w).map(|(s, w)| w * f(s)).sum::<f64>() / sw
    };
    let (xm, ym, tm) = (mean(&|s| s.x), mean(&|s| s.y), mean(&|s| s.t));
    let sse = |f: &Fit| -> f64 {
        samples
            .iter()
            .zip(&w)
            .map(|(s, w)| w * (s.t - f.a - f.b * s.x - f.b2 * s.y).powi(2))
            .sum()
    };
    let mut best: Option<(f64, Fit)> = None;
    // subsets of {intercept, x, y}; the full set first
    for mask in [0b111u8, 0b011, 0b101, 0b110, 0b001, 0b010, 0b100] {
        let with_a = mask & 1 != 0;
        let cols: Vec<usize> = [1usize, 2]
            .into_iter()
            .filter(|c| mask & (1 << c) != 0)
            .collect();
        let val = |s: &WeightedSample, c: usize| if c == 1 { s.x } else { s.y };
        let cen = |c: usize| if c == 1 { xm } else { ym };
        let fit = if cols.is_empty() {
            Fit {
                a: tm,
                b: 0.0,
                b2: 0.0,
            }
        } else {
            // with an intercept, solve on centred data for conditioning
            let dx = |s: &WeightedSample, c: usize| {
                if with_a {
                    val(s, c) - cen(c)
                } else {
                    val(s, c)
                }
            };
            let dt = |s: &WeightedSample| if with_a { s.t - tm } else { s.t };
            let m: Vec<Vec<f64>> = cols
                .iter()
                .map(|&i| {
                    cols.iter()
                        .map(|&j| {
                            samples
                                .iter()
                                .zip(&w)
                                .map(|(s, w)| w * dx(s, i) * dx(s, j))
                                .sum()
                        })
                        .collect()
                })
                .collect();
            let v: Vec<f64> = cols
                .iter()
                .map(|&i| {
                    samples
                        .iter()
                        .zip(&w)
                        .map(|(s, w)| w * dx(s, i) * dt(s))
                        .sum()
                })
                .collect();
            let Some(sol) = solve(m, v) else { continue };
            let mut f = Fit {
                a: 0.0,
                b: 0.0,
                b2: 0.0,
            };
            for (&c, &b) in cols.iter().zip(&sol) {
                if c == 1 {
                    f.b = b;
                } else {
                    f.b2 = b;
                }
            }
            if with_a {
                f.a = tm - f.b * xm - f.b2 * ym;
            }
            f
        };
        let tol = 1e-9 * (1.0 + fit.a.abs() + fit.b.abs() + fit.b2.abs());
        if fit.a < -tol || fit.b < -tol || fit.b2 < -tol {
            continue;
        }
        let fit = Fit {
            a: fit.a.max(0.0),
            b: fit.b.max(0.0),
            b2: fit.b2.max(0.0),
        };
        let e = sse(&fit);
        match &best {
            Some((be, _)) if *be <= e * (1.0 + 1e-12) => {}
            _ => best = Some((e, fit)),
        }
    }
    best.map(|(_, f)| f)
}
