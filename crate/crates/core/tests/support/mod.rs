//! Independent reference implementations used by the integration and
//! acceptance suites. Nothing here calls into the library under test.
#![allow(dead_code)]

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value
/// (Kolmogorov series with the Stephens small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Laplace(0, 1/eps) CDF.
pub fn laplace_cdf(x: f64, eps: f64) -> f64 {
    if x < 0.0 {
        0.5 * (eps * x).exp()
    } else {
        1.0 - 0.5 * (-eps * x).exp()
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// CDF of `U(0,1) + Laplace(0, 1/eps)` at `t` by numerical convolution:
/// `int_0^1 F_Laplace(t - u) du`, split at the kink `u = t`.
pub fn quadrature_g(t: f64, eps: f64) -> f64 {
    let f = |u: f64| laplace_cdf(t - u, eps);
    let kink = t.clamp(0.0, 1.0);
    simpson(&f, 0.0, kink, 4000) + simpson(&f, kink, 1.0, 4000)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm, potentials form). Returns the optimal total cost.
pub fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Exact optimal-transport cost between the uniform empirical measures on
/// `xs` and `ys` with ground cost `|x - y|`. Each point of `xs` is split
/// into `|ys|` unit atoms and vice versa; the transport LP with integral
/// supplies has an integral optimum, so it equals an assignment problem.
pub fn transport_lp(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let left: Vec<f64> = xs.iter().flat_map(|&x| std::iter::repeat_n(x, m)).collect();
    let right: Vec<f64> = ys.iter().flat_map(|&y| std::iter::repeat_n(y, n)).collect();
    let cost: Vec<Vec<f64>> = left.iter().map(|a| right.iter().map(|b| (a - b).abs()).collect()).collect();
    hungarian(&cost) / (n * m) as f64
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least squares through the normal equations `(H'H + ridge I) z = H'a`.
pub fn normal_equations(h: &[Vec<f64>], a: &[f64], ridge: f64) -> Vec<f64> {
    let d = h[0].len();
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (row, &y) in h.iter().zip(a) {
        for p in 0..d {
            rhs[p] += row[p] * y;
            for q in 0..d {
                gram[p][q] += row[p] * row[q];
            }
        }
    }
    for (p, g) in gram.iter_mut().enumerate() {
        g[p] += ridge;
    }
    gauss_solve(gram, rhs)
}

/// Negative log-likelihood and gradient of the offset logistic model
/// `eta_j = alpha + offset_j + x . h_j`, parameters `[x..., alpha]`.
pub fn logistic_nll(params: &[f64], h: &[Vec<f64>], offsets: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let mut f = 0.0;
    let mut g = vec![0.0; d + 1];
    for ((row, &o), &yj) in h.iter().zip(offsets).zip(y) {
        let eta: f64 = params[d] + o + (0..d).map(|k| params[k] * row[k]).sum::<f64>();
        // log(1 + e^eta) - y eta, evaluated stably
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        f += softplus - yj * eta;
        let p = 1.0 / (1.0 + (-eta).exp());
        for k in 0..d {
            g[k] += (p - yj) * row[k];
        }
        g[d] += p - yj;
    }
    (f, g)
}

/// Objective returning value and gradient.
pub type Objective<'a> = &'a dyn Fn(&[f64]) -> (f64, Vec<f64>);

/// Generic smooth convex minimizer: BFGS with Armijo backtracking, run to a
/// gradient norm of 1e-11.
pub fn bfgs_minimize(f: Objective<'_>, x0: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut hinv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..10_000 {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-11 {
            break;
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            hinv = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut t = 1.0;
        let (x_new, f_new, g_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let (fc, gc) = f(&cand);
            if fc <= fx + 1e-4 * t * slope || t < 1e-16 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    x
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
