#![allow(dead_code)]

use cfr::Dataset;

/// Textbook Nelder-Mead written independently of the library: vertices are
/// kept sorted (stable sort by value, NaN treated as +inf) and every trial
/// point is built directly from its defining formula.
pub fn reference_nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
    stall_limit: usize,
) -> (Vec<f64>, f64) {
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let fv = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), fv(x0))];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += 1.0;
        let v = fv(&p);
        simplex.push((p, v));
    }
    let lowest = |s: &[(Vec<f64>, f64)]| s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut record = lowest(&simplex);
    let mut stall = 0;
    let mut iter = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() < tol || iter >= max_iter || stall >= stall_limit {
            break;
        }
        let mut c = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for k in 0..n {
                c[k] += p[k];
            }
        }
        for ck in c.iter_mut() {
            *ck /= n as f64;
        }
        let worst = simplex[n].0.clone();
        let xr: Vec<f64> = (0..n).map(|k| c[k] + alpha * (c[k] - worst[k])).collect();
        let fr = fv(&xr);
        if fr < simplex[0].1 {
            let xe: Vec<f64> = (0..n).map(|k| c[k] + gamma * (xr[k] - c[k])).collect();
            let fe = fv(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc, ok) = if fr < simplex[n].1 {
                let xc: Vec<f64> = (0..n).map(|k| c[k] + rho * (xr[k] - c[k])).collect();
                let fc = fv(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc: Vec<f64> = (0..n).map(|k| c[k] + rho * (worst[k] - c[k])).collect();
                let fc = fv(&xc);
                (xc, fc, fc < simplex[n].1)
            };
            if ok {
                simplex[n] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for (p, v) in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        p[k] = b[k] + sigma * (p[k] - b[k]);
                    }
                    *v = fv(p);
                }
            }
        }
        iter += 1;
        let now = lowest(&simplex);
        if now < record {
            record = now;
            stall = 0;
        } else {
            stall += 1;
        }
    }
    (simplex[0].0.clone(), simplex[0].1)
}

pub fn shifted_square(x: &[f64]) -> f64 {
    (x[0] - 2.0).powi(2)
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

/// `y = 2 x + 1` on an even grid over `[-1, 1]`.
pub fn linear_dataset(n: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect();
    let y = rows.iter().map(|r| 2.0 * r[0] + 1.0).collect();
    Dataset::new(rows, y, vec!["x1".into()], "linear").unwrap()
}

pub fn write_linear_tsv(path: &std::path::Path, n: usize) {
    let ds = linear_dataset(n);
    let f = std::fs::File::create(path).unwrap();
    ds.write_tsv(f, "target").unwrap();
}
