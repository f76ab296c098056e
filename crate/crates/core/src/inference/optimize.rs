//! Small derivative-free helpers used to seed the samplers.

use nalgebra::DMatrix;

/// Nelder–Mead minimization with the standard coefficients.
/// `steps` gives the initial simplex offset along each axis.
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    steps: &[f64],
    max_iter: usize,
    ftol: f64,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += steps[i];
        let v = f(&p);
        simplex.push((p, v));
    }
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
        let best = key(simplex[0].1);
        let worst = key(simplex[n].1);
        if (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = key(f(&xr));
        if fr < best {
            let xe = along(2.0);
            let fe = key(f(&xe));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < key(simplex[n - 1].1) {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let x = along(0.5);
                let v = key(f(&x));
                (x, v)
            } else {
                let x = along(-0.5);
                let v = key(f(&x));
                (x, v)
            };
            if fc < worst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        p.0[j] = x0[j] + 0.5 * (p.0[j] - x0[j]);
                    }
                    p.1 = key(f(&p.0));
                }
            }
        }
    }
    simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
    simplex.swap_remove(0)
}

/// Central-difference Hessian of `f` at `x` with per-axis steps `h`.
pub(crate) fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let eval = |di: Option<(usize, f64)>, dj: Option<(usize, f64)>| {
        let mut p = x.to_vec();
        if let Some((i, s)) = di {
            p[i] += s;
        }
        if let Some((j, s)) = dj {
            p[j] += s;
        }
        f(&p)
    };
    let mut hm = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = eval(Some((i, h[i])), None);
        let fm = eval(Some((i, -h[i])), None);
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(Some((i, h[i])), Some((j, h[j])));
            let fpm = eval(Some((i, h[i])), Some((j, -h[j])));
            let fmp = eval(Some((i, -h[i])), Some((j, h[j])));
            let fmm = eval(Some((i, -h[i])), Some((j, -h[j])));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    hm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, v) = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], 5000, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4, "{x:?}");
        assert!(v < 1e-8);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let h = hessian(f, &[0.3, -0.2], &[1e-3, 1e-3]);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 10.0).abs() < 1e-5);
    }
}
