//! Small deterministic optimizers: bracketed bisection, golden-section
//! minimization and a Nelder-Mead simplex.

use crate::real::Real;

/// Bisection for `f(x) = 0` on `[lo, hi]`.
///
/// Assumes `f` is continuous and monotone over the bracket. Stops when
/// `|f(mid)| <= ftol` or the bracket shrinks below `xtol`.
pub fn bisect_root<T: Real>(mut f: impl FnMut(T) -> T, mut lo: T, mut hi: T, xtol: T, ftol: T) -> T {
    let two = T::c(2.0);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return lo;
    }
    if fhi == T::zero() {
        return hi;
    }
    debug_assert!((flo < T::zero()) != (fhi < T::zero()), "root not bracketed");
    let mut mid = (lo + hi) / two;
    for _ in 0..200 {
        mid = (lo + hi) / two;
        let fm = f(mid);
        if fm.abs() <= ftol || (hi - lo).abs() <= xtol {
            return mid;
        }
        if (fm < T::zero()) == (flo < T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Earliest `x` in `[lo, hi]` with `g(x) <= 0`, for non-increasing `g`
/// with `g(lo) > 0 >= g(hi)`. Bisected to `xtol`.
pub fn bisect_crossing<T: Real>(mut g: impl FnMut(T) -> T, mut lo: T, mut hi: T, xtol: T) -> T {
    let two = T::c(2.0);
    while (hi - lo) > xtol {
        let mid = (lo + hi) / two;
        if g(mid) <= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)`.
pub fn golden_section_min<T: Real>(mut f: impl FnMut(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let inv_phi = T::c(0.618_033_988_749_894_8);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / T::c(2.0);
    let fx = f(x);
    if fc < fd && fc < fx {
        (c, fc)
    } else if fd <= fc && fd < fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Derivative-free simplex minimization (standard reflection/expansion/
/// contraction/shrink coefficients).
///
/// Converges when the relative parameter spread of the simplex drops
/// below `tol`, or stops after `max_iters` iterations.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    tol: f64,
    max_iters: usize,
) -> SimplexResult {
    let n = x0.len();
    assert_eq!(step.len(), n);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if step[i] != 0.0 { step[i] } else { 1e-3 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;

        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let reordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let revalues: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = reordered;
        values = revalues;

        // relative parameter spread between best and worst vertices
        let spread = (0..n)
            .map(|i| (simplex[n][i] - simplex[0][i]).abs() / (1.0 + simplex[0][i].abs()))
            .fold(0.0f64, f64::max);
        if spread < tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64)
            .collect();

        let reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + alpha * (centroid[i] - simplex[n][i]))
            .collect();
        let fr = f(&reflect);

        if fr < values[0] {
            let expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + gamma * (reflect[i] - centroid[i]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[n] = expand;
                values[n] = fe;
            } else {
                simplex[n] = reflect;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflect;
            values[n] = fr;
        } else {
            let contract: Vec<f64> = if fr < values[n] {
                (0..n).map(|i| centroid[i] + rho * (reflect[i] - centroid[i])).collect()
            } else {
                (0..n).map(|i| centroid[i] + rho * (simplex[n][i] - centroid[i])).collect()
            };
            let fcv = f(&contract);
            if fcv < values[n].min(fr) {
                simplex[n] = contract;
                values[n] = fcv;
            } else {
                for k in 1..=n {
                    for i in 0..n {
                        simplex[k][i] = simplex[0][i] + sigma * (simplex[k][i] - simplex[0][i]);
                    }
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    SimplexResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        converged,
    }
}
