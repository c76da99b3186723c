//! Bounded Nelder-Mead minimizer used to polish sampled maxima and to
//! search multiplier space. Deterministic: no randomness, fixed iteration
//! budget, points clipped to the box.

/// Minimize `f` over the axis-aligned box `[lo, hi]`, starting from `x0`.
/// Returns the best point and value found.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    if d == 0 {
        return (Vec::new(), f(&[]));
    }
    let clip = |x: &mut [f64]| {
        for i in 0..d {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };

    // Initial simplex: x0 plus a perturbation along each axis.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        let span = hi[i] - lo[i];
        let step = if span > 0.0 { 0.05 * span } else { 0.1 * (1.0 + p[i].abs()) };
        p[i] += if p[i] + step <= hi[i] { step } else { -step };
        clip(&mut p);
        simplex.push(p);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|p| sane(f(p))).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iters {
        // Order ascending by value.
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
        let reordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let revals: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = reordered;
        fvals = revals;

        if (fvals[d] - fvals[0]).abs() <= 1e-12 * (1.0 + fvals[0].abs()) {
            break;
        }

        // Centroid of all but the worst.
        let mut cen = vec![0.0; d];
        for p in simplex.iter().take(d) {
            for i in 0..d {
                cen[i] += p[i] / d as f64;
            }
        }

        let worst = simplex[d].clone();
        let mut refl: Vec<f64> = (0..d).map(|i| cen[i] + alpha * (cen[i] - worst[i])).collect();
        clip(&mut refl);
        let f_refl = sane(f(&refl));

        if f_refl < fvals[0] {
            let mut exp: Vec<f64> =
                (0..d).map(|i| cen[i] + gamma * (refl[i] - cen[i])).collect();
            clip(&mut exp);
            let f_exp = sane(f(&exp));
            if f_exp < f_refl {
                simplex[d] = exp;
                fvals[d] = f_exp;
            } else {
                simplex[d] = refl;
                fvals[d] = f_refl;
            }
        } else if f_refl < fvals[d - 1] {
            simplex[d] = refl;
            fvals[d] = f_refl;
        } else {
            let mut con: Vec<f64> =
                (0..d).map(|i| cen[i] + rho * (worst[i] - cen[i])).collect();
            clip(&mut con);
            let f_con = sane(f(&con));
            if f_con < fvals[d] {
                simplex[d] = con;
                fvals[d] = f_con;
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].clone();
                for j in 1..=d {
                    for i in 0..d {
                        simplex[j][i] = best[i] + sigma * (simplex[j][i] - best[i]);
                    }
                    let p = simplex[j].clone();
                    fvals[j] = sane(f(&p));
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    (simplex[best].clone(), fvals[best])
}

fn sane(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_shifted_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] + 0.5).powi(2);
        let (x, v) = nelder_mead(&mut f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], 500);
        assert!(v < 1e-10);
        assert!((x[0] - 0.3).abs() < 1e-4);
        assert!((x[1] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at 2.0, box caps at 1.0.
        let mut f = |x: &[f64]| (x[0] - 2.0).powi(2);
        let (x, _) = nelder_mead(&mut f, &[0.0], &[-1.0], &[1.0], 500);
        assert!((x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut f = |x: &[f64]| x[0].sin() + x[1].cos();
        let a = nelder_mead(&mut f, &[0.1, 0.2], &[-3.0, -3.0], &[3.0, 3.0], 300);
        let b = nelder_mead(&mut f, &[0.1, 0.2], &[-3.0, -3.0], &[3.0, 3.0], 300);
        assert_eq!(a.0, b.0);
    }
}
