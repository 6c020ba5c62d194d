//! Small one-dimensional numerical routines shared by the solver modules.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
///
/// Returns the best point seen, including the bracket endpoints, so that a
/// minimum sitting on the boundary is not lost.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut best = (a, f(a));
    let fb = f(b);
    if fb < best.1 {
        best = (b, fb);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Scans `[lo, hi]` on a uniform grid of spacing at most `step`, then refines
/// the best cell with golden-section search. Robust to curves that are not
/// globally unimodal as long as the grid resolves their basins.
pub fn grid_then_golden<F>(mut f: F, lo: f64, hi: f64, step: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let cells = (((hi - lo) / step).ceil() as usize).max(1);
    let h = (hi - lo) / cells as f64;
    let mut best_i = 0;
    let mut best_f = f64::INFINITY;
    for i in 0..=cells {
        let x = if i == cells { hi } else { lo + i as f64 * h };
        let fx = f(x);
        if fx < best_f {
            best_f = fx;
            best_i = i;
        }
    }
    let x_best = if best_i == cells {
        hi
    } else {
        lo + best_i as f64 * h
    };
    let a = if best_i == 0 {
        lo
    } else {
        lo + (best_i - 1) as f64 * h
    };
    let b = if best_i + 1 >= cells {
        hi
    } else {
        lo + (best_i + 1) as f64 * h
    };
    let refined = golden_section_min(&mut f, a, b, tol);
    if refined.1 < best_f {
        refined
    } else {
        (x_best, best_f)
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = (rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
    let floor = 64.0 * f64::EPSILON * whole.abs();
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, floor, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    floor: f64,
    depth: u32,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        let half = (0.5 * tol).max(floor);
        simpson_step(f, a, m, fa, flm, fm, left, half, floor, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, half, floor, depth - 1)
    }
}
