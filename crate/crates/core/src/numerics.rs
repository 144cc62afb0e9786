//! Shared numerical kernels: adaptive Gauss–Kronrod quadrature (improper
//! endpoints via rational substitution), a bracketing secant/bisection root
//! finder, and second-difference convexity probes.
//!
//! All functions are pure; nothing here holds state.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    NonConvergence { estimate: f64, error_bound: f64 },
    #[error("integrand returned a non-finite value at x = {at}")]
    NonFinite { at: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
}

/// Extended real line. Infinite endpoints are tagged, never sentinel floats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn as_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn from_f64(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else if x == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x)
        }
    }

    /// Product with a positive finite scalar, preserving infinities.
    pub fn scale(self, k: f64) -> Self {
        debug_assert!(k > 0.0 && k.is_finite());
        match self {
            ExtReal::Finite(x) => ExtReal::Finite(k * x),
            other => other,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

/// Error targets for the iterative kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self, NumericsError> {
        if abs_tol <= 0.0 || !abs_tol.is_finite() {
            return Err(NumericsError::InvalidTolerance(format!(
                "abs_tol must be positive and finite, got {abs_tol}"
            )));
        }
        if rel_tol <= 0.0 || !rel_tol.is_finite() {
            return Err(NumericsError::InvalidTolerance(format!(
                "rel_tol must be positive and finite, got {rel_tol}"
            )));
        }
        if max_iter == 0 {
            return Err(NumericsError::InvalidTolerance(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(Tolerance {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }

    /// Combined target for a quantity of magnitude `scale`.
    pub fn target(&self, scale: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * scale.abs())
    }
}

impl Default for Tolerance {
    // Acceptance-level accuracy is 1e-6; internal kernels keep headroom.
    fn default() -> Self {
        Tolerance {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iter: 60,
        }
    }
}

/// Strictly increasing finite sequence of evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self, NumericsError> {
        if points.len() < 2 {
            return Err(NumericsError::InvalidGrid(
                "grid needs at least 2 points".into(),
            ));
        }
        for w in points.windows(2) {
            if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
                return Err(NumericsError::InvalidGrid(format!(
                    "points must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::InvalidGrid("points must be finite".into()));
        }
        Ok(Grid { points })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self, NumericsError> {
        if n < 2 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(NumericsError::InvalidGrid(format!(
                "uniform grid needs n >= 2 and lo < hi, got n={n}, lo={lo}, hi={hi}"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        points[n - 1] = hi;
        Grid::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

// 15-point Kronrod nodes with the embedded 7-point Gauss rule (quadpack data).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 15] = [
    -0.991_455_371_120_812_6,
    -0.949_107_912_342_758_5,
    -0.864_864_423_359_769_1,
    -0.741_531_185_599_394_4,
    -0.586_087_235_467_691_1,
    -0.405_845_151_377_397_2,
    -0.207_784_955_007_898_5,
    0.0,
    0.207_784_955_007_898_5,
    0.405_845_151_377_397_2,
    0.586_087_235_467_691_1,
    0.741_531_185_599_394_4,
    0.864_864_423_359_769_1,
    0.949_107_912_342_758_5,
    0.991_455_371_120_812_6,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 15] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_82,
    0.204_432_940_075_298_9,
    0.190_350_578_064_785_4,
    0.169_004_726_639_267_9,
    0.140_653_259_715_525_92,
    0.104_790_010_322_250_18,
    0.063_092_092_629_978_55,
    0.022_935_322_010_529_225,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_94,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// One Gauss–Kronrod pass on [a, b]: (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), NumericsError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    let mut res_abs = 0.0;
    let mut fv = [0.0_f64; 15];
    for (j, &xi) in XGK.iter().enumerate() {
        let x = c + h * xi;
        let v = f(x);
        if !v.is_finite() {
            return Err(NumericsError::NonFinite { at: x });
        }
        fv[j] = v;
        kronrod += WGK[j] * v;
        res_abs += WGK[j] * v.abs();
        if j % 2 == 1 {
            gauss += WG[j / 2] * v;
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = 0.0;
    for (j, &v) in fv.iter().enumerate() {
        res_asc += WGK[j] * (v - mean).abs();
    }
    let raw_err = ((kronrod - gauss) * h).abs();
    // quadpack-style error rescaling: sharpen the estimate when the rule pair
    // agrees much better than the integrand's variation would suggest.
    let res_asc = res_asc * h.abs();
    let mut err = raw_err;
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    let res_abs = res_abs * h.abs();
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok((kronrod * h, err))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: usize,
}

/// Globally adaptive quadrature over a finite interval. Splits the segment
/// with the worst error estimate until the summed bound meets the target;
/// each segment may be bisected at most `tol.max_iter` times, which is what
/// bounds work near an integrable endpoint singularity.
fn adaptive_finite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk15(f, a, b)?;
    let mut segs = vec![Segment {
        a,
        b,
        value: v,
        err: e,
        depth: 0,
    }];
    let mut total = v;
    let mut total_err = e;
    // Hard cap keeps pathological integrands from spinning; generous enough
    // for a singularity at each endpoint plus interior structure.
    let max_segments = 64 * tol.max_iter.max(1);
    loop {
        if total_err <= tol.target(total) {
            return Ok(total);
        }
        // worst segment first
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .unwrap();
        let seg = segs.swap_remove(idx);
        if seg.depth >= tol.max_iter || segs.len() + 2 > max_segments {
            return Err(NumericsError::NonConvergence {
                estimate: total,
                error_bound: total_err,
            });
        }
        total -= seg.value;
        total_err -= seg.err;
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval is at floating-point resolution; accept its estimate
            total += seg.value;
            return Ok(total);
        }
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let (v, e) = gk15(f, lo, hi)?;
            total += v;
            total_err += e;
            segs.push(Segment {
                a: lo,
                b: hi,
                value: v,
                err: e,
                depth: seg.depth + 1,
            });
        }
    }
}

/// Integrate `f` over (lo, hi), where either endpoint may be infinite and
/// integrable endpoint singularities are allowed. Infinite ranges are mapped
/// to finite ones by rational substitution; the Kronrod nodes never touch
/// interval endpoints, so singular limits are never evaluated.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: ExtReal,
    hi: ExtReal,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    match (lo, hi) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => {
            if a == b {
                return Ok(0.0);
            }
            if a > b {
                return integrate(f, hi, lo, tol).map(|v| -v);
            }
            adaptive_finite(&f, a, b, tol)
        }
        (ExtReal::Finite(a), ExtReal::PosInf) => {
            // x = a + t/(1-t), t in (0,1)
            let g = move |t: f64| {
                let om = 1.0 - t;
                let x = a + t / om;
                let fx = f(x);
                if fx == 0.0 {
                    return 0.0;
                }
                fx / (om * om)
            };
            adaptive_finite(&g, 0.0, 1.0, tol)
        }
        (ExtReal::NegInf, ExtReal::Finite(b)) => {
            // x = b - t/(1-t), t in (0,1)
            let g = move |t: f64| {
                let om = 1.0 - t;
                let x = b - t / om;
                let fx = f(x);
                if fx == 0.0 {
                    return 0.0;
                }
                fx / (om * om)
            };
            adaptive_finite(&g, 0.0, 1.0, tol)
        }
        (ExtReal::NegInf, ExtReal::PosInf) => {
            // x = t/(1-t^2), t in (-1,1)
            let g = move |t: f64| {
                let om = 1.0 - t * t;
                let x = t / om;
                let fx = f(x);
                if fx == 0.0 {
                    return 0.0;
                }
                fx * (1.0 + t * t) / (om * om)
            };
            adaptive_finite(&g, -1.0, 1.0, tol)
        }
        (ExtReal::PosInf, _) | (_, ExtReal::NegInf) => {
            let (a, b) = (lo, hi);
            integrate(f, b, a, tol).map(|v| -v)
        }
    }
}

/// Convenience wrapper for finite limits.
pub fn integrate_finite<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    integrate(f, ExtReal::Finite(lo), ExtReal::Finite(hi), tol)
}

/// Bracketing root finder: secant steps accepted only while they stay inside
/// the current sign-change bracket, bisection otherwise. The bracket is never
/// lost, so termination is guaranteed.
pub fn find_root<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(NumericsError::NoBracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let width_target = |a: f64, b: f64| tol.abs_tol.max(tol.rel_tol * a.abs().max(b.abs()));
    // bisection alone reaches double resolution in < 80 halvings from any
    // finite bracket, so this cap is never the binding constraint
    let max_steps = (4 * tol.max_iter).max(200);
    let mut last = 0.5 * (a + b);
    for _ in 0..max_steps {
        if (b - a).abs() <= width_target(a, b) {
            return Ok(if fa.abs() <= fb.abs() { a } else { b });
        }
        // secant candidate from the bracket endpoints
        let mut x = b - fb * (b - a) / (fb - fa);
        let margin = 0.01 * (b - a);
        if !x.is_finite() || x <= a + margin || x >= b - margin {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx == 0.0 || fx.abs() <= tol.abs_tol {
            return Ok(x);
        }
        if fa * fx < 0.0 {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
        if (x - last).abs() < f64::EPSILON * x.abs().max(1.0) {
            // stagnating on a flat stretch; force a bisection step
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fa * fm < 0.0 {
                b = m;
                fb = fm;
            } else {
                a = m;
                fa = fm;
            }
        }
        last = x;
    }
    Ok(if fa.abs() <= fb.abs() { a } else { b })
}

/// Minimum centered second difference of `f` over the interior grid points,
/// normalized so that a quadratic αx² returns 2α exactly (non-uniform
/// three-point formula). A positive return certifies numerical convexity on
/// the grid.
pub fn second_difference_min<F: Fn(f64) -> f64>(f: F, grid: &Grid) -> Result<f64, NumericsError> {
    let xs = grid.points();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for (i, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(NumericsError::NonFinite { at: xs[i] });
        }
    }
    let mut min = f64::INFINITY;
    for i in 1..xs.len() - 1 {
        let h1 = xs[i] - xs[i - 1];
        let h2 = xs[i + 1] - xs[i];
        let d2 = 2.0
            * (vals[i - 1] / (h1 * (h1 + h2)) - vals[i] / (h1 * h2)
                + vals[i + 1] / (h2 * (h1 + h2)));
        if d2 < min {
            min = d2;
        }
    }
    if min == f64::INFINITY {
        // two-point grid has no interior; treat as degenerate linear
        min = 0.0;
    }
    Ok(min)
}
