//! Cost-efficiency engine: construct the cheapest payoff attaining a target
//! distribution, price arbitrary payoffs against the kernel, and audit
//! payoffs for rationalizability (anti-monotonicity + cost match).
//!
//! All pricing integrals run in kernel-quantile space: substituting
//! ξ = F_ξ⁻¹(u) turns E[ξ_T X_T] into ∫₀¹ F_ξ⁻¹(u)·x(F_ξ⁻¹(u)) du, which is
//! bounded except possibly at the endpoints, exactly where the quadrature's
//! singularity handling lives.

use std::sync::Arc;

use thiserror::Error;

use crate::distributions::{DistError, Distribution};
use crate::market::{MarketError, PricingKernel};
use crate::numerics::{self, Grid, NumericsError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EfficiencyError {
    #[error("cost integral diverges: the payoff has an unpriced tail")]
    UnpricedTail,
    #[error("pricing quadrature did not converge (estimate {estimate})")]
    NonConvergence { estimate: f64 },
    #[error(transparent)]
    Numerics(NumericsError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    NonIncreasing,
    NonDecreasing,
    Unknown,
}

/// Terminal consumption expressed as a measurable transform of the kernel
/// value ξ_T.
#[derive(Clone)]
pub struct Payoff {
    transform: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    declared_law: Option<Distribution>,
    monotonicity: Monotonicity,
    /// Known discontinuities of u ↦ x(F_ξ⁻¹(u)), used to split the pricing
    /// integral.
    u_breaks: Vec<f64>,
    cached_cost: Option<f64>,
}

impl std::fmt::Debug for Payoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Payoff")
            .field("declared_law", &self.declared_law)
            .field("monotonicity", &self.monotonicity)
            .field("u_breaks", &self.u_breaks)
            .field("cached_cost", &self.cached_cost)
            .finish_non_exhaustive()
    }
}

impl Payoff {
    pub fn from_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Payoff {
            transform: Arc::new(f),
            declared_law: None,
            monotonicity: Monotonicity::Unknown,
            u_breaks: Vec::new(),
            cached_cost: None,
        }
    }

    pub fn constant(v: f64) -> Self {
        let mut p = Payoff::from_fn(move |_| v);
        p.monotonicity = Monotonicity::NonIncreasing;
        p
    }

    /// Piecewise-linear payoff through (ξ, value) nodes, constant beyond the
    /// first and last node. Monotonicity is detected from the table.
    pub fn from_table(points: Vec<(f64, f64)>) -> Result<Self, EfficiencyError> {
        if points.len() < 2 {
            return Err(EfficiencyError::Distribution(DistError::InvalidParameter(
                "payoff table needs at least 2 points".into(),
            )));
        }
        for w in points.windows(2) {
            if w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less) {
                return Err(EfficiencyError::Distribution(DistError::InvalidParameter(
                    "payoff table xi values must be strictly increasing".into(),
                )));
            }
        }
        let non_inc = points.windows(2).all(|w| w[1].1 <= w[0].1);
        let non_dec = points.windows(2).all(|w| w[1].1 >= w[0].1);
        let monotonicity = if non_inc {
            Monotonicity::NonIncreasing
        } else if non_dec {
            Monotonicity::NonDecreasing
        } else {
            Monotonicity::Unknown
        };
        let pts = points.clone();
        Ok(Payoff {
            transform: Arc::new(move |xi: f64| {
                if xi <= pts[0].0 {
                    return pts[0].1;
                }
                if xi >= pts[pts.len() - 1].0 {
                    return pts[pts.len() - 1].1;
                }
                let i = pts.partition_point(|p| p.0 <= xi);
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                y0 + (xi - x0) / (x1 - x0) * (y1 - y0)
            }),
            declared_law: None,
            monotonicity,
            u_breaks: Vec::new(),
            cached_cost: None,
        })
    }

    /// Payoff value in the state where the kernel takes value `xi`.
    pub fn value_at(&self, xi: f64) -> f64 {
        (self.transform)(xi)
    }

    pub fn declared_law(&self) -> Option<&Distribution> {
        self.declared_law.as_ref()
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn with_declared_law(mut self, law: Distribution) -> Self {
        self.declared_law = Some(law);
        self
    }

    pub(crate) fn from_parts(
        transform: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        declared_law: Option<Distribution>,
        monotonicity: Monotonicity,
        u_breaks: Vec<f64>,
    ) -> Self {
        Payoff {
            transform,
            declared_law,
            monotonicity,
            u_breaks,
            cached_cost: None,
        }
    }
}

/// The cost-efficient transform F⁻¹(1 − F_ξ(ξ)), evaluated through the
/// survival function on the expensive side and the complementary quantile on
/// the cheap side so both tails keep full precision.
pub(crate) fn efficient_transform(target: &Distribution, kernel_law: &Distribution, xi: f64) -> f64 {
    let p = kernel_law.cdf(xi);
    if p >= 0.5 {
        let s = kernel_law.sf(xi).clamp(1e-300, 1.0 - 1e-16);
        target.quantile(s).unwrap()
    } else {
        let p = p.clamp(1e-300, 0.5);
        target.quantile_complement(p).unwrap()
    }
}

/// Cheapest payoff with distribution `target` in market `kernel`:
/// ξ ↦ F⁻¹(1 − F_ξ(ξ)), non-increasing in ξ. Fails with `UnpricedTail` when
/// the budget integral diverges.
pub fn efficient_payoff(
    target: &Distribution,
    kernel: &PricingKernel,
    tol: &Tolerance,
) -> Result<Payoff, EfficiencyError> {
    let t = target.clone();
    let klaw = kernel.law().clone();
    let transform = move |xi: f64| efficient_transform(&t, &klaw, xi);
    // the payoff as a function of the kernel quantile u is F^{-1}(1-u),
    // which is flat over [sf(k), sf(k)+mass] at each atom k of the target;
    // splitting the pricing integral at those kinks keeps quadrature sharp
    let mut u_breaks = Vec::new();
    for (at, mass) in target.atoms() {
        let s = target.sf(at);
        for u in [s, s + mass] {
            if u > 0.0 && u < 1.0 {
                u_breaks.push(u);
            }
        }
    }
    u_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u_breaks.dedup();
    let mut payoff = Payoff {
        transform: Arc::new(transform),
        declared_law: Some(target.clone()),
        monotonicity: Monotonicity::NonIncreasing,
        u_breaks,
        cached_cost: None,
    };
    let c = cost(&payoff, kernel, tol)?;
    payoff.cached_cost = Some(c);
    Ok(payoff)
}

/// Integrate g over (0,1) splitting at the known breakpoints; classify a
/// non-convergent endpoint piece as a diverging tail when u·g(u) fails to
/// vanish along a geometric sequence into the endpoint.
fn integrate_unit_interval<G: Fn(f64) -> f64>(
    g: G,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<f64, EfficiencyError> {
    let mut cuts = vec![0.0];
    cuts.extend(breaks.iter().copied().filter(|u| *u > 0.0 && *u < 1.0));
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let n = cuts.len() - 1;
    let seg_tol = Tolerance {
        abs_tol: tol.abs_tol / n as f64,
        ..*tol
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        match numerics::integrate_finite(&g, w[0], w[1], &seg_tol) {
            Ok(v) => total += v,
            Err(NumericsError::NonConvergence { estimate, .. }) => {
                let touches_zero = w[0] == 0.0;
                let touches_one = w[1] == 1.0;
                if (touches_zero && tail_diverges(|u| g(u).abs(), true))
                    || (touches_one && tail_diverges(|u| g(u).abs(), false))
                {
                    return Err(EfficiencyError::UnpricedTail);
                }
                return Err(EfficiencyError::NonConvergence {
                    estimate: total + estimate,
                });
            }
            Err(e) => return Err(EfficiencyError::Numerics(e)),
        }
    }
    Ok(total)
}

/// Divergence witness for a monotone endpoint singularity: if u·|g(u)| does
/// not decay while u → 0 (resp. (1−u)·|g| while u → 1), the integral cannot
/// be finite.
fn tail_diverges<G: Fn(f64) -> f64>(g: G, at_zero: bool) -> bool {
    let mut last = f64::NAN;
    let mut first = f64::NAN;
    for k in 1..=6 {
        let eps = 10f64.powi(-2 * k - 2);
        let (u, weight) = if at_zero { (eps, eps) } else { (1.0 - eps, eps) };
        let m = weight * g(u);
        if !m.is_finite() {
            return true;
        }
        if k == 1 {
            first = m;
        }
        last = m;
    }
    last >= 0.5 * first && last > 1e-12
}

/// Locate discontinuities of u ↦ w(u) by scanning a fine grid for outlier
/// increments and bisecting each candidate to float resolution. A jump left
/// unregistered can hide inside the node-free margin of a Kronrod interval
/// and silently lose its sliver, so opaque payoffs get scanned before
/// pricing.
fn detect_jumps<W: Fn(f64) -> f64>(w: W, n: usize) -> Vec<f64> {
    let us: Vec<f64> = (0..=n).map(|i| (i as f64 + 0.5) / (n + 1) as f64).collect();
    let vs: Vec<f64> = us.iter().map(|&u| w(u)).collect();
    let range = vs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let scale = (range.1 - range.0).abs().max(1e-12);
    let mut jumps = Vec::new();
    for i in 0..n {
        let d = (vs[i + 1] - vs[i]).abs();
        if d < 1e-6 * scale {
            continue;
        }
        let left = if i > 0 { (vs[i] - vs[i - 1]).abs() } else { 0.0 };
        let right = if i + 2 <= n {
            (vs[i + 2] - vs[i + 1]).abs()
        } else {
            0.0
        };
        // a genuine jump dwarfs the smooth increments around it
        if d > 20.0 * left.max(right) + 1e-9 * scale {
            let (mut lo, mut hi) = (us[i], us[i + 1]);
            let (vl, vr) = (vs[i], vs[i + 1]);
            for _ in 0..80 {
                if hi - lo <= f64::EPSILON * hi {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let vm = w(mid);
                if (vm - vl).abs() <= (vm - vr).abs() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            jumps.push(lo);
            jumps.push(hi);
        }
    }
    jumps
}

/// Price E[ξ_T·X_T] by quadrature in kernel-quantile space.
pub fn cost(x: &Payoff, kernel: &PricingKernel, tol: &Tolerance) -> Result<f64, EfficiencyError> {
    if let Some(c) = x.cached_cost {
        return Ok(c);
    }
    let klaw = kernel.law().clone();
    let tr = x.transform.clone();
    let value_at_u = {
        let klaw = klaw.clone();
        let tr = tr.clone();
        move |u: f64| {
            let u = u.clamp(1e-300, 1.0 - 1e-16);
            tr(klaw.quantile(u).unwrap())
        }
    };
    // payoffs built by this crate register their own discontinuities; an
    // opaque transform gets a jump scan instead
    let mut breaks = x.u_breaks.clone();
    if breaks.is_empty() {
        breaks = detect_jumps(value_at_u, 4096);
    }
    let g = move |u: f64| {
        let u = u.clamp(1e-300, 1.0 - 1e-16);
        let xi = klaw.quantile(u).unwrap();
        xi * tr(xi)
    };
    integrate_unit_interval(g, &breaks, tol)
}

/// Minimal cost of attaining `target`: the cost of the efficient payoff.
pub fn distributional_price(
    target: &Distribution,
    kernel: &PricingKernel,
    tol: &Tolerance,
) -> Result<f64, EfficiencyError> {
    let p = efficient_payoff(target, kernel, tol)?;
    cost(&p, kernel, tol)
}

/// Outcome of a rationalizability audit.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub cost: f64,
    pub distributional_price: f64,
    pub is_antimonotone: bool,
    pub is_efficient: bool,
    pub excess_cost: f64,
}

/// Number of kernel quantiles sampled by the monotonicity audit.
const AUDIT_GRID: usize = 1001;

/// Audit a payoff: price it, price its distribution, and sample the
/// transform on a dense kernel-quantile grid for anti-monotonicity.
pub fn audit(
    x: &Payoff,
    kernel: &PricingKernel,
    tol: &Tolerance,
) -> Result<EfficiencyReport, EfficiencyError> {
    let c = cost(x, kernel, tol)?;
    let law = match x.declared_law() {
        Some(l) => l.clone(),
        None => pushforward_law(x, kernel, 2001)?,
    };
    let price = distributional_price(&law, kernel, tol)?;
    // sampled monotonicity on u in [1e-4, 1-1e-4]
    let mut values = Vec::with_capacity(AUDIT_GRID);
    for i in 0..AUDIT_GRID {
        let u = 1e-4 + (1.0 - 2e-4) * i as f64 / (AUDIT_GRID - 1) as f64;
        let xi = kernel.law().quantile(u)?;
        values.push(x.value_at(xi));
    }
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let slack = 1e-12 * scale;
    let is_antimonotone = values.windows(2).all(|w| w[1] <= w[0] + slack);
    let excess_cost = c - price;
    let eff_tol = 10.0 * tol.target(c.abs().max(price.abs()));
    Ok(EfficiencyReport {
        cost: c,
        distributional_price: price,
        is_antimonotone,
        is_efficient: excess_cost <= eff_tol,
        excess_cost,
    })
}

/// Distribution function of the payoff under the kernel's law, evaluated at
/// `v`. Monotone transforms are inverted by bisection in quantile space
/// (error at the bisection tolerance); general transforms fall back to
/// equal-mass sampling with O(1/n) accuracy.
pub fn pushforward_cdf(x: &Payoff, kernel: &PricingKernel, v: f64) -> Result<f64, EfficiencyError> {
    let eps = 1e-15;
    let w = |u: f64| -> Result<f64, EfficiencyError> {
        Ok(x.value_at(kernel.law().quantile(u)?))
    };
    match x.monotonicity {
        Monotonicity::NonIncreasing => {
            // {u : w(u) <= v} = [u*, 1); cdf = 1 - u*
            if w(eps)? <= v {
                return Ok(1.0);
            }
            if w(1.0 - eps)? > v {
                return Ok(0.0);
            }
            let (mut lo, mut hi) = (eps, 1.0 - eps);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if w(mid)? <= v {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(1.0 - hi)
        }
        Monotonicity::NonDecreasing => {
            // {u : w(u) <= v} = (0, u*]; cdf = u*
            if w(eps)? > v {
                return Ok(0.0);
            }
            if w(1.0 - eps)? <= v {
                return Ok(1.0);
            }
            let (mut lo, mut hi) = (eps, 1.0 - eps);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if w(mid)? <= v {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(lo)
        }
        Monotonicity::Unknown => {
            let n = 4001;
            let mut count = 0usize;
            for i in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                if w(u)? <= v {
                    count += 1;
                }
            }
            Ok(count as f64 / n as f64)
        }
    }
}

/// Empirical-grid snapshot of the payoff's law on `n` equal-mass quantiles.
pub fn pushforward_law(
    x: &Payoff,
    kernel: &PricingKernel,
    n: usize,
) -> Result<Distribution, EfficiencyError> {
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        values.push(x.value_at(kernel.law().quantile(u)?));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // collapse ties, assign cdf levels at the right edge of each block
    let mut xs = Vec::new();
    let mut fs = Vec::new();
    let spread = (values[n - 1] - values[0]).max(1e-9).max(1e-9 * values[0].abs());
    xs.push(values[0] - 1e-9 * spread);
    fs.push(0.0);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        xs.push(values[j]);
        fs.push((j + 1) as f64 / n as f64);
        i = j + 1;
    }
    *fs.last_mut().unwrap() = 1.0;
    Ok(Distribution::empirical_grid(xs, fs)?)
}

/// Max |F_payoff − F_target| over the grid, with the payoff cdf obtained by
/// pushforward.
pub fn pushforward_ks(
    x: &Payoff,
    kernel: &PricingKernel,
    target: &Distribution,
    grid: &Grid,
) -> Result<f64, EfficiencyError> {
    let mut worst = 0.0_f64;
    for &v in grid.points() {
        let c = pushforward_cdf(x, kernel, v)?;
        worst = worst.max((c - target.cdf(v)).abs());
    }
    Ok(worst)
}

/// A measure-preserving rearrangement: the unit interval is cut into
/// `n_bands` equal-probability bands and each listed pair of bands swaps its
/// payoff values. The payoff's distribution is unchanged; anti-monotonicity
/// (and hence cost-efficiency) is destroyed by any non-trivial swap.
#[derive(Debug, Clone)]
pub struct Rearrangement {
    n_bands: usize,
    pairs: Vec<(usize, usize)>,
}

impl Rearrangement {
    pub fn new(n_bands: usize, pairs: Vec<(usize, usize)>) -> Self {
        assert!(n_bands >= 2);
        for &(i, j) in &pairs {
            assert!(i < n_bands && j < n_bands);
        }
        Rearrangement { n_bands, pairs }
    }

    /// Random pairwise swaps (bands may repeat across pairs; later swaps
    /// compose with earlier ones).
    pub fn random<R: rand::Rng>(n_bands: usize, n_swaps: usize, rng: &mut R) -> Self {
        let pairs = (0..n_swaps)
            .map(|_| {
                (
                    rng.random_range(0..n_bands),
                    rng.random_range(0..n_bands),
                )
            })
            .collect();
        Rearrangement { n_bands, pairs }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation().iter().enumerate().all(|(i, &p)| i == p)
    }

    fn permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.n_bands).collect();
        for &(i, j) in &self.pairs {
            perm.swap(i, j);
        }
        perm
    }
}

/// Apply a rearrangement to a payoff in market `kernel`.
pub fn rearranged_payoff(x: &Payoff, kernel: &PricingKernel, r: &Rearrangement) -> Payoff {
    let perm = r.permutation();
    let n = r.n_bands as f64;
    let klaw = kernel.law().clone();
    let inner = x.transform.clone();
    let transform = move |xi: f64| {
        let u = klaw.cdf(xi).clamp(1e-300, 1.0 - 1e-16);
        let band = ((u * n) as usize).min(perm.len() - 1);
        let s = u * n - band as f64;
        let u2 = ((perm[band] as f64 + s) / n).clamp(1e-300, 1.0 - 1e-16);
        inner(klaw.quantile(u2).unwrap())
    };
    let mut u_breaks: Vec<f64> = (1..r.n_bands).map(|i| i as f64 / n).collect();
    u_breaks.extend_from_slice(&x.u_breaks);
    u_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u_breaks.dedup();
    Payoff {
        transform: Arc::new(transform),
        declared_law: x.declared_law.clone(),
        monotonicity: if r.is_identity() {
            x.monotonicity
        } else {
            Monotonicity::Unknown
        },
        u_breaks,
        cached_cost: None,
    }
}
