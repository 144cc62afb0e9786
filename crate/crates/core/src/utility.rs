//! Implied utility inference and its inverse.
//!
//! Forward direction: a target distribution F and a pricing kernel determine
//! a marginal utility U'(y) = F_ξ⁻¹(1 − F(y)); integrating it from an anchor
//! gives the unique (up to affine map) concave utility whose expected-utility
//! optimum is distributed with F. Continuous strictly increasing targets give
//! a classical smooth curve; arbitrary targets give a generalized utility
//! that is −∞ below the support and flat above it.
//!
//! Backward direction: a utility plus a budget determine the optimal payoff
//! [U']⁻¹(λ*ξ), with the multiplier λ* matched to the budget by root
//! finding and [U']⁻¹ the pseudo-inverse inf{x | U'(x) ≤ y}, inf ∅ = b.

use std::sync::Arc;

use thiserror::Error;

use crate::distributions::{DistError, Distribution};
use crate::efficiency::{self, EfficiencyError, Monotonicity, Payoff};
use crate::market::PricingKernel;
use crate::numerics::{self, ExtReal, Grid, NumericsError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("target distribution has atoms or flats; use the generalized inference")]
    NonContinuousTarget,
    #[error("anchor {anchor} has F(anchor) = 0; pick a point with positive cdf")]
    InvalidAnchor { anchor: f64 },
    #[error("distributional price of the target diverges")]
    UnpricedTail,
    #[error("budget {budget} outside the attainable window ({lo}, {hi})")]
    BudgetOutOfRange { budget: f64, lo: f64, hi: f64 },
    #[error("could not bracket the budget with lambda in [1e-12, 1e12]")]
    NoBracket,
    #[error("grid leaves the common domain of the curve and the family")]
    DomainMismatch,
    #[error("curve quadrature failed: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Numerics(NumericsError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Efficiency(EfficiencyError),
}

impl From<EfficiencyError> for UtilityError {
    fn from(e: EfficiencyError) -> Self {
        match e {
            EfficiencyError::UnpricedTail => UtilityError::UnpricedTail,
            other => UtilityError::Efficiency(other),
        }
    }
}

impl From<NumericsError> for UtilityError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NonConvergence { estimate, error_bound } => UtilityError::NonConvergence(
                format!("estimate {estimate}, error bound {error_bound}"),
            ),
            other => UtilityError::Numerics(other),
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A concave non-decreasing utility on an interval (a, b), represented by
/// its marginal. `value` integrates the marginal from the anchor; closed
/// forms replace quadrature where a family provides them.
#[derive(Clone)]
pub struct UtilityCurve {
    domain: (ExtReal, ExtReal),
    anchor: f64,
    /// Right-continuous version of the (left-)derivative; +∞ below a, 0
    /// above b.
    marginal_fn: RealFn,
    /// Closed-form antiderivative of the marginal, if available.
    value_fn: Option<RealFn>,
    /// Closed-form pseudo-inverse of the marginal, if available.
    inverse_marginal_fn: Option<RealFn>,
    /// Kink locations in (a, b] with cached values (x, value(x)), ascending;
    /// always contains the anchor. Caching is done at construction so
    /// evaluation stays pure and thread-safe.
    nodes: Vec<(f64, f64)>,
    /// lim_{x↓a} U'(x); +∞ for standard curves.
    marginal_sup: ExtReal,
    /// lim_{x↑b} U'(x); 0 for standard curves.
    marginal_inf: f64,
    /// Marginal levels at which the pseudo-inverse jumps or is flat;
    /// quadrature-splitting hints for pricing.
    jump_levels: Vec<f64>,
    tol: Tolerance,
}

impl std::fmt::Debug for UtilityCurve {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UtilityCurve")
            .field("domain", &self.domain)
            .field("anchor", &self.anchor)
            .field("marginal_sup", &self.marginal_sup)
            .field("marginal_inf", &self.marginal_inf)
            .field("nodes", &self.nodes)
            .finish_non_exhaustive()
    }
}

impl UtilityCurve {
    pub fn domain(&self) -> (ExtReal, ExtReal) {
        self.domain
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// U'(x): positive and non-increasing on (a, b), +∞ below a, 0 above b.
    pub fn marginal(&self, x: f64) -> f64 {
        (self.marginal_fn)(x)
    }

    pub fn marginal_sup(&self) -> ExtReal {
        self.marginal_sup
    }

    pub fn marginal_inf(&self) -> f64 {
        self.marginal_inf
    }

    /// U(x) with U(anchor) = 0. Returns −∞ below the domain and the flat
    /// level U(b⁻) at and above a finite b.
    pub fn value(&self, x: f64) -> Result<f64, UtilityError> {
        let av = self.domain.0.as_f64();
        let bv = self.domain.1.as_f64();
        if av >= bv {
            // degenerate domain: flat at 0 from the anchor up, -inf below
            return Ok(if x < av { f64::NEG_INFINITY } else { 0.0 });
        }
        if x < av {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(vf) = &self.value_fn {
            let x_eff = if x > bv { bv } else { x };
            return Ok(vf(x_eff) - vf(self.anchor));
        }
        if x >= bv {
            // b finite (otherwise x >= bv is impossible for finite x)
            return self.cached_or_integrated(bv);
        }
        if x == av {
            // value at the left edge is the (possibly -inf) limit
            let p0 = self.nodes[0].0;
            let base = self.cached_or_integrated(p0)?;
            return match numerics::integrate_finite(|y| (self.marginal_fn)(y), av, p0, &self.tol)
            {
                Ok(tail) => Ok(base - tail),
                Err(NumericsError::NonConvergence { .. }) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e.into()),
            };
        }
        self.cached_or_integrated(x)
    }

    fn cached_or_integrated(&self, x: f64) -> Result<f64, UtilityError> {
        // nearest cached node; all kinks are cached, so the remaining
        // stretch is smooth
        let idx = self.nodes.partition_point(|n| n.0 <= x);
        let (px, pv) = if idx > 0 { self.nodes[idx - 1] } else { self.nodes[0] };
        if px == x {
            return Ok(pv);
        }
        let inc = numerics::integrate_finite(|y| (self.marginal_fn)(y), px, x, &self.tol)?;
        Ok(pv + inc)
    }

    /// Pseudo-inverse [U']⁻¹(y) = inf{x ∈ (a,b) | U'(x) ≤ y} with
    /// inf ∅ = b. Flat stretches of the marginal map to their left edge;
    /// arguments at or above the left marginal limit map to a exactly, and
    /// arguments below the right limit map to b exactly.
    pub fn pseudo_inverse(&self, y: f64) -> f64 {
        let av = self.domain.0.as_f64();
        let bv = self.domain.1.as_f64();
        if av >= bv {
            return bv;
        }
        if y >= self.marginal_sup.as_f64() {
            return av;
        }
        if y < self.marginal_inf {
            return bv;
        }
        if let Some(inv) = &self.inverse_marginal_fn {
            return inv(y);
        }
        // bracket [lo, hi] in (a,b) with marginal(lo) > y >= marginal(hi)
        let seed = if self.anchor.is_finite() { self.anchor } else { 0.0 };
        let mut lo = seed;
        let mut step = 1.0 + seed.abs();
        let mut guard = 0;
        while (self.marginal_fn)(lo) <= y && guard < 200 {
            lo = if av.is_finite() {
                0.5 * (lo + av)
            } else {
                lo - step
            };
            step *= 2.0;
            guard += 1;
        }
        let mut hi = seed;
        step = 1.0 + seed.abs();
        guard = 0;
        while (self.marginal_fn)(hi) > y && guard < 200 {
            hi = if bv.is_finite() {
                0.5 * (hi + bv)
            } else {
                hi + step
            };
            step *= 2.0;
            guard += 1;
        }
        for _ in 0..200 {
            if (hi - lo).abs() <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if (self.marginal_fn)(mid) <= y {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Marginal levels where the pseudo-inverse is discontinuous or flat.
    pub fn jump_levels(&self) -> &[f64] {
        &self.jump_levels
    }
}

/// A utility on all of ℝ: −∞ below a, a concave core on (a, b), constant
/// above b.
#[derive(Debug, Clone)]
pub struct GeneralizedUtility {
    core: UtilityCurve,
}

impl GeneralizedUtility {
    pub fn core(&self) -> &UtilityCurve {
        &self.core
    }

    pub fn domain(&self) -> (ExtReal, ExtReal) {
        self.core.domain
    }

    /// Ũ(x) over the extended reals.
    pub fn value(&self, x: f64) -> Result<ExtReal, UtilityError> {
        let v = self.core.value(x)?;
        Ok(ExtReal::from_f64(v))
    }

    /// Ũ'(x): +∞ below a, 0 above b, left-derivative inside.
    pub fn marginal(&self, x: f64) -> ExtReal {
        ExtReal::from_f64(self.core.marginal(x))
    }

    pub fn pseudo_inverse(&self, y: f64) -> f64 {
        self.core.pseudo_inverse(y)
    }
}

/// Default anchor: the median of the target, which always has F(c) > 0 and
/// keeps quadrature away from the support edges.
pub fn default_anchor(target: &Distribution) -> Result<f64, UtilityError> {
    Ok(target.quantile(0.5)?)
}

fn build_curve(
    target: &Distribution,
    kernel: &PricingKernel,
    anchor: f64,
    tol: &Tolerance,
) -> Result<UtilityCurve, UtilityError> {
    if target.cdf(anchor) <= 0.0 || anchor.is_nan() {
        return Err(UtilityError::InvalidAnchor { anchor });
    }
    // the inferred curve only rationalizes targets with a finite price
    let _ = efficiency::distributional_price(target, kernel, tol)?;

    let (a, b) = target.support();
    let av = a.as_f64();
    let bv = b.as_f64();

    let f = target.clone();
    let klaw = kernel.law().clone();
    let marginal = move |y: f64| -> f64 {
        let p = f.cdf(y);
        if p <= 0.0 {
            return f64::INFINITY;
        }
        let s = f.sf(y);
        if s <= 0.0 {
            return 0.0;
        }
        // U'(y) = F_xi^{-1}(1 - F(y)), evaluated through whichever of the
        // cdf/survival pair is small so both tails keep precision
        if p < 0.5 {
            klaw.quantile_complement(p).unwrap()
        } else {
            klaw.quantile(s.min(1.0 - 1e-16)).unwrap()
        }
    };
    let marginal_fn: RealFn = Arc::new(marginal);

    // limits at the domain edges
    let marginal_sup = if !a.is_finite() {
        ExtReal::PosInf
    } else {
        let s = target.sf(av);
        if s >= 1.0 {
            ExtReal::PosInf
        } else if s <= 0.0 {
            // degenerate: no mass strictly above a
            ExtReal::Finite(0.0)
        } else {
            ExtReal::Finite(kernel.law().quantile(s.min(1.0 - 1e-16))?)
        }
    };
    let mass_at_b = if b.is_finite() {
        target
            .atoms()
            .iter()
            .find(|(at, _)| *at == bv)
            .map(|(_, m)| *m)
            .unwrap_or(0.0)
    } else {
        0.0
    };
    let marginal_inf = if mass_at_b >= 1.0 {
        f64::INFINITY
    } else if mass_at_b > 0.0 {
        kernel.law().quantile(mass_at_b)?
    } else {
        0.0
    };

    // kinks: target atoms and interior flat edges sit exactly where the
    // marginal jumps
    let mut breaks: Vec<f64> = target
        .atoms()
        .iter()
        .map(|(at, _)| *at)
        .filter(|&x| x > av && x <= bv)
        .collect();
    if b.is_finite() && !breaks.contains(&bv) {
        breaks.push(bv);
    }
    breaks.push(anchor);
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();

    // cache cumulative values at all kinks (pure evaluation afterwards)
    let anchor_idx = breaks.iter().position(|&x| x == anchor).unwrap();
    let mut nodes = vec![(anchor, 0.0); breaks.len()];
    nodes[anchor_idx] = (anchor, 0.0);
    for i in (anchor_idx + 1)..breaks.len() {
        let inc =
            numerics::integrate_finite(|y| marginal_fn(y), breaks[i - 1], breaks[i], tol)?;
        nodes[i] = (breaks[i], nodes[i - 1].1 + inc);
    }
    for i in (0..anchor_idx).rev() {
        let inc = numerics::integrate_finite(|y| marginal_fn(y), breaks[i], breaks[i + 1], tol)?;
        nodes[i] = (breaks[i], nodes[i + 1].1 - inc);
    }

    // closed-form pseudo-inverse: [U']^{-1}(y) = F^{-1}(1 - F_xi(y))
    let f2 = target.clone();
    let klaw2 = kernel.law().clone();
    let inverse: RealFn = Arc::new(move |y: f64| efficiency::efficient_transform(&f2, &klaw2, y));

    // pricing hints: levels where the payoff [U']^{-1}(lambda xi) jumps
    let mut jump_levels = Vec::new();
    if let ExtReal::Finite(v) = marginal_sup {
        jump_levels.push(v);
    }
    if marginal_inf > 0.0 {
        jump_levels.push(marginal_inf);
    }
    for (at, mass) in target.atoms() {
        if at <= av || at > bv {
            continue;
        }
        let s = target.sf(at);
        for q in [s, s + mass] {
            if q > 0.0 && q < 1.0 {
                jump_levels.push(kernel.law().quantile(q)?);
            }
        }
    }
    jump_levels.sort_by(|x, y| x.partial_cmp(y).unwrap());
    jump_levels.dedup();

    Ok(UtilityCurve {
        domain: (a, b),
        anchor,
        marginal_fn,
        value_fn: None,
        inverse_marginal_fn: Some(inverse),
        nodes,
        marginal_sup,
        marginal_inf,
        jump_levels,
        tol: *tol,
    })
}

/// Infer the standard utility rationalizing a continuous strictly increasing
/// target: U(x) = ∫_c^x F_ξ⁻¹(1 − F(y)) dy, a member of the classical class
/// (smooth, strictly concave, Inada-style limits at the edges).
pub fn infer_utility(
    target: &Distribution,
    kernel: &PricingKernel,
    anchor: f64,
    tol: &Tolerance,
) -> Result<UtilityCurve, UtilityError> {
    if !target.is_continuous_strictly_increasing() {
        return Err(UtilityError::NonContinuousTarget);
    }
    build_curve(target, kernel, anchor, tol)
}

/// Infer the generalized utility for an arbitrary target (atoms and flats
/// allowed): same integral with the conventions F_ξ⁻¹(1) = +∞ (−∞ below the
/// support) and F_ξ⁻¹(0) = 0 (flat above it).
pub fn infer_generalized_utility(
    target: &Distribution,
    kernel: &PricingKernel,
    anchor: f64,
    tol: &Tolerance,
) -> Result<GeneralizedUtility, UtilityError> {
    Ok(GeneralizedUtility {
        core: build_curve(target, kernel, anchor, tol)?,
    })
}

/// Result of the budget-matching inversion.
#[derive(Debug, Clone)]
pub struct OptimalPayoff {
    pub payoff: Payoff,
    pub lambda: f64,
}

/// Optimal payoff ξ ↦ [U']⁻¹(λ*ξ) with λ* > 0 chosen so the cost matches
/// the budget. The budget must lie strictly inside (E[ξ]·a, E[ξ]·b).
pub fn optimal_payoff(
    curve: &UtilityCurve,
    kernel: &PricingKernel,
    budget: f64,
    tol: &Tolerance,
) -> Result<OptimalPayoff, UtilityError> {
    let ev = kernel.expected_value();
    let (a, b) = curve.domain;
    let lo_cost = a.scale(ev);
    let hi_cost = b.scale(ev);
    if !(budget > lo_cost.as_f64() && budget < hi_cost.as_f64()) {
        return Err(UtilityError::BudgetOutOfRange {
            budget,
            lo: lo_cost.as_f64(),
            hi: hi_cost.as_f64(),
        });
    }

    let budget_tol = tol.target(budget.abs().max(1.0));
    let cost_at = |lambda: f64| -> Result<f64, UtilityError> {
        let p = payoff_for_lambda(curve, kernel, lambda);
        Ok(efficiency::cost(&p, kernel, tol)?)
    };

    // the cost map is non-increasing in lambda; expand a geometric bracket
    // from lambda = 1
    let g1 = cost_at(1.0)? - budget;
    let lambda_star = if g1.abs() <= budget_tol {
        1.0
    } else {
        let (mut lo, mut hi);
        if g1 > 0.0 {
            // too expensive: raise lambda
            lo = 1.0;
            hi = 4.0;
            while cost_at(hi)? - budget > 0.0 {
                lo = hi;
                hi *= 4.0;
                if hi > 1e12 {
                    return Err(UtilityError::NoBracket);
                }
            }
        } else {
            hi = 1.0;
            lo = 0.25;
            while cost_at(lo)? - budget < 0.0 {
                hi = lo;
                lo *= 0.25;
                if lo < 1e-12 {
                    return Err(UtilityError::NoBracket);
                }
            }
        }
        // solve in log-lambda for conditioning
        let root_tol = Tolerance {
            abs_tol: 0.5 * budget_tol,
            rel_tol: 1e-13,
            max_iter: tol.max_iter,
        };
        let s = numerics::find_root(
            |s: f64| match cost_at(s.exp()) {
                Ok(c) => c - budget,
                Err(_) => f64::NAN,
            },
            lo.ln(),
            hi.ln(),
            &root_tol,
        )
        .map_err(|e| match e {
            NumericsError::NoBracket { .. } => UtilityError::NoBracket,
            other => other.into(),
        })?;
        s.exp()
    };

    let payoff = payoff_for_lambda(curve, kernel, lambda_star);
    Ok(OptimalPayoff {
        payoff,
        lambda: lambda_star,
    })
}

/// Budget-matching for a generalized utility (same pseudo-inverse logic).
pub fn optimal_payoff_generalized(
    u: &GeneralizedUtility,
    kernel: &PricingKernel,
    budget: f64,
    tol: &Tolerance,
) -> Result<OptimalPayoff, UtilityError> {
    optimal_payoff(&u.core, kernel, budget, tol)
}

fn payoff_for_lambda(curve: &UtilityCurve, kernel: &PricingKernel, lambda: f64) -> Payoff {
    let c = curve.clone();
    let mut u_breaks = Vec::new();
    for &level in curve.jump_levels() {
        let xi = level / lambda;
        let u = kernel.law().cdf(xi);
        if u > 0.0 && u < 1.0 {
            u_breaks.push(u);
        }
    }
    u_breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    u_breaks.dedup();
    Payoff::from_parts(
        Arc::new(move |xi: f64| c.pseudo_inverse(lambda * xi)),
        None,
        Monotonicity::NonIncreasing,
        u_breaks,
    )
}

/// Closed-form utility families used for fitting and for the inverse map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParametricFamily {
    /// Power utility x^{1−γ}/(1−γ) with relative risk aversion γ ≠ 1.
    Crra { gamma: f64 },
    /// ln x, the γ = 1 member of the power family.
    LogUtility,
    /// Exponential utility −e^{−γx}, constant absolute risk aversion γ.
    Cara { gamma: f64 },
    /// Hyperbolic absolute risk aversion ((1−γ)/γ)(a x/(1−γ) + b)^γ.
    Hara { a: f64, b: f64, gamma: f64 },
    /// Linear with slope c on [0, cap], flat above; −∞ below 0.
    YaariPiecewise { c: f64, cap: f64 },
    /// Power marginal coef·x^{−exponent} above a guarantee level; −∞ below.
    GuaranteeCrra { guarantee: f64, exponent: f64, coef: f64 },
}

impl ParametricFamily {
    pub fn domain(&self) -> (ExtReal, ExtReal) {
        match *self {
            ParametricFamily::Crra { .. } | ParametricFamily::LogUtility => {
                (ExtReal::Finite(0.0), ExtReal::PosInf)
            }
            ParametricFamily::Cara { .. } => (ExtReal::NegInf, ExtReal::PosInf),
            ParametricFamily::Hara { a, b, gamma } => {
                let edge = -b * (1.0 - gamma) / a;
                if gamma < 1.0 {
                    (ExtReal::Finite(edge), ExtReal::PosInf)
                } else {
                    (ExtReal::NegInf, ExtReal::Finite(edge))
                }
            }
            ParametricFamily::YaariPiecewise { cap, .. } => {
                (ExtReal::Finite(0.0), ExtReal::Finite(cap))
            }
            ParametricFamily::GuaranteeCrra { guarantee, .. } => {
                (ExtReal::Finite(guarantee), ExtReal::PosInf)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ParametricFamily::Crra { gamma } => x.powf(1.0 - gamma) / (1.0 - gamma),
            ParametricFamily::LogUtility => x.ln(),
            ParametricFamily::Cara { gamma } => -(-gamma * x).exp(),
            ParametricFamily::Hara { a, b, gamma } => {
                (1.0 - gamma) / gamma * (a * x / (1.0 - gamma) + b).powf(gamma)
            }
            ParametricFamily::YaariPiecewise { c, cap } => c * x.clamp(0.0, cap),
            ParametricFamily::GuaranteeCrra { guarantee, exponent, coef } => {
                if exponent == 1.0 {
                    coef * (x / guarantee).ln()
                } else {
                    coef * (x.powf(1.0 - exponent) - guarantee.powf(1.0 - exponent))
                        / (1.0 - exponent)
                }
            }
        }
    }

    pub fn marginal(&self, x: f64) -> f64 {
        match *self {
            ParametricFamily::Crra { gamma } => x.powf(-gamma),
            ParametricFamily::LogUtility => 1.0 / x,
            ParametricFamily::Cara { gamma } => gamma * (-gamma * x).exp(),
            ParametricFamily::Hara { a, b, gamma } => {
                a * (a * x / (1.0 - gamma) + b).powf(gamma - 1.0)
            }
            ParametricFamily::YaariPiecewise { c, cap } => {
                if x <= cap {
                    c
                } else {
                    0.0
                }
            }
            ParametricFamily::GuaranteeCrra { exponent, coef, .. } => coef * x.powf(-exponent),
        }
    }

    fn inverse_marginal(&self) -> Option<RealFn> {
        match *self {
            ParametricFamily::Crra { gamma } => {
                Some(Arc::new(move |y: f64| y.powf(-1.0 / gamma)))
            }
            ParametricFamily::LogUtility => Some(Arc::new(|y: f64| 1.0 / y)),
            ParametricFamily::Cara { gamma } => {
                Some(Arc::new(move |y: f64| -(y / gamma).ln() / gamma))
            }
            ParametricFamily::Hara { a, b, gamma } => Some(Arc::new(move |y: f64| {
                ((y / a).powf(1.0 / (gamma - 1.0)) - b) * (1.0 - gamma) / a
            })),
            ParametricFamily::YaariPiecewise { .. } => None, // edge rules cover the two branches
            ParametricFamily::GuaranteeCrra { exponent, coef, .. } => {
                Some(Arc::new(move |y: f64| (y / coef).powf(-1.0 / exponent)))
            }
        }
    }

    fn default_anchor(&self) -> f64 {
        match *self {
            ParametricFamily::Crra { .. } | ParametricFamily::LogUtility => 1.0,
            ParametricFamily::Cara { .. } => 0.0,
            ParametricFamily::Hara { a, b, gamma } => -b * (1.0 - gamma) / a + (1.0 - gamma) / a,
            ParametricFamily::YaariPiecewise { cap, .. } => 0.5 * cap,
            ParametricFamily::GuaranteeCrra { guarantee, .. } => guarantee,
        }
    }

    /// Materialize the family as a curve (closed-form value, marginal and
    /// pseudo-inverse; no quadrature involved).
    pub fn to_curve(&self, tol: &Tolerance) -> UtilityCurve {
        let fam = *self;
        let (a, b) = self.domain();
        let (av, bv) = (a.as_f64(), b.as_f64());
        let marginal_fn: RealFn = Arc::new(move |x: f64| {
            if x < av {
                f64::INFINITY
            } else if x > bv {
                0.0
            } else {
                fam.marginal(x)
            }
        });
        let value_fn: RealFn = Arc::new(move |x: f64| fam.value(x));
        let marginal_sup = match *self {
            ParametricFamily::YaariPiecewise { c, .. } => ExtReal::Finite(c),
            ParametricFamily::GuaranteeCrra { guarantee, exponent, coef } => {
                ExtReal::Finite(coef * guarantee.powf(-exponent))
            }
            _ => ExtReal::PosInf,
        };
        let marginal_inf = match *self {
            ParametricFamily::YaariPiecewise { c, .. } => c,
            _ => 0.0,
        };
        let mut jump_levels = Vec::new();
        if let ExtReal::Finite(v) = marginal_sup {
            jump_levels.push(v);
        }
        if marginal_inf > 0.0 {
            jump_levels.push(marginal_inf);
        }
        jump_levels.dedup();
        let anchor = self.default_anchor();
        UtilityCurve {
            domain: (a, b),
            anchor,
            marginal_fn,
            value_fn: Some(value_fn),
            inverse_marginal_fn: self.inverse_marginal(),
            nodes: vec![(anchor, 0.0)],
            marginal_sup,
            marginal_inf,
            jump_levels,
            tol: *tol,
        }
    }
}

/// Least-squares affine fit of a family to a curve over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub alpha: f64,
    pub beta: f64,
    pub max_residual: f64,
}

/// Fit α·fam + β ≈ u on the grid by least squares and report the worst
/// absolute residual. Uniqueness up to affine maps makes this the natural
/// distance between inferred and textbook utilities.
pub fn affine_match(
    u: &UtilityCurve,
    fam: &ParametricFamily,
    grid: &Grid,
) -> Result<AffineFit, UtilityError> {
    let (ua, ub) = u.domain;
    let (fa, fb) = fam.domain();
    let lo = ua.as_f64().max(fa.as_f64());
    let hi = ub.as_f64().min(fb.as_f64());
    let xs = grid.points();
    if xs[0] <= lo || xs[xs.len() - 1] >= hi {
        return Err(UtilityError::DomainMismatch);
    }
    let n = xs.len() as f64;
    let mut uy = Vec::with_capacity(xs.len());
    let mut fy = Vec::with_capacity(xs.len());
    for &x in xs {
        uy.push(u.value(x)?);
        fy.push(fam.value(x));
    }
    let mean_u = uy.iter().sum::<f64>() / n;
    let mean_f = fy.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for i in 0..xs.len() {
        cov += (fy[i] - mean_f) * (uy[i] - mean_u);
        var += (fy[i] - mean_f) * (fy[i] - mean_f);
    }
    if var == 0.0 {
        return Err(UtilityError::DomainMismatch);
    }
    let alpha = cov / var;
    let beta = mean_u - alpha * mean_f;
    let max_residual = (0..xs.len())
        .map(|i| (uy[i] - (alpha * fy[i] + beta)).abs())
        .fold(0.0, f64::max);
    Ok(AffineFit {
        alpha,
        beta,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{bs_kernel, BsParams};

    fn market() -> PricingKernel {
        bs_kernel(&BsParams {
            mu: 0.08,
            sigma: 0.2,
            r: 0.03,
            horizon: 1.0,
            s0: 100.0,
        })
        .unwrap()
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn lognormal_target_infers_crra() {
        // relative risk aversion theta*sqrt(T)/Sigma = 0.25/0.2 = 1.25
        let k = market();
        let f = Distribution::lognormal(0.05, 0.2).unwrap();
        let c = default_anchor(&f).unwrap();
        let u = infer_utility(&f, &k, c, &tol()).unwrap();
        let fam = ParametricFamily::Crra { gamma: 1.25 };
        let lo = f.quantile(0.05).unwrap();
        let hi = f.quantile(0.95).unwrap();
        let grid = Grid::uniform(lo, hi, 101).unwrap();
        let fit = affine_match(&u, &fam, &grid).unwrap();
        assert!(fit.max_residual <= 1e-6, "residual {}", fit.max_residual);
        assert!(fit.alpha > 0.0);
    }

    #[test]
    fn normal_target_infers_cara() {
        let k = market();
        let f = Distribution::normal(1.0, 0.3).unwrap();
        let c = default_anchor(&f).unwrap();
        let u = infer_utility(&f, &k, c, &tol()).unwrap();
        // a = exp(M th sqrt(T)/Sigma - rT - th^2 T/2), utility
        // -(Sigma a / (th sqrt T)) exp(-x th sqrt T / Sigma)
        let fam = ParametricFamily::Cara { gamma: 0.25 / 0.3 };
        let lo = f.quantile(0.05).unwrap();
        let hi = f.quantile(0.95).unwrap();
        let grid = Grid::uniform(lo, hi, 101).unwrap();
        let fit = affine_match(&u, &fam, &grid).unwrap();
        assert!(fit.max_residual <= 1e-6, "residual {}", fit.max_residual);
        // and the alpha matches the closed-form coefficient: the inferred
        // marginal is a e^{-x th sqrt(T)/Sigma} with
        // a = exp(M th sqrt(T)/Sigma - rT - th^2 T/2), so alpha = a Sigma/(th sqrt T)
        let a_coef = (1.0 * 0.25_f64 / 0.3 - 0.03 - 0.03125).exp();
        let expect_alpha = 0.3 * a_coef / 0.25;
        assert!(
            (fit.alpha - expect_alpha).abs() <= 1e-6 * expect_alpha,
            "alpha {} vs {}",
            fit.alpha,
            expect_alpha
        );
    }

    #[test]
    fn exponential_target_matches_fine_quadrature_oracle() {
        // no closed form; check value() against a 10x finer quadrature
        let k = market();
        let f = Distribution::exponential(1.0).unwrap();
        let c = default_anchor(&f).unwrap();
        let u = infer_utility(&f, &k, c, &tol()).unwrap();
        let fine = Tolerance {
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            max_iter: 60,
        };
        for i in 1..=100 {
            let p = i as f64 / 101.0;
            let x = f.quantile(p).unwrap();
            let direct = u.value(x).unwrap();
            let oracle =
                numerics::integrate_finite(|y| u.marginal(y), c, x, &fine).unwrap();
            assert!(
                (direct - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
                "x={x}: {direct} vs {oracle}"
            );
        }
    }

    #[test]
    fn marginal_formula_holds_pointwise() {
        let k = market();
        let f = Distribution::lognormal(0.05, 0.2).unwrap();
        let u = infer_utility(&f, &k, default_anchor(&f).unwrap(), &tol()).unwrap();
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = f.quantile(p).unwrap();
            let expect = k.law().quantile(1.0 - f.cdf(x)).unwrap();
            assert!((u.marginal(x) - expect).abs() <= 1e-10 * expect.max(1.0));
        }
    }

    #[test]
    fn rejects_non_continuous_targets() {
        let k = market();
        let pm = Distribution::point_mass(5.0).unwrap();
        let r = infer_utility(&pm, &k, 5.0, &tol());
        assert!(matches!(r, Err(UtilityError::NonContinuousTarget)));
    }

    #[test]
    fn point_mass_generalized_utility() {
        let k = market();
        let pm = Distribution::point_mass(5.0).unwrap();
        let u = infer_generalized_utility(&pm, &k, 5.0, &tol()).unwrap();
        assert_eq!(u.value(4.0).unwrap(), ExtReal::NegInf);
        assert_eq!(u.value(5.0).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(u.value(7.0).unwrap(), ExtReal::Finite(0.0));
        // constant payoff from the degenerate pseudo-inverse
        for &y in &[0.1, 1.0, 10.0] {
            assert_eq!(u.pseudo_inverse(y), 5.0);
        }
    }

    #[test]
    fn anchor_shifts_curve_by_constant() {
        let k = market();
        let f = Distribution::lognormal(0.05, 0.2).unwrap();
        let c1 = f.quantile(0.4).unwrap();
        let c2 = f.quantile(0.7).unwrap();
        let u1 = infer_utility(&f, &k, c1, &tol()).unwrap();
        let u2 = infer_utility(&f, &k, c2, &tol()).unwrap();
        let x0 = f.quantile(0.5).unwrap();
        let shift = u1.value(x0).unwrap() - u2.value(x0).unwrap();
        for i in 1..20 {
            let x = f.quantile(i as f64 / 20.0).unwrap();
            let d = u1.value(x).unwrap() - u2.value(x).unwrap();
            assert!((d - shift).abs() <= 1e-8, "constant shift violated: {d} vs {shift}");
        }
    }

    #[test]
    fn optimal_payoff_at_price_recovers_efficient_payoff() {
        let k = market();
        let f = Distribution::lognormal(0.05, 0.2).unwrap();
        let u = infer_utility(&f, &k, default_anchor(&f).unwrap(), &tol()).unwrap();
        let budget = efficiency::distributional_price(&f, &k, &tol()).unwrap();
        let opt = optimal_payoff(&u, &k, budget, &tol()).unwrap();
        assert!((opt.lambda - 1.0).abs() <= 1e-6, "lambda = {}", opt.lambda);
        let eff = efficiency::efficient_payoff(&f, &k, &tol()).unwrap();
        for i in 1..100 {
            let xi = k.law().quantile(i as f64 / 100.0).unwrap();
            let a = opt.payoff.value_at(xi);
            let b = eff.value_at(xi);
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn cara_optimal_payoff_matches_closed_form_law() {
        // budget 1 in the standard market: law N(e^{rT} + (th/(g s))(mu-r)T, (th/g)^2 T)
        let k = market();
        let fam = ParametricFamily::Cara { gamma: 2.0 };
        let curve = fam.to_curve(&tol());
        let opt = optimal_payoff(&curve, &k, 1.0, &tol()).unwrap();
        let c = efficiency::cost(&opt.payoff, &k, &tol()).unwrap();
        assert!((c - 1.0).abs() <= 1e-8, "budget reproduction: {c}");
        let mean = (0.03_f64).exp() + 0.25 / (2.0 * 0.2) * 0.05;
        let sd = 0.25 / 2.0;
        let law = Distribution::normal(mean, sd).unwrap();
        let grid = Grid::uniform(
            law.quantile(0.001).unwrap(),
            law.quantile(0.999).unwrap(),
            201,
        )
        .unwrap();
        let ks = efficiency::pushforward_ks(&opt.payoff, &k, &law, &grid).unwrap();
        assert!(ks <= 1e-6, "ks = {ks}");

        // pointwise closed form: X* = X0 e^{rT} - (th/(g s))(r - s^2/2)T
        //                             + (th/(g s)) ln(S_T/S0)
        let map = *k.stock_map().unwrap();
        let coef = 0.25 / (2.0 * 0.2);
        for &p in &[0.1, 0.5, 0.9] {
            let xi = k.law().quantile(p).unwrap();
            let s_ratio = map.stock_of_kernel(xi) / 100.0;
            let expect = (0.03_f64).exp() - coef * (0.03 - 0.02) + coef * s_ratio.ln();
            let got = opt.payoff.value_at(xi);
            assert!(
                (got - expect).abs() <= 1e-8 * expect.abs().max(1.0),
                "p={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn hara_constant_matches_budget_integral() {
        // oracle: the printed closed-form constant C must reproduce the
        // budget through E[xi X*]
        let k = market();
        let (a, b, gamma) = (1.0, 0.5, 0.5);
        let fam = ParametricFamily::Hara { a, b, gamma };
        let curve = fam.to_curve(&tol());
        let budget = 1.0_f64;
        let opt = optimal_payoff(&curve, &k, budget, &tol()).unwrap();
        let (theta, sigma, r, t) = (0.25_f64, 0.2_f64, 0.03_f64, 1.0_f64);
        let kappa = theta / (sigma * (1.0 - gamma));
        let c_print = (budget * (r * t).exp() + b * (1.0 - gamma) / a)
            / ((kappa * (r - sigma * sigma / 2.0) * t
                + (theta / (1.0 - gamma)).powi(2) * t / 2.0)
                .exp());
        // payoff at a few kernel quantiles must match C (S/S0)^kappa - b(1-g)/a
        let map = *k.stock_map().unwrap();
        for &p in &[0.1, 0.5, 0.9] {
            let xi = k.law().quantile(p).unwrap();
            let s_ratio = map.stock_of_kernel(xi) / 100.0;
            let expect = c_print * s_ratio.powf(kappa) - b * (1.0 - gamma) / a;
            let got = opt.payoff.value_at(xi);
            assert!(
                (got - expect).abs() <= 1e-6 * expect.abs().max(1.0),
                "p={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn budget_window_is_enforced() {
        let k = market();
        // CRRA on (0, inf): any positive budget works, zero or negative does not
        let fam = ParametricFamily::Crra { gamma: 1.25 };
        let curve = fam.to_curve(&tol());
        assert!(optimal_payoff(&curve, &k, -1.0, &tol()).is_err());
        // Yaari-style cap bounds the window above by cap * e^{-rT}
        let cap = 2.0;
        let yfam = ParametricFamily::YaariPiecewise { c: 1.1, cap };
        let ycurve = yfam.to_curve(&tol());
        let too_big = cap * (-0.03_f64).exp() + 0.1;
        assert!(matches!(
            optimal_payoff(&ycurve, &k, too_big, &tol()),
            Err(UtilityError::BudgetOutOfRange { .. })
        ));
    }

    #[test]
    fn affine_match_is_exact_on_same_family() {
        let fam = ParametricFamily::Crra { gamma: 1.25 };
        let curve = fam.to_curve(&tol());
        let grid = Grid::uniform(0.5, 3.0, 64).unwrap();
        let fit = affine_match(&curve, &fam, &grid).unwrap();
        assert!(fit.max_residual <= 1e-10);
        assert!((fit.alpha - 1.0).abs() <= 1e-10);
        // the curve is anchored at U(1) = 0, so beta = -value(1)
        assert!((fit.beta + fam.value(1.0)).abs() <= 1e-10);
    }

    #[test]
    fn pseudo_inverse_bisection_agrees_with_closed_form() {
        // dual route: disable the closed inverse and compare against bisection
        let fam = ParametricFamily::Cara { gamma: 2.0 };
        let mut curve = fam.to_curve(&tol());
        let closed = curve.inverse_marginal_fn.take().unwrap();
        for &y in &[0.01, 0.5, 2.0, 10.0] {
            let by_bisection = curve.pseudo_inverse(y);
            let by_formula = closed(y);
            assert!(
                (by_bisection - by_formula).abs() <= 1e-9 * by_formula.abs().max(1.0),
                "y={y}: {by_bisection} vs {by_formula}"
            );
        }
    }
}
