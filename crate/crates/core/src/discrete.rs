//! Finite-state market with equiprobable states: anti-monotone
//! rearrangement, the two piecewise implied-utility constructions (the
//! classical interpolated one and the step-marginal one), randomized
//! pathwise-optimality verification, and the exact non-equiprobable
//! counterexample showing that FSD-optimality does not imply expected-utility
//! rationalizability when states carry unequal probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rational::Frac;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscreteError {
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("operation requires equiprobable states")]
    NotEquiprobable,
    #[error("requires strictly increasing consumptions and strictly decreasing state prices")]
    NonStrictOrder,
    #[error("allocation is infeasible: {0}")]
    InfeasibleAllocation(String),
}

/// N-state market: state i costs probs[i]·kernel[i] per unit of consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMarket {
    kernel: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteMarket {
    pub fn equiprobable(kernel: Vec<f64>) -> Result<Self, DiscreteError> {
        let n = kernel.len();
        if n == 0 {
            return Err(DiscreteError::InvalidMarket("empty market".into()));
        }
        let probs = vec![1.0 / n as f64; n];
        Self::with_probs(kernel, probs)
    }

    pub fn with_probs(kernel: Vec<f64>, probs: Vec<f64>) -> Result<Self, DiscreteError> {
        if kernel.len() != probs.len() || kernel.is_empty() {
            return Err(DiscreteError::InvalidMarket(
                "kernel and probability lengths differ or are empty".into(),
            ));
        }
        if kernel.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            return Err(DiscreteError::InvalidMarket(
                "state prices must be positive".into(),
            ));
        }
        if probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(DiscreteError::InvalidMarket(
                "probabilities must lie in (0, 1]".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DiscreteError::InvalidMarket(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(DiscreteMarket { kernel, probs })
    }

    pub fn n(&self) -> usize {
        self.kernel.len()
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_equiprobable(&self) -> bool {
        let p0 = self.probs[0];
        self.probs.iter().all(|&p| (p - p0).abs() <= 1e-12)
    }

    /// E[ξ X] = Σ pᵢ ξᵢ xᵢ.
    pub fn cost(&self, alloc: &Allocation) -> f64 {
        self.kernel
            .iter()
            .zip(&self.probs)
            .zip(&alloc.values)
            .map(|((&xi, &p), &x)| p * xi * x)
            .sum()
    }

    /// State indices ordered by descending state price (ties keep input
    /// order).
    fn order_by_kernel_desc(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&i, &j| self.kernel[j].partial_cmp(&self.kernel[i]).unwrap());
        idx
    }
}

/// State-contingent consumption aligned with the market's state order.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub values: Vec<f64>,
}

impl Allocation {
    pub fn new(values: Vec<f64>) -> Self {
        Allocation { values }
    }
}

/// Cheapest same-distribution reshuffle: order consumption inversely to the
/// state price. With all state prices equal every arrangement costs the
/// same and the input is returned unchanged.
pub fn rearrange_antimonotone(
    m: &DiscreteMarket,
    alloc: &Allocation,
) -> Result<Allocation, DiscreteError> {
    if !m.is_equiprobable() {
        return Err(DiscreteError::NotEquiprobable);
    }
    if alloc.values.len() != m.n() {
        return Err(DiscreteError::InfeasibleAllocation(
            "allocation length differs from the number of states".into(),
        ));
    }
    let x0 = m.kernel[0];
    if m.kernel.iter().all(|&x| x == x0) {
        return Ok(alloc.clone());
    }
    let order = m.order_by_kernel_desc();
    let mut sorted_values = alloc.values.clone();
    sorted_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = vec![0.0; m.n()];
    for (rank, &state) in order.iter().enumerate() {
        out[state] = sorted_values[rank];
    }
    Ok(Allocation::new(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteUtilityKind {
    /// Step marginal: slope ξ_{i+1} on [xᵢ*, xᵢ₊₁*), ξ₁ below x₁*, 0 above
    /// x_N*. The discrete instance of the quantile-transform construction.
    QuantileStep,
    /// Interpolated marginal through (xᵢ*, ξᵢ) with slope −1 extension below
    /// x₁* and constant ξ_N above x_N*; differentiable everywhere.
    PelegYaari,
}

/// Piecewise concave utility built from an anti-monotone optimum. Both kinds
/// satisfy U'(xᵢ*) = ξᵢ (left derivative for the step kind).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUtility {
    kind: DiscreteUtilityKind,
    /// x₁* < … < x_N*.
    points: Vec<f64>,
    /// ξ₁ > … > ξ_N, paired with `points`.
    levels: Vec<f64>,
}

impl PiecewiseUtility {
    pub fn kind(&self) -> DiscreteUtilityKind {
        self.kind
    }

    /// Breakpoints x₁* … x_N*.
    pub fn breakpoints(&self) -> &[f64] {
        &self.points
    }

    /// Marginal levels at the breakpoints (the state prices).
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Marginal v(y) (right-continuous for the step kind, continuous for
    /// the interpolated kind).
    pub fn marginal(&self, y: f64) -> f64 {
        let n = self.points.len();
        match self.kind {
            DiscreteUtilityKind::QuantileStep => {
                if y < self.points[0] {
                    return self.levels[0];
                }
                // slope xi_{i+1} on [x_i*, x_{i+1}*), 0 at and above x_N*
                let i = self.points.partition_point(|&x| x <= y);
                if i >= n {
                    0.0
                } else {
                    self.levels[i]
                }
            }
            DiscreteUtilityKind::PelegYaari => {
                if y < self.points[0] {
                    return self.levels[0] - y + self.points[0];
                }
                if y >= self.points[n - 1] {
                    return self.levels[n - 1];
                }
                let i = self.points.partition_point(|&x| x <= y) - 1;
                let (x0, x1) = (self.points[i], self.points[i + 1]);
                let (l0, l1) = (self.levels[i], self.levels[i + 1]);
                l0 + (y - x0) * (l1 - l0) / (x1 - x0)
            }
        }
    }

    /// Left derivative of U at x; equals ξᵢ exactly at each xᵢ*.
    pub fn left_derivative(&self, x: f64) -> f64 {
        if let Some(i) = self.points.iter().position(|&p| p == x) {
            return self.levels[i];
        }
        match self.kind {
            DiscreteUtilityKind::QuantileStep => self.marginal(x),
            DiscreteUtilityKind::PelegYaari => self.marginal(x),
        }
    }

    /// U(x), anchored at U(x₁*) = 0 for the step kind and U(0) = 0 for the
    /// interpolated kind (the anchors the constructions are stated with).
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            DiscreteUtilityKind::QuantileStep => self.value_step(x),
            DiscreteUtilityKind::PelegYaari => self.value_py(x) - self.value_py(0.0),
        }
    }

    fn value_step(&self, x: f64) -> f64 {
        let n = self.points.len();
        if x < self.points[0] {
            return -self.levels[0] * (self.points[0] - x);
        }
        let mut acc = 0.0;
        for i in 0..n - 1 {
            if x >= self.points[i + 1] {
                acc += self.levels[i + 1] * (self.points[i + 1] - self.points[i]);
            } else {
                acc += self.levels[i + 1] * (x - self.points[i]);
                return acc;
            }
        }
        // above the last breakpoint the marginal is zero
        acc
    }

    /// Antiderivative of the interpolated marginal with base point x₁*
    /// (piecewise quadratic, exact closed form per segment).
    fn value_py(&self, x: f64) -> f64 {
        let n = self.points.len();
        let x1 = self.points[0];
        if x < x1 {
            // v(y) = xi_1 - y + x1 below x1: integral from x to x1
            let w = x1 - x;
            return -(self.levels[0] * w + 0.5 * w * w);
        }
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let (l0, l1) = (self.levels[i], self.levels[i + 1]);
            if x >= b {
                acc += 0.5 * (l0 + l1) * (b - a);
            } else {
                let w = x - a;
                let slope = (l1 - l0) / (b - a);
                acc += l0 * w + 0.5 * slope * w * w;
                return acc;
            }
        }
        acc + self.levels[n - 1] * (x - self.points[n - 1])
    }
}

/// Sorted strict instance: states reordered by descending ξ must carry
/// strictly increasing consumption.
fn strict_sorted_instance(
    m: &DiscreteMarket,
    xstar: &Allocation,
) -> Result<(Vec<f64>, Vec<f64>), DiscreteError> {
    if !m.is_equiprobable() {
        return Err(DiscreteError::NotEquiprobable);
    }
    if xstar.values.len() != m.n() {
        return Err(DiscreteError::InfeasibleAllocation(
            "allocation length differs from the number of states".into(),
        ));
    }
    let order = m.order_by_kernel_desc();
    let levels: Vec<f64> = order.iter().map(|&i| m.kernel[i]).collect();
    let points: Vec<f64> = order.iter().map(|&i| xstar.values[i]).collect();
    for w in levels.windows(2) {
        if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Greater) {
            return Err(DiscreteError::NonStrictOrder);
        }
    }
    for w in points.windows(2) {
        if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
            return Err(DiscreteError::NonStrictOrder);
        }
    }
    Ok((points, levels))
}

/// Step-marginal construction: continuous piecewise-linear concave U with
/// slope ξ_{i+1} on [xᵢ*, xᵢ₊₁*), slope ξ₁ below and 0 above, U(x₁*) = 0.
pub fn quantile_step_utility(
    m: &DiscreteMarket,
    xstar: &Allocation,
) -> Result<PiecewiseUtility, DiscreteError> {
    let (points, levels) = strict_sorted_instance(m, xstar)?;
    Ok(PiecewiseUtility {
        kind: DiscreteUtilityKind::QuantileStep,
        points,
        levels,
    })
}

/// Interpolated construction: marginal affine between (xᵢ*, ξᵢ) nodes,
/// slope-(−1) extension below x₁*, constant ξ_N above x_N*; differentiable
/// with U'(xᵢ*) = ξᵢ.
pub fn peleg_yaari_utility(
    m: &DiscreteMarket,
    xstar: &Allocation,
) -> Result<PiecewiseUtility, DiscreteError> {
    let (points, levels) = strict_sorted_instance(m, xstar)?;
    Ok(PiecewiseUtility {
        kind: DiscreteUtilityKind::PelegYaari,
        points,
        levels,
    })
}

/// One violation found by `verify_optimality`.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimalityViolation {
    /// State i admits z with U(z) − ξᵢz > U(xᵢ*) − ξᵢxᵢ*.
    Pathwise { state: usize, z: f64, gap: f64 },
    /// A budget-matched allocation with higher expected utility.
    Randomized { trial: usize, gap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub trials: usize,
    pub expected_utility_at_optimum: f64,
    pub violations: Vec<OptimalityViolation>,
    /// Worst challenger advantage seen (positive would be a violation).
    pub max_gap: f64,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const PATHWISE_SLACK: f64 = 1e-10;

/// Check that `xstar` maximizes E[U(X)] subject to its own budget:
/// (a) the pathwise inequality per state over a dense consumption grid, and
/// (b) `trials` random budget-matched perturbations (Gaussian directions
/// projected onto the budget hyperplane).
pub fn verify_optimality(
    m: &DiscreteMarket,
    u: &PiecewiseUtility,
    xstar: &Allocation,
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport, DiscreteError> {
    if xstar.values.len() != m.n() {
        return Err(DiscreteError::InfeasibleAllocation(
            "allocation length differs from the number of states".into(),
        ));
    }
    let budget = m.cost(xstar);
    if !budget.is_finite() {
        return Err(DiscreteError::InfeasibleAllocation(
            "budget is not finite".into(),
        ));
    }
    let mut violations = Vec::new();
    let mut max_gap = f64::NEG_INFINITY;

    // (a) pathwise: U(x_i*) - xi_i x_i* >= U(z) - xi_i z on a dense grid
    let lo = u.breakpoints()[0] - 2.0 * span(u.breakpoints());
    let hi = u.breakpoints()[u.breakpoints().len() - 1] + 2.0 * span(u.breakpoints());
    let zn = 2001;
    for state in 0..m.n() {
        let xi = m.kernel[state];
        let xs = xstar.values[state];
        let lhs = u.value(xs) - xi * xs;
        for j in 0..zn {
            let z = lo + (hi - lo) * j as f64 / (zn - 1) as f64;
            let rhs = u.value(z) - xi * z;
            let gap = rhs - lhs;
            if gap > max_gap {
                max_gap = gap;
            }
            if gap > PATHWISE_SLACK {
                violations.push(OptimalityViolation::Pathwise { state, z, gap });
                break;
            }
        }
    }

    // (b) randomized budget-matched challengers
    let weights: Vec<f64> = m
        .kernel
        .iter()
        .zip(&m.probs)
        .map(|(&xi, &p)| p * xi)
        .collect();
    let w_norm2: f64 = weights.iter().map(|w| w * w).sum();
    let eu_star: f64 = m
        .probs
        .iter()
        .zip(&xstar.values)
        .map(|(&p, &x)| p * u.value(x))
        .sum();
    let scale = span(u.breakpoints()).max(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        // Gaussian direction projected onto the budget hyperplane
        let mut d: Vec<f64> = (0..m.n())
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let dot: f64 = d.iter().zip(&weights).map(|(a, b)| a * b).sum();
        for (di, wi) in d.iter_mut().zip(&weights) {
            *di -= dot / w_norm2 * wi;
        }
        let step = rng.random_range(0.01..1.0) * scale;
        let x: Vec<f64> = xstar
            .values
            .iter()
            .zip(&d)
            .map(|(&xs, &di)| xs + step * di)
            .collect();
        let eu: f64 = m
            .probs
            .iter()
            .zip(&x)
            .map(|(&p, &xv)| p * u.value(xv))
            .sum();
        let gap = eu - eu_star;
        if gap > max_gap {
            max_gap = gap;
        }
        if gap > PATHWISE_SLACK {
            violations.push(OptimalityViolation::Randomized { trial, gap });
        }
    }
    Ok(OptimalityReport {
        trials,
        expected_utility_at_optimum: eu_star,
        violations,
        max_gap,
    })
}

fn span(points: &[f64]) -> f64 {
    (points[points.len() - 1] - points[0]).max(1.0)
}

/// Exact record of the two-state non-equiprobable counterexample: an
/// FSD-optimal consumption that no concave non-decreasing utility
/// rationalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub probs: [Frac; 2],
    pub kernel: [Frac; 2],
    pub xstar: [Frac; 2],
    pub challenger: [Frac; 2],
    pub cost_xstar: Frac,
    pub cost_challenger: Frac,
    /// E[U(X*)] under the normalization U(0) = 0, U(4/3) = 1.
    pub eu_xstar: Frac,
    /// Concavity forces U(8/9) ≥ this bound.
    pub concavity_bound: Frac,
    /// Hence E[U(Y)] ≥ this value for every admissible U.
    pub eu_challenger_lower: Frac,
    /// Whether the FSD-optimal choice is expected-utility rationalizable.
    pub rationalizable: bool,
}

/// Build and verify the fixture: P = (1/3, 2/3), ξ = (3/4, 9/8),
/// X* = (0, 4/3), Y = (4/3, 8/9). All arithmetic exact.
pub fn counterexample_nonequiprobable() -> CounterexampleReport {
    let p = [Frac::new(1, 3), Frac::new(2, 3)];
    let xi = [Frac::new(3, 4), Frac::new(9, 8)];
    let xstar = [Frac::zero(), Frac::new(4, 3)];
    let y = [Frac::new(4, 3), Frac::new(8, 9)];

    let cost = |a: &[Frac; 2]| p[0] * xi[0] * a[0] + p[1] * xi[1] * a[1];
    let cost_xstar = cost(&xstar);
    let cost_challenger = cost(&y);
    assert_eq!(cost_xstar, Frac::int(1));
    assert_eq!(cost_challenger, Frac::int(1));

    // normalization U(0) = 0, U(4/3) = 1
    let eu_xstar = p[0] * Frac::zero() + p[1] * Frac::int(1);
    assert_eq!(eu_xstar, Frac::new(2, 3));

    // concavity through (0,0) and (4/3,1): U(8/9) >= (8/9)/(4/3) = 2/3
    let concavity_bound = Frac::new(8, 9) / Frac::new(4, 3);
    assert_eq!(concavity_bound, Frac::new(2, 3));

    let eu_challenger_lower = p[0] * Frac::int(1) + p[1] * concavity_bound;
    assert_eq!(eu_challenger_lower, Frac::new(7, 9));

    CounterexampleReport {
        probs: p,
        kernel: xi,
        xstar,
        challenger: y,
        cost_xstar,
        cost_challenger,
        eu_xstar,
        concavity_bound,
        eu_challenger_lower,
        rationalizable: eu_challenger_lower <= eu_xstar,
    }
}
