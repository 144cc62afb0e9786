//! Pricing-kernel models. The general abstraction is any continuously
//! distributed positive state-price density; the Black-Scholes model is the
//! shipped closed form, where the kernel is a power of the stock:
//! ξ_T = α (S_T/S_0)^{-β} and ξ_T itself is lognormal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistError, Distribution, Kind, NamedLaw};
use crate::numerics::{self, ExtReal, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("degenerate kernel: theta = (mu - r)/sigma must be nonzero")]
    DegenerateKernel,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Black-Scholes market parameters (annualized).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "S0")]
    pub s0: f64,
}

impl BsParams {
    pub fn validate(&self) -> Result<(), MarketError> {
        let ok = |v: f64| v.is_finite();
        if !(self.sigma > 0.0 && ok(self.sigma)) {
            return Err(MarketError::InvalidParameter(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(self.horizon > 0.0 && ok(self.horizon)) {
            return Err(MarketError::InvalidParameter(format!(
                "T must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.s0 > 0.0 && ok(self.s0)) {
            return Err(MarketError::InvalidParameter(format!(
                "S0 must be > 0, got {}",
                self.s0
            )));
        }
        if !ok(self.mu) || !ok(self.r) {
            return Err(MarketError::InvalidParameter(
                "mu and r must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Instantaneous Sharpe ratio θ = (μ − r)/σ.
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }
}

/// Closed-form map between the stock price and the kernel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockKernelMap {
    pub alpha: f64,
    pub beta: f64,
    pub s0: f64,
}

impl StockKernelMap {
    /// ξ as a function of the terminal stock price.
    pub fn kernel_of_stock(&self, s: f64) -> f64 {
        self.alpha * (s / self.s0).powf(-self.beta)
    }

    /// Terminal stock price as a function of ξ (inverse map).
    pub fn stock_of_kernel(&self, xi: f64) -> f64 {
        self.s0 * (xi / self.alpha).powf(-1.0 / self.beta)
    }
}

/// A pricing kernel: the law of ξ_T, the law of H_T = −ln ξ_T, and (for the
/// Black-Scholes model) the stock map.
#[derive(Debug, Clone)]
pub struct PricingKernel {
    law: Distribution,
    h_law: Distribution,
    stock_map: Option<StockKernelMap>,
    /// E[ξ_T]; exact e^{−rT} for Black-Scholes, quadrature otherwise.
    expected_value: f64,
}

impl PricingKernel {
    /// Law of ξ_T.
    pub fn law(&self) -> &Distribution {
        &self.law
    }

    /// Law of H_T = −ln ξ_T.
    pub fn h_law(&self) -> &Distribution {
        &self.h_law
    }

    pub fn stock_map(&self) -> Option<&StockKernelMap> {
        self.stock_map.as_ref()
    }

    /// E[ξ_T], the price of one unit paid in every state.
    pub fn expected_value(&self) -> f64 {
        self.expected_value
    }
}

/// Build the Black-Scholes kernel: ξ_T ~ LN(−rT − θ²T/2, θ²T) and
/// H_T ~ N(rT + θ²T/2, θ²T).
pub fn bs_kernel(p: &BsParams) -> Result<PricingKernel, MarketError> {
    p.validate()?;
    let theta = p.theta();
    if theta == 0.0 {
        // ξ_T would be the constant e^{-rT}, which has no density
        return Err(MarketError::DegenerateKernel);
    }
    let t = p.horizon;
    let s = theta.abs() * t.sqrt();
    let m = -p.r * t - theta * theta * t / 2.0;
    let law = Distribution::lognormal(m, s)?;
    let h_law = Distribution::normal(-m, s)?;
    let alpha = ((theta / p.sigma) * (p.mu - p.sigma * p.sigma / 2.0) * t
        - (p.r + theta * theta / 2.0) * t)
        .exp();
    let beta = theta / p.sigma;
    Ok(PricingKernel {
        law,
        h_law,
        stock_map: Some(StockKernelMap {
            alpha,
            beta,
            s0: p.s0,
        }),
        expected_value: (-p.r * t).exp(),
    })
}

/// Wrap an arbitrary continuous positive law as a pricing kernel. E[ξ_T] is
/// established by quadrature and must be finite.
pub fn custom_kernel(law: Distribution) -> Result<PricingKernel, MarketError> {
    if law.kind() != Kind::Continuous {
        return Err(MarketError::InvalidParameter(
            "kernel law must be continuous".into(),
        ));
    }
    if law.support().0 < ExtReal::Finite(0.0) {
        return Err(MarketError::InvalidParameter(
            "kernel law must live on the positive half-line".into(),
        ));
    }
    let tol = Tolerance::default();
    let l = law.clone();
    let expected_value = numerics::integrate(
        move |u| l.quantile(u).unwrap_or(f64::NAN),
        ExtReal::Finite(0.0),
        ExtReal::Finite(1.0),
        &tol,
    )
    .map_err(|_| MarketError::InvalidParameter("kernel mean E[xi] does not converge".into()))?;
    let h_law = Distribution::neg_log(law.clone())?;
    Ok(PricingKernel {
        law,
        h_law,
        stock_map: None,
        expected_value,
    })
}

/// Kernel quantile with the extended-real conventions F_ξ⁻¹(0) = 0 and
/// F_ξ⁻¹(1) = +∞.
pub fn kernel_quantile(k: &PricingKernel, p: f64) -> Result<ExtReal, MarketError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(MarketError::InvalidParameter(format!(
            "quantile level must lie in [0,1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(ExtReal::Finite(0.0));
    }
    if p == 1.0 {
        return Ok(ExtReal::PosInf);
    }
    Ok(ExtReal::Finite(k.law.quantile(p)?))
}

/// Market specification accepted on the wire.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MarketSpec {
    BlackScholes(BsParams),
    CustomKernel { law: NamedLaw },
}

impl MarketSpec {
    pub fn build(&self) -> Result<PricingKernel, MarketError> {
        match self {
            MarketSpec::BlackScholes(p) => bs_kernel(p),
            MarketSpec::CustomKernel { law } => custom_kernel(crate::distributions::make(law)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Grid;

    fn params() -> BsParams {
        BsParams {
            mu: 0.08,
            sigma: 0.2,
            r: 0.03,
            horizon: 1.0,
            s0: 100.0,
        }
    }

    #[test]
    fn rejects_degenerate_kernel() {
        let mut p = params();
        p.mu = p.r;
        assert!(matches!(bs_kernel(&p), Err(MarketError::DegenerateKernel)));
    }

    #[test]
    fn stock_map_collapses_at_s0() {
        // at s = S0 the power term is 1 regardless of beta
        let k = bs_kernel(&params()).unwrap();
        let map = k.stock_map().unwrap();
        assert!((map.kernel_of_stock(100.0) - map.alpha).abs() < 1e-15);
        // round trip through the inverse
        for &s in &[40.0, 100.0, 250.0] {
            let xi = map.kernel_of_stock(s);
            assert!((map.stock_of_kernel(xi) - s).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn discount_consistency() {
        // E[xi] = e^{-rT}: lognormal mean e^{m + s^2/2} with m = -rT - th^2 T/2
        let p = params();
        let k = bs_kernel(&p).unwrap();
        assert!((k.expected_value() - (-0.03_f64).exp()).abs() < 1e-15);
        // cross-check by quadrature over the quantile space
        let law = k.law().clone();
        let v = numerics::integrate(
            move |u| law.quantile(u).unwrap(),
            ExtReal::Finite(0.0),
            ExtReal::Finite(1.0),
            &Tolerance::default(),
        )
        .unwrap();
        assert!((v - (-0.03_f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn h_law_mean_matches_arithmetic() {
        // theta = 0.25; mean of H = rT + th^2 T / 2 = 0.03 + 0.03125
        let k = bs_kernel(&params()).unwrap();
        let h = k.h_law();
        let median = h.quantile(0.5).unwrap();
        assert!((median - 0.06125).abs() < 1e-12);
    }

    #[test]
    fn h_law_consistent_with_kernel_law() {
        let k = bs_kernel(&params()).unwrap();
        let grid = Grid::uniform(-1.0, 1.0, 101).unwrap();
        let mut worst = 0.0_f64;
        for &y in grid.points() {
            let lhs = k.h_law().cdf(y);
            let rhs = 1.0 - k.law().cdf((-y).exp());
            worst = worst.max((lhs - rhs).abs());
        }
        assert!(worst <= 1e-10, "worst = {worst}");
    }

    #[test]
    fn kernel_quantile_conventions() {
        let k = bs_kernel(&params()).unwrap();
        assert_eq!(kernel_quantile(&k, 0.0).unwrap(), ExtReal::Finite(0.0));
        assert_eq!(kernel_quantile(&k, 1.0).unwrap(), ExtReal::PosInf);
        // lognormal median oracle: exp(-rT - th^2 T/2)
        let med = kernel_quantile(&k, 0.5).unwrap().finite().unwrap();
        assert!((med - (-0.03 - 0.03125_f64).exp()).abs() < 1e-12);
        assert!(kernel_quantile(&k, 1.5).is_err());
    }

    #[test]
    fn stock_martingale_property() {
        // E[xi_T S_T] = S0 by quadrature in kernel-quantile space
        let p = params();
        let k = bs_kernel(&p).unwrap();
        let law = k.law().clone();
        let map = *k.stock_map().unwrap();
        let v = numerics::integrate(
            move |u| {
                let xi = law.quantile(u).unwrap();
                xi * map.stock_of_kernel(xi)
            },
            ExtReal::Finite(0.0),
            ExtReal::Finite(1.0),
            &Tolerance::default(),
        )
        .unwrap();
        assert!((v - p.s0).abs() <= 1e-6 * p.s0, "got {v}");
    }

    #[test]
    fn random_market_discount_checks() {
        // 10^3 random parameter draws, quadrature within 1e-8 of e^{-rT}
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let tol = Tolerance::default();
        for _ in 0..1000 {
            // parameterize through the Sharpe ratio to keep the kernel
            // log-sd in a realistic band
            let sigma = rng.random_range(0.1..0.6);
            let r = rng.random_range(-0.02..0.08);
            let theta = rng.random_range(0.05..1.2) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let p = BsParams {
                mu: r + theta * sigma,
                sigma,
                r,
                horizon: rng.random_range(0.1..4.0),
                s0: rng.random_range(1.0..200.0),
            };
            let k = match bs_kernel(&p) {
                Ok(k) => k,
                Err(MarketError::DegenerateKernel) => continue,
                Err(e) => panic!("{e}"),
            };
            let law = k.law().clone();
            let v = numerics::integrate(
                move |u| law.quantile(u.clamp(1e-300, 1.0 - 1e-16)).unwrap(),
                ExtReal::Finite(0.0),
                ExtReal::Finite(1.0),
                &tol,
            )
            .unwrap();
            assert!(
                (v - (-p.r * p.horizon).exp()).abs() <= 1e-8,
                "params {p:?} gave {v}"
            );
        }
    }

    #[test]
    fn custom_kernel_from_named_law() {
        let spec: MarketSpec = serde_json::from_str(
            r#"{"model":"custom-kernel","law":{"family":"lognormal","params":{"M":-0.05,"Sigma":0.3}}}"#,
        )
        .unwrap();
        let k = spec.build().unwrap();
        // E[xi] = e^{M + S^2/2}
        assert!((k.expected_value() - (-0.05_f64 + 0.045).exp()).abs() < 1e-8);
        // h_law is the collapsed normal
        assert!((k.h_law().quantile(0.5).unwrap() - 0.05).abs() < 1e-12);

        let bad: MarketSpec = serde_json::from_str(
            r#"{"model":"custom-kernel","law":{"family":"normal","params":{"M":0.0,"Sigma":1.0}}}"#,
        )
        .unwrap();
        assert!(bad.build().is_err());
    }

    #[test]
    fn bs_market_spec_json() {
        let s = r#"{"model":"black-scholes","mu":0.08,"sigma":0.2,"r":0.03,"T":1.0,"S0":100.0}"#;
        let spec: MarketSpec = serde_json::from_str(s).unwrap();
        assert!(spec.build().is_ok());
        let back = serde_json::to_string(&spec).unwrap();
        assert!(back.contains("\"model\":\"black-scholes\""));
        assert!(back.contains("\"T\":1.0"));
    }
}
