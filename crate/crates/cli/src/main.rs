//! Command-line front door: parse market and target specifications, dispatch
//! to the engines, and emit plot-ready CSV curves plus JSON reports.

mod formats;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use formats::{read_csv_columns, write_csv, Report};
use utilityforge::distributions::Distribution;
use utilityforge::efficiency::{self, Payoff};
use utilityforge::market::{MarketSpec, PricingKernel};
use utilityforge::numerics::{Grid, Tolerance};
use utilityforge::risk_aversion::{self, DaraCriterion, DaraVerdict};
use utilityforge::utility::{self, ParametricFamily};
use utilityforge::{discrete, NamedLaw};

#[derive(Debug)]
pub struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: "ConfigError",
            message: message.into(),
        }
    }

    fn engine(message: impl Into<String>) -> Self {
        CliError {
            kind: "EngineError",
            message: message.into(),
        }
    }
}

macro_rules! engine_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::engine(e.to_string())
            }
        }
    )*};
}
engine_from!(
    utilityforge::DistError,
    utilityforge::MarketError,
    utilityforge::EfficiencyError,
    utilityforge::UtilityError,
    utilityforge::RiskError,
    utilityforge::NumericsError,
    discrete::DiscreteError
);

#[derive(Parser)]
#[command(
    name = "utilityforge",
    version,
    about = "Cost-efficient payoffs, implied utilities and risk aversion for pricing-kernel markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct MarketArg {
    /// Market specification JSON ({"model":"black-scholes",...} or
    /// {"model":"custom-kernel","law":{...}})
    #[arg(long)]
    market: PathBuf,
}

#[derive(Args, Debug)]
struct TolArgs {
    /// Absolute tolerance override (default 1e-10, or UTILITYFORGE_TOL)
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Relative tolerance override (default 1e-8, or UTILITYFORGE_TOL)
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Maximum refinement depth
    #[arg(long)]
    max_iter: Option<usize>,
}

impl TolArgs {
    fn build(&self) -> Result<Tolerance, CliError> {
        let mut t = Tolerance::default();
        if let Ok(env) = std::env::var("UTILITYFORGE_TOL") {
            let v: f64 = env
                .parse()
                .map_err(|_| CliError::config(format!("UTILITYFORGE_TOL={env} is not a number")))?;
            t.abs_tol = v;
            t.rel_tol = v;
        }
        if let Some(a) = self.abs_tol {
            t.abs_tol = a;
        }
        if let Some(r) = self.rel_tol {
            t.rel_tol = r;
        }
        if let Some(m) = self.max_iter {
            t.max_iter = m;
        }
        Tolerance::new(t.abs_tol, t.rel_tol, t.max_iter).map_err(|e| CliError::config(e.to_string()))
    }
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Target family: normal | lognormal | exponential | pareto | pointmass
    /// | two-point | empirical
    #[arg(long)]
    target: Option<String>,
    /// Location parameter M (normal, lognormal)
    #[arg(long = "M")]
    m_loc: Option<f64>,
    /// Scale parameter Sigma (normal, lognormal)
    #[arg(long = "Sigma")]
    sigma_param: Option<f64>,
    /// Rate lambda (exponential)
    #[arg(long)]
    lambda: Option<f64>,
    /// Scale m (pareto)
    #[arg(long)]
    m: Option<f64>,
    /// Shape alpha (pareto)
    #[arg(long)]
    alpha: Option<f64>,
    /// Location k (pointmass)
    #[arg(long)]
    k: Option<f64>,
    /// Lower outcome (two-point)
    #[arg(long)]
    x1: Option<f64>,
    /// Upper outcome (two-point)
    #[arg(long)]
    x2: Option<f64>,
    /// Probability of the lower outcome (two-point)
    #[arg(long)]
    p1: Option<f64>,
    /// CSV with columns x,F (empirical target)
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl TargetArgs {
    fn describe(&self) -> serde_json::Value {
        json!({
            "family": self.target,
            "M": self.m_loc, "Sigma": self.sigma_param, "lambda": self.lambda,
            "m": self.m, "alpha": self.alpha, "k": self.k,
            "x1": self.x1, "x2": self.x2, "p1": self.p1,
            "csv": self.csv.as_ref().map(|p| p.display().to_string()),
        })
    }

    fn build(&self) -> Result<Distribution, CliError> {
        let fam = self
            .target
            .as_deref()
            .ok_or_else(|| CliError::config("--target is required for this command"))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::config(format!("--{name} is required for target {fam}")))
        };
        let law = match fam {
            "normal" => NamedLaw::Normal {
                m: need(self.m_loc, "M")?,
                sigma: need(self.sigma_param, "Sigma")?,
            },
            "lognormal" => NamedLaw::Lognormal {
                m: need(self.m_loc, "M")?,
                sigma: need(self.sigma_param, "Sigma")?,
            },
            "exponential" => NamedLaw::Exponential {
                lambda: need(self.lambda, "lambda")?,
            },
            "pareto" => NamedLaw::Pareto {
                m: need(self.m, "m")?,
                alpha: need(self.alpha, "alpha")?,
            },
            "pointmass" => NamedLaw::PointMass {
                k: need(self.k, "k")?,
            },
            "two-point" => NamedLaw::TwoPoint {
                x1: need(self.x1, "x1")?,
                x2: need(self.x2, "x2")?,
                p1: need(self.p1, "p1")?,
            },
            "empirical" => {
                let path = self
                    .csv
                    .as_ref()
                    .ok_or_else(|| CliError::config("--csv is required for target empirical"))?;
                let cols = read_csv_columns(path, 2)?;
                return Distribution::empirical_grid(cols[0].clone(), cols[1].clone())
                    .map_err(|e| CliError::config(e.to_string()));
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown family `{other}`; valid families: normal, lognormal, exponential, pareto, pointmass, two-point, empirical"
                )))
            }
        };
        utilityforge::make(&law).map_err(|e| CliError::config(e.to_string()))
    }
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Number of grid points
    #[arg(long, default_value_t = 201)]
    grid_size: usize,
    /// Lower quantile of the evaluation grid
    #[arg(long, default_value_t = 0.005)]
    q_lo: f64,
    /// Upper quantile of the evaluation grid
    #[arg(long, default_value_t = 0.995)]
    q_hi: f64,
}

impl GridArgs {
    fn validate(&self) -> Result<(), CliError> {
        if self.grid_size < 2 {
            return Err(CliError::config("--grid-size must be at least 2"));
        }
        if !(self.q_lo > 0.0 && self.q_lo < self.q_hi && self.q_hi < 1.0) {
            return Err(CliError::config(
                "quantile range must satisfy 0 < q_lo < q_hi < 1",
            ));
        }
        Ok(())
    }

    fn quantiles(&self) -> Vec<f64> {
        (0..self.grid_size)
            .map(|i| {
                self.q_lo + (self.q_hi - self.q_lo) * i as f64 / (self.grid_size - 1) as f64
            })
            .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Infer the standard utility rationalizing a continuous target
    InferUtility {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Anchor c with F(c) > 0 (default: the target median)
        #[arg(long)]
        anchor: Option<f64>,
        /// Fit a parametric family and report the affine residual
        /// (crra:g | log | cara:g | hara:a,b,g)
        #[arg(long)]
        fit: Option<String>,
        /// Curve CSV output path (columns x,value,marginal)
        #[arg(long, default_value = "curve.csv")]
        output: PathBuf,
    },
    /// Infer the generalized utility for an arbitrary target
    InferGeneralized {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long)]
        anchor: Option<f64>,
        #[arg(long, default_value = "curve.csv")]
        output: PathBuf,
    },
    /// Price a payoff: E[xi X]
    Price {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        tol: TolArgs,
        /// Payoff: constant:V | table:file.csv (xi,value rows) | stock
        #[arg(long)]
        payoff: String,
    },
    /// Construct the cheapest payoff attaining a target distribution
    EfficientPayoff {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Payoff CSV output path (columns u,xi,payoff)
        #[arg(long, default_value = "payoff.csv")]
        output: PathBuf,
    },
    /// Audit a payoff for cost-efficiency / rationalizability
    Audit {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long)]
        payoff: String,
        #[command(flatten)]
        target: TargetArgs,
    },
    /// Optimal payoff for a parametric utility under a budget
    OptimalPayoff {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Utility: crra:g | log | cara:g | hara:a,b,g | yaari:c,cap |
        /// guarantee-crra:G,exponent,coef
        #[arg(long)]
        utility: String,
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value = "payoff.csv")]
        output: PathBuf,
    },
    /// Arrow-Pratt risk-aversion profile of a target in a market
    RiskAversion {
        #[command(flatten)]
        market: MarketArg,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Profile CSV output path (columns x,p,ara,rra)
        #[arg(long, default_value = "profile.csv")]
        output: PathBuf,
    },
    /// Test a target for decreasing absolute risk aversion
    DaraTest {
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        tol: TolArgs,
        /// Criterion: bs | general | hazard
        #[arg(long, default_value = "bs")]
        criterion: String,
        /// Market JSON (required for the general criterion)
        #[arg(long)]
        market: Option<PathBuf>,
    },
    /// Build and verify a discrete-market implied utility
    RationalizeDiscrete {
        /// Market JSON: {"xi":[...], "xstar":[...], "probs":[...]?}
        #[arg(long)]
        input: PathBuf,
        /// Construction: quantile-step | peleg-yaari
        #[arg(long, default_value = "quantile-step")]
        kind: String,
        /// Random budget-matched challengers
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// RNG seed for the randomized checks
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Utility CSV output path (columns breakpoint,slope)
        #[arg(long, default_value = "discrete_utility.csv")]
        output: PathBuf,
    },
    /// Validate a market/law/discrete-input JSON file without computing
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_market(path: &Path) -> Result<(MarketSpec, PricingKernel), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {path:?}: {e}")))?;
    let spec: MarketSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{path:?}: {e}")))?;
    let kernel = spec.build().map_err(|e| CliError::config(e.to_string()))?;
    Ok((spec, kernel))
}

fn parse_payoff(spec: &str, kernel: &PricingKernel) -> Result<Payoff, CliError> {
    if let Some(v) = spec.strip_prefix("constant:") {
        let v: f64 = v
            .parse()
            .map_err(|_| CliError::config(format!("bad constant payoff `{spec}`")))?;
        return Ok(Payoff::constant(v));
    }
    if let Some(path) = spec.strip_prefix("table:") {
        let cols = read_csv_columns(Path::new(path), 2)?;
        let points: Vec<(f64, f64)> = cols[0].iter().copied().zip(cols[1].iter().copied()).collect();
        return efficiency::Payoff::from_table(points).map_err(|e| CliError::config(e.to_string()));
    }
    if spec == "stock" {
        let map = *kernel.stock_map().ok_or_else(|| {
            CliError::config("payoff `stock` needs a black-scholes market")
        })?;
        return Ok(Payoff::from_fn(move |xi| map.stock_of_kernel(xi)));
    }
    Err(CliError::config(format!(
        "unknown payoff `{spec}`; use constant:V, table:file.csv or stock"
    )))
}

fn parse_utility(spec: &str) -> Result<ParametricFamily, CliError> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n, r),
        None => (spec, ""),
    };
    let nums: Vec<f64> = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::config(format!("bad utility parameters in `{spec}`")))?
    };
    let want = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(CliError::config(format!(
                "utility `{name}` takes {n} parameter(s), got {}",
                nums.len()
            )))
        }
    };
    match name {
        "crra" => {
            want(1)?;
            if nums[0] == 1.0 {
                Ok(ParametricFamily::LogUtility)
            } else {
                Ok(ParametricFamily::Crra { gamma: nums[0] })
            }
        }
        "log" => {
            want(0)?;
            Ok(ParametricFamily::LogUtility)
        }
        "cara" => {
            want(1)?;
            Ok(ParametricFamily::Cara { gamma: nums[0] })
        }
        "hara" => {
            want(3)?;
            if nums[0] <= 0.0 {
                return Err(CliError::config("hara requires a > 0"));
            }
            if nums[2] == 0.0 || nums[2] == 1.0 {
                return Err(CliError::config(
                    "hara gamma 0 and 1 are the log and linear limits; use log instead",
                ));
            }
            Ok(ParametricFamily::Hara {
                a: nums[0],
                b: nums[1],
                gamma: nums[2],
            })
        }
        "yaari" => {
            want(2)?;
            if nums[0] <= 0.0 || nums[1] <= 0.0 {
                return Err(CliError::config("yaari requires c > 0 and cap > 0"));
            }
            Ok(ParametricFamily::YaariPiecewise {
                c: nums[0],
                cap: nums[1],
            })
        }
        "guarantee-crra" => {
            want(3)?;
            if nums[0] <= 0.0 || nums[2] <= 0.0 {
                return Err(CliError::config(
                    "guarantee-crra requires guarantee > 0 and coef > 0",
                ));
            }
            Ok(ParametricFamily::GuaranteeCrra {
                guarantee: nums[0],
                exponent: nums[1],
                coef: nums[2],
            })
        }
        other => Err(CliError::config(format!(
            "unknown utility `{other}`; valid: crra, log, cara, hara, yaari, guarantee-crra"
        ))),
    }
}

#[derive(Debug, Deserialize)]
struct DiscreteInput {
    xi: Vec<f64>,
    xstar: Vec<f64>,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default, rename = "N")]
    n: Option<usize>,
}

fn dara_verdict_json(v: &DaraVerdict) -> serde_json::Value {
    json!({
        "is_dara": v.is_dara,
        "is_asymptotic_dara": v.is_asymptotic_dara,
        "criterion_used": match v.criterion_used {
            DaraCriterion::TransformConvexity => "transform-convexity",
            DaraCriterion::BsConvexity => "bs-convexity",
            DaraCriterion::HazardSufficient => "hazard-sufficient",
        },
        "witness": v.witness,
        "margin": v.margin,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::InferUtility {
            market,
            target,
            grid,
            tol,
            anchor,
            fit,
            output,
        } => {
            grid.validate()?;
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let f = target.build()?;
            let anchor = match anchor {
                Some(c) => c,
                None => utility::default_anchor(&f)?,
            };
            let mut report = Report::new(
                "infer-utility",
                json!({"market": market.market.display().to_string(), "target": target.describe(), "anchor": anchor}),
            );
            // route non-classical targets to the generalized inference
            let curve = match utility::infer_utility(&f, &kernel, anchor, &tol) {
                Ok(c) => c,
                Err(utility::UtilityError::NonContinuousTarget) => {
                    report.warnings.push(
                        "target has atoms or flats: routed to generalized inference".into(),
                    );
                    utility::infer_generalized_utility(&f, &kernel, anchor, &tol)?
                        .core()
                        .clone()
                }
                Err(e) => return Err(e.into()),
            };
            let mut rows = Vec::new();
            for p in grid.quantiles() {
                let x = f.quantile(p)?;
                if rows.last().map(|r: &Vec<f64>| r[0] == x).unwrap_or(false) {
                    continue;
                }
                rows.push(vec![x, curve.value(x)?, curve.marginal(x)]);
            }
            write_csv(&output, &["x", "value", "marginal"], &rows)?;
            report.outputs.push(output.display().to_string());
            let mut results = json!({
                "anchor": anchor,
                "domain": [curve.domain().0.as_f64(), curve.domain().1.as_f64()],
            });
            if let Some(fit_spec) = fit {
                let fam = parse_utility(&fit_spec)?;
                let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                let g = Grid::new(xs).map_err(|e| CliError::engine(e.to_string()))?;
                let fitted = utility::affine_match(&curve, &fam, &g)?;
                results["fit"] = json!({
                    "family": fit_spec,
                    "alpha": fitted.alpha,
                    "beta": fitted.beta,
                    "residual": fitted.max_residual,
                });
            }
            report.results = results;
            report.print();
        }
        Command::InferGeneralized {
            market,
            target,
            grid,
            tol,
            anchor,
            output,
        } => {
            grid.validate()?;
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let f = target.build()?;
            let anchor = match anchor {
                Some(c) => c,
                None => utility::default_anchor(&f)?,
            };
            let mut report = Report::new(
                "infer-generalized",
                json!({"market": market.market.display().to_string(), "target": target.describe(), "anchor": anchor}),
            );
            let gu = utility::infer_generalized_utility(&f, &kernel, anchor, &tol)?;
            let curve = gu.core();
            let mut rows = Vec::new();
            for p in grid.quantiles() {
                let x = f.quantile(p)?;
                if rows.last().map(|r: &Vec<f64>| r[0] == x).unwrap_or(false) {
                    continue;
                }
                rows.push(vec![x, curve.value(x)?, curve.marginal(x)]);
            }
            write_csv(&output, &["x", "value", "marginal"], &rows)?;
            report.outputs.push(output.display().to_string());
            let (a, b) = curve.domain();
            report.results = json!({
                "anchor": anchor,
                "minus_infinity_below": a.as_f64(),
                "flat_above": b.as_f64(),
                "value_at_flat": if b.is_finite() { Some(curve.value(b.as_f64())?) } else { None },
            });
            report.print();
        }
        Command::Price {
            market,
            tol,
            payoff,
        } => {
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let p = parse_payoff(&payoff, &kernel)?;
            let cost = efficiency::cost(&p, &kernel, &tol)?;
            let mut report = Report::new(
                "price",
                json!({"market": market.market.display().to_string(), "payoff": payoff}),
            );
            report.results = json!({ "cost": cost });
            report.print();
        }
        Command::EfficientPayoff {
            market,
            target,
            grid,
            tol,
            output,
        } => {
            grid.validate()?;
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let f = target.build()?;
            let payoff = efficiency::efficient_payoff(&f, &kernel, &tol)?;
            let cost = efficiency::cost(&payoff, &kernel, &tol)?;
            let mut rows = Vec::new();
            for u in grid.quantiles() {
                let xi = kernel.law().quantile(u)?;
                rows.push(vec![u, xi, payoff.value_at(xi)]);
            }
            write_csv(&output, &["u", "xi", "payoff"], &rows)?;
            let mut report = Report::new(
                "efficient-payoff",
                json!({"market": market.market.display().to_string(), "target": target.describe()}),
            );
            report.outputs.push(output.display().to_string());
            report.results = json!({ "cost": cost });
            report.print();
        }
        Command::Audit {
            market,
            tol,
            payoff,
            target,
        } => {
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let mut p = parse_payoff(&payoff, &kernel)?;
            let mut report = Report::new(
                "audit",
                json!({"market": market.market.display().to_string(), "payoff": payoff, "target": target.describe()}),
            );
            if target.target.is_some() {
                p = p.with_declared_law(target.build()?);
            } else {
                report
                    .warnings
                    .push("no declared law: distribution taken from a sampled pushforward".into());
            }
            let audit = efficiency::audit(&p, &kernel, &tol)?;
            report.results = json!({
                "cost": audit.cost,
                "distributional_price": audit.distributional_price,
                "is_antimonotone": audit.is_antimonotone,
                "is_efficient": audit.is_efficient,
                "excess_cost": audit.excess_cost,
            });
            report.print();
        }
        Command::OptimalPayoff {
            market,
            grid,
            tol,
            utility: uspec,
            budget,
            output,
        } => {
            grid.validate()?;
            let tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let fam = parse_utility(&uspec)?;
            let curve = fam.to_curve(&tol);
            let mut report = Report::new(
                "optimal-payoff",
                json!({"market": market.market.display().to_string(), "utility": uspec, "budget": budget}),
            );
            if let ParametricFamily::YaariPiecewise { c, cap } = fam {
                // the budget pins the digital level B = X0 / E[xi 1{xi<=c}];
                // flag a mismatch with the supplied cap (textbook closed
                // forms differ on whether Phi(...) multiplies or divides)
                let u_c = kernel.law().cdf(c);
                let klaw = kernel.law().clone();
                let price_ind = utilityforge::integrate(
                    move |u: f64| klaw.quantile(u.clamp(1e-300, 1.0 - 1e-16)).unwrap(),
                    utilityforge::ExtReal::Finite(0.0),
                    utilityforge::ExtReal::Finite(u_c),
                    &tol,
                )?;
                let implied = budget / price_ind;
                if (implied - cap).abs() > 1e-6 * cap.abs().max(1.0) {
                    report.warnings.push(format!(
                        "yaari cap {cap} differs from the budget-implied level {implied}; the budget constraint divides by the truncated-kernel price rather than multiplying"
                    ));
                }
            }
            let opt = utility::optimal_payoff(&curve, &kernel, budget, &tol)?;
            let cost = efficiency::cost(&opt.payoff, &kernel, &tol)?;
            let mut rows = Vec::new();
            for u in grid.quantiles() {
                let xi = kernel.law().quantile(u)?;
                rows.push(vec![u, xi, opt.payoff.value_at(xi)]);
            }
            write_csv(&output, &["u", "xi", "payoff"], &rows)?;
            report.outputs.push(output.display().to_string());
            report.results = json!({ "lambda_star": opt.lambda, "cost": cost });
            report.print();
        }
        Command::RiskAversion {
            market,
            target,
            grid,
            tol,
            output,
        } => {
            grid.validate()?;
            let _tol = tol.build()?;
            let (_, kernel) = load_market(&market.market)?;
            let f = target.build()?;
            let g = risk_aversion::quantile_wealth_grid(&f, grid.grid_size, grid.q_lo, grid.q_hi)?;
            let profile = risk_aversion::RiskAversionProfile::compute(&f, &kernel, &g)?;
            let rows: Vec<Vec<f64>> = (0..profile.wealth.len())
                .map(|i| {
                    vec![
                        profile.wealth[i],
                        profile.probability[i],
                        profile.ara[i],
                        profile.rra[i],
                    ]
                })
                .collect();
            write_csv(&output, &["x", "p", "ara", "rra"], &rows)?;
            let mut report = Report::new(
                "risk-aversion",
                json!({"market": market.market.display().to_string(), "target": target.describe()}),
            );
            report.outputs.push(output.display().to_string());
            report.results = json!({
                "points": profile.wealth.len(),
                "ara_range": [
                    profile.ara.iter().cloned().fold(f64::INFINITY, f64::min),
                    profile.ara.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ],
            });
            report.print();
        }
        Command::DaraTest {
            target,
            grid,
            tol,
            criterion,
            market,
        } => {
            grid.validate()?;
            let _tol = tol.build()?;
            let f = target.build()?;
            let verdict = match criterion.as_str() {
                "bs" => {
                    let z_hi = utilityforge::special::normal_quantile(grid.q_hi);
                    let z_lo = utilityforge::special::normal_quantile(grid.q_lo);
                    let g = Grid::uniform(z_lo, z_hi, grid.grid_size)
                        .map_err(|e| CliError::config(e.to_string()))?;
                    risk_aversion::dara_bs(&f, &g)?
                }
                "general" => {
                    let mpath = market.ok_or_else(|| {
                        CliError::config("--market is required for the general criterion")
                    })?;
                    let (_, kernel) = load_market(&mpath)?;
                    let h = kernel.h_law().clone();
                    let g = risk_aversion::quantile_wealth_grid(
                        &h,
                        grid.grid_size,
                        grid.q_lo,
                        grid.q_hi,
                    )?;
                    risk_aversion::dara_general(&f, &h, &g)?
                }
                "hazard" => {
                    let g = risk_aversion::quantile_wealth_grid(
                        &f,
                        grid.grid_size,
                        grid.q_lo,
                        grid.q_hi,
                    )?;
                    risk_aversion::dara_hazard_sufficient(&f, &g)?
                }
                other => {
                    return Err(CliError::config(format!(
                        "unknown criterion `{other}`; valid: bs, general, hazard"
                    )))
                }
            };
            let mut report = Report::new(
                "dara-test",
                json!({"target": target.describe(), "criterion": criterion}),
            );
            report.results = dara_verdict_json(&verdict);
            report.print();
        }
        Command::RationalizeDiscrete {
            input,
            kind,
            trials,
            seed,
            output,
        } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::config(format!("cannot read {input:?}: {e}")))?;
            let parsed: DiscreteInput = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{input:?}: {e}")))?;
            if let Some(n) = parsed.n {
                if n != parsed.xi.len() {
                    return Err(CliError::config(format!(
                        "N = {n} but xi has {} entries",
                        parsed.xi.len()
                    )));
                }
            }
            let m = match parsed.probs {
                Some(p) => discrete::DiscreteMarket::with_probs(parsed.xi.clone(), p),
                None => discrete::DiscreteMarket::equiprobable(parsed.xi.clone()),
            }
            .map_err(|e| CliError::config(e.to_string()))?;
            let alloc = discrete::Allocation::new(parsed.xstar.clone());
            let u = match kind.as_str() {
                "quantile-step" => discrete::quantile_step_utility(&m, &alloc)?,
                "peleg-yaari" => discrete::peleg_yaari_utility(&m, &alloc)?,
                other => {
                    return Err(CliError::config(format!(
                        "unknown kind `{other}`; valid: quantile-step, peleg-yaari"
                    )))
                }
            };
            let rows: Vec<Vec<f64>> = u
                .breakpoints()
                .iter()
                .zip(u.levels())
                .map(|(&b, &s)| vec![b, s])
                .collect();
            write_csv(&output, &["breakpoint", "slope"], &rows)?;
            let verification = discrete::verify_optimality(&m, &u, &alloc, trials, seed)?;
            let mut report = Report::new(
                "rationalize-discrete",
                json!({"input": input.display().to_string(), "kind": kind, "trials": trials, "seed": seed}),
            );
            report.outputs.push(output.display().to_string());
            report.results = json!({
                "passed": verification.passed(),
                "violations": verification.violations.len(),
                "max_gap": verification.max_gap,
                "expected_utility_at_optimum": verification.expected_utility_at_optimum,
            });
            report.print();
        }
        Command::Validate { input } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::config(format!("cannot read {input:?}: {e}")))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{input:?}: {e}")))?;
            let kind = if value.get("model").is_some() {
                let spec: MarketSpec = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{input:?}: {e}")))?;
                spec.build().map_err(|e| CliError::config(e.to_string()))?;
                "market"
            } else if value.get("family").is_some() {
                let law: NamedLaw = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{input:?}: {e}")))?;
                utilityforge::make(&law).map_err(|e| CliError::config(e.to_string()))?;
                "named-law"
            } else if value.get("xi").is_some() {
                let parsed: DiscreteInput = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{input:?}: {e}")))?;
                match parsed.probs {
                    Some(p) => discrete::DiscreteMarket::with_probs(parsed.xi, p),
                    None => discrete::DiscreteMarket::equiprobable(parsed.xi),
                }
                .map_err(|e| CliError::config(e.to_string()))?;
                "discrete-market"
            } else {
                return Err(CliError::config(
                    "unrecognized document: expected a `model`, `family` or `xi` key",
                ));
            };
            let mut report = Report::new(
                "validate",
                json!({"input": input.display().to_string()}),
            );
            report.results = json!({"ok": true, "kind": kind});
            report.print();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = json!({
                "schema_version": 1,
                "error": { "kind": e.kind, "message": e.message },
            });
            eprintln!("{}", serde_json::to_string_pretty(&doc).expect("error json"));
            if e.kind == "ConfigError" {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
