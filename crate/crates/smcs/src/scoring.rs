//! Loss functions (CRPS, quantile/GPL, median score) and conditional bounds
//! on loss differences.
//!
//! Every e-process in this crate consumes loss differences `d = L_i - L_j`
//! together with a bound `c` such that `|d| <= c/2`. The bound computations
//! here exploit that the CRPS difference of two forecasts attains its
//! extrema at a crossing point of the two CDFs (including the limits at
//! plus/minus infinity), and that quantile score differences are sandwiched
//! by `(tau - 1)|g(x1) - g(x2)|` and `tau |g(x1) - g(x2)|`.

use crate::error::{Result, SmcsError};

const SQRT_PI: f64 = 1.7724538509055160273;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.5066282746310005024;

/// Standard normal CDF, computed from the error function as provided by
/// `statrs` (a Cody-style rational approximation, accurate to well below
/// 1e-12 in double precision).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// Monotone transform applied inside generalized piecewise-linear quantile
/// scores. `Log` yields the GPL score used for strictly positive data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    fn apply(self, x: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(x),
            Transform::Log => {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(SmcsError::Domain(format!(
                        "log transform requires positive argument, got {x}"
                    )))
                }
            }
        }
    }
}

/// A step-function CDF given by strictly increasing support points and
/// nondecreasing cumulative probabilities ending at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    points: Vec<f64>,
    probs: Vec<f64>,
}

impl StepCdf {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(SmcsError::Domain(
                "step CDF needs equally many support points and probabilities".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SmcsError::Domain(
                "step CDF support points must be strictly increasing".into(),
            ));
        }
        if probs.windows(2).any(|w| w[0] > w[1]) || probs.iter().any(|p| *p < 0.0 || *p > 1.0) {
            return Err(SmcsError::Domain(
                "step CDF probabilities must be nondecreasing in [0,1]".into(),
            ));
        }
        if *probs.last().unwrap() != 1.0 {
            return Err(SmcsError::Domain(
                "step CDF must reach probability exactly 1".into(),
            ));
        }
        Ok(StepCdf { points, probs })
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        StepCdf {
            points: vec![x],
            probs: vec![1.0],
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Right-continuous CDF evaluation.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.points.partition_point(|p| *p <= x) {
            0 => 0.0,
            k => self.probs[k - 1],
        }
    }

    /// Mean of the associated distribution.
    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (x, p) in self.points.iter().zip(&self.probs) {
            acc += x * (p - prev);
            prev = *p;
        }
        acc
    }
}

/// A forecast that can be scored: a predictive distribution (normal or step
/// CDF) or a deterministic point forecast.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastObject {
    Normal { mean: f64, variance: f64 },
    StepCdf(StepCdf),
    Point { value: f64 },
}

impl ForecastObject {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        if variance > 0.0 {
            Ok(ForecastObject::Normal { mean, variance })
        } else {
            Err(SmcsError::Domain(format!(
                "normal forecast needs positive variance, got {variance}"
            )))
        }
    }
}

/// CRPS of a normal predictive distribution, via the closed form
/// `sigma * (z(2*Phi(z)-1) + 2*phi(z) - 1/sqrt(pi))` with `z = (y-mean)/sigma`.
pub fn crps_normal(mean: f64, variance: f64, y: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(SmcsError::Domain(format!(
            "crps_normal needs positive variance, got {variance}"
        )));
    }
    let sigma = variance.sqrt();
    let z = (y - mean) / sigma;
    Ok(sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / SQRT_PI))
}

/// CRPS of a step CDF by exact piecewise integration of
/// `(F(x) - 1{y <= x})^2`. The integrand vanishes outside the hull of the
/// support points and `y`, so only finitely many constant pieces contribute.
pub fn crps_step(f: &StepCdf, y: f64) -> f64 {
    let mut bps: Vec<f64> = Vec::with_capacity(f.points.len() + 1);
    bps.extend_from_slice(&f.points);
    match bps.binary_search_by(|a| a.partial_cmp(&y).unwrap()) {
        Ok(_) => {}
        Err(k) => bps.insert(k, y),
    }
    let mut total = 0.0;
    for w in bps.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fx = f.cdf(a);
        let ind = if y <= a { 1.0 } else { 0.0 };
        total += (fx - ind) * (fx - ind) * (b - a);
    }
    total
}

/// CRPS dispatch over all forecast variants. Point forecasts are scored as
/// Dirac distributions, for which the CRPS reduces to absolute error.
pub fn crps(f: &ForecastObject, y: f64) -> Result<f64> {
    match f {
        ForecastObject::Normal { mean, variance } => crps_normal(*mean, *variance, y),
        ForecastObject::StepCdf(s) => Ok(crps_step(s, y)),
        ForecastObject::Point { value } => Ok((value - y).abs()),
    }
}

/// Generalized piecewise-linear quantile score
/// `(1{y <= x} - tau)(g(x) - g(y))`. With the identity transform this is the
/// classical quantile score; with the log transform it is the GPL score for
/// positive data.
pub fn quantile_score(tau: f64, x: f64, y: f64, g: Transform) -> Result<f64> {
    check_tau(tau)?;
    let ind = if y <= x { 1.0 } else { 0.0 };
    Ok((ind - tau) * (g.apply(x)? - g.apply(y)?))
}

/// Consistent scoring function for the median, `0.5 (Phi(m) - Phi(y))`.
pub fn median_score(m: f64, y: f64) -> f64 {
    0.5 * (norm_cdf(m) - norm_cdf(y))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(SmcsError::Domain(format!("tau must lie in (0,1), got {tau}")))
    }
}

/// Bound `c` with `|quantile_score(tau,x1,y,g) - quantile_score(tau,x2,y,g)| <= c/2`
/// for all outcomes `y`, namely `2 max{tau, 1-tau} |g(x1) - g(x2)|`.
pub fn quantile_diff_bound(tau: f64, x1: f64, x2: f64, g: Transform) -> Result<f64> {
    check_tau(tau)?;
    Ok(2.0 * tau.max(1.0 - tau) * (g.apply(x1)? - g.apply(x2)?).abs())
}

/// The 23 quantile levels used for discretizing normal forecasts when they
/// are paired with step CDFs in bound computations.
pub const QUANTILE_LEVELS_23: [f64; 23] = [
    0.01, 0.025, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65,
    0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.975, 0.99,
];

/// Discretize a normal distribution at the 23 standard quantile levels plus
/// +-6 sigma tail points, yielding a step CDF usable in crossing-point bound
/// computations against other step CDFs.
pub fn discretize_normal(mean: f64, variance: f64) -> Result<StepCdf> {
    if !(variance > 0.0) {
        return Err(SmcsError::Domain(format!(
            "discretize_normal needs positive variance, got {variance}"
        )));
    }
    let sigma = variance.sqrt();
    let mut points = Vec::with_capacity(25);
    let mut probs = Vec::with_capacity(25);
    points.push(mean - 6.0 * sigma);
    probs.push(norm_cdf(-6.0));
    for &p in &QUANTILE_LEVELS_23 {
        points.push(mean + sigma * norm_quantile(p));
        probs.push(p);
    }
    points.push(mean + 6.0 * sigma);
    probs.push(1.0);
    StepCdf::new(points, probs)
}

/// Bound `c` such that `|crps(F1,y) - crps(F2,y)| <= c/2` for all `y`.
///
/// The CRPS difference `delta(y)` is monotone between crossing points of the
/// two CDFs, so its extrema lie at crossing points or at the limits
/// `y -> +-infinity`. For a normal pair the finite crossing (if the standard
/// deviations differ) is solved in closed form; for step CDFs the union of
/// jump points is used since `delta` is piecewise linear between jumps.
/// Mixed normal/step pairs discretize the normal first. Identical forecasts
/// return 0; callers must treat the degenerate bound as a no-evidence round.
pub fn crps_diff_bound(f1: &ForecastObject, f2: &ForecastObject) -> Result<f64> {
    if f1 == f2 {
        return Ok(0.0);
    }
    match (f1, f2) {
        (
            ForecastObject::Normal {
                mean: m1,
                variance: v1,
            },
            ForecastObject::Normal {
                mean: m2,
                variance: v2,
            },
        ) => {
            if !(*v1 > 0.0) || !(*v2 > 0.0) {
                return Err(SmcsError::Domain("normal variance must be positive".into()));
            }
            let (s1, s2) = (v1.sqrt(), v2.sqrt());
            // delta(+inf) is the constant term K = int F1^2 - F2^2 dx,
            // which for normals equals (m2 - m1) + (s2 - s1)/sqrt(pi);
            // delta(-inf) = K + 2(m1 - m2).
            let k = (m2 - m1) + (s2 - s1) / SQRT_PI;
            let mut max_abs = k.abs().max((k + 2.0 * (m1 - m2)).abs());
            if s1 != s2 {
                let z = (m1 * s2 - m2 * s1) / (s2 - s1);
                let delta = crps_normal(*m1, *v1, z)? - crps_normal(*m2, *v2, z)?;
                max_abs = max_abs.max(delta.abs());
            }
            Ok(2.0 * max_abs)
        }
        _ => {
            let s1 = as_step(f1)?;
            let s2 = as_step(f2)?;
            crps_diff_bound_steps(&s1, &s2)
        }
    }
}

fn as_step(f: &ForecastObject) -> Result<StepCdf> {
    match f {
        ForecastObject::StepCdf(s) => Ok(s.clone()),
        ForecastObject::Point { value } => Ok(StepCdf::dirac(*value)),
        ForecastObject::Normal { mean, variance } => discretize_normal(*mean, *variance),
    }
}

fn crps_diff_bound_steps(f1: &StepCdf, f2: &StepCdf) -> Result<f64> {
    // Constant term K = int F1^2 - F2^2 dx over the joint support hull.
    let mut jumps: Vec<f64> = f1.points.iter().chain(f2.points.iter()).copied().collect();
    jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    jumps.dedup();
    let mut k = 0.0;
    for w in jumps.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (g1, g2) = (f1.cdf(a), f2.cdf(a));
        k += (g1 * g1 - g2 * g2) * (b - a);
    }
    let mut max_abs = k.abs().max((k + 2.0 * (f1.mean() - f2.mean())).abs());
    for &z in &jumps {
        let delta = crps_step(f1, z) - crps_step(f2, z);
        max_abs = max_abs.max(delta.abs());
    }
    Ok(2.0 * max_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn crps_normal_standard_at_zero() {
        // 1/sqrt(pi) * (sqrt(2) - 1) = 0.23369497...
        let v = crps_normal(0.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 0.23369497725510177, epsilon = 1e-12);
    }

    #[test]
    fn crps_normal_location_scale() {
        let v = crps_normal(3.0, 4.0, 3.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 0.23369497725510177, epsilon = 1e-12);
        for &(mu, var, y) in &[(1.5, 0.3, -2.0), (-4.0, 9.0, 1.0), (0.0, 2.0, 7.0)] {
            let sigma = f64::sqrt(var);
            let lhs = crps_normal(mu, var, y).unwrap();
            let rhs = sigma * crps_normal(0.0, 1.0, (y - mu) / sigma).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn crps_normal_far_outcome() {
        let v = crps_normal(0.0, 1.0, 10.0).unwrap();
        // y - 1/sqrt(pi) + tiny correction for z = 10
        assert_abs_diff_eq!(v, 10.0 - 1.0 / SQRT_PI, epsilon = 1e-6);
        assert!((v - 9.435814).abs() < 1e-5);
    }

    #[test]
    fn crps_normal_rejects_bad_variance() {
        assert!(crps_normal(0.0, 0.0, 1.0).is_err());
        assert!(crps_normal(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn crps_step_dirac() {
        let f = StepCdf::dirac(2.0);
        assert_abs_diff_eq!(crps_step(&f, 2.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(crps_step(&f, 5.0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(crps_step(&f, -1.0), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn crps_step_two_point_uniform() {
        let f = StepCdf::new(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap();
        // y = 0: indicator is 1 on [0,1) where F = 0.5, so the integral is
        // (0.5 - 1)^2 = 0.25. Equivalently E|X - 0| - E|X - X'|/2 = 0.5 - 0.25.
        assert_abs_diff_eq!(crps_step(&f, 0.0), 0.25, epsilon = 1e-15);
        // y = 0.5 splits the unit interval; both halves contribute 0.125.
        assert_abs_diff_eq!(crps_step(&f, 0.5), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn step_cdf_validation() {
        assert!(StepCdf::new(vec![0.0, 0.0], vec![0.5, 1.0]).is_err());
        assert!(StepCdf::new(vec![0.0, 1.0], vec![0.7, 0.5]).is_err());
        assert!(StepCdf::new(vec![0.0, 1.0], vec![0.5, 0.9]).is_err());
    }

    #[test]
    fn quantile_score_examples() {
        assert_abs_diff_eq!(
            quantile_score(0.5, 7.0, 7.0, Transform::Identity).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            quantile_score(0.9, 2.0, 1.0, Transform::Identity).unwrap(),
            0.1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quantile_score(0.25, std::f64::consts::E, 1.0, Transform::Log).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert!(quantile_score(0.5, -1.0, 1.0, Transform::Log).is_err());
        assert!(quantile_score(1.0, 1.0, 1.0, Transform::Identity).is_err());
    }

    #[test]
    fn median_score_examples() {
        assert_abs_diff_eq!(median_score(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(median_score(1e9, 0.0), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(median_score(1.0, 0.0), 0.17067213147558775, epsilon = 1e-9);
    }

    #[test]
    fn quantile_diff_bound_examples() {
        assert_abs_diff_eq!(
            quantile_diff_bound(0.3, 4.0, 4.0, Transform::Identity).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            quantile_diff_bound(0.9, 2.0, 1.0, Transform::Identity).unwrap(),
            1.8,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quantile_diff_bound(0.5, 2.0, 1.0, Transform::Log).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn crps_diff_bound_identical_is_zero() {
        let f = ForecastObject::normal(0.0, 1.0).unwrap();
        assert_eq!(crps_diff_bound(&f, &f.clone()).unwrap(), 0.0);
    }

    #[test]
    fn crps_diff_bound_covers_grid() {
        let f1 = ForecastObject::normal(0.2, 1.0).unwrap();
        let f2 = ForecastObject::normal(0.0, 1.0).unwrap();
        let c = crps_diff_bound(&f1, &f2).unwrap();
        let mut max_abs: f64 = 0.0;
        let mut y = -20.0;
        while y <= 20.0 {
            let d = crps(&f1, y).unwrap() - crps(&f2, y).unwrap();
            max_abs = max_abs.max(d.abs());
            y += 1e-3;
        }
        assert!(max_abs <= c / 2.0 + 1e-9);
        assert_abs_diff_eq!(max_abs, c / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn crps_diff_bound_steps_attained_at_jump() {
        let a = StepCdf::new(vec![-1.0, 0.5], vec![0.3, 1.0]).unwrap();
        let b = StepCdf::new(vec![-0.5, 1.0], vec![0.6, 1.0]).unwrap();
        let c = crps_diff_bound(&ForecastObject::StepCdf(a.clone()), &ForecastObject::StepCdf(b.clone()))
            .unwrap();
        let mut max_abs: f64 = 0.0;
        let mut grid: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 1e-3).collect();
        grid.extend_from_slice(&[-1.0, -0.5, 0.5, 1.0]);
        for y in grid {
            let d = crps_step(&a, y) - crps_step(&b, y);
            max_abs = max_abs.max(d.abs());
        }
        assert!(max_abs <= c / 2.0 + 1e-9);
        assert_abs_diff_eq!(max_abs, c / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn discretized_normal_is_valid_cdf() {
        let s = discretize_normal(1.0, 4.0).unwrap();
        assert_eq!(s.points().len(), 25);
        assert_eq!(*s.probs().last().unwrap(), 1.0);
        assert_abs_diff_eq!(s.mean(), 1.0, epsilon = 0.05);
    }
}
