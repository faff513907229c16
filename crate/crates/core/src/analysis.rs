//! Closed-form uplink outage analysis evaluated by adaptive quadrature.
//!
//! * association-power CDF `R(r) = exp(−π·λ_a·Υ(r))` and its density,
//! * Laplace transform of the co-channel interference,
//! * outage probability `1 − E_S[L_I(η/S)]` over the association power `S`.
//!
//! `Υ(r)` uses the lower limit `((ℓ/r)^{2/α} − h²)⁺`, the form that makes
//! `Υ` non-negative and non-increasing. All routines assume a fixed altitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::geometry::{elevation_deg, McEstimate, NetworkConfig};
pub use crate::quadrature::QuadratureSpec;
use crate::quadrature::{integrate, integrate_to_infinity, Integral, Unconverged};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytical,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageResult {
    pub p_out: f64,
    pub method: Method,
    /// Quadrature error bound, or the 95% half-width for Monte Carlo.
    pub error_estimate: f64,
    pub config_snapshot: NetworkConfig,
}

impl OutageResult {
    pub fn from_mc(est: &McEstimate, config: &NetworkConfig) -> Self {
        Self {
            p_out: est.mean,
            method: Method::MonteCarlo,
            error_estimate: est.half_width_95,
            config_snapshot: config.clone(),
        }
    }
}

/// Tolerances used by the scalar helpers that take no [`QuadratureSpec`].
const INNER: QuadratureSpec = QuadratureSpec {
    rel_tol: 1e-10,
    abs_tol: 1e-12,
    max_subdivisions: 500,
};

fn failed(integral: impl Into<String>, u: Unconverged) -> Error {
    Error::QuadratureNonConvergence {
        integral: integral.into(),
        estimate: u.value,
        error: u.error,
    }
}

fn fixed_altitude(config: &NetworkConfig) -> Result<f64> {
    config
        .altitude
        .fixed()
        .ok_or_else(|| Error::InvalidConfig("outage analysis supports a fixed UAV altitude only".into()))
}

/// Clamped limits `(a, b)` of the Υ integral; `a ≤ b` since `ℓ < 1`.
fn upsilon_limits(r: f64, h: f64, config: &NetworkConfig) -> (f64, f64) {
    let e = 2.0 / config.alpha;
    let a = ((config.ell / r).powf(e) - h * h).max(0.0);
    let b = (r.powf(-e) - h * h).max(0.0);
    (a, b)
}

/// LoS probability at squared ground distance `y` for altitude `h`.
fn rho_at(y: f64, h: f64, config: &NetworkConfig) -> f64 {
    config.rho(elevation_deg(h, y.sqrt()))
}

pub fn upsilon_with(r: f64, h: f64, config: &NetworkConfig, quad: &QuadratureSpec) -> Result<Integral> {
    check(r > 0.0, "r", r, "power level must be > 0")?;
    check(h >= 0.0, "h", h, "altitude must be >= 0")?;
    let (a, b) = upsilon_limits(r, h, config);
    // y = z² removes the square-root behaviour of ϑ(y) at y = 0.
    let inner = integrate(
        |z| {
            let theta = elevation_deg(h, z);
            2.0 * z * config.rho(theta)
        },
        a.sqrt(),
        b.sqrt(),
        &[h],
        quad,
    )
    .map_err(|u| failed(format!("Υ({r:e})"), u))?;
    Ok(Integral {
        value: a + inner.value,
        ..inner
    })
}

/// `Υ(r) = ∫_a^b ρ(ϑ(y)) dy + a` with `a = ((ℓ/r)^{2/α} − h²)⁺`,
/// `b = (r^{-2/α} − h²)⁺`, in m².
pub fn upsilon(r: f64, h: f64, config: &NetworkConfig) -> Result<f64> {
    upsilon_with(r, h, config, &INNER).map(|i| i.value)
}

/// `dΥ/dr` by the Leibniz rule. A clamped limit contributes nothing, which is
/// exact away from the two kinks `r = ℓ·h^{-α}` and `r = h^{-α}`.
pub fn upsilon_derivative(r: f64, h: f64, config: &NetworkConfig) -> Result<f64> {
    check(r > 0.0, "r", r, "power level must be > 0")?;
    let e = 2.0 / config.alpha;
    let (a, b) = upsilon_limits(r, h, config);
    let mut d = 0.0;
    if b > 0.0 {
        let db = -e * r.powf(-e - 1.0);
        d += db * rho_at(b, h, config);
    }
    if a > 0.0 {
        let da = -e * config.ell.powf(e) * r.powf(-e - 1.0);
        d += da * (1.0 - rho_at(a, h, config));
    }
    Ok(d)
}

/// `R(r) = P[L·‖U‖^{-α} ≤ r] = exp(−π·λ_a·Υ(r))`.
pub fn assoc_power_cdf(r: f64, h: f64, config: &NetworkConfig) -> Result<f64> {
    Ok((-PI * config.lambda_a * upsilon(r, h, config)?).exp())
}

/// `R'(r) = −π·λ_a·Υ'(r)·exp(−π·λ_a·Υ(r))`.
pub fn assoc_power_pdf(r: f64, h: f64, config: &NetworkConfig) -> Result<f64> {
    let ups = upsilon(r, h, config)?;
    let d = upsilon_derivative(r, h, config)?;
    Ok(-PI * config.lambda_a * d * (-PI * config.lambda_a * ups).exp())
}

/// Support `(0, h^{-α}]` of the association power, with the interior kink at
/// `ℓ·h^{-α}` where the NLoS limit unclamps.
pub fn assoc_power_support(h: f64, config: &NetworkConfig) -> (f64, f64) {
    let top = h.powf(-config.alpha);
    (config.ell * top, top)
}

/// Laplace transform of unit-mean exponential fading.
pub fn fading_laplace(s: f64) -> Result<f64> {
    check(s >= 0.0, "s", s, "must be >= 0")?;
    Ok(1.0 / (1.0 + s))
}

fn one_minus_fading_laplace(x: f64) -> f64 {
    x / (1.0 + x)
}

/// `ρ(w)·[1 − L_G(u·cos^α w)] + (1−ρ(w))·[1 − L_G(ℓ·u·cos^α w)]`.
pub fn interference_kernel(u: f64, w: f64, config: &NetworkConfig) -> Result<f64> {
    check(u >= 0.0, "u", u, "must be >= 0")?;
    check((0.0..=90.0).contains(&w), "w", w, "angle must lie in [0, 90] degrees")?;
    let cw = if w == 90.0 { 0.0 } else { w.to_radians().cos() };
    let x = u * cw.powf(config.alpha);
    let rho = config.rho(w);
    Ok(rho * one_minus_fading_laplace(x) + (1.0 - rho) * one_minus_fading_laplace(config.ell * x))
}

/// Kernel at squared ground distance `y`, using
/// `s·y^{-α/2}·cos^α ϑ(y) = s·(y+h²)^{-α/2}` to stay finite at `y → 0`.
fn kernel_at(s: f64, y: f64, h: f64, config: &NetworkConfig) -> f64 {
    let x = s * (y + h * h).powf(-0.5 * config.alpha);
    let rho = rho_at(y, h, config);
    rho * one_minus_fading_laplace(x) + (1.0 - rho) * one_minus_fading_laplace(config.ell * x)
}

/// `∫₀^∞ I_G(s·y^{-α/2}, ϑ(y)) dy` in m².
///
/// Mapped to `(0,1)` by `y = c·(t/(1−t))²`. The kernel decays like
/// `s·y^{-α/2}`, so the mapped integrand behaves like `(1−t)^{α−3}` at
/// `t = 1`: a weak, integrable singularity for `α < 3` that the open
/// Gauss–Kronrod rule never samples.
pub fn interference_exponent(s: f64, h: f64, config: &NetworkConfig, quad: &QuadratureSpec) -> Result<Integral> {
    check(s > 0.0, "s", s, "must be > 0")?;
    let h2 = h * h;
    let scale = h2.max(s.powf(2.0 / config.alpha)).max(1.0);
    integrate_to_infinity(|y| kernel_at(s, y, h, config), 0.0, scale, &[h2, 10.0 * h2], quad)
        .map_err(|u| failed(format!("interference exponent at s={s:e}"), u))
}

/// Same exponent restricted to interferers with ground distance below
/// `radius`, i.e. the model a finite simulation window actually samples.
pub fn truncated_interference_exponent(
    s: f64,
    h: f64,
    radius: f64,
    config: &NetworkConfig,
    quad: &QuadratureSpec,
) -> Result<Integral> {
    check(s > 0.0, "s", s, "must be > 0")?;
    let h2 = h * h;
    let ymax = radius * radius;
    let mut cuts = vec![h2, 10.0 * h2];
    let mut y = 100.0 * h2;
    while y < ymax {
        cuts.push(y);
        y *= 10.0;
    }
    integrate(|y| kernel_at(s, y, h, config), 0.0, ymax, &cuts, quad)
        .map_err(|u| failed(format!("truncated interference exponent at s={s:e}"), u))
}

/// `L_I(s) = exp(−π·λ_a·∫₀^∞ I_G(s·y^{-α/2}, ϑ(y)) dy)`.
pub fn interference_laplace(s: f64, config: &NetworkConfig) -> Result<f64> {
    interference_laplace_with(s, config, &QuadratureSpec::default())
}

pub fn interference_laplace_with(s: f64, config: &NetworkConfig, quad: &QuadratureSpec) -> Result<f64> {
    let h = fixed_altitude(config)?;
    let e = interference_exponent(s, h, config, quad)?;
    Ok((-PI * config.lambda_a * e.value).exp())
}

/// Laplace transform of the interference from inside the simulation window only.
pub fn truncated_interference_laplace(s: f64, config: &NetworkConfig, quad: &QuadratureSpec) -> Result<f64> {
    let h = fixed_altitude(config)?;
    let e = truncated_interference_exponent(s, h, config.window_radius, config, quad)?;
    Ok((-PI * config.lambda_a * e.value).exp())
}

/// Lower cut-off in `ln r` below which the association-power CDF is under
/// `mass`; the omitted probability is at most `mass`.
fn log_power_floor(h: f64, config: &NetworkConfig, mass: f64) -> Result<f64> {
    let (kink, _) = assoc_power_support(h, config);
    let mut x = kink.ln();
    while assoc_power_cdf(x.exp(), h, config)? > mass {
        x -= std::f64::consts::LN_10;
    }
    Ok(x)
}

/// Integrates `g(r)·R'(r)` over the association power in log coordinates.
fn expect_over_power<G: FnMut(f64) -> f64>(
    mut g: G,
    h: f64,
    config: &NetworkConfig,
    quad: &QuadratureSpec,
    tail_mass: f64,
    label: &str,
) -> Result<Integral> {
    let (kink, top) = assoc_power_support(h, config);
    let lo = log_power_floor(h, config, tail_mass)?;
    let mut pdf_error: Option<Error> = None;
    let res = integrate(
        |x| {
            let r = x.exp();
            match assoc_power_pdf(r, h, config) {
                Ok(p) => g(r) * p * r,
                Err(e) => {
                    pdf_error.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        top.ln(),
        &[kink.ln()],
        quad,
    );
    if let Some(e) = pdf_error {
        return Err(e);
    }
    res.map_err(|u| failed(label.to_string(), u))
}

/// `∫ R'(r) dr` over the support; equals one up to quadrature error.
pub fn assoc_power_pdf_mass(h: f64, config: &NetworkConfig, quad: &QuadratureSpec) -> Result<Integral> {
    expect_over_power(|_| 1.0, h, config, quad, 1e-16, "association-power density mass")
}

/// `p_out = 1 − ∫ L_I(η/r)·R'(r) dr`.
pub fn outage_probability(config: &NetworkConfig, quad: &QuadratureSpec) -> Result<OutageResult> {
    outage_with(config, quad, false)
}

/// Outage of the window-truncated model a finite simulation samples.
pub fn outage_probability_in_window(config: &NetworkConfig, quad: &QuadratureSpec) -> Result<OutageResult> {
    outage_with(config, quad, true)
}

fn outage_with(config: &NetworkConfig, quad: &QuadratureSpec, truncated: bool) -> Result<OutageResult> {
    config.validate()?;
    quad.validate()?;
    let h = fixed_altitude(config)?;
    let tail_mass = 1e-15;
    let mut inner_error: Option<Error> = None;
    let mut inner_bound: f64 = 0.0;
    let pi_la = PI * config.lambda_a;
    let outer = expect_over_power(
        |r| {
            let s = config.eta / r;
            let e = if truncated {
                truncated_interference_exponent(s, h, config.window_radius, config, quad)
            } else {
                interference_exponent(s, h, config, quad)
            };
            match e {
                Ok(i) => {
                    let l = (-pi_la * i.value).exp();
                    inner_bound = inner_bound.max(l * pi_la * i.error);
                    l
                }
                Err(err) => {
                    inner_error.get_or_insert(err);
                    f64::NAN
                }
            }
        },
        h,
        config,
        quad,
        tail_mass,
        "outage expectation over the association power",
    );
    if let Some(e) = inner_error {
        return Err(e);
    }
    let outer = outer?;
    let p_out = (1.0 - outer.value).clamp(0.0, 1.0);
    Ok(OutageResult {
        p_out,
        method: Method::Analytical,
        error_estimate: outer.error + inner_bound + tail_mass,
        config_snapshot: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetworkConfig {
        NetworkConfig::reference(100.0)
    }

    #[test]
    fn upsilon_rejects_nonpositive_power() {
        assert!(upsilon(0.0, 100.0, &cfg()).is_err());
        assert!(upsilon(-1.0, 100.0, &cfg()).is_err());
    }

    #[test]
    fn upsilon_degenerate_all_los_bias() {
        let c = NetworkConfig { ell: 1.0, ..cfg() };
        for r in [1e-12_f64, 1e-9, 1e-7] {
            let expect = (r.powf(-2.0 / c.alpha) - 1e4_f64).max(0.0);
            let got = upsilon(r, 100.0, &c).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect.max(1.0), "{got} {expect}");
        }
    }

    #[test]
    fn upsilon_saturates_to_zero() {
        let c = cfg();
        let top = 100.0_f64.powf(-c.alpha);
        assert_eq!(upsilon(top * (1.0 + 1e-12), 100.0, &c).unwrap(), 0.0);
        assert!(upsilon(top, 100.0, &c).unwrap() < 1e-10);
        assert_eq!(upsilon(10.0 * top, 100.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn upsilon_is_nonnegative_and_nonincreasing() {
        let c = cfg();
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let r = 10f64.powf(-14.0 + 0.15 * k as f64);
            let u = upsilon(r, 100.0, &c).unwrap();
            assert!(u >= 0.0 && u <= prev, "r={r} u={u} prev={prev}");
            prev = u;
        }
    }

    #[test]
    fn cdf_limits_and_monotonicity() {
        let c = cfg();
        assert_eq!(assoc_power_cdf(1.0, 100.0, &c).unwrap(), 1.0);
        assert!(assoc_power_cdf(1e-16, 100.0, &c).unwrap() < 1e-12);
        let grid: Vec<f64> = (0..50).map(|k| 10f64.powf(-12.0 + 0.14 * k as f64)).collect();
        let vals: Vec<f64> = grid.iter().map(|&r| assoc_power_cdf(r, 100.0, &c).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pdf_is_nonnegative() {
        let c = cfg();
        for k in 0..80 {
            let r = 10f64.powf(-13.0 + 0.1 * k as f64);
            assert!(assoc_power_pdf(r, 100.0, &c).unwrap() >= 0.0);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let c = cfg();
        let quad = QuadratureSpec::default();
        let m = assoc_power_pdf_mass(100.0, &c, &quad).unwrap();
        assert!((m.value - 1.0).abs() <= quad.rel_tol, "{}", m.value);
    }

    #[test]
    fn fading_laplace_values() {
        assert_eq!(fading_laplace(0.0).unwrap(), 1.0);
        assert_eq!(fading_laplace(1.0).unwrap(), 0.5);
        assert_eq!(fading_laplace(3.0).unwrap(), 0.25);
        assert!(fading_laplace(-1e-3).is_err());
    }

    #[test]
    fn kernel_edge_cases() {
        let c = cfg();
        assert_eq!(interference_kernel(0.0, 30.0, &c).unwrap(), 0.0);
        assert_eq!(interference_kernel(5.0, 90.0, &c).unwrap(), 0.0);
        assert!(interference_kernel(-1.0, 30.0, &c).is_err());
        assert!(interference_kernel(1.0, 91.0, &c).is_err());
        let merged = NetworkConfig { ell: 1.0, ..c.clone() };
        for (u, w) in [(0.3_f64, 10.0_f64), (2.0, 45.0), (50.0, 80.0)] {
            let x = u * w.to_radians().cos().powf(merged.alpha);
            let expect = 1.0 - fading_laplace(x).unwrap();
            assert!((interference_kernel(u, w, &merged).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_in_unit_interval_and_increasing_in_u() {
        let c = cfg();
        for w in [0.0, 15.0, 45.0, 75.0] {
            let mut prev = -1.0;
            for k in 0..40 {
                let u = 10f64.powf(-3.0 + 0.2 * k as f64);
                let v = interference_kernel(u, w, &c).unwrap();
                assert!((0.0..=1.0).contains(&v) && v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn stable_kernel_matches_angle_form() {
        let c = cfg();
        for y in [1.0, 1e3, 1e5, 1e7] {
            let s = 1e6;
            let w = elevation_deg(100.0, f64::sqrt(y));
            let direct = interference_kernel(s * y.powf(-c.alpha / 2.0), w, &c).unwrap();
            let stable = kernel_at(s, y, 100.0, &c);
            assert!((direct - stable).abs() < 1e-12, "{direct} {stable}");
        }
    }

    #[test]
    fn laplace_limits_and_monotonicity() {
        let c = cfg();
        assert!(interference_laplace(1e-12, &c).unwrap() > 1.0 - 1e-9);
        let mut prev = 1.0;
        for k in 0..12 {
            let s = 10f64.powf(3.0 + 0.6 * k as f64);
            let l = interference_laplace(s, &c).unwrap();
            assert!(l > 0.0 && l <= prev, "s={s} l={l}");
            prev = l;
        }
    }

    #[test]
    fn outage_threshold_limits() {
        let quad = QuadratureSpec::default();
        let lo = outage_probability(&NetworkConfig { eta: 1e-9, ..cfg() }, &quad).unwrap();
        assert!(lo.p_out < 1e-4, "{}", lo.p_out);
        let hi = outage_probability(&NetworkConfig { eta: 1e9, ..cfg() }, &quad).unwrap();
        assert!(hi.p_out > 0.999, "{}", hi.p_out);
    }

    #[test]
    fn outage_is_bit_reproducible() {
        let quad = QuadratureSpec::default();
        let a = outage_probability(&cfg(), &quad).unwrap();
        let b = outage_probability(&cfg(), &quad).unwrap();
        assert_eq!(a.p_out.to_bits(), b.p_out.to_bits());
        assert_eq!(a.method, Method::Analytical);
        assert!(a.error_estimate >= 0.0);
    }

    #[test]
    fn random_altitude_is_rejected() {
        let c = NetworkConfig {
            altitude: crate::geometry::AltitudeLaw::Uniform { min: 50.0, max: 150.0 },
            ..cfg()
        };
        assert!(outage_probability(&c, &QuadratureSpec::default()).is_err());
    }
}
