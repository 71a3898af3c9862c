//! Thermodynamic optimum for two finite baths: solve the implicit
//! heat-conservation and entropy-conservation equations for the final
//! inverse temperatures, then read the optimal efficiency off the cold
//! bath's energy change, or equivalently off Carnot minus a relative
//! entropy.
//!
//! Sign conventions, fixed empirically against the two-level closed form:
//! drawing heat q > 0 from the hot bath lowers its mean energy, so
//! beta'_hot > beta_hot; the cold bath absorbs entropy, so
//! 0 < beta'_cold < beta_cold.

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::num::Dd;
use serde::{Deserialize, Serialize};

/// Search domain for final inverse temperatures.
const BETA_MIN: f64 = 1e-12;
const BETA_MAX: f64 = 1e6;
/// Relative tolerance on solver residuals.
const SOLVE_TOL: f64 = 1e-12;
const MAX_ITERS: u32 = 200;

/// Two baths and a target heat draw.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub hot: BathSpec,
    pub cold: BathSpec,
    /// heat drawn from the hot bath (total, not per site); > 0
    pub q_target: f64,
}

impl EngineConfig {
    pub fn new(hot: BathSpec, cold: BathSpec, q_target: f64) -> Result<Self> {
        if hot.beta <= 0.0 || cold.beta <= 0.0 {
            return Err(Error::invalid("bath temperatures must be finite (beta > 0)"));
        }
        if hot.beta >= cold.beta {
            return Err(Error::invalid(format!(
                "hot bath must be hotter: beta_hot = {} >= beta_cold = {}",
                hot.beta, cold.beta
            )));
        }
        if hot.n != cold.n {
            return Err(Error::invalid(
                "both baths must have the same particle count",
            ));
        }
        if !(q_target > 0.0) {
            return Err(Error::invalid("q_target must be > 0"));
        }
        let cap = heat_capacity_limit(&hot);
        if q_target >= cap {
            return Err(Error::invalid(format!(
                "heat exceeds bath capacity: q = {q_target} >= {cap}"
            )));
        }
        Ok(EngineConfig { hot, cold, q_target })
    }

    pub fn carnot(&self) -> f64 {
        1.0 - self.hot.beta / self.cold.beta
    }
}

/// Maximum extractable heat: cooling the bath all the way to its ground
/// state releases n * (<h>(beta) - min level).
pub fn heat_capacity_limit(bath: &BathSpec) -> f64 {
    bath.n as f64 * (bath.site.mean_energy(bath.beta).to_f64() - bath.site.min_level())
}

/// Solution of the implicit equations plus the efficiency they determine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermoSolution {
    pub beta_prime_hot: f64,
    pub beta_prime_cold: f64,
    pub eta_thermo: f64,
    /// D of the final two-bath Gibbs product from the initial one (nats)
    pub rel_entropy_total: f64,
    pub residual_energy: f64,
    pub residual_entropy: f64,
}

/// Monotone bracketing bisection, refined by Newton once the bracket is
/// narrow; `f` must be decreasing in beta. The root is kept in
/// double-double so residuals stay far below the 1e-12 gate even when the
/// heat draw is vanishingly small.
fn solve_decreasing(
    f: &dyn Fn(Dd) -> Dd,
    df: &dyn Fn(Dd) -> Dd,
    mut lo: f64,
    mut hi: f64,
) -> Result<Dd> {
    let flo = f(Dd::from_f64(lo)).to_f64();
    let fhi = f(Dd::from_f64(hi)).to_f64();
    if flo < 0.0 || fhi > 0.0 {
        return Err(Error::infeasible(format!(
            "no root in [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}"
        )));
    }
    let mut iters = 0;
    while hi - lo > 1e-6 * lo.max(1e-300) {
        iters += 1;
        if iters > MAX_ITERS {
            return Err(Error::numerical("bisection did not converge"));
        }
        let mid = 0.5 * (lo + hi);
        if f(Dd::from_f64(mid)).to_f64() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton in double-double from the bracket midpoint.
    let mut x = Dd::from_f64(0.5 * (lo + hi));
    for _ in 0..10 {
        let fx = f(x);
        let dfx = df(x);
        if dfx.is_zero() {
            break;
        }
        let step = fx / dfx;
        x = x - step;
        if (step / x).abs().to_f64() < 1e-30 {
            break;
        }
    }
    if !(x.is_finite() && x.to_f64() > 0.0) {
        return Err(Error::numerical("Newton refinement left the domain"));
    }
    Ok(x)
}

fn solve_hot_dd(hot: &BathSpec, q: f64) -> Result<Dd> {
    if !(q > 0.0) {
        return Err(Error::invalid("q must be > 0"));
    }
    if q >= heat_capacity_limit(hot) {
        return Err(Error::invalid(format!(
            "heat exceeds bath capacity: q = {q}"
        )));
    }
    let target = hot.site.mean_energy(hot.beta)
        - Dd::from_f64(q) / Dd::from_f64(hot.n as f64);
    let site = hot.site.clone();
    // mean energy is strictly decreasing in beta
    let f = move |b: Dd| site.mean_energy_dd(b) - target;
    let site2 = hot.site.clone();
    let df = move |b: Dd| -site2.variance_dd(b);
    solve_decreasing(&f, &df, hot.beta, BETA_MAX)
}

fn solve_cold_dd(hot: &BathSpec, cold: &BathSpec, beta_prime_hot: Dd) -> Result<Dd> {
    let s_target = hot.site.entropy(hot.beta) + cold.site.entropy(cold.beta)
        - hot.site.entropy_dd(beta_prime_hot);
    let log_d = (cold.d() as f64).ln();
    let tf = s_target.to_f64();
    if tf <= 0.0 || tf >= log_d {
        return Err(Error::infeasible(format!(
            "required cold-bath entropy {tf} outside (0, log d = {log_d})"
        )));
    }
    let site = cold.site.clone();
    let f = move |b: Dd| site.entropy_dd(b) - s_target;
    let site2 = cold.site.clone();
    // dS/dbeta = -beta * sigma^2
    let df = move |b: Dd| -b * site2.variance_dd(b);
    solve_decreasing(&f, &df, BETA_MIN, BETA_MAX)
}

/// beta'_hot such that the hot bath's per-site mean energy drops by q/n.
pub fn solve_beta_prime_hot(hot: &BathSpec, q: f64) -> Result<f64> {
    solve_hot_dd(hot, q).map(Dd::to_f64)
}

/// beta'_cold restoring total entropy: S(beta'_hot) + S(beta'_cold) =
/// S(beta_hot) + S(beta_cold), per site.
pub fn solve_beta_prime_cold(hot: &BathSpec, cold: &BathSpec, beta_prime_hot: f64) -> Result<f64> {
    solve_cold_dd(hot, cold, Dd::from_f64(beta_prime_hot)).map(Dd::to_f64)
}

/// The optimal efficiency from the energy form: eta = 1 - dE_cold / q.
pub fn eta_thermo(config: &EngineConfig) -> Result<ThermoSolution> {
    let bph = solve_hot_dd(&config.hot, config.q_target)?;
    let bpc = solve_cold_dd(&config.hot, &config.cold, bph)?;
    let n = Dd::from_f64(config.hot.n as f64);
    let q = Dd::from_f64(config.q_target);

    let de_cold = (config.cold.site.mean_energy_dd(bpc)
        - config.cold.site.mean_energy(config.cold.beta))
        * n;
    let eta = (Dd::ONE - de_cold / q).to_f64();

    let d_hot = site_rel_entropy(&config.hot, bph, config.hot.beta);
    let d_cold = site_rel_entropy(&config.cold, bpc, config.cold.beta);
    let rel = ((d_hot + d_cold) * n).to_f64();

    let res_e = (((config.hot.site.mean_energy(config.hot.beta)
        - config.hot.site.mean_energy_dd(bph))
        * n
        - q)
        / q)
        .to_f64();
    let res_s = (config.hot.site.entropy_dd(bph) + config.cold.site.entropy_dd(bpc)
        - config.hot.site.entropy(config.hot.beta)
        - config.cold.site.entropy(config.cold.beta))
    .to_f64();

    if res_e.abs() > SOLVE_TOL || res_s.abs() > SOLVE_TOL {
        return Err(Error::numerical(format!(
            "solver residuals too large: energy {res_e}, entropy {res_s}"
        )));
    }

    Ok(ThermoSolution {
        beta_prime_hot: bph.to_f64(),
        beta_prime_cold: bpc.to_f64(),
        eta_thermo: eta,
        rel_entropy_total: rel,
        residual_energy: res_e,
        residual_entropy: res_s,
    })
}

/// Per-site KL of the Gibbs state at `beta_from` against the one at
/// `beta_to`: beta_to*<h>_from + log Z(beta_to) - S(beta_from).
fn site_rel_entropy(bath: &BathSpec, beta_from: Dd, beta_to: f64) -> Dd {
    Dd::from_f64(beta_to) * bath.site.mean_energy_dd(beta_from) + bath.site.log_z(beta_to)
        - bath.site.entropy_dd(beta_from)
}

/// Total KL between n-fold Gibbs products at two temperatures (nats).
pub fn gibbs_rel_entropy(
    site: &crate::bath::SiteSpectrum,
    beta_from: f64,
    beta_to: f64,
    n: u32,
) -> Result<f64> {
    if beta_from < 0.0 || beta_to < 0.0 || !beta_from.is_finite() || !beta_to.is_finite() {
        return Err(Error::invalid("betas must be finite and >= 0"));
    }
    let per_site = Dd::from_f64(beta_to) * site.mean_energy(beta_from) + site.log_z(beta_to)
        - site.entropy(beta_from);
    Ok((per_site * Dd::from_f64(n as f64)).to_f64())
}

/// The same efficiency through Carnot minus relative entropy; agrees with
/// [`eta_thermo`] to ~1e-10 by construction of the implicit equations.
pub fn eta_thermo_via_relent(config: &EngineConfig) -> Result<f64> {
    let sol = eta_thermo(config)?;
    let q = Dd::from_f64(config.q_target);
    let carnot = Dd::ONE - Dd::from_f64(config.hot.beta) / Dd::from_f64(config.cold.beta);
    let eta = carnot
        - Dd::from_f64(sol.rel_entropy_total) / (Dd::from_f64(config.cold.beta) * q);
    Ok(eta.to_f64())
}
