//! The sort/swap/unsort work-extraction protocol.
//!
//! In sorted coordinates the map takes (i, j) to
//! (i div d^m + (j div d^(n-m)) d^(n-m), (j mod d^(n-m)) d^m + (i mod d^m)):
//! the hot index is compressed by d^m and receives the cold bath's m top
//! digits, the cold index is stretched by d^m and receives the hot bath's
//! m low digits. The final marginals therefore factorize exactly, which is
//! what both evaluation modes exploit.

mod blockwise;
pub(crate) mod dense;
pub(crate) mod sweeps;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::num::{Dd, Precision, Real};
use crate::spectrum::{build_sorted_spectrum, SortedSpectrum};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

pub use sweeps::{initial_energy, initial_entropy};

/// Exact mode materializes d^n-entry tables; this is its admission cap.
pub const EXACT_CAP_STATES: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Exact,
    Blockwise,
    Auto,
}

/// Rounding convention of the compressed reference index in d_x_n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CeilMode {
    Ceil,
    Floor,
}

#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub hot: BathSpec,
    pub cold: BathSpec,
    pub m: u32,
    pub mode: Mode,
    pub ceil: CeilMode,
    /// None selects double below n = 10^4 and extended from there on.
    pub precision: Option<Precision>,
    /// block-size regime flag and margin (see `regime_margin`)
    pub regime_ok: bool,
    pub regime_margin: f64,
}

/// Margin of m below n (min{1 - S_cold/log d, -log max p_hot / log d} - eps),
/// the condition under which the product approximation tails vanish
/// exponentially. eps = 0.01.
pub fn regime_margin(hot: &BathSpec, cold: &BathSpec, m: u32) -> f64 {
    let log_d = (hot.d() as f64).ln();
    let s_cold = cold.site.entropy(cold.beta).to_f64();
    let max_p = crate::bath::gibbs_site_probs(&hot.site, hot.beta)
        .map(|p| p.into_iter().fold(0.0f64, f64::max))
        .unwrap_or(1.0);
    let t1 = 1.0 - s_cold / log_d;
    let t2 = -max_p.ln() / log_d;
    hot.n as f64 * (t1.min(t2) - 0.01) - m as f64
}

impl ProtocolConfig {
    pub fn new(hot: BathSpec, cold: BathSpec, m: u32, mode: Mode) -> Result<Self> {
        if hot.beta <= 0.0 || cold.beta <= 0.0 {
            return Err(Error::invalid(
                "the protocol needs beta > 0 in both baths (energies are read \
                 off sorted probabilities)",
            ));
        }
        if hot.beta > cold.beta {
            return Err(Error::invalid("hot bath must not be colder than cold bath"));
        }
        if hot.n != cold.n {
            return Err(Error::invalid("baths must share the particle count"));
        }
        if hot.d() != cold.d() {
            return Err(Error::invalid("baths must share the level count d"));
        }
        if m >= hot.n {
            return Err(Error::invalid(format!("m = {m} must be < n = {}", hot.n)));
        }
        let margin = regime_margin(&hot, &cold, m);
        Ok(ProtocolConfig {
            regime_ok: margin > 0.0,
            regime_margin: margin,
            hot,
            cold,
            m,
            mode,
            ceil: CeilMode::Ceil,
            precision: None,
        })
    }

    fn resolve_mode(&self) -> Mode {
        match self.mode {
            Mode::Auto => {
                let bits = self.hot.n as f64 * (self.hot.d() as f64).log2();
                if bits <= (EXACT_CAP_STATES as f64).log2() {
                    Mode::Exact
                } else {
                    Mode::Blockwise
                }
            }
            m => m,
        }
    }

    fn resolve_precision(&self) -> Precision {
        self.precision.unwrap_or(if self.hot.n >= 10_000 {
            Precision::Extended
        } else {
            Precision::Double
        })
    }
}

/// The approximation-formula values (block-size heat, divergence-sum
/// efficiency) alongside rigorous propagated bounds on how far they can
/// sit from the exact outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockwiseApprox {
    pub q_hot: f64,
    pub work: f64,
    pub eta: Option<f64>,
    pub kl: f64,
    pub ds_hot: f64,
    pub ds_cold: f64,
    /// bound on |kl_exact - (d_x + d_y)|
    pub kl_bound: f64,
    /// bound on |q_hot_exact - q_hot|
    pub q_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    pub n: u32,
    pub d: u32,
    pub beta_hot: f64,
    pub beta_cold: f64,
    pub m: u32,
    pub mode_used: Mode,
    pub precision_used: Precision,
    /// extracted work W
    pub work: f64,
    /// heat drawn from the hot bath
    pub heat_hot: f64,
    /// heat released into the cold bath, = (1 - eta) * heat_hot
    pub heat_cold_released: f64,
    /// W / Q_H; None when no heat flows (m = 0)
    pub eta: Option<f64>,
    /// divergence sums of the two compressions
    pub d_x: f64,
    pub d_y: f64,
    pub d_x_floor: f64,
    /// KL of the final joint state from the initial one. Direct sum in
    /// exact mode; in blockwise mode the exact energy identity
    /// kl = (b_L - b_H) Q_H - b_L W.
    pub kl_total: Option<f64>,
    pub delta_s_hot: f64,
    pub delta_s_cold: f64,
    pub s_final_hot: f64,
    pub s_final_cold: f64,
    pub e_initial_hot: f64,
    pub e_initial_cold: f64,
    pub e_final_hot: f64,
    pub e_final_cold: f64,
    pub s_initial_hot: f64,
    pub s_initial_cold: f64,
    /// product-approximation residual bound (tail + counting terms)
    pub l1_residual: f64,
    pub y_tail: f64,
    pub x_deficit: f64,
    /// final-state mass handled by run aggregation instead of exact
    /// window splits (blockwise only)
    pub truncated_mass: f64,
    /// audit bound on the energy error of aggregated far regions
    pub energy_error_bound: f64,
    /// audit bound on the entropy error of the capped comb corrections
    pub entropy_error_bound: f64,
    /// worst final-marginal normalization deviation (exact mode)
    pub marginal_sum_dev: Option<f64>,
    pub regime_ok: bool,
    pub regime_margin: f64,
    pub ceil_used: CeilMode,
    /// which reference rounding makes kl closest to d_x + d_y (exact mode)
    pub decomposition_pick: Option<CeilMode>,
    pub approx: Option<BlockwiseApprox>,
}

/// Residual bound of the product approximation, per its two sources.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct L1Bound {
    /// cold-bath mass beyond d^(n-m)
    pub tail_term: f64,
    /// d^m (n+1)^(d-1) (max site prob)^n counting bound
    pub eq_count_term: f64,
    pub total: f64,
}

/// Counting-term + tail bound on the L1 distance between the swapped
/// joint state and the product approximation.
pub fn l1_residual_bound(
    hot: &SortedSpectrum,
    cold: &SortedSpectrum,
    m: u32,
    max_p_hot_site: f64,
) -> L1Bound {
    let n = hot.n;
    let d = hot.d;
    let l_win = cold.total_states() / BigUint::from(d).pow(m);
    let tail: f64 = sweeps::tail_beyond::<f64>(cold, &l_win);
    let ln_term = m as f64 * (d as f64).ln()
        + (d as f64 - 1.0) * ((n + 1) as f64).ln()
        + n as f64 * max_p_hot_site.ln();
    let eq = ln_term.exp();
    L1Bound { tail_term: tail, eq_count_term: eq, total: tail + eq }
}

/// The digit swap on a pair of sorted indices (both in [0, d^n)).
pub fn g2_swap(i: u128, j: u128, m: u32, n: u32, d: u32) -> Result<(u128, u128)> {
    if m >= n {
        return Err(Error::invalid("m must be < n"));
    }
    let dn = (d as u128)
        .checked_pow(n)
        .ok_or_else(|| Error::invalid("d^n exceeds 128 bits"))?;
    if i >= dn || j >= dn {
        return Err(Error::invalid("index out of range"));
    }
    let dm = (d as u128).pow(m);
    let lw = dn / dm;
    Ok(((i / dm) + (j / lw) * lw, (j % lw) * dm + (i % dm)))
}

/// Divergence sum of the hot-bath compression (the `kinji`-style sum).
pub fn d_x_n(spec: &SortedSpectrum, m: u32, ceil: CeilMode, prec: Precision) -> f64 {
    match prec {
        Precision::Double => sweeps::d_x_sum::<f64>(spec, m, ceil == CeilMode::Ceil),
        Precision::Extended => {
            sweeps::d_x_sum::<Dd>(spec, m, ceil == CeilMode::Ceil).to_f64()
        }
    }
}

/// Divergence sum of the cold-bath stretch, plus the mass of the
/// extension region j >= d^(n-m).
pub fn d_y_n(spec: &SortedSpectrum, m: u32, prec: Precision) -> (f64, f64) {
    match prec {
        Precision::Double => sweeps::d_y_sum::<f64>(spec, m),
        Precision::Extended => {
            let (v, t) = sweeps::d_y_sum::<Dd>(spec, m);
            (v.to_f64(), t.to_f64())
        }
    }
}

/// Product-approximation descriptors of the final marginals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductApprox {
    /// renormalization surplus of the compressed hot marginal (>= 0)
    pub x_deficit: f64,
    /// missing mass of the truncated cold marginal (>= 0)
    pub y_tail: f64,
    pub s_x_tilde: f64,
    pub s_y_tilde: f64,
    /// exact L1 distance of the swapped joint from the product form:
    /// tail + (1 - tail) * deficit
    pub l1_exact: f64,
    /// densified marginals (hot, cold) when the space is small
    pub dense: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn product_approx_marginals(
    hot: &SortedSpectrum,
    cold: &SortedSpectrum,
    m: u32,
) -> Result<ProductApprox> {
    let d = hot.d;
    let dm = BigUint::from(d).pow(m);
    let l_win = hot.total_states() / &dm;
    let deficit: f64 = sweeps::x_deficit::<f64>(hot, m);
    let tail: f64 = sweeps::tail_beyond::<f64>(cold, &l_win);
    let s_x = sweeps::compressed_entropy::<f64>(hot, m);
    let m_ln_d = m as f64 * (d as f64).ln();
    let s_y = m_ln_d * (1.0 - tail) + sweeps::entropy_below::<f64>(cold, &l_win);
    let dense = if u64::try_from(hot.total_states()).map_or(false, |t| t <= 1 << 20) {
        let lx = crate::spectrum::expand_dense(hot, 1 << 20)?;
        let ly = crate::spectrum::expand_dense(cold, 1 << 20)?;
        let dm_u = u64::try_from(&dm).unwrap() as usize;
        let lw_u = lx.len() / dm_u;
        let mut px = vec![0.0f64; lx.len()];
        for a in 0..lw_u {
            px[a] = dm_u as f64 * lx[a * dm_u].exp();
        }
        let mut py = vec![0.0f64; ly.len()];
        for j in 0..ly.len() {
            py[j] = ly[j / dm_u].exp() / dm_u as f64;
        }
        Some((px, py))
    } else {
        None
    };
    Ok(ProductApprox {
        x_deficit: deficit,
        y_tail: tail,
        s_x_tilde: s_x,
        s_y_tilde: s_y,
        l1_exact: tail + (1.0 - tail) * deficit,
        dense,
    })
}

struct Parts {
    e_x0: f64,
    e_y0: f64,
    s_x0: f64,
    s_y0: f64,
    e_x1: f64,
    e_y1: f64,
    s_x1: f64,
    s_y1: f64,
    d_x_ceil: f64,
    d_x_floor: f64,
    d_y: f64,
    y_tail: f64,
    x_def: f64,
    d_tilde_x: f64,
    d_tilde_y: f64,
    kl_direct: Option<f64>,
    truncated: f64,
    marginal_dev: Option<f64>,
    energy_err: f64,
    entropy_err: f64,
}

fn run_exact<R: Real>(x: &SortedSpectrum, y: &SortedSpectrum, m: u32) -> Result<Parts> {
    let (p, _, _) = dense::eval_dense::<R>(x, y, m, EXACT_CAP_STATES)?;
    // segment sums are exact finite sums too; use them for the divergence
    // pieces so exact and blockwise modes report identical definitions
    Ok(Parts {
        e_x0: p.e_x0.to_f64(),
        e_y0: p.e_y0.to_f64(),
        s_x0: p.s_x0.to_f64(),
        s_y0: p.s_y0.to_f64(),
        e_x1: p.e_x1.to_f64(),
        e_y1: p.e_y1.to_f64(),
        s_x1: p.s_x1.to_f64(),
        s_y1: p.s_y1.to_f64(),
        d_x_ceil: sweeps::d_x_sum::<R>(x, m, true).to_f64(),
        d_x_floor: sweeps::d_x_sum::<R>(x, m, false).to_f64(),
        d_y: sweeps::d_y_sum::<R>(y, m).0.to_f64(),
        y_tail: {
            let l_win = y.total_states() / BigUint::from(y.d).pow(m);
            sweeps::tail_beyond::<R>(y, &l_win).to_f64()
        },
        x_def: sweeps::x_deficit::<R>(x, m).to_f64(),
        d_tilde_x: sweeps::d_tilde_x::<R>(x, m).to_f64(),
        d_tilde_y: sweeps::d_tilde_y::<R>(y, m).to_f64(),
        kl_direct: Some(p.kl.to_f64()),
        truncated: 0.0,
        marginal_dev: Some(
            (p.marg_x_sum.to_f64() - 1.0)
                .abs()
                .max((p.marg_y_sum.to_f64() - 1.0).abs()),
        ),
        energy_err: 0.0,
        entropy_err: 0.0,
    })
}

fn run_blockwise<R: Real>(x: &SortedSpectrum, y: &SortedSpectrum, m: u32) -> Result<Parts> {
    let p = blockwise::eval_blockwise::<R>(x, y, m)?;
    Ok(Parts {
        e_x0: p.e_x0.to_f64(),
        e_y0: p.e_y0.to_f64(),
        s_x0: p.s_x0.to_f64(),
        s_y0: p.s_y0.to_f64(),
        e_x1: p.e_x1.to_f64(),
        e_y1: p.e_y1.to_f64(),
        s_x1: p.s_x1.to_f64(),
        s_y1: p.s_y1.to_f64(),
        d_x_ceil: p.d_x_ceil.to_f64(),
        d_x_floor: p.d_x_floor.to_f64(),
        d_y: p.d_y.to_f64(),
        y_tail: p.y_tail.to_f64(),
        x_def: p.x_def.to_f64(),
        d_tilde_x: p.d_tilde_x.to_f64(),
        d_tilde_y: p.d_tilde_y.to_f64(),
        kl_direct: None,
        truncated: p.truncated.to_f64(),
        marginal_dev: None,
        energy_err: p.energy_err.to_f64(),
        entropy_err: p.entropy_err.to_f64(),
    })
}

fn h2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        -t * t.ln() - (1.0 - t) * (1.0 - t).ln()
    }
}

/// Runs the protocol and reports every measured quantity.
pub fn apply_protocol(config: &ProtocolConfig) -> Result<ProtocolOutcome> {
    let x = build_sorted_spectrum(&config.hot)?;
    let y = build_sorted_spectrum(&config.cold)?;
    let mode = config.resolve_mode();
    let prec = config.resolve_precision();
    let n = config.hot.n;
    let d = config.hot.d();
    let (bh, bl) = (config.hot.beta, config.cold.beta);
    let max_p_hot = crate::bath::gibbs_site_probs(&config.hot.site, bh)?
        .into_iter()
        .fold(0.0f64, f64::max);
    let bound = l1_residual_bound(&x, &y, config.m, max_p_hot);

    if config.m == 0 {
        let s_x0 = crate::bath::entropy_of(&config.hot);
        let s_y0 = crate::bath::entropy_of(&config.cold);
        let e_x0 = (x.n as f64) * config.hot.site.mean_energy(bh).to_f64();
        let e_y0 = (y.n as f64) * config.cold.site.mean_energy(bl).to_f64();
        return Ok(ProtocolOutcome {
            n,
            d,
            beta_hot: bh,
            beta_cold: bl,
            m: 0,
            mode_used: mode,
            precision_used: prec,
            work: 0.0,
            heat_hot: 0.0,
            heat_cold_released: 0.0,
            eta: None,
            d_x: 0.0,
            d_y: 0.0,
            d_x_floor: 0.0,
            kl_total: Some(0.0),
            delta_s_hot: 0.0,
            delta_s_cold: 0.0,
            s_final_hot: s_x0,
            s_final_cold: s_y0,
            e_initial_hot: e_x0,
            e_initial_cold: e_y0,
            e_final_hot: e_x0,
            e_final_cold: e_y0,
            s_initial_hot: s_x0,
            s_initial_cold: s_y0,
            l1_residual: bound.total,
            y_tail: 0.0,
            x_deficit: 0.0,
            truncated_mass: 0.0,
            energy_error_bound: 0.0,
            entropy_error_bound: 0.0,
            marginal_sum_dev: None,
            regime_ok: config.regime_ok,
            regime_margin: config.regime_margin,
            ceil_used: config.ceil,
            decomposition_pick: None,
            approx: None,
        });
    }

    let parts = match (mode, prec) {
        (Mode::Exact, Precision::Double) => run_exact::<f64>(&x, &y, config.m)?,
        (Mode::Exact, Precision::Extended) => run_exact::<Dd>(&x, &y, config.m)?,
        (Mode::Blockwise, Precision::Double) => run_blockwise::<f64>(&x, &y, config.m)?,
        (Mode::Blockwise, Precision::Extended) => run_blockwise::<Dd>(&x, &y, config.m)?,
        (Mode::Auto, _) => unreachable!(),
    };

    let q_hot = parts.e_x0 - parts.e_x1;
    let de_cold = parts.e_y1 - parts.e_y0;
    let work = q_hot - de_cold;
    let eta = if q_hot != 0.0 { Some(work / q_hot) } else { None };
    let kl = parts
        .kl_direct
        .unwrap_or((bl - bh) * q_hot - bl * work);

    let d_x = match config.ceil {
        CeilMode::Ceil => parts.d_x_ceil,
        CeilMode::Floor => parts.d_x_floor,
    };

    let decomposition_pick = parts.kl_direct.map(|k| {
        let err_c = (k - parts.d_x_ceil - parts.d_y).abs();
        let err_f = (k - parts.d_x_floor - parts.d_y).abs();
        if err_c <= err_f {
            CeilMode::Ceil
        } else {
            CeilMode::Floor
        }
    });

    // approximation-formula values with propagated bounds
    let m_ln_d = config.m as f64 * (d as f64).ln();
    let q_hot_f = (m_ln_d - d_x) / bh;
    let kl_f = d_x + parts.d_y;
    let eta_f = if q_hot_f != 0.0 {
        Some(1.0 - bh / bl - kl_f / (bl * q_hot_f))
    } else {
        None
    };
    let eps = bound.total;
    let lam_x = x.log_prob_min().to_f64().abs();
    let lam = lam_x + y.log_prob_min().to_f64().abs();
    let ln_dim = 2.0 * n as f64 * (d as f64).ln();
    let t = (eps / 2.0).min(1.0);
    let fannes = (t * ln_dim + h2(t)).min(ln_dim);
    let slack = (parts.x_def + parts.y_tail)
        * (lam + parts.d_tilde_x.abs() + parts.d_tilde_y.abs() + ln_dim);
    let kl_bound = if mode == Mode::Blockwise || parts.kl_direct.is_some() {
        fannes
            + eps * lam
            + (parts.d_tilde_x - d_x).abs()
            + (parts.d_tilde_y - parts.d_y).abs()
            + slack
    } else {
        f64::INFINITY
    };
    let q_bound = ((t * ln_dim / 2.0 + h2(t)).min(ln_dim / 2.0)
        + eps * lam_x
        + (parts.d_tilde_x - d_x).abs()
        + parts.x_def * (lam_x + parts.d_tilde_x.abs() + ln_dim / 2.0))
        / bh;

    let approx = Some(BlockwiseApprox {
        q_hot: q_hot_f,
        work: eta_f.map_or(0.0, |e| e * q_hot_f),
        eta: eta_f,
        kl: kl_f,
        ds_hot: -m_ln_d,
        ds_cold: m_ln_d,
        kl_bound,
        q_bound,
    });

    Ok(ProtocolOutcome {
        n,
        d,
        beta_hot: bh,
        beta_cold: bl,
        m: config.m,
        mode_used: mode,
        precision_used: prec,
        work,
        heat_hot: q_hot,
        heat_cold_released: de_cold,
        eta,
        d_x,
        d_y: parts.d_y,
        d_x_floor: parts.d_x_floor,
        kl_total: Some(kl),
        delta_s_hot: parts.s_x1 - parts.s_x0,
        delta_s_cold: parts.s_y1 - parts.s_y0,
        s_final_hot: parts.s_x1,
        s_final_cold: parts.s_y1,
        e_initial_hot: parts.e_x0,
        e_initial_cold: parts.e_y0,
        e_final_hot: parts.e_x1,
        e_final_cold: parts.e_y1,
        s_initial_hot: parts.s_x0,
        s_initial_cold: parts.s_y0,
        l1_residual: bound.total,
        y_tail: parts.y_tail,
        x_deficit: parts.x_def,
        truncated_mass: parts.truncated,
        energy_error_bound: parts.energy_err,
        entropy_error_bound: parts.entropy_err,
        marginal_sum_dev: parts.marginal_dev,
        regime_ok: config.regime_ok,
        regime_margin: config.regime_margin,
        ceil_used: config.ceil,
        decomposition_pick,
        approx,
    })
}
