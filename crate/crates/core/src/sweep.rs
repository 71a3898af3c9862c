//! Grid sweeps: evaluate the thermodynamic bound, the protocol, the
//! expansions and the storage report on (n, q) grids, producing records
//! with a fixed CSV schema and a newline-delimited JSON form.

use crate::bath::{moments, BathSpec, SiteSpectrum};
use crate::error::{Error, Result};
use crate::expansion::{self, block_size_exact, block_size_m};
use crate::num::Precision;
use crate::protocol::{apply_protocol, Mode, ProtocolConfig, ProtocolOutcome};
use crate::storage::{lift_report, work_distribution};
use crate::thermo::{eta_thermo, EngineConfig};
use serde::{Deserialize, Serialize};

/// The fixed CSV column set.
pub const CSV_HEADER: &str = "n,d,beta_hot,beta_cold,q_target,m,q_hot,work,eta_protocol,\
eta_thermo,eta_carnot,eta_exp1,eta_exp2,d_x,d_y,kl_total,l1_residual,ds_hot,ds_cold,\
s_storage,a_hot,a_cold,a_storage,mode,precision";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Record {
    pub n: u32,
    pub d: u32,
    pub beta_hot: f64,
    pub beta_cold: f64,
    pub q_target: f64,
    pub m: u32,
    pub q_hot: f64,
    pub work: f64,
    pub eta_protocol: Option<f64>,
    /// thermodynamic optimum at the achieved heat (target heat if the
    /// protocol moved none); None when the implicit equations are
    /// infeasible at this point
    pub eta_thermo: Option<f64>,
    pub eta_carnot: f64,
    pub eta_exp1: f64,
    pub eta_exp2: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub kl_total: Option<f64>,
    pub l1_residual: f64,
    pub ds_hot: f64,
    pub ds_cold: f64,
    pub s_storage: Option<f64>,
    pub a_hot: Option<f64>,
    pub a_cold: Option<f64>,
    pub a_storage: Option<f64>,
    pub mode: String,
    pub precision: String,
    // auxiliary fields (JSON only; not part of the CSV schema)
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub regime_ok: bool,
    pub regime_margin: f64,
    pub y_tail: f64,
    pub x_deficit: f64,
    /// eta_thermo - eta_protocol, when both exist
    pub eta_gap: Option<f64>,
    /// d1 * q_hot / n^2
    pub d1_term: Option<f64>,
    /// (eta_gap - d1_term) * (n / q_hot)^3: the cubic-correction scale
    pub scaling_residual: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

impl Record {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{},{},{:.17e},{:.17e},{:.17e},\
             {:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{},{},{},{},{},{}",
            self.n,
            self.d,
            self.beta_hot,
            self.beta_cold,
            self.q_target,
            self.m,
            self.q_hot,
            self.work,
            fmt_opt(self.eta_protocol),
            fmt_opt(self.eta_thermo),
            self.eta_carnot,
            self.eta_exp1,
            self.eta_exp2,
            self.d_x,
            self.d_y,
            fmt_opt(self.kl_total),
            self.l1_residual,
            self.ds_hot,
            self.ds_cold,
            fmt_opt(self.s_storage),
            fmt_opt(self.a_hot),
            fmt_opt(self.a_cold),
            fmt_opt(self.a_storage),
            self.mode,
            self.precision,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization")
    }
}

/// One sweep point specification.
#[derive(Clone, Debug)]
pub struct PointSpec {
    pub site: SiteSpectrum,
    pub beta_hot: f64,
    pub beta_cold: f64,
    pub n: u32,
    pub q: f64,
    pub mode: Mode,
    pub precision: Option<Precision>,
    /// evaluate the work-value distribution and entropy-energy ratios
    pub with_storage: bool,
}

/// Evaluates everything the record schema wants at one (n, q) point.
pub fn run_point(p: &PointSpec) -> Result<Record> {
    let hot = BathSpec::new(p.site.clone(), p.beta_hot, p.n)?;
    let cold = BathSpec::new(p.site.clone(), p.beta_cold, p.n)?;
    let mh = moments(&p.site, p.beta_hot)?;
    let mc = moments(&p.site, p.beta_cold)?;
    let coeffs = expansion::coeffs(&mh, &mc, p.beta_hot, p.beta_cold);
    let m = block_size_m(p.beta_hot, p.q, p.n, mh.variance, p.site.d())?;
    let m = u32::try_from(m).map_err(|_| Error::invalid("block size overflow"))?;

    let mut cfg = ProtocolConfig::new(hot.clone(), cold.clone(), m, p.mode)?;
    cfg.precision = p.precision;
    let outcome: ProtocolOutcome = apply_protocol(&cfg)?;

    let q_ref = if outcome.heat_hot > 0.0 { outcome.heat_hot } else { p.q };
    let eta_t = EngineConfig::new(hot.clone(), cold.clone(), q_ref)
        .and_then(|c| eta_thermo(&c))
        .map(|s| s.eta_thermo)
        .ok();

    let (s_storage, a_hot, a_cold, a_storage) = if p.with_storage && outcome.heat_hot != 0.0 {
        let wd = work_distribution(&cfg)?;
        match lift_report(&outcome, &wd) {
            Ok(l) => (Some(l.s_storage), Some(l.a_hot), Some(l.a_cold), Some(l.a_storage)),
            Err(_) => (None, None, None, None),
        }
    } else {
        (None, None, None, None)
    };

    let eta_gap = match (eta_t, outcome.eta) {
        (Some(t), Some(p)) => Some(t - p),
        _ => None,
    };
    let d1_term = if outcome.heat_hot > 0.0 {
        Some(coeffs.d1 * outcome.heat_hot / (p.n as f64 * p.n as f64))
    } else {
        None
    };
    let scaling_residual = match (eta_gap, d1_term) {
        (Some(g), Some(t)) if outcome.heat_hot > 0.0 => {
            let r = p.n as f64 / outcome.heat_hot;
            Some((g - t) * r * r * r)
        }
        _ => None,
    };

    Ok(Record {
        n: p.n,
        d: p.site.d(),
        beta_hot: p.beta_hot,
        beta_cold: p.beta_cold,
        q_target: p.q,
        m,
        q_hot: outcome.heat_hot,
        work: outcome.work,
        eta_protocol: outcome.eta,
        eta_thermo: eta_t,
        eta_carnot: 1.0 - p.beta_hot / p.beta_cold,
        eta_exp1: expansion::eta_thermo_expansion(&coeffs, p.beta_hot, p.beta_cold, p.q, p.n, 1),
        eta_exp2: expansion::eta_thermo_expansion(&coeffs, p.beta_hot, p.beta_cold, p.q, p.n, 2),
        d_x: outcome.d_x,
        d_y: outcome.d_y,
        kl_total: outcome.kl_total,
        l1_residual: outcome.l1_residual,
        ds_hot: outcome.delta_s_hot,
        ds_cold: outcome.delta_s_cold,
        s_storage,
        a_hot,
        a_cold,
        a_storage,
        mode: format!("{:?}", outcome.mode_used).to_lowercase(),
        precision: outcome.precision_used.label().to_string(),
        c1: coeffs.c1,
        c2: coeffs.c2,
        d1: coeffs.d1,
        regime_ok: outcome.regime_ok,
        regime_margin: outcome.regime_margin,
        y_tail: outcome.y_tail,
        x_deficit: outcome.x_deficit,
        eta_gap,
        d1_term,
        scaling_residual,
    })
}

/// Geometric integer grid from lo to hi inclusive with `points` samples.
pub fn geometric_grid(lo: u32, hi: u32, points: u32) -> Vec<u32> {
    assert!(lo >= 1 && hi >= lo && points >= 1);
    let mut out = Vec::new();
    for i in 0..points {
        let f = if points == 1 {
            0.0
        } else {
            i as f64 / (points - 1) as f64
        };
        let v = (lo as f64 * (hi as f64 / lo as f64).powf(f)).round() as u32;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// The documented default sweep: two-level baths at inverse temperatures
/// 1/30 and 1/15, heat rule q = 0.3 n^(2/3), n geometric 10^2..10^5.
pub fn fig1_points(with_storage: bool) -> Vec<PointSpec> {
    preset_points(100, 100_000, 25, with_storage)
}

pub fn preset_points(lo: u32, hi: u32, count: u32, with_storage: bool) -> Vec<PointSpec> {
    geometric_grid(lo, hi, count)
        .into_iter()
        .map(|n| PointSpec {
            site: SiteSpectrum::qubit_pm1(),
            beta_hot: 1.0 / 30.0,
            beta_cold: 1.0 / 15.0,
            n,
            q: 0.3 * (n as f64).powf(2.0 / 3.0),
            mode: Mode::Auto,
            precision: None,
            with_storage,
        })
        .collect()
}

/// The fractional part of the block-size argument, and the heat carried by
/// it to leading order: used to separate floor quantization from the
/// genuine higher-order decay of |q_hot - q_target|.
pub fn floor_component(p: &PointSpec, sigma2_hot: f64, m: u32) -> f64 {
    let mu = block_size_exact(p.beta_hot, p.q, p.n, sigma2_hot, p.site.d());
    (mu - m as f64) * (p.site.d() as f64).ln() / p.beta_hot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = geometric_grid(100, 100_000, 25);
        assert_eq!(*g.first().unwrap(), 100);
        assert_eq!(*g.last().unwrap(), 100_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn point_record_small() {
        let p = PointSpec {
            site: SiteSpectrum::qubit_pm1(),
            beta_hot: 1.0 / 30.0,
            beta_cold: 1.0 / 15.0,
            n: 2000,
            q: 0.3 * 2000f64.powf(2.0 / 3.0),
            mode: Mode::Blockwise,
            precision: Some(Precision::Double),
            with_storage: true,
        };
        let r = run_point(&p).unwrap();
        assert!(r.m >= 1);
        assert!(r.q_hot > 0.0);
        let etp = r.eta_protocol.unwrap();
        let ett = r.eta_thermo.unwrap();
        assert!(etp <= ett, "protocol {etp} must not beat the bound {ett}");
        assert!(ett < 0.5);
        // CSV row has the advertised number of columns
        assert_eq!(r.to_csv_row().split(',').count(), CSV_HEADER.split(',').count());
        // JSON parses back
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["n"], 2000);
    }
}
