//! Exact-mode evaluation by dense enumeration: materializes the sorted
//! per-index log-probabilities and energies, builds the four factor
//! marginals of the swapped state, and sums every outcome quantity
//! directly. This is the oracle the segment engine is checked against,
//! so it shares no index arithmetic with it.

use crate::error::{Error, Result};
use crate::num::{Accumulator, Real};
use crate::spectrum::SortedSpectrum;

/// Dense per-index tables for one bath.
pub(crate) struct DenseBath<R> {
    pub lp: Vec<R>,
    pub h: Vec<R>,
}

pub(crate) fn expand_bath<R: Real>(spec: &SortedSpectrum, cap: u64) -> Result<DenseBath<R>> {
    let total = spec.total_states();
    let total_u = u64::try_from(total)
        .map_err(|_| Error::resource("state space too large for exact mode"))?;
    if total_u > cap {
        return Err(Error::resource(format!(
            "exact mode needs {total_u} states > cap {cap}"
        )));
    }
    let mut lp = Vec::with_capacity(total_u as usize);
    let mut h = Vec::with_capacity(total_u as usize);
    let mut cur = spec.cursor();
    loop {
        let c = u64::try_from(cur.count()).unwrap() as usize;
        let l = R::from_dd(cur.log_prob());
        let e = R::from_dd(cur.energy()?);
        lp.extend(std::iter::repeat(l).take(c));
        h.extend(std::iter::repeat(e).take(c));
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    Ok(DenseBath { lp, h })
}

/// Everything the exact path measures about one protocol application.
pub(crate) struct DenseParts<R> {
    pub e_x0: R,
    pub e_y0: R,
    pub s_x0: R,
    pub s_y0: R,
    pub e_x1: R,
    pub e_y1: R,
    /// final marginal entropies via the factor structure
    pub s_x1: R,
    pub s_y1: R,
    /// KL of the swapped joint state from the initial one, by direct sums
    pub kl: R,
    /// sums of the final marginals (playback of bi-stochasticity)
    pub marg_x_sum: R,
    pub marg_y_sum: R,
}

/// d^n as u64 (caller guarantees it fits).
fn pow_u64(d: u32, e: u32) -> u64 {
    (d as u64).pow(e)
}

pub(crate) fn eval_dense<R: Real>(
    x: &SortedSpectrum,
    y: &SortedSpectrum,
    m: u32,
    cap: u64,
) -> Result<(DenseParts<R>, DenseBath<R>, DenseBath<R>)> {
    let n = x.n;
    let d = x.d;
    let bx = expand_bath::<R>(x, cap)?;
    let by = expand_bath::<R>(y, cap)?;
    let dn = pow_u64(d, n);
    let dm = pow_u64(d, m);
    let lw = dn / dm; // d^(n-m)

    // Factor marginals of the swapped joint:
    //   final hot index  i' = a + t*lw   with weight A[a] * B[t]
    //   final cold index j' = r*dm + l   with weight C[l] * D[r]
    let mut a_fac = vec![R::zero(); lw as usize];
    let mut b_fac = vec![R::zero(); dm as usize];
    let mut c_fac = vec![R::zero(); dm as usize];
    let mut d_fac = vec![R::zero(); lw as usize];
    for i in 0..dn {
        let p = bx.lp[i as usize].exp();
        a_fac[(i / dm) as usize] = a_fac[(i / dm) as usize] + p;
        c_fac[(i % dm) as usize] = c_fac[(i % dm) as usize] + p;
    }
    for j in 0..dn {
        let p = by.lp[j as usize].exp();
        b_fac[(j / lw) as usize] = b_fac[(j / lw) as usize] + p;
        d_fac[(j % lw) as usize] = d_fac[(j % lw) as usize] + p;
    }

    let mut e_x0 = R::Acc::default();
    let mut s_x0 = R::Acc::default();
    let mut cross_x_h = R::Acc::default();
    let mut cross_x_lp = R::Acc::default();
    let mut plnp_x = R::Acc::default();
    let mut marg_x = R::Acc::default();
    for i in 0..dn {
        let p = bx.lp[i as usize].exp();
        e_x0.add(p * bx.h[i as usize]);
        s_x0.add(-(p * bx.lp[i as usize]));
        plnp_x.add(p * bx.lp[i as usize]);
    }
    // final hot marginal: index a + t*lw
    for t in 0..dm {
        for a in 0..lw {
            let w = a_fac[a as usize] * b_fac[t as usize];
            let idx = (a + t * lw) as usize;
            cross_x_h.add(w * bx.h[idx]);
            cross_x_lp.add(w * bx.lp[idx]);
            marg_x.add(w);
        }
    }

    let mut e_y0 = R::Acc::default();
    let mut s_y0 = R::Acc::default();
    let mut cross_y_h = R::Acc::default();
    let mut cross_y_lp = R::Acc::default();
    let mut plnp_y = R::Acc::default();
    let mut marg_y = R::Acc::default();
    for j in 0..dn {
        let p = by.lp[j as usize].exp();
        e_y0.add(p * by.h[j as usize]);
        s_y0.add(-(p * by.lp[j as usize]));
        plnp_y.add(p * by.lp[j as usize]);
    }
    // final cold marginal: index r*dm + l
    for r in 0..lw {
        for l in 0..dm {
            let w = c_fac[l as usize] * d_fac[r as usize];
            let idx = (r * dm + l) as usize;
            cross_y_h.add(w * by.h[idx]);
            cross_y_lp.add(w * by.lp[idx]);
            marg_y.add(w);
        }
    }

    // KL of the permuted joint from the initial product:
    // sum_z P(z) [ln P(z) - ln P(g2 z)] with the X/Y parts separated.
    let kl = (plnp_x.total() - cross_x_lp.total()) + (plnp_y.total() - cross_y_lp.total());

    let ent = |v: &[R]| -> R {
        let mut acc = R::Acc::default();
        for &p in v {
            if p > R::zero() {
                acc.add(-(p * p.ln()));
            }
        }
        acc.total()
    };

    Ok((
        DenseParts {
            e_x0: e_x0.total(),
            e_y0: e_y0.total(),
            s_x0: s_x0.total(),
            s_y0: s_y0.total(),
            e_x1: cross_x_h.total(),
            e_y1: cross_y_h.total(),
            s_x1: ent(&a_fac) + ent(&b_fac),
            s_y1: ent(&c_fac) + ent(&d_fac),
            kl,
            marg_x_sum: marg_x.total(),
            marg_y_sum: marg_y.total(),
        },
        bx,
        by,
    ))
}
