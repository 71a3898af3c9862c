//! Large-n evaluation of the swap protocol via segment arithmetic.
//!
//! The swapped joint state factorizes over four index components, so the
//! final marginals are products of window masses and residue combs of the
//! initial sorted spectra. Everything below is piecewise over O(blocks)
//! ranges. Cold-bath mass beyond the leading windows decays only
//! logarithmically in the window count, so the far region is never
//! enumerated per window: runs between hot-spectrum boundaries are
//! aggregated exactly, window-interior splits are answered by O(log B)
//! prefix queries, and the capped top-window corrections carry an
//! explicit error bound that is reported, not swallowed.

use crate::error::{Error, Result};
use crate::num::{Accumulator, Dd, Real};
use crate::protocol::sweeps::{
    d_tilde_x, d_tilde_y, d_x_sum, d_y_sum, initial_energy, initial_entropy, tail_beyond,
    window_mass_entropy, x_deficit, MassReader,
};
use crate::spectrum::{BlockCursor, SortedSpectrum};
use num_bigint::BigUint;
use num_traits::Zero;

/// Remaining-mass threshold below which far windows are truncated.
const WINDOW_CUT: f64 = 1e-28;
/// Cap on individually enumerated leading windows.
const T_CAP: usize = 4096;
/// Cap on exactly tracked top-window corrections in the cold marginal.
const T_CAP_COLD: usize = 64;

pub(crate) struct BlockParts<R> {
    pub e_x0: R,
    pub e_y0: R,
    pub s_x0: R,
    pub s_y0: R,
    pub e_x1: R,
    pub e_y1: R,
    pub s_x1: R,
    pub s_y1: R,
    pub d_x_ceil: R,
    pub d_x_floor: R,
    pub d_y: R,
    pub y_tail: R,
    pub x_def: R,
    pub d_tilde_x: R,
    pub d_tilde_y: R,
    /// final-state mass handled by run aggregation instead of exact
    /// window splits
    pub truncated: R,
    /// bound on the energy error of the aggregated far regions
    pub energy_err: R,
    /// bound on the entropy error of the capped comb corrections
    pub entropy_err: R,
}

/// Per-block prefix summary of a sorted spectrum: ln of the cumulative
/// count and the cumulative mass before each block. Mass queries at
/// arbitrary exact positions resolve in O(log blocks) with ~1e-25
/// absolute error (double-double path), which only ever enters small
/// correction terms.
struct PrefixIndex<R> {
    ln_cum: Vec<Dd>,
    cdf: Vec<R>,
    ln_total: Dd,
}

impl<R: Real> PrefixIndex<R> {
    fn build(spec: &SortedSpectrum) -> Self {
        let nb = spec.num_blocks() as usize;
        let mut ln_cum = Vec::with_capacity(nb);
        let mut cdf = Vec::with_capacity(nb + 1);
        cdf.push(R::zero());
        let mut acc = R::Acc::default();
        let mut cur = spec.cursor();
        loop {
            acc.add(seg_mass(cur.count(), R::from_dd(cur.log_prob())));
            cdf.push(acc.total());
            ln_cum.push(crate::num::ln_biguint_dd(cur.end()));
            if cur.at_last() {
                break;
            }
            cur.advance();
        }
        let ln_total = *ln_cum.last().unwrap();
        PrefixIndex { ln_cum, cdf, ln_total }
    }

    /// Block index containing the position with the given ln.
    fn block_of(&self, ln_pos: Dd) -> usize {
        self.ln_cum.partition_point(|c| *c <= ln_pos)
    }

    /// Cumulative mass at indices < pos (pos given with its exact ln).
    fn cdf_at(&self, spec: &SortedSpectrum, pos_is_zero: bool, ln_pos: Dd) -> R {
        if pos_is_zero {
            return R::zero();
        }
        if ln_pos >= self.ln_total {
            return *self.cdf.last().unwrap();
        }
        let k = self.block_of(ln_pos);
        let base = self.cdf[k];
        // partial count pos - c_k from the log difference
        let ln_count = if k == 0 {
            ln_pos
        } else {
            let delta = self.ln_cum[k - 1] - ln_pos; // <= 0
            let e = delta.exp();
            let om = Dd::ONE - e;
            if !(om.hi > 0.0) {
                return base;
            }
            ln_pos + om.ln()
        };
        let lp = R::from_dd(spec.log_prob_of_block(k as u64));
        base + (R::from_dd(ln_count) + lp).exp()
    }
}

#[inline]
fn seg_mass<R: Real>(count: &BigUint, lp: R) -> R {
    if count.is_zero() {
        return R::zero();
    }
    (R::ln_biguint(count) + lp).exp()
}

/// Final hot-bath energy: sum over final indices of
/// A(i' mod L) B(i' div L) h_X(i'), with A the d^m-window masses of the
/// hot spectrum and B the L-window masses of the cold one.
///
/// Leading windows (up to T_CAP, or until the remaining cold mass drops
/// below the cut) get exact interior splits via prefix queries; the far
/// region is aggregated over hot-block runs, which is exact except inside
/// windows straddling a hot boundary — that misattribution is bounded by
/// the local energy span and accumulated into `energy_err`.
fn final_x_energy<R: Real>(
    x: &SortedSpectrum,
    y: &SortedSpectrum,
    xsum: &PrefixIndex<R>,
    l_win: &BigUint,
    dm: &BigUint,
) -> Result<(R, R, R)> {
    let total = x.total_states().clone();
    let mut ycur = MassReader::new(y);
    let mut xcur = x.cursor();
    let mut e_acc = R::Acc::default();
    let mut covered = R::Acc::default();
    let mut tl = BigUint::zero();
    let mut t = 0usize;

    // exact leading windows
    while &tl < &total && t < T_CAP {
        let t_end = &tl + l_win;
        let bt: R = ycur.advance_to(&t_end);
        while xcur.end() <= &tl {
            xcur.advance();
        }
        if bt > R::zero() {
            let mut inner = R::Acc::default();
            // walk hot blocks across [tl, t_end), splitting by A-mass
            let mut prev_frac = R::zero();
            loop {
                let v = xcur.end().min(&t_end).clone();
                let off = (&v - &tl) * dm;
                let frac = if off.is_zero() {
                    R::zero()
                } else {
                    xsum.cdf_at(x, false, crate::num::ln_biguint_dd(&off))
                };
                inner.add((frac - prev_frac) * R::from_dd(xcur.energy()?));
                prev_frac = frac;
                if &v >= &t_end {
                    break;
                }
                xcur.advance();
            }
            e_acc.add(bt * inner.total());
        } else {
            // still move the hot cursor past this window
            while xcur.end() < &t_end {
                xcur.advance();
            }
        }
        covered.add(bt);
        tl = t_end;
        t += 1;
        if (R::one() - covered.total()).to_f64() < WINDOW_CUT {
            break;
        }
    }

    // far region: aggregate hot-block runs; inside any window the split
    // between left/right hot blocks is not resolved, so the error is
    // bounded by the cold mass there times the hot energy span
    let mut err = R::Acc::default();
    let mut truncated = R::Acc::default();
    if tl < total {
        let mut pos = tl.clone();
        loop {
            while xcur.end() <= &pos {
                xcur.advance();
            }
            let v = xcur.end().clone();
            let mass: R = ycur.advance_to(&v);
            let h = R::from_dd(xcur.energy()?);
            e_acc.add(mass * h);
            truncated.add(mass);
            if !xcur.at_last() {
                // a window straddles this hot boundary; the unresolved
                // split misattributes at most the neighboring cold mass
                // across the h-jump to the next block (audit estimate)
                let h_next = R::from_dd(x.energy_of_block(xcur.block() + 1)?);
                err.add((h_next - h).abs() * mass);
            }
            pos = v;
            if pos >= total {
                break;
            }
        }
    }
    Ok((e_acc.total(), truncated.total(), err.total()))
}

/// Residue comb of a spectrum: value(l) = total mass at indices congruent
/// to l modulo `period`, stored as sorted constant pieces with prefix
/// masses. Linear-domain values; use only for small periods (the hot
/// comb), where values sit near 1/period.
pub(crate) struct CombRuns<R> {
    ends: Vec<BigUint>,
    values: Vec<R>,
    prefix: Vec<R>,
}

impl<R: Real> CombRuns<R> {
    /// Cumulative comb mass at residues < l.
    pub fn cdf(&self, l: &BigUint) -> R {
        if l.is_zero() {
            return R::zero();
        }
        let i = self.ends.partition_point(|e| e < l);
        if i >= self.values.len() {
            return *self.prefix.last().unwrap();
        }
        let start = if i == 0 { BigUint::zero() } else { self.ends[i - 1].clone() };
        let count = l - &start;
        let v = self.values[i];
        let part = if count.is_zero() || !(v > R::zero()) {
            R::zero()
        } else {
            (R::ln_biguint(&count) + v.ln()).exp()
        };
        self.prefix[i] + part
    }

    /// Shannon entropy of the comb as a distribution over residues.
    pub fn entropy(&self) -> R {
        let mut acc = R::Acc::default();
        let mut start = BigUint::zero();
        for (e, &v) in self.ends.iter().zip(&self.values) {
            if v > R::zero() {
                let count = e - &start;
                let mass = (R::ln_biguint(&count) + v.ln()).exp();
                acc.add(-(mass * v.ln()));
            }
            start.clone_from(e);
        }
        acc.total()
    }
}

pub(crate) fn comb_runs<R: Real>(spec: &SortedSpectrum, period: &BigUint) -> CombRuns<R> {
    // value(l) = sum_blocks P * (q + [l in cyclic residue interval]),
    // q = floor(count/period); events mark the q+1 intervals.
    let mut base = R::Acc::default();
    let mut events: Vec<(BigUint, R)> = Vec::new();
    let mut cur = spec.cursor();
    loop {
        let q = cur.count() / period;
        let rem = cur.count() % period;
        let lp = R::from_dd(cur.log_prob());
        if !q.is_zero() {
            base.add((R::ln_biguint(&q) + lp).exp());
        }
        if !rem.is_zero() {
            let p = lp.exp();
            if p > R::zero() {
                let s = cur.start() % period;
                let e = (&s + &rem) % period;
                if s < e {
                    events.push((s, p));
                    events.push((e, -p));
                } else {
                    events.push((BigUint::zero(), p));
                    events.push((e, -p));
                    events.push((s, p));
                }
            }
        }
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    events.sort_by(|a, b| a.0.cmp(&b.0));

    let base = base.total();
    let mut ends = Vec::new();
    let mut values = Vec::new();
    let mut prefix = Vec::new();
    let mut running = R::zero();
    let mut mass_before = R::zero();
    let mut pos = BigUint::zero();
    let mut i = 0usize;
    while i <= events.len() {
        while i < events.len() && events[i].0 == pos {
            running = running + events[i].1;
            i += 1;
        }
        let next = if i < events.len() { events[i].0.clone() } else { period.clone() };
        if next > pos {
            let raw = base + running;
            let v = if raw > R::zero() { raw } else { R::zero() };
            let count = &next - &pos;
            prefix.push(mass_before);
            if v > R::zero() {
                mass_before = mass_before + (R::ln_biguint(&count) + v.ln()).exp();
            }
            ends.push(next.clone());
            values.push(v);
            pos = next;
        }
        if i >= events.len() && pos >= *period {
            break;
        }
    }
    prefix.push(mass_before); // sentinel: total comb mass
    CombRuns { ends, values, prefix }
}

/// Positioned forward readers over the cold spectrum's top windows,
/// spawned from one master pass so initialization is O(blocks) total.
fn spawn_top_readers<'a>(
    y: &'a SortedSpectrum,
    l_win: &BigUint,
    count: usize,
) -> Vec<(MassReader<'a>, BigUint)> {
    let mut out = Vec::with_capacity(count);
    let mut master = MassReader::new(y);
    let mut shift = BigUint::zero();
    for _ in 0..count {
        shift += l_win;
        if &shift >= y.total_states() {
            break;
        }
        let _: Dd = master.advance_to(&shift);
        out.push((master.clone(), shift.clone()));
    }
    out
}

/// Final cold-bath energy via the final CDF at each block boundary:
/// F(c) = comb_prefix(r0) + Dbar(r0) * Ccdf(l0), c = r0 dm + l0, where
/// the comb prefix is the main CDF plus top-window corrections (exact up
/// to T_CAP_COLD tops; the remainder is spread proportionally and its
/// energy effect bounded).
fn final_y_energy<R: Real>(
    x_comb: &CombRuns<R>,
    y: &SortedSpectrum,
    l_win: &BigUint,
    dm: &BigUint,
) -> Result<(R, R)> {
    let mut main = MassReader::new(y);
    let mut cdf_main = R::zero();
    let mut tops: Vec<(MassReader, BigUint, R)> = spawn_top_readers(y, l_win, T_CAP_COLD)
        .into_iter()
        .map(|(r, s)| (r, s, R::zero()))
        .collect();
    // mass beyond the tracked tops, spread proportionally to the main CDF
    let edge = l_win * BigUint::from(tops.len() as u64 + 1);
    let rem: R = if edge < *y.total_states() {
        tail_beyond(y, &edge)
    } else {
        R::zero()
    };
    let main_total: R = R::one() - tail_beyond::<R>(y, l_win);

    let mut e_acc = R::Acc::default();
    let mut err = R::Acc::default();
    let mut f_prev = R::zero();
    let mut ycur = y.cursor();
    let mut h_min = f64::INFINITY;
    let mut h_max = f64::NEG_INFINITY;
    loop {
        let c = ycur.end().clone();
        let r0 = &c / dm;
        let l0 = &c % dm;
        let h = R::from_dd(ycur.energy()?);
        h_min = h_min.min(h.to_f64());
        h_max = h_max.max(h.to_f64());
        let f = if &r0 >= l_win {
            cdf_main = cdf_main + main.advance_to(l_win);
            for (reader, shift, acc) in tops.iter_mut() {
                let target = &*shift + l_win;
                *acc = *acc + reader.advance_to(&target);
            }
            cdf_main + tops.iter().fold(R::zero(), |s, t| s + t.2) + rem
        } else {
            cdf_main = cdf_main + main.advance_to(&r0);
            let mut dbar = main.lp_at::<R>(&r0).exp();
            let mut sum = cdf_main;
            for (reader, shift, acc) in tops.iter_mut() {
                let target = &*shift + &r0;
                *acc = *acc + reader.advance_to(&target);
                sum = sum + *acc;
                dbar = dbar + reader.lp_at::<R>(&target).exp();
            }
            if rem > R::zero() && main_total > R::zero() {
                sum = sum + rem * (cdf_main / main_total);
            }
            sum + dbar * x_comb.cdf(&l0)
        };
        let delta = f - f_prev;
        f_prev = f;
        e_acc.add(delta * h);
        if ycur.at_last() {
            break;
        }
        ycur.advance();
    }
    err.add(rem * R::from_f64(h_max - h_min));
    Ok((e_acc.total(), err.total()))
}

/// Entropy of the cold residue comb Dbar(r) = sum_top P_Y(top l_win + r),
/// with tops tracked exactly up to the cap; the neglected far-comb terms
/// shift ln Dbar only where far mass sits, so the error is bounded by the
/// remaining mass times the log-probability range.
fn dbar_entropy<R: Real>(y: &SortedSpectrum, l_win: &BigUint) -> (R, R) {
    struct Top<'a> {
        cur: BlockCursor<'a>,
        shift: BigUint,
    }
    let t_count = {
        // enough tops to push the remainder under the cut, capped
        let mut t = 1usize;
        let mut edge = l_win.clone();
        while t < T_CAP_COLD && &edge < y.total_states() {
            let rem: f64 = tail_beyond(y, &edge);
            if rem < WINDOW_CUT {
                break;
            }
            edge += l_win;
            t += 1;
        }
        t
    };
    let mut topsv: Vec<Top> = Vec::with_capacity(t_count);
    let mut shift = BigUint::zero();
    for _ in 0..t_count {
        if &shift >= y.total_states() {
            break;
        }
        let mut cur = y.cursor();
        while cur.end() <= &shift {
            cur.advance();
        }
        topsv.push(Top { cur, shift: shift.clone() });
        shift += l_win;
    }
    let edge = l_win * BigUint::from(topsv.len() as u64);
    let rem: R = if edge < *y.total_states() {
        tail_beyond(y, &edge)
    } else {
        R::zero()
    };

    let mut acc = R::Acc::default();
    let mut r = BigUint::zero();
    while &r < l_win {
        let mut seg_end = l_win.clone();
        let mut max_lp = f64::NEG_INFINITY;
        for t in &topsv {
            let local = t.cur.end() - &t.shift;
            if local < seg_end {
                seg_end = local;
            }
            max_lp = max_lp.max(t.cur.log_prob().to_f64());
        }
        let max_r = R::from_f64(max_lp);
        let mut s = R::zero();
        for t in &topsv {
            let rel = (R::from_dd(t.cur.log_prob()) - max_r).to_f64();
            if rel > -745.0 {
                s = s + (R::from_dd(t.cur.log_prob()) - max_r).exp();
            }
        }
        let ln_d = max_r + s.ln();
        let count = &seg_end - &r;
        if !count.is_zero() && ln_d.to_f64().is_finite() {
            let mass = (ln_d + R::ln_biguint(&count)).exp();
            acc.add(-(mass * ln_d));
        }
        for t in &mut topsv {
            if &(t.cur.end() - &t.shift) == &seg_end && !t.cur.at_last() {
                t.cur.advance();
            }
        }
        r = seg_end;
    }
    let lp_range = (y.log_prob_max() - y.log_prob_min()).abs().to_f64();
    (acc.total(), rem * R::from_f64(lp_range))
}

pub(crate) fn eval_blockwise<R: Real>(
    x: &SortedSpectrum,
    y: &SortedSpectrum,
    m: u32,
) -> Result<BlockParts<R>> {
    let d = x.d;
    if m as f64 * (d as f64).ln() > 600.0 {
        return Err(Error::resource(
            "block size m too large for linear-domain comb arithmetic",
        ));
    }
    let dm = BigUint::from(d).pow(m);
    let l_win = x.total_states() / &dm;

    let e_x0 = initial_energy::<R>(x);
    let e_y0 = initial_energy::<R>(y);
    let s_x0 = initial_entropy::<R>(x);
    let s_y0 = initial_entropy::<R>(y);

    let d_x_ceil = d_x_sum::<R>(x, m, true);
    let d_x_floor = d_x_sum::<R>(x, m, false);
    let (d_y, y_tail) = d_y_sum::<R>(y, m);
    let x_def = x_deficit::<R>(x, m);

    let s_x1 = window_mass_entropy::<R>(x, dm.clone())
        + window_mass_entropy::<R>(y, l_win.clone());

    let x_comb = comb_runs::<R>(x, &dm);
    let (dbar_s, dbar_err) = dbar_entropy::<R>(y, &l_win);
    let s_y1 = x_comb.entropy() + dbar_s;

    let xsum = PrefixIndex::<R>::build(x);
    let (e_x1, truncated, e_err_x) = final_x_energy::<R>(x, y, &xsum, &l_win, &dm)?;
    let (e_y1, e_err_y) = final_y_energy::<R>(&x_comb, y, &l_win, &dm)?;

    Ok(BlockParts {
        e_x0,
        e_y0,
        s_x0,
        s_y0,
        e_x1,
        e_y1,
        s_x1,
        s_y1,
        d_x_ceil,
        d_x_floor,
        d_y,
        y_tail,
        x_def,
        d_tilde_x: d_tilde_x::<R>(x, m),
        d_tilde_y: d_tilde_y::<R>(y, m),
        truncated,
        energy_err: e_err_x + e_err_y,
        entropy_err: dbar_err,
    })
}
