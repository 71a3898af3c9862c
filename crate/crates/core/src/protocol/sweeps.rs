//! Segment kernels over sorted spectra.
//!
//! Every quantity of the swap protocol is an expectation of a function
//! that is piecewise constant over index ranges cut by block boundaries,
//! scaled block boundaries, or window grids. These kernels merge the
//! relevant monotone boundary streams and accumulate
//! `exp(ln count + ln p) * payload` per segment, so cost is O(blocks),
//! never O(d^n). All index arithmetic is exact big-integer work; masses
//! are evaluated in the caller's scalar type.

use crate::num::bigs::ceil_div;
use crate::num::{Accumulator, Real};
use crate::spectrum::{BlockCursor, SortedSpectrum};
use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Mass of a segment: count * exp(log_prob), log-domain safe.
#[inline]
fn seg_mass<R: Real>(count: &BigUint, lp: R) -> R {
    if count.is_zero() {
        return R::zero();
    }
    (R::ln_biguint(count) + lp).exp()
}

/// Forward reader giving cumulative mass between increasing positions.
#[derive(Clone)]
pub struct MassReader<'a> {
    cur: BlockCursor<'a>,
    pos: BigUint,
}

impl<'a> MassReader<'a> {
    pub fn new(spec: &'a SortedSpectrum) -> Self {
        MassReader { cur: spec.cursor(), pos: BigUint::zero() }
    }

    /// Mass of [current position, target); advances to target.
    pub fn advance_to<R: Real>(&mut self, target: &BigUint) -> R {
        let mut acc = R::Acc::default();
        while &self.pos < target {
            while self.cur.end() <= &self.pos {
                self.cur.advance();
            }
            let seg_end = target.min(self.cur.end()).clone();
            let count = &seg_end - &self.pos;
            acc.add(seg_mass(&count, R::from_dd(self.cur.log_prob())));
            self.pos = seg_end;
        }
        acc.total()
    }

    /// Log-probability at `idx` (must be >= current position).
    pub fn lp_at<R: Real>(&mut self, idx: &BigUint) -> R {
        debug_assert!(idx >= &self.pos);
        while self.cur.end() <= idx {
            self.cur.advance();
        }
        R::from_dd(self.cur.log_prob())
    }

}

/// Total mass at indices >= k (computed tail-first, no cancellation).
pub fn tail_beyond<R: Real>(spec: &SortedSpectrum, k: &BigUint) -> R {
    let total = spec.total_states().clone();
    if k >= &total {
        return R::zero();
    }
    let mut cur = spec.cursor();
    while cur.end() <= k {
        cur.advance();
    }
    let mut acc = R::Acc::default();
    let first = cur.end() - k;
    acc.add(seg_mass(&first, R::from_dd(cur.log_prob())));
    while !cur.at_last() {
        cur.advance();
        acc.add(seg_mass(cur.count(), R::from_dd(cur.log_prob())));
    }
    acc.total()
}

/// Hot-bath divergence sum: over all indices i,
/// P(i) * (m ln d + ln P(i) - ln P(ref(i))), ref(i) = ceil(i/d^m)
/// (or floor when `ceil` is false).
pub fn d_x_sum<R: Real>(spec: &SortedSpectrum, m: u32, ceil: bool) -> R {
    if m == 0 {
        return R::zero();
    }
    let dm = BigUint::from(spec.d).pow(m);
    let total = spec.total_states().clone();
    let m_ln_d = R::from_f64(m as f64) * R::from_f64(spec.d as f64).ln();
    let one = BigUint::one();

    let mut blocks = spec.cursor();
    let mut refs = spec.cursor();
    // exclusive end of the current reference piece, in i-space
    let ref_end = |c: &BlockCursor| -> BigUint {
        let e = if ceil {
            // ref = ceil(i/d^m) < c_end  <=>  i <= d^m (c_end - 1)
            if c.end().is_zero() {
                BigUint::zero()
            } else {
                (c.end() - &one) * &dm + &one
            }
        } else {
            // ref = floor(i/d^m) < c_end  <=>  i < d^m c_end
            c.end() * &dm
        };
        e.min(total.clone())
    };

    let mut pos = BigUint::zero();
    let mut cur_ref_end = ref_end(&refs);
    let mut acc = R::Acc::default();
    while pos < total {
        while cur_ref_end <= pos {
            refs.advance();
            cur_ref_end = ref_end(&refs);
        }
        let seg_end = blocks.end().min(&cur_ref_end).clone();
        let count = &seg_end - &pos;
        let lp = R::from_dd(blocks.log_prob());
        let lp_ref = R::from_dd(refs.log_prob());
        let mass = seg_mass(&count, lp);
        acc.add(mass * (m_ln_d + lp - lp_ref));
        pos = seg_end;
        if pos == *blocks.end() && !blocks.at_last() {
            blocks.advance();
        }
    }
    acc.total()
}

/// Cold-bath divergence sum: over all indices j,
/// P(j) * (ln P(j) - m ln d - ln P(d^m j)), where P at indices >= d^n is
/// extended by the final block's log-probability. Also returns the mass
/// at j >= d^(n-m) (the extension region).
pub fn d_y_sum<R: Real>(spec: &SortedSpectrum, m: u32) -> (R, R) {
    let total = spec.total_states().clone();
    if m == 0 {
        return (R::zero(), R::zero());
    }
    let dm = BigUint::from(spec.d).pow(m);
    let l_cap = &total / &dm; // = d^(n-m)
    let m_ln_d = R::from_f64(m as f64) * R::from_f64(spec.d as f64).ln();

    let mut blocks = spec.cursor();
    let mut refs = spec.cursor();
    // ref piece end in j-space: d^m j < c_end <=> j < ceil(c_end / d^m)
    let mut cur_ref_end = ceil_div(refs.end(), &dm);
    let last_lp = R::from_dd(spec.log_prob_min());

    let mut pos = BigUint::zero();
    let mut acc = R::Acc::default();
    while pos < total {
        let (seg_end, lp_ref) = if pos >= l_cap {
            // stretched reference out of range: extension convention
            (total.clone(), last_lp)
        } else {
            while cur_ref_end <= pos {
                refs.advance();
                cur_ref_end = ceil_div(refs.end(), &dm);
            }
            (cur_ref_end.clone().min(l_cap.clone()), R::from_dd(refs.log_prob()))
        };
        let seg_end = blocks.end().min(&seg_end).clone();
        let count = &seg_end - &pos;
        let lp = R::from_dd(blocks.log_prob());
        let mass = seg_mass(&count, lp);
        acc.add(mass * (lp - m_ln_d - lp_ref));
        pos = seg_end;
        if pos == *blocks.end() && !blocks.at_last() {
            blocks.advance();
        }
    }
    (acc.total(), tail_beyond(spec, &l_cap))
}

/// One piece of the window-mass function a -> mass(spec, [a w, (a+1) w)).
pub struct WindowPiece<R> {
    /// exclusive end of the piece, in window units
    pub a_end: BigUint,
    /// ln of the per-window mass on this piece
    pub ln_mass: R,
    /// count-weighted mean of ln P over one window of the piece
    pub avg_lp: R,
}

/// Iterates the window-mass function of a spectrum for window length `w`
/// (which must divide d^n): runs of windows inside one block alternate
/// with single straddling windows.
pub struct WindowMassCursor<'a, R: Real> {
    cur: BlockCursor<'a>,
    w: BigUint,
    a_pos: BigUint,
    a_total: BigUint,
    ln_w: R,
    done: bool,
}

impl<'a, R: Real> WindowMassCursor<'a, R> {
    pub fn new(spec: &'a SortedSpectrum, w: BigUint) -> Self {
        let a_total = spec.total_states() / &w;
        WindowMassCursor {
            cur: spec.cursor(),
            ln_w: R::ln_biguint(&w),
            w,
            a_pos: BigUint::zero(),
            a_total,
            done: false,
        }
    }

    pub fn next_piece(&mut self) -> Option<WindowPiece<R>> {
        if self.done || self.a_pos >= self.a_total {
            return None;
        }
        let g0 = &self.a_pos * &self.w;
        let g1 = &g0 + &self.w;
        while self.cur.end() <= &g0 {
            self.cur.advance();
        }
        if self.cur.end() >= &g1 {
            // run of whole windows within this block
            let a_end = (self.cur.end() / &self.w).min(self.a_total.clone());
            let lp = R::from_dd(self.cur.log_prob());
            let piece = WindowPiece {
                a_end: a_end.clone(),
                ln_mass: self.ln_w + lp,
                avg_lp: lp,
            };
            self.a_pos = a_end;
            return Some(piece);
        }
        // straddling window: log-sum-exp over its parts
        let max_lp = R::from_dd(self.cur.log_prob()); // parts have decreasing lp
        let mut acc = R::Acc::default();
        let mut avg = R::Acc::default();
        let mut part_start = g0.clone();
        loop {
            let part_end = self.cur.end().min(&g1).clone();
            let count = &part_end - &part_start;
            if !count.is_zero() {
                let lp = R::from_dd(self.cur.log_prob());
                acc.add((R::ln_biguint(&count) + (lp - max_lp)).exp());
                avg.add((R::ln_biguint(&count) - self.ln_w).exp() * lp);
            }
            if self.cur.end() >= &g1 || self.cur.at_last() {
                break;
            }
            part_start = part_end;
            self.cur.advance();
        }
        let s = acc.total();
        let ln_mass = if s > R::zero() {
            max_lp + s.ln()
        } else {
            R::from_f64(f64::NEG_INFINITY)
        };
        self.a_pos += BigUint::one();
        Some(WindowPiece {
            a_end: self.a_pos.clone(),
            ln_mass,
            avg_lp: avg.total(),
        })
    }
}

/// Shannon entropy of the window-mass distribution for window length w.
pub fn window_mass_entropy<R: Real>(spec: &SortedSpectrum, w: BigUint) -> R {
    let mut wc = WindowMassCursor::<R>::new(spec, w);
    let mut a_pos = BigUint::zero();
    let mut acc = R::Acc::default();
    while let Some(p) = wc.next_piece() {
        let count = &p.a_end - &a_pos;
        if p.ln_mass.to_f64().is_finite() {
            let mass = seg_mass(&count, p.ln_mass);
            acc.add(-(mass * p.ln_mass));
        }
        a_pos = p.a_end;
    }
    acc.total()
}

/// Sum over windows of d^m * P(a d^m) minus 1: the flat-block
/// renormalization deficit of the compressed approximation (>= 0).
pub fn x_deficit<R: Real>(spec: &SortedSpectrum, m: u32) -> R {
    if m == 0 {
        return R::zero();
    }
    let dm = BigUint::from(spec.d).pow(m);
    let a_total = spec.total_states() / &dm;
    let ln_dm = R::ln_biguint(&dm);
    let mut cur = spec.cursor();
    let mut acc = R::Acc::default();
    let mut a_pos = BigUint::zero();
    while a_pos < a_total {
        // block containing a_pos * d^m
        let g = &a_pos * &dm;
        while cur.end() <= &g {
            cur.advance();
        }
        // windows whose start stays in this block: a < ceil(c_end / d^m)
        let a_end = ceil_div(cur.end(), &dm).min(a_total.clone());
        let count = &a_end - &a_pos;
        acc.add(seg_mass(&count, ln_dm + R::from_dd(cur.log_prob())));
        a_pos = a_end;
    }
    acc.total() - R::one()
}

/// Entropy of the compressed approximation (support d^(n-m), mass
/// d^m P(a d^m)): -sum u ln u with u = d^m P(a d^m). Unnormalized by the
/// deficit, which is reported separately.
pub fn compressed_entropy<R: Real>(spec: &SortedSpectrum, m: u32) -> R {
    if m == 0 {
        return initial_entropy(spec);
    }
    let dm = BigUint::from(spec.d).pow(m);
    let a_total = spec.total_states() / &dm;
    let ln_dm = R::ln_biguint(&dm);
    let mut cur = spec.cursor();
    let mut acc = R::Acc::default();
    let mut a_pos = BigUint::zero();
    while a_pos < a_total {
        let g = &a_pos * &dm;
        while cur.end() <= &g {
            cur.advance();
        }
        let a_end = ceil_div(cur.end(), &dm).min(a_total.clone());
        let count = &a_end - &a_pos;
        let u = ln_dm + R::from_dd(cur.log_prob());
        acc.add(-(seg_mass(&count, u) * u));
        a_pos = a_end;
    }
    acc.total()
}

/// Entropy contribution of indices < k: sum of -P ln P over [0, k).
pub fn entropy_below<R: Real>(spec: &SortedSpectrum, k: &BigUint) -> R {
    let mut cur = spec.cursor();
    let mut acc = R::Acc::default();
    let mut pos = BigUint::zero();
    while &pos < k {
        let seg_end = cur.end().min(k).clone();
        let count = &seg_end - &pos;
        let lp = R::from_dd(cur.log_prob());
        acc.add(-(seg_mass(&count, lp) * lp));
        pos = seg_end;
        if &pos < k {
            cur.advance();
        }
    }
    acc.total()
}

/// Compressed-approximation divergence, exactly:
/// sum_{a < d^(n-m)} d^m P(d^m a) [m ln d + ln P(d^m a) - ln P(a)].
pub(crate) fn d_tilde_x<R: Real>(spec: &SortedSpectrum, m: u32) -> R {
    let dm = BigUint::from(spec.d).pow(m);
    let l_win = spec.total_states() / &dm;
    let m_ln_d = R::from_f64(m as f64) * R::from_f64(spec.d as f64).ln();
    let mut id_cur = spec.cursor();
    let mut ref_cur = spec.cursor(); // block containing d^m * a
    let mut pos = BigUint::zero();
    let mut acc = R::Acc::default();
    while pos < l_win {
        let g = &pos * &dm;
        while ref_cur.end() <= &g {
            ref_cur.advance();
        }
        while id_cur.end() <= &pos {
            id_cur.advance();
        }
        let ref_end = ceil_div(ref_cur.end(), &dm);
        let seg_end = ref_end.min(id_cur.end().clone()).min(l_win.clone());
        let count = &seg_end - &pos;
        let lp_ref = R::from_dd(ref_cur.log_prob());
        let lp_id = R::from_dd(id_cur.log_prob());
        if !count.is_zero() {
            let mass = (R::ln_biguint(&count) + m_ln_d + lp_ref).exp();
            acc.add(mass * (m_ln_d + lp_ref - lp_id));
        }
        pos = seg_end;
    }
    acc.total()
}

/// Stretched-approximation divergence, exactly:
/// sum_{r < d^(n-m)} P(r) [ln P(r) - m ln d - avg_l ln P(r d^m + l)].
pub(crate) fn d_tilde_y<R: Real>(spec: &SortedSpectrum, m: u32) -> R {
    let dm = BigUint::from(spec.d).pow(m);
    let l_win = spec.total_states() / &dm;
    let m_ln_d = R::from_f64(m as f64) * R::from_f64(spec.d as f64).ln();
    let mut id_cur = spec.cursor();
    let mut wc = WindowMassCursor::<R>::new(spec, dm);
    let mut piece = wc.next_piece();
    let mut pos = BigUint::zero();
    let mut acc = R::Acc::default();
    while let Some(p) = &piece {
        if pos >= l_win {
            break;
        }
        while id_cur.end() <= &pos {
            id_cur.advance();
        }
        let seg_end = p.a_end.clone().min(id_cur.end().clone()).min(l_win.clone());
        let count = &seg_end - &pos;
        let lp_id = R::from_dd(id_cur.log_prob());
        if !count.is_zero() {
            let mass = (R::ln_biguint(&count) + lp_id).exp();
            acc.add(mass * (lp_id - m_ln_d - p.avg_lp));
        }
        pos = seg_end;
        if pos == p.a_end {
            piece = wc.next_piece();
        }
    }
    acc.total()
}

/// Entropy of the full sorted distribution by direct segment summation.
pub fn initial_entropy<R: Real>(spec: &SortedSpectrum) -> R {
    let mut cur = spec.cursor();
    let mut acc = R::Acc::default();
    loop {
        let lp = R::from_dd(cur.log_prob());
        acc.add(-(seg_mass(cur.count(), lp) * lp));
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    acc.total()
}

/// Mean total energy of the sorted distribution (beta > 0 sources only).
pub fn initial_energy<R: Real>(spec: &SortedSpectrum) -> R {
    let mut cur = spec.cursor();
    let mut acc = R::Acc::default();
    loop {
        let lp = R::from_dd(cur.log_prob());
        let h = R::from_dd(cur.energy().expect("energy needs beta > 0"));
        acc.add(seg_mass(cur.count(), lp) * h);
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    acc.total()
}
