//! Descending-sorted product distribution of n i.i.d. Gibbs sites, stored
//! as type-class blocks: every index range sharing one probability is one
//! block with an exact big-integer multiplicity.
//!
//! For two-level sites the n+1 binomial blocks are never materialized;
//! cursors regenerate multiplicities with the rolling recurrence
//! C(n,b+1) = C(n,b)(n-b)/(b+1), so n = 10^5 costs megabytes, not
//! gigabytes. Multi-level sites materialize merged composition blocks.

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::num::{bigs::big_pow, Dd};
use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Practical cap on materialized composition blocks.
const MAX_BLOCKS: u128 = 10_000_000;

/// Merge tolerance for equal-probability type classes (double-double sums
/// of identical level multisets agree to ~1e-30; anything closer than this
/// is the same class).
const TIE_TOL: f64 = 1e-20;

#[derive(Clone, Debug)]
enum Store {
    /// beta = 0: one block of d^n equally likely states.
    Uniform,
    /// d = 2, beta > 0: block b has k = n-b particles on the more probable
    /// level; count C(n,b), probabilities strictly decreasing in b.
    Binomial {
        /// log site probability of the more / less probable level
        lp_hi: Dd,
        lp_lo: Dd,
        /// energy of the more / less probable level
        e_hi_prob: f64,
        e_lo_prob: f64,
    },
    /// General d: merged composition blocks, descending log-probability.
    Dense {
        log_probs: Vec<Dd>,
        energies: Vec<Dd>,
        counts: Vec<BigUint>,
        /// exclusive prefix sums; cums[i] = start index of block i,
        /// cums[len] = d^n
        cums: Vec<BigUint>,
    },
}

/// The sorted n-fold product spectrum of one bath.
#[derive(Clone, Debug)]
pub struct SortedSpectrum {
    pub d: u32,
    pub n: u32,
    pub beta: f64,
    /// per-site log partition function
    pub log_z: Dd,
    store: Store,
    total: BigUint,
}

impl SortedSpectrum {
    pub fn total_states(&self) -> &BigUint {
        &self.total
    }

    pub fn num_blocks(&self) -> u64 {
        match &self.store {
            Store::Uniform => 1,
            Store::Binomial { .. } => self.n as u64 + 1,
            Store::Dense { counts, .. } => counts.len() as u64,
        }
    }

    pub fn log_prob_of_block(&self, b: u64) -> Dd {
        match &self.store {
            Store::Uniform => {
                -Dd::from_f64(self.n as f64) * Dd::from_f64(self.d as f64).ln()
            }
            Store::Binomial { lp_hi, lp_lo, .. } => {
                let k = self.n as u64 - b;
                Dd::from_f64(k as f64) * *lp_hi + Dd::from_f64(b as f64) * *lp_lo
            }
            Store::Dense { log_probs, .. } => log_probs[b as usize],
        }
    }

    /// Total energy of states in block b. Requires beta > 0 (a Gibbs
    /// source), since a uniform spectrum does not determine energies.
    pub fn energy_of_block(&self, b: u64) -> Result<Dd> {
        match &self.store {
            Store::Uniform => Err(Error::invalid(
                "uniform spectrum (beta = 0) does not determine energies",
            )),
            Store::Binomial { e_hi_prob, e_lo_prob, .. } => {
                let k = self.n as u64 - b;
                Ok(Dd::from_prod(k as f64, *e_hi_prob)
                    + Dd::from_prod(b as f64, *e_lo_prob))
            }
            Store::Dense { energies, .. } => Ok(energies[b as usize]),
        }
    }

    /// Highest log-probability (block 0).
    pub fn log_prob_max(&self) -> Dd {
        self.log_prob_of_block(0)
    }

    /// Lowest log-probability (last block).
    pub fn log_prob_min(&self) -> Dd {
        self.log_prob_of_block(self.num_blocks() - 1)
    }

    pub fn cursor(&self) -> BlockCursor<'_> {
        let count = match &self.store {
            Store::Uniform => self.total.clone(),
            Store::Binomial { .. } => BigUint::one(),
            Store::Dense { counts, .. } => counts[0].clone(),
        };
        let mut end = BigUint::zero();
        end.clone_from(&count);
        BlockCursor {
            spec: self,
            b: 0,
            start: BigUint::zero(),
            end,
            count,
        }
    }

    /// Log-probability at a 0-based index of the virtual sorted array.
    pub fn value_at(&self, index: &BigUint) -> Result<Dd> {
        if index >= &self.total {
            return Err(Error::invalid(format!(
                "index out of range: {} >= d^n",
                index
            )));
        }
        let mut cur = self.cursor();
        loop {
            if index < cur.end() {
                return Ok(cur.log_prob());
            }
            cur.advance();
        }
    }
}

/// Sequential reader over blocks; owns rolling exact counters so no
/// cumulative table is ever stored.
#[derive(Clone)]
pub struct BlockCursor<'a> {
    spec: &'a SortedSpectrum,
    b: u64,
    start: BigUint,
    end: BigUint,
    count: BigUint,
}

impl<'a> BlockCursor<'a> {
    pub fn block(&self) -> u64 {
        self.b
    }
    pub fn log_prob(&self) -> Dd {
        self.spec.log_prob_of_block(self.b)
    }
    pub fn energy(&self) -> Result<Dd> {
        self.spec.energy_of_block(self.b)
    }
    pub fn count(&self) -> &BigUint {
        &self.count
    }
    /// First index of the current block.
    pub fn start(&self) -> &BigUint {
        &self.start
    }
    /// One past the last index of the current block.
    pub fn end(&self) -> &BigUint {
        &self.end
    }
    pub fn at_last(&self) -> bool {
        self.b + 1 >= self.spec.num_blocks()
    }

    /// Move to the next block. Panics past the end.
    pub fn advance(&mut self) {
        assert!(!self.at_last(), "cursor advanced past final block");
        match &self.spec.store {
            Store::Uniform => unreachable!(),
            Store::Binomial { .. } => {
                let n = self.spec.n as u64;
                std::mem::swap(&mut self.start, &mut self.end);
                // C(n, b+1) = C(n, b) * (n-b) / (b+1), exact
                self.count *= n - self.b;
                self.count /= self.b + 1;
                self.b += 1;
                self.end.clone_from(&self.start);
                self.end += &self.count;
            }
            Store::Dense { counts, cums, .. } => {
                self.b += 1;
                let i = self.b as usize;
                self.count.clone_from(&counts[i]);
                self.start.clone_from(&cums[i]);
                self.end.clone_from(&cums[i + 1]);
            }
        }
    }
}

/// Builds the descending-sorted spectrum of a bath.
pub fn build_sorted_spectrum(bath: &BathSpec) -> Result<SortedSpectrum> {
    let d = bath.d();
    let n = bath.n;
    let total = big_pow(d, n);
    let log_z = bath.site.log_z(bath.beta);

    if bath.beta == 0.0 {
        return Ok(SortedSpectrum {
            d,
            n,
            beta: 0.0,
            log_z,
            store: Store::Uniform,
            total,
        });
    }

    if d == 2 {
        let lps = bath.site.log_probs(bath.beta);
        let lv = bath.site.levels();
        let (ihi, ilo) = if lps[0] > lps[1] { (0, 1) } else { (1, 0) };
        return Ok(SortedSpectrum {
            d,
            n,
            beta: bath.beta,
            log_z,
            store: Store::Binomial {
                lp_hi: lps[ihi],
                lp_lo: lps[ilo],
                e_hi_prob: lv[ihi],
                e_lo_prob: lv[ilo],
            },
            total,
        });
    }

    // Composition count C(n+d-1, d-1) must stay within the block cap.
    let mut ncomp: u128 = 1;
    for i in 1..=(d - 1) as u128 {
        ncomp = ncomp
            .checked_mul(n as u128 + i)
            .ok_or_else(|| Error::resource("composition count overflow"))?
            / i;
        if ncomp > MAX_BLOCKS {
            return Err(Error::resource(format!(
                "composition enumeration needs > {MAX_BLOCKS} blocks"
            )));
        }
    }

    // Factorials up to n for multinomial multiplicities.
    let mut fact = Vec::with_capacity(n as usize + 1);
    fact.push(BigUint::one());
    for i in 1..=n {
        let prev = fact.last().unwrap() * i;
        fact.push(prev);
    }

    let lps = bath.site.log_probs(bath.beta);
    let levels = bath.site.levels();
    let mut raw: Vec<(Dd, Dd, BigUint)> = Vec::with_capacity(ncomp as usize);
    let mut counts_vec = vec![0u32; d as usize];
    enumerate_compositions(n, d, &mut counts_vec, 0, &mut |ks| {
        let mut lp = Dd::ZERO;
        let mut en = Dd::ZERO;
        let mut denom = BigUint::one();
        for (i, &k) in ks.iter().enumerate() {
            lp += Dd::from_f64(k as f64) * lps[i];
            en += Dd::from_prod(k as f64, levels[i]);
            denom *= &fact[k as usize];
        }
        raw.push((lp, en, &fact[n as usize] / denom));
    });

    raw.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    // Merge equal-probability classes.
    let mut log_probs: Vec<Dd> = Vec::new();
    let mut energies: Vec<Dd> = Vec::new();
    let mut counts: Vec<BigUint> = Vec::new();
    for (lp, en, c) in raw {
        if let Some(last) = log_probs.last() {
            let tol = TIE_TOL * (1.0 + last.to_f64().abs());
            if (*last - lp).abs().to_f64() <= tol {
                *counts.last_mut().unwrap() += c;
                continue;
            }
        }
        log_probs.push(lp);
        energies.push(en);
        counts.push(c);
    }

    let mut cums = Vec::with_capacity(counts.len() + 1);
    let mut acc = BigUint::zero();
    cums.push(acc.clone());
    for c in &counts {
        acc += c;
        cums.push(acc.clone());
    }
    debug_assert_eq!(&acc, &total);

    Ok(SortedSpectrum {
        d,
        n,
        beta: bath.beta,
        log_z,
        store: Store::Dense { log_probs, energies, counts, cums },
        total,
    })
}

fn enumerate_compositions(
    remaining: u32,
    d: u32,
    ks: &mut Vec<u32>,
    pos: usize,
    f: &mut impl FnMut(&[u32]),
) {
    if pos == d as usize - 1 {
        ks[pos] = remaining;
        f(ks);
        return;
    }
    for k in 0..=remaining {
        ks[pos] = k;
        enumerate_compositions(remaining - k, d, ks, pos + 1, f);
    }
}

/// Expands the spectrum to a dense per-index log-probability array.
/// Only valid while d^n fits in memory; used by the enumeration oracle.
pub fn expand_dense(spec: &SortedSpectrum, cap: usize) -> Result<Vec<f64>> {
    let total = spec.total_states();
    let cap_big = BigUint::from(cap);
    if total > &cap_big {
        return Err(Error::resource(format!(
            "dense expansion of {total} states exceeds cap {cap}"
        )));
    }
    let mut out = Vec::with_capacity(usize::try_from(u64::try_from(total).unwrap()).unwrap());
    let mut cur = spec.cursor();
    loop {
        let c = u64::try_from(cur.count()).unwrap();
        let lp = cur.log_prob().to_f64();
        out.extend(std::iter::repeat(lp).take(c as usize));
        if cur.at_last() {
            break;
        }
        cur.advance();
    }
    Ok(out)
}
