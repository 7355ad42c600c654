//! Construction of the integer supports and complex weight sequences under
//! study: intervals, shifted primes, sums of two squares, twisted weights
//! e(nθ), and the filters that cut them down to well-behaved subsets.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diophantine::Theta;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::sieve::{SieveTable, MAX_LIMIT};

/// Largest admissible element; pairwise products of elements stay in u64.
pub const ELEMENT_CAP: u64 = MAX_LIMIT;

/// A finite support of integers with complex weights. Indicator sets carry
/// no weight vector; their weights are all exactly 1. Immutable after
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSet {
    label: String,
    support: Vec<u64>,
    weights: Option<Vec<Complex64>>,
}

impl WeightedSet {
    /// Indicator set on the given support (must be strictly increasing,
    /// with 1 <= n <= 2^31). Empty supports are allowed; most consumers
    /// reject them at use time.
    pub fn indicator(label: impl Into<String>, support: Vec<u64>) -> Result<WeightedSet> {
        validate_support(&support)?;
        Ok(WeightedSet {
            label: label.into(),
            support,
            weights: None,
        })
    }

    pub fn with_weights(
        label: impl Into<String>,
        support: Vec<u64>,
        weights: Vec<Complex64>,
    ) -> Result<WeightedSet> {
        validate_support(&support)?;
        if weights.len() != support.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} elements",
                weights.len(),
                support.len()
            )));
        }
        if !weights.iter().all(|w| w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite weight".into()));
        }
        if !support.is_empty() && weights.iter().all(|w| w.norm_sqr() == 0.0) {
            return Err(Error::InvalidParameter(
                "all weights vanish; variance must be positive".into(),
            ));
        }
        Ok(WeightedSet {
            label: label.into(),
            support,
            weights: Some(weights),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn is_indicator(&self) -> bool {
        self.weights.is_none()
    }

    #[inline]
    pub fn weight(&self, idx: usize) -> Complex64 {
        match &self.weights {
            None => Complex64::new(1.0, 0.0),
            Some(w) => w[idx],
        }
    }

    pub fn min_element(&self) -> Option<u64> {
        self.support.first().copied()
    }

    pub fn max_element(&self) -> Option<u64> {
        self.support.last().copied()
    }

    pub fn contains(&self, n: u64) -> bool {
        self.support.binary_search(&n).is_ok()
    }

    /// V = Σ |a_n|². Exactly |support| for indicator and unit-modulus sets.
    pub fn variance(&self) -> f64 {
        match &self.weights {
            None => self.support.len() as f64,
            Some(w) => {
                let all_unit = w
                    .iter()
                    .all(|z| (z.norm_sqr() - 1.0).abs() <= 4.0 * f64::EPSILON);
                if all_unit {
                    self.support.len() as f64
                } else {
                    let mut sum = 0.0f64;
                    let mut comp = 0.0f64;
                    for z in w {
                        kahan_add(&mut sum, &mut comp, z.norm_sqr());
                    }
                    sum
                }
            }
        }
    }

    /// True iff every element of self appears in `other` with an identical
    /// weight.
    pub fn is_subset_of(&self, other: &WeightedSet) -> bool {
        self.support.iter().enumerate().all(|(i, &n)| {
            other
                .support
                .binary_search(&n)
                .map(|j| other.weight(j) == self.weight(i))
                .unwrap_or(false)
        })
    }

    // ---- constructors -------------------------------------------------

    /// Indicator set on {x, ..., x+y}.
    pub fn interval_set(x: u64, y: u64) -> Result<WeightedSet> {
        if x < 1 {
            return Err(Error::InvalidParameter("interval start below 1".into()));
        }
        let end = x
            .checked_add(y)
            .filter(|&e| e <= ELEMENT_CAP)
            .ok_or_else(|| Error::InvalidParameter(format!("interval [{x}, {x}+{y}] overflows the element cap")))?;
        WeightedSet::indicator(format!("interval(x={x},y={y})"), (x..=end).collect())
    }

    /// Indicator set on {p + k : p prime, 2 <= p + k <= n_max}. Shifts
    /// landing at or below 1 are dropped; the label records how many.
    pub fn shifted_primes_set(table: &SieveTable, n_max: u64, k: i64) -> Result<WeightedSet> {
        if k == 0 {
            return Err(Error::InvalidParameter("shift k must be nonzero".into()));
        }
        if n_max < 2 {
            return Err(Error::InvalidParameter("shifted-prime bound below 2".into()));
        }
        // largest prime that can appear: p = n - k for n <= n_max
        let p_hi = if k > 0 {
            n_max.saturating_sub(k as u64)
        } else {
            n_max + k.unsigned_abs()
        };
        if p_hi > table.limit() {
            return Err(Error::OutOfRange {
                value: p_hi,
                limit: table.limit(),
            });
        }
        let mut support = Vec::new();
        let mut dropped = 0u64;
        for p in table.primes_in(2, p_hi)? {
            let shifted = p as i64 + k;
            if shifted >= 2 && shifted as u64 <= n_max {
                support.push(shifted as u64);
            } else if shifted <= 1 {
                dropped += 1;
            }
        }
        support.sort_unstable();
        support.dedup();
        WeightedSet::indicator(
            format!("shifted_primes(n_max={n_max},k={k},dropped={dropped})"),
            support,
        )
    }

    /// Indicator set on the sums of two squares in [x, x+y].
    pub fn two_squares_set(table: &SieveTable, x: u64, y: u64) -> Result<WeightedSet> {
        if x < 1 {
            return Err(Error::InvalidParameter("interval start below 1".into()));
        }
        let end = x
            .checked_add(y)
            .filter(|&e| e <= table.limit())
            .ok_or_else(|| Error::OutOfRange {
                value: x.saturating_add(y),
                limit: table.limit(),
            })?;
        let mut support = Vec::new();
        for n in x..=end {
            if table.is_sum_of_two_squares(n)? {
                support.push(n);
            }
        }
        WeightedSet::indicator(format!("two_squares(x={x},y={y})"), support)
    }

    /// Weights a_n = e(nθ) on {1, ..., n_max}. Phases come from a 128-bit
    /// fixed-point image of θ, so the per-element phase error stays below
    /// 2^-40 even at n ~ 10^9.
    pub fn twisted_weights(n_max: u64, theta: &Theta) -> Result<WeightedSet> {
        if n_max < 1 || n_max > ELEMENT_CAP {
            return Err(Error::InvalidParameter(format!(
                "twisted support bound {n_max} outside [1, 2^31]"
            )));
        }
        let step = theta.frac_fixed_128();
        let mut acc = 0u128;
        let scale = 2f64.powi(-128);
        let mut weights = Vec::with_capacity(n_max as usize);
        for _ in 0..n_max {
            acc = acc.wrapping_add(step);
            let phase = TAU * (acc as f64 * scale);
            weights.push(Complex64::new(phase.cos(), phase.sin()));
        }
        WeightedSet::with_weights(
            format!("twisted(n_max={n_max},theta={theta})"),
            (1..=n_max).collect(),
            weights,
        )
    }

    // ---- filters -------------------------------------------------------

    fn retain_indices(&self, keep: &[usize], label: String) -> WeightedSet {
        WeightedSet {
            label,
            support: keep.iter().map(|&i| self.support[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| keep.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Keep the elements n >= 2 with Ω(n) <= cap.
    pub fn omega_filter(&self, table: &SieveTable, cap: u32) -> Result<WeightedSet> {
        let mut keep = Vec::new();
        for (i, &n) in self.support.iter().enumerate() {
            if n >= 2 && table.big_omega(n)? <= cap {
                keep.push(i);
            }
        }
        Ok(self.retain_indices(&keep, format!("{}|omega<={cap}", self.label)))
    }

    /// Keep n iff Ω(n; min(e^{e^k}, limit)) <= (1/2 + ε)·k for every
    /// integer k in [k_min, k_max].
    pub fn omega_profile_filter(
        &self,
        table: &SieveTable,
        epsilon: f64,
        k_min: i32,
        k_max: i32,
    ) -> Result<WeightedSet> {
        if k_min > k_max {
            return Err(Error::InvalidParameter(format!(
                "profile range [{k_min}, {k_max}] is empty"
            )));
        }
        if !epsilon.is_finite() {
            return Err(Error::InvalidParameter("non-finite epsilon".into()));
        }
        let mut thresholds = Vec::new();
        for k in k_min..=k_max {
            let t = (k as f64).exp().exp();
            let t = if t.is_finite() {
                (t.floor() as u64).min(table.limit())
            } else {
                table.limit()
            };
            thresholds.push((k, t));
        }
        let mut keep = Vec::new();
        'outer: for (i, &n) in self.support.iter().enumerate() {
            for &(k, t) in &thresholds {
                let omega = if t < 2 {
                    0
                } else {
                    table.big_omega_truncated(n, Some(t))?
                };
                if omega as f64 > (0.5 + epsilon) * k as f64 {
                    continue 'outer;
                }
            }
            keep.push(i);
        }
        Ok(self.retain_indices(
            &keep,
            format!("{}|profile(eps={epsilon},k={k_min}..{k_max})", self.label),
        ))
    }

    /// Keep the square-free elements.
    pub fn squarefree_filter(&self, table: &SieveTable) -> Result<WeightedSet> {
        let mut keep = Vec::new();
        for (i, &n) in self.support.iter().enumerate() {
            if table.is_squarefree(n)? {
                keep.push(i);
            }
        }
        Ok(self.retain_indices(&keep, format!("{}|squarefree", self.label)))
    }

    /// Uniformly random subset of size ⌊ρ·|set|⌋, reproducible from the
    /// seed.
    pub fn random_thin(&self, rho: f64, seed: u64) -> Result<WeightedSet> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "thinning density {rho} outside (0, 1]"
            )));
        }
        let n = self.support.len();
        let m = ((rho * n as f64).floor() as usize).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = SplitMix64::new(seed);
        for i in 0..m {
            let j = i + rng.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        let mut keep: Vec<usize> = idx[..m].to_vec();
        keep.sort_unstable();
        Ok(self.retain_indices(
            &keep,
            format!("{}|thin(rho={rho},seed={seed})", self.label),
        ))
    }

    /// Drop elements below 2 (the weight mass lost is visible to the
    /// certificate through condition (1)).
    pub fn restrict_min_two(&self) -> WeightedSet {
        let keep: Vec<usize> = self
            .support
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n >= 2)
            .map(|(i, _)| i)
            .collect();
        if keep.len() == self.support.len() {
            return self.clone();
        }
        self.retain_indices(&keep, format!("{}|min2", self.label))
    }

    // ---- serialization --------------------------------------------------

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SetDoc::from(self)).expect("set serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<WeightedSet> {
        let doc: SetDoc = serde_json::from_value(value.clone())?;
        doc.into_set()
    }

    /// Compact binary form: element count (LE u64), the elements (LE u64),
    /// then re/im weight pairs (LE f64) unless the set is an indicator.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.support.len() as u64).to_le_bytes())?;
        for &n in &self.support {
            w.write_all(&n.to_le_bytes())?;
        }
        if let Some(weights) = &self.weights {
            for z in weights {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(label: impl Into<String>, mut r: R) -> Result<WeightedSet> {
        let mut count_bytes = [0u8; 8];
        r.read_exact(&mut count_bytes)
            .map_err(|_| Error::Parse("set binary: missing count".into()))?;
        let count = u64::from_le_bytes(count_bytes) as usize;
        let mut support = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Parse("set binary: truncated elements".into()))?;
            support.push(u64::from_le_bytes(buf));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let label = label.into();
        if rest.is_empty() {
            WeightedSet::indicator(label, support)
        } else if rest.len() == count * 16 {
            let weights = rest
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            WeightedSet::with_weights(label, support, weights)
        } else {
            Err(Error::Parse(format!(
                "set binary: {} trailing bytes for {count} elements",
                rest.len()
            )))
        }
    }
}

#[inline]
fn kahan_add(sum: &mut f64, comp: &mut f64, value: f64) {
    let y = value - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

fn validate_support(support: &[u64]) -> Result<()> {
    for window in support.windows(2) {
        if window[0] >= window[1] {
            return Err(Error::InvalidParameter(
                "support must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&first) = support.first() {
        if first < 1 {
            return Err(Error::InvalidParameter("elements must be >= 1".into()));
        }
    }
    if let Some(&last) = support.last() {
        if last > ELEMENT_CAP {
            return Err(Error::InvalidParameter(format!(
                "element {last} above the 2^31 cap"
            )));
        }
    }
    Ok(())
}

/// JSON document form: indicator sets omit the weight arrays.
#[derive(Serialize, Deserialize)]
struct SetDoc {
    label: String,
    n: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    re_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    im_weights: Option<Vec<f64>>,
}

impl From<&WeightedSet> for SetDoc {
    fn from(set: &WeightedSet) -> SetDoc {
        SetDoc {
            label: set.label.clone(),
            n: set.support.clone(),
            re_weights: set
                .weights
                .as_ref()
                .map(|w| w.iter().map(|z| z.re).collect()),
            im_weights: set
                .weights
                .as_ref()
                .map(|w| w.iter().map(|z| z.im).collect()),
        }
    }
}

impl SetDoc {
    fn into_set(self) -> Result<WeightedSet> {
        match (self.re_weights, self.im_weights) {
            (None, None) => WeightedSet::indicator(self.label, self.n),
            (Some(re), Some(im)) => {
                if re.len() != im.len() {
                    return Err(Error::Parse("mismatched weight arrays".into()));
                }
                let weights = re
                    .into_iter()
                    .zip(im)
                    .map(|(r, i)| Complex64::new(r, i))
                    .collect();
                WeightedSet::with_weights(self.label, self.n, weights)
            }
            _ => Err(Error::Parse("only one weight array present".into())),
        }
    }
}
