//! Exact counting of multiplicative structure: the energy E× (quadruples
//! with m1·m2 = n1·n2), the square energy E□ (quadruples whose product is a
//! perfect square), the gcd-parametrized off-diagonal enumeration, the two
//! weighted condition sums feeding the ε-certificate, per-prime
//! largest-prime-factor histograms, and k-fold product-set sizes.
//!
//! Everything here is an exact integer (or an exactly grouped complex sum);
//! no estimates.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::WeightedSet;
use crate::sieve::SieveTable;

/// Above this many ordered pairs, product grouping switches from an
/// associative table to sort-then-scan over the key vector (8 bytes per
/// pair, flat and predictable).
pub const DEFAULT_PAIR_THRESHOLD: u64 = 100_000_000;

/// {re, im} pair used wherever a complex number crosses a serialization
/// boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexPair {
    fn from(z: Complex64) -> Self {
        ComplexPair { re: z.re, im: z.im }
    }
}

impl From<ComplexPair> for Complex64 {
    fn from(p: ComplexPair) -> Self {
        Complex64::new(p.re, p.im)
    }
}

fn nonempty_support<'a>(set: &'a WeightedSet, op: &str) -> Result<&'a [u64]> {
    if set.is_empty() {
        return Err(Error::EmptySet(op.to_string()));
    }
    Ok(set.support())
}

/// Σ_key (multiplicity)² via an associative table.
fn squared_multiplicities_hash(keys: impl Iterator<Item = u64>) -> u128 {
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
    }
    counts.values().map(|&c| (c as u128) * (c as u128)).sum()
}

/// Σ_key (multiplicity)² via sort + run-length scan.
fn squared_multiplicities_sorted(mut keys: Vec<u64>) -> u128 {
    keys.sort_unstable();
    let mut total = 0u128;
    let mut i = 0;
    while i < keys.len() {
        let mut j = i + 1;
        while j < keys.len() && keys[j] == keys[i] {
            j += 1;
        }
        let c = (j - i) as u128;
        total += c * c;
        i = j;
    }
    total
}

fn squared_multiplicities(n_pairs: u64, keys: impl Iterator<Item = u64>) -> u128 {
    if n_pairs <= DEFAULT_PAIR_THRESHOLD {
        squared_multiplicities_hash(keys)
    } else {
        squared_multiplicities_sorted(keys.collect())
    }
}

/// E×(S): the number of quadruples (s1, s2, s3, s4) in S⁴ with
/// s1·s2 = s3·s4, computed as Σ_r c(r)² over ordered-pair products.
pub fn multiplicative_energy(set: &WeightedSet) -> Result<u64> {
    let s = nonempty_support(set, "multiplicative_energy")?;
    let n_pairs = (s.len() as u64) * (s.len() as u64);
    let keys = s.iter().flat_map(|&a| s.iter().map(move |&b| a * b));
    let total = squared_multiplicities(n_pairs, keys);
    u64::try_from(total)
        .map_err(|_| Error::Precondition("multiplicative energy exceeds u64".into()))
}

/// E□(S) for square-free S: the number of quadruples whose product is a
/// perfect square, via grouping ordered pairs by the square-free kernel
/// of their product.
pub fn square_energy(set: &WeightedSet, table: &SieveTable) -> Result<u64> {
    let s = nonempty_support(set, "square_energy")?;
    for &n in s {
        if !table.is_squarefree(n)? {
            return Err(Error::Precondition(format!(
                "square energy needs a square-free set; {n} has a square factor"
            )));
        }
    }
    let n_pairs = (s.len() as u64) * (s.len() as u64);
    let keys = s.iter().flat_map(|&a| {
        s.iter().map(move |&b| {
            let g = a.gcd(&b);
            (a / g) * (b / g)
        })
    });
    let total = squared_multiplicities(n_pairs, keys);
    u64::try_from(total).map_err(|_| Error::Precondition("square energy exceeds u64".into()))
}

/// One off-diagonal solution m1·m2 = n1·n2 with {m1, m2} != {n1, n2},
/// reported as [m1, m2, n1, n2].
pub type Quadruple = [u64; 4];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffdiagonalReport {
    /// Exact number of off-diagonal quadruples (even when truncated).
    pub count: u64,
    pub quadruples: Vec<Quadruple>,
    pub truncated: bool,
}

/// Enumerate the off-diagonal solutions via the parametrization
/// m1 = g·a, m2 = h·b, n1 = g·b, n2 = h·a with (a, b) = 1, a != b, g != h:
/// ordered pairs (m, n), m != n, are grouped by the reduced ratio
/// (a, b) = (m/gcd, n/gcd), and any two distinct g, h in a group combine
/// into one quadruple.
pub fn enumerate_offdiagonal(set: &WeightedSet, cap: usize) -> Result<OffdiagonalReport> {
    let s = nonempty_support(set, "enumerate_offdiagonal")?;
    let mut groups: HashMap<u128, Vec<u64>> = HashMap::new();
    for &m in s {
        for &n in s {
            if m == n {
                continue;
            }
            let g = m.gcd(&n);
            let key = (((m / g) as u128) << 64) | ((n / g) as u128);
            groups.entry(key).or_default().push(g);
        }
    }
    let mut count = 0u128;
    for gs in groups.values() {
        let c = gs.len() as u128;
        count += c * (c - 1);
    }
    let count =
        u64::try_from(count).map_err(|_| Error::Precondition("quadruple count exceeds u64".into()))?;

    let mut keys: Vec<u128> = groups.keys().copied().collect();
    keys.sort_unstable();
    let mut quadruples = Vec::new();
    let mut truncated = false;
    'emit: for key in keys {
        let a = (key >> 64) as u64;
        let b = key as u64;
        let gs = &groups[&key];
        for &g in gs {
            for &h in gs {
                if g == h {
                    continue;
                }
                if quadruples.len() >= cap {
                    truncated = true;
                    break 'emit;
                }
                quadruples.push([g * a, h * b, g * b, h * a]);
            }
        }
    }
    Ok(OffdiagonalReport {
        count,
        quadruples,
        truncated,
    })
}

/// The two condition sums over quadruples with m1·m2 = n1·n2:
///
/// * `cond2`: P(m1) = P(n1), P(m2) = P(n2), m1 != n1, m2 != n2;
/// * `cond3`: P(m1) = P(n1) = P(m2) = P(n2), diagonals included.
///
/// Each quadruple contributes a_{m1}·a_{m2}·conj(a_{n1}·a_{n2}). For
/// indicator sets the exact integer counts are returned alongside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionSums {
    pub cond2: ComplexPair,
    pub cond3: ComplexPair,
    pub cond2_count: Option<u64>,
    pub cond3_count: Option<u64>,
}

pub fn condition_sums(set: &WeightedSet, table: &SieveTable) -> Result<ConditionSums> {
    let s = nonempty_support(set, "condition_sums")?;
    if s[0] < 2 {
        return Err(Error::Precondition(
            "condition sums need all elements >= 2".into(),
        ));
    }
    // pairs (m, n) with P(m) = P(n), keyed by the reduced ratio m/n;
    // a quadruple is a ratio-(a,b) pair joined with a ratio-(b,a) pair
    let mut by_prime: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &n) in s.iter().enumerate() {
        by_prime
            .entry(table.largest_prime_factor(n)?)
            .or_default()
            .push(i);
    }
    let mut all: BTreeMap<(u64, u64), (Complex64, u64)> = BTreeMap::new();
    let mut per_prime: BTreeMap<(u64, u64, u64), (Complex64, u64)> = BTreeMap::new();
    for (&p, idxs) in &by_prime {
        for &i in idxs {
            for &j in idxs {
                let (m, n) = (s[i], s[j]);
                let g = m.gcd(&n);
                let (a, b) = (m / g, n / g);
                let w = set.weight(i) * set.weight(j).conj();
                let e = all.entry((a, b)).or_insert((Complex64::new(0.0, 0.0), 0));
                e.0 += w;
                e.1 += 1;
                let e = per_prime
                    .entry((p, a, b))
                    .or_insert((Complex64::new(0.0, 0.0), 0));
                e.0 += w;
                e.1 += 1;
            }
        }
    }
    let mut cond2 = Complex64::new(0.0, 0.0);
    let mut cond2_count = 0u128;
    for (&(a, b), &(w, c)) in &all {
        if a == b {
            continue; // only (1,1); the fully diagonal pairs
        }
        if let Some(&(w_rev, c_rev)) = all.get(&(b, a)) {
            cond2 += w * w_rev;
            cond2_count += c as u128 * c_rev as u128;
        }
    }
    let mut cond3 = Complex64::new(0.0, 0.0);
    let mut cond3_count = 0u128;
    for (&(p, a, b), &(w, c)) in &per_prime {
        if let Some(&(w_rev, c_rev)) = per_prime.get(&(p, b, a)) {
            cond3 += w * w_rev;
            cond3_count += c as u128 * c_rev as u128;
        }
    }
    let to_count = |v: u128| u64::try_from(v).ok();
    Ok(ConditionSums {
        cond2: cond2.into(),
        cond3: cond3.into(),
        cond2_count: set.is_indicator().then(|| to_count(cond2_count)).flatten(),
        cond3_count: set.is_indicator().then(|| to_count(cond3_count)).flatten(),
    })
}

/// Histogram of largest prime factors over the set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrimeHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub max_count: u64,
    /// Smallest prime attaining the maximum (0 for an empty histogram).
    pub argmax: u64,
}

pub fn largest_prime_histogram(set: &WeightedSet, table: &SieveTable) -> Result<PrimeHistogram> {
    let s = nonempty_support(set, "largest_prime_histogram")?;
    if s[0] < 2 {
        return Err(Error::Precondition(
            "largest-prime histogram needs all elements >= 2".into(),
        ));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &n in s {
        *counts.entry(table.largest_prime_factor(n)?).or_insert(0) += 1;
    }
    let (argmax, max_count) = counts
        .iter()
        .max_by_key(|&(p, c)| (*c, std::cmp::Reverse(*p)))
        .map(|(&p, &c)| (p, c))
        .unwrap_or((0, 0));
    Ok(PrimeHistogram {
        counts,
        max_count,
        argmax,
    })
}

/// |S^{·k}|: the exact size of the k-fold product set, k in {1, 2, 3}.
/// k = 3 requires elements <= 2^21 so triple products stay in u64.
pub fn product_set_size(set: &WeightedSet, k: u32) -> Result<u64> {
    let s = nonempty_support(set, "product_set_size")?;
    match k {
        1 => Ok(s.len() as u64),
        2 => {
            let mut products = Vec::with_capacity(s.len() * (s.len() + 1) / 2);
            for (i, &a) in s.iter().enumerate() {
                for &b in &s[i..] {
                    products.push(a * b);
                }
            }
            products.sort_unstable();
            products.dedup();
            Ok(products.len() as u64)
        }
        3 => {
            let max = *s.last().unwrap();
            if max > 1 << 21 {
                return Err(Error::InvalidParameter(format!(
                    "triple products need elements <= 2^21, got {max}"
                )));
            }
            let mut doubles = Vec::with_capacity(s.len() * (s.len() + 1) / 2);
            for (i, &a) in s.iter().enumerate() {
                for &b in &s[i..] {
                    doubles.push(a * b);
                }
            }
            doubles.sort_unstable();
            doubles.dedup();
            let mut triples = Vec::with_capacity(doubles.len() * s.len());
            for &d in &doubles {
                for &c in s {
                    triples.push(d * c);
                }
            }
            triples.sort_unstable();
            triples.dedup();
            Ok(triples.len() as u64)
        }
        _ => Err(Error::InvalidParameter(format!(
            "product set order {k} outside {{1, 2, 3}}"
        ))),
    }
}

/// All exact counts for one set, serialized with integer counts as u64 and
/// condition sums as {re, im} plus exact integer forms for indicator sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub label: String,
    pub set_size: u64,
    pub e_times: u64,
    /// e_times minus the 2|S|² - |S| diagonal quadruples.
    pub offdiagonal: u64,
    /// Present only when every element is square-free.
    pub e_square: Option<u64>,
    pub cond2: ComplexPair,
    pub cond3: ComplexPair,
    pub cond2_count: Option<u64>,
    pub cond3_count: Option<u64>,
    pub per_prime_max: u64,
    pub per_prime_argmax: u64,
    pub per_prime_histogram: BTreeMap<u64, u64>,
    pub product_set_sizes: BTreeMap<u32, u64>,
}

impl EnergyReport {
    pub fn compute(
        set: &WeightedSet,
        table: &SieveTable,
        product_ks: &[u32],
    ) -> Result<EnergyReport> {
        let n = set.len() as u64;
        let e_times = multiplicative_energy(set)?;
        let diagonal = 2 * n * n - n;
        let all_squarefree = set
            .support()
            .iter()
            .try_fold(true, |acc, &v| table.is_squarefree(v).map(|sf| acc && sf))?;
        let e_square = if all_squarefree {
            Some(square_energy(set, table)?)
        } else {
            None
        };
        let sums = condition_sums(set, table)?;
        let hist = largest_prime_histogram(set, table)?;
        let mut product_set_sizes = BTreeMap::new();
        for &k in product_ks {
            product_set_sizes.insert(k, product_set_size(set, k)?);
        }
        Ok(EnergyReport {
            label: set.label().to_string(),
            set_size: n,
            e_times,
            offdiagonal: e_times - diagonal,
            e_square,
            cond2: sums.cond2,
            cond3: sums.cond3,
            cond2_count: sums.cond2_count,
            cond3_count: sums.cond3_count,
            per_prime_max: hist.max_count,
            per_prime_argmax: hist.argmax,
            per_prime_histogram: hist.counts,
            product_set_sizes,
        })
    }
}
