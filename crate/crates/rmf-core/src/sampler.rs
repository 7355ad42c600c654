//! Reproducible sampling of random multiplicative functions and the
//! normalized sums Z built from them.
//!
//! A realization never stores its values f(p): each one is a pure function
//! of (seed, sample_index, p), so a batch costs O(distinct primes touched)
//! per sample and is bitwise reproducible under any parallel schedule.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix3, unit_f64};
use crate::sets::WeightedSet;
use crate::sieve::SieveTable;

/// The two models: completely multiplicative with f(p) uniform on the unit
/// circle, or multiplicative with f(p) = ±1 and f = 0 off the square-free
/// integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Steinhaus,
    Rademacher,
}

impl Model {
    pub fn parse(s: &str) -> Result<Model> {
        match s.to_ascii_lowercase().as_str() {
            "steinhaus" => Ok(Model::Steinhaus),
            "rademacher" => Ok(Model::Rademacher),
            other => Err(Error::Parse(format!("unknown model {other:?}"))),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Model::Steinhaus => 0x5354_4549_4e48_4155, // "STEINHAU"
            Model::Rademacher => 0x5241_4445_4d41_4348, // "RADEMACH"
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Steinhaus => write!(f, "steinhaus"),
            Model::Rademacher => write!(f, "rademacher"),
        }
    }
}

/// One realization of a random multiplicative function.
#[derive(Clone, Copy, Debug)]
pub struct ModelSample {
    pub model: Model,
    pub seed: u64,
    pub sample_index: u64,
}

impl ModelSample {
    #[inline]
    fn prime_hash(&self, p: u64) -> u64 {
        mix3(self.seed ^ self.model.tag(), self.sample_index, p)
    }

    /// Steinhaus angle u_p in [0, 1); f(p) = e^{2πi·u_p}.
    #[inline]
    fn prime_angle(&self, p: u64) -> f64 {
        unit_f64(self.prime_hash(p))
    }

    /// Rademacher sign for p: ±1 with equal probability.
    #[inline]
    fn prime_sign(&self, p: u64) -> f64 {
        if self.prime_hash(p) >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// f(p) for a prime p.
    pub fn prime_value(&self, p: u64) -> Complex64 {
        match self.model {
            Model::Steinhaus => {
                let phase = TAU * self.prime_angle(p);
                Complex64::new(phase.cos(), phase.sin())
            }
            Model::Rademacher => Complex64::new(self.prime_sign(p), 0.0),
        }
    }

    /// f(n), extended from the primes through the factorization of n.
    /// f(1) = 1 in both models.
    pub fn value(&self, table: &SieveTable, n: u64) -> Result<Complex64> {
        let factorization = table.factorize(n)?;
        match self.model {
            Model::Steinhaus => {
                let mut angle = 0.0f64;
                for &(p, e) in factorization.factors() {
                    angle += e as f64 * self.prime_angle(p);
                }
                let phase = TAU * angle.fract();
                Ok(Complex64::new(phase.cos(), phase.sin()))
            }
            Model::Rademacher => {
                let mut sign = 1.0f64;
                for &(p, e) in factorization.factors() {
                    if e >= 2 {
                        return Ok(Complex64::new(0.0, 0.0));
                    }
                    sign *= self.prime_sign(p);
                }
                Ok(Complex64::new(sign, 0.0))
            }
        }
    }
}

#[derive(Clone, Copy, Default)]
struct KahanComplex {
    sum: Complex64,
    comp: Complex64,
}

impl KahanComplex {
    #[inline]
    fn add(&mut self, value: Complex64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Z = V^{-1/2} Σ a_n f(n) over the set, with compensated accumulation.
pub fn normalized_sum(
    sample: &ModelSample,
    set: &WeightedSet,
    table: &SieveTable,
) -> Result<Complex64> {
    if set.is_empty() {
        return Err(Error::EmptySet("normalized_sum".into()));
    }
    let mut acc = KahanComplex::default();
    for (i, &n) in set.support().iter().enumerate() {
        acc.add(set.weight(i) * sample.value(table, n)?);
    }
    Ok(acc.sum / set.variance().sqrt())
}

/// The decomposition of Z by largest prime factor: component p sums the
/// elements with P(n) = p. Components over all p partition Z.
pub fn martingale_components(
    sample: &ModelSample,
    set: &WeightedSet,
    table: &SieveTable,
) -> Result<BTreeMap<u64, Complex64>> {
    if set.is_empty() {
        return Err(Error::EmptySet("martingale_components".into()));
    }
    if set.min_element().unwrap() < 2 {
        return Err(Error::Precondition(
            "martingale components need all elements >= 2".into(),
        ));
    }
    let sqrt_v = set.variance().sqrt();
    let mut acc: BTreeMap<u64, KahanComplex> = BTreeMap::new();
    for (i, &n) in set.support().iter().enumerate() {
        let p = table.largest_prime_factor(n)?;
        acc.entry(p)
            .or_default()
            .add(set.weight(i) * sample.value(table, n)?);
    }
    Ok(acc.into_iter().map(|(p, k)| (p, k.sum / sqrt_v)).collect())
}

/// M realizations of Z for one model and one set, reproducible from
/// (model, seed, set) and independent of thread count.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub model: Model,
    pub seed: u64,
    pub set_label: String,
    pub variance: f64,
    pub values: Vec<Complex64>,
}

/// Support prepared for repeated evaluation: factor lists indexed into the
/// distinct-prime table.
struct PreparedSet {
    primes: Vec<u64>,
    // per element: (weight, factor list as (prime index, exponent), square-free)
    elements: Vec<(Complex64, Vec<(u32, u32)>, bool)>,
    sqrt_v: f64,
}

impl PreparedSet {
    fn new(set: &WeightedSet, table: &SieveTable) -> Result<PreparedSet> {
        let mut primes: Vec<u64> = Vec::new();
        let mut index: std::collections::HashMap<u64, u32> = std::collections::HashMap::new();
        let mut elements = Vec::with_capacity(set.len());
        for (i, &n) in set.support().iter().enumerate() {
            let f = table.factorize(n)?;
            let mut list = Vec::with_capacity(f.factors().len());
            let mut squarefree = true;
            for &(p, e) in f.factors() {
                let idx = *index.entry(p).or_insert_with(|| {
                    primes.push(p);
                    (primes.len() - 1) as u32
                });
                if e >= 2 {
                    squarefree = false;
                }
                list.push((idx, e));
            }
            elements.push((set.weight(i), list, squarefree));
        }
        Ok(PreparedSet {
            primes,
            elements,
            sqrt_v: set.variance().sqrt(),
        })
    }

    fn evaluate(&self, sample: &ModelSample) -> Complex64 {
        let mut acc = KahanComplex::default();
        match sample.model {
            Model::Steinhaus => {
                let angles: Vec<f64> = self.primes.iter().map(|&p| sample.prime_angle(p)).collect();
                for (weight, factors, _) in &self.elements {
                    let mut angle = 0.0f64;
                    for &(idx, e) in factors {
                        angle += e as f64 * angles[idx as usize];
                    }
                    let phase = TAU * angle.fract();
                    acc.add(weight * Complex64::new(phase.cos(), phase.sin()));
                }
            }
            Model::Rademacher => {
                let signs: Vec<f64> = self.primes.iter().map(|&p| sample.prime_sign(p)).collect();
                for (weight, factors, squarefree) in &self.elements {
                    // non-square-free terms contribute the same exact zero
                    // the unprepared path adds, keeping both paths bitwise equal
                    let mut sign = 1.0f64;
                    if *squarefree {
                        for &(idx, _) in factors {
                            sign *= signs[idx as usize];
                        }
                    } else {
                        sign = 0.0;
                    }
                    acc.add(weight * Complex64::new(sign, 0.0));
                }
            }
        }
        acc.sum / self.sqrt_v
    }
}

/// Draw M independent realizations of Z; sample i uses sample_index = i.
pub fn sample_batch(
    model: Model,
    set: &WeightedSet,
    table: &SieveTable,
    m: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample count M must be >= 1".into()));
    }
    if set.is_empty() {
        return Err(Error::EmptySet("sample_batch".into()));
    }
    let prepared = PreparedSet::new(set, table)?;
    let values: Vec<Complex64> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            prepared.evaluate(&ModelSample {
                model,
                seed,
                sample_index: i,
            })
        })
        .collect();
    Ok(SampleBatch {
        model,
        seed,
        set_label: set.label().to_string(),
        variance: set.variance(),
        values,
    })
}

impl SampleBatch {
    pub fn m(&self) -> usize {
        self.values.len()
    }

    /// CSV with columns index, re, im.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,re,im")?;
        for (i, z) in self.values.iter().enumerate() {
            writeln!(w, "{i},{},{}", z.re, z.im)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "seed": self.seed,
            "set_label": self.set_label,
            "m": self.m(),
            "variance": self.variance,
            "values": self.values.iter().map(|z| vec![z.re, z.im]).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<SampleBatch> {
        let doc: BatchDoc = serde_json::from_value(value.clone())?;
        Ok(SampleBatch {
            model: doc.model,
            seed: doc.seed,
            set_label: doc.set_label,
            variance: doc.variance,
            values: doc
                .values
                .into_iter()
                .map(|p| Complex64::new(p[0], p[1]))
                .collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BatchDoc {
    model: Model,
    seed: u64,
    set_label: String,
    variance: f64,
    values: Vec<[f64; 2]>,
}

/// M rows of N i.i.d. signs scaled to ±1/√N: a toy martingale difference
/// sequence with ΣX² = 1 by construction.
pub fn sign_sequences(n: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(
            "sign sequences need n >= 1 and m >= 1".into(),
        ));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok((0..m)
        .map(|j| {
            (0..n)
                .map(|i| {
                    if mix3(seed ^ 0x544f_5957_414c_4b53, j as u64, i as u64) >> 63 == 0 {
                        scale
                    } else {
                        -scale
                    }
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SieveTable {
        SieveTable::build(20_000).unwrap()
    }

    fn sample(model: Model, seed: u64, idx: u64) -> ModelSample {
        ModelSample {
            model,
            seed,
            sample_index: idx,
        }
    }

    #[test]
    fn value_at_one_is_one() {
        let t = table();
        for model in [Model::Steinhaus, Model::Rademacher] {
            let s = sample(model, 7, 0);
            assert_eq!(s.value(&t, 1).unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn rademacher_vanishes_off_squarefree() {
        let t = table();
        let s = sample(Model::Rademacher, 1, 0);
        assert_eq!(s.value(&t, 4).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(s.value(&t, 12).unwrap(), Complex64::new(0.0, 0.0));
        let v = s.value(&t, 6).unwrap();
        assert!(v.re == 1.0 || v.re == -1.0);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn steinhaus_has_unit_modulus() {
        let t = table();
        let s = sample(Model::Steinhaus, 3, 2);
        for n in 1..=2_000u64 {
            assert!((s.value(&t, n).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn values_are_reproducible_and_streams_differ() {
        let t = table();
        let a = sample(Model::Steinhaus, 5, 1);
        let b = sample(Model::Steinhaus, 5, 1);
        assert_eq!(a.value(&t, 97).unwrap(), b.value(&t, 97).unwrap());
        let c = sample(Model::Steinhaus, 5, 2);
        assert_ne!(a.value(&t, 97).unwrap(), c.value(&t, 97).unwrap());
        let d = sample(Model::Steinhaus, 6, 1);
        assert_ne!(a.value(&t, 97).unwrap(), d.value(&t, 97).unwrap());
    }

    #[test]
    fn steinhaus_is_completely_multiplicative() {
        let t = table();
        let s = sample(Model::Steinhaus, 11, 4);
        let mut rng = crate::rng::SplitMix64::new(2);
        for _ in 0..500 {
            let m = 1 + rng.below(140);
            let n = 1 + rng.below(140);
            let lhs = s.value(&t, m * n).unwrap();
            let rhs = s.value(&t, m).unwrap() * s.value(&t, n).unwrap();
            assert!((lhs - rhs).norm() < 1e-12, "f({m}·{n}) != f({m})f({n})");
        }
    }

    #[test]
    fn rademacher_is_multiplicative_on_coprime_pairs() {
        use num_integer::Integer;
        let t = table();
        let s = sample(Model::Rademacher, 11, 4);
        let mut rng = crate::rng::SplitMix64::new(9);
        let mut tested = 0;
        while tested < 300 {
            let m = 1 + rng.below(140);
            let n = 1 + rng.below(140);
            if m.gcd(&n) != 1 {
                continue;
            }
            tested += 1;
            let lhs = s.value(&t, m * n).unwrap();
            let rhs = s.value(&t, m).unwrap() * s.value(&t, n).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn normalized_sum_examples() {
        let t = table();
        let one = WeightedSet::indicator("one", vec![1]).unwrap();
        for model in [Model::Steinhaus, Model::Rademacher] {
            let z = normalized_sum(&sample(model, 3, 0), &one, &t).unwrap();
            assert_eq!(z, Complex64::new(1.0, 0.0));
        }
        let four = WeightedSet::indicator("four", vec![4]).unwrap();
        let z = normalized_sum(&sample(Model::Rademacher, 3, 0), &four, &t).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.0));
        let empty = WeightedSet::indicator("empty", vec![]).unwrap();
        assert!(normalized_sum(&sample(Model::Steinhaus, 3, 0), &empty, &t).is_err());
    }

    #[test]
    fn martingale_components_partition_the_sum() {
        let t = table();
        let set = WeightedSet::indicator("s", vec![2, 3, 4, 6]).unwrap();
        let s = sample(Model::Steinhaus, 21, 0);
        let comps = martingale_components(&s, &set, &t).unwrap();
        assert_eq!(comps.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
        let total: Complex64 = comps.values().sum();
        let z = normalized_sum(&s, &set, &t).unwrap();
        assert!((total - z).norm() < 1e-12);

        let single = WeightedSet::indicator("s", vec![2]).unwrap();
        let comps = martingale_components(&s, &single, &t).unwrap();
        assert_eq!(comps.len(), 1);
        assert!((comps[&2] - normalized_sum(&s, &single, &t).unwrap()).norm() < 1e-15);

        let with_one = WeightedSet::indicator("s", vec![1, 2]).unwrap();
        assert!(martingale_components(&s, &with_one, &t).is_err());
    }

    #[test]
    fn batch_contract() {
        let t = table();
        let one = WeightedSet::indicator("one", vec![1]).unwrap();
        let b = sample_batch(Model::Steinhaus, &one, &t, 5, 9).unwrap();
        assert_eq!(b.values, vec![Complex64::new(1.0, 0.0); 5]);

        let set = WeightedSet::interval_set(50, 80).unwrap();
        let b1 = sample_batch(Model::Steinhaus, &set, &t, 64, 123).unwrap();
        let b2 = sample_batch(Model::Steinhaus, &set, &t, 64, 123).unwrap();
        assert_eq!(b1.values, b2.values);

        // the prepared fast path must agree bitwise with the naive path
        for model in [Model::Steinhaus, Model::Rademacher] {
            let b = sample_batch(model, &set, &t, 32, 123).unwrap();
            for (i, &z) in b.values.iter().enumerate() {
                let naive = normalized_sum(&sample(model, 123, i as u64), &set, &t).unwrap();
                assert_eq!(z, naive, "prepared path diverged at sample {i} ({model})");
            }
        }

        assert!(sample_batch(Model::Steinhaus, &set, &t, 0, 1).is_err());
    }

    #[test]
    fn batch_csv_and_json_round_trip() {
        let t = table();
        let set = WeightedSet::interval_set(10, 5).unwrap();
        let b = sample_batch(Model::Rademacher, &set, &t, 8, 77).unwrap();
        let mut csv = Vec::new();
        b.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("index,re,im\n"));
        assert_eq!(text.lines().count(), 9);

        let back = SampleBatch::from_json(&b.to_json()).unwrap();
        assert_eq!(back.values, b.values);
        assert_eq!(back.set_label, b.set_label);
    }

    #[test]
    fn steinhaus_orthogonality_within_five_sigma() {
        let t = table();
        let m_samples = 20_000usize;
        let sigma = 1.0 / (m_samples as f64).sqrt();
        // diagonal: E[f(n) conj(f(n))] = 1 exactly
        let mut rng = crate::rng::SplitMix64::new(31);
        for trial in 0..3 {
            let n = 1 + rng.below(10_000);
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..m_samples {
                let s = sample(Model::Steinhaus, 1000 + trial, i as u64);
                let v = s.value(&t, n).unwrap();
                acc += v * v.conj();
            }
            let mean = acc / m_samples as f64;
            assert!((mean - Complex64::new(1.0, 0.0)).norm() < 5.0 * sigma);
        }
        // off-diagonal: E[f(m) conj(f(n))] = 0
        for trial in 0..20u64 {
            let m = 1 + rng.below(10_000);
            let n = 1 + rng.below(10_000);
            if m == n {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..m_samples {
                let s = sample(Model::Steinhaus, 2000 + trial, i as u64);
                acc += s.value(&t, m).unwrap() * s.value(&t, n).unwrap().conj();
            }
            let mean = acc / m_samples as f64;
            assert!(
                mean.norm() < 5.0 * sigma,
                "E[f({m}) conj f({n})] = {mean} too far from 0"
            );
        }
    }

    #[test]
    fn fourth_moment_of_small_steinhaus_set() {
        // E|f(1) + f(2)|^4 = 6, so E|Z|^4 = 6/V² = 1.5
        let t = table();
        let set = WeightedSet::indicator("pair", vec![1, 2]).unwrap();
        let b = sample_batch(Model::Steinhaus, &set, &t, 20_000, 5).unwrap();
        let mean4: f64 = b.values.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / 20_000.0;
        // Var(|Z|^4) = 34/16 per sample; 5 standard errors
        let se = (34.0f64 / 16.0 / 20_000.0).sqrt();
        assert!(
            (mean4 - 1.5).abs() < 5.0 * se,
            "empirical fourth moment {mean4} vs 1.5 ± {}",
            5.0 * se
        );
    }

    #[test]
    fn sign_sequences_contract() {
        let rows = sign_sequences(100, 8, 3).unwrap();
        assert_eq!(rows.len(), 8);
        let scale = 0.1;
        for row in &rows {
            assert_eq!(row.len(), 100);
            assert!(row.iter().all(|&x| x == scale || x == -scale));
            let sum_sq: f64 = row.iter().map(|x| x * x).sum();
            assert!((sum_sq - 1.0).abs() < 1e-12);
        }
        assert_eq!(rows, sign_sequences(100, 8, 3).unwrap());
        assert_ne!(rows, sign_sequences(100, 8, 4).unwrap());
        assert!(sign_sequences(0, 1, 1).is_err());
    }
}
