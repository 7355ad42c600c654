//! Smallest-prime-factor sieve and the arithmetic functions built on it.
//!
//! The table stores, for every n in [2, limit], the smallest prime dividing
//! n, at 4 bytes per integer. Factorization, the largest prime factor P(n),
//! the prime-divisor count Ω(n; t), and the square-free / sum-of-two-squares
//! indicators are all answered by repeated division through the table.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Hard cap on the table limit, chosen so that the product of any two
/// queryable integers fits in a u64.
pub const MAX_LIMIT: u64 = 1 << 31;

/// Magic bytes of the binary cache format.
pub const CACHE_MAGIC: [u8; 8] = *b"RMFSIEVE";
/// Cache format version.
pub const CACHE_VERSION: u8 = 1;

/// Smallest-prime-factor table for [2, limit]. Immutable after build and
/// safe to share across threads.
#[derive(Clone)]
pub struct SieveTable {
    limit: u64,
    spf: Vec<u32>,
}

/// Prime decomposition with strictly increasing primes and exponents >= 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Product of all p^e, i.e. the factored integer (1 for the empty list).
    pub fn product(&self) -> u64 {
        self.factors
            .iter()
            .fold(1u64, |acc, &(p, e)| acc * p.pow(e))
    }
}

impl SieveTable {
    /// Build the table with a linear sieve (each composite is marked exactly
    /// once, by its smallest prime factor).
    pub fn build(limit: u64) -> Result<SieveTable> {
        if !(2..=MAX_LIMIT).contains(&limit) {
            return Err(Error::LimitOutOfRange(limit));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes: Vec<u32> = Vec::new();
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            let smallest = spf[i];
            for &p in &primes {
                if p > smallest {
                    break;
                }
                let j = i * p as usize;
                if j > n {
                    break;
                }
                spf[j] = p;
            }
        }
        Ok(SieveTable { limit, spf })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    #[inline]
    fn check(&self, n: u64) -> Result<()> {
        if n < 1 || n > self.limit {
            return Err(Error::OutOfRange {
                value: n,
                limit: self.limit,
            });
        }
        Ok(())
    }

    /// Smallest prime factor of n (n itself when n is prime). n >= 2.
    #[inline]
    pub fn smallest_prime_factor(&self, n: u64) -> Result<u64> {
        self.check(n)?;
        if n < 2 {
            return Err(Error::Precondition(format!(
                "smallest prime factor undefined for n = {n}"
            )));
        }
        Ok(self.spf[n as usize] as u64)
    }

    pub fn is_prime(&self, n: u64) -> Result<bool> {
        self.check(n)?;
        Ok(n >= 2 && self.spf[n as usize] as u64 == n)
    }

    pub fn factorize(&self, n: u64) -> Result<Factorization> {
        self.check(n)?;
        let mut factors = Vec::new();
        let mut m = n as usize;
        while m > 1 {
            let p = self.spf[m];
            let mut e = 0u32;
            while m > 1 && self.spf[m] == p {
                m /= p as usize;
                e += 1;
            }
            factors.push((p as u64, e));
        }
        Ok(Factorization { factors })
    }

    /// Largest prime factor P(n); P(1) = 1 by convention.
    pub fn largest_prime_factor(&self, n: u64) -> Result<u64> {
        self.check(n)?;
        let mut m = n as usize;
        let mut best = 1u64;
        while m > 1 {
            let p = self.spf[m];
            best = p as u64;
            while m > 1 && self.spf[m] == p {
                m /= p as usize;
            }
        }
        Ok(best)
    }

    /// Ω(n): number of prime factors of n counted with multiplicity.
    pub fn big_omega(&self, n: u64) -> Result<u32> {
        self.big_omega_truncated(n, None)
    }

    /// Ω(n; t): prime factors p <= t counted with multiplicity. `None`
    /// means no truncation. A finite t must be >= 2.
    pub fn big_omega_truncated(&self, n: u64, t: Option<u64>) -> Result<u32> {
        self.check(n)?;
        if let Some(t) = t {
            if t < 2 {
                return Err(Error::InvalidParameter(format!(
                    "truncation point {t} below 2"
                )));
            }
        }
        let mut m = n as usize;
        let mut count = 0u32;
        while m > 1 {
            let p = self.spf[m] as u64;
            m /= p as usize;
            if t.map_or(true, |t| p <= t) {
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn is_squarefree(&self, n: u64) -> Result<bool> {
        self.check(n)?;
        let mut m = n as usize;
        while m > 1 {
            let p = self.spf[m];
            m /= p as usize;
            if m > 1 && self.spf[m] == p {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// True iff n = u^2 + v^2 has a solution, i.e. every prime p ≡ 3 (mod 4)
    /// divides n to an even power.
    pub fn is_sum_of_two_squares(&self, n: u64) -> Result<bool> {
        self.check(n)?;
        let mut m = n as usize;
        while m > 1 {
            let p = self.spf[m];
            let mut e = 0u32;
            while m > 1 && self.spf[m] == p {
                m /= p as usize;
                e += 1;
            }
            if p % 4 == 3 && e % 2 == 1 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Primes in [lo, hi], inclusive.
    pub fn primes_in(&self, lo: u64, hi: u64) -> Result<Vec<u64>> {
        if hi > self.limit {
            return Err(Error::OutOfRange {
                value: hi,
                limit: self.limit,
            });
        }
        let lo = lo.max(2);
        Ok((lo..=hi)
            .filter(|&n| self.spf[n as usize] as u64 == n)
            .collect())
    }

    /// Write the binary cache: magic, version byte, limit (LE u64), then
    /// spf entries for n = 2..=limit as LE u32 words.
    pub fn write_cache<P: AsRef<Path>>(&self, path: P) -> Result<u64> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&CACHE_MAGIC)?;
        w.write_all(&[CACHE_VERSION])?;
        w.write_all(&self.limit.to_le_bytes())?;
        for &v in &self.spf[2..] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(cache_size_bytes(self.limit))
    }

    /// Load and validate a binary cache. Rejects bad magic, unknown version,
    /// truncation, and entries violating the table invariants.
    pub fn read_cache<P: AsRef<Path>>(path: P) -> Result<SieveTable> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::CorruptCache("file shorter than header".into()))?;
        if magic != CACHE_MAGIC {
            return Err(Error::CorruptCache("bad magic bytes".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)
            .map_err(|_| Error::CorruptCache("missing version byte".into()))?;
        if version[0] != CACHE_VERSION {
            return Err(Error::CorruptCache(format!(
                "unsupported version {}",
                version[0]
            )));
        }
        let mut limit_bytes = [0u8; 8];
        r.read_exact(&mut limit_bytes)
            .map_err(|_| Error::CorruptCache("missing limit field".into()))?;
        let limit = u64::from_le_bytes(limit_bytes);
        if !(2..=MAX_LIMIT).contains(&limit) {
            return Err(Error::CorruptCache(format!("limit {limit} out of range")));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut buf = vec![0u8; (n - 1) * 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::CorruptCache("truncated entry block".into()))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::CorruptCache("trailing bytes after entries".into()));
        }
        for (i, chunk) in buf.chunks_exact(4).enumerate() {
            spf[i + 2] = u32::from_le_bytes(chunk.try_into().unwrap());
        }
        let table = SieveTable { limit, spf };
        table.validate().map_err(|e| match e {
            Error::CorruptCache(m) => Error::CorruptCache(m),
            other => other,
        })?;
        Ok(table)
    }

    /// Check the structural invariants: spf[n] divides n, spf[n] is prime
    /// (fixed point of the table), and spf[n] <= any divisor checked.
    fn validate(&self) -> Result<()> {
        for n in 2..=self.limit as usize {
            let p = self.spf[n] as usize;
            if p < 2 || p > n || n % p != 0 || self.spf[p] as usize != p {
                return Err(Error::CorruptCache(format!("bad entry at n = {n}")));
            }
        }
        Ok(())
    }
}

/// Size in bytes of a cache file for the given limit.
pub fn cache_size_bytes(limit: u64) -> u64 {
    8 + 1 + 8 + 4 * (limit - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_small_matches_definition() {
        let t = SieveTable::build(10).unwrap();
        let expected = [(2, 2), (3, 3), (4, 2), (5, 5), (6, 2), (7, 7), (8, 2), (9, 3), (10, 2)];
        for (n, spf) in expected {
            assert_eq!(t.smallest_prime_factor(n).unwrap(), spf, "n = {n}");
        }
    }

    #[test]
    fn build_smallest_case() {
        let t = SieveTable::build(2).unwrap();
        assert_eq!(t.smallest_prime_factor(2).unwrap(), 2);
    }

    #[test]
    fn build_rejects_out_of_range_limits() {
        assert!(matches!(SieveTable::build(1), Err(Error::LimitOutOfRange(1))));
        assert!(SieveTable::build(MAX_LIMIT + 1).is_err());
    }

    #[test]
    fn large_prime_is_its_own_spf() {
        let t = SieveTable::build(1_000_000).unwrap();
        assert!(t.is_prime(999_983).unwrap());
        assert_eq!(t.smallest_prime_factor(999_983).unwrap(), 999_983);
    }

    #[test]
    fn factorize_examples() {
        let t = SieveTable::build(10_000).unwrap();
        assert_eq!(t.factorize(12).unwrap().factors(), &[(2, 2), (3, 1)]);
        assert!(t.factorize(1).unwrap().is_empty());
        assert_eq!(
            t.factorize(9_800).unwrap().factors(),
            &[(2, 3), (5, 2), (7, 2)]
        );
        assert!(t.factorize(10_001).is_err());
        assert!(t.factorize(0).is_err());
    }

    #[test]
    fn factorize_agrees_with_trial_division() {
        let t = SieveTable::build(100_000).unwrap();
        for n in 1..=100_000u64 {
            let f = t.factorize(n).unwrap();
            assert_eq!(f.product(), n, "product invariant at {n}");
            let mut m = n;
            for &(p, e) in f.factors() {
                for _ in 0..e {
                    assert_eq!(m % p, 0);
                    m /= p;
                }
                // p really is prime: no smaller divisor
                assert_eq!(t.smallest_prime_factor(p).unwrap(), p);
            }
            assert_eq!(m, 1);
            let primes: Vec<u64> = f.factors().iter().map(|&(p, _)| p).collect();
            assert!(primes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn largest_prime_factor_examples() {
        let t = SieveTable::build(100).unwrap();
        assert_eq!(t.largest_prime_factor(12).unwrap(), 3);
        assert_eq!(t.largest_prime_factor(2).unwrap(), 2);
        assert_eq!(t.largest_prime_factor(1).unwrap(), 1);
    }

    #[test]
    fn largest_prime_factor_of_product_is_max() {
        let t = SieveTable::build(10_000).unwrap();
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..2_000 {
            let m = 1 + rng.below(99);
            let n = 1 + rng.below(99);
            let lhs = t.largest_prime_factor(m * n).unwrap();
            let rhs = t
                .largest_prime_factor(m)
                .unwrap()
                .max(t.largest_prime_factor(n).unwrap());
            assert_eq!(lhs, rhs, "m = {m}, n = {n}");
        }
    }

    #[test]
    fn big_omega_examples_and_monotonicity() {
        let t = SieveTable::build(1_000).unwrap();
        assert_eq!(t.big_omega(12).unwrap(), 3);
        assert_eq!(t.big_omega_truncated(12, Some(2)).unwrap(), 2);
        assert_eq!(t.big_omega_truncated(100, Some(5)).unwrap(), 4);
        assert_eq!(t.big_omega(1).unwrap(), 0);
        assert!(t.big_omega_truncated(12, Some(1)).is_err());
        for n in 2..=1_000u64 {
            let full = t.big_omega(n).unwrap();
            assert_eq!(t.big_omega_truncated(n, Some(n.max(2))).unwrap(), full);
            let mut prev = 0;
            for tpoint in [2u64, 3, 5, 10, 50, 1_000] {
                let v = t.big_omega_truncated(n, Some(tpoint)).unwrap();
                assert!(v >= prev, "omega not monotone at n = {n}");
                prev = v;
            }
        }
    }

    #[test]
    fn squarefree_examples() {
        let t = SieveTable::build(100).unwrap();
        assert!(t.is_squarefree(10).unwrap());
        assert!(!t.is_squarefree(12).unwrap());
        assert!(t.is_squarefree(1).unwrap());
    }

    #[test]
    fn two_squares_examples() {
        let t = SieveTable::build(100).unwrap();
        assert!(t.is_sum_of_two_squares(5).unwrap());
        assert!(!t.is_sum_of_two_squares(21).unwrap());
        assert!(t.is_sum_of_two_squares(9).unwrap());
    }

    #[test]
    fn two_squares_agrees_with_representation_search() {
        let t = SieveTable::build(100_000).unwrap();
        for n in 1..=100_000u64 {
            let mut found = false;
            let mut u = 0u64;
            while u * u * 2 <= n {
                let rest = n - u * u;
                let v = (rest as f64).sqrt() as u64;
                for w in v.saturating_sub(1)..=v + 1 {
                    if w * w == rest {
                        found = true;
                    }
                }
                if found {
                    break;
                }
                u += 1;
            }
            assert_eq!(
                t.is_sum_of_two_squares(n).unwrap(),
                found,
                "disagreement at n = {n}"
            );
        }
    }

    #[test]
    fn cache_roundtrip_and_size() {
        let t = SieveTable::build(5_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sieve.bin");
        let bytes = t.write_cache(&path).unwrap();
        assert_eq!(bytes, cache_size_bytes(5_000));
        assert_eq!(bytes, std::fs::metadata(&path).unwrap().len());
        let back = SieveTable::read_cache(&path).unwrap();
        assert_eq!(back.limit(), 5_000);
        for n in 2..=5_000 {
            assert_eq!(
                back.smallest_prime_factor(n).unwrap(),
                t.smallest_prime_factor(n).unwrap()
            );
        }
    }

    #[test]
    fn cache_rejects_corruption() {
        let t = SieveTable::build(100).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let path = dir.path().join("bad_magic.bin");
        t.write_cache(&path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data[0] = b'X';
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(
            SieveTable::read_cache(&path),
            Err(Error::CorruptCache(_))
        ));

        let path = dir.path().join("bad_version.bin");
        t.write_cache(&path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        data[8] = 99;
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(
            SieveTable::read_cache(&path),
            Err(Error::CorruptCache(_))
        ));

        let path = dir.path().join("truncated.bin");
        t.write_cache(&path).unwrap();
        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 5]).unwrap();
        assert!(matches!(
            SieveTable::read_cache(&path),
            Err(Error::CorruptCache(_))
        ));

        let path = dir.path().join("bad_entry.bin");
        t.write_cache(&path).unwrap();
        let mut data = std::fs::read(&path).unwrap();
        let off = data.len() - 4;
        data[off..].copy_from_slice(&7u32.to_le_bytes()); // spf[100] = 7 does not divide 100
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(
            SieveTable::read_cache(&path),
            Err(Error::CorruptCache(_))
        ));
    }
}
