//! Continued fractions and distance-to-integer machinery for the phase θ
//! of twisted sums.
//!
//! θ is held exactly: as a rational p/q, as a quadratic irrational
//! (a + b√d)/c expanded with the integer PQa recurrence, or as a decimal
//! string with a declared error radius. All ‖qθ‖ arithmetic runs either on
//! exact rationals or on a 128/192-bit fixed-point image of θ, never on a
//! bare f64 product, so lower bounds reported by the growth scan are
//! trustworthy at the 2^-100 scale.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient bound for quadratic inputs; keeps the fixed-point error
/// analysis comfortably below 2^-100.
const QUAD_COEFF_BOUND: i64 = 1_000_000_000;

/// A real number θ with enough structure to answer ‖qθ‖ queries exactly.
#[derive(Clone, Debug, PartialEq)]
pub enum Theta {
    /// num/den in lowest terms, den > 0.
    Rational { num: i64, den: u64 },
    /// (a + b√d)/c with d > 0 not a perfect square and b != 0.
    Quadratic { a: i64, b: i64, c: i64, d: u64 },
    /// A decimal literal with declared radius 2^-precision_bits.
    Decimal {
        value: BigRational,
        precision_bits: u32,
        source: String,
    },
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Rational { num, den } => write!(f, "rational:{num}/{den}"),
            Theta::Quadratic { a, b, c, d } => write!(f, "quadratic:{a},{b},{c},{d}"),
            Theta::Decimal {
                source,
                precision_bits,
                ..
            } => write!(f, "decimal:{source}@{precision_bits}"),
        }
    }
}

fn isqrt_u64(d: u64) -> u64 {
    let mut s = (d as f64).sqrt() as u64;
    while s > 0 && s * s > d {
        s -= 1;
    }
    while (s + 1).checked_mul(s + 1).map_or(false, |v| v <= d) {
        s += 1;
    }
    s
}

impl Theta {
    pub fn rational(num: i64, den: i64) -> Result<Theta> {
        if den == 0 {
            return Err(Error::InvalidParameter("rational with zero denominator".into()));
        }
        let (mut num, mut den) = (num as i128, den as i128);
        if den < 0 {
            num = -num;
            den = -den;
        }
        let g = (num.unsigned_abs().gcd(&den.unsigned_abs())).max(1);
        num /= g as i128;
        den /= g as i128;
        Ok(Theta::Rational {
            num: num
                .to_i64()
                .ok_or_else(|| Error::InvalidParameter("rational numerator overflow".into()))?,
            den: den as u64,
        })
    }

    /// (a + b√d)/c. Perfect-square d (and b = 0) folds to a rational.
    pub fn quadratic(a: i64, b: i64, c: i64, d: u64) -> Result<Theta> {
        if c == 0 {
            return Err(Error::InvalidParameter("quadratic with zero denominator".into()));
        }
        if a.unsigned_abs() > QUAD_COEFF_BOUND as u64
            || b.unsigned_abs() > QUAD_COEFF_BOUND as u64
            || c.unsigned_abs() > QUAD_COEFF_BOUND as u64
            || d > QUAD_COEFF_BOUND as u64
        {
            return Err(Error::InvalidParameter(format!(
                "quadratic coefficients bounded by {QUAD_COEFF_BOUND}"
            )));
        }
        let s = isqrt_u64(d);
        if b == 0 || s * s == d {
            let num = a
                .checked_add(b.checked_mul(s as i64).ok_or_else(overflow)?)
                .ok_or_else(overflow)?;
            return Theta::rational(num, c);
        }
        Ok(Theta::Quadratic { a, b, c, d })
    }

    /// Decimal literal (optional sign, optional fraction part) with a
    /// declared radius of 2^-precision_bits.
    pub fn decimal(digits: &str, precision_bits: u32) -> Result<Theta> {
        if precision_bits == 0 {
            return Err(Error::InvalidParameter(
                "decimal input with zero precision".into(),
            ));
        }
        let trimmed = digits.trim();
        let (sign, rest) = match trimmed.strip_prefix('-') {
            Some(r) => (-1i32, r),
            None => (1i32, trimmed),
        };
        let (int_part, frac_part) = match rest.split_once('.') {
            Some((i, f)) => (i, f),
            None => (rest, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(Error::Parse(format!("empty decimal literal {digits:?}")));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(Error::Parse(format!("bad decimal literal {digits:?}")));
        }
        let mantissa: BigInt = format!("{int_part}{frac_part}")
            .parse()
            .map_err(|_| Error::Parse(format!("bad decimal literal {digits:?}")))?;
        let den = BigInt::from(10u32).pow(frac_part.len() as u32);
        let mut value = BigRational::new(mantissa, den);
        if sign < 0 {
            value = -value;
        }
        Ok(Theta::Decimal {
            value,
            precision_bits,
            source: trimmed.to_string(),
        })
    }

    /// Parse the CLI syntax: `rational:p/q`, `quadratic:a,b,c,d` meaning
    /// (a + b√d)/c, or `decimal:<digits>@<precision-bits>`.
    pub fn parse(spec: &str) -> Result<Theta> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("theta spec {spec:?} missing kind prefix")))?;
        match kind {
            "rational" => {
                let (p, q) = rest
                    .split_once('/')
                    .ok_or_else(|| Error::Parse(format!("rational spec {rest:?} needs p/q")))?;
                let p: i64 = p.trim().parse().map_err(|_| bad_int(p))?;
                let q: i64 = q.trim().parse().map_err(|_| bad_int(q))?;
                Theta::rational(p, q)
            }
            "quadratic" => {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(Error::Parse(format!(
                        "quadratic spec {rest:?} needs a,b,c,d"
                    )));
                }
                let a: i64 = parts[0].parse().map_err(|_| bad_int(parts[0]))?;
                let b: i64 = parts[1].parse().map_err(|_| bad_int(parts[1]))?;
                let c: i64 = parts[2].parse().map_err(|_| bad_int(parts[2]))?;
                let d: u64 = parts[3].parse().map_err(|_| bad_int(parts[3]))?;
                Theta::quadratic(a, b, c, d)
            }
            "decimal" => {
                let (digits, bits) = rest
                    .split_once('@')
                    .ok_or_else(|| Error::Parse(format!("decimal spec {rest:?} needs digits@bits")))?;
                let bits: u32 = bits.trim().parse().map_err(|_| bad_int(bits))?;
                Theta::decimal(digits, bits)
            }
            other => Err(Error::Parse(format!("unknown theta kind {other:?}"))),
        }
    }

    /// floor(θ · 2^frac_bits), exact for rational/decimal and within one
    /// unit for quadratic inputs.
    fn floor_fixed(&self, frac_bits: u32) -> BigInt {
        let scale = BigInt::one() << frac_bits;
        match self {
            Theta::Rational { num, den } => {
                (BigInt::from(*num) * &scale).div_floor(&BigInt::from(*den))
            }
            Theta::Quadratic { a, b, c, d } => {
                let sqrt_fixed: BigInt =
                    (BigUint::from(*d) << (2 * frac_bits)).sqrt().into();
                let numerator = BigInt::from(*a) * &scale + BigInt::from(*b) * sqrt_fixed;
                numerator.div_floor(&BigInt::from(*c))
            }
            Theta::Decimal { value, .. } => {
                (value.numer() * &scale).div_floor(value.denom())
            }
        }
    }

    /// Fractional part of θ in units of 2^-128.
    pub fn frac_fixed_128(&self) -> u128 {
        let fixed = self.floor_fixed(192);
        let modulus = BigInt::one() << 192;
        let frac = fixed.mod_floor(&modulus);
        (frac >> 64u32).to_u128().expect("192-bit frac shifted to 128 bits")
    }

    /// ‖qθ‖ = min_{n ∈ Z} |qθ - n|, in [0, 1/2]. Exact zero for rational θ
    /// with den | q; error below 2^-100 otherwise.
    pub fn distance_to_integer(&self, q: u64) -> Result<f64> {
        if q == 0 {
            return Err(Error::InvalidParameter("distance query with q = 0".into()));
        }
        match self {
            Theta::Rational { num, den } => {
                let r = (i128::from(*num) * i128::from(q)).rem_euclid(i128::from(*den)) as u64;
                Ok((r.min(den - r) as f64) / (*den as f64))
            }
            Theta::Decimal { value, .. } => {
                let den = value.denom();
                let r = (value.numer() * BigInt::from(q)).mod_floor(den);
                let dist = (&r).min(&(den - &r)).clone();
                Ok(BigRational::new(dist, den.clone())
                    .to_f64()
                    .unwrap_or(f64::NAN))
            }
            Theta::Quadratic { a, b, c, d } => {
                const BITS: u32 = 192;
                let scale = BigInt::one() << BITS;
                let sqrt_fixed: BigInt = (BigUint::from(*d) << (2 * BITS)).sqrt().into();
                let numerator = BigInt::from(*a) * BigInt::from(q) * &scale
                    + BigInt::from(*b) * BigInt::from(q) * sqrt_fixed;
                let fixed = numerator.div_floor(&BigInt::from(*c));
                let frac = fixed.mod_floor(&scale);
                let dist = (&frac).min(&(&scale - &frac)).clone();
                Ok(dist.to_f64().unwrap_or(f64::NAN) / 2f64.powi(BITS as i32))
            }
        }
    }

    fn residue_walker(&self) -> ResidueWalker {
        match self {
            Theta::Rational { num, den } => ResidueWalker::Rational {
                step: (i128::from(*num)).rem_euclid(i128::from(*den)) as u64,
                den: *den,
                acc: 0,
            },
            Theta::Decimal { value, .. } => {
                let den = value.denom().clone();
                let step = value.numer().mod_floor(&den);
                ResidueWalker::Big {
                    step,
                    den,
                    acc: BigInt::zero(),
                }
            }
            Theta::Quadratic { .. } => ResidueWalker::Fixed {
                step: self.frac_fixed_128(),
                acc: 0,
            },
        }
    }

    /// Scan q = 1..=q_max checking ‖qθ‖ >= C·exp(-q^exponent); reports the
    /// q minimizing the margin ‖qθ‖·exp(q^exponent).
    pub fn check_growth_condition(
        &self,
        c: f64,
        exponent: f64,
        q_max: u64,
    ) -> Result<GrowthReport> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("growth constant C = {c}")));
        }
        if !exponent.is_finite() {
            return Err(Error::InvalidParameter("non-finite exponent".into()));
        }
        if q_max < 1 {
            return Err(Error::InvalidParameter("growth scan needs Q >= 1".into()));
        }
        let mut walker = self.residue_walker();
        let mut pass = true;
        let mut worst_q = 1u64;
        let mut worst_margin = f64::INFINITY;
        let mut worst_distance = 0.0f64;
        let mut first_fail = None;
        for q in 1..=q_max {
            let dist = walker.advance();
            let decay = (-(q as f64).powf(exponent)).exp();
            let margin = dist * (q as f64).powf(exponent).exp();
            if dist < c * decay {
                pass = false;
                if first_fail.is_none() {
                    first_fail = Some(q);
                }
            }
            if margin < worst_margin {
                worst_margin = margin;
                worst_q = q;
                worst_distance = dist;
            }
        }
        Ok(GrowthReport {
            theta: self.to_string(),
            c,
            exponent,
            q_max,
            pass,
            worst_q,
            worst_distance,
            worst_margin,
            first_fail_q: first_fail,
        })
    }

    /// Best rational approximation u/v with v <= q_max, gcd(u, v) = 1 and
    /// |θ - u/v| <= 1/(v·q_max), taken from the convergent with the largest
    /// denominator not exceeding q_max.
    pub fn dirichlet_approx(&self, q_max: u64) -> Result<(i64, u64)> {
        if q_max < 1 {
            return Err(Error::InvalidParameter("dirichlet bound Q >= 1".into()));
        }
        let cf = self.expand(200)?;
        let bound = BigInt::from(q_max);
        let mut best: Option<&(BigInt, BigInt)> = None;
        for conv in &cf.convergents {
            if conv.1 <= bound {
                best = Some(conv);
            } else {
                break;
            }
        }
        let (p, q) = best.ok_or_else(|| {
            Error::InvalidParameter("no convergent within the Dirichlet bound".into())
        })?;
        let u = p
            .to_i64()
            .ok_or_else(|| Error::InvalidParameter("approximation numerator overflow".into()))?;
        let v = q
            .to_u64()
            .ok_or_else(|| Error::InvalidParameter("approximation denominator overflow".into()))?;
        Ok((u, v))
    }

    /// The set of shifts ℓ with |ℓ| <= ell_max such that some multiple
    /// v <= v_max brings vℓθ within delta of an integer. Always contains 0
    /// and is closed under negation.
    pub fn resonant_set(&self, ell_max: u64, v_max: u64, delta: f64) -> Result<Vec<i64>> {
        if v_max < 1 {
            return Err(Error::InvalidParameter("resonant scan needs v_max >= 1".into()));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} outside (0, 1/2)"
            )));
        }
        if ell_max > i64::MAX as u64 {
            return Err(Error::InvalidParameter("ell_max exceeds i64".into()));
        }
        let mut outer = self.residue_walker();
        let mut hits = Vec::new();
        for ell in 1..=ell_max {
            let mut inner = outer.multiple_walker();
            outer.advance();
            let mut found = false;
            for _ in 1..=v_max {
                if inner.advance() <= delta {
                    found = true;
                    break;
                }
            }
            if found {
                hits.push(ell as i64);
            }
        }
        let mut out: Vec<i64> = hits.iter().map(|&l| -l).rev().collect();
        out.push(0);
        out.extend(hits);
        Ok(out)
    }

    /// Continued fraction of θ: partial quotients and convergents up to
    /// `depth`. Rational input terminates exactly; decimal input stops
    /// early once its radius could flip a quotient.
    pub fn expand(&self, depth: usize) -> Result<ContinuedFraction> {
        if depth < 1 {
            return Err(Error::InvalidParameter("expansion depth >= 1".into()));
        }
        match self {
            Theta::Rational { num, den } => {
                let (quotients, terminated) =
                    rational_quotients(BigInt::from(*num), BigInt::from(*den), depth);
                Ok(ContinuedFraction::from_quotients(quotients, terminated, false))
            }
            Theta::Quadratic { a, b, c, d } => {
                let quotients = quadratic_quotients(*a, *b, *c, *d, depth);
                Ok(ContinuedFraction::from_quotients(quotients, false, false))
            }
            Theta::Decimal {
                value,
                precision_bits,
                ..
            } => {
                let radius = BigRational::new(BigInt::one(), BigInt::one() << *precision_bits);
                let (quotients, exhausted) =
                    interval_quotients(value - &radius, value + &radius, depth);
                Ok(ContinuedFraction::from_quotients(quotients, false, exhausted))
            }
        }
    }
}

fn overflow() -> Error {
    Error::InvalidParameter("coefficient overflow".into())
}

fn bad_int(s: &str) -> Error {
    Error::Parse(format!("bad integer {s:?}"))
}

/// Successive fractional parts of qθ for q = 1, 2, 3, ...
enum ResidueWalker {
    Rational { step: u64, den: u64, acc: u64 },
    Big { step: BigInt, den: BigInt, acc: BigInt },
    Fixed { step: u128, acc: u128 },
}

impl ResidueWalker {
    /// Advance to the next q and return ‖qθ‖.
    fn advance(&mut self) -> f64 {
        match self {
            ResidueWalker::Rational { step, den, acc } => {
                *acc = (*acc + *step) % *den;
                (*acc).min(*den - *acc) as f64 / *den as f64
            }
            ResidueWalker::Big { step, den, acc } => {
                *acc += &*step;
                if &*acc >= den {
                    *acc -= &*den;
                }
                let dist = (&*acc).min(&(&*den - &*acc)).clone();
                BigRational::new(dist, den.clone()).to_f64().unwrap_or(f64::NAN)
            }
            ResidueWalker::Fixed { step, acc } => {
                *acc = acc.wrapping_add(*step);
                let dist = (*acc).min(acc.wrapping_neg());
                dist as f64 / 2f64.powi(128)
            }
        }
    }

    /// A walker over multiples of the *current* accumulated residue, i.e.
    /// over v·(ℓθ) for v = 1, 2, ... when self sits at ℓ-1 steps.
    fn multiple_walker(&self) -> ResidueWalker {
        match self {
            ResidueWalker::Rational { step, den, acc } => ResidueWalker::Rational {
                step: (*acc + *step) % *den,
                den: *den,
                acc: 0,
            },
            ResidueWalker::Big { step, den, acc } => {
                let mut s = acc + step;
                if s >= *den {
                    s -= den;
                }
                ResidueWalker::Big {
                    step: s,
                    den: den.clone(),
                    acc: BigInt::zero(),
                }
            }
            ResidueWalker::Fixed { step, acc } => ResidueWalker::Fixed {
                step: acc.wrapping_add(*step),
                acc: 0,
            },
        }
    }
}

/// Partial quotients and convergents of a continued fraction expansion.
#[derive(Clone, Debug)]
pub struct ContinuedFraction {
    pub quotients: Vec<BigInt>,
    pub convergents: Vec<(BigInt, BigInt)>,
    /// Rational input fully expanded.
    pub terminated: bool,
    /// Decimal input stopped because its radius could flip the next quotient.
    pub precision_exhausted: bool,
}

impl ContinuedFraction {
    fn from_quotients(quotients: Vec<BigInt>, terminated: bool, precision_exhausted: bool) -> Self {
        let mut convergents = Vec::with_capacity(quotients.len());
        let (mut p2, mut p1) = (BigInt::zero(), BigInt::one());
        let (mut q2, mut q1) = (BigInt::one(), BigInt::zero());
        for a in &quotients {
            let p = a * &p1 + &p2;
            let q = a * &q1 + &q2;
            convergents.push((p.clone(), q.clone()));
            p2 = std::mem::replace(&mut p1, p);
            q2 = std::mem::replace(&mut q1, q);
        }
        ContinuedFraction {
            quotients,
            convergents,
            terminated,
            precision_exhausted,
        }
    }
}

fn rational_quotients(mut num: BigInt, mut den: BigInt, depth: usize) -> (Vec<BigInt>, bool) {
    let mut quotients = Vec::new();
    while !den.is_zero() && quotients.len() < depth {
        let a = num.div_floor(&den);
        let r = num - &a * &den;
        quotients.push(a);
        num = std::mem::replace(&mut den, r);
    }
    (quotients, den.is_zero())
}

/// PQa recurrence for (a + b√d)/c with d non-square. The sign of b is folded
/// into (P, Q) so the expanded value is always (P + √D)/Q with D = b²d.
fn quadratic_quotients(a: i64, b: i64, c: i64, d: u64, depth: usize) -> Vec<BigInt> {
    let (mut p, mut q) = if b >= 0 {
        (BigInt::from(a), BigInt::from(c))
    } else {
        (BigInt::from(-a), BigInt::from(-c))
    };
    let mut big_d = BigInt::from(b) * BigInt::from(b) * BigInt::from(d);
    // normalize so Q divides D - P^2
    if !((&big_d - &p * &p).mod_floor(&q)).is_zero() {
        let q_abs = q.abs();
        p *= &q_abs;
        big_d *= &q * &q;
        q *= &q_abs;
    }
    let sqrt_d = BigInt::from(big_d.to_biguint().expect("D > 0").sqrt());
    let mut quotients = Vec::with_capacity(depth);
    for _ in 0..depth {
        let numer = &p + &sqrt_d;
        let a_k = if q.is_positive() {
            numer.div_floor(&q)
        } else {
            // floor of an irrational over a negative denominator
            -(numer.div_floor(&-&q)) - 1
        };
        let p_next = &a_k * &q - &p;
        let q_next = (&big_d - &p_next * &p_next) / &q;
        quotients.push(a_k);
        p = p_next;
        q = q_next;
    }
    quotients
}

/// Expand an interval [lo, hi]; emit quotients while both endpoints agree.
/// Returns (quotients, stopped_early).
fn interval_quotients(
    mut lo: BigRational,
    mut hi: BigRational,
    depth: usize,
) -> (Vec<BigInt>, bool) {
    let mut quotients = Vec::new();
    while quotients.len() < depth {
        let a_lo = lo.numer().div_floor(lo.denom());
        let a_hi = hi.numer().div_floor(hi.denom());
        if a_lo != a_hi {
            return (quotients, true);
        }
        quotients.push(a_lo.clone());
        let fl = &lo - BigRational::from(a_lo.clone());
        let fh = &hi - BigRational::from(a_lo);
        if fl.is_zero() || fh.is_zero() {
            // an endpoint is exactly an integer; the next quotient is unbounded
            return (quotients, true);
        }
        lo = fh.recip();
        hi = fl.recip();
    }
    (quotients, false)
}

/// Result of a growth-condition scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub theta: String,
    pub c: f64,
    pub exponent: f64,
    pub q_max: u64,
    pub pass: bool,
    /// q minimizing ‖qθ‖·exp(q^exponent).
    pub worst_q: u64,
    pub worst_distance: f64,
    pub worst_margin: f64,
    pub first_fail_q: Option<u64>,
}

/// Minimum gap between consecutive elements of a sorted list.
pub fn min_gap(sorted: &[i64]) -> Option<u64> {
    sorted
        .windows(2)
        .map(|w| w[0].abs_diff(w[1]))
        .min()
}
