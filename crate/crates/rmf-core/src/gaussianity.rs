//! Quantitative normality diagnostics for sample batches: the empirical
//! characteristic function against the complex-normal target, the
//! ε-certificate assembled from exact condition sums, moment comparisons
//! with exact fourth moments, a Kolmogorov-Smirnov statistic, and the
//! martingale fourth-moment/variance-concentration bound terms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{condition_sums, ComplexPair};
use crate::error::{Error, Result};
use crate::sampler::SampleBatch;
use crate::sets::WeightedSet;
use crate::sieve::SieveTable;

/// Normal CDF with mean 0 and the given standard deviation, via erfc.
pub fn normal_cdf(x: f64, std: f64) -> f64 {
    0.5 * libm::erfc(-x / (std * std::f64::consts::SQRT_2))
}

#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// One grid point of the empirical characteristic function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharFnPoint {
    pub t1: f64,
    pub t2: f64,
    pub phi: ComplexPair,
    /// e^{-t²/2} with t² = (t1² + t2²)/2.
    pub target: f64,
    pub deviation: f64,
    /// Monte Carlo scale 1/√M.
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CharFnReport {
    pub m: usize,
    pub points: Vec<CharFnPoint>,
}

/// φ̂(t1, t2) = M^{-1} Σ_j exp(i(t1·Re Z_j + t2·Im Z_j)) over the batch,
/// per grid point.
pub fn empirical_char_fn(batch: &SampleBatch, points: &[(f64, f64)]) -> Result<CharFnReport> {
    let m = batch.m();
    if m == 0 {
        return Err(Error::EmptySet("empirical_char_fn".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    for &(t1, t2) in points {
        let mut re = Kahan::default();
        let mut im = Kahan::default();
        for z in &batch.values {
            let arg = t1 * z.re + t2 * z.im;
            re.add(arg.cos());
            im.add(arg.sin());
        }
        let phi = Complex64::new(re.sum / m as f64, im.sum / m as f64);
        let t_sq = (t1 * t1 + t2 * t2) / 2.0;
        let target = (-t_sq / 2.0).exp();
        out.push(CharFnPoint {
            t1,
            t2,
            phi: phi.into(),
            target,
            deviation: (phi - Complex64::new(target, 0.0)).norm(),
            std_error: 1.0 / (m as f64).sqrt(),
        });
    }
    Ok(CharFnReport { m, points: out })
}

/// The default grid {0, ±0.5, ±1, ±1.5, ±2}²; beyond |t| ≈ 2 the e^{t²}
/// factor makes the certificate vacuous at desk scale.
pub fn default_t_grid() -> Vec<(f64, f64)> {
    let axis = [0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0];
    let mut grid = Vec::with_capacity(axis.len() * axis.len());
    for &t1 in &axis {
        for &t2 in &axis {
            grid.push((t1, t2));
        }
    }
    grid
}

/// The three computable condition values whose maximum bounds the
/// characteristic-function deviation (up to e^{t²} and an absolute
/// constant): weight mass outside S, and the two condition sums of S.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps: f64,
    pub variance: f64,
    /// Σ |a_n|² over A \ S.
    pub tail_sum: f64,
    pub cond2: ComplexPair,
    pub cond3: ComplexPair,
    pub set_size: u64,
    pub subset_size: u64,
}

/// eps1 = (tail/V)^{1/2}, eps2 = (|cond2(S)|/V²)^{1/2},
/// eps3 = (|cond3(S)|/V²)^{1/4}, eps = max of the three. Requires S ⊆ A
/// with identical weights and S within [2, ∞).
pub fn epsilon_certificate(
    a: &WeightedSet,
    s: &WeightedSet,
    table: &SieveTable,
) -> Result<EpsilonCertificate> {
    if !s.is_subset_of(a) {
        return Err(Error::Precondition(
            "certificate subset S must be contained in A with equal weights".into(),
        ));
    }
    let v = a.variance();
    if !(v > 0.0) {
        return Err(Error::EmptySet("epsilon_certificate".into()));
    }
    // Σ over A \ S; exact zero when S = A
    let mut tail = Kahan::default();
    let s_support = s.support();
    let mut cursor = 0usize;
    for (i, &n) in a.support().iter().enumerate() {
        while cursor < s_support.len() && s_support[cursor] < n {
            cursor += 1;
        }
        if cursor < s_support.len() && s_support[cursor] == n {
            continue;
        }
        tail.add(a.weight(i).norm_sqr());
    }
    let sums = condition_sums(s, table)?;
    let eps1 = (tail.sum / v).sqrt();
    let eps2 = (Complex64::from(sums.cond2).norm() / (v * v)).sqrt();
    let eps3 = (Complex64::from(sums.cond3).norm() / (v * v)).powf(0.25);
    Ok(EpsilonCertificate {
        eps1,
        eps2,
        eps3,
        eps: eps1.max(eps2).max(eps3),
        variance: v,
        tail_sum: tail.sum,
        cond2: sums.cond2,
        cond3: sums.cond3,
        set_size: a.len() as u64,
        subset_size: s.len() as u64,
    })
}

/// Empirical moments of a batch next to the complex-normal references
/// E|Z|² = 1, E|Z|⁴ = 2, E[Z²] = 0, and optionally next to an exact fourth
/// moment (an energy count) of the unnormalized sum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub m: usize,
    pub mean_abs2: f64,
    pub mean_abs4: f64,
    pub mean_z2: ComplexPair,
    /// Monte Carlo standard error of mean_abs4.
    pub abs4_std_error: f64,
    pub exact_fourth: Option<u64>,
    /// exact_fourth / V²: the exact value of E|Z|⁴.
    pub expected_abs4: Option<f64>,
    /// mean_abs4 / expected_abs4.
    pub ratio: Option<f64>,
    pub ratio_std_error: Option<f64>,
}

pub fn moment_report(batch: &SampleBatch, exact_fourth: Option<u64>) -> Result<MomentReport> {
    let m = batch.m();
    if m == 0 {
        return Err(Error::EmptySet("moment_report".into()));
    }
    let mut abs2 = Kahan::default();
    let mut abs4 = Kahan::default();
    let mut abs8 = Kahan::default();
    let mut z2re = Kahan::default();
    let mut z2im = Kahan::default();
    for z in &batch.values {
        let n2 = z.norm_sqr();
        abs2.add(n2);
        abs4.add(n2 * n2);
        abs8.add(n2 * n2 * n2 * n2);
        let sq = z * z;
        z2re.add(sq.re);
        z2im.add(sq.im);
    }
    let mf = m as f64;
    let mean_abs4 = abs4.sum / mf;
    let var_abs4 = (abs8.sum / mf - mean_abs4 * mean_abs4).max(0.0);
    let abs4_std_error = (var_abs4 / mf).sqrt();
    let v = batch.variance;
    let expected_abs4 = exact_fourth.map(|e| e as f64 / (v * v));
    Ok(MomentReport {
        m,
        mean_abs2: abs2.sum / mf,
        mean_abs4,
        mean_z2: Complex64::new(z2re.sum / mf, z2im.sum / mf).into(),
        abs4_std_error,
        exact_fourth,
        expected_abs4,
        ratio: expected_abs4.map(|e| mean_abs4 / e),
        ratio_std_error: expected_abs4.map(|e| abs4_std_error / e),
    })
}

/// Two-sided Kolmogorov-Smirnov statistic of the values against the normal
/// distribution with mean 0 and the given standard deviation.
pub fn ks_statistic(values: &[f64], target_std: f64) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Precondition(
            "KS statistic needs at least 2 values".into(),
        ));
    }
    if !(target_std > 0.0) || !target_std.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "target standard deviation {target_std}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN samples"));
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x, target_std);
        sup = sup
            .max((cdf - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - cdf).abs());
    }
    Ok(sup)
}

/// Empirical versions of the two martingale error terms at a given t:
/// Σ_n E[X_n⁴] and E[(Σ_n X_n² - 1)²], next to φ̂(t), the target e^{-t²/2},
/// and the bound terms e^{t²}(ΣE X⁴)^{1/4} and e^{t²}(E(ΣX² - 1)²)^{1/2}.
/// The absolute constants of the bound are unknown, so only the
/// deviation/bound ratio is reported, never a verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub sum_fourth: f64,
    pub var_concentration: f64,
    pub phi: ComplexPair,
    pub target: f64,
    pub deviation: f64,
    pub term_fourth: f64,
    pub term_var: f64,
    pub deviation_over_bound: Option<f64>,
}

pub fn martingale_bound_check(sequences: &[Vec<f64>], t: f64) -> Result<MartingaleCheck> {
    let m = sequences.len();
    if m == 0 {
        return Err(Error::EmptySet("martingale_bound_check".into()));
    }
    let n = sequences[0].len();
    if n == 0 {
        return Err(Error::Precondition("sequences must have length >= 1".into()));
    }
    if sequences.iter().any(|row| row.len() != n) {
        return Err(Error::Precondition("ragged sequence lengths".into()));
    }
    let mut fourth = Kahan::default();
    let mut var_conc = Kahan::default();
    let mut phi_re = Kahan::default();
    let mut phi_im = Kahan::default();
    for row in sequences {
        let mut sum = Kahan::default();
        let mut sum_sq = Kahan::default();
        let mut sum_4 = Kahan::default();
        for &x in row {
            sum.add(x);
            sum_sq.add(x * x);
            sum_4.add(x * x * x * x);
        }
        fourth.add(sum_4.sum);
        let dev = sum_sq.sum - 1.0;
        var_conc.add(dev * dev);
        let arg = t * sum.sum;
        phi_re.add(arg.cos());
        phi_im.add(arg.sin());
    }
    let mf = m as f64;
    let sum_fourth = fourth.sum / mf;
    let var_concentration = var_conc.sum / mf;
    let phi = Complex64::new(phi_re.sum / mf, phi_im.sum / mf);
    let target = (-t * t / 2.0).exp();
    let amplifier = (t * t).exp();
    let term_fourth = amplifier * sum_fourth.powf(0.25);
    let term_var = amplifier * var_concentration.sqrt();
    let deviation = (phi - Complex64::new(target, 0.0)).norm();
    let bound = term_fourth + term_var;
    Ok(MartingaleCheck {
        n,
        m,
        t,
        sum_fourth,
        var_concentration,
        phi: phi.into(),
        target,
        deviation,
        term_fourth,
        term_var,
        deviation_over_bound: (bound > 0.0).then(|| deviation / bound),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_batch, Model};

    fn table() -> SieveTable {
        SieveTable::build(10_000).unwrap()
    }

    fn constant_batch(z: Complex64, m: usize) -> SampleBatch {
        SampleBatch {
            model: Model::Steinhaus,
            seed: 0,
            set_label: "constant".into(),
            variance: 1.0,
            values: vec![z; m],
        }
    }

    #[test]
    fn char_fn_at_origin_is_exactly_one() {
        let t = table();
        let set = WeightedSet::interval_set(100, 50).unwrap();
        let batch = sample_batch(Model::Steinhaus, &set, &t, 331, 7).unwrap();
        let report = empirical_char_fn(&batch, &[(0.0, 0.0)]).unwrap();
        assert_eq!(report.points[0].phi.re, 1.0);
        assert_eq!(report.points[0].phi.im, 0.0);
    }

    #[test]
    fn char_fn_of_constant_batch() {
        let batch = constant_batch(Complex64::new(1.0, 0.0), 100);
        let report = empirical_char_fn(&batch, &[(0.7, 0.0), (1.0, 0.0)]).unwrap();
        for p in &report.points {
            let expected = Complex64::new(p.t1.cos(), p.t1.sin());
            assert!((Complex64::from(p.phi) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn char_fn_target_value() {
        let batch = constant_batch(Complex64::new(0.0, 0.0), 10);
        let report = empirical_char_fn(&batch, &[(1.0, 0.0)]).unwrap();
        assert!((report.points[0].target - (-0.25f64).exp()).abs() < 1e-15);
        assert!((report.points[0].target - 0.7788007830714049).abs() < 1e-12);
    }

    #[test]
    fn char_fn_modulus_bounded_by_one() {
        let t = table();
        let set = WeightedSet::interval_set(500, 200).unwrap();
        let batch = sample_batch(Model::Steinhaus, &set, &t, 500, 3).unwrap();
        let report = empirical_char_fn(&batch, &default_t_grid()).unwrap();
        for p in &report.points {
            assert!(Complex64::from(p.phi).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn certificate_examples() {
        let t = table();
        let pair = WeightedSet::indicator("pair", vec![2, 3]).unwrap();
        let cert = epsilon_certificate(&pair, &pair, &t).unwrap();
        assert_eq!(cert.eps1, 0.0);
        assert_eq!(cert.eps2, 0.0);
        assert!((cert.eps3 - 0.5f64.powf(0.25)).abs() < 1e-12);
        assert!((cert.eps3 - 0.8408964152537145).abs() < 1e-12);
        assert_eq!(cert.eps, cert.eps3);

        let single = WeightedSet::indicator("one", vec![2]).unwrap();
        let cert = epsilon_certificate(&single, &single, &t).unwrap();
        assert_eq!(cert.eps3, 1.0);

        // eps1 reflects dropped mass
        let a = WeightedSet::indicator("a", vec![2, 3, 4, 5]).unwrap();
        let s = WeightedSet::indicator("s", vec![2, 3, 4]).unwrap();
        let cert = epsilon_certificate(&a, &s, &t).unwrap();
        assert!((cert.eps1 - 0.5).abs() < 1e-15); // sqrt(1/4)
        assert_eq!(cert.tail_sum, 1.0);

        // S not a subset of A
        let bad = WeightedSet::indicator("bad", vec![2, 7]).unwrap();
        assert!(epsilon_certificate(&a, &bad, &t).is_err());
    }

    #[test]
    fn moment_report_of_constant_batch() {
        let batch = constant_batch(Complex64::new(1.0, 0.0), 50);
        let r = moment_report(&batch, None).unwrap();
        assert_eq!(r.mean_abs2, 1.0);
        assert_eq!(r.mean_abs4, 1.0);
        assert_eq!(r.abs4_std_error, 0.0);
        assert_eq!(r.ratio, None);
    }

    #[test]
    fn moment_report_against_exact_fourth() {
        let t = table();
        let set = WeightedSet::indicator("pair", vec![1, 2]).unwrap();
        let batch = sample_batch(Model::Steinhaus, &set, &t, 20_000, 5).unwrap();
        let r = moment_report(&batch, Some(6)).unwrap();
        assert_eq!(r.expected_abs4, Some(1.5));
        let ratio = r.ratio.unwrap();
        assert!(
            (ratio - 1.0).abs() < 5.0 * r.ratio_std_error.unwrap(),
            "ratio {ratio} outside 5 standard errors"
        );
    }

    #[test]
    fn rademacher_fourth_moment_matches_square_energy_on_small_set() {
        // E(f(2) + f(3))⁴ = 8 = E□({2,3})
        let t = table();
        let set = WeightedSet::indicator("pair", vec![2, 3]).unwrap();
        let batch = sample_batch(Model::Rademacher, &set, &t, 40_000, 11).unwrap();
        let e_sq = crate::energy::square_energy(&set, &t).unwrap();
        assert_eq!(e_sq, 8);
        let r = moment_report(&batch, Some(e_sq)).unwrap();
        assert_eq!(r.expected_abs4, Some(2.0)); // E[Z⁴] = E□ / V² = 8/4
        let ratio = r.ratio.unwrap();
        assert!((ratio - 1.0).abs() < 5.0 * r.ratio_std_error.unwrap());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let m = 200;
        let std = 1.0;
        // v_i = Φ^{-1}((i - 1/2)/m) via bisection on the CDF
        let mut values = Vec::with_capacity(m);
        for i in 0..m {
            let p = (i as f64 + 0.5) / m as f64;
            let (mut lo, mut hi) = (-10.0f64, 10.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf(mid, std) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            values.push(0.5 * (lo + hi));
        }
        let d = ks_statistic(&values, std).unwrap();
        assert!(d <= 0.5 / m as f64 + 1e-9, "D = {d}");
    }

    #[test]
    fn ks_of_point_mass_is_half() {
        let values = vec![0.0; 100];
        assert!((ks_statistic(&values, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(ks_statistic(&[0.0], 1.0).is_err());
        assert!(ks_statistic(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn ks_of_true_normal_draws() {
        // Box-Muller from the splitmix stream; fixed seed
        let mut rng = crate::rng::SplitMix64::new(12345);
        let m = 5_000;
        let mut values = Vec::with_capacity(m);
        while values.len() < m {
            let u1 = rng.next_f64().max(1e-300);
            let u2 = rng.next_f64();
            let r = (-2.0 * u1.ln()).sqrt();
            values.push(r * (std::f64::consts::TAU * u2).cos());
            if values.len() < m {
                values.push(r * (std::f64::consts::TAU * u2).sin());
            }
        }
        let d = ks_statistic(&values, 1.0).unwrap();
        assert!(d < 0.03, "KS of true normal draws: {d}");
    }

    #[test]
    fn martingale_check_on_scaled_signs() {
        let n = 100;
        let rows = crate::sampler::sign_sequences(n, 400, 8).unwrap();
        let check = martingale_bound_check(&rows, 1.0).unwrap();
        // ΣE X⁴ = n · n^{-2} = 1/n, deterministically
        assert!((check.sum_fourth - 1.0 / n as f64).abs() < 1e-12);
        // ΣX² = 1 for every realization
        assert!(check.var_concentration < 1e-24);
        assert!(check.deviation_over_bound.is_some());
        assert!((check.target - (-0.5f64).exp()).abs() < 1e-15);

        let mut ragged = rows.clone();
        ragged[3].pop();
        assert!(martingale_bound_check(&ragged, 1.0).is_err());
        assert!(martingale_bound_check(&[], 1.0).is_err());
    }
}
