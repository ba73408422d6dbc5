//! Exact capacity and download-count formulas.

use std::fmt;
use std::io::Write;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

use crate::combinatorics::binomial;
use crate::error::{PirError, Result};

/// Reduced fraction with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        // BigRational::new reduces and normalises the sign.
        Self(BigRational::new(num.into(), den.into()))
    }

    pub fn from_integer(v: impl Into<BigInt>) -> Self {
        Self(BigRational::from_integer(v.into()))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    pub fn recip(&self) -> Self {
        Self(self.0.recip())
    }

    pub fn pow(&self, exp: u32) -> Self {
        Self(num_traits::pow(self.0.clone(), exp as usize))
    }

    /// Decimal expansion rounded half-up to `places` digits.
    pub fn to_decimal(&self, places: usize) -> String {
        let scale = num_traits::pow(BigInt::from(10), places);
        let two = BigInt::from(2);
        let num = self.numer() * &scale * &two + self.denom();
        let den = self.denom() * &two;
        let scaled = num.div_floor(&den);
        let negative = scaled.is_negative();
        let digits = scaled.abs().to_string();
        let digits = format!("{:0>width$}", digits, width = places + 1);
        let (int, frac) = digits.split_at(digits.len() - places);
        let sign = if negative { "-" } else { "" };
        if places == 0 {
            format!("{sign}{int}")
        } else {
            format!("{sign}{int}.{frac}")
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl std::ops::Add for &Rational {
    type Output = Rational;
    fn add(self, rhs: Self) -> Rational {
        Rational(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &Rational {
    type Output = Rational;
    fn sub(self, rhs: Self) -> Rational {
        Rational(&self.0 - &rhs.0)
    }
}

impl std::ops::Mul for &Rational {
    type Output = Rational;
    fn mul(self, rhs: Self) -> Rational {
        Rational(&self.0 * &rhs.0)
    }
}

impl std::ops::Div for &Rational {
    type Output = Rational;
    fn div(self, rhs: Self) -> Rational {
        Rational(&self.0 / &rhs.0)
    }
}

fn check(n: usize, k: usize, m: usize) -> Result<()> {
    if k == 0 || k > n || m == 0 {
        return Err(PirError::InvalidParams(format!(
            "need 1 <= K <= N and M >= 1, got N={n} K={k} M={m}"
        )));
    }
    Ok(())
}

/// Code rate `K / N`.
pub fn code_rate(n: usize, k: usize) -> Rational {
    Rational::new(k, n)
}

/// PIR capacity of `M` messages on an `(N, K)` MDS-coded store:
/// `N^{M-1}(N-K) / (N^M - K^M)`, or `1/M` when `K = N`.
pub fn capacity(n: usize, k: usize, m: usize) -> Result<Rational> {
    check(n, k, m)?;
    if k == n {
        return Ok(Rational::new(1, m));
    }
    let (nb, kb) = (BigInt::from(n), BigInt::from(k));
    let num = num_traits::pow(nb.clone(), m - 1) * (&nb - &kb);
    let den = num_traits::pow(nb, m) - num_traits::pow(kb, m);
    Ok(Rational::new(num, den))
}

/// Rate of the best previously known scheme for coded databases, `1 - R_c`.
pub fn baseline_rate(k: usize, n: usize) -> Result<Rational> {
    if k > n || n == 0 {
        return Err(PirError::InvalidParams(format!("need K <= N, got K={k} N={n}")));
    }
    Ok(Rational::new(n - k, n))
}

/// Per-database counts for one round of one repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundCounts {
    /// Round index `i`: every equation in the round sums `i` rows.
    pub round: usize,
    /// Equations containing a desired row, per database.
    pub desired_per_db: u128,
    /// Equations over undesired messages only, per database.
    pub undesired_per_db: u128,
    /// Equations per database for each fixed message subset of size `i`.
    pub per_subset: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemeCounts {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub rounds: Vec<RoundCounts>,
    pub desired_total: u128,
    pub undesired_total: u128,
}

impl SchemeCounts {
    pub fn downloaded_total(&self) -> u128 {
        self.desired_total + self.undesired_total
    }

    pub fn per_db_total(&self) -> u128 {
        self.downloaded_total() / self.n as u128
    }

    pub fn rate(&self) -> Rational {
        Rational::new(self.desired_total, self.downloaded_total())
    }
}

fn upow(base: usize, exp: usize) -> u128 {
    // 0^0 = 1 so that K = N collapses to a single round of singletons.
    (base as u128).pow(exp as u32)
}

/// Equation counts of the achievable scheme, summed over `K` repetitions.
///
/// For `K = N` the side-information rounds vanish and the counts describe
/// downloading every stored symbol once.
pub fn scheme_counts(n: usize, k: usize, m: usize) -> Result<SchemeCounts> {
    check(n, k, m)?;
    let rounds: Vec<RoundCounts> = (1..=m)
        .map(|i| {
            let base = upow(k, m - i) * upow(n - k, i - 1);
            RoundCounts {
                round: i,
                desired_per_db: binomial((m - 1) as u64, (i - 1) as u64) * base,
                undesired_per_db: binomial((m - 1) as u64, i as u64) * base,
                per_subset: base,
            }
        })
        .collect();
    let reps_times_dbs = (k * n) as u128;
    let desired_total = reps_times_dbs * rounds.iter().map(|r| r.desired_per_db).sum::<u128>();
    let undesired_total = reps_times_dbs * rounds.iter().map(|r| r.undesired_per_db).sum::<u128>();
    Ok(SchemeCounts { n, k, m, rounds, desired_total, undesired_total })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CurvePoint {
    pub code_rate: Rational,
    pub m: usize,
    pub capacity: Rational,
}

/// Capacity against code rate `K/N` for each `K` in `k_values` and each `M`.
pub fn capacity_curve(m_values: &[usize], n: usize, k_values: &[usize]) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(m_values.len() * k_values.len());
    for &k in k_values {
        for &m in m_values {
            out.push(CurvePoint { code_rate: code_rate(n, k), m, capacity: capacity(n, k, m)? });
        }
    }
    Ok(out)
}

pub const CURVE_CSV_HEADER: &str = "Rc_num,Rc_den,M,C_num,C_den,C_decimal";

pub fn write_curve_csv<W: Write>(mut out: W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.code_rate.numer(),
            p.code_rate.denom(),
            p.m,
            p.capacity.numer(),
            p.capacity.denom(),
            p.capacity.to_decimal(10)
        )?;
    }
    Ok(())
}

impl Zero for Rational {
    fn zero() -> Self {
        Self(BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Self) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl One for Rational {
    fn one() -> Self {
        Self(BigRational::one())
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Self) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    /// `(1 + Rc + ... + Rc^{M-1})^{-1}`, summed term by term.
    fn capacity_by_series(n: usize, k: usize, m: usize) -> Rational {
        let rc = code_rate(n, k);
        (0..m)
            .fold(Rational::zero(), |acc, i| acc + rc.pow(i as u32))
            .recip()
    }

    #[test]
    fn golden_capacities() {
        assert_eq!(capacity(5, 3, 2).unwrap(), r(5, 8));
        assert_eq!(capacity(3, 2, 3).unwrap(), r(9, 19));
        for n in 1..8 {
            for m in 1..6 {
                assert_eq!(capacity(n, n, m).unwrap(), r(1, m as i64));
            }
        }
        assert!(capacity(3, 0, 1).is_err());
        assert!(capacity(3, 4, 1).is_err());
        assert!(capacity(3, 2, 0).is_err());
    }

    #[test]
    fn closed_form_matches_series() {
        for n in 1..=8 {
            for k in 1..=n {
                for m in 1..=6 {
                    assert_eq!(capacity(n, k, m).unwrap(), capacity_by_series(n, k, m), "{n},{k},{m}");
                    if k < n {
                        let rc = code_rate(n, k);
                        let one = Rational::one();
                        let alt = &(&one - &rc) / &(&one - &rc.pow(m as u32));
                        assert_eq!(capacity(n, k, m).unwrap(), alt);
                    }
                }
            }
        }
    }

    #[test]
    fn counts_golden() {
        let c = scheme_counts(5, 3, 2).unwrap();
        assert_eq!((c.desired_total, c.undesired_total), (75, 45));
        assert_eq!(c.downloaded_total(), 120);
        assert_eq!(c.per_db_total(), 24);
        assert_eq!(c.rate(), r(5, 8));
        assert_eq!(
            c.rounds.iter().map(|x| (x.desired_per_db, x.undesired_per_db)).collect::<Vec<_>>(),
            vec![(3, 3), (2, 0)]
        );

        let c = scheme_counts(3, 2, 3).unwrap();
        assert_eq!((c.desired_total, c.undesired_total), (54, 60));
        assert_eq!(c.per_db_total(), 38);
        assert_eq!(c.rate(), r(9, 19));
        assert_eq!(
            c.rounds.iter().map(|x| x.per_subset).collect::<Vec<_>>(),
            vec![4, 2, 1]
        );

        let c = scheme_counts(2, 1, 2).unwrap();
        assert_eq!((c.desired_total, c.undesired_total), (4, 2));
        assert_eq!(c.rate(), r(2, 3));
    }

    #[test]
    fn counts_identities() {
        for n in 2..=7 {
            for k in 1..=n {
                for m in 1..=5 {
                    let c = scheme_counts(n, k, m).unwrap();
                    // K repetitions, each downloading every desired row once.
                    assert_eq!(c.desired_total, (k as u128) * (n as u128).pow(m as u32));
                    assert_eq!(c.rate(), capacity(n, k, m).unwrap(), "{n},{k},{m}");
                }
            }
        }
    }

    #[test]
    fn classic_reduction() {
        for n in 2..=6 {
            for m in 1..=4 {
                let series = (0..m)
                    .fold(Rational::zero(), |acc, i| acc + r(1, (n as i64).pow(i as u32)))
                    .recip();
                assert_eq!(capacity(n, 1, m).unwrap(), series);
                assert_eq!(scheme_counts(n, 1, m).unwrap().rate(), series);
            }
        }
    }

    #[test]
    fn baseline() {
        assert_eq!(baseline_rate(3, 5).unwrap(), r(2, 5));
        assert_eq!(baseline_rate(1, 2).unwrap(), r(1, 2));
        assert!(capacity(5, 3, 2).unwrap() > baseline_rate(3, 5).unwrap());
        assert!(baseline_rate(4, 3).is_err());
    }

    #[test]
    fn monotone_in_m_and_k() {
        for n in 2..=6 {
            for k in 1..=n {
                for m in 1..=6 {
                    assert!(capacity(n, k, m + 1).unwrap() < capacity(n, k, m).unwrap());
                    if k < n {
                        let c = capacity(n, k, m).unwrap();
                        assert!(c > baseline_rate(k, n).unwrap());
                        assert!(c <= Rational::one());
                        if m >= 2 {
                            assert!(capacity(n, k + 1, m).unwrap() < c);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn curve_limits() {
        let pts = capacity_curve(&[1, 2, 3, 5, 10], 10, &(1..=10).collect::<Vec<_>>()).unwrap();
        assert_eq!(pts.len(), 50);
        for p in &pts {
            if p.m == 1 {
                assert_eq!(p.capacity, Rational::one());
            }
            if p.code_rate == Rational::one() {
                assert_eq!(p.capacity, r(1, p.m as i64));
            }
        }
        // Large M approaches 1 - Rc from above.
        let gap = |m| {
            let c = capacity(10, 4, m).unwrap();
            &c - &baseline_rate(4, 10).unwrap()
        };
        assert!(gap(40) > Rational::zero());
        assert!(gap(40) < gap(10));
        assert!(gap(40) < r(1, 1_000_000_000));
    }

    #[test]
    fn csv_rendering() {
        let pts = capacity_curve(&[1, 2], 5, &[3]).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &pts).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "Rc_num,Rc_den,M,C_num,C_den,C_decimal\n3,5,1,1,1,1.0000000000\n3,5,2,5,8,0.6250000000\n"
        );
    }

    #[test]
    fn decimal_rounding() {
        assert_eq!(r(2, 3).to_decimal(4), "0.6667");
        assert_eq!(r(9, 19).to_decimal(3), "0.474");
        assert_eq!(r(7, 2).to_decimal(0), "4");
        assert_eq!(r(1, 1000).to_decimal(2), "0.00");
    }

    #[test]
    fn display_is_reduced() {
        assert_eq!(r(75, 120).to_string(), "5/8");
        assert_eq!(r(54, 114).to_string(), "9/19");
        assert_eq!(serde_json::to_string(&r(2, 4)).unwrap(), "\"1/2\"");
    }
}
