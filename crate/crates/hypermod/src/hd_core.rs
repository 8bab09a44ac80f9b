//! Rational parameters, hypergeometric data and the (r,s) pairs of the K2 family.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::str::FromStr;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parses `a`, `-a`, `a/b` with surrounding whitespace allowed.
pub fn parse_rational(s: &str) -> Result<Q> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let ok = |t: &str| {
        let t = t.strip_prefix(['-', '+']).unwrap_or(t);
        !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
    };
    if !ok(num) || !ok(den) || den.starts_with(['-', '+']) {
        return Err(Error::Parse(format!("bad rational {s:?}")));
    }
    let n = BigInt::from_str(num.trim_start_matches('+')).map_err(|e| Error::Parse(e.to_string()))?;
    let d = BigInt::from_str(den).map_err(|e| Error::Parse(e.to_string()))?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(Q::new(n, d))
}

pub fn parse_rational_list(s: &str) -> Result<Vec<Q>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Parse("empty parameter list".into()));
    }
    items.into_iter().map(parse_rational).collect()
}

/// Fractional part in [0,1).
pub fn frac(x: &Q) -> Q {
    x - x.floor()
}

pub fn to_i64_pair(x: &Q) -> Option<(i64, i64)> {
    Some((x.numer().to_i64()?, x.denom().to_i64()?))
}

fn lcd_of(xs: &[Q]) -> Result<u64> {
    let mut m = BigInt::one();
    for x in xs {
        m = m.lcm(x.denom());
    }
    m.to_u64().ok_or_else(|| Error::Datum("common denominator too large".into()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperDatum {
    alpha: Vec<Q>,
    beta: Vec<Q>,
    m: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeReport {
    pub thm21_shape: bool,
    pub thm24_ordering: bool,
    pub ones_in_beta: usize,
    pub n_hat: usize,
}

impl HyperDatum {
    /// Keeps the given pairing order: `alpha[i]` is paired with `beta[i]`.
    pub fn new(alpha: Vec<Q>, beta: Vec<Q>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != beta.len() {
            return Err(Error::Datum(format!(
                "need |alpha| = |beta| >= 1, got {} and {}",
                alpha.len(),
                beta.len()
            )));
        }
        let zero = Q::zero();
        let one = Q::one();
        if let Some(a) = alpha.iter().find(|a| **a <= zero || **a >= one) {
            return Err(Error::Datum(format!("alpha entry {a} outside (0,1)")));
        }
        if let Some(b) = beta.iter().find(|b| **b <= zero || **b > one) {
            return Err(Error::Datum(format!("beta entry {b} outside (0,1]")));
        }
        let all: Vec<Q> = alpha.iter().chain(beta.iter()).cloned().collect();
        let m = lcd_of(&all)?;
        Ok(HyperDatum { alpha, beta, m })
    }

    pub fn parse(alpha: &str, beta: &str) -> Result<Self> {
        Self::new(parse_rational_list(alpha)?, parse_rational_list(beta)?)
    }

    /// Shorthand for tests and registries: `from_pairs(&[(1,2),(1,2)], &[(1,1),(1,1)])`.
    pub fn from_pairs(alpha: &[(i64, i64)], beta: &[(i64, i64)]) -> Result<Self> {
        Self::new(
            alpha.iter().map(|&(a, b)| q(a, b)).collect(),
            beta.iter().map(|&(a, b)| q(a, b)).collect(),
        )
    }

    pub fn alpha(&self) -> &[Q] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Q] {
        &self.beta
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn lcd(&self) -> u64 {
        self.m
    }

    /// gamma(HD) = -1 + sum (q_i - r_i).
    pub fn gamma(&self) -> Q {
        let s: Q = self.beta.iter().sum::<Q>() - self.alpha.iter().sum::<Q>();
        s - Q::one()
    }

    pub fn is_primitive(&self) -> bool {
        self.alpha
            .iter()
            .all(|a| self.beta.iter().all(|b| !(a - b).is_integer()))
    }

    fn galois_stable(xs: &[Q], m: u64) -> bool {
        let mut base: Vec<Q> = xs.iter().map(frac).collect();
        base.sort();
        (1..=m).filter(|c| c.gcd(&m) == 1).all(|c| {
            let cq = Q::from_integer(BigInt::from(c));
            let mut img: Vec<Q> = xs.iter().map(|x| frac(&(x * &cq))).collect();
            img.sort();
            img == base
        })
    }

    pub fn is_defined_over_q(&self) -> bool {
        Self::galois_stable(&self.alpha, self.m) && Self::galois_stable(&self.beta, self.m)
    }

    /// x -> {c x}, with beta entries equal to 1 kept at 1. Pairing order is preserved.
    pub fn conjugate(&self, c: i64) -> Result<Self> {
        let cm = c.rem_euclid(self.m as i64) as u64;
        if cm.gcd(&self.m) != 1 {
            return Err(Error::NotCoprime(format!("c={c}, M={}", self.m)));
        }
        let cq = qi(c);
        let f = |x: &Q| {
            let y = frac(&(x * &cq));
            if y.is_zero() {
                Q::one()
            } else {
                y
            }
        };
        Self::new(self.alpha.iter().map(f).collect(), self.beta.iter().map(f).collect())
    }

    /// alpha ascending, beta ascending (the order the supercongruence machinery uses).
    pub fn sorted(&self) -> Self {
        let mut a = self.alpha.clone();
        let mut b = self.beta.clone();
        a.sort();
        b.sort();
        HyperDatum { alpha: a, beta: b, m: self.m }
    }

    /// Same pairs, reordered so that a pair with beta = 1 comes first.
    pub fn with_unit_first(&self) -> Option<Self> {
        let i = self.beta.iter().position(|b| b.is_one())?;
        let mut a = self.alpha.clone();
        let mut b = self.beta.clone();
        a.swap(0, i);
        b.swap(0, i);
        Some(HyperDatum { alpha: a, beta: b, m: self.m })
    }

    /// Count of beta entries below 1.
    pub fn n_hat(&self) -> usize {
        self.beta.iter().filter(|b| !b.is_one()).count()
    }

    pub fn shapes(&self) -> ShapeReport {
        let n = self.n();
        let one = Q::one();
        let ones = self.beta.iter().filter(|b| b.is_one()).count();

        // last pair is (r_n, q_n); the rest must have beta = 1
        let thm21 = n >= 2 && {
            let (rn, qn) = (&self.alpha[n - 1], &self.beta[n - 1]);
            let mut flat: Vec<Q> = self.alpha[..n - 1].to_vec();
            flat.sort();
            let r2_ok = flat.len() < 2 || flat[1] < *qn;
            self.beta[..n - 1].iter().all(|b| *b == one) && rn < qn && r2_ok
        };

        let s = self.sorted();
        let thm24 = n >= 2
            && s.beta[n - 1] == one
            && s.beta[n - 2] == one
            && (0..n.saturating_sub(2)).all(|i| s.beta[i] > s.alpha[i + 2]);

        ShapeReport { thm21_shape: thm21, thm24_ordering: thm24, ones_in_beta: ones, n_hat: self.n_hat() }
    }
}

impl fmt::Display for HyperDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let j = |v: &[Q]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{{{{{}}},{{{}}}}}", j(&self.alpha), j(&self.beta))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct S2Pair {
    pub r: Q,
    pub s: Q,
}

impl S2Pair {
    pub fn new(r: Q, s: Q) -> Self {
        S2Pair { r, s }
    }

    pub fn is_member(&self) -> bool {
        let (r, s) = (&self.r, &self.s);
        *r > Q::zero()
            && r < s
            && *s < q(3, 2)
            && !r.is_one()
            && *s != q(1, 2)
            && (s * qi(24)).is_integer()
            && ((r + s) * qi(8)).is_integer()
    }

    pub fn lcd(&self) -> u64 {
        let l = BigInt::from(2).lcm(self.r.denom()).lcm(self.s.denom());
        l.to_u64().unwrap_or(u64::MAX)
    }

    /// (r_c, s_c) with r_c = {cr}, s_c = {cs} or {cs}+1.
    pub fn conjugate(&self, c: i64) -> Result<Self> {
        let m = self.lcd();
        if (c.unsigned_abs() % m).gcd(&m) != 1 {
            return Err(Error::NotCoprime(format!("c={c}, M={m}")));
        }
        let rc = frac(&(&self.r * qi(c)));
        let mut sc = frac(&(&self.s * qi(c)));
        if rc > sc {
            sc += Q::one();
        }
        Ok(S2Pair { r: rc, s: sc })
    }
}

/// N(r) = 48 / gcd(24r, 24).
pub fn level_multiplier(r: &Q) -> Result<u64> {
    let x = r * qi(24);
    if !x.is_integer() || x.is_zero() {
        return Err(Error::Datum(format!("24*{r} is not a nonzero integer")));
    }
    let g = x.to_integer().abs().gcd(&BigInt::from(24));
    (BigInt::from(48) / g)
        .to_u64()
        .ok_or_else(|| Error::Datum("level overflow".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hd(a: &[(i64, i64)], b: &[(i64, i64)]) -> HyperDatum {
        HyperDatum::from_pairs(a, b).unwrap()
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational(" 3 / 6 ").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-2").unwrap(), qi(-2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1/-2").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("").is_err());
        assert_eq!(parse_rational_list("1/2, 1/2 ,1/4").unwrap().len(), 3);
    }

    #[test]
    fn lcd_and_gamma() {
        assert_eq!(hd(&[(1, 2); 3], &[(1, 1); 3]).lcd(), 2);
        let d = hd(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]);
        assert_eq!(d.lcd(), 4);
        assert_eq!(d.gamma(), q(1, 2));
        assert_eq!(hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1); 3]).lcd(), 8);
        assert_eq!(hd(&[(1, 2); 4], &[(1, 1); 4]).gamma(), qi(1));
        assert_eq!(hd(&[(1, 2); 2], &[(1, 1); 2]).gamma(), qi(0));
    }

    #[test]
    fn primitivity_and_rationality() {
        assert!(hd(&[(1, 2); 2], &[(1, 1); 2]).is_primitive());
        assert!(!hd(&[(1, 2)], &[(1, 2)]).is_primitive());
        assert!(hd(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]).is_primitive());
        assert!(hd(&[(1, 2); 4], &[(1, 1); 4]).is_defined_over_q());
        assert!(!hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (1, 1), (3, 4)]).is_defined_over_q());
        assert!(hd(&[(1, 4), (3, 4)], &[(1, 1); 2]).is_defined_over_q());
    }

    #[test]
    fn shape_reports() {
        let r = hd(&[(1, 2), (1, 2), (1, 4)], &[(3, 4), (1, 1), (1, 1)]).shapes();
        assert!(r.thm24_ordering);
        assert_eq!(r.n_hat, 1);
        assert_eq!(r.ones_in_beta, 2);
        let r = hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(3, 4), (1, 1), (1, 1), (1, 1)]).shapes();
        assert!(r.thm24_ordering);
        assert!(!hd(&[(3, 4), (3, 4)], &[(1, 4), (1, 1)]).shapes().thm24_ordering);
        let r = hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (1, 1), (3, 4)]).shapes();
        assert!(r.thm21_shape);
    }

    #[test]
    fn conjugation() {
        let d = hd(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]);
        assert_eq!(d.conjugate(3).unwrap(), hd(&[(1, 2), (1, 2), (3, 4)], &[(1, 1), (1, 1), (1, 4)]));
        assert_eq!(d.conjugate(1).unwrap(), d);
        assert!(d.conjugate(2).is_err());
        assert_eq!(hd(&[(1, 8)], &[(1, 1)]).conjugate(5).unwrap(), hd(&[(5, 8)], &[(1, 1)]));
    }

    #[test]
    fn s2_pairs() {
        assert!(S2Pair::new(q(1, 8), qi(1)).is_member());
        assert!(S2Pair::new(q(1, 4), q(3, 4)).is_member());
        assert!(!S2Pair::new(qi(1), q(5, 4)).is_member());
        let p = S2Pair::new(q(1, 4), q(3, 4));
        assert_eq!(p.conjugate(3).unwrap(), S2Pair::new(q(3, 4), q(5, 4)));
        assert_eq!(S2Pair::new(q(1, 8), qi(1)).conjugate(3).unwrap(), S2Pair::new(q(3, 8), qi(1)));
        assert_eq!(S2Pair::new(q(1, 2), qi(1)).conjugate(1).unwrap(), S2Pair::new(q(1, 2), qi(1)));
    }

    #[test]
    fn level_multipliers() {
        assert_eq!(level_multiplier(&q(1, 8)).unwrap(), 16);
        assert_eq!(level_multiplier(&q(1, 2)).unwrap(), 4);
        assert_eq!(level_multiplier(&q(1, 4)).unwrap(), 8);
        assert!(level_multiplier(&q(1, 5)).is_err());
    }
}
