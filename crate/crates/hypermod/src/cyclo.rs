//! Exact arithmetic in Q(zeta_M), power basis modulo the M-th cyclotomic polynomial.

use crate::error::{Error, Result};
use crate::hd_core::{parse_rational, Q};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

fn phi_cache() -> &'static RwLock<HashMap<u64, Arc<Vec<i64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, Arc<Vec<i64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Coefficients of Phi_m, low degree first.
pub fn cyclotomic_poly(m: u64) -> Arc<Vec<i64>> {
    if let Some(p) = phi_cache().read().expect("phi cache poisoned").get(&m) {
        return p.clone();
    }
    // x^m - 1 divided by Phi_d for every proper divisor d
    let mut num = vec![0i64; m as usize + 1];
    num[0] = -1;
    num[m as usize] = 1;
    for d in (1..m).filter(|d| m.is_multiple_of(*d)) {
        let den = cyclotomic_poly(d);
        num = poly_div_exact(&num, &den);
    }
    let arc = Arc::new(num);
    phi_cache().write().expect("phi cache poisoned").insert(m, arc.clone());
    arc
}

fn poly_div_exact(num: &[i64], den: &[i64]) -> Vec<i64> {
    let mut r = num.to_vec();
    let dn = den.len() - 1;
    let qn = r.len() - 1 - dn;
    let mut quo = vec![0i64; qn + 1];
    for i in (0..=qn).rev() {
        let c = r[i + dn]; // den is monic
        quo[i] = c;
        for (j, &dj) in den.iter().enumerate() {
            r[i + j] -= c * dj;
        }
    }
    debug_assert!(r.iter().all(|&x| x == 0));
    quo
}

pub fn euler_phi(m: u64) -> u64 {
    let mut n = m;
    let mut out = m;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            while n.is_multiple_of(p) {
                n /= p;
            }
            out -= out / p;
        }
        p += 1;
    }
    if n > 1 {
        out -= out / n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CycloElement {
    m: u64,
    coeffs: Vec<Q>,
}

/// A rigorous enclosure: the true value lies within `rad` of `re + i im`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexBall {
    pub re: f64,
    pub im: f64,
    pub rad: f64,
}

impl ComplexBall {
    pub fn abs_upper(&self) -> f64 {
        self.re.hypot(self.im) + self.rad
    }
    pub fn abs_lower(&self) -> f64 {
        (self.re.hypot(self.im) - self.rad).max(0.0)
    }
}

impl CycloElement {
    pub fn zero(m: u64) -> Self {
        let m = m.max(1);
        CycloElement { m, coeffs: vec![Q::zero(); euler_phi(m) as usize] }
    }

    pub fn from_rational(m: u64, x: Q) -> Self {
        let mut z = Self::zero(m);
        z.coeffs[0] = x;
        z
    }

    pub fn from_int(m: u64, x: i64) -> Self {
        Self::from_rational(m, Q::from_integer(BigInt::from(x)))
    }

    pub fn one(m: u64) -> Self {
        Self::from_int(m, 1)
    }

    /// zeta_M^k.
    pub fn zeta_pow(m: u64, k: i64) -> Self {
        let m = m.max(1);
        let mut v = vec![0i64; m as usize];
        v[k.rem_euclid(m as i64) as usize] = 1;
        Self::from_group_ring(m, &v)
    }

    /// Coordinates given directly in the power basis; must have length phi(M).
    pub fn new(m: u64, coeffs: Vec<Q>) -> Result<Self> {
        if m == 0 || coeffs.len() as u64 != euler_phi(m) {
            return Err(Error::Parse(format!("conductor {m} needs {} coordinates", euler_phi(m.max(1)))));
        }
        Ok(CycloElement { m, coeffs })
    }

    /// Reduces an element of Z[x]/(x^M - 1) (length M vector) modulo Phi_M.
    pub fn from_group_ring(m: u64, v: &[i64]) -> Self {
        let big: Vec<BigInt> = v.iter().map(|&x| BigInt::from(x)).collect();
        Self::from_big_group_ring(m, &big)
    }

    pub fn from_big_group_ring(m: u64, v: &[BigInt]) -> Self {
        let phi = cyclotomic_poly(m);
        let d = phi.len() - 1;
        let mut r: Vec<BigInt> = v.to_vec();
        for i in (d..r.len()).rev() {
            if r[i].is_zero() {
                continue;
            }
            let c = std::mem::take(&mut r[i]);
            for (j, &pj) in phi.iter().enumerate().take(d) {
                r[i - d + j] -= &c * pj;
            }
        }
        r.resize(d, BigInt::zero());
        CycloElement { m, coeffs: r.into_iter().map(Q::from_integer).collect() }
    }

    pub fn conductor(&self) -> u64 {
        self.m
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn as_rational(&self) -> Option<Q> {
        if self.coeffs[1..].iter().all(|c| c.is_zero()) {
            Some(self.coeffs[0].clone())
        } else {
            None
        }
    }

    pub fn as_integer(&self) -> Option<BigInt> {
        self.as_rational().filter(|x| x.is_integer()).map(|x| x.to_integer())
    }

    pub fn is_integral(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_integer())
    }

    /// Re-expresses the element with conductor `m2`, a multiple of the current one.
    pub fn promote(&self, m2: u64) -> Result<Self> {
        if !m2.is_multiple_of(self.m) {
            return Err(Error::Parse(format!("cannot promote conductor {} to {m2}", self.m)));
        }
        if m2 == self.m {
            return Ok(self.clone());
        }
        let step = (m2 / self.m) as usize;
        let mut acc = vec![Q::zero(); m2 as usize];
        for (i, c) in self.coeffs.iter().enumerate() {
            acc[(i * step) % m2 as usize] += c;
        }
        Ok(reduce_rational(m2, acc))
    }

    fn common(a: &Self, b: &Self) -> Result<(Self, Self)> {
        if a.m == b.m {
            return Ok((a.clone(), b.clone()));
        }
        let l = a.m.lcm(&b.m);
        Ok((a.promote(l)?, b.promote(l)?))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = Self::common(self, other)?;
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect();
        Ok(CycloElement { m: a.m, coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        CycloElement { m: self.m, coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }

    pub fn scale(&self, k: &Q) -> Self {
        CycloElement { m: self.m, coeffs: self.coeffs.iter().map(|c| c * k).collect() }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let (a, b) = Self::common(self, other)?;
        let d = a.coeffs.len();
        let mut prod = vec![Q::zero(); (2 * d).max(1)];
        for (i, x) in a.coeffs.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.coeffs.iter().enumerate() {
                if !y.is_zero() {
                    prod[i + j] += x * y;
                }
            }
        }
        Ok(reduce_rational(a.m, prod))
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.m);
        for _ in 0..e {
            acc = acc.mul(self).expect("same conductor");
        }
        acc
    }

    /// Image under zeta -> zeta^c.
    pub fn aut(&self, c: i64) -> Result<Self> {
        let cm = c.rem_euclid(self.m as i64) as u64;
        if cm.gcd(&self.m) != 1 && self.m > 1 {
            return Err(Error::NotCoprime(format!("c={c}, M={}", self.m)));
        }
        let mut acc = vec![Q::zero(); self.m as usize];
        for (i, x) in self.coeffs.iter().enumerate() {
            acc[(i as u64 * cm % self.m) as usize] += x;
        }
        Ok(reduce_rational(self.m, acc))
    }

    pub fn conj(&self) -> Self {
        self.aut(-1).expect("-1 is a unit")
    }

    /// Field norm down to Q.
    pub fn norm(&self) -> Q {
        let mut acc = self.clone();
        for c in (2..self.m).filter(|c| c.gcd(&self.m) == 1) {
            acc = acc.mul(&self.aut(c as i64).expect("unit")).expect("same conductor");
        }
        acc.as_rational().expect("norm is rational")
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::DivByZero);
        }
        let mut rest = Self::one(self.m);
        for c in (2..self.m).filter(|c| c.gcd(&self.m) == 1) {
            rest = rest.mul(&self.aut(c as i64)?)?;
        }
        let n = self.mul(&rest)?.as_rational().expect("norm is rational");
        Ok(rest.scale(&n.recip()))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.mul(&other.inv()?)
    }

    /// Enclosure of the image under zeta -> exp(2 pi i / M).
    pub fn embed_complex(&self) -> ComplexBall {
        let mut re = 0.0f64;
        let mut im = 0.0f64;
        let mut mag = 0.0f64;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let cf = c.to_f64().unwrap_or(f64::NAN);
            let th = 2.0 * std::f64::consts::PI * k as f64 / self.m as f64;
            re += cf * th.cos();
            im += cf * th.sin();
            mag += cf.abs() * (k as f64 + 2.0);
        }
        // each term carries a few ulps from the conversion, the angle and the trig call
        ComplexBall { re, im, rad: mag * 16.0 * f64::EPSILON + f64::MIN_POSITIVE }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CycloJson::from(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: CycloJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::try_from(j)
    }
}

impl std::fmt::Display for CycloElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            parts.push(match k {
                0 => format!("{c}"),
                1 => format!("({c})*z"),
                _ => format!("({c})*z^{k}"),
            });
        }
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

fn reduce_rational(m: u64, mut v: Vec<Q>) -> CycloElement {
    let phi = cyclotomic_poly(m);
    let d = phi.len() - 1;
    for i in (d..v.len()).rev() {
        if v[i].is_zero() {
            continue;
        }
        let c = std::mem::take(&mut v[i]);
        for (j, &pj) in phi.iter().enumerate().take(d) {
            if pj != 0 {
                v[i - d + j] -= &c * BigInt::from(pj);
            }
        }
    }
    v.resize(d, Q::zero());
    CycloElement { m, coeffs: v }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycloJson {
    #[serde(rename = "M")]
    pub m: u64,
    pub coeffs: Vec<String>,
}

impl From<&CycloElement> for CycloJson {
    fn from(z: &CycloElement) -> Self {
        CycloJson { m: z.m, coeffs: z.coeffs.iter().map(|c| c.to_string()).collect() }
    }
}

impl TryFrom<CycloJson> for CycloElement {
    type Error = Error;
    fn try_from(j: CycloJson) -> Result<Self> {
        if j.m == 0 || j.m > 10_000 {
            return Err(Error::Parse(format!("conductor {} out of range", j.m)));
        }
        let coeffs = j.coeffs.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        CycloElement::new(j.m, coeffs)
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::hd_core::{q, qi};

    fn z(m: u64) -> CycloElement {
        CycloElement::zeta_pow(m, 1)
    }

    #[test]
    fn cyclotomic_polys() {
        assert_eq!(*cyclotomic_poly(1), vec![-1, 1]);
        assert_eq!(*cyclotomic_poly(4), vec![1, 0, 1]);
        assert_eq!(*cyclotomic_poly(8), vec![1, 0, 0, 0, 1]);
        assert_eq!(*cyclotomic_poly(6), vec![1, -1, 1]);
        assert_eq!(cyclotomic_poly(12).len() - 1, 4);
    }

    #[test]
    fn ring_examples() {
        assert_eq!(z(4).mul(&z(4)).unwrap(), CycloElement::from_int(4, -1));
        assert_eq!(z(8).pow(4), CycloElement::from_int(8, -1));
        assert_eq!(CycloElement::from_int(1, 2).mul(&CycloElement::from_int(1, 3)).unwrap(), CycloElement::from_int(1, 6));
    }

    #[test]
    fn automorphisms() {
        let a = CycloElement::new(4, vec![qi(3), qi(5)]).unwrap();
        assert_eq!(a.aut(3).unwrap(), CycloElement::new(4, vec![qi(3), qi(-5)]).unwrap());
        assert_eq!(a.aut(1).unwrap(), a);
        assert_eq!(z(8).aut(5).unwrap(), z(8).neg());
        assert!(z(8).aut(2).is_err());
    }

    #[test]
    fn division() {
        let one_i = CycloElement::new(4, vec![qi(1), qi(1)]).unwrap();
        assert_eq!(one_i.div(&one_i).unwrap(), CycloElement::one(4));
        let two = CycloElement::from_int(4, 2);
        assert_eq!(two.div(&one_i).unwrap(), CycloElement::new(4, vec![qi(1), qi(-1)]).unwrap());
        assert_eq!(one_i.div(&CycloElement::one(4)).unwrap(), one_i);
        assert_eq!(CycloElement::zero(4).inv(), Err(Error::DivByZero));
        assert_eq!(one_i.norm(), qi(2));
    }

    #[test]
    fn embeddings() {
        let b = CycloElement::from_int(1, 5).embed_complex();
        assert!((b.re - 5.0).abs() <= b.rad && b.im.abs() <= b.rad);
        let b = z(4).embed_complex();
        assert!(b.re.abs() <= b.rad + 1e-15 && (b.im - 1.0).abs() <= b.rad + 1e-15);
        let s = z(8).add(&CycloElement::zeta_pow(8, 7)).unwrap().embed_complex();
        assert!((s.re - 2f64.sqrt()).abs() < 1e-12 && s.im.abs() < 1e-12);
    }

    #[test]
    fn promotion_and_json() {
        let i4 = z(4);
        let z8 = z(8);
        // zeta_8^2 = i
        assert_eq!(i4.promote(8).unwrap(), z8.mul(&z8).unwrap());
        assert_eq!(i4.add(&z8).unwrap().conductor(), 8);
        let x = CycloElement::new(8, vec![qi(1), qi(0), q(-3, 2), qi(0)]).unwrap();
        let s = x.to_json().to_string();
        assert_eq!(s, r#"{"M":8,"coeffs":["1","0","-3/2","0"]}"#);
        assert_eq!(CycloElement::from_json(&s).unwrap(), x);
        assert!(CycloElement::from_json(r#"{"M":8,"coeffs":["1"]}"#).is_err());
    }
}
