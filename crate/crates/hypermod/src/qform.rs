//! Exact q-series with rational exponents: arithmetic, rational powers,
//! composition, eta quotients, Hauptmoduln, theta and Eisenstein series.

use crate::error::{Error, Result};
use crate::hd_core::{parse_rational, q, qi, HyperDatum, Q};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;

// ---------------------------------------------------------------------------
// symbolic unit prefactor

/// Product of `base^e` with every `e` in (0,1). Base `-1` stands for the sign.
/// Integer parts are always folded into the coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Prefactor(BTreeMap<i64, Q>);

impl Prefactor {
    pub fn one() -> Self {
        Prefactor(BTreeMap::new())
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> impl Iterator<Item = (i64, &Q)> {
        self.0.iter().map(|(b, e)| (*b, e))
    }

    /// Builds `base^e` and returns it with the folded rational scalar.
    fn from_factors(raw: BTreeMap<i64, Q>) -> (Self, Q) {
        let mut scalar = Q::one();
        let mut out = BTreeMap::new();
        for (b, e) in raw {
            let fl = e.floor();
            let rest = &e - &fl;
            let k = fl.to_integer().to_i64().expect("prefactor exponent overflow");
            scalar *= int_pow(&qi(b), k);
            if !rest.is_zero() {
                out.insert(b, rest);
            }
        }
        (Prefactor(out), scalar)
    }

    pub fn mul(&self, other: &Self) -> (Self, Q) {
        let mut raw = self.0.clone();
        for (b, e) in &other.0 {
            *raw.entry(*b).or_insert_with(Q::zero) += e;
        }
        Self::from_factors(raw)
    }

    pub fn pow(&self, a: &Q) -> (Self, Q) {
        Self::from_factors(self.0.iter().map(|(b, e)| (*b, e * a)).collect())
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(b, e)| (b.to_string(), json!(e.to_string()))).collect())
    }
}

impl fmt::Display for Prefactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|(b, e)| format!("({b})^({e})")).collect();
        write!(f, "{}", parts.join("*"))
    }
}

fn int_pow(x: &Q, k: i64) -> Q {
    let r = num_traits::pow(x.clone(), k.unsigned_abs() as usize);
    if k < 0 {
        r.recip()
    } else {
        r
    }
}

fn factor_abs(n: &BigInt) -> Result<Vec<(i64, i64)>> {
    let mut n = n.abs();
    let mut out = Vec::new();
    let mut p: u64 = 2;
    while p < 1_000_000 && BigInt::from(p * p) <= n {
        let bp = BigInt::from(p);
        let mut e = 0;
        while (&n % &bp).is_zero() {
            n /= &bp;
            e += 1;
        }
        if e > 0 {
            out.push((p as i64, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if !n.is_one() {
        let b = n
            .to_i64()
            .ok_or_else(|| Error::Series(format!("cannot factor leading coefficient cofactor {n}")))?;
        out.push((b, 1));
    }
    Ok(out)
}

/// `c^a` as a rational scalar times a symbolic prefactor.
pub fn rational_power(c: &Q, a: &Q) -> Result<(Q, Prefactor)> {
    if c.is_zero() {
        return Err(Error::Series("zero to a rational power".into()));
    }
    if a.is_integer() {
        let k = a.to_integer().to_i64().ok_or_else(|| Error::Series("exponent overflow".into()))?;
        return Ok((int_pow(c, k), Prefactor::one()));
    }
    let mut raw: BTreeMap<i64, Q> = BTreeMap::new();
    if c.is_negative() {
        raw.insert(-1, a.clone());
    }
    for (p, e) in factor_abs(c.numer())? {
        *raw.entry(p).or_insert_with(Q::zero) += a * qi(e);
    }
    for (p, e) in factor_abs(c.denom())? {
        *raw.entry(p).or_insert_with(Q::zero) -= a * qi(e);
    }
    let (pre, s) = Prefactor::from_factors(raw);
    Ok((s, pre))
}

// ---------------------------------------------------------------------------
// plain power series kernels (index = exponent in the lattice variable)

fn common_denom(v: &[Q]) -> BigInt {
    v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

fn scaled(v: &[Q]) -> (Vec<BigInt>, BigInt) {
    let d = common_denom(v);
    let ints = v.iter().map(|x| x.numer() * (&d / x.denom())).collect();
    (ints, d)
}

fn conv_int(a: &[BigInt], b: &[BigInt], n: usize) -> Vec<BigInt> {
    let nz: Vec<usize> = (0..a.len().min(n)).filter(|&i| !a[i].is_zero()).collect();
    let one = |k: usize| {
        let mut s = BigInt::zero();
        for &i in nz.iter().take_while(|&&i| i <= k) {
            if let Some(y) = b.get(k - i) {
                if !y.is_zero() {
                    s += &a[i] * y;
                }
            }
        }
        s
    };
    if n * nz.len() > 20_000 {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    }
}

/// Product of two plain series, first `n` coefficients.
pub(crate) fn ps_mul(a: &[Q], b: &[Q], n: usize) -> Vec<Q> {
    let (ai, da) = scaled(a);
    let (bi, db) = scaled(b);
    let d = da * db;
    conv_int(&ai, &bi, n).into_iter().map(|c| Q::new(c, d.clone())).collect()
}

/// `b^a` for `b[0] = 1`, first `n` coefficients.
fn ps_pow(b: &[Q], a: &Q, n: usize) -> Vec<Q> {
    debug_assert!(b.first().is_some_and(|x| x.is_one()));
    if n == 0 {
        return Vec::new();
    }
    let pn = a.numer().clone();
    let rd = a.denom().clone();
    let nb = b.len().min(n);
    let nz: Vec<usize> = (1..nb).filter(|&k| !b[k].is_zero()).collect();
    // integer mode while every g_k is integral
    if b.iter().take(nb).all(|x| x.is_integer()) {
        let bi: Vec<BigInt> = b.iter().take(nb).map(|x| x.to_integer()).collect();
        let mut g: Vec<BigInt> = vec![BigInt::one()];
        let mut ok = true;
        for m in 1..n {
            let mut s = BigInt::zero();
            for &k in nz.iter().take_while(|&&k| k <= m) {
                let w = &pn * k - &rd * (m - k);
                s += w * &bi[k] * &g[m - k];
            }
            let den = &rd * m;
            let (qt, r) = s.div_rem(&den);
            if !r.is_zero() {
                ok = false;
                break;
            }
            g.push(qt);
        }
        if ok {
            return g.into_iter().map(Q::from_integer).collect();
        }
    }
    let mut g: Vec<Q> = vec![Q::one()];
    for m in 1..n {
        let mut s = Q::zero();
        for &k in nz.iter().take_while(|&&k| k <= m) {
            let w = Q::from_integer(&pn * k - &rd * (m - k));
            s += w * &b[k] * &g[m - k];
        }
        g.push(s / Q::from_integer(&rd * m));
    }
    g
}

fn ps_theta(a: &[Q]) -> Vec<Q> {
    a.iter().enumerate().map(|(i, x)| x * qi(i as i64)).collect()
}

/// Horner evaluation of `sum outer[k] t^k`, `t` of valuation >= 1.
fn ps_compose(outer: &[Q], t: &[Q], n: usize) -> Vec<Q> {
    let mut y = vec![Q::zero(); n];
    for c in outer.iter().rev() {
        y = ps_mul(&y, t, n);
        if n > 0 {
            y[0] += c;
        }
    }
    y
}

fn poly_from_roots(shifts: &[Q]) -> Vec<Q> {
    // prod (X + s), low degree first
    let mut p = vec![Q::one()];
    for s in shifts {
        let mut next = vec![Q::zero(); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i] += c * s;
            next[i + 1] += c;
        }
        p = next;
    }
    p
}

/// F(alpha, beta; t) through the differential equation
/// [prod(delta + beta_j - 1) - t prod(delta + alpha_i)] y = 0, delta = t d/dt,
/// solved one coefficient at a time in x. With delta = h theta_x the series
/// z_j = delta^j y satisfy z_j[n] = sum_i h_i (n-i) z_{j-1}[n-i], which is affine
/// in the unknown y_n. `t` has valuation `m >= 1`; returns `n - m` coefficients.
fn ps_hyper(alpha: &[Q], beta: &[Q], t: &[Q], n: usize) -> Result<Vec<Q>> {
    let m = t
        .iter()
        .position(|x| !x.is_zero())
        .ok_or_else(|| Error::Series("inner series is zero".into()))?;
    if m == 0 {
        return Err(Error::Series("inner series must have positive valuation".into()));
    }
    if n <= m {
        return Ok(Vec::new());
    }
    let len = n - m;
    // h = t / theta_x(t) = 1 / (m + theta(U)/U) with t = x^m U
    let c0 = t[m].clone();
    let un: Vec<Q> = t[m..n].iter().map(|x| x / &c0).collect();
    let uinv = ps_pow(&un, &qi(-1), len);
    let mut g = ps_mul(&ps_theta(&un), &uinv, len);
    g[0] += qi(m as i64);
    let g0 = g[0].clone();
    let gn: Vec<Q> = g.iter().map(|x| x / &g0).collect();
    let h: Vec<Q> = ps_pow(&gn, &qi(-1), len).into_iter().map(|x| x / &g0).collect();
    let (hi, dh) = scaled(&h);
    let (ti, dt) = scaled(&t[..len]);

    let order = alpha.len().max(beta.len());
    let e = poly_from_roots(&beta.iter().map(|b| b - Q::one()).collect::<Vec<_>>());
    let f = poly_from_roots(alpha);
    // equation * dt * dh^order in terms of Z_j = dh^j z_j:
    // sum_j ew_j Z_j[n] - fw_j (T Z_j)[n] = 0
    let dfe = common_denom(&e).lcm(&common_denom(&f));
    let coef = |v: &[Q], j: usize, extra: &BigInt| -> BigInt {
        let c = v.get(j).cloned().unwrap_or_else(Q::zero) * Q::from_integer(dfe.clone());
        c.to_integer() * num_traits::pow(dh.clone(), order - j) * extra
    };
    let ew: Vec<BigInt> = (0..=order).map(|j| coef(&e, j, &dt)).collect();
    let fw: Vec<BigInt> = (0..=order).map(|j| coef(&f, j, &BigInt::one())).collect();

    // z[j][k] = Z_j[k]; w[j][k] = k Z_j[k]; v[k] = sum_j fw_j Z_j[k]
    let mut z: Vec<Vec<BigInt>> = vec![Vec::with_capacity(len); order + 1];
    let mut w: Vec<Vec<BigInt>> = vec![Vec::with_capacity(len); order + 1];
    let mut v: Vec<BigInt> = Vec::with_capacity(len);
    let dot = |a: &[BigInt], lo: usize, b: &[BigInt], nn: usize| -> BigInt {
        let mut s = BigInt::zero();
        for i in lo..=nn {
            let (x, y) = (&a[i], &b[nn - i]);
            if !x.is_zero() && !y.is_zero() {
                s += x * y;
            }
        }
        s
    };
    let mut dy = BigInt::one();
    for nn in 0..len {
        // Z_j[nn] = p_j + q_j * Y
        let mut pj = vec![BigInt::zero(); order + 1];
        let mut qj = vec![BigInt::zero(); order + 1];
        qj[0] = BigInt::one();
        let lead = &hi[0] * nn;
        for j in 1..=order {
            let r = if nn == 0 { BigInt::zero() } else { dot(&hi, 1, &w[j - 1], nn) };
            pj[j] = &lead * &pj[j - 1] + r;
            qj[j] = &lead * &qj[j - 1];
        }
        let mut known = if nn >= m { -dot(&ti, m, &v, nn) } else { BigInt::zero() };
        let mut lin = BigInt::zero();
        for j in 0..=order {
            known += &ew[j] * &pj[j];
            lin += &ew[j] * &qj[j];
        }
        let y = if nn == 0 {
            dy.clone()
        } else {
            if lin.is_zero() {
                return Err(Error::Series(format!("resonant indicial root at index {nn}")));
            }
            let gcd = known.gcd(&lin);
            let grow = if gcd.is_zero() { BigInt::one() } else { (&lin / &gcd).abs() };
            if !grow.is_one() {
                for row in z.iter_mut().chain(w.iter_mut()) {
                    row.iter_mut().for_each(|x| *x *= &grow);
                }
                v.iter_mut().for_each(|x| *x *= &grow);
                dy *= &grow;
                known *= &grow;
                pj.iter_mut().for_each(|x| *x *= &grow);
            }
            -(known / &lin)
        };
        let mut vn = BigInt::zero();
        for j in 0..=order {
            let val = &pj[j] + &qj[j] * &y;
            if !fw[j].is_zero() {
                vn += &fw[j] * &val;
            }
            w[j].push(&val * nn);
            z[j].push(val);
        }
        v.push(vn);
    }
    Ok(z.swap_remove(0).into_iter().map(|y| Q::new(y, dy.clone())).collect())
}

// ---------------------------------------------------------------------------
// FracSeries

/// `prefactor * sum_n coeffs[n] q^(shift + n/step)`, exact for exponents below `order()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FracSeries {
    shift: Q,
    step: u32,
    coeffs: Vec<Q>,
    pre: Prefactor,
}

fn lattice_len(shift: &Q, step: u32, order: &Q) -> usize {
    let x = (order - shift) * qi(step as i64);
    if x <= Q::zero() {
        0
    } else {
        x.ceil().to_integer().to_usize().expect("series length overflow")
    }
}

impl FracSeries {
    pub fn new(shift: Q, step: u32, coeffs: Vec<Q>) -> Result<Self> {
        if step == 0 {
            return Err(Error::Series("exponent step must be positive".into()));
        }
        Ok(FracSeries { shift, step, coeffs, pre: Prefactor::one() }.normalized())
    }

    pub fn from_ints(shift: Q, step: u32, coeffs: &[i64]) -> Result<Self> {
        Self::new(shift, step, coeffs.iter().map(|&c| qi(c)).collect())
    }

    /// The constant `c` known to `O(q^order)`.
    pub fn constant(c: Q, order: &Q) -> Self {
        let n = lattice_len(&Q::zero(), 1, order);
        let mut v = vec![Q::zero(); n];
        if n > 0 {
            v[0] = c;
        }
        FracSeries { shift: Q::zero(), step: 1, coeffs: v, pre: Prefactor::one() }
    }

    pub fn with_prefactor(mut self, pre: Prefactor) -> Self {
        self.pre = pre;
        self
    }

    fn normalized(mut self) -> Self {
        if let Some(k) = self.coeffs.iter().position(|x| !x.is_zero()) {
            if k > 0 {
                self.coeffs.drain(..k);
                self.shift += q(k as i64, self.step as i64);
            }
        }
        self
    }

    pub fn shift(&self) -> &Q {
        &self.shift
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn coeffs(&self) -> &[Q] {
        &self.coeffs
    }

    pub fn prefactor(&self) -> &Prefactor {
        &self.pre
    }

    /// Exclusive truncation bound.
    pub fn order(&self) -> Q {
        &self.shift + q(self.coeffs.len() as i64, self.step as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn exponent(&self, n: usize) -> Q {
        &self.shift + q(n as i64, self.step as i64)
    }

    /// Leading exponent and coefficient, `None` for the zero series.
    pub fn leading(&self) -> Option<(Q, &Q)> {
        let k = self.coeffs.iter().position(|x| !x.is_zero())?;
        Some((self.exponent(k), &self.coeffs[k]))
    }

    /// Coefficient of `q^e`; `None` when `e` is at or beyond the order.
    pub fn coeff(&self, e: &Q) -> Option<Q> {
        if *e >= self.order() {
            return None;
        }
        let x = (e - &self.shift) * qi(self.step as i64);
        if x.is_negative() || !x.is_integer() {
            return Some(Q::zero());
        }
        let i = x.to_integer().to_usize()?;
        Some(self.coeffs.get(i).cloned().unwrap_or_else(Q::zero))
    }

    /// Nonzero terms as (exponent, coefficient).
    pub fn terms(&self) -> Vec<(Q, Q)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(i, c)| (self.exponent(i), c.clone()))
            .collect()
    }

    pub fn truncate(&self, order: &Q) -> Self {
        let n = lattice_len(&self.shift, self.step, order).min(self.coeffs.len());
        let mut out = self.clone();
        out.coeffs.truncate(n);
        out
    }

    /// Same series written on the finer lattice `1/step`.
    fn refine(&self, step: u32) -> Self {
        assert!(step.is_multiple_of(self.step));
        let f = (step / self.step) as usize;
        if f == 1 {
            return self.clone();
        }
        let mut v = vec![Q::zero(); self.coeffs.len() * f];
        for (i, c) in self.coeffs.iter().enumerate() {
            v[i * f] = c.clone();
        }
        FracSeries { shift: self.shift.clone(), step, coeffs: v, pre: self.pre.clone() }
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = -c.clone());
        out
    }

    pub fn scale(&self, k: &Q) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= k);
        out.normalized()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.pre != other.pre {
            if self.is_zero() {
                return Ok(other.truncate(&self.order()));
            }
            if other.is_zero() {
                return Ok(self.truncate(&other.order()));
            }
            return Err(Error::Series(format!(
                "cannot add series with prefactors {} and {}",
                self.pre, other.pre
            )));
        }
        let step = self.step.lcm(&other.step);
        let a = self.refine(step);
        let b = other.refine(step);
        let base = a.shift.clone().min(b.shift.clone());
        let offset = |s: &Q| -> Result<usize> {
            let x = (s - &base) * qi(step as i64);
            if !x.is_integer() {
                return Err(Error::Series("exponent lattices do not align".into()));
            }
            Ok(x.to_integer().to_usize().expect("offset overflow"))
        };
        let (oa, ob) = (offset(&a.shift)?, offset(&b.shift)?);
        let order = self.order().min(other.order());
        let n = lattice_len(&base, step, &order);
        let mut v = vec![Q::zero(); n];
        for (i, c) in a.coeffs.iter().enumerate() {
            if oa + i < n {
                v[oa + i] += c;
            }
        }
        for (i, c) in b.coeffs.iter().enumerate() {
            if ob + i < n {
                v[ob + i] += c;
            }
        }
        Ok(FracSeries { shift: base, step, coeffs: v, pre: self.pre.clone() }.normalized())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// `1 - self` style helper: `c + self`.
    pub fn add_const(&self, c: &Q) -> Result<Self> {
        self.add(&FracSeries::constant(c.clone(), &self.order()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let step = self.step.lcm(&other.step);
        let a = self.refine(step);
        let b = other.refine(step);
        let n = a.coeffs.len().min(b.coeffs.len());
        let v = ps_mul(&a.coeffs, &b.coeffs, n);
        let (pre, s) = self.pre.mul(&other.pre);
        let mut out = FracSeries { shift: &a.shift + &b.shift, step, coeffs: v, pre };
        if !s.is_one() {
            out.coeffs.iter_mut().for_each(|c| *c *= &s);
        }
        out.normalized()
    }

    pub fn pow_int(&self, k: i64) -> Result<Self> {
        self.pow_rational(&qi(k))
    }

    /// `self^a` for `self = C q^v (1 + h)`; `C^a` may leave a symbolic prefactor.
    pub fn pow_rational(&self, a: &Q) -> Result<Self> {
        let k = self
            .coeffs
            .iter()
            .position(|x| !x.is_zero())
            .ok_or_else(|| Error::Series("power of a series with no known nonzero term".into()))?;
        let c = self.coeffs[k].clone();
        let b: Vec<Q> = self.coeffs[k..].iter().map(|x| x / &c).collect();
        let g = ps_pow(&b, a, b.len());
        let (scalar, cpre) = rational_power(&c, a)?;
        let (spre, s2) = self.pre.pow(a);
        let (pre, s3) = cpre.mul(&spre);
        let total = scalar * s2 * s3;
        let shift = self.exponent(k) * a;
        // exponents shift + n/step stay on the same lattice step
        let coeffs = g.into_iter().map(|x| x * &total).collect();
        Ok(FracSeries { shift, step: self.step, coeffs, pre }.normalized())
    }

    pub fn inv(&self) -> Result<Self> {
        self.pow_rational(&qi(-1))
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    /// q d/dq.
    pub fn theta(&self) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            *c *= &self.shift + q(i as i64, self.step as i64);
        }
        out.normalized()
    }

    /// q f'(q) / f(q).
    pub fn theta_log_derivative(&self) -> Result<Self> {
        Ok(self.theta().mul(&self.inv()?))
    }

    /// q -> q^n for positive rational n.
    pub fn rescale(&self, n: &Q) -> Result<Self> {
        if !n.is_positive() {
            return Err(Error::Series(format!("rescale factor {n} must be positive")));
        }
        let a = n.numer().to_u64().ok_or_else(|| Error::Series("rescale overflow".into()))?;
        let b = n.denom().to_u64().ok_or_else(|| Error::Series("rescale overflow".into()))?;
        let d = self.step as u64 * b;
        let g = a.gcd(&d);
        let step = u32::try_from(d / g).map_err(|_| Error::Series("lattice too fine".into()))?;
        let mult = (a / g) as usize;
        let mut v = vec![Q::zero(); self.coeffs.len() * mult];
        for (i, c) in self.coeffs.iter().enumerate() {
            v[i * mult] = c.clone();
        }
        Ok(FracSeries { shift: &self.shift * n, step, coeffs: v, pre: self.pre.clone() })
    }

    /// Horner composition `sum outer[k] self^k`; needs positive valuation.
    pub fn compose_poly(&self, outer: &[Q]) -> Result<Self> {
        let (t, step) = self.as_plain()?;
        let n = t.len();
        Ok(FracSeries { shift: Q::zero(), step, coeffs: ps_compose(outer, &t, n), pre: Prefactor::one() }
            .normalized())
    }

    /// F(alpha, beta; self) with beta containing the 1 that supplies k!.
    pub fn compose_hypergeometric(&self, alpha: &[Q], beta: &[Q]) -> Result<Self> {
        let (t, step) = self.as_plain()?;
        let n = t.len();
        let y = match ps_hyper(alpha, beta, &t, n) {
            Ok(y) => y,
            Err(Error::Series(msg)) if msg.starts_with("resonant") => {
                let m = t.iter().position(|x| !x.is_zero()).unwrap_or(1).max(1);
                let terms = n.div_ceil(m) + 1;
                let outer: Vec<Q> = (0..terms)
                    .map(|k| hyper_term(alpha, beta, k as u64))
                    .collect();
                ps_compose(&outer, &t, n)
            }
            Err(e) => return Err(e),
        };
        Ok(FracSeries { shift: Q::zero(), step, coeffs: y, pre: Prefactor::one() }.normalized())
    }

    /// Coefficients in the lattice variable x = q^(1/step), starting at x^0.
    fn as_plain(&self) -> Result<(Vec<Q>, u32)> {
        if !self.pre.is_one() {
            return Err(Error::Series("cannot compose into a series with a symbolic prefactor".into()));
        }
        let lead = self.leading().map(|(e, _)| e);
        match lead {
            Some(e) if e.is_positive() => {}
            _ => return Err(Error::Series("inner series must have positive valuation".into())),
        }
        let off = &self.shift * qi(self.step as i64);
        if !off.is_integer() || off.is_negative() {
            return Err(Error::Series("inner series exponents are off the lattice".into()));
        }
        let off = off.to_integer().to_usize().expect("offset overflow");
        let mut v = vec![Q::zero(); off];
        v.extend(self.coeffs.iter().cloned());
        Ok((v, self.step))
    }

    /// Coefficients of integer exponents `0..order` and the integer bound.
    pub fn integer_coeffs(&self) -> Result<Vec<Q>> {
        if !self.pre.is_one() {
            return Err(Error::Series("series carries a symbolic prefactor".into()));
        }
        let ord = self.order().ceil().to_integer();
        let n = ord.to_usize().unwrap_or(0);
        let mut v = vec![Q::zero(); n];
        for (e, c) in self.terms() {
            if !e.is_integer() || e.is_negative() {
                return Err(Error::Series(format!("exponent {e} is not a nonnegative integer")));
            }
            v[e.to_integer().to_usize().expect("exponent overflow")] = c;
        }
        Ok(v)
    }

    /// True when both series agree (prefactor and every coefficient) below `order`.
    pub fn agrees_to(&self, other: &Self, order: &Q) -> bool {
        if self.order() < *order || other.order() < *order {
            return false;
        }
        let d = match self.sub(other) {
            Ok(d) => d,
            Err(_) => return false,
        };
        d.truncate(order).is_zero()
    }

    /// First exponent below `order` where the two series differ.
    pub fn first_difference(&self, other: &Self, order: &Q) -> Option<String> {
        if self.pre != other.pre {
            return Some(format!("prefactor {} vs {}", self.pre, other.pre));
        }
        let o = self.order().min(other.order());
        if o < *order {
            return Some(format!("known only to O(q^{o})"));
        }
        let d = self.sub(other).ok()?.truncate(order);
        d.leading().map(|(e, _)| {
            format!(
                "q^{e}: {} vs {}",
                self.coeff(&e).unwrap_or_default(),
                other.coeff(&e).unwrap_or_default()
            )
        })
    }

    pub fn to_json(&self) -> Value {
        let terms: serde_json::Map<String, Value> = self
            .terms()
            .into_iter()
            .map(|(e, c)| (e.to_string(), json!(c.to_string())))
            .collect();
        json!({
            "order": self.order().to_string(),
            "prefactor": self.pre.to_json(),
            "coefficients": terms,
        })
    }
}

impl fmt::Display for FracSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.pre.is_one() {
            write!(f, "{} * (", self.pre)?;
        }
        let terms = self.terms();
        if terms.is_empty() {
            write!(f, "0")?;
        }
        for (i, (e, c)) in terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})q^({e})")?;
        }
        write!(f, " + O(q^({}))", self.order())?;
        if !self.pre.is_one() {
            write!(f, ")")?;
        }
        Ok(())
    }
}

fn hyper_term(alpha: &[Q], beta: &[Q], k: u64) -> Q {
    let mut t = Q::one();
    for i in 0..k {
        let i = qi(i as i64);
        for a in alpha {
            t *= a + &i;
        }
        for b in beta {
            t /= b + &i;
        }
    }
    t
}

// ---------------------------------------------------------------------------
// building blocks

/// One factor eta(m tau)^k of an eta quotient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtaFactor {
    pub m: Q,
    pub k: Q,
}

/// prod eta(m tau)^k; multipliers may be fractional (eta(tau/2)), exponents rational.
pub fn eta_quotient(factors: &[EtaFactor], order: &Q) -> Result<FracSeries> {
    if factors.is_empty() {
        return Err(Error::Series("empty eta quotient".into()));
    }
    let mut l = BigInt::one();
    for f in factors {
        if !f.m.is_positive() {
            return Err(Error::Series(format!("eta multiplier {} must be positive", f.m)));
        }
        l = l.lcm(f.m.denom());
    }
    let step = l.to_u32().ok_or_else(|| Error::Series("eta lattice too fine".into()))?;
    let shift: Q = factors.iter().map(|f| &f.m * &f.k).sum::<Q>() / qi(24);
    let n = lattice_len(&shift, step, order);
    let mults: Vec<(usize, Q)> = factors
        .iter()
        .map(|f| ((&f.m * qi(step as i64)).to_integer().to_usize().expect("multiplier overflow"), f.k.clone()))
        .collect();
    // theta_x log P = sum_j L_j x^j with L_j = -sum k M sigma(j/M)
    let mut lcoef = vec![Q::zero(); n];
    let sig = sigma_table(1, n);
    for (mm, k) in &mults {
        let w = k * qi(*mm as i64);
        let mut j = *mm;
        let mut i = 1;
        while j < n {
            lcoef[j] -= &w * Q::from_integer(sig[i].clone());
            j += mm;
            i += 1;
        }
    }
    let coeffs = if lcoef.iter().all(|x| x.is_integer()) {
        let li: Vec<BigInt> = lcoef.iter().map(|x| x.to_integer()).collect();
        let nz: Vec<usize> = (1..n).filter(|&j| !li[j].is_zero()).collect();
        let mut p: Vec<BigInt> = Vec::with_capacity(n);
        if n > 0 {
            p.push(BigInt::one());
        }
        for k in 1..n {
            let mut s = BigInt::zero();
            for &j in nz.iter().take_while(|&&j| j <= k) {
                if !p[k - j].is_zero() {
                    s += &li[j] * &p[k - j];
                }
            }
            let (qt, r) = s.div_rem(&BigInt::from(k));
            debug_assert!(r.is_zero());
            p.push(qt);
        }
        p.into_iter().map(Q::from_integer).collect()
    } else {
        let mut p: Vec<Q> = Vec::with_capacity(n);
        if n > 0 {
            p.push(Q::one());
        }
        for k in 1..n {
            let mut s = Q::zero();
            for j in 1..=k {
                if !lcoef[j].is_zero() {
                    s += &lcoef[j] * &p[k - j];
                }
            }
            p.push(s / qi(k as i64));
        }
        p
    };
    Ok(FracSeries { shift, step, coeffs, pre: Prefactor::one() })
}

pub fn eta_series(m: u64, order: &Q) -> Result<FracSeries> {
    if m == 0 {
        return Err(Error::Series("eta multiplier must be positive".into()));
    }
    eta_quotient(&[EtaFactor { m: qi(m as i64), k: Q::one() }], order)
}

/// eta(m tau) from the pentagonal number theorem.
pub fn eta_pentagonal(m: u64, order: &Q) -> FracSeries {
    let shift = q(m as i64, 24);
    let n = lattice_len(&shift, 1, order);
    let mut v = vec![Q::zero(); n];
    let mut k: i64 = 0;
    loop {
        let mut any = false;
        for kk in if k == 0 { vec![0] } else { vec![k, -k] } {
            let e = (kk * (3 * kk - 1) / 2) as usize * m as usize;
            if e < n {
                v[e] = qi(if kk % 2 == 0 { 1 } else { -1 });
                any = true;
            }
        }
        if !any {
            break;
        }
        k += 1;
    }
    FracSeries { shift, step: 1, coeffs: v, pre: Prefactor::one() }
}

fn sigma_table(power: u32, n: usize) -> Vec<BigInt> {
    let mut s = vec![BigInt::zero(); n.max(1)];
    for d in 1..n {
        let dp = num_traits::pow(BigInt::from(d), power as usize);
        let mut j = d;
        while j < n {
            s[j] += &dp;
            j += d;
        }
    }
    s
}

fn theta_series(order: &Q, alternating: bool) -> FracSeries {
    let n = lattice_len(&Q::zero(), 2, order);
    let mut v = vec![Q::zero(); n];
    let mut k: usize = 0;
    while k * k < n {
        let sign = if alternating && k % 2 == 1 { -1 } else { 1 };
        v[k * k] = qi(if k == 0 { 1 } else { 2 * sign });
        k += 1;
    }
    FracSeries { shift: Q::zero(), step: 2, coeffs: v, pre: Prefactor::one() }
}

/// theta_3 = sum_n q^(n^2/2).
pub fn theta3(order: &Q) -> FracSeries {
    theta_series(order, false)
}

/// theta_4 = sum_n (-1)^n q^(n^2/2).
pub fn theta4(order: &Q) -> FracSeries {
    theta_series(order, true)
}

/// sum_{n,m} q^(n^2+nm+m^2).
pub fn theta_hexagonal(order: &Q) -> FracSeries {
    let n = lattice_len(&Q::zero(), 1, order) as i64;
    let mut v = vec![0i64; n.max(0) as usize];
    let r = (2.0 * (n as f64).sqrt()) as i64 + 2;
    for a in -r..=r {
        for b in -r..=r {
            let e = a * a + a * b + b * b;
            if e < n {
                v[e as usize] += 1;
            }
        }
    }
    FracSeries { shift: Q::zero(), step: 1, coeffs: v.into_iter().map(qi).collect(), pre: Prefactor::one() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eisenstein {
    E2,
    E4,
    E6,
    /// E_2(tau) - N E_2(N tau)
    E2N(u64),
}

pub fn eisenstein(kind: Eisenstein, order: &Q) -> Result<FracSeries> {
    let n = lattice_len(&Q::zero(), 1, order);
    let plain = |pw: u32, c: i64| -> FracSeries {
        let s = sigma_table(pw, n);
        let mut v: Vec<Q> = s.into_iter().map(|x| Q::from_integer(x * c)).collect();
        v.truncate(n);
        if n > 0 {
            v[0] = Q::one();
        }
        FracSeries { shift: Q::zero(), step: 1, coeffs: v, pre: Prefactor::one() }
    };
    Ok(match kind {
        Eisenstein::E2 => plain(1, -24),
        Eisenstein::E4 => plain(3, 240),
        Eisenstein::E6 => plain(5, -504),
        Eisenstein::E2N(nn) => {
            if nn == 0 {
                return Err(Error::Series("E2N needs N >= 1".into()));
            }
            let e2 = plain(1, -24);
            let e2n = e2.rescale(&qi(nn as i64))?.scale(&qi(nn as i64));
            e2.sub(&e2n)?
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hauptmodul {
    JInv,
    Lambda,
    T3,
    T2,
    U,
    T4Plus,
    T6Plus,
}

impl Hauptmodul {
    pub const ALL: [Hauptmodul; 7] = [
        Hauptmodul::JInv,
        Hauptmodul::Lambda,
        Hauptmodul::T3,
        Hauptmodul::T2,
        Hauptmodul::U,
        Hauptmodul::T4Plus,
        Hauptmodul::T6Plus,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "j_inv" => Hauptmodul::JInv,
            "lambda" => Hauptmodul::Lambda,
            "t3" => Hauptmodul::T3,
            "t2" => Hauptmodul::T2,
            "u" => Hauptmodul::U,
            "t4plus" => Hauptmodul::T4Plus,
            "t6plus" => Hauptmodul::T6Plus,
            other => return Err(Error::Parse(format!("unknown Hauptmodul {other:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Hauptmodul::JInv => "j_inv",
            Hauptmodul::Lambda => "lambda",
            Hauptmodul::T3 => "t3",
            Hauptmodul::T2 => "t2",
            Hauptmodul::U => "u",
            Hauptmodul::T4Plus => "t4plus",
            Hauptmodul::T6Plus => "t6plus",
        }
    }

    /// Leading coefficient C_1.
    pub fn c1(self) -> i64 {
        match self {
            Hauptmodul::JInv => 1728,
            Hauptmodul::Lambda | Hauptmodul::T2 => 16,
            Hauptmodul::T3 => 27,
            Hauptmodul::U => -64,
            Hauptmodul::T4Plus => 256,
            Hauptmodul::T6Plus => 108,
        }
    }
}

fn eta_pow(m: i64, k: i64, order: &Q) -> Result<FracSeries> {
    eta_quotient(&[EtaFactor { m: qi(m), k: qi(k) }], order)
}

fn ef(m: Q, k: i64) -> EtaFactor {
    EtaFactor { m, k: qi(k) }
}

pub fn hauptmodul(id: Hauptmodul, order: &Q) -> Result<FracSeries> {
    // a little slack so ratios keep the requested precision
    let o = order + qi(2);
    let out = match id {
        Hauptmodul::JInv => {
            let e4 = eisenstein(Eisenstein::E4, &o)?;
            let e6 = eisenstein(Eisenstein::E6, &o)?;
            let r = e6.pow_int(2)?.div(&e4.pow_int(3)?)?;
            r.neg().add_const(&Q::one())?
        }
        Hauptmodul::Lambda => eta_quotient(&[ef(q(1, 2), 8), ef(qi(2), 16), ef(qi(1), -24)], &(&o + qi(1)))?
            .scale(&qi(16)),
        Hauptmodul::T2 => hauptmodul(Hauptmodul::Lambda, &(order / qi(2) + qi(1)))?.rescale(&qi(2))?,
        Hauptmodul::U => eta_quotient(&[ef(qi(2), 24), ef(qi(1), -24)], &(&o + qi(1)))?.scale(&qi(-64)),
        Hauptmodul::T3 => {
            // 27 x / (1 + 27 x) with x = eta(3 tau)^12 / eta(tau)^12
            let x = eta_quotient(&[ef(qi(3), 12), ef(qi(1), -12)], &(&o + qi(1)))?;
            x.scale(&qi(27)).div(&x.scale(&qi(27)).add_const(&Q::one())?)?
        }
        Hauptmodul::T4Plus => {
            // 256 x / (1 + 64 x)^2 with x = eta(2 tau)^24 / eta(tau)^24
            let x = eta_quotient(&[ef(qi(2), 24), ef(qi(1), -24)], &(&o + qi(1)))?;
            x.scale(&qi(256)).div(&x.scale(&qi(64)).add_const(&Q::one())?.pow_int(2)?)?
        }
        Hauptmodul::T6Plus => {
            let x = eta_quotient(&[ef(qi(3), 12), ef(qi(1), -12)], &(&o + qi(1)))?;
            x.scale(&qi(108)).div(&x.scale(&qi(27)).add_const(&Q::one())?.pow_int(2)?)?
        }
    };
    Ok(out.truncate(order))
}

/// K2(r,s) = eta(tau/2)^(16s-8r-12) eta(2tau)^(8s+8r-12) / eta(tau)^(24s-30).
pub fn k2_series(r: &Q, s: &Q, order: &Q) -> Result<FracSeries> {
    let e1 = s * qi(16) - r * qi(8) - qi(12);
    let e2 = s * qi(8) + r * qi(8) - qi(12);
    let e3 = s * qi(24) - qi(30);
    eta_quotient(
        &[
            EtaFactor { m: q(1, 2), k: e1 },
            EtaFactor { m: qi(2), k: e2 },
            EtaFactor { m: qi(1), k: -e3 },
        ],
        order,
    )
}

/// (t/C_1)^(r_n) (1-t)^(q_n-r_n-1) F(alpha_flat, beta_flat; t) * theta(t)/t.
pub fn f_hd_construct(hd: &HyperDatum, t: &FracSeries, order: &Q) -> Result<FracSeries> {
    let n = hd.n();
    if n < 2 {
        return Err(Error::Datum("f_HD needs at least two pairs".into()));
    }
    let (af, bf) = (&hd.alpha()[..n - 1], &hd.beta()[..n - 1]);
    if bf.iter().any(|b| !b.is_one()) {
        return Err(Error::Datum("f_HD needs the flat beta entries equal to 1".into()));
    }
    let r = &hd.alpha()[n - 1];
    let qn = &hd.beta()[n - 1];
    let (v, c1) = match t.leading() {
        Some((v, c)) if v.is_positive() => (v, c.clone()),
        _ => return Err(Error::Series("t must have positive valuation".into())),
    };
    if !t.prefactor().is_one() || t.coeffs().iter().any(|c| !c.is_integer()) {
        return Err(Error::Series("t must have integer coefficients".into()));
    }
    let _ = v;
    let a = t.scale(&c1.recip()).pow_rational(r)?;
    let b = t.neg().add_const(&Q::one())?.pow_rational(&(qn - r - Q::one()))?;
    let f = t.compose_hypergeometric(af, bf)?;
    let l = t.theta_log_derivative()?;
    let out = a.mul(&b).mul(&f).mul(&l);
    if out.order() < *order {
        return Err(Error::Insufficient(format!(
            "f_HD known only to O(q^{}), asked for O(q^{order})",
            out.order()
        )));
    }
    Ok(out.truncate(order))
}

/// Margin needed in `t` so that f_HD reaches `order`.
pub fn f_hd_from_hauptmodul(hd: &HyperDatum, id: Hauptmodul, order: &Q) -> Result<FracSeries> {
    let t = hauptmodul(id, &(order + qi(2)))?;
    f_hd_construct(hd, &t, order)
}

// ---------------------------------------------------------------------------
// identity checks

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityCheck {
    pub name: String,
    pub order: Q,
    pub passed: bool,
    pub detail: Option<String>,
}

fn check(name: &str, lhs: Result<FracSeries>, rhs: Result<FracSeries>, order: &Q) -> IdentityCheck {
    let (passed, detail) = match (lhs, rhs) {
        (Ok(l), Ok(r)) => match l.first_difference(&r, order) {
            None => (true, None),
            Some(d) => (false, Some(d)),
        },
        (Err(e), _) | (_, Err(e)) => (false, Some(e.to_string())),
    };
    IdentityCheck { name: name.to_string(), order: order.clone(), passed, detail }
}

fn eta_a3(order: &Q) -> Result<FracSeries> {
    // (3 eta(3tau)^3 + eta(tau/3)^3) / eta(tau)
    let o = order + qi(1);
    let x = eta_pow(3, 3, &o)?.scale(&qi(3));
    let y = eta_quotient(&[ef(q(1, 3), 3)], &o)?;
    x.add(&y)?.div(&eta_pow(1, 1, &o)?)
}

fn eta_ratio(m: i64, k: i64, c: i64, sign: i64, order: &Q) -> Result<FracSeries> {
    // (eta^k + sign c eta(m tau)^k) / (eta^k + c eta(m tau)^k) via x = eta(m tau)^k / eta^k
    let x = eta_quotient(&[ef(qi(m), k), ef(qi(1), -k)], &(order + qi(1)))?;
    let num = x.scale(&qi(sign * c)).add_const(&Q::one())?;
    let den = x.scale(&qi(c)).add_const(&Q::one())?;
    num.div(&den)
}

/// The six logarithmic-derivative identities of the Hauptmoduln.
pub fn logderiv_checks(order: &Q) -> Vec<IdentityCheck> {
    let o = order + qi(2);
    let ld = |id: Hauptmodul| hauptmodul(id, &o).and_then(|t| t.theta_log_derivative());
    let mut out = Vec::new();
    out.push(check(
        "Theta lambda = theta4^4 / 2",
        ld(Hauptmodul::Lambda),
        Ok(theta4(&o).pow_int(4).map(|x| x.scale(&q(1, 2))).unwrap_or_else(|_| theta4(&o))),
        order,
    ));
    let th42 = theta4(&o).rescale(&qi(2)).and_then(|x| x.pow_int(4));
    out.push(check(
        "Theta u = (1-u)^(1/2) theta4(2tau)^4",
        ld(Hauptmodul::U),
        hauptmodul(Hauptmodul::U, &o)
            .and_then(|u| u.neg().add_const(&Q::one()))
            .and_then(|x| x.pow_rational(&q(1, 2)))
            .and_then(|x| Ok(x.mul(&th42.clone()?))),
        order,
    ));
    out.push(check(
        "Theta u = (1+lambda(2tau))/(1-lambda(2tau)) theta4(2tau)^4",
        ld(Hauptmodul::U),
        hauptmodul(Hauptmodul::T2, &o).and_then(|l2| {
            let num = l2.add_const(&Q::one())?;
            let den = l2.neg().add_const(&Q::one())?;
            Ok(num.div(&den)?.mul(&th42.clone()?))
        }),
        order,
    ));
    out.push(check(
        "Theta t3 = (1-t3) a(tau)^2",
        ld(Hauptmodul::T3),
        hauptmodul(Hauptmodul::T3, &o).and_then(|t| {
            let a = eta_a3(&o)?;
            Ok(t.neg().add_const(&Q::one())?.mul(&a.pow_int(2)?))
        }),
        order,
    ));
    out.push(check(
        "Theta (1728/j) = E6/E4",
        ld(Hauptmodul::JInv),
        eisenstein(Eisenstein::E6, &o).and_then(|e6| e6.div(&eisenstein(Eisenstein::E4, &o)?)),
        order,
    ));
    out.push(check(
        "Theta t4+ = -E_{2,2} (eta^24 - 64 eta(2tau)^24)/(eta^24 + 64 eta(2tau)^24)",
        ld(Hauptmodul::T4Plus),
        eisenstein(Eisenstein::E2N(2), &o)
            .and_then(|e| Ok(e.neg().mul(&eta_ratio(2, 24, 64, -1, &o)?))),
        order,
    ));
    out.push(check(
        "Theta t6+ = -E_{2,3}/2 (eta^12 - 27 eta(3tau)^12)/(eta^12 + 27 eta(3tau)^12)",
        ld(Hauptmodul::T6Plus),
        eisenstein(Eisenstein::E2N(3), &o)
            .and_then(|e| Ok(e.scale(&q(-1, 2)).mul(&eta_ratio(3, 12, 27, -1, &o)?))),
        order,
    ));
    out
}

fn hyp(alpha: &[Q], t: Result<FracSeries>) -> Result<FracSeries> {
    let beta = vec![Q::one(); alpha.len()];
    t?.compose_hypergeometric(alpha, &beta)
}

/// lambda^r (1-lambda)^(s-r-1) 2F1(1/2,1/2;lambda) Theta(lambda) vs 2^(4r-1) K2(r,s).
pub fn alt_2_eta_check(r: &Q, s: &Q, order: &Q) -> IdentityCheck {
    let o = order + qi(2);
    let lhs = (|| {
        let l = hauptmodul(Hauptmodul::Lambda, &o)?;
        let a = l.pow_rational(r)?;
        let b = l.neg().add_const(&Q::one())?.pow_rational(&(s - r - Q::one()))?;
        let f = l.compose_hypergeometric(&[q(1, 2), q(1, 2)], &[Q::one(), Q::one()])?;
        Ok(a.mul(&b).mul(&f).mul(&l.theta_log_derivative()?))
    })();
    let rhs = (|| {
        let k = k2_series(r, s, &o)?;
        let (c, pre) = rational_power(&qi(2), &(r * qi(4) - Q::one()))?;
        Ok(k.scale(&c).with_prefactor(pre))
    })();
    check(&format!("alt-2-eta (r,s)=({r},{s})"), lhs, rhs, order)
}

/// Hypergeometric evaluations at Hauptmoduln and theta relations.
pub fn appendix_checks(order: &Q) -> Vec<IdentityCheck> {
    let o = order + qi(2);
    let h = |id| hauptmodul(id, &o);
    let half = q(1, 2);
    let mut out = Vec::new();
    out.push(check(
        "2F1(1/2,1/2;lambda) = theta3^2",
        hyp(&[half.clone(), half.clone()], h(Hauptmodul::Lambda)),
        theta3(&o).pow_int(2),
        order,
    ));
    out.push(check(
        "2F1(1/2,1/2;lambda(2tau)) = theta3(2tau)^2",
        hyp(&[half.clone(), half.clone()], h(Hauptmodul::T2)),
        theta3(&o).rescale(&qi(2)).and_then(|x| x.pow_int(2)),
        order,
    ));
    out.push(check(
        "2F1(1/3,2/3;t3) = (3eta(3tau)^3 + eta(tau/3)^3)/eta(tau)",
        hyp(&[q(1, 3), q(2, 3)], h(Hauptmodul::T3)),
        eta_a3(&o),
        order,
    ));
    out.push(check(
        "2F1(1/3,2/3;t3) = sum q^(n^2+nm+m^2)",
        hyp(&[q(1, 3), q(2, 3)], h(Hauptmodul::T3)),
        Ok(theta_hexagonal(&o)),
        order,
    ));
    out.push(check(
        "2F1(1/4,3/4;u/(u-1)) = (-E_{2,2})^(1/2)",
        hyp(
            &[q(1, 4), q(3, 4)],
            h(Hauptmodul::U).and_then(|u| u.div(&u.add_const(&qi(-1))?)),
        ),
        eisenstein(Eisenstein::E2N(2), &o).and_then(|e| e.neg().pow_rational(&half)),
        order,
    ));
    out.push(check(
        "3F2(1/2,1/2,1/2;u) = theta4(2tau)^4",
        hyp(&[half.clone(), half.clone(), half.clone()], h(Hauptmodul::U)),
        theta4(&o).rescale(&qi(2)).and_then(|x| x.pow_int(4)),
        order,
    ));
    out.push(check(
        "3F2(1/2,1/3,2/3;t6+) = -E_{2,3}/2",
        hyp(&[half.clone(), q(1, 3), q(2, 3)], h(Hauptmodul::T6Plus)),
        eisenstein(Eisenstein::E2N(3), &o).map(|e| e.scale(&q(-1, 2))),
        order,
    ));
    out.push(check(
        "3F2(1/2,1/4,3/4;t4+) = -E_{2,2}",
        hyp(&[half.clone(), q(1, 4), q(3, 4)], h(Hauptmodul::T4Plus)),
        eisenstein(Eisenstein::E2N(2), &o).map(|e| e.neg()),
        order,
    ));
    out.push(check(
        "3F2(1/2,1/6,5/6;1728/j) = E4^(1/2)",
        hyp(&[half.clone(), q(1, 6), q(5, 6)], h(Hauptmodul::JInv)),
        eisenstein(Eisenstein::E4, &o).and_then(|e| e.pow_rational(&half)),
        order,
    ));
    out.push(check(
        "2F1(1/12,5/12;1728/j)^4 = E4",
        hyp(&[q(1, 12), q(5, 12)], h(Hauptmodul::JInv)).and_then(|x| x.pow_int(4)),
        eisenstein(Eisenstein::E4, &o),
        order,
    ));
    out.push(check(
        "theta4^4 = (1-lambda) theta3^4",
        theta4(&o).pow_int(4),
        h(Hauptmodul::Lambda)
            .and_then(|l| Ok(l.neg().add_const(&Q::one())?.mul(&theta3(&o).pow_int(4)?))),
        order,
    ));
    for (r, s) in [(q(1, 2), qi(1)), (q(1, 4), q(3, 4)), (q(1, 8), qi(1))] {
        out.push(alt_2_eta_check(&r, &s, order));
    }
    out
}

// ---------------------------------------------------------------------------
// expression language

/// Parsed q-expansion expression.
#[derive(Debug, Clone, PartialEq)]
pub enum QExpr {
    Num(Q),
    Q,
    Call(String, Vec<Q>),
    Neg(Box<QExpr>),
    Add(Box<QExpr>, Box<QExpr>),
    Sub(Box<QExpr>, Box<QExpr>),
    Mul(Box<QExpr>, Box<QExpr>),
    Div(Box<QExpr>, Box<QExpr>),
    Pow(Box<QExpr>, Q),
}

const FUNCS: &[(&str, usize, usize)] = &[
    // name, min args, max args
    ("eta", 0, 1),
    ("theta3", 0, 1),
    ("theta4", 0, 1),
    ("E2", 0, 1),
    ("E4", 0, 1),
    ("E6", 0, 1),
    ("E2N", 1, 2),
    ("j_inv", 0, 1),
    ("lambda", 0, 1),
    ("t3", 0, 1),
    ("t2", 0, 1),
    ("u", 0, 1),
    ("t4plus", 0, 1),
    ("t6plus", 0, 1),
    ("k2", 2, 3),
];

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Parse(format!("{msg} at position {}", self.pos)))
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<QExpr> {
        self.depth += 1;
        if self.depth > 64 {
            return self.err("expression nested too deeply");
        }
        let mut lhs = if self.eat(b'-') { QExpr::Neg(Box::new(self.term()?)) } else { self.term()? };
        loop {
            if self.eat(b'+') {
                lhs = QExpr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = QExpr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<QExpr> {
        let mut lhs = self.power()?;
        loop {
            if self.eat(b'*') {
                lhs = QExpr::Mul(Box::new(lhs), Box::new(self.power()?));
            } else if self.eat(b'/') {
                lhs = QExpr::Div(Box::new(lhs), Box::new(self.power()?));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<QExpr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let e = if self.eat(b'(') {
                let e = self.rational()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                e
            } else {
                self.rational()?
            };
            return Ok(QExpr::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn integer_text(&mut self) -> Option<String> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
        }
    }

    /// Signed rational literal `-a/b`.
    fn rational(&mut self) -> Result<Q> {
        let neg = self.eat(b'-');
        let Some(n) = self.integer_text() else {
            return self.err("expected a number");
        };
        let mut text = n;
        if self.peek() == Some(b'/') {
            let save = self.pos;
            self.pos += 1;
            match self.integer_text() {
                Some(d) => text = format!("{text}/{d}"),
                None => self.pos = save,
            }
        }
        let v = parse_rational(&text)?;
        Ok(if neg { -v } else { v })
    }

    fn atom(&mut self) -> Result<QExpr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => {
                let t = self.integer_text().unwrap_or_default();
                Ok(QExpr::Num(parse_rational(&t)?))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                if name == "q" {
                    return Ok(QExpr::Q);
                }
                let Some(&(_, lo, hi)) = FUNCS.iter().find(|f| f.0 == name) else {
                    return self.err(&format!("unknown name {name:?}"));
                };
                let mut args = Vec::new();
                if self.eat(b'(') {
                    loop {
                        args.push(self.rational()?);
                        if self.eat(b',') {
                            continue;
                        }
                        if self.eat(b')') {
                            break;
                        }
                        return self.err("expected ',' or ')'");
                    }
                }
                if args.len() < lo || args.len() > hi {
                    return self.err(&format!("{name} takes {lo} to {hi} arguments"));
                }
                Ok(QExpr::Call(name, args))
            }
            _ => self.err("expected a term"),
        }
    }
}

pub fn parse_qexpr(s: &str) -> Result<QExpr> {
    let mut p = Parser { s: s.as_bytes(), pos: 0, depth: 0 };
    let e = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

fn positive_arg(args: &[Q], i: usize) -> Result<Q> {
    let m = args.get(i).cloned().unwrap_or_else(Q::one);
    if !m.is_positive() {
        return Err(Error::Series(format!("multiplier {m} must be positive")));
    }
    Ok(m)
}

fn eval_call(name: &str, args: &[Q], order: &Q) -> Result<FracSeries> {
    if name == "k2" {
        let m = positive_arg(args, 2)?;
        return k2_series(&args[0], &args[1], &(order / &m + qi(1)))?.rescale(&m);
    }
    if name == "eta" {
        let m = positive_arg(args, 0)?;
        return eta_quotient(&[EtaFactor { m, k: Q::one() }], order);
    }
    let (m, base): (Q, Box<dyn Fn(&Q) -> Result<FracSeries>>) = match name {
        "E2N" => {
            let n = args[0].to_integer().to_u64().filter(|_| args[0].is_integer() && args[0].is_positive());
            let n = n.ok_or_else(|| Error::Series("E2N needs a positive integer N".into()))?;
            (positive_arg(args, 1)?, Box::new(move |o| eisenstein(Eisenstein::E2N(n), o)))
        }
        "theta3" => (positive_arg(args, 0)?, Box::new(|o| Ok(theta3(o)))),
        "theta4" => (positive_arg(args, 0)?, Box::new(|o| Ok(theta4(o)))),
        "E2" => (positive_arg(args, 0)?, Box::new(|o| eisenstein(Eisenstein::E2, o))),
        "E4" => (positive_arg(args, 0)?, Box::new(|o| eisenstein(Eisenstein::E4, o))),
        "E6" => (positive_arg(args, 0)?, Box::new(|o| eisenstein(Eisenstein::E6, o))),
        other => {
            let id = Hauptmodul::parse(other)?;
            (positive_arg(args, 0)?, Box::new(move |o| hauptmodul(id, o)))
        }
    };
    base(&(order / &m + qi(1)))?.rescale(&m)
}

fn eval_at(e: &QExpr, order: &Q) -> Result<FracSeries> {
    Ok(match e {
        QExpr::Num(c) => FracSeries::constant(c.clone(), order),
        QExpr::Q => {
            let n = lattice_len(&Q::one(), 1, order);
            let mut v = vec![Q::zero(); n];
            if n > 0 {
                v[0] = Q::one();
            }
            FracSeries { shift: Q::one(), step: 1, coeffs: v, pre: Prefactor::one() }
        }
        QExpr::Call(name, args) => eval_call(name, args, order)?,
        QExpr::Neg(a) => eval_at(a, order)?.neg(),
        QExpr::Add(a, b) => eval_at(a, order)?.add(&eval_at(b, order)?)?,
        QExpr::Sub(a, b) => eval_at(a, order)?.sub(&eval_at(b, order)?)?,
        QExpr::Mul(a, b) => eval_at(a, order)?.mul(&eval_at(b, order)?),
        QExpr::Div(a, b) => eval_at(a, order)?.div(&eval_at(b, order)?)?,
        QExpr::Pow(a, k) => eval_at(a, order)?.pow_rational(k)?,
    })
}

/// Evaluates an expression to `O(q^order)`, retrying with extra working precision
/// when negative valuations eat into the requested order.
pub fn eval_qexpr(e: &QExpr, order: &Q) -> Result<FracSeries> {
    let mut work = order.clone();
    for _ in 0..8 {
        let s = eval_at(e, &work)?;
        let got = s.order();
        if got >= *order {
            return Ok(s.truncate(order));
        }
        work = &work + (order - got) + qi(1);
    }
    Err(Error::Insufficient(format!("could not reach O(q^{order})")))
}

pub fn qexp(expr: &str, order: &Q) -> Result<FracSeries> {
    eval_qexpr(&parse_qexpr(expr)?, order)
}
