//! Characters of F_p with values in Z[zeta_M], Jacobi sums, and the inductive sum P.
//!
//! All values are exact. Character values are powers of zeta_M read off a
//! discrete-log table, so the heavy loops run on small integer arrays.

use crate::cyclo::CycloElement;
use crate::error::{Error, Result};
use crate::hd_core::{HyperDatum, Q};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = ((r as u128 * b as u128) % m as u128) as u64;
        }
        b = ((b as u128 * b as u128) % m as u128) as u64;
        e >>= 1;
    }
    r
}

#[derive(Debug, Clone)]
pub struct PrimeContext {
    pub p: u64,
    pub g: u64,
    dlog: Vec<u32>,
    inv: Vec<u32>,
}

impl PrimeContext {
    pub fn new(p: u64) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::Prime(format!("{p} is not an odd prime")));
        }
        if p > 1 << 26 {
            return Err(Error::Prime(format!("{p} too large for table construction")));
        }
        let g = primitive_root(p);
        let mut dlog = vec![0u32; p as usize];
        let mut x = 1u64;
        for k in 0..p - 1 {
            dlog[x as usize] = k as u32;
            x = x * g % p;
        }
        let mut inv = vec![0u32; p as usize];
        for a in 1..p {
            // g^{-k} = g^{p-1-k}
            let k = dlog[a as usize] as u64;
            inv[a as usize] = pow_mod(g, (p - 1 - k) % (p - 1), p) as u32;
        }
        Ok(PrimeContext { p, g, dlog, inv })
    }

    pub fn dlog(&self, x: u64) -> Option<u64> {
        let x = x % self.p;
        (x != 0).then(|| self.dlog[x as usize] as u64)
    }

    pub fn inv(&self, x: u64) -> Option<u64> {
        let x = x % self.p;
        (x != 0).then(|| self.inv[x as usize] as u64)
    }

    /// Reduces a rational to F_p.
    pub fn reduce(&self, x: &Q) -> Result<u64> {
        let p = BigInt::from(self.p);
        let d = x.denom().mod_floor(&p).to_u64().unwrap_or(0);
        if d == 0 {
            return Err(Error::Prime(format!("denominator of {x} vanishes mod {}", self.p)));
        }
        let n = x.numer().mod_floor(&p).to_u64().unwrap_or(0);
        Ok(n * self.inv(d).expect("nonzero") % self.p)
    }
}

pub fn primitive_root(p: u64) -> u64 {
    let mut fac = Vec::new();
    let mut n = p - 1;
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            fac.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        fac.push(n);
    }
    (2..p)
        .find(|&g| fac.iter().all(|&f| pow_mod(g, (p - 1) / f, p) != 1))
        .unwrap_or(1)
}

/// The exponent e with iota(r)(g) = zeta_M^e, i.e. e = r*M mod M.
pub fn char_exponent(r: &Q, m: u64, p: u64) -> Result<u64> {
    let rm = r * Q::from_integer(BigInt::from(m));
    if !rm.is_integer() {
        return Err(Error::Precondition(format!("{r} not expressible with conductor {m}")));
    }
    if !(r * Q::from_integer(BigInt::from(p - 1))).is_integer() {
        return Err(Error::Precondition(format!("(p-1)*{r} is not integral for p={p}")));
    }
    Ok(rm.to_integer().mod_floor(&BigInt::from(m)).to_u64().expect("small"))
}

/// iota(r)(x) as a power of zeta_M: None when x = 0.
fn char_pow(ctx: &PrimeContext, e: u64, m: u64, x: u64) -> Option<u64> {
    ctx.dlog(x).map(|d| d * e % m)
}

pub fn char_eval(ctx: &PrimeContext, r: &Q, m: u64, x: u64) -> Result<CycloElement> {
    let e = char_exponent(r, m, ctx.p)?;
    Ok(match char_pow(ctx, e, m, x) {
        None => CycloElement::zero(m),
        Some(k) => CycloElement::zeta_pow(m, k as i64),
    })
}

fn conductor_for(xs: &[&Q]) -> u64 {
    let mut m = BigInt::one();
    for x in xs {
        m = m.lcm(x.denom());
    }
    m.to_u64().expect("small conductor")
}

/// J(A,B) = sum_x A(x) B(1-x), expressed with conductor `m` (pass 0 for the natural one).
pub fn jacobi_sum_exact(ctx: &PrimeContext, a: &Q, b: &Q, m: u64) -> Result<CycloElement> {
    let m = if m == 0 { conductor_for(&[a, b]) } else { m };
    let ea = char_exponent(a, m, ctx.p)?;
    let eb = char_exponent(b, m, ctx.p)?;
    let mut acc = vec![0i64; m as usize];
    for x in 2..ctx.p {
        let i = char_pow(ctx, ea, m, x).expect("x != 0");
        let j = char_pow(ctx, eb, m, ctx.p + 1 - x).expect("x != 1");
        acc[((i + j) % m) as usize] += 1;
    }
    Ok(CycloElement::from_group_ring(m, &acc))
}

fn check_split(hd: &HyperDatum, ctx: &PrimeContext) -> Result<()> {
    let m = hd.lcd();
    if !(ctx.p - 1).is_multiple_of(m) {
        return Err(Error::Prime(format!("p={} is not 1 mod M={m}", ctx.p)));
    }
    Ok(())
}

/// P(HD; lambda) for every lambda in F_p, as vectors in Z[x]/(x^M - 1).
///
/// The first pair must have beta = 1; each later pair (r_k, q_k) is one
/// multiplicative convolution pass V'(l) = sum_x R_k(x) (conj(R_k) Q_k)(1-x) V(l x).
pub fn p_sum_table(hd: &HyperDatum, ctx: &PrimeContext) -> Result<Vec<Vec<i64>>> {
    check_split(hd, ctx)?;
    if !hd.beta()[0].is_one() {
        return Err(Error::Precondition("the first beta entry must be 1".into()));
    }
    let p = ctx.p as usize;
    let m = hd.lcd();
    let mu = m as usize;
    let e1 = char_exponent(&hd.alpha()[0], m, ctx.p)?;
    let conj1 = (m - e1) % m;

    let mut v = vec![0i64; p * mu];
    for lam in 0..p {
        if let Some(k) = char_pow(ctx, conj1, m, (ctx.p + 1 - lam as u64) % ctx.p) {
            v[lam * mu + k as usize] = 1;
        }
    }

    for k in 1..hd.n() {
        let er = char_exponent(&hd.alpha()[k], m, ctx.p)?;
        let eq = char_exponent(&hd.beta()[k], m, ctx.p)?;
        let eb = (m - er + eq) % m;
        // w[x] = exponent of R_k(x) * (conj(R_k) Q_k)(1-x), for x not in {0,1}
        let w: Vec<usize> = (0..p as u64)
            .map(|x| {
                if x < 2 {
                    return usize::MAX;
                }
                let a = char_pow(ctx, er, m, x).expect("unit");
                let b = char_pow(ctx, eb, m, ctx.p + 1 - x).expect("unit");
                ((a + b) % m) as usize
            })
            .collect();
        let mut out = vec![0i64; p * mu];
        for lam in 0..p {
            let dst = &mut out[lam * mu..(lam + 1) * mu];
            let mut y = (2 * lam) % p;
            for &wx in &w[2..] {
                let src = &v[y * mu..(y + 1) * mu];
                for i in 0..mu {
                    let t = i + wx;
                    dst[if t >= mu { t - mu } else { t }] += src[i];
                }
                y += lam;
                if y >= p {
                    y -= p;
                }
            }
        }
        v = out;
    }
    Ok(v.chunks(mu).map(|c| c.to_vec()).collect())
}

pub fn p_sum(hd: &HyperDatum, lambda: u64, ctx: &PrimeContext) -> Result<CycloElement> {
    let table = p_sum_table(hd, ctx)?;
    Ok(CycloElement::from_group_ring(hd.lcd(), &table[(lambda % ctx.p) as usize]))
}

/// The normalizer calJ = prod_{i>=2} -J(iota(r_i), iota(q_i - r_i)) for a datum whose first beta is 1.
pub fn calj(hd: &HyperDatum, ctx: &PrimeContext) -> Result<CycloElement> {
    let m = hd.lcd();
    let mut acc = CycloElement::one(m);
    for i in 1..hd.n() {
        let s = &hd.beta()[i] - &hd.alpha()[i];
        let j = jacobi_sum_exact(ctx, &hd.alpha()[i], &s, m)?;
        acc = acc.mul(&j.neg())?;
    }
    Ok(acc)
}

/// H = (-1)^{n-1} calJ^{-1} P, with the pairs reordered so a unit beta comes first.
pub fn h_from_p(hd: &HyperDatum, lambda: u64, ctx: &PrimeContext) -> Result<CycloElement> {
    if !hd.is_primitive() {
        return Err(Error::Datum(format!("{hd} is not primitive")));
    }
    let hd = hd
        .with_unit_first()
        .ok_or_else(|| Error::Datum("H needs some beta entry equal to 1".into()))?;
    let p = p_sum(&hd, lambda, ctx)?;
    let j = calj(&hd, ctx)?;
    assert!(!j.is_zero(), "calJ vanishes for a primitive datum");
    let h = p.div(&j)?;
    Ok(if hd.n() % 2 == 0 { h.neg() } else { h })
}

/// H for every lambda in F_p at once (shares one convolution table).
pub fn h_from_p_all(hd: &HyperDatum, ctx: &PrimeContext) -> Result<Vec<CycloElement>> {
    if !hd.is_primitive() {
        return Err(Error::Datum(format!("{hd} is not primitive")));
    }
    let hd = hd
        .with_unit_first()
        .ok_or_else(|| Error::Datum("H needs some beta entry equal to 1".into()))?;
    let table = p_sum_table(&hd, ctx)?;
    let jinv = calj(&hd, ctx)?.inv()?;
    let sign = if hd.n() % 2 == 0 { -1 } else { 1 };
    table
        .iter()
        .map(|v| {
            let p = CycloElement::from_group_ring(hd.lcd(), v);
            Ok(p.mul(&jinv)?.scale(&Q::from_integer(BigInt::from(sign))))
        })
        .collect()
}

/// iota(r_n)(C1)^{-1} * prod_{i=2}^{n-1} iota(r_i)(-1), where r_n is the last alpha entry and
/// r_1 <= ... <= r_{n-1} are the others in ascending order.
pub fn chi_hd(ctx: &PrimeContext, hd: &HyperDatum, c1: i64) -> Result<CycloElement> {
    let m = hd.lcd();
    let c1r = Q::from_integer(BigInt::from(c1));
    let c = ctx.reduce(&c1r)?;
    if c == 0 {
        return Err(Error::Prime(format!("p={} divides C1={c1}", ctx.p)));
    }
    let n = hd.n();
    let rn = &hd.alpha()[n - 1];
    let en = char_exponent(rn, m, ctx.p)?;
    let k = char_pow(ctx, en, m, c).expect("unit");
    let mut total = (m - k) % m;
    let mut flat: Vec<Q> = hd.alpha()[..n - 1].to_vec();
    flat.sort();
    for r in flat.iter().skip(1) {
        let e = char_exponent(r, m, ctx.p)?;
        total += char_pow(ctx, e, m, ctx.p - 1).expect("unit");
    }
    Ok(CycloElement::zeta_pow(m, (total % m) as i64))
}

/// Affine points of y^2 = x(1-x)(1-zx) plus the point at infinity.
pub fn legendre_count(p: u64, z: u64) -> u64 {
    let mut sq = vec![0u64; p as usize];
    for y in 0..p {
        sq[(y * y % p) as usize] += 1;
    }
    let mut n = 1;
    for x in 0..p {
        let v = x * ((p + 1 - x) % p) % p * ((p + 1 - z * x % p) % p) % p;
        n += sq[v as usize];
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hd_core::{q, qi};

    fn hd(a: &[(i64, i64)], b: &[(i64, i64)]) -> HyperDatum {
        HyperDatum::from_pairs(a, b).unwrap()
    }

    #[test]
    fn contexts() {
        let c = PrimeContext::new(5).unwrap();
        assert_eq!(c.g, 2);
        assert_eq!(c.dlog(4), Some(2));
        assert_eq!(PrimeContext::new(7).unwrap().g, 3);
        assert!(PrimeContext::new(9).is_err());
        assert!(PrimeContext::new(2).is_err());
        let c = PrimeContext::new(101).unwrap();
        for x in 1..101 {
            assert_eq!(pow_mod(c.g, c.dlog(x).unwrap(), 101), x);
            assert_eq!(x * c.inv(x).unwrap() % 101, 1);
        }
    }

    #[test]
    fn characters() {
        let c = PrimeContext::new(5).unwrap();
        assert_eq!(char_eval(&c, &q(1, 2), 2, 2).unwrap(), CycloElement::from_int(2, -1));
        assert_eq!(char_eval(&c, &qi(1), 1, 3).unwrap(), CycloElement::one(1));
        assert!(char_eval(&c, &q(1, 2), 2, 0).unwrap().is_zero());
        assert!(char_eval(&c, &q(1, 3), 3, 1).is_err());
    }

    #[test]
    fn jacobi_sums() {
        let c = PrimeContext::new(5).unwrap();
        assert_eq!(jacobi_sum_exact(&c, &q(1, 2), &q(1, 2), 0).unwrap(), CycloElement::from_int(2, -1));
        let c13 = PrimeContext::new(13).unwrap();
        assert_eq!(jacobi_sum_exact(&c13, &q(1, 4), &q(1, 2), 0).unwrap().norm(), qi(13));
        assert_eq!(jacobi_sum_exact(&c13, &qi(1), &qi(1), 0).unwrap(), CycloElement::from_int(1, 11));
    }

    #[test]
    fn base_case() {
        let c = PrimeContext::new(5).unwrap();
        let d = hd(&[(1, 2)], &[(1, 1)]);
        assert_eq!(p_sum(&d, 2, &c).unwrap(), CycloElement::from_int(2, 1));
    }

    #[test]
    fn legendre_point_counts() {
        let d = hd(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]);
        for p in [3u64, 5, 7, 11, 13, 29, 61] {
            let c = PrimeContext::new(p).unwrap();
            let t = p_sum_table(&d, &c).unwrap();
            for z in 2..p {
                let pz = CycloElement::from_group_ring(2, &t[z as usize]).as_integer().unwrap();
                assert_eq!(pz, BigInt::from(legendre_count(p, z) as i64 - p as i64 - 1), "p={p} z={z}");
            }
        }
    }

    #[test]
    fn example_normalization() {
        // -phi(-64) J(phi, phi) = 1
        for p in [3u64, 5, 7, 11, 13] {
            let c = PrimeContext::new(p).unwrap();
            let phi64 = char_eval(&c, &q(1, 2), 2, c.reduce(&qi(-64)).unwrap()).unwrap();
            let j = jacobi_sum_exact(&c, &q(1, 2), &q(1, 2), 2).unwrap();
            assert_eq!(phi64.mul(&j).unwrap().neg(), CycloElement::one(2));
        }
    }

    #[test]
    fn calj_all_ones() {
        let d = hd(&[(1, 2); 4], &[(1, 1); 4]);
        for p in [5u64, 7] {
            let c = PrimeContext::new(p).unwrap();
            let phim1 = if p % 4 == 1 { 1 } else { -1 };
            assert_eq!(calj(&d, &c).unwrap(), CycloElement::from_int(2, phim1));
        }
    }

    #[test]
    fn galois_equivariance() {
        let d = hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1), (1, 1), (1, 1)]);
        let c = PrimeContext::new(17).unwrap();
        for lam in [1u64, 3] {
            let base = p_sum(&d, lam, &c).unwrap();
            for k in [3i64, 5, 7, -1] {
                let lhs = base.aut(k).unwrap();
                let rhs = p_sum(&d.conjugate(k).unwrap(), lam, &c).unwrap();
                assert_eq!(lhs, rhs, "c={k}");
            }
        }
    }

    #[test]
    fn chi_examples() {
        let d = hd(&[(1, 2); 4], &[(1, 1); 4]);
        for p in [3u64, 5, 7, 11] {
            let c = PrimeContext::new(p).unwrap();
            let phim1 = if p % 4 == 1 { 1 } else { -1 };
            assert_eq!(chi_hd(&c, &d, -64).unwrap(), CycloElement::from_int(2, phim1));
        }
        let d = hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1); 3]);
        for p in [17u64, 41, 73] {
            let c = PrimeContext::new(p).unwrap();
            let two = if p % 8 == 1 || p % 8 == 7 { 1 } else { -1 };
            // the (-1) factor from r_2 = 1/2 is 1 here since p = 1 mod 4
            assert_eq!(chi_hd(&c, &d, 16).unwrap(), CycloElement::from_int(8, two));
        }
    }
}
