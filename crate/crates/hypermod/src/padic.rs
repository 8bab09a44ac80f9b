//! Residues modulo p^e: Teichmuller lifts, Morita's p-adic gamma function,
//! Gross-Koblitz Jacobi sums and the Gauss-sum route to H_p.

use crate::charsum::{is_prime, pow_mod, primitive_root};
use crate::cyclo::CycloElement;
use crate::error::{Error, Result};
use crate::hd_core::{HyperDatum, Q};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadicCtx {
    pub p: u64,
    pub e: u32,
    pub modulus: u64,
}

impl PadicCtx {
    pub fn new(p: u64, e: u32) -> Result<Self> {
        if p < 2 || !is_prime(p) {
            return Err(Error::Prime(format!("{p} is not prime")));
        }
        if e == 0 {
            return Err(Error::Precision("precision exponent must be >= 1".into()));
        }
        let modulus = (0..e)
            .try_fold(1u64, |acc, _| acc.checked_mul(p).filter(|&m| m < 1 << 63))
            .ok_or_else(|| Error::Precision(format!("{p}^{e} exceeds 2^63; use a smaller prime")))?;
        Ok(PadicCtx { p, e, modulus })
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.modulus as u128) as u64
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.modulus - b % self.modulus)
    }

    pub fn neg(&self, a: u64) -> u64 {
        (self.modulus - a % self.modulus) % self.modulus
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    pub fn pow(&self, a: u64, k: u64) -> u64 {
        pow_mod(a, k, self.modulus)
    }

    pub fn from_i64(&self, x: i64) -> u64 {
        x.rem_euclid(self.modulus as i64) as u64
    }

    pub fn from_bigint(&self, x: &BigInt) -> u64 {
        x.mod_floor(&BigInt::from(self.modulus)).to_u64().expect("reduced")
    }

    pub fn inv(&self, a: u64) -> Result<u64> {
        let a = a % self.modulus;
        if a.is_multiple_of(self.p) {
            return Err(Error::NonUnit(format!("{a} is divisible by {}", self.p)));
        }
        let ext = (a as i128).extended_gcd(&(self.modulus as i128));
        Ok(ext.x.rem_euclid(self.modulus as i128) as u64)
    }

    /// Image of a rational with p-unit denominator.
    pub fn residue(&self, x: &Q) -> Result<u64> {
        let d = self.from_bigint(x.denom());
        let inv = self.inv(d).map_err(|_| Error::NonUnit(format!("denominator of {x} divisible by {}", self.p)))?;
        Ok(self.mul(self.from_bigint(x.numer()), inv))
    }

    /// Unique representative in (-p^e/2, p^e/2].
    pub fn lift_symmetric(&self, x: u64) -> i64 {
        let x = x % self.modulus;
        if x > self.modulus / 2 {
            x as i64 - self.modulus as i64
        } else {
            x as i64
        }
    }

    /// The (p-1)-st root of unity congruent to x mod p.
    pub fn teichmuller(&self, x: i64) -> Result<u64> {
        let r = self.from_i64(x);
        if r.is_multiple_of(self.p) {
            return Err(Error::NonUnit(format!("{} divides {x}", self.p)));
        }
        Ok(self.pow(r, self.modulus / self.p))
    }

    /// Gamma_p at each residue, by one streaming pass over 1..max(args).
    pub fn gamma_batch(&self, args: &[u64]) -> Vec<u64> {
        let mut order: Vec<usize> = (0..args.len()).collect();
        order.sort_by_key(|&i| args[i] % self.modulus);
        let mut out = vec![0u64; args.len()];
        // prod holds prod_{0<j<n, p not | j} j
        let mut n = 0u64;
        let mut prod = 1u64;
        for i in order {
            let target = args[i] % self.modulus;
            if target == 0 {
                out[i] = 1 % self.modulus;
                continue;
            }
            if n == 0 {
                n = 1;
            }
            while n < target {
                if !n.is_multiple_of(self.p) {
                    prod = self.mul(prod, n);
                }
                n += 1;
            }
            out[i] = if target % 2 == 1 { self.neg(prod) } else { prod };
        }
        out
    }

    pub fn gamma(&self, x: u64) -> u64 {
        self.gamma_batch(&[x])[0]
    }

    pub fn gamma_rational(&self, x: &Q) -> Result<u64> {
        Ok(self.gamma(self.residue(x)?))
    }

    /// zeta_M -> omega(g)^{-(p-1)/M} for the least primitive root g, so that
    /// iota(1/(p-1)) lands on the inverse Teichmuller character.
    ///
    /// Coordinates may carry powers of p in their denominators as long as the
    /// element itself is integral at the chosen prime; the work is then done at
    /// a raised precision and divided back down.
    pub fn embed_cyclo(&self, z: &CycloElement) -> Result<u64> {
        let m = z.conductor();
        if !(self.p - 1).is_multiple_of(m) {
            return Err(Error::Prime(format!("p={} is not 1 mod {m}", self.p)));
        }
        let pb = BigInt::from(self.p);
        let mut k = 0u32;
        for c in z.coeffs() {
            let mut d = c.denom().clone();
            let mut v = 0;
            while (&d % &pb).is_zero() {
                d /= &pb;
                v += 1;
            }
            k = k.max(v);
        }
        let wide = PadicCtx::new(self.p, self.e + k)?;
        let pk = BigInt::from(self.p).pow(k);
        let g = primitive_root(self.p);
        let w = wide.teichmuller(g as i64)?;
        let zeta = wide.inv(wide.pow(w, (self.p - 1) / m))?;
        let mut acc = 0u64;
        let mut zk = 1u64;
        for c in z.coeffs() {
            if !c.is_zero() {
                let scaled = c * Q::from_integer(pk.clone());
                acc = wide.add(acc, wide.mul(wide.residue(&scaled)?, zk));
            }
            zk = wide.mul(zk, zeta);
        }
        let pk64 = pk.to_u64().expect("fits");
        if !acc.is_multiple_of(pk64) {
            return Err(Error::NonUnit(format!("element is not integral at the chosen prime above {}", self.p)));
        }
        Ok((acc / pk64) % self.modulus)
    }

    /// -J(iota(r), iota(s)) through Gross-Koblitz.
    pub fn jacobi_gk(&self, r: &Q, s: &Q) -> Result<u64> {
        let zero = Q::zero();
        let one = Q::one();
        if *r <= zero || *r >= one || *s <= zero || *s >= one {
            return Err(Error::Precondition(format!("parameters {r}, {s} must lie in (0,1)")));
        }
        let pm1 = Q::from_integer(BigInt::from(self.p - 1));
        if !(r * &pm1).is_integer() || !(s * &pm1).is_integer() {
            return Err(Error::Prime(format!("p={} does not split the parameters", self.p)));
        }
        let t = r + s;
        if t == one {
            // J(chi, conj chi) = -chi(-1), chi = omega-bar^{a}
            let a = (r * &pm1).to_integer().to_u64().expect("small");
            return Ok(if a.is_multiple_of(2) { 1 } else { self.neg(1) });
        }
        let g = self.gamma_batch(&[self.residue(r)?, self.residue(s)?, self.residue(&(&t - if t > one { one.clone() } else { zero }))?]);
        let base = self.mul(self.mul(g[0], g[1]), self.inv(g[2])?);
        Ok(if t > Q::one() { self.neg(self.mul(base, self.p % self.modulus)) } else { base })
    }

    /// H_p(alpha, beta; lambda) embedded in Z/p^e, from McCarthy's Gauss-sum form with
    /// every Gauss sum replaced by Gross-Koblitz. The pi-powers combine to (-p)^{T_k},
    /// T_k = #{a_j < k} - #{b_j <= k}, tracked as an integer exponent.
    pub fn h_p(&self, hd: &HyperDatum, lambda: i64) -> Result<u64> {
        let p = self.p;
        if !(p - 1).is_multiple_of(hd.lcd()) {
            return Err(Error::Prime(format!("p={p} is not 1 mod M={}", hd.lcd())));
        }
        if lambda.rem_euclid(p as i64) == 0 {
            return Err(Error::Precondition("lambda must be a unit mod p".into()));
        }
        let pm1 = p - 1;
        let scaled = |x: &Q| -> u64 { (x * Q::from_integer(BigInt::from(pm1))).to_integer().to_u64().expect("small") };
        let a: Vec<u64> = hd.alpha().iter().map(scaled).collect();
        let b: Vec<u64> = hd.beta().iter().map(scaled).collect();

        // Gamma_p(m/(p-1)) for m = 0..p-2
        let args: Vec<u64> = (0..pm1)
            .map(|m| self.residue(&Q::new(BigInt::from(m), BigInt::from(pm1))))
            .collect::<Result<_>>()?;
        let gam = self.gamma_batch(&args);
        let gi: Vec<u64> = gam.iter().map(|&x| self.inv(x)).collect::<Result<_>>()?;

        let mut den = 1u64;
        for (&aj, &bj) in a.iter().zip(&b) {
            den = self.mul(den, self.mul(gi[(aj % pm1) as usize], gi[((pm1 - bj % pm1) % pm1) as usize]));
        }

        let s = if hd.n().is_multiple_of(2) { lambda } else { -lambda };
        let w = self.teichmuller(s)?;
        let mut wk = 1u64;
        let mut total = 0u64;
        for k in 0..pm1 {
            let t = a.iter().filter(|&&aj| aj < k).count() as i64 - b.iter().filter(|&&bj| bj <= k).count() as i64;
            if t < 0 {
                return Err(Error::Precondition(format!("negative p-power at k={k}: ordering hypothesis fails")));
            }
            if (t as u32) < self.e {
                let mut term = self.mul(wk, den);
                for (&aj, &bj) in a.iter().zip(&b) {
                    let m1 = (aj + pm1 - k) % pm1;
                    let m2 = (k + pm1 - bj % pm1) % pm1;
                    term = self.mul(term, self.mul(gam[m1 as usize], gam[m2 as usize]));
                }
                let mp = self.from_i64(-(p as i64));
                term = self.mul(term, self.pow(mp, t as u64));
                total = self.add(total, term);
            }
            wk = self.mul(wk, w);
        }
        let one_minus_p = self.sub(1, p % self.modulus);
        Ok(self.mul(total, self.inv(one_minus_p)?))
    }
}

/// Smallest e with p^e > 2(n p^{(n-1)/2} + p).
pub fn choose_precision(hd: &HyperDatum, p: u64) -> Result<u32> {
    let n = hd.n() as u128;
    let p128 = p as u128;
    let pn = (0..n.saturating_sub(1)).try_fold(1u128, |acc, _| acc.checked_mul(p128));
    let mut e = 1u32;
    let mut pe: u128 = p128;
    loop {
        if pe >= 1 << 63 {
            return Err(Error::Precision(format!("no precision below 2^63 suffices for p={p}")));
        }
        // p^e > 2n sqrt(p^{n-1}) + 2p  <=>  (p^e - 2p)^2 > 4 n^2 p^{n-1}
        if pe > 2 * p128 {
            let lhs = (pe - 2 * p128).checked_mul(pe - 2 * p128);
            let rhs = pn.and_then(|x| x.checked_mul(4 * n * n));
            let ok = match (lhs, rhs) {
                (Some(l), Some(r)) => l > r,
                (None, Some(_)) => true,
                _ => false,
            };
            if ok {
                return Ok(e);
            }
        }
        e += 1;
        pe *= p128;
    }
}

/// G_1(a) mod p for each p-adic argument a (given mod p^2), from the Gamma_p difference quotient.
pub fn g1_batch(p: u64, args: &[u64]) -> Result<Vec<u64>> {
    if p < 5 {
        return Err(Error::Prime("G_1 needs p >= 5".into()));
    }
    let ctx = PadicCtx::new(p, 2)?;
    let mut q = Vec::with_capacity(2 * args.len());
    for &a in args {
        q.push(a % ctx.modulus);
        q.push(ctx.add(a, p));
    }
    let g = ctx.gamma_batch(&q);
    args.iter()
        .enumerate()
        .map(|(i, _)| {
            let ratio = ctx.mul(g[2 * i + 1], ctx.inv(g[2 * i])?);
            let d = ctx.sub(ratio, 1);
            debug_assert_eq!(d % p, 0);
            Ok(d / p)
        })
        .collect()
}

pub fn g1_mod_p(p: u64, a: &Q) -> Result<u64> {
    let ctx = PadicCtx::new(p, 2)?;
    Ok(g1_batch(p, &[ctx.residue(a)?])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charsum::{h_from_p, jacobi_sum_exact, PrimeContext};
    use crate::hd_core::{q, qi};

    #[test]
    fn precision_examples() {
        let hd3 = HyperDatum::from_pairs(&[(1, 2); 3], &[(1, 1); 3]).unwrap();
        let hd4 = HyperDatum::from_pairs(&[(1, 2); 4], &[(1, 1); 4]).unwrap();
        assert_eq!(choose_precision(&hd3, 13).unwrap(), 2);
        assert_eq!(choose_precision(&hd4, 13).unwrap(), 3);
        assert_eq!(choose_precision(&hd3, 5).unwrap(), 3);
        assert!(PadicCtx::new(1_000_003, 4).is_err());
    }

    #[test]
    fn teichmuller_lifts() {
        let c = PadicCtx::new(5, 2).unwrap();
        assert_eq!(c.teichmuller(1).unwrap(), 1);
        assert_eq!(c.teichmuller(4).unwrap(), 24);
        assert_eq!(c.teichmuller(2).unwrap(), 7);
        assert_eq!(c.pow(7, 4), 1);
        assert!(c.teichmuller(10).is_err());
    }

    #[test]
    fn gamma_examples() {
        let c = PadicCtx::new(5, 3).unwrap();
        assert_eq!(c.gamma(1), c.modulus - 1);
        assert_eq!(c.gamma(4), 6);
        assert_eq!(c.gamma(0), 1);
        // Gamma_p(1/2)^2 = (-1)^{(p+1)/2}
        for p in [5u64, 7, 13] {
            let c = PadicCtx::new(p, 3).unwrap();
            let g = c.gamma_rational(&q(1, 2)).unwrap();
            let expect = if p.div_ceil(2) % 2 == 0 { 1 } else { c.modulus - 1 };
            assert_eq!(c.mul(g, g), expect);
        }
    }

    #[test]
    fn lifting() {
        let c = PadicCtx::new(7, 2).unwrap();
        assert_eq!(c.lift_symmetric(48), -1);
        assert_eq!(c.lift_symmetric(2), 2);
        assert_eq!(c.lift_symmetric(24), 24);
        assert_eq!(c.lift_symmetric(25), -24);
    }

    #[test]
    fn jacobi_cross_route() {
        for p in [5u64, 13, 17, 29, 37] {
            let ctx = PrimeContext::new(p).unwrap();
            let pc = PadicCtx::new(p, 3).unwrap();
            for (r, s) in [(q(1, 2), q(1, 2)), (q(1, 4), q(1, 2)), (q(1, 4), q(1, 4)), (q(3, 4), q(1, 2)), (q(3, 4), q(1, 4))] {
                let exact = jacobi_sum_exact(&ctx, &r, &s, 4).unwrap();
                let lhs = pc.embed_cyclo(&exact).unwrap();
                assert_eq!(lhs, pc.neg(pc.jacobi_gk(&r, &s).unwrap()), "p={p} r={r} s={s}");
            }
        }
    }

    #[test]
    fn embedding_is_multiplicative() {
        let pc = PadicCtx::new(13, 2).unwrap();
        let i = CycloElement::zeta_pow(4, 1);
        let e = pc.embed_cyclo(&i).unwrap();
        assert_eq!(pc.mul(e, e), pc.modulus - 1);
        let a = CycloElement::new(4, vec![qi(2), qi(-3)]).unwrap();
        let b = CycloElement::new(4, vec![q(1, 2), qi(5)]).unwrap();
        let ab = a.mul(&b).unwrap();
        assert_eq!(pc.embed_cyclo(&ab).unwrap(), pc.mul(pc.embed_cyclo(&a).unwrap(), pc.embed_cyclo(&b).unwrap()));
        assert_eq!(pc.embed_cyclo(&CycloElement::from_int(1, 5)).unwrap(), 5);
    }

    #[test]
    fn dual_route_small() {
        let data = [
            HyperDatum::from_pairs(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]).unwrap(),
            HyperDatum::from_pairs(&[(1, 4), (3, 4)], &[(1, 1), (1, 1)]).unwrap(),
            HyperDatum::from_pairs(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]).unwrap(),
        ];
        for hd in &data {
            for p in [13u64, 17, 29] {
                let ctx = PrimeContext::new(p).unwrap();
                let e = choose_precision(hd, p).unwrap();
                let pc = PadicCtx::new(p, e).unwrap();
                for lam in [1i64, 2, 5] {
                    let exact = h_from_p(hd, lam as u64, &ctx).unwrap();
                    assert_eq!(pc.embed_cyclo(&exact).unwrap(), pc.h_p(&hd.sorted(), lam).unwrap(), "{hd} p={p} lam={lam}");
                }
            }
        }
    }

    #[test]
    fn g1_properties() {
        let p = 7;
        assert_eq!(g1_mod_p(p, &q(1, 3)).unwrap(), g1_mod_p(p, &q(2, 3)).unwrap());
        assert_eq!(g1_mod_p(p, &q(1, 3)).unwrap(), g1_mod_p(p, &(q(1, 3) + qi(7))).unwrap());
        let c = PadicCtx::new(p, 2).unwrap();
        let a = c.residue(&q(1, 3)).unwrap();
        let g1 = g1_mod_p(p, &q(1, 3)).unwrap();
        for m in 1..=3u64 {
            let r = c.mul(c.gamma(c.add(a, m * p)), c.inv(c.gamma(a)).unwrap());
            assert_eq!(r, c.add(1, c.mul(g1, m * p)));
        }
        assert!(g1_mod_p(3, &q(1, 3)).is_err());
    }
}
