//! Hecke operators on integer-exponent q-expansions, Hecke matrices on small
//! spaces, simultaneous eigenvectors and the three-term congruence checks.

use crate::cyclo::CycloElement;
use crate::error::{Error, Result};
use crate::hd_core::{level_multiplier, parse_rational, qi, Q};
use crate::qform::{k2_series, FracSeries};
use crate::residue::valuation;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

/// Kronecker symbol (a/n) for n >= 1.
pub fn kronecker(a: i64, n: u64) -> i64 {
    if n == 0 {
        return if a.abs() == 1 { 1 } else { 0 };
    }
    let mut n = n;
    let mut a = a as i128;
    let mut t = 1i64;
    let tz = n.trailing_zeros();
    if tz > 0 {
        if a % 2 == 0 {
            return 0;
        }
        if tz % 2 == 1 && (a.rem_euclid(8) == 3 || a.rem_euclid(8) == 5) {
            t = -t;
        }
        n >>= tz;
    }
    // Jacobi symbol (a/n), n odd
    let mut nn = n as i128;
    a = a.rem_euclid(nn);
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if nn % 8 == 3 || nn % 8 == 5 {
                t = -t;
            }
        }
        std::mem::swap(&mut a, &mut nn);
        if a % 4 == 3 && nn % 4 == 3 {
            t = -t;
        }
        a %= nn;
    }
    if nn == 1 {
        t
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharKind {
    Trivial,
    Kronecker(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirichletChar {
    pub modulus: u64,
    pub kind: CharKind,
}

impl DirichletChar {
    pub fn trivial(modulus: u64) -> Self {
        DirichletChar { modulus: modulus.max(1), kind: CharKind::Trivial }
    }

    pub fn kronecker(d: i64, modulus: u64) -> Self {
        DirichletChar { modulus: modulus.max(1), kind: CharKind::Kronecker(d) }
    }

    pub fn eval(&self, n: u64) -> i64 {
        if n.gcd(&self.modulus) != 1 {
            return 0;
        }
        match self.kind {
            CharKind::Trivial => 1,
            CharKind::Kronecker(d) => kronecker(d, n),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            CharKind::Trivial => format!("trivial mod {}", self.modulus),
            CharKind::Kronecker(d) => format!("({d}/.) mod {}", self.modulus),
        }
    }
}

fn c_zero() -> CycloElement {
    CycloElement::zero(1)
}

fn c_rat(x: Q) -> CycloElement {
    CycloElement::from_rational(1, x)
}

fn same(a: &CycloElement, b: &CycloElement) -> bool {
    a.sub(b).map(|d| d.is_zero()).unwrap_or(false)
}

/// Coefficients a(0), a(1), ..., a(order-1) of a weight-k form with character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormVector {
    pub weight: u32,
    pub chi: DirichletChar,
    coeffs: Vec<CycloElement>,
}

impl FormVector {
    pub fn from_rationals(weight: u32, chi: DirichletChar, v: Vec<Q>) -> Self {
        FormVector { weight, chi, coeffs: v.into_iter().map(c_rat).collect() }
    }

    pub fn from_elements(weight: u32, chi: DirichletChar, coeffs: Vec<CycloElement>) -> Self {
        FormVector { weight, chi, coeffs }
    }

    /// Needs integer exponents and no symbolic prefactor.
    pub fn from_series(weight: u32, chi: DirichletChar, s: &FracSeries) -> Result<Self> {
        Ok(Self::from_rationals(weight, chi, s.integer_coeffs()?))
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[CycloElement] {
        &self.coeffs
    }

    pub fn coeff(&self, n: usize) -> Option<&CycloElement> {
        self.coeffs.get(n)
    }

    /// Rational value of a(n), if it is rational.
    pub fn rational_coeff(&self, n: usize) -> Option<Q> {
        self.coeffs.get(n)?.as_rational()
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut out = self.clone();
        out.coeffs.truncate(order);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(CycloElement::is_zero)
    }

    /// First n with a(n) != 0.
    pub fn first_nonzero(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    /// sum t_i f_i over the common truncation.
    pub fn combine(terms: &[(CycloElement, &FormVector)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::Linear("empty combination".into()))?.1;
        let n = terms.iter().map(|(_, f)| f.order()).min().unwrap_or(0);
        let mut out = vec![c_zero(); n];
        for (t, f) in terms {
            if t.is_zero() {
                continue;
            }
            for (o, c) in out.iter_mut().zip(&f.coeffs) {
                if !c.is_zero() {
                    *o = o.add(&t.mul(c)?)?;
                }
            }
        }
        Ok(FormVector { weight: first.weight, chi: first.chi, coeffs: out })
    }

    pub fn to_json(&self, limit: usize) -> Value {
        let terms: serde_json::Map<String, Value> = self
            .coeffs
            .iter()
            .enumerate()
            .take(limit)
            .filter(|(_, c)| !c.is_zero())
            .map(|(n, c)| (n.to_string(), c.to_json()))
            .collect();
        json!({ "weight": self.weight, "character": self.chi.label(), "order": self.order(), "coefficients": terms })
    }
}

/// a(n) -> a(np) + chi(p) p^(k-1) a(n/p).
pub fn t_p(f: &FormVector, p: u64) -> Result<FormVector> {
    if p < 2 {
        return Err(Error::Prime(format!("{p} is not prime")));
    }
    let p_us = p as usize;
    if f.order() == 0 {
        return Err(Error::Insufficient("empty truncation".into()));
    }
    let n_out = (f.order() - 1) / p_us + 1;
    let chi = f.chi.eval(p);
    let w = Q::from_integer(BigInt::from(chi) * num_traits::pow(BigInt::from(p), f.weight.saturating_sub(1) as usize));
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let mut c = f.coeffs[n * p_us].clone();
        if n % p_us == 0 && n > 0 && chi != 0 {
            let low = &f.coeffs[n / p_us];
            if !low.is_zero() {
                c = c.add(&low.scale(&w))?;
            }
        }
        out.push(c);
    }
    Ok(FormVector { weight: f.weight, chi: f.chi, coeffs: out })
}

pub const MIN_WITNESSES: usize = 20;

/// The scalar with T_p f = lambda f, checked on every coefficient in range.
pub fn eigenvalue(f: &FormVector, p: u64) -> Result<CycloElement> {
    let g = t_p(f, p)?;
    if f.is_zero() {
        return Err(Error::NotEigen("zero form".into()));
    }
    let witnesses: Vec<usize> = (1..g.order()).filter(|&n| !f.coeffs[n].is_zero()).collect();
    let lambda = match witnesses.first() {
        Some(&n0) => g.coeffs[n0].div(&f.coeffs[n0])?,
        None => c_zero(),
    };
    for n in 0..g.order() {
        if !same(&g.coeffs[n], &lambda.mul(&f.coeffs[n])?) {
            return Err(Error::NotEigen(format!("T_{p} f and f are not proportional at q^{n}")));
        }
    }
    if witnesses.len() < MIN_WITNESSES {
        return Err(Error::Insufficient(format!(
            "only {} nonzero coefficients below {} for T_{p}",
            witnesses.len(),
            g.order()
        )));
    }
    Ok(lambda)
}

// ---------------------------------------------------------------------------
// small dense linear algebra over cyclotomic fields

pub type Matrix = Vec<Vec<CycloElement>>;

/// Solves sum_i x_i rows[i][c] = target[c] for every column c, or None when inconsistent.
fn express(rows: &[Vec<CycloElement>], target: &[CycloElement]) -> Result<Option<Vec<CycloElement>>> {
    let r = rows.len();
    let ncols = target.len();
    if rows.iter().any(|row| row.len() < ncols) {
        return Err(Error::Linear("rows shorter than target".into()));
    }
    // echelon form of equations (coefficients over x, rhs)
    let mut ech: Vec<(usize, Vec<CycloElement>, CycloElement)> = Vec::new();
    let mut used = vec![false; ncols];
    for c in 0..ncols {
        if ech.len() == r {
            break;
        }
        let mut eq: Vec<CycloElement> = rows.iter().map(|row| row[c].clone()).collect();
        let mut rhs = target[c].clone();
        for (piv, e, er) in &ech {
            if !eq[*piv].is_zero() {
                let k = eq[*piv].clone();
                for (x, y) in eq.iter_mut().zip(e) {
                    *x = x.sub(&k.mul(y)?)?;
                }
                rhs = rhs.sub(&k.mul(er)?)?;
            }
        }
        if let Some(piv) = eq.iter().position(|x| !x.is_zero()) {
            let inv = eq[piv].inv()?;
            let eq: Vec<CycloElement> = eq.iter().map(|x| x.mul(&inv)).collect::<Result<_>>()?;
            let rhs = rhs.mul(&inv)?;
            // keep earlier rows reduced at the new pivot
            for (_, e, er) in ech.iter_mut() {
                if !e[piv].is_zero() {
                    let k = e[piv].clone();
                    for (x, y) in e.iter_mut().zip(&eq) {
                        *x = x.sub(&k.mul(y)?)?;
                    }
                    *er = er.sub(&k.mul(&rhs)?)?;
                }
            }
            ech.push((piv, eq, rhs));
            used[c] = true;
        } else if !rhs.is_zero() {
            return Ok(None);
        }
    }
    if ech.len() < r {
        return Err(Error::Linear(format!("basis of size {r} has rank {} on the available coefficients", ech.len())));
    }
    let mut x = vec![c_zero(); r];
    for (piv, _, rhs) in &ech {
        x[*piv] = rhs.clone();
    }
    // verify every column
    for c in 0..ncols {
        let mut s = c_zero();
        for (xi, row) in x.iter().zip(rows) {
            if !xi.is_zero() && !row[c].is_zero() {
                s = s.add(&xi.mul(&row[c])?)?;
            }
        }
        if !same(&s, &target[c]) {
            return Ok(None);
        }
    }
    Ok(Some(x))
}

/// M with T_ell(basis_j) = sum_i M[i][j] basis_i.
pub fn hecke_matrix(basis: &[FormVector], ell: u64) -> Result<Matrix> {
    if basis.is_empty() {
        return Err(Error::Linear("empty basis".into()));
    }
    let images: Vec<FormVector> = basis.iter().map(|b| t_p(b, ell)).collect::<Result<_>>()?;
    let n = images.iter().map(FormVector::order).min().unwrap_or(0);
    let rows: Vec<Vec<CycloElement>> = basis.iter().map(|b| b.coeffs[..n].to_vec()).collect();
    let r = basis.len();
    let mut m = vec![vec![c_zero(); r]; r];
    for (j, img) in images.iter().enumerate() {
        let x = express(&rows, &img.coeffs[..n])?
            .ok_or_else(|| Error::Linear(format!("T_{ell} of basis element {j} leaves the span")))?;
        for (i, xi) in x.into_iter().enumerate() {
            m[i][j] = xi;
        }
    }
    Ok(m)
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    let mut out = vec![vec![c_zero(); m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = c_zero();
            for l in 0..k {
                if !a[i][l].is_zero() && !b[l][j].is_zero() {
                    s = s.add(&a[i][l].mul(&b[l][j])?)?;
                }
            }
            out[i][j] = s;
        }
    }
    Ok(out)
}

pub fn mat_scalar(n: usize, c: &CycloElement) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { c.clone() } else { c_zero() }).collect()).collect()
}

pub fn mat_eq(a: &Matrix, b: &Matrix) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(u, v)| same(u, v)))
}

fn mat_vec(a: &Matrix, v: &[CycloElement]) -> Result<Vec<CycloElement>> {
    a.iter()
        .map(|row| {
            let mut s = c_zero();
            for (x, y) in row.iter().zip(v) {
                if !x.is_zero() && !y.is_zero() {
                    s = s.add(&x.mul(y)?)?;
                }
            }
            Ok(s)
        })
        .collect()
}

/// Rational matrix entries as strings, cyclotomic ones as JSON objects.
pub fn matrix_json(m: &Matrix) -> Value {
    Value::Array(
        m.iter()
            .map(|row| {
                Value::Array(
                    row.iter()
                        .map(|x| match x.as_rational() {
                            Some(r) => json!(r.to_string()),
                            None => x.to_json(),
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

fn squarefree_part(n: &BigInt) -> Result<(BigInt, Vec<u64>)> {
    // n = s^2 * prod(primes), returns (s, primes)
    let mut n = n.abs();
    let mut s = BigInt::one();
    let mut primes = Vec::new();
    let mut p = 2u64;
    while BigInt::from(p * p) <= n {
        let bp = BigInt::from(p);
        let mut e = 0;
        while (&n % &bp).is_zero() {
            n /= &bp;
            e += 1;
        }
        for _ in 0..e / 2 {
            s *= &bp;
        }
        if e % 2 == 1 {
            primes.push(p);
        }
        p += 1;
        if p > 1_000_000 {
            return Err(Error::Linear("square root of a number with large prime factors".into()));
        }
    }
    if !n.is_one() {
        primes.push(n.to_u64().ok_or_else(|| Error::Linear("prime factor too large".into()))?);
    }
    Ok((s, primes))
}

/// A square root of the rational `d` inside a cyclotomic field.
pub fn sqrt_rational(d: &Q) -> Result<CycloElement> {
    if d.is_zero() {
        return Ok(c_zero());
    }
    let num = d.numer() * d.denom();
    let (s, primes) = squarefree_part(&num)?;
    let mut acc = CycloElement::from_rational(1, Q::new(s, d.denom().clone()));
    if num.is_negative() {
        acc = acc.mul(&CycloElement::zeta_pow(4, 1))?;
    }
    for p in primes {
        let r = if p == 2 {
            CycloElement::zeta_pow(8, 1).add(&CycloElement::zeta_pow(8, 7))?
        } else {
            let mut v = vec![0i64; p as usize];
            for (a, slot) in v.iter_mut().enumerate().skip(1) {
                *slot = kronecker(a as i64, p);
            }
            let g = CycloElement::from_group_ring(p, &v);
            // g^2 = (-1)^((p-1)/2) p
            if p % 4 == 3 {
                g.mul(&CycloElement::zeta_pow(4, 3))?
            } else {
                g
            }
        };
        acc = acc.mul(&r)?;
    }
    Ok(acc)
}

/// Vectors spanning ker(a) (columns of a are acting on coordinates).
fn kernel(a: &Matrix) -> Result<Vec<Vec<CycloElement>>> {
    let n = a.first().map_or(0, Vec::len);
    let mut rows: Vec<Vec<CycloElement>> = a.clone();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(k) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, k);
        let inv = rows[r][c].inv()?;
        rows[r] = rows[r].iter().map(|x| x.mul(&inv)).collect::<Result<_>>()?;
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                let pr = rows[r].clone();
                for (x, y) in rows[i].iter_mut().zip(&pr) {
                    *x = x.sub(&f.mul(y)?)?;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let mut out = Vec::new();
    for free in (0..n).filter(|c| !pivots.contains(c)) {
        let mut v = vec![c_zero(); n];
        v[free] = CycloElement::one(1);
        for (i, &pc) in pivots.iter().enumerate() {
            v[pc] = rows[i][free].neg();
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EigenForm {
    /// coefficients on the basis
    pub t: Vec<CycloElement>,
    pub eigenvalues: Vec<(u64, CycloElement)>,
}

impl EigenForm {
    pub fn to_json(&self) -> Value {
        let show = |x: &CycloElement| match x.as_rational() {
            Some(r) => json!(r.to_string()),
            None => x.to_json(),
        };
        json!({
            "t": self.t.iter().map(show).collect::<Vec<_>>(),
            "eigenvalues": self.eigenvalues.iter().map(|(l, v)| json!({"ell": l, "value": show(v)})).collect::<Vec<_>>(),
        })
    }
}

/// Simultaneous eigenvectors of T_ell (ell in ells) on span(basis).
pub fn eigenform_combination(basis: &[FormVector], ells: &[u64]) -> Result<Vec<EigenForm>> {
    let r = basis.len();
    if r == 0 {
        return Err(Error::Linear("empty basis".into()));
    }
    let mats: Vec<Matrix> = ells.iter().map(|&l| hecke_matrix(basis, l)).collect::<Result<_>>()?;
    for i in 0..mats.len() {
        for j in i + 1..mats.len() {
            if !mat_eq(&mat_mul(&mats[i], &mats[j])?, &mat_mul(&mats[j], &mats[i])?) {
                return Err(Error::Linear(format!("T_{} and T_{} do not commute", ells[i], ells[j])));
            }
        }
    }
    let identity: Vec<Vec<CycloElement>> = (0..r)
        .map(|i| (0..r).map(|j| if i == j { CycloElement::one(1) } else { c_zero() }).collect())
        .collect();
    let mut spaces: Vec<Vec<Vec<CycloElement>>> = vec![identity];
    let mut classes: Vec<(bool, Vec<u64>)> = Vec::new();
    for (li, m) in mats.iter().enumerate() {
        let mut next = Vec::new();
        for w in spaces {
            let d = w.len();
            // restriction A: M w_j = sum_i A[i][j] w_i
            let mut a = vec![vec![c_zero(); d]; d];
            for (j, wj) in w.iter().enumerate() {
                let img = mat_vec(m, wj)?;
                let x = express(&w, &img)?
                    .ok_or_else(|| Error::Linear(format!("T_{} does not preserve a joint eigenspace", ells[li])))?;
                for (i, xi) in x.into_iter().enumerate() {
                    a[i][j] = xi;
                }
            }
            // minimal polynomial of degree 1 or 2
            let flat = |x: &Matrix| -> Vec<CycloElement> { x.iter().flatten().cloned().collect() };
            let id = mat_scalar(d, &CycloElement::one(1));
            let eigs: Vec<CycloElement> = if let Some(c) = express(&[flat(&id)], &flat(&a))? {
                vec![c[0].clone()]
            } else {
                let a2 = mat_mul(&a, &a)?;
                let c = express(&[flat(&id), flat(&a)], &flat(&a2))?.ok_or_else(|| {
                    Error::Linear(format!("T_{} has minimal polynomial of degree > 2 on a subspace", ells[li]))
                })?;
                // x^2 - c1 x - c0
                let disc = c[1].mul(&c[1])?.add(&c[0].scale(&qi(4)))?;
                let disc_q = disc.as_rational().ok_or_else(|| {
                    Error::Linear("nested square root needed for eigenvalues".into())
                })?;
                let (_, primes) = squarefree_part(&(disc_q.numer() * disc_q.denom()))?;
                let class = (disc_q.is_negative(), primes);
                if (!class.1.is_empty() || class.0)
                    && !classes.contains(&class) {
                        classes.push(class);
                    }
                if classes.len() > 2 {
                    return Err(Error::Linear("more than two square roots needed".into()));
                }
                let s = sqrt_rational(&disc_q)?;
                let half = Q::new(BigInt::one(), BigInt::from(2));
                vec![c[1].add(&s)?.scale(&half), c[1].sub(&s)?.scale(&half)]
            };
            for lam in eigs {
                let shifted: Matrix = (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|j| if i == j { a[i][j].sub(&lam) } else { Ok(a[i][j].clone()) })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                let mut space = Vec::new();
                for kv in kernel(&shifted)? {
                    // back to coordinates on the basis
                    let mut v = vec![c_zero(); r];
                    for (coef, wv) in kv.iter().zip(&w) {
                        if coef.is_zero() {
                            continue;
                        }
                        for (x, y) in v.iter_mut().zip(wv) {
                            *x = x.add(&coef.mul(y)?)?;
                        }
                    }
                    space.push(v);
                }
                if !space.is_empty() {
                    next.push(space);
                }
            }
        }
        spaces = next;
    }
    let mut out = Vec::new();
    for w in spaces {
        if w.len() != 1 {
            return Err(Error::Linear(format!(
                "joint eigenspace of dimension {} (add more primes)",
                w.len()
            )));
        }
        let mut t = w.into_iter().next().expect("one vector");
        let terms: Vec<(CycloElement, &FormVector)> = t.iter().cloned().zip(basis.iter()).collect();
        let g = FormVector::combine(&terms)?;
        let n0 = g.first_nonzero().ok_or_else(|| Error::Linear("eigenvector gives the zero form".into()))?;
        let inv = g.coeffs[n0].inv()?;
        t = t.iter().map(|x| x.mul(&inv)).collect::<Result<_>>()?;
        let eigenvalues = mats
            .iter()
            .zip(ells)
            .map(|(m, &l)| {
                let mv = mat_vec(m, &t)?;
                let i = t.iter().position(|x| !x.is_zero()).expect("nonzero eigenvector");
                Ok((l, mv[i].div(&t[i])?))
            })
            .collect::<Result<_>>()?;
        out.push(EigenForm { t, eigenvalues });
    }
    Ok(out)
}

pub fn eigen_form(basis: &[FormVector], e: &EigenForm) -> Result<FormVector> {
    let terms: Vec<(CycloElement, &FormVector)> = e.t.iter().cloned().zip(basis.iter()).collect();
    FormVector::combine(&terms)
}

// ---------------------------------------------------------------------------
// congruence checks

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfglReport {
    pub p: u64,
    pub r_max: u32,
    pub b_checks: usize,
    pub c_checks: usize,
    pub b_ok: bool,
    pub c_ok: bool,
    pub ordinary: bool,
    pub unit_root: Option<BigInt>,
    pub unit_b_ok: bool,
    pub unit_c_ok: bool,
}

impl CfglReport {
    pub fn passed(&self) -> bool {
        self.b_ok && self.c_ok && (!self.ordinary || (self.unit_b_ok && self.unit_c_ok))
    }
}

fn divisible(x: &Q, p: u64, r: u32) -> bool {
    match valuation(x, p) {
        None => true,
        Some(v) => v >= r as i64,
    }
}

fn get(s: &[Q], i: u64) -> Q {
    s.get(i as usize).cloned().unwrap_or_else(Q::zero)
}

/// s_{mp^r} - alpha s_{mp^(r-1)} + beta s_{mp^(r-2)} = 0 mod p^r for all in-range m, r.
fn three_term_mod(s: &[Q], p: u64, alpha: &Q, beta: &Q, r_max: u32) -> Result<(usize, bool)> {
    let mut count = 0;
    let mut ok = true;
    for r in 1..=r_max {
        let pr = p.checked_pow(r).ok_or_else(|| Error::Insufficient("p^r overflow".into()))?;
        let mut any = false;
        let mut m = 1u64;
        while m * pr < s.len() as u64 {
            any = true;
            let top = get(s, m * pr);
            let mid = get(s, m * pr / p);
            let low = if r >= 2 {
                get(s, m * pr / (p * p))
            } else if m.is_multiple_of(p) {
                get(s, m / p)
            } else {
                Q::zero()
            };
            let v = top - alpha * mid + beta * low;
            count += 1;
            if !divisible(&v, p, r) {
                ok = false;
            }
            m += 1;
        }
        if !any {
            return Err(Error::Insufficient(format!("no index m p^{r} below {} for p = {p}", s.len())));
        }
    }
    Ok((count, ok))
}

fn unit_root_mod(alpha: &BigInt, beta: &BigInt, p: u64, r: u32) -> BigInt {
    let pr = num_traits::pow(BigInt::from(p), r as usize);
    let mut x = alpha.mod_floor(&pr);
    for _ in 0..=r {
        // x <- alpha - beta / x
        let inv = mod_inverse(&x, &pr);
        x = (alpha - beta * inv).mod_floor(&pr);
    }
    x
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> BigInt {
    let e = a.extended_gcd(m);
    e.x.mod_floor(m)
}

fn unit_root_relation(s: &[Q], p: u64, muq: &Q, r_max: u32) -> bool {
    for r in 1..=r_max {
        let pr = p.pow(r);
        let mut m = 1u64;
        while m * pr < s.len() as u64 {
            let v = get(s, m * pr) - muq * get(s, m * pr / p);
            if !divisible(&v, p, r) {
                return false;
            }
            m += 1;
        }
    }
    true
}

/// sigma(x)/x for x = c1^(-r) under Frobenius, as an integer mod p^prec:
/// the Teichmuller lift of c1^(-r(p-1)). Needs r(p-1) integral.
pub fn frobenius_twist(c1: &Q, r: &Q, p: u64, prec: u32) -> Result<Q> {
    let k = r * Q::from_integer(BigInt::from(p - 1));
    if !k.is_integer() {
        return Err(Error::Precondition(format!("{r}*({p}-1) is not an integer")));
    }
    let ctx = crate::padic::PadicCtx::new(p, prec)?;
    let base = ctx.residue(c1)?;
    let t = ctx.teichmuller(ctx.lift_symmetric(base))?;
    let k = k.to_integer().to_i64().ok_or_else(|| Error::Precondition("exponent too large".into()))?;
    let t = if k < 0 { ctx.inv(t)? } else { t };
    let v = ctx.pow(t, k.unsigned_abs());
    Ok(Q::from_integer(BigInt::from(ctx.lift_symmetric(v))))
}

/// Three-term congruences for two coefficient sequences of one differential.
/// `c_twist` is sigma(x)/x for the unit x scaling the c-side (1 when sigma is trivial);
/// the c-relation uses alpha * twist and beta * twist^(p+1).
pub fn cfgl_check(
    b: &[Q],
    c: &[Q],
    p: u64,
    alpha_p: &BigInt,
    beta_p: &BigInt,
    r_max: u32,
    c_twist: &Q,
) -> Result<CfglReport> {
    let a = Q::from_integer(alpha_p.clone());
    let bt = Q::from_integer(beta_p.clone());
    if !(beta_p % p).is_zero() {
        return Err(Error::Precondition(format!("beta_p = {beta_p} is not divisible by {p}")));
    }
    if matches!(valuation(c_twist, p), Some(v) if v != 0) || c_twist.is_zero() {
        return Err(Error::Precondition(format!("twist {c_twist} is not a {p}-adic unit")));
    }
    let ac = &a * c_twist;
    let bc = &bt * num_traits::pow(c_twist.clone(), p as usize + 1);
    let (b_checks, b_ok) = three_term_mod(b, p, &a, &bt, r_max)?;
    let (c_checks, c_ok) = three_term_mod(c, p, &ac, &bc, r_max)?;
    let ordinary = !(alpha_p % p).is_zero();
    let (unit_root, unit_b_ok, unit_c_ok) = if ordinary {
        let mu = unit_root_mod(alpha_p, beta_p, p, r_max);
        let ub = unit_root_relation(b, p, &Q::from_integer(mu.clone()), r_max);
        let uc = unit_root_relation(c, p, &(Q::from_integer(mu.clone()) * c_twist), r_max);
        (Some(mu), ub, uc)
    } else {
        (None, false, false)
    };
    Ok(CfglReport { p, r_max, b_checks, c_checks, b_ok, c_ok, ordinary, unit_root, unit_b_ok, unit_c_ok })
}

/// b_{lp^r} - b_p b_{lp^(r-1)} + chi(p) p^(k-1) b_{lp^(r-2)} = 0 for p not dividing l.
pub fn three_term_coefficient_check(f: &FormVector, p: u64, r_max: u32) -> Result<bool> {
    let lead = f.first_nonzero().ok_or_else(|| Error::NotEigen("zero form".into()))?;
    let bp = if lead == 1 && f.order() > p as usize {
        f.coeffs[p as usize].div(&f.coeffs[1])?
    } else {
        eigenvalue(f, p)?
    };
    let w = Q::from_integer(
        BigInt::from(f.chi.eval(p)) * num_traits::pow(BigInt::from(p), f.weight.saturating_sub(1) as usize),
    );
    let n = f.order() as u64;
    for r in 1..=r_max {
        let pr = p.pow(r);
        let mut l = 1u64;
        while l * pr < n {
            if !l.is_multiple_of(p) {
                let top = &f.coeffs[(l * pr) as usize];
                let mid = &f.coeffs[(l * pr / p) as usize];
                let low = if r >= 2 { f.coeffs[(l * pr / (p * p)) as usize].clone() } else { c_zero() };
                let v = top.sub(&bp.mul(mid)?)?.add(&low.scale(&w))?;
                if !v.is_zero() {
                    return Ok(false);
                }
            }
            l += 1;
        }
    }
    Ok(true)
}

/// a(1) a(mn) = a(m) a(n) for coprime m, n in range.
pub fn multiplicative_check(f: &FormVector) -> Result<bool> {
    let n = f.order();
    let a1 = f.coeffs.get(1).cloned().unwrap_or_else(c_zero);
    for m in 2..n {
        for k in 2..=m {
            if m * k >= n {
                break;
            }
            if m.gcd(&k) != 1 {
                continue;
            }
            let lhs = a1.mul(&f.coeffs[m * k])?;
            let rhs = f.coeffs[m].mul(&f.coeffs[k])?;
            if !same(&lhs, &rhs) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// basis specifications: `k2:1/8:1@16,k2:3/8:1@16`

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BasisItem {
    K2 { r: Q, s: Q, rescale: Q },
}

pub fn parse_basis_spec(spec: &str) -> Result<Vec<BasisItem>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(Error::Parse("empty basis entry".into()));
        }
        let (body, resc) = match item.split_once('@') {
            Some((b, n)) => (b, Some(n)),
            None => (item, None),
        };
        let parts: Vec<&str> = body.split(':').collect();
        match parts.as_slice() {
            ["k2", r, s] => {
                let r = parse_rational(r)?;
                let s = parse_rational(s)?;
                let rescale = match resc {
                    Some(n) => parse_rational(n)?,
                    None => qi(level_multiplier(&r)? as i64),
                };
                if !rescale.is_positive() {
                    return Err(Error::Parse(format!("rescale {rescale} must be positive")));
                }
                out.push(BasisItem::K2 { r, s, rescale });
            }
            _ => return Err(Error::Parse(format!("bad basis entry {item:?}; expected k2:r:s[@N]"))),
        }
    }
    Ok(out)
}

/// q-expansion of a basis item with integer exponents below `order`.
pub fn basis_form(item: &BasisItem, order: usize, weight: u32, chi: DirichletChar) -> Result<FormVector> {
    match item {
        BasisItem::K2 { r, s, rescale } => {
            let o = qi(order as i64) / rescale + Q::one();
            let ser = k2_series(r, s, &o)?.rescale(rescale)?.truncate(&qi(order as i64));
            if ser.order() < qi(order as i64) {
                return Err(Error::Insufficient("K2 series too short".into()));
            }
            FormVector::from_series(weight, chi, &ser)
        }
    }
}

pub fn k2_form(r: Q, s: Q, rescale: u64, order: usize) -> Result<FormVector> {
    basis_form(&BasisItem::K2 { r, s, rescale: qi(rescale as i64) }, order, 3, DirichletChar::kronecker(-4, 4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hd_core::q;
    use crate::qform::{eta_quotient, qexp, EtaFactor};

    fn f_j(j: i64, order: usize) -> FormVector {
        k2_form(q(j, 8), qi(1), 16, order).unwrap()
    }

    fn c(x: i64) -> CycloElement {
        CycloElement::from_int(1, x)
    }

    #[test]
    fn kronecker_values() {
        assert_eq!(kronecker(-4, 3), -1);
        assert_eq!(kronecker(-4, 5), 1);
        assert_eq!(kronecker(-4, 2), 0);
        assert_eq!(kronecker(2, 7), 1);
        assert_eq!(kronecker(2, 3), -1);
        assert_eq!(kronecker(-8, 3), 1);
        for p in [3u64, 5, 7, 11, 13] {
            for a in 1..p as i64 {
                let euler = crate::charsum::pow_mod(a as u64, (p - 1) / 2, p);
                let want = if euler == 1 { 1 } else { -1 };
                assert_eq!(kronecker(a, p), want);
            }
        }
    }

    #[test]
    fn hecke_table_f_j() {
        let order = 400;
        let basis: Vec<FormVector> = [1, 3, 5, 7].iter().map(|&j| f_j(j, order)).collect();
        for b in &basis {
            assert!(t_p(b, 2).unwrap().is_zero());
        }
        let t3 = hecke_matrix(&basis, 3).unwrap();
        let t5 = hecke_matrix(&basis, 5).unwrap();
        let t7 = hecke_matrix(&basis, 7).unwrap();
        // columns: T3 f1 = -12 f3, T3 f3 = f1, T3 f5 = -4 f7, T3 f7 = 3 f5
        let want3 = [(1, 0, -12), (0, 1, 1), (3, 2, -4), (2, 3, 3)];
        for (i, j, v) in want3 {
            assert!(same(&t3[i][j], &c(v)), "T3[{i}][{j}]");
        }
        let want5 = [(2, 0, 48), (3, 1, 16), (0, 2, 1), (1, 3, 3)];
        for (i, j, v) in want5 {
            assert!(same(&t5[i][j], &c(v)), "T5[{i}][{j}]");
        }
        assert!(mat_eq(&mat_mul(&t3, &t3).unwrap(), &mat_scalar(4, &c(-12))));
        assert!(mat_eq(&mat_mul(&t5, &t5).unwrap(), &mat_scalar(4, &c(48))));
        let t7x3: Matrix = t7.iter().map(|r| r.iter().map(|x| x.scale(&qi(3))).collect()).collect();
        assert!(mat_eq(&mat_mul(&t3, &t5).unwrap(), &t7x3));
        assert!(matches!(eigenvalue(&basis[0], 3), Err(Error::NotEigen(_))));
    }

    #[test]
    fn eigen_combination_f_j() {
        let order = 400;
        let basis: Vec<FormVector> = [1, 3, 5, 7].iter().map(|&j| f_j(j, order)).collect();
        let eig = eigenform_combination(&basis, &[3, 5]).unwrap();
        assert_eq!(eig.len(), 4);
        for e in &eig {
            let a3 = &e.eigenvalues[0].1;
            let a5 = &e.eigenvalues[1].1;
            assert!(same(&a3.mul(a3).unwrap(), &c(-12)));
            assert!(same(&a5.mul(a5).unwrap(), &c(48)));
            assert!(same(&e.t[0], &c(1)));
            assert!(same(&e.t[1], a3));
            assert!(same(&e.t[2], a5));
            assert!(same(&e.t[3], &a3.mul(a5).unwrap().scale(&q(1, 3))));
            let g = eigen_form(&basis, e).unwrap();
            for p in [3u64, 5, 7] {
                let lam = eigenvalue(&g, p).unwrap();
                assert!(same(&lam, g.coeff(p as usize).unwrap()));
            }
        }
        let single = eigenform_combination(&basis[..1], &[5]);
        assert!(single.is_err() || single.unwrap().len() == 1);
    }

    #[test]
    fn eigenvalue_on_f8() {
        let f = eta_quotient(
            &[EtaFactor { m: qi(2), k: qi(4) }, EtaFactor { m: qi(4), k: qi(4) }],
            &qi(400),
        )
        .unwrap();
        let f = FormVector::from_series(4, DirichletChar::trivial(8), &f).unwrap();
        for p in [3u64, 5, 7] {
            let lam = eigenvalue(&f, p).unwrap();
            assert!(same(&lam, f.coeff(p as usize).unwrap()));
            assert!(three_term_coefficient_check(&f, p, 3).unwrap());
        }
        assert!(multiplicative_check(&f.truncate(120)).unwrap());
        assert!(matches!(eigenvalue(&f, 97), Err(Error::Insufficient(_))));
    }

    #[test]
    fn f32_eigenvalues() {
        let s = qexp("eta(4)^10/eta(8)^2 - 8*eta(8)^10/eta(4)^2", &qi(600)).unwrap();
        let f = FormVector::from_series(4, DirichletChar::trivial(32), &s).unwrap();
        for p in [5u64, 13] {
            let lam = eigenvalue(&f, p).unwrap();
            assert!(same(&lam, f.coeff(p as usize).unwrap()));
        }
    }

    #[test]
    fn sqrt_roots() {
        for d in [q(-1, 1), qi(2), qi(3), qi(-3), qi(48), qi(-12), q(5, 4), qi(-7), qi(6)] {
            let s = sqrt_rational(&d).unwrap();
            assert!(same(&s.mul(&s).unwrap(), &CycloElement::from_rational(1, d.clone())), "{d}");
        }
    }

    #[test]
    fn t_p_basics() {
        let chi = DirichletChar::trivial(1);
        let z = FormVector::from_rationals(4, chi, vec![Q::zero(); 30]);
        assert!(t_p(&z, 3).unwrap().is_zero());
        assert_eq!(t_p(&z, 3).unwrap().order(), 10);
    }

    #[test]
    fn cfgl_on_f8_and_u() {
        use crate::hd_core::HyperDatum;
        use crate::hyper::u_coeffs;
        // f_HD(q) dq/q on the q^(1/2) lattice against its u-expansion
        let hd = HyperDatum::from_pairs(&[(1, 2); 4], &[(1, 1); 4]).unwrap();
        let len = 200;
        let f = crate::qform::f_hd_from_hauptmodul(&hd, crate::qform::Hauptmodul::U, &qi(len as i64 / 2))
            .unwrap()
            .rescale(&qi(2))
            .unwrap();
        let b = f.integer_coeffs().unwrap();
        let cc = u_coeffs(&hd, len as u64 - 1).unwrap();
        for p in [3u64, 5, 7, 11, 13] {
            let ap = b[p as usize].to_integer();
            let beta = BigInt::from(p).pow(3);
            let twist = frobenius_twist(&qi(-64), &q(1, 2), p, 3).unwrap();
            assert_eq!(twist, qi(kronecker(-4, p)));
            let rep = cfgl_check(&b, &cc, p, &ap, &beta, 2, &twist).unwrap();
            assert!(rep.b_ok && rep.c_ok, "p={p}: {rep:?}");
            if rep.ordinary {
                assert!(rep.unit_b_ok && rep.unit_c_ok, "p={p}");
            }
        }
    }

    #[test]
    fn basis_specs() {
        let items = parse_basis_spec("k2:1/8:1@16, k2:3/8:1").unwrap();
        assert_eq!(items[1], BasisItem::K2 { r: q(3, 8), s: qi(1), rescale: qi(16) });
        for bad in ["", "k2:1/8", "k3:1:1", "k2:a:1", "k2:1/8:1@0", "k2:1/8:1,"] {
            assert!(parse_basis_spec(bad).is_err(), "{bad}");
        }
    }
}
