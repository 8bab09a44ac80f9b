//! Scenario registry and runner behind `hypermod verify`.
//!
//! A scenario binds a datum, a Hauptmodul, a form construction and a prime
//! filter to one comparison. Built-in scenarios live in [`registry`]; user
//! scenarios load from TOML with the same fields.

use crate::charsum::{chi_hd, is_prime, legendre_count, p_sum, PrimeContext};
use crate::cyclo::CycloElement;
use crate::error::{Error, Result};
use crate::hd_core::{level_multiplier, parse_rational, q, qi, HyperDatum, S2Pair, Q};
use crate::hecke::{
    basis_form, cfgl_check, eigen_form, eigenform_combination, eigenvalue, frobenius_twist, hecke_matrix, kronecker,
    mat_eq, mat_mul, mat_scalar, matrix_json, multiplicative_check, parse_basis_spec, three_term_coefficient_check,
    DirichletChar, FormVector, Matrix, MIN_WITNESSES,
};
use crate::hyper::{
    check_dwork_lemma, check_gk_lemma, check_supercongruence, dwork_unit_root, f_trunc_mod, is_ordinary, u_coeffs,
};
use crate::padic::{choose_precision, PadicCtx};
use crate::qform::{
    alt_2_eta_check, appendix_checks, f_hd_from_hauptmodul, k2_series, logderiv_checks, qexp, Hauptmodul,
    IdentityCheck,
};
use crate::residue::check_residue_lemmas;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

// ---------------------------------------------------------------------------
// rows and tables

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip(String),
    /// A mismatch outside the range where equality is guaranteed; reported, not asserted.
    Note(String),
}

impl Verdict {
    pub fn label(&self) -> String {
        match self {
            Verdict::Pass => "pass".into(),
            Verdict::Fail => "FAIL".into(),
            Verdict::Skip(why) => format!("skipped ({why})"),
            Verdict::Note(why) => format!("noted ({why})"),
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    /// The prime, or a label for rows not indexed by a prime.
    pub p: String,
    pub lhs: String,
    pub rhs: String,
    pub modulus: String,
    pub verdict: Verdict,
}

impl Row {
    fn new(p: impl ToString, lhs: impl ToString, rhs: impl ToString, modulus: impl ToString, verdict: Verdict) -> Self {
        Row { p: p.to_string(), lhs: lhs.to_string(), rhs: rhs.to_string(), modulus: modulus.to_string(), verdict }
    }

    fn exact(p: impl ToString, lhs: impl ToString, rhs: impl ToString) -> Self {
        let (l, r) = (lhs.to_string(), rhs.to_string());
        let v = Verdict::from_bool(l == r);
        Row::new(p, l, r, "exact", v)
    }

    fn skip(p: u64, why: impl Into<String>) -> Self {
        Row::new(p, "", "", "", Verdict::Skip(why.into()))
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub scenario: String,
    pub doc: String,
    pub rows: Vec<Row>,
    pub error: Option<Error>,
}

impl Table {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for r in &self.rows {
            match r.verdict {
                Verdict::Pass => c.0 += 1,
                Verdict::Fail => c.1 += 1,
                Verdict::Skip(_) | Verdict::Note(_) => c.2 += 1,
            }
        }
        c
    }
}

// ---------------------------------------------------------------------------
// scenario description

/// Largest prime a scenario may ask for; character tables are O(p) per prime.
pub const MAX_PRIME: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeFilter {
    pub lo: u64,
    pub hi: u64,
    pub modulus: u64,
    pub residue: u64,
}

impl PrimeFilter {
    pub fn new(lo: u64, hi: u64, modulus: u64, residue: u64) -> Self {
        PrimeFilter { lo, hi, modulus: modulus.max(1), residue: residue % modulus.max(1) }
    }

    /// `lo..hi`, both ends inclusive.
    pub fn parse_range(s: &str) -> Result<(u64, u64)> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::Parse(format!("prime range '{s}' is not of the form lo..hi")))?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let num = |x: &str| x.trim().parse::<u64>().map_err(|_| Error::Parse(format!("bad range bound '{x}'")));
        let (lo, hi) = (num(a)?, num(b)?);
        if hi > MAX_PRIME {
            return Err(Error::Parse(format!("prime bound {hi} exceeds {MAX_PRIME}")));
        }
        Ok((lo, hi))
    }

    pub fn primes(&self) -> Vec<u64> {
        (self.lo.max(2)..=self.hi).filter(|&p| is_prime(p) && p % self.modulus == self.residue).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Equality,
    Congruence(u32),
}

impl CheckKind {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "equality" {
            return Ok(CheckKind::Equality);
        }
        match s.strip_prefix("congruence:").map(|k| k.trim().parse::<u32>()) {
            Some(Ok(k)) if (1..=8).contains(&k) => Ok(CheckKind::Congruence(k)),
            _ => Err(Error::Parse(format!("check '{s}' is neither 'equality' nor 'congruence:k' with 1 <= k <= 8"))),
        }
    }
}

/// Where a_p comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FormSource {
    /// f_HD built from the scenario datum and Hauptmodul, rescaled to integral exponents.
    /// `eigen` reads a_p as the T_p-eigenvalue, otherwise as the p-th coefficient.
    FHd { rescale: u64, eigen: bool },
    /// A q-expression; a_p is its p-th coefficient.
    Expr(String),
    /// A basis spec; a_p is the p-th coefficient of the given combination, or of every
    /// simultaneous eigenform of `ells` when no combination is given.
    Basis { spec: String, coefficients: Option<Vec<CycloElement>>, ells: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceRoute {
    /// a_p = -iota(r_n)(C_1)^{-1} J(r_n, q_n - r_n) H_p - delta psi p, through Gross-Koblitz mod p^e.
    H,
    /// a_p = (-1)^{n-1} chi_HD P - delta psi p, exactly in Q(zeta_M).
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalizer {
    One,
    /// -iota(r_n)(C_1) J(r_n, q_n - r_n)
    Cfgl,
    /// (2/p)(-1)^{(p-1)/8}
    TwoSign,
    /// Gamma_p(r_n) Gamma_p(q_n - r_n) / Gamma_p(q_n)
    GammaRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentitySet {
    LogDerivatives,
    Appendix,
}

/// Coefficient times a product of T_ell^k.
pub type Term = (Q, Vec<(u64, u32)>);

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub text: String,
    lhs: Vec<Term>,
    rhs: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    DualRoute,
    Trace { form: FormSource, route: TraceRoute, conjugates: Vec<i64> },
    Congruence { form: FormSource, normalizer: Normalizer },
    Cfgl { rescale: u64, r_max: u32 },
    Supercongruence,
    DworkLemma { lambda: i64, s: u32 },
    GkLemma { lambda: i64 },
    Residues,
    DworkStability,
    LegendreUnitRoot { samples: usize },
    K2Coefficients { r: Q, s: Q, rescale: u64, expected: Vec<(usize, BigInt)> },
    HeckeTable { basis: String, expected: BTreeMap<u64, Vec<Vec<Q>>>, relations: Vec<Relation>, annihilated: Vec<u64> },
    Recursions { form: FormSource, r_max: u32 },
    EigenSearch { pair: S2Pair, ells: Vec<u64> },
    Identities(IdentitySet),
}

impl Kind {
    fn name(&self) -> &'static str {
        match self {
            Kind::DualRoute => "dual-route",
            Kind::Trace { .. } => "trace",
            Kind::Congruence { .. } => "congruence",
            Kind::Cfgl { .. } => "cfgl",
            Kind::Supercongruence => "supercongruence",
            Kind::DworkLemma { .. } => "dwork-lemma",
            Kind::GkLemma { .. } => "gk-lemma",
            Kind::Residues => "residues",
            Kind::DworkStability => "dwork-stability",
            Kind::LegendreUnitRoot { .. } => "legendre-unit-root",
            Kind::K2Coefficients { .. } => "k2-coefficients",
            Kind::HeckeTable { .. } => "hecke-table",
            Kind::Recursions { .. } => "recursions",
            Kind::EigenSearch { .. } => "eigen-search",
            Kind::Identities(_) => "identities",
        }
    }

    /// Kinds whose rows need p = 1 mod M(HD).
    fn needs_split(&self) -> bool {
        matches!(
            self,
            Kind::DualRoute
                | Kind::Supercongruence
                | Kind::DworkLemma { .. }
                | Kind::GkLemma { .. }
                | Kind::Residues
                | Kind::DworkStability
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub doc: String,
    /// Data the scenario runs over; most kinds take exactly one.
    pub data: Vec<HyperDatum>,
    pub hauptmodul: Option<Hauptmodul>,
    pub character: Option<DirichletChar>,
    pub primes: PrimeFilter,
    pub check: CheckKind,
    pub order: Option<usize>,
    pub kind: Kind,
}

impl Scenario {
    fn hd(&self) -> Result<&HyperDatum> {
        self.data.first().ok_or_else(|| Error::Config(format!("scenario '{}' has no datum", self.name)))
    }

    fn c1(&self) -> Result<i64> {
        self.hauptmodul
            .map(|h| h.c1())
            .ok_or_else(|| Error::Config(format!("scenario '{}' needs a hauptmodul", self.name)))
    }

    fn chi(&self) -> Result<DirichletChar> {
        self.character
            .ok_or_else(|| Error::Config(format!("scenario '{}' needs a character", self.name)))
    }

    fn modulus_power(&self) -> u32 {
        match self.check {
            CheckKind::Equality => 1,
            CheckKind::Congruence(k) => k,
        }
    }

    /// Invariants a scenario must satisfy before it runs.
    pub fn validate(&self) -> Result<()> {
        if (self.kind.needs_split() || matches!(self.kind, Kind::Trace { .. }))
            && self.data.is_empty() {
                return Err(Error::Config(format!("scenario '{}' needs a datum", self.name)));
            }
        // an unrestricted filter means every datum runs over its own split primes
        if self.kind.needs_split() && self.primes.modulus > 1 {
            for hd in &self.data {
                let m = hd.lcd();
                if !self.primes.modulus.is_multiple_of(m) || self.primes.residue % m != 1 % m {
                    return Err(Error::Config(format!(
                        "scenario '{}': prime filter {} mod {} is not inside 1 mod M={m} for {hd}",
                        self.name, self.primes.residue, self.primes.modulus
                    )));
                }
            }
        }
        match &self.kind {
            Kind::Trace { route, .. } if *route == TraceRoute::H && self.check != CheckKind::Equality => Err(
                Error::Config(format!("scenario '{}': trace scenarios check equality", self.name)),
            ),
            Kind::Trace { .. } | Kind::Cfgl { .. } => self.c1().map(|_| ()),
            Kind::Congruence { normalizer, .. } if *normalizer == Normalizer::Cfgl => self.c1().map(|_| ()),
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// small p-adic helpers

fn ctx(p: u64, e: u32) -> Result<PadicCtx> {
    PadicCtx::new(p, e)
}

fn embed(c: &PadicCtx, z: &CycloElement) -> Result<u64> {
    match z.as_rational() {
        Some(x) => c.residue(&x),
        None => c.embed_cyclo(z),
    }
}

/// iota(r)(x) in Z/p^e, with iota(1/(p-1)) the inverse Teichmuller character.
fn iota_embed(c: &PadicCtx, r: &Q, x: &Q) -> Result<u64> {
    let k = r * Q::from_integer(BigInt::from(c.p - 1));
    if !k.is_integer() {
        return Err(Error::Prime(format!("p={} does not split {r}", c.p)));
    }
    let t = c.teichmuller(c.lift_symmetric(c.residue(x)?))?;
    let k = k.to_integer().to_u64().expect("small");
    Ok(c.pow(c.inv(t)?, k))
}

fn last_pair(hd: &HyperDatum) -> (Q, Q) {
    let n = hd.n();
    (hd.alpha()[n - 1].clone(), hd.beta()[n - 1].clone())
}

/// psi_HD(p) = (-1)^{n-1} C_1^{(p-1) r_n} Gamma_p(q_n - r_n) / prod Gamma_p(alpha_flat), as +-1.
pub fn psi_hd(hd: &HyperDatum, c1: i64, p: u64) -> Result<i64> {
    let c = ctx(p, 1)?;
    let n = hd.n();
    let (rn, qn) = last_pair(hd);
    let k = &rn * Q::from_integer(BigInt::from(p - 1));
    if !k.is_integer() {
        return Err(Error::Prime(format!("p={p} does not split {rn}")));
    }
    let mut v = c.pow(c.residue(&qi(c1))?, k.to_integer().to_u64().expect("small"));
    if n.is_multiple_of(2) {
        v = c.neg(v);
    }
    v = c.mul(v, c.gamma_rational(&(&qn - &rn))?);
    for r in &hd.alpha()[..n - 1] {
        v = c.mul(v, c.inv(c.gamma_rational(r)?)?);
    }
    match c.lift_symmetric(v) {
        s @ (1 | -1) => Ok(s),
        other => Err(Error::Precondition(format!("psi_HD({p}) = {other} mod {p} is not a sign"))),
    }
}

fn delta_gamma_one(hd: &HyperDatum) -> bool {
    hd.gamma().is_one()
}

fn show(z: &CycloElement) -> String {
    match z.as_rational() {
        Some(x) => x.to_string(),
        None => z.to_string(),
    }
}

fn same(a: &CycloElement, b: &CycloElement) -> bool {
    a.sub(b).map(|d| d.is_zero()).unwrap_or(false)
}

// ---------------------------------------------------------------------------
// forms, cached across scenarios in one process

type Cache = Mutex<HashMap<String, Arc<Vec<FormVector>>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: String, build: impl FnOnce() -> Result<Vec<FormVector>>) -> Result<Arc<Vec<FormVector>>> {
    if let Some(v) = cache().lock().expect("cache lock").get(&key) {
        return Ok(v.clone());
    }
    let v = Arc::new(build()?);
    cache().lock().expect("cache lock").insert(key, v.clone());
    Ok(v)
}

/// Default truncation order in q for a_p up to `p_max`.
fn default_order(src: &FormSource, p_max: u64) -> usize {
    match src {
        FormSource::FHd { eigen: true, .. } => (p_max as usize) * (2 * MIN_WITNESSES + 4) + 1,
        FormSource::Basis { coefficients: None, ells, .. } => {
            let l = ells.iter().copied().max().unwrap_or(1) as usize;
            (p_max as usize + 1).max(60 * l)
        }
        _ => p_max as usize + 1,
    }
}

fn f_hd_form(hd: &HyperDatum, id: Hauptmodul, rescale: u64, order: usize, chi: &DirichletChar) -> Result<FormVector> {
    let rs = qi(rescale as i64);
    let o = qi(order as i64) / &rs;
    let f = f_hd_from_hauptmodul(hd, id, &o)?.rescale(&rs)?;
    let v = FormVector::from_series(hd.n() as u32, *chi, &f)?;
    let lead = v.first_nonzero().ok_or_else(|| Error::Series("f_HD vanishes to this order".into()))?;
    let c = v.coeffs()[lead].inv()?;
    FormVector::combine(&[(c, &v)])
}

/// Candidate forms for a_p; every one is normalized with leading coefficient 1.
fn source_forms(s: &Scenario, src: &FormSource, order: usize) -> Result<Arc<Vec<FormVector>>> {
    match src {
        FormSource::FHd { rescale, .. } => {
            let hd = s.hd()?;
            let id = s.hauptmodul.ok_or_else(|| Error::Config("f_hd forms need a hauptmodul".into()))?;
            let chi = s.chi()?;
            let key = format!("fhd|{hd}|{}|{rescale}|{order}|{}", id.name(), chi.label());
            cached(key, || Ok(vec![f_hd_form(hd, id, *rescale, order, &chi)?]))
        }
        FormSource::Expr(e) => {
            let key = format!("expr|{e}|{order}");
            cached(key, || {
                let f = qexp(e, &qi(order as i64))?;
                let w = 0; // weight only matters for T_p, which expression sources never apply
                Ok(vec![FormVector::from_series(w, DirichletChar::trivial(1), &f)?])
            })
        }
        FormSource::Basis { spec, coefficients, ells } => {
            let chi = s.chi()?;
            let key = format!("basis|{spec}|{coefficients:?}|{ells:?}|{order}|{}", chi.label());
            cached(key, || {
                let items = parse_basis_spec(spec)?;
                let basis: Vec<FormVector> =
                    items.iter().map(|it| basis_form(it, order, 3, chi)).collect::<Result<_>>()?;
                match coefficients {
                    Some(cs) => {
                        if cs.len() != basis.len() {
                            return Err(Error::Config(format!(
                                "{} coefficients for a basis of {} forms",
                                cs.len(),
                                basis.len()
                            )));
                        }
                        let terms: Vec<(CycloElement, &FormVector)> = cs.iter().cloned().zip(basis.iter()).collect();
                        Ok(vec![FormVector::combine(&terms)?])
                    }
                    None => {
                        let eig = eigenform_combination(&basis, ells)?;
                        eig.iter().map(|e| eigen_form(&basis, e)).collect()
                    }
                }
            })
        }
    }
}

fn a_p_values(forms: &[FormVector], src: &FormSource, p: u64) -> Result<Vec<CycloElement>> {
    let eigen = matches!(src, FormSource::FHd { eigen: true, .. });
    forms
        .iter()
        .map(|f| {
            if eigen {
                eigenvalue(f, p)
            } else {
                f.coeff(p as usize)
                    .cloned()
                    .ok_or_else(|| Error::Insufficient(format!("form truncated below q^{p}")))
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// per-kind runners

/// (datum index, prime) pairs with p = 1 mod M of that datum.
fn split_jobs(s: &Scenario, primes: &[u64]) -> Vec<(usize, u64)> {
    s.data
        .iter()
        .enumerate()
        .flat_map(|(i, hd)| {
            let m = hd.lcd();
            primes.iter().filter(move |&&p| (p - 1) % m == 0).map(move |&p| (i, p))
        })
        .collect()
}

fn run_dual_route(s: &Scenario, primes: &[u64]) -> Result<Vec<Row>> {
    let jobs = split_jobs(s, primes);
    jobs.par_iter()
        .map(|&(i, p)| {
            let hd = &s.data[i];
            let e = choose_precision(hd, p)?;
            let c = ctx(p, e)?;
            let pc = PrimeContext::new(p)?;
            let exact = crate::charsum::h_from_p(hd, 1, &pc)?;
            let lhs = c.lift_symmetric(c.embed_cyclo(&exact)?);
            let rhs = c.lift_symmetric(c.h_p(hd, 1)?);
            Ok(Row::new(
                format!("{p} {hd}"),
                lhs,
                rhs,
                format!("{p}^{e}"),
                Verdict::from_bool(lhs == rhs),
            ))
        })
        .collect()
}

fn trace_rhs_h(hd: &HyperDatum, c1: i64, p: u64) -> Result<(i64, u32)> {
    let e = choose_precision(hd, p)?;
    let c = ctx(p, e)?;
    let (rn, qn) = last_pair(hd);
    let mut norm = c.inv(iota_embed(&c, &rn, &qi(c1))?)?;
    norm = c.mul(norm, c.jacobi_gk(&rn, &(&qn - &rn))?);
    let mut v = c.mul(norm, c.h_p(hd, 1)?);
    if delta_gamma_one(hd) {
        let psi = psi_hd(hd, c1, p)?;
        v = c.sub(v, c.from_i64(psi * p as i64));
    }
    Ok((c.lift_symmetric(v), e))
}

fn trace_rhs_p(hd: &HyperDatum, c1: i64, p: u64, ps: &CycloElement) -> Result<CycloElement> {
    let pc = PrimeContext::new(p)?;
    let chi = chi_hd(&pc, hd, c1)?;
    let mut v = chi.mul(ps)?;
    if hd.n().is_multiple_of(2) {
        v = v.neg();
    }
    if delta_gamma_one(hd) {
        let psi = psi_hd(hd, c1, p)?;
        v = v.sub(&CycloElement::from_int(1, psi * p as i64))?;
    }
    Ok(v)
}

fn run_trace(s: &Scenario, primes: &[u64], form: &FormSource, route: TraceRoute, conj: &[i64]) -> Result<Vec<Row>> {
    let hd = s.hd()?;
    let c1 = s.c1()?;
    let p_max = primes.iter().copied().max().unwrap_or(2);
    let order = s.order.unwrap_or_else(|| default_order(form, p_max));
    let forms = if primes.is_empty() { Arc::new(Vec::new()) } else { source_forms(s, form, order)? };
    let conj: Vec<i64> = if conj.is_empty() { vec![1] } else { conj.to_vec() };
    let m = hd.lcd();
    let rows: Vec<Vec<Row>> = primes
        .par_iter()
        .map(|&p| -> Result<Vec<Row>> {
            if (p - 1) % m != 0 {
                return Ok(vec![Row::skip(p, format!("p != 1 mod {m}"))]);
            }
            let ordinary = is_ordinary(hd, 1, p)?;
            let aps = a_p_values(&forms, form, p)?;
            let guaranteed = !(hd.n() == 4 && p <= 29);
            // non-ordinary primes are still computed; a mismatch there is a skip, not a failure
            let verdict = |ok: bool, lhs: &str, rhs: &str| {
                if ok {
                    Verdict::Pass
                } else if !ordinary {
                    Verdict::Skip("non-ordinary".into())
                } else if !guaranteed {
                    Verdict::Note(format!("equality only guaranteed for p > 29: {lhs} vs {rhs}"))
                } else {
                    Verdict::Fail
                }
            };
            let lhs_text = aps.iter().map(show).collect::<Vec<_>>().join(" | ");
            match route {
                TraceRoute::H => {
                    let (v, e) = trace_rhs_h(hd, c1, p)?;
                    let target = CycloElement::from_int(1, v);
                    let ok = aps.iter().any(|a| same(a, &target));
                    Ok(vec![Row::new(p, &lhs_text, v, format!("{p}^{e} lift"), verdict(ok, &lhs_text, &v.to_string()))])
                }
                TraceRoute::P => {
                    let pc = PrimeContext::new(p)?;
                    let base = p_sum(hd, 1, &pc)?;
                    let mut out = Vec::new();
                    for &c in &conj {
                        let hdc = hd.conjugate(c)?;
                        let ps = base.aut(c)?;
                        if c != 1 && !same(&ps, &p_sum(&hdc, 1, &pc)?) {
                            return Err(Error::Precondition(format!("P({hdc}) is not the {c}-conjugate at p={p}")));
                        }
                        let rhs = trace_rhs_p(&hdc, c1, p, &ps)?;
                        let ok = aps.iter().any(|a| same(a, &rhs));
                        let key = if conj.len() > 1 { format!("{p} (c={c})") } else { p.to_string() };
                        let r = show(&rhs);
                        out.push(Row::new(key, &lhs_text, &r, "exact", verdict(ok, &lhs_text, &r)));
                    }
                    Ok(out)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn normalizer_value(s: &Scenario, nz: Normalizer, c: &PadicCtx) -> Result<u64> {
    let hd = s.hd()?;
    let (rn, qn) = last_pair(hd);
    let p = c.p;
    Ok(match nz {
        Normalizer::One => 1,
        Normalizer::Cfgl => {
            let iota = iota_embed(c, &rn, &qi(s.c1()?))?;
            c.mul(iota, c.jacobi_gk(&rn, &(&qn - &rn))?)
        }
        Normalizer::TwoSign => {
            if p % 8 != 1 {
                return Err(Error::Prime(format!("(2/p)(-1)^((p-1)/8) needs p = 1 mod 8, got {p}")));
            }
            let sgn = kronecker(2, p) * if ((p - 1) / 8).is_multiple_of(2) { 1 } else { -1 };
            c.from_i64(sgn)
        }
        Normalizer::GammaRatio => {
            let num = c.mul(c.gamma_rational(&rn)?, c.gamma_rational(&(&qn - &rn))?);
            c.mul(num, c.inv(c.gamma_rational(&qn)?)?)
        }
    })
}

fn run_congruence(s: &Scenario, primes: &[u64], form: &FormSource, nz: Normalizer) -> Result<Vec<Row>> {
    let hd = s.hd()?;
    let k = s.modulus_power();
    let p_max = primes.iter().copied().max().unwrap_or(2);
    let order = s.order.unwrap_or_else(|| default_order(form, p_max));
    let forms = if primes.is_empty() { Arc::new(Vec::new()) } else { source_forms(s, form, order)? };
    primes
        .par_iter()
        .map(|&p| {
            let c = ctx(p, k)?;
            let f = f_trunc_mod(hd, &c, 1, p)?;
            let lhs = c.mul(normalizer_value(s, nz, &c)?, f);
            let aps = a_p_values(&forms, form, p)?;
            let rhs: Vec<u64> = aps.iter().map(|a| embed(&c, a)).collect::<Result<_>>()?;
            let ok = rhs.contains(&lhs);
            let rt = rhs.iter().map(|&r| c.lift_symmetric(r).to_string()).collect::<Vec<_>>().join(" | ");
            Ok(Row::new(p, c.lift_symmetric(lhs), rt, format!("{p}^{k}"), Verdict::from_bool(ok)))
        })
        .collect()
}

fn run_cfgl(s: &Scenario, primes: &[u64], rescale: u64, r_max: u32) -> Result<Vec<Row>> {
    let hd = s.hd()?;
    let id = s.hauptmodul.ok_or_else(|| Error::Config("cfgl needs a hauptmodul".into()))?;
    let chi = s.chi()?;
    let p_max = primes.iter().copied().max().unwrap_or(2);
    let need = p_max.checked_pow(r_max).and_then(|x| x.checked_mul(3)).filter(|&x| x < 1 << 20);
    let len = match (s.order, need) {
        (Some(o), _) => o,
        (None, Some(n)) => n as usize + 1,
        (None, None) => return Err(Error::Precision(format!("p^{r_max} for p <= {p_max} needs too long a series"))),
    };
    let rs = qi(rescale as i64);
    let f = f_hd_from_hauptmodul(hd, id, &(qi(len as i64) / &rs))?.rescale(&rs)?;
    let b = f.integer_coeffs()?;
    let c = u_coeffs(hd, len as u64 - 1)?;
    let b1 = b.get(1).cloned().unwrap_or_else(Q::zero);
    if b1.is_zero() {
        return Err(Error::Series("f_HD has no q^1 term after rescaling".into()));
    }
    let (rn, _) = last_pair(hd);
    let k = hd.n() as u32;
    primes
        .par_iter()
        .map(|&p| {
            if (p as usize) >= b.len() {
                return Err(Error::Insufficient(format!("order {len} below p={p}")));
            }
            let ap = &b[p as usize] / &b1;
            if !ap.is_integer() {
                return Ok(Row::skip(p, format!("a_p = {ap} is not integral")));
            }
            let beta = BigInt::from(chi.eval(p)) * BigInt::from(p).pow(k - 1);
            let twist = match frobenius_twist(&qi(s.c1()?), &rn, p, r_max + 1) {
                Ok(t) => t,
                Err(e) => return Ok(Row::skip(p, e.to_string())),
            };
            let rep = cfgl_check(&b, &c, p, &ap.to_integer(), &beta, r_max, &twist)?;
            let lhs = format!(
                "b {} ({}), c {} ({}), unit b {}, unit c {}",
                rep.b_ok, rep.b_checks, rep.c_ok, rep.c_checks, rep.unit_b_ok, rep.unit_c_ok
            );
            let rhs = format!("a_p={}, beta_p={}, mu={}", ap, beta, rep.unit_root.as_ref().map_or("-".into(), |m| m.to_string()));
            Ok(Row::new(p, lhs, rhs, format!("{p}^r, r<={r_max}"), Verdict::from_bool(rep.passed())))
        })
        .collect()
}

fn run_super(s: &Scenario, primes: &[u64]) -> Result<Vec<Row>> {
    let jobs = split_jobs(s, primes);
    jobs.par_iter()
        .map(|&(i, p)| {
            let hd = &s.data[i];
            let r = check_supercongruence(hd, p)?;
            let key = format!("{p} {hd}");
            Ok(match r.skip {
                Some(why) => Row::new(key, "", "", "", Verdict::Skip(why)),
                None => Row::new(
                    key,
                    r.h_shifted,
                    format!("F={} mu={}", r.f, r.mu),
                    format!("{p}^2"),
                    Verdict::from_bool(r.combined()),
                ),
            })
        })
        .collect()
}

fn run_lemma(s: &Scenario, primes: &[u64]) -> Result<Vec<Row>> {
    let jobs = split_jobs(s, primes);
    jobs.par_iter()
        .map(|&(i, p)| {
            let hd = &s.data[i];
            let key = format!("{p} {hd}");
            if p < 5 {
                return Ok(Row::new(key, "", "", "", Verdict::Skip("p < 5".into())));
            }
            let ok = match s.kind {
                Kind::DworkLemma { lambda, s: lvl } => check_dwork_lemma(hd, lambda, p, lvl)?,
                Kind::GkLemma { lambda } => check_gk_lemma(hd, lambda, p)?,
                _ => unreachable!("lemma runner called on {}", s.kind.name()),
            };
            Ok(Row::new(key, if ok { "holds" } else { "fails" }, "holds", format!("{p}^2"), Verdict::from_bool(ok)))
        })
        .collect()
}

fn run_residues(s: &Scenario, primes: &[u64]) -> Result<Vec<Row>> {
    let jobs = split_jobs(s, primes);
    jobs.par_iter()
        .map(|&(i, p)| {
            let hd = &s.data[i];
            let key = format!("{p} {hd}");
            if p < 5 || p <= hd.n_hat() as u64 + 1 {
                return Ok(Row::new(key, "", "", "", Verdict::Skip("p too small".into())));
            }
            let r = check_residue_lemmas(hd, p)?;
            let flags = [
                ("orders", r.orders_ok),
                ("C=0", r.c_vanish),
                ("B=0 on I3,I4", r.b_vanish_i3_i4),
                ("residue sum", r.residue_theorem),
                ("A on I1", r.a_on_i1),
                ("B route", r.b_route),
                ("E_Dwork", r.e_dwork_ok),
                ("E_GK", r.e_gk_ok),
            ];
            let bad: Vec<&str> = flags.iter().filter(|f| !f.1).map(|f| f.0).collect();
            let lhs = if bad.is_empty() { "all hold".to_string() } else { format!("fails: {}", bad.join(", ")) };
            let rhs = format!("res_inf R = {}, res_inf tR = {}", r.res_inf_r, r.res_inf_tr);
            Ok(Row::new(key, lhs, rhs, p, Verdict::from_bool(r.passed())))
        })
        .collect()
}

fn run_dwork_stability(s: &Scenario, primes: &[u64]) -> Result<Vec<Row>> {
    let jobs = split_jobs(s, primes);
    jobs.par_iter()
        .map(|&(i, p)| {
            let hd = &s.data[i];
            let key = format!("{p} {hd}");
            if !is_ordinary(hd, 1, p)? {
                return Ok(Row::new(key, "", "", "", Verdict::Skip("non-ordinary".into())));
            }
            let m1 = dwork_unit_root(hd, 1, p, 1)?;
            let m2 = dwork_unit_root(hd, 1, p, 2)? % (p * p);
            let c = ctx(p, 2)?;
            Ok(Row::new(key, c.lift_symmetric(m1), c.lift_symmetric(m2), format!("{p}^2"), Verdict::from_bool(m1 == m2)))
        })
        .collect()
}

fn run_legendre(primes: &[u64], samples: usize) -> Result<Vec<Row>> {
    let hd2 = HyperDatum::from_pairs(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)])?;
    let jobs: Vec<(u64, i64)> = primes
        .iter()
        .filter(|&&p| p >= 5)
        .flat_map(|&p| {
            let span = p as i64 - 3; // lambda in 2..=p-2
            let n = (samples as i64).clamp(1, span);
            (0..n).map(move |i| (p, 2 + i * (span - 1) / (n - 1).max(1)))
        })
        .collect();
    let mut jobs = jobs;
    jobs.dedup();
    jobs.par_iter()
        .map(|&(p, lam)| {
            let c = ctx(p, 3)?;
            let sign = if p % 4 == 1 { 1 } else { -1 };
            let a = sign * (p as i64 + 1 - legendre_count(p, lam as u64) as i64);
            let key = format!("{p} lambda={lam}");
            if a % p as i64 == 0 {
                return Ok(Row::new(key, "", "", "", Verdict::Skip("supersingular fibre".into())));
            }
            let mu = dwork_unit_root(&hd2, lam, p, 2)?;
            let ac = c.from_i64(a);
            let poly = c.add(c.sub(c.mul(mu, mu), c.mul(ac, mu)), p);
            Ok(Row::new(
                key,
                format!("mu^2 - ({a}) mu + p = {}", c.lift_symmetric(poly)),
                0,
                format!("{p}^3"),
                Verdict::from_bool(poly == 0),
            ))
        })
        .collect()
}

fn run_k2_coefficients(r: &Q, s: &Q, rescale: u64, expected: &[(usize, BigInt)]) -> Result<Vec<Row>> {
    let top = expected.iter().map(|e| e.0).max().unwrap_or(0);
    let rs = qi(rescale as i64);
    let f = k2_series(r, s, &(qi(top as i64 + 1) / &rs + Q::one()))?.rescale(&rs)?;
    let c = f.integer_coeffs()?;
    Ok(expected
        .iter()
        .map(|(n, want)| {
            let got = c.get(*n).map_or("-".to_string(), |x| x.to_string());
            Row::exact(format!("q^{n}"), got, want)
        })
        .collect())
}

fn relation_matrix(
    side: &[Term],
    mats: &BTreeMap<u64, Matrix>,
    dim: usize,
) -> Result<Matrix> {
    let mut acc = mat_scalar(dim, &CycloElement::zero(1));
    for (coef, factors) in side {
        let mut m = mat_scalar(dim, &CycloElement::from_rational(1, coef.clone()));
        for &(ell, pw) in factors {
            let t = mats.get(&ell).ok_or_else(|| Error::Config(format!("relation uses T{ell}, which is not computed")))?;
            for _ in 0..pw {
                m = mat_mul(&m, t)?;
            }
        }
        acc = acc
            .iter()
            .zip(&m)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a.add(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
    }
    Ok(acc)
}

fn run_hecke_table(
    s: &Scenario,
    basis_spec: &str,
    expected: &BTreeMap<u64, Vec<Vec<Q>>>,
    relations: &[Relation],
    annihilated: &[u64],
) -> Result<Vec<Row>> {
    let chi = s.chi()?;
    let order = s.order.unwrap_or(2000);
    let items = parse_basis_spec(basis_spec)?;
    let basis: Vec<FormVector> = items.iter().map(|it| basis_form(it, order, 3, chi)).collect::<Result<_>>()?;
    let dim = basis.len();
    let mut ells: Vec<u64> = expected.keys().copied().collect();
    for rel in relations {
        for (_, fs) in rel.lhs.iter().chain(&rel.rhs) {
            ells.extend(fs.iter().map(|f| f.0));
        }
    }
    ells.sort_unstable();
    ells.dedup();
    let computed: Vec<(u64, Matrix)> =
        ells.par_iter().map(|&l| Ok((l, hecke_matrix(&basis, l)?))).collect::<Result<_>>()?;
    let mats: BTreeMap<u64, Matrix> = computed.into_iter().collect();
    let mut rows = Vec::new();
    for (ell, cols) in expected {
        if cols.len() != dim {
            return Err(Error::Config(format!("expected T{ell} table is {}x{}, basis has {dim} forms", cols.len(), cols.len())));
        }
        // columns of the expected table are the images T(b_j)
        let want: Matrix = (0..dim)
            .map(|i| (0..dim).map(|j| CycloElement::from_rational(1, cols[j][i].clone())).collect())
            .collect();
        let got = &mats[ell];
        rows.push(Row::new(
            format!("T{ell}"),
            matrix_json(got),
            matrix_json(&want),
            "exact",
            Verdict::from_bool(mat_eq(got, &want)),
        ));
    }
    for &ell in annihilated {
        let zero = basis
            .iter()
            .map(|b| crate::hecke::t_p(b, ell).map(|f| f.is_zero()))
            .collect::<Result<Vec<bool>>>()?;
        let ok = zero.iter().all(|&z| z);
        rows.push(Row::new(format!("T{ell} kills basis"), format!("{zero:?}"), "all zero", "exact", Verdict::from_bool(ok)));
    }
    for rel in relations {
        let l = relation_matrix(&rel.lhs, &mats, dim)?;
        let r = relation_matrix(&rel.rhs, &mats, dim)?;
        rows.push(Row::new(&rel.text, matrix_json(&l), matrix_json(&r), "exact", Verdict::from_bool(mat_eq(&l, &r))));
    }
    for (i, a) in ells.iter().enumerate() {
        for b in &ells[i + 1..] {
            let ab = mat_mul(&mats[a], &mats[b])?;
            let ba = mat_mul(&mats[b], &mats[a])?;
            rows.push(Row::new(format!("T{a}T{b} = T{b}T{a}"), "", "", "exact", Verdict::from_bool(mat_eq(&ab, &ba))));
        }
    }
    Ok(rows)
}

fn run_recursions(s: &Scenario, primes: &[u64], form: &FormSource, r_max: u32) -> Result<Vec<Row>> {
    let p_max = primes.iter().copied().max().unwrap_or(2);
    let order = s.order.unwrap_or_else(|| default_order(form, p_max.pow(r_max)).max(2000));
    let forms = source_forms(s, form, order)?;
    if forms.is_empty() {
        return Err(Error::Linear("no form to test".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..forms.len()).flat_map(|i| primes.iter().map(move |&p| (i, p))).collect();
    let tag = |i: usize| if forms.len() > 1 { format!(" form {}", i + 1) } else { String::new() };
    let mut rows: Vec<Row> = jobs
        .par_iter()
        .map(|&(i, p)| {
            let ok = three_term_coefficient_check(&forms[i], p, r_max)?;
            Ok(Row::new(format!("{p}{}", tag(i)), if ok { "holds" } else { "fails" }, "holds", "exact", Verdict::from_bool(ok)))
        })
        .collect::<Result<_>>()?;
    for (i, f) in forms.iter().enumerate() {
        let ok = multiplicative_check(f)?;
        rows.push(Row::new(format!("multiplicative{}", tag(i)), if ok { "holds" } else { "fails" }, "holds", "exact", Verdict::from_bool(ok)));
    }
    Ok(rows)
}

fn run_eigen_search(s: &Scenario, primes: &[u64], pair: &S2Pair, ells: &[u64]) -> Result<Vec<Row>> {
    if !pair.is_member() {
        return Err(Error::Datum(format!("({}, {}) is not in S_2", pair.r, pair.s)));
    }
    let m = pair.lcd();
    let n_r = level_multiplier(&pair.r)?;
    let mut conj: Vec<S2Pair> = Vec::new();
    for c in 1..m as i64 {
        if num_integer::gcd(c as u64, m) != 1 {
            continue;
        }
        let pc = pair.conjugate(c)?;
        if !pc.is_member() {
            return Err(Error::Datum(format!("conjugate ({}, {}) is not in S_2", pc.r, pc.s)));
        }
        if !conj.contains(&pc) {
            conj.push(pc);
        }
    }
    let spec = conj.iter().map(|c| format!("k2:{}:{}@{n_r}", c.r, c.s)).collect::<Vec<_>>().join(",");
    let src = FormSource::Basis { spec: spec.clone(), coefficients: None, ells: ells.to_vec() };
    let p_max = primes.iter().copied().max().unwrap_or(2);
    let order = s.order.unwrap_or_else(|| default_order(&src, p_max));

    let chi = s.chi()?;
    let items = parse_basis_spec(&spec)?;
    let basis: Vec<FormVector> = items.iter().map(|it| basis_form(it, order, 3, chi)).collect::<Result<_>>()?;
    let eig = eigenform_combination(&basis, ells)?;
    let forms: Vec<FormVector> = eig.iter().map(|e| eigen_form(&basis, e)).collect::<Result<_>>()?;

    let mut rows: Vec<Row> = eig
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let v = e.to_json();
            Row::new(format!("eigenform {}", i + 1), v["t"].to_string(), v["eigenvalues"].to_string(), "exact", Verdict::Pass)
        })
        .collect();

    // HD(r, s) = {{1/2, 1/2, r}, {1, 1, s}} against t = lambda
    let s_b = if pair.s > Q::one() { &pair.s - Q::one() } else { pair.s.clone() };
    let hd = HyperDatum::new(vec![q(1, 2), q(1, 2), pair.r.clone()], vec![qi(1), qi(1), s_b])?;
    let c1 = Hauptmodul::Lambda.c1();
    let dm = hd.lcd();
    let per_p: Vec<Row> = primes
        .par_iter()
        .map(|&p| {
            if (p - 1) % dm != 0 {
                return Ok(Row::skip(p, format!("p != 1 mod {dm}")));
            }
            let pc = PrimeContext::new(p)?;
            let rhs = trace_rhs_p(&hd, c1, p, &p_sum(&hd, 1, &pc)?)?;
            let aps: Vec<CycloElement> = forms
                .iter()
                .map(|f| f.coeff(p as usize).cloned().ok_or_else(|| Error::Insufficient(format!("order below {p}"))))
                .collect::<Result<_>>()?;
            let ok = aps.iter().any(|a| same(a, &rhs));
            let lhs = aps.iter().map(show).collect::<Vec<_>>().join(" | ");
            Ok(Row::new(p, lhs, show(&rhs), "exact", Verdict::from_bool(ok)))
        })
        .collect::<Result<_>>()?;
    rows.extend(per_p);
    Ok(rows)
}

fn identity_rows(checks: Vec<IdentityCheck>) -> Vec<Row> {
    checks
        .into_iter()
        .map(|c| {
            Row::new(
                c.name,
                if c.passed { "agrees".to_string() } else { c.detail.unwrap_or_else(|| "differs".into()) },
                "agrees",
                format!("O(q^{})", c.order),
                Verdict::from_bool(c.passed),
            )
        })
        .collect()
}

fn run_identities(s: &Scenario, set: IdentitySet) -> Vec<Row> {
    let order = qi(s.order.unwrap_or(25) as i64);
    match set {
        IdentitySet::LogDerivatives => identity_rows(logderiv_checks(&order)),
        IdentitySet::Appendix => {
            let mut v = appendix_checks(&order);
            for (r, t) in [(q(1, 2), qi(1)), (q(1, 4), q(3, 4)), (q(1, 8), qi(1))] {
                v.push(alt_2_eta_check(&r, &t, &order));
            }
            identity_rows(v)
        }
    }
}

/// Run one scenario over its prime filter. Errors are returned, not folded into rows.
pub fn run_scenario_rows(s: &Scenario) -> Result<Vec<Row>> {
    s.validate()?;
    let primes = s.primes.primes();
    match &s.kind {
        Kind::DualRoute => run_dual_route(s, &primes),
        Kind::Trace { form, route, conjugates } => run_trace(s, &primes, form, *route, conjugates),
        Kind::Congruence { form, normalizer } => run_congruence(s, &primes, form, *normalizer),
        Kind::Cfgl { rescale, r_max } => run_cfgl(s, &primes, *rescale, *r_max),
        Kind::Supercongruence => run_super(s, &primes),
        Kind::DworkLemma { .. } | Kind::GkLemma { .. } => run_lemma(s, &primes),
        Kind::Residues => run_residues(s, &primes),
        Kind::DworkStability => run_dwork_stability(s, &primes),
        Kind::LegendreUnitRoot { samples } => run_legendre(&primes, *samples),
        Kind::K2Coefficients { r, s: sp, rescale, expected } => run_k2_coefficients(r, sp, *rescale, expected),
        Kind::HeckeTable { basis, expected, relations, annihilated } => {
            run_hecke_table(s, basis, expected, relations, annihilated)
        }
        Kind::Recursions { form, r_max } => run_recursions(s, &primes, form, *r_max),
        Kind::EigenSearch { pair, ells } => run_eigen_search(s, &primes, pair, ells),
        Kind::Identities(set) => Ok(run_identities(s, *set)),
    }
}

pub fn run_scenario(s: &Scenario) -> Table {
    let (rows, error) = match run_scenario_rows(s) {
        Ok(r) => (r, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    Table { scenario: s.name.clone(), doc: s.doc.clone(), rows, error }
}

/// Run every scenario; output order follows the input order.
pub fn run_many(list: &[Scenario]) -> Vec<Table> {
    list.par_iter().map(run_scenario).collect()
}

// ---------------------------------------------------------------------------
// relation parsing: "T3^2 = -12", "T3*T5 = 3*T7", "T2 = 0"

fn parse_side(s: &str) -> Result<Vec<Term>> {
    let bad = || Error::Parse(format!("bad relation side '{s}'"));
    let mut terms = Vec::new();
    let t = s.replace(' ', "");
    if t.is_empty() {
        return Err(bad());
    }
    // split on + and - while keeping signs
    let mut pieces: Vec<String> = Vec::new();
    let mut cur = String::new();
    for ch in t.chars() {
        if (ch == '+' || ch == '-') && !cur.is_empty() && !cur.ends_with('*') {
            pieces.push(std::mem::take(&mut cur));
        }
        cur.push(ch);
    }
    pieces.push(cur);
    for piece in pieces {
        let (neg, body) = match piece.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, piece.strip_prefix('+').unwrap_or(&piece)),
        };
        let mut coef = Q::one();
        let mut factors = Vec::new();
        for f in body.split('*') {
            if let Some(rest) = f.strip_prefix('T') {
                let (ell, pw) = match rest.split_once('^') {
                    Some((a, b)) => (a, b.parse::<u32>().map_err(|_| bad())?),
                    None => (rest, 1),
                };
                let ell = ell.parse::<u64>().map_err(|_| bad())?;
                if !is_prime(ell) || pw == 0 || pw > 16 {
                    return Err(bad());
                }
                factors.push((ell, pw));
            } else {
                coef *= parse_rational(f).map_err(|_| bad())?;
            }
        }
        terms.push((if neg { -coef } else { coef }, factors));
    }
    Ok(terms)
}

pub fn parse_relation(text: &str) -> Result<Relation> {
    let (a, b) = text
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("relation '{text}' has no '='")))?;
    Ok(Relation { text: text.trim().to_string(), lhs: parse_side(a)?, rhs: parse_side(b)? })
}

// ---------------------------------------------------------------------------
// registry

fn hd(a: &[(i64, i64)], b: &[(i64, i64)]) -> HyperDatum {
    HyperDatum::from_pairs(a, b).expect("registry datum")
}

/// Data for the dual-route sweep: lengths 2 to 4, conductors 2, 4 and 8.
pub fn dual_route_suite() -> Vec<HyperDatum> {
    vec![
        hd(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]),
        hd(&[(1, 4), (3, 4)], &[(1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]),
        hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1), (1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 2), (1, 2)], &[(1, 1), (1, 1), (1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (1, 1), (3, 4)]),
        hd(&[(1, 8), (3, 8), (5, 8), (7, 8)], &[(1, 1), (1, 1), (1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 4)], &[(3, 4), (1, 1), (1, 1)]),
    ]
}

/// Data for the supercongruence, residue and lemma sweeps.
pub fn super_suite() -> Vec<HyperDatum> {
    let mut v = vec![hd(&[(1, 2), (1, 2), (1, 4)], &[(3, 4), (1, 1), (1, 1)])];
    for j in [1, 3, 5, 7] {
        v.push(hd(&[(1, 2), (1, 2), (j, 8)], &[(1, 1), (1, 1), (1, 1)]));
    }
    v.push(hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(3, 4), (1, 1), (1, 1), (1, 1)]));
    v
}

/// Suite data with every beta entry equal to 1, where Dwork's unit root is defined.
pub fn dwork_suite() -> Vec<HyperDatum> {
    vec![
        hd(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]),
        hd(&[(1, 4), (3, 4)], &[(1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1), (1, 1), (1, 1)]),
        hd(&[(1, 2), (1, 2), (1, 2), (1, 2)], &[(1, 1), (1, 1), (1, 1), (1, 1)]),
        hd(&[(1, 8), (3, 8), (5, 8), (7, 8)], &[(1, 1), (1, 1), (1, 1), (1, 1)]),
    ]
}

fn per_datum(base: Scenario, suite: Vec<HyperDatum>, lo: u64, hi: u64) -> Vec<Scenario> {
    vec![Scenario { data: suite, primes: PrimeFilter::new(lo, hi, 1, 0), ..base }]
}

fn hecke_expected() -> BTreeMap<u64, Vec<Vec<Q>>> {
    // images T(f_j) in the basis f_1, f_3, f_5, f_7
    let col = |v: [i64; 4]| v.iter().map(|&x| qi(x)).collect::<Vec<Q>>();
    let mut m = BTreeMap::new();
    m.insert(3, vec![col([0, -12, 0, 0]), col([1, 0, 0, 0]), col([0, 0, 0, -4]), col([0, 0, 3, 0])]);
    m.insert(5, vec![col([0, 0, 48, 0]), col([0, 0, 0, 16]), col([1, 0, 0, 0]), col([0, 3, 0, 0])]);
    m.insert(7, vec![col([0, 0, 0, -64]), col([0, 0, 16, 0]), col([0, -4, 0, 0]), col([1, 0, 0, 0])]);
    m
}

const F_J_BASIS: &str = "k2:1/8:1@16,k2:3/8:1@16,k2:5/8:1@16,k2:7/8:1@16";

/// Every built-in scenario.
pub fn registry() -> Vec<Scenario> {
    let chi_m4 = DirichletChar::kronecker(-4, 4);
    let hd_ao = hd(&[(1, 2), (1, 2), (1, 2), (1, 2)], &[(1, 1), (1, 1), (1, 1), (1, 1)]);
    let hd_eg1 = hd(&[(1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (3, 4)]);
    let hd_32 = hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (1, 1), (3, 4)]);
    let hd_j8 = hd(&[(1, 2), (1, 2), (1, 8)], &[(1, 1), (1, 1), (1, 1)]);
    let f8_source = FormSource::FHd { rescale: 2, eigen: true };
    let f_32_4 = FormSource::Expr("eta(4)^10/eta(8)^2 - 8*eta(8)^10/eta(4)^2".into());
    let i4 = CycloElement::zeta_pow(4, 1).scale(&qi(4));
    let f_32_3 = FormSource::Basis {
        spec: "k2:1/4:3/4@8,k2:3/4:5/4@8".into(),
        coefficients: Some(vec![CycloElement::one(4), i4]),
        ells: vec![],
    };
    let f_256 = FormSource::Basis { spec: F_J_BASIS.into(), coefficients: None, ells: vec![3, 5] };
    let base = |name: &str, doc: &str, kind: Kind| Scenario {
        name: name.into(),
        doc: doc.into(),
        data: vec![],
        hauptmodul: None,
        character: None,
        primes: PrimeFilter::new(3, 97, 2, 1),
        check: CheckKind::Equality,
        order: None,
        kind,
    };

    let mut out = vec![
        base(
            "dual-route",
            "embedded Q(zeta_M) value of H_p from P equals the Gross-Koblitz value of H_p",
            Kind::DualRoute,
        ),
        Scenario {
            data: vec![hd_ao.clone()],
            hauptmodul: Some(Hauptmodul::U),
            character: Some(DirichletChar::trivial(8)),
            ..base(
                "ao2000",
                "H_p({1/2^4},{1^4};1) - p is the T_p-eigenvalue of f_HD for t = -64 eta(2t)^24/eta(t)^24",
                Kind::Trace { form: f8_source.clone(), route: TraceRoute::H, conjugates: vec![] },
            )
        },
        Scenario {
            data: vec![hd_ao.clone()],
            hauptmodul: Some(Hauptmodul::U),
            character: Some(DirichletChar::trivial(8)),
            check: CheckKind::Congruence(3),
            ..base(
                "kilbourn",
                "F({1/2^4},{1^4};1)_{p-1} = T_p-eigenvalue of f_HD mod p^3",
                Kind::Congruence { form: f8_source.clone(), normalizer: Normalizer::One },
            )
        },
        Scenario {
            data: vec![hd_ao.clone()],
            hauptmodul: Some(Hauptmodul::U),
            character: Some(DirichletChar::trivial(8)),
            primes: PrimeFilter::new(3, 13, 2, 1),
            ..base(
                "example-2.3",
                "three-term CFGL congruences for f_HD and its u-expansion, t = -64 eta(2t)^24/eta(t)^24",
                Kind::Cfgl { rescale: 2, r_max: 2 },
            )
        },
        Scenario {
            data: vec![hd_32.clone()],
            hauptmodul: Some(Hauptmodul::U),
            primes: PrimeFilter::new(5, 197, 4, 1),
            ..base(
                "prop-2.3",
                "a_p(eta(4t)^10/eta(8t)^2 - 8 eta(8t)^10/eta(4t)^2) = -P({1/2,1/2,1/2,1/4},{1,1,1,3/4};1) - p",
                Kind::Trace { form: f_32_4, route: TraceRoute::P, conjugates: vec![] },
            )
        },
        Scenario {
            data: vec![hd_eg1.clone()],
            hauptmodul: Some(Hauptmodul::Lambda),
            character: Some(chi_m4),
            primes: PrimeFilter::new(5, 197, 4, 1),
            ..base(
                "thm-2.5",
                "P({1/2,1/2,1/4},{1,1,3/4};1) = a_p(K2(1/4,3/4)(8t) + 4i K2(3/4,5/4)(8t))",
                Kind::Trace { form: f_32_3.clone(), route: TraceRoute::P, conjugates: vec![] },
            )
        },
        Scenario {
            data: vec![hd_eg1.clone()],
            hauptmodul: Some(Hauptmodul::Lambda),
            character: Some(chi_m4),
            primes: PrimeFilter::new(5, 197, 4, 1),
            check: CheckKind::Congruence(2),
            ..base(
                "thm-2.5-super",
                "Gamma_p(1/4)Gamma_p(1/2)/Gamma_p(3/4) F({1/2,1/2,1/4},{1,1,3/4};1)_{p-1} = a_p mod p^2",
                Kind::Congruence { form: f_32_3.clone(), normalizer: Normalizer::GammaRatio },
            )
        },
        Scenario {
            data: vec![hd_ao.clone()],
            hauptmodul: Some(Hauptmodul::U),
            character: Some(DirichletChar::trivial(8)),
            check: CheckKind::Congruence(1),
            ..base(
                "prop-3.6",
                "-iota(r_n)(C_1) J(r_n, q_n - r_n) F(1)_{p-1} = b_p mod p for f_HD of {1/2^4}, t = u",
                Kind::Congruence { form: FormSource::FHd { rescale: 2, eigen: false }, normalizer: Normalizer::Cfgl },
            )
        },
        Scenario {
            data: vec![hd_eg1.clone()],
            hauptmodul: Some(Hauptmodul::Lambda),
            character: Some(chi_m4),
            primes: PrimeFilter::new(5, 197, 4, 1),
            check: CheckKind::Congruence(1),
            ..base(
                "prop-3.6-eg1",
                "-iota(1/4)(16) J(1/4, 1/2) F({1/2,1/2,1/4},{1,1,3/4};1)_{p-1} = b_p mod p, t = lambda",
                Kind::Congruence { form: FormSource::FHd { rescale: 8, eigen: false }, normalizer: Normalizer::Cfgl },
            )
        },
    ];
    for j in [1i64, 3, 5, 7] {
        out.push(Scenario {
            data: vec![hd(&[(1, 2), (1, 2), (j, 8)], &[(1, 1), (1, 1), (1, 1)])],
            hauptmodul: Some(Hauptmodul::Lambda),
            character: Some(chi_m4),
            primes: PrimeFilter::new(17, 401, 8, 1),
            check: CheckKind::Congruence(1),
            ..base(
                &format!("prop-3.8-j{j}"),
                &format!("(2/p)(-1)^((p-1)/8) F({{1/2,1/2,{j}/8}},{{1,1,1}};1)_{{p-1}} = a_p(f_256.3.c.g) mod p"),
                Kind::Congruence { form: f_256.clone(), normalizer: Normalizer::TwoSign },
            )
        });
    }
    out.push(Scenario {
        data: vec![hd_j8.clone()],
        hauptmodul: Some(Hauptmodul::Lambda),
        character: Some(chi_m4),
        primes: PrimeFilter::new(17, 401, 8, 1),
        ..base(
            "prop-6.3",
            "P({1/2,1/2,j/8},{1,1,1};1) = a_p(f_256.3.c.g) for j = 1,3,5,7 via Galois conjugation",
            Kind::Trace { form: f_256, route: TraceRoute::P, conjugates: vec![1, 3, 5, 7] },
        )
    });
    out.extend(per_datum(
        base(
            "thm-2.4",
            "H_p - delta Gamma_p(beta/alpha) p = F(1)_{p-1} = Dwork unit root mod p^2",
            Kind::Supercongruence,
        ),
        super_suite(),
        3,
        197,
    ));
    out.extend(per_datum(
        base("lemma-5.6", "Dwork-type congruence with its E_Dwork error term mod p^2", Kind::DworkLemma { lambda: 1, s: 1 }),
        super_suite(),
        5,
        97,
    ));
    out.extend(per_datum(
        base("lemma-5.12", "Gross-Koblitz-type congruence with its E_GK error term mod p^2", Kind::GkLemma { lambda: 1 }),
        super_suite(),
        5,
        97,
    ));
    out.extend(per_datum(
        base("residues", "C = 0 and B = 0 mod p, residue theorem, E-terms from residues", Kind::Residues),
        super_suite(),
        5,
        61,
    ));
    out.extend(per_datum(
        base("dual-route-suite", "", Kind::DualRoute),
        dual_route_suite(),
        13,
        197,
    ));
    out.retain(|s| s.name != "dual-route");
    out.iter_mut().filter(|s| s.name == "dual-route-suite").for_each(|s| {
        s.name = "dual-route".into();
        s.doc = "embedded Q(zeta_M) value of H_p from P equals the Gross-Koblitz value of H_p".into();
    });
    out.extend(per_datum(
        base("dwork", "Dwork unit roots at s = 1 and s = 2 agree mod p^2", Kind::DworkStability),
        dwork_suite(),
        5,
        97,
    ));
    out.push(Scenario {
        primes: PrimeFilter::new(5, 61, 1, 0),
        ..base(
            "legendre-unit-root",
            "unit root of F(1/2,1/2;lambda) solves x^2 - a_p(lambda) x + p mod p^3 (Legendre point counts)",
            Kind::LegendreUnitRoot { samples: 8 },
        )
    });
    out.push(base(
        "k2-coefficients",
        "K2(1/8,1)(16t) coefficients at q, q^9, ..., q^41",
        Kind::K2Coefficients {
            r: q(1, 8),
            s: qi(1),
            rescale: 16,
            expected: [(1, 1), (9, -3), (17, -6), (25, 23), (33, 12), (41, -66)]
                .iter()
                .map(|&(n, c)| (n, BigInt::from(c)))
                .collect(),
        },
    ));
    out.push(Scenario {
        character: Some(chi_m4),
        order: Some(2000),
        ..base(
            "cor-3.5",
            "Hecke table on K2(j/8,1)(16t), T_2 = 0, T3^2 = -12, T5^2 = 48, T3 T5 = 3 T7",
            Kind::HeckeTable {
                basis: F_J_BASIS.into(),
                expected: hecke_expected(),
                relations: ["T3^2 = -12", "T5^2 = 48", "T3*T5 = 3*T7"]
                    .iter()
                    .map(|r| parse_relation(r).expect("registry relation"))
                    .collect(),
                annihilated: vec![2],
            },
        )
    });
    out.push(Scenario {
        character: Some(chi_m4),
        primes: PrimeFilter::new(3, 41, 2, 1),
        order: Some(2000),
        ..base(
            "cor-3.5-recursions",
            "simultaneous T3, T5 eigenforms on the K2(j/8,1)(16t) are multiplicative with three-term Hecke recursions",
            Kind::Recursions {
                form: FormSource::Basis { spec: F_J_BASIS.into(), coefficients: None, ells: vec![3, 5] },
                r_max: 2,
            },
        )
    });
    out.push(Scenario {
        character: Some(chi_m4),
        primes: PrimeFilter::new(3, 401, 8, 1),
        ..base(
            "thm-1.1-eighths",
            "simultaneous eigenforms on the conjugates of K2(1/8,1), a_p against P",
            Kind::EigenSearch { pair: S2Pair::new(q(1, 8), qi(1)), ells: vec![3, 5] },
        )
    });
    out.push(Scenario {
        character: Some(chi_m4),
        primes: PrimeFilter::new(3, 197, 4, 1),
        ..base(
            "thm-1.1-quarters",
            "simultaneous eigenforms on K2(1/4,3/4) and K2(3/4,5/4), a_p against P",
            Kind::EigenSearch { pair: S2Pair::new(q(1, 4), q(3, 4)), ells: vec![3, 5] },
        )
    });
    out.push(base("prop-7.1", "logarithmic derivatives of the Hauptmoduln to O(q^25)", Kind::Identities(IdentitySet::LogDerivatives)));
    out.push(base("appendix", "2F1/3F2 evaluations at Hauptmoduln and alt-2-eta forms to O(q^25)", Kind::Identities(IdentitySet::Appendix)));
    out
}

pub fn builtin(name: &str) -> Result<Scenario> {
    registry()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
}

// ---------------------------------------------------------------------------
// config files

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    builtin: Option<String>,
    kind: Option<String>,
    doc: Option<String>,
    alpha: Option<String>,
    beta: Option<String>,
    data: Option<Vec<[String; 2]>>,
    hauptmodul: Option<String>,
    character: Option<String>,
    primes: Option<String>,
    modulus: Option<u64>,
    residue: Option<u64>,
    check: Option<String>,
    order: Option<usize>,
    form: Option<String>,
    rescale: Option<u64>,
    a_p: Option<String>,
    coefficients: Option<Vec<String>>,
    ells: Option<Vec<u64>>,
    route: Option<String>,
    normalizer: Option<String>,
    conjugates: Option<Vec<i64>>,
    lambda: Option<i64>,
    level: Option<u32>,
    samples: Option<usize>,
    r_max: Option<u32>,
    r: Option<String>,
    s: Option<String>,
    expected: Option<toml::Value>,
    relations: Option<Vec<String>>,
    annihilated: Option<Vec<u64>>,
    basis: Option<String>,
    set: Option<String>,
}

/// `trivial:8` or `kronecker:-4` (modulus |d|, or 4|d| when d is not 1 mod 4).
pub fn parse_character(s: &str) -> Result<DirichletChar> {
    let s = s.trim();
    let bad = || Error::Parse(format!("character '{s}' is not trivial:N or kronecker:D"));
    if let Some(n) = s.strip_prefix("trivial:") {
        let n = n.trim().parse::<u64>().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        return Ok(DirichletChar::trivial(n));
    }
    if let Some(d) = s.strip_prefix("kronecker:") {
        let d = d.trim().parse::<i64>().map_err(|_| bad())?;
        if d == 0 || d.unsigned_abs() > 1 << 20 {
            return Err(bad());
        }
        let m = if d.rem_euclid(4) == 1 { d.unsigned_abs() } else { 4 * d.unsigned_abs() };
        let m = if d.rem_euclid(4) == 0 { d.unsigned_abs() } else { m };
        return Ok(DirichletChar::kronecker(d, m));
    }
    Err(bad())
}

/// Rationals, optionally times `i` (a primitive fourth root of unity): "1", "-3/2", "4i", "-i".
pub fn parse_coefficient(s: &str) -> Result<CycloElement> {
    let t = s.trim();
    match t.strip_suffix('i') {
        Some(head) => {
            let head = head.trim().trim_end_matches('*').trim();
            let c = match head {
                "" | "+" => Q::one(),
                "-" => -Q::one(),
                h => parse_rational(h)?,
            };
            Ok(CycloElement::zeta_pow(4, 1).scale(&c))
        }
        None => Ok(CycloElement::from_rational(1, parse_rational(t)?)),
    }
}

fn parse_form(raw: &RawScenario) -> Result<FormSource> {
    let form = raw.form.as_deref().unwrap_or("f_hd").trim();
    if form == "f_hd" {
        let eigen = match raw.a_p.as_deref().unwrap_or("eigenvalue") {
            "eigenvalue" => true,
            "coefficient" => false,
            o => return Err(Error::Config(format!("a_p must be 'eigenvalue' or 'coefficient', got '{o}'"))),
        };
        let rescale = raw.rescale.ok_or_else(|| Error::Config("form f_hd needs 'rescale'".into()))?;
        if rescale == 0 {
            return Err(Error::Config("rescale must be positive".into()));
        }
        return Ok(FormSource::FHd { rescale, eigen });
    }
    if let Some(e) = form.strip_prefix("expr:") {
        crate::qform::parse_qexpr(e)?;
        return Ok(FormSource::Expr(e.trim().to_string()));
    }
    if let Some(spec) = form.strip_prefix("basis:") {
        let n = parse_basis_spec(spec)?.len();
        let coefficients = match &raw.coefficients {
            Some(cs) => {
                let v: Vec<CycloElement> = cs.iter().map(|c| parse_coefficient(c)).collect::<Result<_>>()?;
                if v.len() != n {
                    return Err(Error::Config(format!("{} coefficients for {n} basis forms", v.len())));
                }
                Some(v)
            }
            None => None,
        };
        let ells = raw.ells.clone().unwrap_or_default();
        if coefficients.is_none() && ells.is_empty() {
            return Err(Error::Config("a basis form needs 'coefficients' or 'ells'".into()));
        }
        return Ok(FormSource::Basis { spec: spec.trim().to_string(), coefficients, ells });
    }
    Err(Error::Config(format!("form '{form}' is not f_hd, expr:<q-expression> or basis:<spec>")))
}

fn expected_table(v: &toml::Value) -> Result<BTreeMap<u64, Vec<Vec<Q>>>> {
    let bad = |m: &str| Error::Config(format!("expected table: {m}"));
    let t = v.as_table().ok_or_else(|| bad("not a table keyed by ell"))?;
    let mut out = BTreeMap::new();
    for (k, cols) in t {
        let ell = k.parse::<u64>().map_err(|_| bad("keys must be primes"))?;
        if !is_prime(ell) {
            return Err(bad("keys must be primes"));
        }
        let cols = cols.as_array().ok_or_else(|| bad("each entry is a list of columns"))?;
        let mut m = Vec::new();
        for c in cols {
            let c = c.as_array().ok_or_else(|| bad("each column is a list"))?;
            let col = c
                .iter()
                .map(|x| match x {
                    toml::Value::Integer(i) => Ok(qi(*i)),
                    toml::Value::String(s) => parse_rational(s),
                    _ => Err(bad("entries are integers or rational strings")),
                })
                .collect::<Result<Vec<Q>>>()?;
            m.push(col);
        }
        let n = m.len();
        if m.iter().any(|c| c.len() != n) {
            return Err(bad("matrix is not square"));
        }
        out.insert(ell, m);
    }
    Ok(out)
}

fn build_scenario(raw: RawScenario) -> Result<Scenario> {
    let name = raw.name.clone().ok_or_else(|| Error::Config("missing 'name'".into()))?;
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_./".contains(c)) {
        return Err(Error::Config(format!("bad scenario name '{name}'")));
    }
    let range = raw.primes.as_deref().map(PrimeFilter::parse_range).transpose()?;
    if let Some(b) = &raw.builtin {
        let mut s = builtin(b)?;
        s.name = name;
        if let Some((lo, hi)) = range {
            s.primes.lo = lo;
            s.primes.hi = hi;
        }
        if let Some(o) = raw.order {
            s.order = Some(o);
        }
        if let Some(d) = raw.doc {
            s.doc = d;
        }
        return Ok(s);
    }
    let kind_name = raw.kind.as_deref().ok_or_else(|| Error::Config("missing 'kind' (or 'builtin')".into()))?;
    let mut data = Vec::new();
    if let (Some(a), Some(b)) = (&raw.alpha, &raw.beta) {
        data.push(HyperDatum::parse(a, b)?);
    } else if raw.alpha.is_some() || raw.beta.is_some() {
        return Err(Error::Config("'alpha' and 'beta' go together".into()));
    }
    for [a, b] in raw.data.iter().flatten() {
        data.push(HyperDatum::parse(a, b)?);
    }
    let hauptmodul = raw.hauptmodul.as_deref().map(Hauptmodul::parse).transpose()?;
    let character = raw.character.as_deref().map(parse_character).transpose()?;
    let check = raw.check.as_deref().map(CheckKind::parse).transpose()?;
    let m = data.iter().map(|h| h.lcd()).fold(1, num_integer::lcm);
    let (lo, hi) = range.unwrap_or((3, 97));
    let modulus = raw.modulus.unwrap_or(m);
    if modulus == 0 {
        return Err(Error::Config("modulus must be positive".into()));
    }
    let primes = PrimeFilter::new(lo, hi, modulus, raw.residue.unwrap_or(1));
    let rational = |x: &Option<String>, what: &str| -> Result<Q> {
        parse_rational(x.as_deref().ok_or_else(|| Error::Config(format!("kind {kind_name} needs '{what}'")))?)
    };
    let kind = match kind_name {
        "dual-route" => Kind::DualRoute,
        "trace" => {
            let route = match raw.route.as_deref().unwrap_or("p") {
                "p" => TraceRoute::P,
                "h" => TraceRoute::H,
                o => return Err(Error::Config(format!("route must be 'p' or 'h', got '{o}'"))),
            };
            Kind::Trace { form: parse_form(&raw)?, route, conjugates: raw.conjugates.clone().unwrap_or_default() }
        }
        "congruence" => {
            let normalizer = match raw.normalizer.as_deref().unwrap_or("one") {
                "one" => Normalizer::One,
                "cfgl" => Normalizer::Cfgl,
                "two-sign" => Normalizer::TwoSign,
                "gamma-ratio" => Normalizer::GammaRatio,
                o => return Err(Error::Config(format!("unknown normalizer '{o}'"))),
            };
            if !matches!(check, Some(CheckKind::Congruence(_))) {
                return Err(Error::Config("congruence scenarios need check = \"congruence:k\"".into()));
            }
            Kind::Congruence { form: parse_form(&raw)?, normalizer }
        }
        "cfgl" => Kind::Cfgl {
            rescale: raw.rescale.ok_or_else(|| Error::Config("cfgl needs 'rescale'".into()))?.max(1),
            r_max: raw.r_max.unwrap_or(2).clamp(1, 4),
        },
        "supercongruence" => Kind::Supercongruence,
        "dwork-lemma" => Kind::DworkLemma { lambda: raw.lambda.unwrap_or(1), s: raw.level.unwrap_or(1).clamp(1, 3) },
        "gk-lemma" => Kind::GkLemma { lambda: raw.lambda.unwrap_or(1) },
        "residues" => Kind::Residues,
        "dwork-stability" => Kind::DworkStability,
        "legendre-unit-root" => Kind::LegendreUnitRoot { samples: raw.samples.unwrap_or(8).max(1) },
        "k2-coefficients" => {
            let exp = raw.expected.as_ref().ok_or_else(|| Error::Config("k2-coefficients needs 'expected'".into()))?;
            let t = exp.as_table().ok_or_else(|| Error::Config("expected must map exponents to integers".into()))?;
            let mut expected = Vec::new();
            for (k, v) in t {
                let n = k.parse::<usize>().map_err(|_| Error::Config(format!("bad exponent '{k}'")))?;
                let c = v.as_integer().ok_or_else(|| Error::Config(format!("coefficient of q^{n} is not an integer")))?;
                expected.push((n, BigInt::from(c)));
            }
            expected.sort();
            Kind::K2Coefficients {
                r: rational(&raw.r, "r")?,
                s: rational(&raw.s, "s")?,
                rescale: raw.rescale.unwrap_or(1).max(1),
                expected,
            }
        }
        "hecke-table" => Kind::HeckeTable {
            basis: {
                let b = raw.basis.clone().ok_or_else(|| Error::Config("hecke-table needs 'basis'".into()))?;
                parse_basis_spec(&b)?;
                b
            },
            expected: raw.expected.as_ref().map(expected_table).transpose()?.unwrap_or_default(),
            relations: raw.relations.iter().flatten().map(|r| parse_relation(r)).collect::<Result<_>>()?,
            annihilated: raw.annihilated.clone().unwrap_or_default(),
        },
        "recursions" => Kind::Recursions { form: parse_form(&raw)?, r_max: raw.r_max.unwrap_or(2).clamp(1, 4) },
        "eigen-search" => Kind::EigenSearch {
            pair: S2Pair::new(rational(&raw.r, "r")?, rational(&raw.s, "s")?),
            ells: raw.ells.clone().ok_or_else(|| Error::Config("eigen-search needs 'ells'".into()))?,
        },
        "identities" => Kind::Identities(match raw.set.as_deref().unwrap_or("appendix") {
            "prop-7.1" | "log-derivatives" => IdentitySet::LogDerivatives,
            "appendix" => IdentitySet::Appendix,
            o => return Err(Error::Config(format!("unknown identity set '{o}'"))),
        }),
        o => return Err(Error::Config(format!("unknown kind '{o}'"))),
    };
    let check = check.unwrap_or(CheckKind::Equality);
    let s = Scenario {
        name,
        doc: raw.doc.unwrap_or_default(),
        data,
        hauptmodul,
        character,
        primes,
        check,
        order: raw.order,
        kind,
    };
    s.validate()?;
    Ok(s)
}

/// Parse a scenario file. Errors carry the line of the offending `[[scenario]]` entry.
pub fn parse_config(text: &str) -> Result<Vec<Scenario>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .map_or(String::new(), |l| format!("line {l}: "));
        Error::Config(format!("{line}{}", e.message()))
    })?;
    let header_lines: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[scenario]]"))
        .map(|(i, _)| i + 1)
        .collect();
    let mut names = std::collections::HashSet::new();
    raw.scenario
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = header_lines.get(i).copied().unwrap_or(0);
            let s = build_scenario(r).map_err(|e| Error::Config(format!("line {line}: {e}")))?;
            if !names.insert(s.name.clone()) {
                return Err(Error::Config(format!("line {line}: duplicate scenario name '{}'", s.name)));
            }
            Ok(s)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// output

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Format::Human),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            o => Err(Error::Parse(format!("format must be human, json or csv, got '{o}'"))),
        }
    }
}

pub fn tables_json(tables: &[Table]) -> Value {
    let list: Vec<Value> = tables
        .iter()
        .map(|t| {
            let (pass, fail, skip) = t.counts();
            json!({
                "scenario": t.scenario,
                "doc": t.doc,
                "passed": t.passed(),
                "counts": {"pass": pass, "fail": fail, "skip": skip},
                "error": t.error.as_ref().map(|e| e.to_string()),
                "rows": t.rows.iter().map(|r| json!({
                    "p": r.p, "lhs": r.lhs, "rhs": r.rhs, "modulus": r.modulus, "verdict": r.verdict.label(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "passed": tables.iter().all(Table::passed), "scenarios": list })
}

/// CSV with columns p, lhs, rhs, modulus, verdict; a leading scenario column when there
/// is more than one table.
pub fn tables_csv(tables: &[Table]) -> String {
    let multi = tables.len() > 1;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["p", "lhs", "rhs", "modulus", "verdict"];
    if multi {
        header.insert(0, "scenario");
    }
    w.write_record(&header).expect("in-memory csv");
    for t in tables {
        let mut rows: Vec<Vec<String>> =
            t.rows.iter().map(|r| vec![r.p.clone(), r.lhs.clone(), r.rhs.clone(), r.modulus.clone(), r.verdict.label()]).collect();
        if let Some(e) = &t.error {
            rows.push(vec![String::new(), String::new(), String::new(), String::new(), format!("error ({e})")]);
        }
        for mut r in rows {
            if multi {
                r.insert(0, t.scenario.clone());
            }
            w.write_record(&r).expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn clip(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        format!("{}...", s.chars().take(n.saturating_sub(3)).collect::<String>())
    }
}

pub fn tables_human(tables: &[Table]) -> String {
    let mut out = String::new();
    for t in tables {
        out.push_str(&format!("== {}: {}\n", t.scenario, t.doc));
        let cells: Vec<[String; 5]> = t
            .rows
            .iter()
            .map(|r| [clip(&r.p, 40), clip(&r.lhs, 60), clip(&r.rhs, 60), r.modulus.clone(), r.verdict.label()])
            .collect();
        let heads = ["p", "lhs", "rhs", "modulus", "verdict"];
        let mut w = heads.map(|h| h.len());
        for c in &cells {
            for i in 0..5 {
                w[i] = w[i].max(c[i].chars().count());
            }
        }
        let line = |c: &[String; 5]| {
            let mut s = String::new();
            for i in 0..5 {
                s.push_str(&format!("{:<width$}  ", c[i], width = w[i]));
            }
            s.trim_end().to_string() + "\n"
        };
        if !cells.is_empty() {
            out.push_str(&line(&heads.map(String::from)));
            for c in &cells {
                out.push_str(&line(c));
            }
        }
        let (pass, fail, skip) = t.counts();
        match &t.error {
            Some(e) => out.push_str(&format!("-- {}: error: {e}\n\n", t.scenario)),
            None => out.push_str(&format!("-- {}: {pass} pass, {fail} fail, {skip} skipped\n\n", t.scenario)),
        }
    }
    out
}

pub fn render(tables: &[Table], format: Format) -> String {
    match format {
        Format::Human => tables_human(tables),
        Format::Json => serde_json::to_string_pretty(&tables_json(tables)).expect("json") + "\n",
        Format::Csv => tables_csv(tables),
    }
}

/// 0 all pass, 1 any mismatch, 2 usage/config error, 3 precision infeasible.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Precision(_) | Error::Insufficient(_) => 3,
        Error::Config(_) | Error::Parse(_) | Error::Datum(_) | Error::NotCoprime(_) | Error::Prime(_) => 2,
        _ => 1,
    }
}

pub fn exit_code(tables: &[Table]) -> i32 {
    let errs: Vec<i32> = tables.iter().filter_map(|t| t.error.as_ref()).map(error_exit_code).collect();
    if errs.contains(&2) {
        2
    } else if errs.contains(&3) {
        3
    } else if tables.iter().all(Table::passed) {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(name: &str, lo: u64, hi: u64) -> Table {
        let mut s = builtin(name).unwrap();
        s.primes.lo = lo;
        s.primes.hi = hi;
        run_scenario(&s)
    }

    #[test]
    fn prime_filters() {
        assert_eq!(PrimeFilter::new(3, 30, 4, 1).primes(), vec![5, 13, 17, 29]);
        assert_eq!(PrimeFilter::parse_range("3..97").unwrap(), (3, 97));
        assert_eq!(PrimeFilter::parse_range("3..=7").unwrap(), (3, 7));
        assert!(PrimeFilter::parse_range("3-7").is_err());
        assert!(PrimeFilter::parse_range("3..1000000000000").is_err());
        assert!(PrimeFilter::new(10, 5, 1, 0).primes().is_empty());
    }

    #[test]
    fn relations_parse() {
        let r = parse_relation("T3*T5 = 3*T7").unwrap();
        assert_eq!(r.lhs, vec![(qi(1), vec![(3, 1), (5, 1)])]);
        assert_eq!(r.rhs, vec![(qi(3), vec![(7, 1)])]);
        let r = parse_relation("T3^2 = -12").unwrap();
        assert_eq!(r.rhs, vec![(qi(-12), vec![])]);
        assert_eq!(parse_relation("T2 + T3 = -T5").unwrap().lhs.len(), 2);
        for bad in ["T3", "T4 = 0", "T3^0 = 1", "= 1", "Tx = 1"] {
            assert!(parse_relation(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn characters_and_coefficients() {
        assert_eq!(parse_character("kronecker:-4").unwrap(), DirichletChar::kronecker(-4, 4));
        assert_eq!(parse_character("kronecker:8").unwrap(), DirichletChar::kronecker(8, 8));
        assert_eq!(parse_character("kronecker:5").unwrap(), DirichletChar::kronecker(5, 5));
        assert_eq!(parse_character("trivial:8").unwrap(), DirichletChar::trivial(8));
        assert!(parse_character("odd").is_err());
        assert_eq!(parse_coefficient("4i").unwrap(), CycloElement::zeta_pow(4, 1).scale(&qi(4)));
        assert_eq!(parse_coefficient("-i").unwrap(), CycloElement::zeta_pow(4, 1).neg());
        assert_eq!(parse_coefficient("-3/2").unwrap(), CycloElement::from_rational(1, q(-3, 2)));
    }

    #[test]
    fn psi_signs() {
        let hd_ao = hd(&[(1, 2), (1, 2), (1, 2), (1, 2)], &[(1, 1), (1, 1), (1, 1), (1, 1)]);
        let hd_32 = hd(&[(1, 2), (1, 2), (1, 2), (1, 4)], &[(1, 1), (1, 1), (1, 1), (3, 4)]);
        for p in [3u64, 5, 7, 11, 13, 17, 97] {
            assert_eq!(psi_hd(&hd_ao, -64, p).unwrap(), 1);
        }
        for p in [5u64, 13, 17, 29, 37] {
            assert_eq!(psi_hd(&hd_32, -64, p).unwrap(), 1);
        }
    }

    #[test]
    fn registry_is_consistent() {
        let reg = registry();
        let mut names: Vec<&str> = reg.iter().map(|s| s.name.as_str()).collect();
        names.sort();
        let n = names.len();
        names.dedup();
        assert_eq!(names.len(), n);
        for s in &reg {
            s.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn small_scenarios_pass() {
        for (name, lo, hi) in [
            ("ao2000", 3, 13),
            ("kilbourn", 3, 13),
            ("prop-2.3", 5, 41),
            ("thm-2.5", 5, 41),
            ("thm-2.5-super", 5, 41),
            ("prop-3.6", 3, 23),
            ("prop-3.6-eg1", 5, 41),
            ("prop-3.8-j3", 17, 97),
            ("prop-6.3", 17, 97),
            ("thm-2.4", 3, 41),
            ("residues", 5, 17),
            ("dwork", 5, 17),
            ("dual-route", 13, 41),
            ("legendre-unit-root", 5, 13),
            ("example-2.3", 3, 7),
        ] {
            let t = quick(name, lo, hi);
            assert!(t.passed(), "{}", tables_human(std::slice::from_ref(&t)));
            assert!(!t.rows.is_empty(), "{name}");
        }
    }

    #[test]
    fn empty_range_is_success() {
        let t = quick("prop-2.3", 50, 40);
        assert!(t.passed() && t.rows.is_empty());
        assert_eq!(exit_code(&[t]), 0);
    }

    #[test]
    fn config_roundtrip() {
        let text = r#"
[[scenario]]
name = "ao-short"
builtin = "ao2000"
primes = "3..7"

[[scenario]]
name = "super-custom"
kind = "supercongruence"
alpha = "1/2,1/2,1/4"
beta = "3/4,1,1"
primes = "5..30"
"#;
        let list = parse_config(text).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].primes.hi, 7);
        assert_eq!(list[1].primes.modulus, 4);
        let tables = run_many(&list);
        assert_eq!(exit_code(&tables), 0, "{}", render(&tables, Format::Human));
        let csv = render(&tables, Format::Csv);
        assert!(csv.starts_with("scenario,p,lhs,rhs,modulus,verdict\n"));
        assert_eq!(render(&tables, Format::Json), render(&run_many(&list), Format::Json));
    }

    #[test]
    fn config_errors_carry_lines() {
        let bad_kind = "\n[[scenario]]\nname = \"x\"\nkind = \"nope\"\n";
        let e = parse_config(bad_kind).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("unknown kind"), "{e}");
        let bad_filter = "[[scenario]]\nname = \"x\"\nkind = \"residues\"\nalpha = \"1/2,1/2,1/4\"\nbeta = \"3/4,1,1\"\nmodulus = 2\n";
        assert!(parse_config(bad_filter).unwrap_err().to_string().contains("line 1"));
        let syntax = "[[scenario]]\nname = \n";
        assert!(parse_config(syntax).unwrap_err().to_string().contains("line 2"));
        let unknown = "[[scenario]]\nname = \"x\"\nkind = \"residues\"\nfoo = 1\n";
        assert!(parse_config(unknown).is_err());
        let dup = "[[scenario]]\nname = \"a\"\nbuiltin = \"appendix\"\n[[scenario]]\nname = \"a\"\nbuiltin = \"appendix\"\n";
        assert!(parse_config(dup).unwrap_err().to_string().contains("line 4"));
        assert_eq!(error_exit_code(&parse_config(bad_kind).unwrap_err()), 2);
    }

    #[test]
    fn insufficient_order_maps_to_three() {
        let mut s = builtin("ao2000").unwrap();
        s.primes.hi = 13;
        s.order = Some(60);
        let t = run_scenario(&s);
        assert!(matches!(t.error, Some(Error::Insufficient(_))), "{:?}", t.error);
        assert_eq!(exit_code(&[t]), 3);
    }
}
