use hypermod::charsum::{h_from_p, legendre_count, p_sum, PrimeContext};
use hypermod::cyclo::CycloElement;
use hypermod::hd_core::{parse_rational, q, qi, HyperDatum, Q};
use hypermod::hecke::{t_p, DirichletChar, FormVector};
use hypermod::padic::{choose_precision, PadicCtx};
use hypermod::qform::{eta_quotient, qexp, EtaFactor};
use proptest::prelude::*;

const PRIMES: &[u64] = &[5, 7, 11, 13, 17, 29, 37, 41, 73, 89, 97];

fn small_q() -> impl Strategy<Value = Q> {
    (-40i64..40, 1i64..12).prop_map(|(a, b)| q(a, b))
}

fn cyclo(m: u64) -> impl Strategy<Value = CycloElement> {
    prop::collection::vec(-20i64..20, m as usize).prop_map(move |v| CycloElement::from_group_ring(m, &v))
}

fn same(a: &CycloElement, b: &CycloElement) -> bool {
    a.sub(b).unwrap().is_zero()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rational_display_roundtrips(x in small_q()) {
        prop_assert_eq!(parse_rational(&x.to_string()).unwrap(), x);
    }

    #[test]
    fn cyclo_ring_laws(a in cyclo(8), b in cyclo(8), c in cyclo(8)) {
        let ab = a.mul(&b).unwrap();
        prop_assert!(same(&ab, &b.mul(&a).unwrap()));
        let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
        let rhs = ab.add(&a.mul(&c).unwrap()).unwrap();
        prop_assert!(same(&lhs, &rhs));
        prop_assert!(same(&ab.mul(&c).unwrap(), &a.mul(&b.mul(&c).unwrap()).unwrap()));
    }

    #[test]
    fn cyclo_automorphisms_compose(a in cyclo(8), b in cyclo(8), i in 0usize..4, j in 0usize..4) {
        let units = [1i64, 3, 5, 7];
        let (s, t) = (units[i], units[j]);
        let left = a.aut(s).unwrap().aut(t).unwrap();
        prop_assert!(same(&left, &a.aut(s * t).unwrap()));
        // automorphisms are ring maps
        let prod = a.mul(&b).unwrap().aut(s).unwrap();
        prop_assert!(same(&prod, &a.aut(s).unwrap().mul(&b.aut(s).unwrap()).unwrap()));
    }

    #[test]
    fn cyclo_json_roundtrips(a in cyclo(4)) {
        let back = CycloElement::from_json(&a.to_json().to_string()).unwrap();
        prop_assert!(same(&a, &back));
    }

    #[test]
    fn cyclo_inverse(a in cyclo(4)) {
        prop_assume!(!a.is_zero());
        let one = a.mul(&a.inv().unwrap()).unwrap();
        prop_assert!(same(&one, &CycloElement::one(4)));
    }

    #[test]
    fn teichmuller_is_root_of_unity(pi in 0usize..PRIMES.len(), x in 1i64..1000, e in 1u32..4) {
        let p = PRIMES[pi];
        prop_assume!(x % p as i64 != 0);
        let c = PadicCtx::new(p, e).unwrap();
        let t = c.teichmuller(x).unwrap();
        prop_assert_eq!(c.pow(t, p - 1), 1);
        prop_assert_eq!(t % p, x as u64 % p);
    }

    #[test]
    fn gamma_functional_equation(pi in 0usize..PRIMES.len(), x in 0u64..100_000, e in 1u32..4) {
        let p = PRIMES[pi];
        let c = PadicCtx::new(p, e).unwrap();
        let x = x % c.modulus;
        let next = c.gamma(c.add(x, 1));
        // Gamma_p(x+1) = -x Gamma_p(x) for units, -Gamma_p(x) otherwise
        let want = if x.is_multiple_of(p) { c.neg(c.gamma(x)) } else { c.neg(c.mul(x, c.gamma(x))) };
        prop_assert_eq!(next, want);
    }

    #[test]
    fn legendre_family_counts(pi in 0usize..PRIMES.len(), lam in 2u64..1000) {
        let p = PRIMES[pi];
        let lam = lam % p;
        prop_assume!(lam >= 2);
        let hd = HyperDatum::from_pairs(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]).unwrap();
        let ctx = PrimeContext::new(p).unwrap();
        let ps = p_sum(&hd, lam, &ctx).unwrap().as_integer().expect("rational datum");
        let count = legendre_count(p, lam) as i64;
        prop_assert_eq!(ps, (count - p as i64 - 1).into());
        // Hasse bound
        let a = (p as i64 + 1 - count) as f64;
        prop_assert!(a.abs() <= 2.0 * (p as f64).sqrt());
    }

    #[test]
    fn dual_route_random_lambda(pi in 0usize..PRIMES.len(), lam in 2u64..1000, which in 0usize..3) {
        let p = PRIMES[pi];
        let lam = lam % p;
        prop_assume!(lam >= 2);
        let data = [
            HyperDatum::from_pairs(&[(1, 2), (1, 2)], &[(1, 1), (1, 1)]).unwrap(),
            HyperDatum::from_pairs(&[(1, 2), (1, 2), (1, 2)], &[(1, 1), (1, 1), (1, 1)]).unwrap(),
            HyperDatum::from_pairs(&[(1, 4), (3, 4)], &[(1, 1), (1, 1)]).unwrap(),
        ];
        let hd = &data[which];
        prop_assume!((p - 1).is_multiple_of(hd.lcd()));
        let e = choose_precision(hd, p).unwrap();
        let c = PadicCtx::new(p, e).unwrap();
        let ctx = PrimeContext::new(p).unwrap();
        let exact = h_from_p(hd, lam, &ctx).unwrap();
        prop_assert_eq!(c.embed_cyclo(&exact).unwrap(), c.h_p(hd, lam as i64).unwrap());
        // Weil window: n eigenvalues of absolute value p^{(n-1)/2}
        let n = hd.n() as f64;
        let v = exact.as_rational().expect("defined over Q");
        prop_assert!(v.is_integer());
        let bound = n * (p as f64).powf((n - 1.0) / 2.0);
        prop_assert!(v.to_integer().to_string().parse::<f64>().unwrap().abs() <= bound + 1e-9);
    }

    #[test]
    fn conjugation_is_an_action(c in prop::sample::select(vec![1i64, 3, 5, 7]), d in prop::sample::select(vec![1i64, 3, 5, 7])) {
        let hd = HyperDatum::from_pairs(&[(1, 2), (1, 2), (1, 8)], &[(1, 1), (1, 1), (1, 1)]).unwrap();
        let two = hd.conjugate(c).unwrap().conjugate(d).unwrap();
        prop_assert_eq!(two.sorted(), hd.conjugate(c * d).unwrap().sorted());
    }

    #[test]
    fn eta_quotients_have_integer_coefficients(m1 in 1i64..5, k1 in -4i64..6, m2 in 1i64..5, k2 in -4i64..6) {
        let f = eta_quotient(
            &[EtaFactor { m: qi(m1), k: qi(k1) }, EtaFactor { m: qi(m2), k: qi(k2) }],
            &qi(40),
        ).unwrap();
        for c in f.coeffs() {
            prop_assert!(c.is_integer());
        }
    }

    #[test]
    fn series_division_inverts_multiplication(a in 1i64..4, b in 1i64..4) {
        let order = qi(30);
        let f = qexp(&format!("eta({a})^2*eta({b})"), &order).unwrap();
        let g = qexp(&format!("eta({b})^3"), &order).unwrap();
        let back = f.mul(&g).div(&g).unwrap();
        prop_assert!(back.agrees_to(&f, &qi(25)));
    }

    #[test]
    fn hecke_operators_are_linear(u in prop::collection::vec(-9i64..9, 120), v in prop::collection::vec(-9i64..9, 120), k in -5i64..5, p in prop::sample::select(vec![3u64, 5, 7])) {
        let chi = DirichletChar::kronecker(-4, 4);
        let f = FormVector::from_rationals(3, chi, u.iter().map(|&x| qi(x)).collect());
        let g = FormVector::from_rationals(3, chi, v.iter().map(|&x| qi(x)).collect());
        let kk = CycloElement::from_int(1, k);
        let one = CycloElement::one(1);
        let comb = FormVector::combine(&[(kk.clone(), &f), (one.clone(), &g)]).unwrap();
        let lhs = t_p(&comb, p).unwrap();
        let rhs = FormVector::combine(&[(kk, &t_p(&f, p).unwrap()), (one, &t_p(&g, p).unwrap())]).unwrap();
        prop_assert_eq!(lhs.order(), rhs.order());
        for n in 0..lhs.order() {
            prop_assert!(same(lhs.coeff(n).unwrap(), rhs.coeff(n).unwrap()));
        }
    }

    #[test]
    fn parsers_do_not_panic(s in "\\PC{0,60}", seed in 0usize..6, cut in 0usize..80, junk in "[-+*/^(),.:@0-9a-z =\\[\\]\"{}]{0,12}") {
        let seeds = [
            "1/2,1/2,1/4|1,1,3/4",
            "eta(4)^10/eta(8)^2 - 8*eta(8)^10/eta(4)^2",
            "k2:1/8:1@16,k2:3/8:1@16",
            "[[scenario]]\nname = \"x\"\nkind = \"trace\"\nalpha = \"1/2,1/2\"\nbeta = \"1,1\"\n",
            "{\"M\": 4, \"coeffs\": [\"1\", \"4\"]}",
            "-3/8",
        ];
        let base = seeds[seed];
        let k = base.char_indices().map(|(i, _)| i).nth(cut).unwrap_or(base.len());
        let mutated = format!("{}{junk}{}", &base[..k], &base[k..]);
        for input in [s.as_str(), mutated.as_str()] {
            let (a, b) = input.split_once('|').unwrap_or((input, "1"));
            let _ = HyperDatum::parse(a, b);
            let _ = parse_rational(input);
            let _ = hypermod::qform::parse_qexpr(input);
            let _ = hypermod::hecke::parse_basis_spec(input);
            let _ = hypermod::verify::parse_config(input);
            let _ = CycloElement::from_json(input);
        }
    }
}
