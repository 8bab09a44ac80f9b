//! One line per acceptance criterion. Exits nonzero if any criterion fails.

use hypermod::verify::{builtin, run_scenario, tables_human, Table, Verdict};
use std::time::{Duration, Instant};

struct Criterion {
    id: u32,
    title: &'static str,
    scenarios: &'static [&'static str],
    /// Zero tolerance everywhere; this records the modulus each comparison uses.
    tolerance: &'static str,
    budget: Option<Duration>,
    /// Rows allowed to be skipped (non-ordinary or supersingular cases named by the criterion).
    skips_allowed: bool,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "dual-route character sums, 8 data, 13 <= p <= 197",
        scenarios: &["dual-route"],
        tolerance: "exact mod p^e, e = choose_precision",
        budget: Some(Duration::from_secs(120)),
        skips_allowed: false,
    },
    Criterion {
        id: 2,
        title: "H_p({1/2^4};1) - p = T_p-eigenvalue of f_HD, odd p <= 97",
        scenarios: &["ao2000"],
        tolerance: "exact integer equality",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 3,
        title: "F_{p-1}({1/2^4};1) = T_p-eigenvalue mod p^3, odd p <= 97",
        scenarios: &["kilbourn"],
        tolerance: "mod p^3",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 4,
        title: "supercongruence sweep over 6 data, p <= 197",
        scenarios: &["thm-2.4"],
        tolerance: "mod p^2, non-ordinary primes skipped",
        budget: None,
        skips_allowed: true,
    },
    Criterion {
        id: 5,
        title: "K2(1/8,1)(16t) coefficients at q^1..q^41",
        scenarios: &["k2-coefficients"],
        tolerance: "exact",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 6,
        title: "Hecke table on K2(j/8,1)(16t), order 2000",
        scenarios: &["cor-3.5"],
        tolerance: "exact matrices",
        budget: Some(Duration::from_secs(30)),
        skips_allowed: false,
    },
    Criterion {
        id: 7,
        title: "P = a_p in Z[i] and the Gamma_p-normalized congruence, p = 1 mod 4, p <= 197",
        scenarios: &["thm-2.5", "thm-2.5-super"],
        tolerance: "exact Gaussian integers; mod p^2",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 8,
        title: "a_p(eta(4t)^10/eta(8t)^2 - 8 eta(8t)^10/eta(4t)^2) = -P - p, 5 <= p <= 197",
        scenarios: &["prop-2.3"],
        tolerance: "exact integer equality",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 9,
        title: "j/8 congruences mod p and exact P = a_p for all four j, p = 1 mod 8, p <= 401",
        scenarios: &["prop-3.8-j1", "prop-3.8-j3", "prop-3.8-j5", "prop-3.8-j7", "prop-6.3"],
        tolerance: "mod p; exact in Q(zeta_8)",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 10,
        title: "residue lemmas, length 3 and 4 data, p <= 61",
        scenarios: &["residues"],
        tolerance: "mod p; residue sum exact",
        budget: None,
        skips_allowed: false,
    },
    Criterion {
        id: 11,
        title: "log-derivative identities, Hauptmodul evaluations, alt-2-eta forms to O(q^25)",
        scenarios: &["prop-7.1", "appendix"],
        tolerance: "coefficientwise exact",
        budget: Some(Duration::from_secs(20)),
        skips_allowed: false,
    },
    Criterion {
        id: 12,
        title: "Dwork unit root stable s=1 vs s=2, Legendre unit root quadratic",
        scenarios: &["dwork", "legendre-unit-root"],
        tolerance: "mod p^2; mod p^3",
        budget: None,
        skips_allowed: true,
    },
];

fn judge(c: &Criterion, tables: &[Table], elapsed: Duration) -> Result<String, String> {
    let mut rows = 0;
    for t in tables {
        if let Some(e) = &t.error {
            return Err(format!("{}: {e}", t.scenario));
        }
        if t.rows.is_empty() {
            return Err(format!("{}: no rows", t.scenario));
        }
        for r in &t.rows {
            match &r.verdict {
                Verdict::Pass => rows += 1,
                Verdict::Fail => return Err(format!("{}: mismatch at {}", t.scenario, r.p)),
                Verdict::Note(n) => return Err(format!("{}: {} {n}", t.scenario, r.p)),
                Verdict::Skip(why) if !c.skips_allowed => {
                    return Err(format!("{}: unexpected skip at {} ({why})", t.scenario, r.p))
                }
                Verdict::Skip(_) => {}
            }
        }
    }
    if let Some(b) = c.budget {
        if elapsed > b {
            return Err(format!("took {:.1}s, budget {}s", elapsed.as_secs_f64(), b.as_secs()));
        }
    }
    Ok(format!("{rows} checks"))
}

fn main() {
    let mut failed = Vec::new();
    for c in CRITERIA {
        let start = Instant::now();
        let tables: Vec<Table> = c
            .scenarios
            .iter()
            .map(|name| run_scenario(&builtin(name).expect("registered scenario")))
            .collect();
        let elapsed = start.elapsed();
        let verdict = judge(c, &tables, elapsed);
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!(
            "criterion {:>2} {tag}  {}  [{}; {detail}; {:.2}s]",
            c.id,
            c.title,
            c.tolerance,
            elapsed.as_secs_f64()
        );
        if verdict.is_err() {
            eprint!("{}", tables_human(&tables));
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
