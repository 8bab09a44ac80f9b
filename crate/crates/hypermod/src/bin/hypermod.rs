use clap::{Args, Parser, Subcommand};
use hypermod::charsum::{p_sum, PrimeContext};
use hypermod::hd_core::{parse_rational, qi, HyperDatum};
use hypermod::hecke::{
    basis_form, eigen_form, eigenform_combination, hecke_matrix, matrix_json, parse_basis_spec, DirichletChar,
};
use hypermod::hyper::check_supercongruence;
use hypermod::padic::{choose_precision, PadicCtx};
use hypermod::qform::{k2_series, qexp};
use hypermod::residue::check_residue_lemmas;
use hypermod::verify::{self, error_exit_code, exit_code, render, Format, PrimeFilter};
use hypermod::{Error, Result};
use serde_json::json;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hypermod", version, about = "Finite-field hypergeometric sums, p-adic checks and modular forms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Datum {
    /// Comma-separated rationals, e.g. 1/2,1/2,1/4
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    #[arg(long, allow_hyphen_values = true)]
    beta: String,
}

impl Datum {
    fn get(&self) -> Result<HyperDatum> {
        HyperDatum::parse(&self.alpha, &self.beta)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact character sum P(HD; lambda) in Q(zeta_M)
    Psum {
        #[command(flatten)]
        datum: Datum,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        lambda: i64,
        #[arg(long)]
        p: u64,
    },
    /// H_p(HD; lambda) mod p^e through Gross-Koblitz
    Hp {
        #[command(flatten)]
        datum: Datum,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        lambda: i64,
        #[arg(long)]
        p: u64,
        /// Override the automatic precision
        #[arg(long)]
        precision: Option<u32>,
    },
    /// Supercongruence legs per prime, as CSV
    Super {
        #[command(flatten)]
        datum: Datum,
        #[arg(long, default_value = "5..200")]
        primes: String,
    },
    /// Expand an eta/theta/E_k expression
    Qexp {
        #[arg(long)]
        expr: String,
        #[arg(long, default_value_t = 100)]
        order: u64,
    },
    /// q-expansion of K2(r, s)(N tau)
    K2 {
        #[arg(long)]
        r: String,
        #[arg(long)]
        s: String,
        #[arg(long, default_value_t = 1)]
        rescale: u64,
        #[arg(long, default_value_t = 200)]
        order: u64,
    },
    /// Hecke matrices and simultaneous eigenforms on a basis of weight-3 forms
    Hecke {
        #[arg(long)]
        basis: String,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
        ell: Vec<u64>,
        #[arg(long, default_value_t = 2000)]
        order: usize,
        /// Character mod 4 by default; trivial:N or kronecker:D
        #[arg(long, default_value = "kronecker:-4", allow_hyphen_values = true)]
        character: String,
    },
    /// Residue-sum lemmas at one prime
    Residues {
        #[command(flatten)]
        datum: Datum,
        #[arg(long)]
        p: u64,
    },
    /// Run built-in or configured verification scenarios
    Verify {
        #[arg(long, conflicts_with = "all")]
        scenario: Option<String>,
        #[arg(long)]
        all: bool,
        /// TOML file with [[scenario]] entries
        #[arg(long)]
        config: Option<std::path::PathBuf>,
        /// Prime range lo..hi, overriding each scenario's range
        #[arg(long)]
        primes: Option<String>,
        #[arg(long, default_value = "human")]
        format: String,
        /// List scenario names and exit
        #[arg(long)]
        list: bool,
    },
}

fn lambda_mod(lambda: i64, p: u64) -> u64 {
    lambda.rem_euclid(p as i64) as u64
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Psum { datum, lambda, p } => {
            let hd = datum.get()?;
            let ctx = PrimeContext::new(p)?;
            let v = p_sum(&hd, lambda_mod(lambda, p), &ctx)?;
            let int = v.as_integer().map(|i| i.to_string());
            print_json(&json!({"datum": hd.to_string(), "p": p, "lambda": lambda, "value": v.to_json(), "integer": int}));
        }
        Cmd::Hp { datum, lambda, p, precision } => {
            let hd = datum.get()?;
            let e = match precision {
                Some(e) => e,
                None => choose_precision(&hd, p)?,
            };
            let ctx = PadicCtx::new(p, e)?;
            let r = ctx.h_p(&hd, lambda)?;
            let lift = ctx.lift_symmetric(r);
            // n Frobenius eigenvalues of size p^{(n-1)/2}, plus p for the lambda = 1 correction
            let n = hd.n() as f64;
            let bound = n * (p as f64).powf((n - 1.0) / 2.0) + p as f64;
            print_json(&json!({
                "datum": hd.to_string(), "p": p, "lambda": lambda, "precision": e,
                "residue": r, "lift": lift, "weil_admissible": (lift.unsigned_abs() as f64) <= bound,
            }));
        }
        Cmd::Super { datum, primes } => {
            let hd = datum.get()?;
            let (lo, hi) = PrimeFilter::parse_range(&primes)?;
            let list = PrimeFilter::new(lo, hi, hd.lcd(), 1).primes();
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let io = |e: csv::Error| Error::Config(e.to_string());
            w.write_record(["p", "ordinary", "gk_leg", "dwork_leg", "combined"]).map_err(io)?;
            let mut all = true;
            for p in list {
                let r = check_supercongruence(&hd, p)?;
                let row = match &r.skip {
                    Some(why) => vec![p.to_string(), r.ordinary.to_string(), format!("skipped ({why})"), String::new(), String::new()],
                    None => {
                        all &= r.combined();
                        vec![p.to_string(), r.ordinary.to_string(), r.gk_leg.to_string(), r.dwork_leg.to_string(), r.combined().to_string()]
                    }
                };
                w.write_record(&row).map_err(io)?;
            }
            w.flush().map_err(|e| Error::Config(e.to_string()))?;
            return Ok(if all { 0 } else { 1 });
        }
        Cmd::Qexp { expr, order } => {
            print_json(&qexp(&expr, &qi(order as i64))?.to_json());
        }
        Cmd::K2 { r, s, rescale, order } => {
            let n = qi(rescale.max(1) as i64);
            let f = k2_series(&parse_rational(&r)?, &parse_rational(&s)?, &(qi(order as i64) / &n))?.rescale(&n)?;
            print_json(&f.truncate(&qi(order as i64)).to_json());
        }
        Cmd::Hecke { basis, ell, order, character } => {
            let chi: DirichletChar = verify::parse_character(&character)?;
            let items = parse_basis_spec(&basis)?;
            let forms = items.iter().map(|it| basis_form(it, order, 3, chi)).collect::<Result<Vec<_>>>()?;
            let mut mats = serde_json::Map::new();
            for &l in &ell {
                mats.insert(format!("T{l}"), matrix_json(&hecke_matrix(&forms, l)?));
            }
            let eig = eigenform_combination(&forms, &ell)?;
            let eig_json: Vec<_> = eig
                .iter()
                .map(|e| {
                    let f = eigen_form(&forms, e)?;
                    let mut v = e.to_json();
                    v["q_expansion"] = f.to_json(30);
                    Ok(v)
                })
                .collect::<Result<_>>()?;
            print_json(&json!({"basis": basis, "order": order, "matrices": mats, "eigenforms": eig_json}));
        }
        Cmd::Residues { datum, p } => {
            let hd = datum.get()?;
            let r = check_residue_lemmas(&hd, p)?;
            let iv = &r.intervals;
            let range = |x: std::ops::RangeInclusive<u64>| json!([x.start(), x.end()]);
            print_json(&json!({
                "datum": hd.to_string(),
                "p": p,
                "intervals": {"I1": range(iv.i1()), "I2": range(iv.i2()), "I3": range(iv.i3()), "I4": range(iv.i4())},
                "pole_orders": r.orders_ok,
                "vanishing": {"C": r.c_vanish, "B_on_I3_I4": r.b_vanish_i3_i4, "A_on_I1": r.a_on_i1},
                "residue_theorem": {"holds": r.residue_theorem, "res_inf_R": r.res_inf_r.to_string(), "res_inf_tR": r.res_inf_tr.to_string()},
                "error_terms": {"B_route": r.b_route, "E_Dwork": r.e_dwork_ok, "E_GK": r.e_gk_ok},
                "passed": r.passed(),
            }));
            return Ok(if r.passed() { 0 } else { 1 });
        }
        Cmd::Verify { scenario, all, config, primes, format, list } => {
            let format = Format::parse(&format)?;
            let mut scenarios = match (&config, &scenario) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    let parsed = verify::parse_config(&text)?;
                    match &scenario {
                        Some(name) => parsed.into_iter().filter(|s| &s.name == name).collect(),
                        None => parsed,
                    }
                }
                (None, Some(name)) => vec![verify::builtin(name)?],
                (None, None) if all || list => verify::registry(),
                (None, None) => return Err(Error::Config("give --scenario NAME or --all".into())),
            };
            if let (Some(name), true) = (&scenario, scenarios.is_empty()) {
                return Err(Error::Config(format!("no scenario named '{name}' in the config")));
            }
            if list {
                for s in &scenarios {
                    println!("{:<22} {}", s.name, s.doc);
                }
                return Ok(0);
            }
            if let Some(range) = primes {
                let (lo, hi) = PrimeFilter::parse_range(&range)?;
                for s in &mut scenarios {
                    s.primes.lo = lo;
                    s.primes.hi = hi;
                }
            }
            let tables = verify::run_many(&scenarios);
            print!("{}", render(&tables, format));
            if format == Format::Human {
                let failed: Vec<&str> = tables.iter().filter(|t| !t.passed()).map(|t| t.scenario.as_str()).collect();
                if failed.is_empty() {
                    println!("all {} scenarios passed", tables.len());
                } else {
                    println!("{} of {} scenarios failed: {}", failed.len(), tables.len(), failed.join(", "));
                }
            }
            return Ok(exit_code(&tables));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
