//! Command-line surface: every engine, oracle and check suite behind one
//! binary with JSON output on stdout and diagnostics on stderr.
//!
//! Exit codes: 0 success, 1 a check suite failed, 2 flag or input errors.
//! For a fixed seed the output is byte-identical across runs and thread
//! counts (the Monte Carlo block contract).

use crate::algebra::{poly_parse, Polynomial};
use crate::diffop::CheckReport;
use crate::haar::{low_dim_quadrature, mc_integrate, sample_stiefel};
use crate::iz::{iz_mc, IzEvaluator, SumConvention};
use crate::kernels::{check_kernel_vs_moments, kernel_moment_check, psi_hat_beta2, psi_hat_beta4};
use crate::pizzetti::{
    check_clifford_lemmas, check_prop43, integrate, integrate_auto, Engine, MomentValue,
    StiefelSpec,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "haarint",
    about = "Exact and Monte Carlo invariant integration over Stiefel manifolds",
    version
)]
struct Cli {
    /// Worker threads for parallel sections (default: HAARINT_THREADS or all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Dyson index: 1 (orthogonal), 2 (unitary), 4 (unitary-symplectic)
    #[arg(long)]
    beta: u32,
    #[arg(long)]
    n: u32,
    /// Codimension (number of columns), k = n - m
    #[arg(long)]
    k: u32,
}

impl SpecArgs {
    fn spec(&self) -> Result<StiefelSpec, String> {
        StiefelSpec::new(self.beta, self.n, self.k).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact Haar moment of a polynomial over St^(beta)(n, n-k)
    Moment {
        #[command(flatten)]
        spec: SpecArgs,
        /// Polynomial file (JSON schema; see README)
        #[arg(long)]
        poly: String,
        /// Engine: auto, sphere, codim2, so2, clifford, recursion
        #[arg(long, default_value = "auto")]
        engine: String,
    },
    /// Evaluate the kernel function at given singular values
    Kernel {
        /// Dyson index (2 or 4)
        #[arg(long)]
        beta: u32,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        /// Comma-separated singular values
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// Also run the moment-series cross-check to this (even) degree
        #[arg(long)]
        moment_degree: Option<u32>,
    },
    /// Itzykson-Zuber series for SO(4)/[SO(2)xSO(2)]
    Iz {
        /// Diagonal of H: e1,e2,e3,e4
        #[arg(long = "H", value_delimiter = ',', num_args = 1..)]
        h: Vec<f64>,
        #[arg(long, default_value_t = 48)]
        jmax: u32,
        /// Summation convention: paper | from_zero
        #[arg(long, default_value = "from_zero")]
        convention: String,
        /// Also run the Monte Carlo oracle: samples,seed
        #[arg(long, value_delimiter = ',')]
        mc_check: Option<Vec<u64>>,
        /// Relative size below which two consecutive shells stop the series
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Draw Haar samples
    Sample {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a named invariant check suite
    Check {
        /// commutators | prop43 | clifford-lemmas | sekiguchi | kernel-vs-moments
        suite: String,
        #[arg(long, default_value_t = 1)]
        beta: u32,
        #[arg(long, default_value_t = 3)]
        n: u32,
        #[arg(long, default_value_t = 2)]
        k: u32,
        /// Clifford structure count for clifford-lemmas
        #[arg(long, default_value_t = 2)]
        kappa: u32,
        /// Column dimension parameter for clifford-lemmas
        #[arg(long, default_value_t = 3)]
        m: u32,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Moment-series degree for kernel-vs-moments
        #[arg(long, default_value_t = 8)]
        degree: u32,
        /// Highest det power for sekiguchi
        #[arg(long, default_value_t = 4)]
        amax: u32,
        /// Extra absolute slack for kernel-vs-moments (on top of the tail bound)
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Monte Carlo or quadrature oracle for a polynomial
    Oracle {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        poly: String,
        /// mc | quadrature
        #[arg(long, default_value = "mc")]
        kind: String,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Nodes per angle for quadrature
        #[arg(long, default_value_t = 64)]
        nodes: usize,
    },
}

fn init_threads(threads: Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("HAARINT_THREADS").ok().and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_poly(path: &str, spec: &StiefelSpec) -> Result<Polynomial, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let f = poly_parse(&text).map_err(|e| e.to_string())?;
    if f.layout() != spec.layout() {
        return Err(format!(
            "polynomial layout {} does not match spec layout {}",
            f.layout(),
            spec.layout()
        ));
    }
    Ok(f)
}

fn rational_string(r: &crate::algebra::Rational) -> String {
    use num_traits::One;
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Split a polynomial into real and imaginary coefficient parts.
fn split_complex(f: &Polynomial) -> (Polynomial, Polynomial) {
    use crate::algebra::{gauss, GaussRational};
    use num_traits::Zero;
    let layout = f.layout();
    let mut re = Polynomial::zero(layout);
    let mut im = Polynomial::zero(layout);
    for (m, c) in f.terms() {
        if !c.re.is_zero() {
            re.add_term(m.clone(), gauss(c.re.clone()));
        }
        if !c.im.is_zero() {
            im.add_term(m.clone(), GaussRational::new(c.im.clone(), Zero::zero()));
        }
    }
    (re, im)
}

fn report_json(report: &CheckReport) -> serde_json::Value {
    json!({
        "passed": report.passed,
        "trials": report.trials,
        "failures": report.failures,
    })
}

fn run_command(cmd: Command) -> Result<(serde_json::Value, i32), String> {
    match cmd {
        Command::Moment { spec, poly, engine } => {
            let spec = spec.spec()?;
            let f = load_poly(&poly, &spec)?;
            let run = |g: &Polynomial| -> Result<crate::algebra::Rational, String> {
                if engine == "auto" {
                    integrate_auto(&spec, g).map_err(|e| e.to_string())
                } else {
                    let eng = Engine::parse(&engine)
                        .ok_or_else(|| format!("unknown engine `{engine}`"))?;
                    integrate(&spec, g, eng).map_err(|e| e.to_string())
                }
            };
            let value = if f.is_real() {
                MomentValue::Exact(run(&f)?).to_json()
            } else {
                let (re, im) = split_complex(&f);
                json!({"exact": {
                    "re": rational_string(&run(&re)?),
                    "im": rational_string(&run(&im)?),
                }})
            };
            Ok((value, 0))
        }
        Command::Kernel { beta, n, m, lambdas, moment_degree } => {
            if m >= n {
                return Err(format!("need m < n, got m = {m}, n = {n}"));
            }
            let value = match beta {
                2 => psi_hat_beta2(n, m, &lambdas).map_err(|e| e.to_string())?,
                4 => psi_hat_beta4(n, m, &lambdas).map_err(|e| e.to_string())?,
                _ => return Err(format!("kernel formulas cover beta 2 and 4, got {beta}")),
            };
            let mut out = json!({
                "value": value.value,
                "method": value.method,
                "lambdas": lambdas,
            });
            if beta == 4 {
                let norm = crate::kernels::beta4_constant_report((n - m) as usize, m);
                out["normalization"] = json!({
                    "pinned": format!("{}", norm.pinned),
                    "printed": format!("{}", norm.printed),
                    "matches": norm.matches(),
                });
            }
            if let Some(d) = moment_degree {
                let spec = StiefelSpec::new(beta, n, n - m).map_err(|e| e.to_string())?;
                let mc = kernel_moment_check(&spec, &lambdas, d).map_err(|e| e.to_string())?;
                out["moment_check"] = json!({
                    "series": mc.series_value,
                    "kernel": mc.kernel_value,
                    "tail_bound": mc.tail_bound,
                    "per_degree": mc.per_degree,
                    "truncation": mc.truncation,
                });
            }
            Ok((out, 0))
        }
        Command::Iz { h, jmax, convention, mc_check, tolerance } => {
            if h.len() != 4 {
                return Err(format!("--H needs four eigenvalues, got {}", h.len()));
            }
            let conv = SumConvention::parse(&convention)
                .ok_or_else(|| format!("unknown convention `{convention}`"))?;
            let mut ev = IzEvaluator::new();
            let r = ev
                .series_with_tolerance([h[0], h[1], h[2], h[3]], jmax, conv, tolerance)
                .map_err(|e| e.to_string())?;
            let mut out = json!({
                "value": r.value,
                "tail": r.tail_estimate,
                "jmax": r.jmax,
                "converged": r.converged,
                "truncated": r.truncated,
                "convention": conv.name(),
            });
            if let Some(ms) = mc_check {
                if ms.len() != 2 {
                    return Err("--mc-check takes `samples,seed`".to_string());
                }
                let est = iz_mc([h[0], h[1], h[2], h[3]], ms[0], ms[1]);
                out["mc"] = serde_json::to_value(&est).unwrap();
            }
            Ok((out, 0))
        }
        Command::Sample { spec, count, seed } => {
            let spec = spec.spec()?;
            let mut samples = Vec::with_capacity(count as usize);
            for i in 0..count {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                rng.set_stream(i);
                samples.push(sample_stiefel(&spec, &mut rng).coords);
            }
            Ok((
                json!({
                    "layout": {"beta": spec.beta, "n": spec.n, "k": spec.k},
                    "seed": seed,
                    "samples": samples,
                }),
                0,
            ))
        }
        Command::Check { suite, beta, n, k, kappa, m, trials, seed, degree, amax, tolerance } => {
            let report = match suite.as_str() {
                "commutators" => {
                    let spec = StiefelSpec::new(beta, n, k.max(2)).map_err(|e| e.to_string())?;
                    crate::diffop::check_commutators(spec.layout(), trials, seed)
                }
                "prop43" => {
                    let spec = StiefelSpec::new(beta, n, k).map_err(|e| e.to_string())?;
                    check_prop43(&spec, trials, seed).map_err(|e| e.to_string())?
                }
                "clifford-lemmas" => {
                    check_clifford_lemmas(kappa, m, trials, 3, seed).map_err(|e| e.to_string())?
                }
                "sekiguchi" => crate::iz::check_sekiguchi(amax).map_err(|e| e.to_string())?,
                "kernel-vs-moments" => {
                    check_kernel_vs_moments(degree, tolerance).map_err(|e| e.to_string())?
                }
                other => return Err(format!("unknown check suite `{other}`")),
            };
            let code = if report.passed { 0 } else { 1 };
            Ok((report_json(&report), code))
        }
        Command::Oracle { spec, poly, kind, samples, seed, nodes } => {
            let spec = spec.spec()?;
            let f = load_poly(&poly, &spec)?;
            match kind.as_str() {
                "mc" => {
                    let est = mc_integrate(&spec, &f, samples, seed).map_err(|e| e.to_string())?;
                    Ok((serde_json::to_value(&est).unwrap(), 0))
                }
                "quadrature" => {
                    let v = low_dim_quadrature(&spec, &f, nodes).map_err(|e| e.to_string())?;
                    Ok((json!({"value": v, "nodes": nodes}), 0))
                }
                other => Err(format!("unknown oracle kind `{other}`")),
            }
        }
    }
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run_command(cli.command) {
        Ok((value, code)) => {
            println!("{value}");
            code
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
