//! Command-line front end: single-point evaluations, grid sweeps, the
//! verification suite, and CSV / newline-delimited JSON export.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbe_core::expansion::{coeffs, eta_protocol_expansion, eta_thermo_expansion, lattice_classify};
use fbe_core::num::Precision;
use fbe_core::protocol::{apply_protocol, CeilMode, Mode, ProtocolConfig};
use fbe_core::storage::{lift_report, work_distribution};
use fbe_core::sweep::{geometric_grid, preset_points, run_point, PointSpec, Record, CSV_HEADER};
use fbe_core::thermo::{eta_thermo, eta_thermo_via_relent, EngineConfig};
use fbe_core::{block_size_m, moments, BathSpec, Error, SiteSpectrum};
use std::io::Write;

#[derive(Parser)]
#[command(name = "fbe", version, about = "Heat-engine numerics for finite n-particle baths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputKind {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Blockwise,
    Auto,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Blockwise => Mode::Blockwise,
            ModeArg::Auto => Mode::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum CeilArg {
    Ceil,
    Floor,
}

#[derive(Args, Clone)]
struct BathArgs {
    /// Site energy levels, comma separated, or the preset name "qubit"
    /// for the two-level spectrum +1,-1
    #[arg(long, default_value = "1,-1", value_parser = parse_levels)]
    levels: SiteSpectrum,
    /// Hot-bath inverse temperature
    #[arg(long, default_value_t = 1.0 / 30.0)]
    beta_hot: f64,
    /// Cold-bath inverse temperature
    #[arg(long, default_value_t = 1.0 / 15.0)]
    beta_cold: f64,
    /// Particles per bath
    #[arg(long)]
    n: u32,
}

fn parse_levels(s: &str) -> Result<SiteSpectrum, String> {
    if s == "qubit" || s == "qubit-pm1" {
        return Ok(SiteSpectrum::qubit_pm1());
    }
    let levels: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let levels = levels.map_err(|e| format!("bad level list: {e}"))?;
    SiteSpectrum::new(levels).map_err(|e| e.to_string())
}

#[derive(Args, Clone)]
struct OutArgs {
    /// csv or json (newline-delimited records)
    #[arg(long, value_enum, default_value = "json")]
    output: OutputKind,
    /// Write to this path instead of stdout
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Worker threads for sweeps (FBE_THREADS overrides)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Thermodynamic optimum for a target heat draw
    Thermo {
        #[command(flatten)]
        bath: BathArgs,
        /// Heat drawn from the hot bath
        #[arg(long)]
        q: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the swap protocol and report the outcome
    Protocol {
        #[command(flatten)]
        bath: BathArgs,
        /// Swap block size; defaults from --q by the block-size rule
        #[arg(long)]
        m: Option<u32>,
        /// Target heat, used to derive m when --m is absent
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "ceil")]
        ceil: CeilArg,
        #[arg(long, value_enum, default_value = "auto")]
        precision: PrecisionArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Expansion coefficients and truncated efficiency estimates
    Expansion {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long)]
        q: f64,
        /// 1 or 2
        #[arg(long, default_value_t = 2)]
        order: u8,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Work-value distribution on the storage and entropy-energy ratios
    WorkDist {
        #[command(flatten)]
        bath: BathArgs,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Grid sweep over (n, q) producing one record per point
    Sweep {
        /// fig1 (documented default grid) or fig2 (same grid; JSON
        /// records carry the gap/scaling fields and a summary is printed
        /// to stderr)
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "1,-1", value_parser = parse_levels)]
        levels: SiteSpectrum,
        #[arg(long, default_value_t = 1.0 / 30.0)]
        beta_hot: f64,
        #[arg(long, default_value_t = 1.0 / 15.0)]
        beta_cold: f64,
        /// Single n (exclusive with --n-grid)
        #[arg(long, conflicts_with = "n_grid")]
        n: Option<u32>,
        /// Geometric grid lo:hi:points
        #[arg(long)]
        n_grid: Option<String>,
        /// Fixed q (exclusive with --q-rule)
        #[arg(long, conflicts_with = "q_rule")]
        q: Option<f64>,
        /// Power rule a,b meaning q = a * n^b
        #[arg(long)]
        q_rule: Option<String>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "auto")]
        precision: PrecisionArg,
        /// Also evaluate the storage distribution per point (true/false)
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        storage: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the built-in invariant suite; exit 0 iff all checks pass
    Verify,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn writer(out: &OutArgs) -> std::io::Result<Box<dyn Write>> {
    Ok(match &out.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout())),
    })
}

fn precision_of(p: PrecisionArg) -> Option<Precision> {
    match p {
        PrecisionArg::Double => Some(Precision::Double),
        PrecisionArg::Extended => Some(Precision::Extended),
        PrecisionArg::Auto => None,
    }
}

fn resolve_m(bath: &BathArgs, m: Option<u32>, q: Option<f64>) -> Result<u32, Error> {
    match (m, q) {
        (Some(m), _) => Ok(m),
        (None, Some(q)) => {
            let mom = moments(&bath.levels, bath.beta_hot)?;
            let m = block_size_m(bath.beta_hot, q, bath.n, mom.variance, bath.levels.d())?;
            u32::try_from(m).map_err(|_| Error::invalid("block size overflow"))
        }
        (None, None) => Err(Error::invalid("pass --m or --q")),
    }
}

fn emit_json(out: &OutArgs, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut w = writer(out).map_err(|e| Error::numerical(e.to_string()))?;
    writeln!(w, "{}", serde_json::to_string(value).unwrap())
        .map_err(|e| Error::numerical(e.to_string()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Thermo { bath, q, out } => {
            let hot = BathSpec::new(bath.levels.clone(), bath.beta_hot, bath.n)?;
            let cold = BathSpec::new(bath.levels.clone(), bath.beta_cold, bath.n)?;
            let cfg = EngineConfig::new(hot, cold, q)?;
            let sol = eta_thermo(&cfg)?;
            let via_relent = eta_thermo_via_relent(&cfg)?;
            #[derive(serde::Serialize)]
            struct ThermoOut {
                #[serde(flatten)]
                solution: fbe_core::ThermoSolution,
                eta_carnot: f64,
                eta_via_relent: f64,
            }
            emit_json(
                &out,
                &ThermoOut { solution: sol, eta_carnot: cfg.carnot(), eta_via_relent: via_relent },
            )?;
            Ok(0)
        }
        Command::Protocol { bath, m, q, mode, ceil, precision, out } => {
            let m = resolve_m(&bath, m, q)?;
            let hot = BathSpec::new(bath.levels.clone(), bath.beta_hot, bath.n)?;
            let cold = BathSpec::new(bath.levels.clone(), bath.beta_cold, bath.n)?;
            let mut cfg = ProtocolConfig::new(hot, cold, m, mode.into())?;
            cfg.ceil = match ceil {
                CeilArg::Ceil => CeilMode::Ceil,
                CeilArg::Floor => CeilMode::Floor,
            };
            cfg.precision = precision_of(precision);
            let outcome = apply_protocol(&cfg)?;
            emit_json(&out, &outcome)?;
            Ok(0)
        }
        Command::Expansion { bath, q, order, out } => {
            if !(1..=2).contains(&order) {
                return Err(Error::invalid("order must be 1 or 2"));
            }
            let mh = moments(&bath.levels, bath.beta_hot)?;
            let mc = moments(&bath.levels, bath.beta_cold)?;
            let c = coeffs(&mh, &mc, bath.beta_hot, bath.beta_cold);
            let lat = lattice_classify(&bath.levels, 1e-9);
            #[derive(serde::Serialize)]
            struct ExpansionOut {
                c1: f64,
                c2: f64,
                d1: f64,
                lattice: fbe_core::LatticeClass,
                eta_thermo_estimate: f64,
                eta_protocol_estimate: f64,
                error_band: String,
                in_regime: bool,
            }
            let band = match lat.kind {
                fbe_core::LatticeKind::NonLattice => "O(q^2/n^(5/2)) + O(q^3/n^3)",
                fbe_core::LatticeKind::Lattice => "O(1/n) + O(q^2/n^2)",
            };
            emit_json(
                &out,
                &ExpansionOut {
                    c1: c.c1,
                    c2: c.c2,
                    d1: c.d1,
                    lattice: lat,
                    eta_thermo_estimate: eta_thermo_expansion(
                        &c, bath.beta_hot, bath.beta_cold, q, bath.n, order,
                    ),
                    eta_protocol_estimate: eta_protocol_expansion(
                        &c, bath.beta_hot, bath.beta_cold, q, bath.n, &lat,
                    ),
                    error_band: band.to_string(),
                    in_regime: c.in_regime(q, bath.n),
                },
            )?;
            Ok(0)
        }
        Command::WorkDist { bath, m, q, mode, out } => {
            let m = resolve_m(&bath, m, q)?;
            let hot = BathSpec::new(bath.levels.clone(), bath.beta_hot, bath.n)?;
            let cold = BathSpec::new(bath.levels.clone(), bath.beta_cold, bath.n)?;
            let cfg = ProtocolConfig::new(hot, cold, m, mode.into())?;
            let outcome = apply_protocol(&cfg)?;
            let wd = work_distribution(&cfg)?;
            let lift = if outcome.heat_hot != 0.0 {
                Some(lift_report(&outcome, &wd)?)
            } else {
                None
            };
            #[derive(serde::Serialize)]
            struct WdOut {
                distribution: fbe_core::WorkDistribution,
                lift: Option<fbe_core::LiftReport>,
            }
            emit_json(&out, &WdOut { distribution: wd, lift })?;
            Ok(0)
        }
        Command::Sweep {
            preset,
            levels,
            beta_hot,
            beta_cold,
            n,
            n_grid,
            q,
            q_rule,
            mode,
            precision,
            storage,
            out,
        } => {
            let points: Vec<PointSpec> = match preset.as_deref() {
                Some("fig1") | Some("fig2") => preset_points(100, 100_000, 25, storage),
                Some(other) => {
                    return Err(Error::invalid(format!("unknown preset: {other}")));
                }
                None => {
                    let ns: Vec<u32> = if let Some(n) = n {
                        vec![n]
                    } else if let Some(g) = &n_grid {
                        let parts: Vec<&str> = g.split(':').collect();
                        if parts.len() != 3 {
                            return Err(Error::invalid("--n-grid wants lo:hi:points"));
                        }
                        let lo: u32 = parts[0].parse().map_err(|_| Error::invalid("bad lo"))?;
                        let hi: u32 = parts[1].parse().map_err(|_| Error::invalid("bad hi"))?;
                        let k: u32 = parts[2].parse().map_err(|_| Error::invalid("bad points"))?;
                        geometric_grid(lo, hi, k)
                    } else {
                        return Err(Error::invalid("pass --n, --n-grid, or --preset"));
                    };
                    let qf: Box<dyn Fn(u32) -> f64> = if let Some(q) = q {
                        Box::new(move |_| q)
                    } else if let Some(rule) = &q_rule {
                        let parts: Vec<&str> = rule.split(',').collect();
                        if parts.len() != 2 {
                            return Err(Error::invalid("--q-rule wants a,b for q = a n^b"));
                        }
                        let a: f64 = parts[0].parse().map_err(|_| Error::invalid("bad a"))?;
                        let b: f64 = parts[1].parse().map_err(|_| Error::invalid("bad b"))?;
                        Box::new(move |n| a * (n as f64).powf(b))
                    } else {
                        return Err(Error::invalid("pass --q or --q-rule"));
                    };
                    ns.into_iter()
                        .map(|n| PointSpec {
                            site: levels.clone(),
                            beta_hot,
                            beta_cold,
                            n,
                            q: qf(n),
                            mode: mode.into(),
                            precision: precision_of(precision),
                            with_storage: storage,
                        })
                        .collect()
                }
            };

            let threads = std::env::var("FBE_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok())
                .or(out.threads)
                .unwrap_or_else(|| {
                    std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
                })
                .max(1);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::numerical(e.to_string()))?;
            let results: Vec<Result<Record, Error>> = pool.install(|| {
                use rayon::prelude::*;
                points.par_iter().map(run_point).collect()
            });

            let mut records = Vec::with_capacity(results.len());
            for r in results {
                records.push(r?);
            }
            let mut w = writer(&out).map_err(|e| Error::numerical(e.to_string()))?;
            match out.output {
                OutputKind::Csv => {
                    writeln!(w, "{CSV_HEADER}").map_err(|e| Error::numerical(e.to_string()))?;
                    for r in &records {
                        writeln!(w, "{}", r.to_csv_row())
                            .map_err(|e| Error::numerical(e.to_string()))?;
                    }
                }
                OutputKind::Json => {
                    for r in &records {
                        writeln!(w, "{}", r.to_json())
                            .map_err(|e| Error::numerical(e.to_string()))?;
                    }
                }
            }
            drop(w);
            if preset.as_deref() == Some("fig2") {
                let upper: Vec<f64> = records
                    .iter()
                    .filter(|r| r.n >= 10_000)
                    .filter_map(|r| r.scaling_residual)
                    .collect();
                if !upper.is_empty() {
                    let mean = upper.iter().sum::<f64>() / upper.len() as f64;
                    eprintln!(
                        "fig2 summary: cubic-correction constant over n >= 1e4: mean {mean:.1}, \
                         values {:?}",
                        upper.iter().map(|v| v.round()).collect::<Vec<_>>()
                    );
                }
            }
            Ok(0)
        }
        Command::Verify => verify(),
    }
}

/// Fast invariant suite; prints one line per check.
fn verify() -> Result<i32, Error> {
    let mut all_ok = true;
    let check = |name: &str, ok: bool, detail: String| -> bool {
        println!("[{}] {name}: {detail}", if ok { "ok" } else { "FAIL" });
        ok
    };

    let s = SiteSpectrum::qubit_pm1();
    let bh = 1.0 / 30.0;
    let bl = 1.0 / 15.0;

    let mh = moments(&s, bh)?;
    all_ok &= check(
        "psi identity",
        (mh.psi_prime * bh * bh * mh.variance - 1.0).abs() < 1e-12,
        format!("psi' b^2 s^2 - 1 = {:.3e}", mh.psi_prime * bh * bh * mh.variance - 1.0),
    );

    let mc = moments(&s, bl)?;
    let d1 = coeffs(&mh, &mc, bh, bl).d1;
    all_ok &= check(
        "d1 anchor",
        (d1 / 14343.7278 - 1.0).abs() < 1e-6,
        format!("d1 = {d1:.4}"),
    );

    let hot = BathSpec::new(s.clone(), bh, 10_000)?;
    let cold = BathSpec::new(s.clone(), bl, 10_000)?;
    let eta0 = eta_thermo(&EngineConfig::new(hot.clone(), cold.clone(), 1e-5)?)?.eta_thermo;
    all_ok &= check(
        "carnot limit",
        (eta0 - 0.5).abs() < 1e-6,
        format!("eta(q->0) = {eta0:.9}"),
    );

    let cfg = EngineConfig::new(hot, cold, 100.0)?;
    let a = eta_thermo(&cfg)?.eta_thermo;
    let b = eta_thermo_via_relent(&cfg)?;
    all_ok &= check(
        "thermo route identity",
        (a - b).abs() < 1e-10,
        format!("|diff| = {:.2e}", (a - b).abs()),
    );

    let hot = BathSpec::new(s.clone(), 0.2, 12)?;
    let cold = BathSpec::new(s.clone(), 0.65, 12)?;
    let mut pc = ProtocolConfig::new(hot, cold, 2, Mode::Exact)?;
    let e = apply_protocol(&pc)?;
    pc.mode = Mode::Blockwise;
    let bw = apply_protocol(&pc)?;
    all_ok &= check(
        "engine equivalence",
        (e.heat_hot - bw.heat_hot).abs() < 1e-12
            && (e.work - bw.work).abs() < 1e-12
            && (e.kl_total.unwrap() - bw.kl_total.unwrap()).abs() < 1e-12,
        format!("q_hot {:.6e} vs {:.6e}", e.heat_hot, bw.heat_hot),
    );

    let resid = 0.65 * e.work - (0.65 - 0.2) * e.heat_hot + e.kl_total.unwrap();
    all_ok &= check(
        "efficiency identity",
        resid.abs() < 1e-10,
        format!("residual {resid:.2e}"),
    );

    let hot = BathSpec::new(s.clone(), 0.2, 400)?;
    let cold = BathSpec::new(s.clone(), 0.65, 400)?;
    let pc = ProtocolConfig::new(hot.clone(), cold.clone(), 3, Mode::Blockwise)?;
    let o = apply_protocol(&pc)?;
    let et = eta_thermo(&EngineConfig::new(hot, cold, o.heat_hot)?)?.eta_thermo;
    all_ok &= check(
        "order vs bound",
        o.eta.unwrap() <= et,
        format!("{:.6} <= {:.6}", o.eta.unwrap(), et),
    );

    let lat = lattice_classify(&s, 1e-9);
    let irr = lattice_classify(&SiteSpectrum::new(vec![0.0, 1.0, 2f64.sqrt()])?, 1e-9);
    all_ok &= check(
        "lattice classifier",
        lat.kind == fbe_core::LatticeKind::Lattice
            && irr.kind == fbe_core::LatticeKind::NonLattice,
        format!("{:?} / {:?}", lat.kind, irr.kind),
    );

    let hot = BathSpec::new(s.clone(), 0.2, 12)?;
    let cold = BathSpec::new(s.clone(), 0.9, 12)?;
    let pc = ProtocolConfig::new(hot, cold, 2, Mode::Exact)?;
    let o = apply_protocol(&pc)?;
    let wd = work_distribution(&pc)?;
    let lift = lift_report(&o, &wd)?;
    all_ok &= check(
        "storage conservation",
        lift.conservation_ok && lift.cap_ok,
        format!(
            "gap {:.2e}, S = {:.4} <= cap {:.2}",
            lift.conservation_gap, lift.s_storage, lift.cap
        ),
    );

    Ok(if all_ok { 0 } else { 1 })
}
