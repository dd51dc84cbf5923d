use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chargeprobe::cft::{self, Geometry};
use chargeprobe::circuit::{self, Circuit, Statevector};
use chargeprobe::krylov::{self, KrylovConfig};
use chargeprobe::lattice;
use chargeprobe::noise::{self, NoiseModel, PecRun};
use chargeprobe::pipeline::{self, PipelineConfig, SweepConfig};
use chargeprobe::postprocess::{self, SymmetrySector};
use chargeprobe::table::{Basis, ProbabilityTable};
use chargeprobe::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chargeprobe", version, about = "Central-charge extraction from critical spin-chain ground states")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SectorArg {
    EvenParity,
    HalfFilling,
    None,
}

impl From<SectorArg> for SymmetrySector {
    fn from(s: SectorArg) -> Self {
        match s {
            SectorArg::EvenParity => SymmetrySector::EvenParity,
            SectorArg::HalfFilling => SymmetrySector::HalfFilling,
            SectorArg::None => SymmetrySector::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Open,
    Periodic,
    Infinite,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Self {
        match g {
            GeometryArg::Open => Geometry::Open,
            GeometryArg::Periodic => Geometry::Periodic,
            GeometryArg::Infinite => Geometry::Infinite,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Prepare the ground state named in a run config; writes prepare.json and circuit.txt.
    Prepare {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Measure a circuit from |0...0>: exact table, sampled counts, or an error-cancelled run.
    Measure {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value = "Z")]
        basis: Basis,
        /// Noise model file (JSON or TOML); enables error cancellation.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Shots per sample; without a noise model, sample this many counts instead of exact weights.
        #[arg(long)]
        shots: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Bootstrap, project and renormalize an error-cancelled run.
    Mitigate {
        /// JSON written by `measure --noise`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        sector: SectorArg,
        #[arg(long, default_value_t = 20)]
        resamples: usize,
        #[arg(long, default_value_t = 1000)]
        per_resample: usize,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit RDM scaling of a probability table; prints JSON.
    Fit {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        moments: Vec<f64>,
        #[arg(long, value_enum, default_value = "periodic")]
        geometry: GeometryArg,
        /// Moment where `c_n` switches to `c n/(n-1)`.
        #[arg(long, default_value_t = 1.0)]
        transition: f64,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<usize>>,
    },
    /// Full pipeline from a run config.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Ground-state observable over a parameter grid; writes CSV.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Krylov diagonalization of the model in a run config; writes the convergence CSV.
    Krylov {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 30)]
        order: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        eps_s: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn exec(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Prepare { config, out } => {
            let cfg = PipelineConfig::from_file(&config)?;
            let p = pipeline::prepare(&cfg)?;
            fs::create_dir_all(&out)?;
            write(&out.join("prepare.json"), json(&p.report))?;
            if let Some(c) = &p.circuit {
                write(&out.join("circuit.txt"), c.to_text())?;
            }
            let mut t = Vec::new();
            circuit::measure_basis(&p.state, Basis::Z).write_csv(&mut t)?;
            write(&out.join("table_Z.csv"), t)?;
            println!("energy {:.12}", p.energy);
        }
        Cmd::Measure { circuit: path, basis, noise: noise_path, samples, shots, seed, out } => {
            let c = Circuit::from_text(&read(&path)?)?;
            let input = Statevector::zero(c.size);
            match noise_path {
                Some(np) => {
                    let model = NoiseModel::from_text(&read(&np)?)?;
                    let run = noise::pec_run(&c, &model, &input, basis, samples, shots.unwrap_or(200), seed)?;
                    write(&out, serde_json::to_vec(&run).expect("serializable"))?;
                    let mut t = Vec::new();
                    run.raw_table()?.write_csv(&mut t)?;
                    write(&out.with_extension("raw.csv"), t)?;
                    println!("gamma {:.6} samples {}", run.gamma, run.instances.len());
                }
                None => {
                    let table = circuit::measure_basis(&circuit::run(&c, &input)?, basis);
                    let mut buf = Vec::new();
                    match shots {
                        Some(s) => circuit::sample_counts(&table, s as u64, seed)?.write_csv(&mut buf)?,
                        None => table.write_csv(&mut buf)?,
                    }
                    write(&out, buf)?;
                }
            }
        }
        Cmd::Mitigate { run, sector, resamples, per_resample, cutoff, seed, out } => {
            let r: PecRun = serde_json::from_str(&read(&run)?).map_err(|e| Error::Parse(e.to_string()))?;
            let ens = postprocess::bootstrap(&r, resamples, per_resample, seed, sector.into(), cutoff)?;
            fs::create_dir_all(&out)?;
            for (k, t) in ens.datasets.iter().enumerate() {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                write(&out.join(format!("dataset_{k:03}.csv")), buf)?;
            }
            let full = postprocess::cutoff_renormalize(&postprocess::project_sector(&r.raw_table()?, sector.into())?, ens.cutoff)?;
            let mut buf = Vec::new();
            full.write_csv(&mut buf)?;
            write(&out.join("mitigated.csv"), buf)?;
            println!("cutoff {:.6e}", ens.cutoff);
        }
        Cmd::Fit { table, moments, geometry, transition, points } => {
            let t = ProbabilityTable::read_csv(&read(&table)?)?;
            let pts = points.unwrap_or_else(|| cft::even_points(t.size));
            let fits = moments
                .iter()
                .map(|&n| cft::fit_rdm(&pipeline::rdm_values(&t, n, &pts)?, t.size, n, geometry.into(), transition))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", json(&fits));
        }
        Cmd::Run { config } => {
            let cfg = PipelineConfig::from_file(&config)?;
            let out = pipeline::run(&cfg)?;
            for b in &out.summary.bases {
                for m in &b.moments {
                    println!("{} n={} c={:.4} ± {:.4}", b.basis, m.n, m.c, m.sigma);
                }
            }
            println!("{}", out.dir.display());
        }
        Cmd::Sweep { config, out } => {
            let cfg: SweepConfig = toml::from_str(&read(&config)?).map_err(|e| Error::Parse(e.to_string()))?;
            let pts = pipeline::sweep(&cfg)?;
            let mut buf = Vec::new();
            pipeline::write_sweep_csv(&pts, &mut buf)?;
            write(&out, buf)?;
        }
        Cmd::Krylov { config, order, dt, eps_s, out } => {
            let cfg = PipelineConfig::from_file(&config)?;
            let h = cfg.model.build()?;
            let kc = KrylovConfig { dt, order, eps_s, ..KrylovConfig::default() };
            let (res, _) = krylov::krylov_ground_state(&h, &kc)?;
            let exact = if h.size <= 16 { Some(lattice::ground_state(&h)?.energy) } else { None };
            let mut buf = Vec::new();
            res.write_csv(exact, &mut buf)?;
            write(&out, buf)?;
            println!("energy {:.12} retained {}", res.energy, res.retained);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
