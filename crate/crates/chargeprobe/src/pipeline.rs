//! Config-driven runs: prepare a ground state, measure it (optionally through
//! a noisy circuit with error cancellation), post-process, fit and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cft::{self, FitResult, Geometry};
use crate::circuit::{self, Circuit, Entangler, Statevector};
use crate::entropy;
use crate::error::{Error, Result};
use crate::krylov::{self, KrylovConfig, Reference};
use crate::lattice::{self, Boundary, SpinHamiltonian};
use crate::noise::{self, NoiseModel};
use crate::postprocess::{self, Aggregate, EnsembleSummary, SymmetrySector};
use crate::table::{Basis, ProbabilityTable};
use crate::vqe::{self, Optimizer, VqeConfig};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Tfi {
        size: usize,
        #[serde(default = "one")]
        j: f64,
        #[serde(default = "one")]
        h: f64,
        boundary: Boundary,
    },
    Xxz {
        size: usize,
        delta: f64,
        boundary: Boundary,
    },
    Tricritical {
        size: usize,
        #[serde(default = "one")]
        j: f64,
        #[serde(default = "one")]
        h: f64,
        lambda: f64,
        boundary: Boundary,
    },
    Xy {
        size: usize,
        gamma: f64,
        lambda: f64,
    },
}

impl ModelSpec {
    pub fn size(&self) -> usize {
        match *self {
            ModelSpec::Tfi { size, .. }
            | ModelSpec::Xxz { size, .. }
            | ModelSpec::Tricritical { size, .. }
            | ModelSpec::Xy { size, .. } => size,
        }
    }

    pub fn boundary(&self) -> Boundary {
        match *self {
            ModelSpec::Tfi { boundary, .. } | ModelSpec::Xxz { boundary, .. } | ModelSpec::Tricritical { boundary, .. } => boundary,
            ModelSpec::Xy { .. } => Boundary::Periodic,
        }
    }

    pub fn build(&self) -> Result<SpinHamiltonian> {
        match *self {
            ModelSpec::Tfi { size, j, h, boundary } => lattice::build_tfi(size, j, h, boundary),
            ModelSpec::Xxz { size, delta, boundary } => lattice::build_xxz(size, delta, boundary),
            ModelSpec::Tricritical { size, j, h, lambda, boundary } => lattice::build_tricritical(size, j, h, lambda, boundary),
            ModelSpec::Xy { size, gamma, lambda } => lattice::build_xy_fermionic(size, gamma, lambda),
        }
    }

    /// Copy with one named coupling replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<ModelSpec> {
        let mut m = self.clone();
        let slot = match (&mut m, name) {
            (ModelSpec::Tfi { j, .. } | ModelSpec::Tricritical { j, .. }, "j") => j,
            (ModelSpec::Tfi { h, .. } | ModelSpec::Tricritical { h, .. }, "h") => h,
            (ModelSpec::Xxz { delta, .. }, "delta") => delta,
            (ModelSpec::Tricritical { lambda, .. } | ModelSpec::Xy { lambda, .. }, "lambda") => lambda,
            (ModelSpec::Xy { gamma, .. }, "gamma") => gamma,
            _ => return Err(Error::Config(format!("model has no parameter '{name}'"))),
        };
        *slot = value;
        Ok(m)
    }

    /// Sector that the ground state occupies in a measurement basis.
    pub fn sector(&self, basis: Basis) -> SymmetrySector {
        match (self, basis) {
            (ModelSpec::Tfi { .. } | ModelSpec::Tricritical { .. } | ModelSpec::Xxz { .. }, Basis::X) => SymmetrySector::EvenParity,
            (ModelSpec::Xxz { .. }, Basis::Z) => SymmetrySector::HalfFilling,
            _ => SymmetrySector::None,
        }
    }

    /// Moment at which the RDM coefficient jumps from `c` to `c n/(n-1)`.
    pub fn transition(&self, basis: Basis) -> Result<f64> {
        match *self {
            ModelSpec::Xxz { delta, .. } => cft::xxz_transition(delta, basis),
            _ => Ok(cft::ISING_TRANSITION),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum Preparation {
    #[default]
    Ed,
    Vqe {
        layers: usize,
        #[serde(default = "default_restarts")]
        restarts: usize,
        #[serde(default = "default_max_evals")]
        max_evals: usize,
        #[serde(default)]
        simplex: bool,
    },
    /// Free-fermion circuit, XY model only.
    Direct,
    Krylov {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default)]
        dt: Option<f64>,
        #[serde(default = "default_eps")]
        eps_s: f64,
    },
    /// A circuit file in the text format written by `prepare`.
    Circuit { path: PathBuf },
}

fn default_restarts() -> usize {
    10
}
fn default_max_evals() -> usize {
    20000
}
fn default_order() -> usize {
    30
}
fn default_eps() -> f64 {
    1e-10
}
fn default_samples() -> usize {
    10_000
}
fn default_shots() -> u32 {
    200
}
fn default_resamples() -> usize {
    20
}
fn default_per_resample() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub bases: Vec<Basis>,
    pub moments: Vec<f64>,
    /// Subsystem lengths used in fits; even lengths `2..L-2` when absent.
    #[serde(default)]
    pub points: Option<Vec<usize>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_shots")]
    pub shots: u32,
}

/// Either a channel file or a synthetic model with a given per-qubit overhead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub gamma_per_qubit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_per_resample")]
    pub per_resample: usize,
    #[serde(default)]
    pub cutoff: Option<f64>,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec { resamples: default_resamples(), per_resample: default_per_resample(), cutoff: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub model: ModelSpec,
    #[serde(default)]
    pub preparation: Preparation,
    pub measurement: MeasurementSpec,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapSpec,
    /// Compare against exact diagonalization when the chain is small enough.
    #[serde(default = "default_true")]
    pub compare_ed: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

const ED_COMPARE_MAX: usize = 16;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file; relative paths inside it are taken from its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(NoiseSpec { file: Some(f), .. }) = &mut cfg.noise {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        if let Preparation::Circuit { path } = &mut cfg.preparation {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.model.size();
        let bad = |m: String| Err(Error::Config(m));
        if self.measurement.bases.is_empty() {
            return bad("no measurement bases".into());
        }
        if self.measurement.moments.is_empty() || self.measurement.moments.iter().any(|&n| !(n > 0.0)) {
            return bad("moments must be a non-empty list of positive numbers".into());
        }
        for &b in &self.measurement.bases {
            let n_t = self.model.transition(b).map_err(|e| Error::Config(e.to_string()))?;
            for &n in &self.measurement.moments {
                cft::cn_theory(1.0, n, n_t).map_err(|e| Error::Config(format!("basis {b}, n = {n}: {e}")))?;
            }
            if self.model.sector(b) == SymmetrySector::HalfFilling && l % 2 == 1 {
                return bad(format!("half filling needs even L, got {l}"));
            }
        }
        if let Some(p) = &self.measurement.points {
            if p.len() < 3 || p.iter().any(|&x| x == 0 || x >= l) {
                return bad(format!("fit points must be at least three lengths in 1..{l}"));
            }
        }
        if matches!(self.preparation, Preparation::Direct) && !matches!(self.model, ModelSpec::Xy { .. }) {
            return bad("direct preparation exists only for the XY model".into());
        }
        if let Some(n) = &self.noise {
            if n.file.is_some() == n.gamma_per_qubit.is_some() {
                return bad("noise needs exactly one of 'file' or 'gamma_per_qubit'".into());
            }
            let m = &self.measurement;
            if m.samples < 2 || m.shots == 0 {
                return bad("noisy runs need at least 2 samples and 1 shot".into());
            }
            let b = &self.bootstrap;
            if b.resamples < 2 || b.per_resample == 0 || b.per_resample > m.samples {
                return bad(format!("bootstrap {}x{} incompatible with {} samples", b.resamples, b.per_resample, m.samples));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&canon))
    }

    pub fn points(&self) -> Vec<usize> {
        self.measurement.points.clone().unwrap_or_else(|| cft::even_points(self.model.size()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Prepared state, with the circuit that produces it from `|0...0>` when there is one.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub state: Statevector,
    pub circuit: Option<Circuit>,
    pub energy: f64,
    pub report: PrepReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrepReport {
    pub method: String,
    pub energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ed_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_qubit_count: Option<usize>,
}

fn ed_reference(h: &SpinHamiltonian, cfg: &PipelineConfig) -> Result<Option<(f64, Statevector)>> {
    if !cfg.compare_ed || h.size > ED_COMPARE_MAX {
        return Ok(None);
    }
    let g = lattice::ground_state(h)?;
    Ok(Some((g.energy, Statevector { size: h.size, amps: g.state })))
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let h = cfg.model.build().map_err(|e| e.at("model"))?;
    let l = h.size;
    let (state, circuit, method) = match &cfg.preparation {
        Preparation::Ed => {
            let g = lattice::ground_state(&h)?;
            (Statevector { size: l, amps: g.state }, None, "ed")
        }
        Preparation::Vqe { layers, restarts, max_evals, simplex } => {
            let vc = VqeConfig {
                layers: *layers,
                optimizer: if *simplex { Optimizer::Simplex } else { Optimizer::GradientQuasiNewton },
                max_evals: *max_evals,
                restarts: *restarts,
                seed: cfg.seed,
                ..VqeConfig::default()
            };
            let r = vqe::optimize(&h, &vc)?;
            let c = circuit::build_checkerboard(l, *layers, &r.theta, h.boundary)?;
            (circuit::run(&c, &Statevector::zero(l))?, Some(c), "vqe")
        }
        Preparation::Direct => {
            let ModelSpec::Xy { gamma, lambda, .. } = cfg.model else { unreachable!("validated") };
            let c = circuit::build_direct_prep(l, gamma, lambda)?;
            (circuit::run(&c, &Statevector::zero(l))?, Some(c), "direct")
        }
        Preparation::Krylov { order, dt, eps_s } => {
            let kc = KrylovConfig { reference: Reference::Plus, dt: *dt, order: *order, eps_s: *eps_s };
            let (res, basis) = krylov::krylov_ground_state(&h, &kc)?;
            (res.ground_state(&basis), None, "krylov")
        }
        Preparation::Circuit { path } => {
            let c = Circuit::from_text(&fs::read_to_string(path)?)?;
            if c.size != l {
                return Err(Error::Config(format!("circuit has {} qubits, model has {l}", c.size)));
            }
            (circuit::run(&c, &Statevector::zero(l))?, Some(c), "circuit")
        }
    };
    let energy = lattice::expectation(&h, &state.amps)?;
    let reference = if method == "ed" { None } else { ed_reference(&h, cfg)? };
    let fidelity = reference.as_ref().map(|(_, s)| circuit::fidelity(&state, s)).transpose()?;
    let report = PrepReport {
        method: method.into(),
        energy,
        ed_energy: reference.as_ref().map(|r| r.0),
        fidelity,
        gate_count: circuit.as_ref().map(Circuit::gate_count),
        two_qubit_count: circuit.as_ref().map(Circuit::two_qubit_count),
    };
    Ok(Prepared { state, circuit, energy, report })
}

/// Noise model for a prepared circuit.
pub fn load_noise(spec: &NoiseSpec, circuit: &Circuit, seed: u64) -> Result<NoiseModel> {
    let m = match (&spec.file, spec.gamma_per_qubit) {
        (Some(f), _) => NoiseModel::from_text(&fs::read_to_string(f)?)?,
        (None, Some(g)) => NoiseModel::synthetic(circuit, g, seed)?,
        (None, None) => return Err(Error::Config("empty noise spec".into())),
    };
    m.validate(circuit.size)?;
    Ok(m)
}

/// RDM values `I_n(l)` at the given lengths.
pub fn rdm_values(table: &ProbabilityTable, n: f64, points: &[usize]) -> Result<Vec<(usize, f64)>> {
    points.iter().map(|&l| Ok((l, entropy::rdm(table, l, n)?))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSummary {
    pub n: f64,
    pub c: f64,
    pub sigma: f64,
    pub c_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_rand: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sys: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisSummary {
    pub basis: Basis,
    pub sector: SymmetrySector,
    pub transition: f64,
    pub moments: Vec<MomentSummary>,
    /// Moment with the smallest uncertainty.
    pub best: MomentSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// Overlap of `Σ √p |z>` with the exact ground state (Z basis only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub preparation: PrepReport,
    pub bases: Vec<BasisSummary>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: Summary,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seed: u64,
    created_unix: u64,
    files: Vec<(String, String)>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push((name.to_string(), hex(&Sha256::digest(bytes))));
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    f(&mut v)?;
    Ok(v)
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn best(moments: &[MomentSummary]) -> MomentSummary {
    moments.iter().min_by(|a, b| a.sigma.total_cmp(&b.sigma)).cloned().expect("at least one moment")
}

fn fit_table(table: &ProbabilityTable, cfg: &PipelineConfig, basis: Basis, n: f64) -> Result<FitResult> {
    let geom = Geometry::from(cfg.model.boundary());
    let vals = rdm_values(table, n, &cfg.points())?;
    cft::fit_rdm(&vals, cfg.model.size(), n, geom, cfg.model.transition(basis)?)
}

fn eta_of(table: &ProbabilityTable, cfg: &PipelineConfig) -> Option<f64> {
    if table.basis != Basis::Z || cfg.model.boundary() != Boundary::Periodic || !matches!(cfg.model, ModelSpec::Tfi { .. }) {
        return None;
    }
    let l = cfg.model.size();
    let vals: Vec<(usize, f64)> = (1..=l / 2).filter_map(|r| Some((r, entropy::connected_correlator(table, r).ok()?.abs()))).collect();
    cft::fit_power_law(&vals, l, Geometry::Periodic).ok().map(|f| f.eta)
}

/// Run the whole pipeline and write its artifacts into a fresh directory
/// `<output>/<unix time>-<hash prefix>`.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let dir = cfg.output.join(format!("{created}-{}", &hash[..12]));
    fs::create_dir_all(&dir)?;
    let mut w = Writer { dir: dir.clone(), files: Vec::new() };
    w.put("config.json", &json_bytes(cfg))?;

    let prep = prepare(cfg).map_err(|e| e.at("prepare"))?;
    if let Some(c) = &prep.circuit {
        w.put("circuit.txt", c.to_text().as_bytes())?;
    }
    let h = cfg.model.build()?;
    let reference = ed_reference(&h, cfg).map_err(|e| e.at("prepare"))?;

    let mut bases = Vec::new();
    for (bi, &basis) in cfg.measurement.bases.iter().enumerate() {
        let s = measure_basis_stage(cfg, &prep, basis, bi as u64, reference.as_ref().map(|r| &r.1), &mut w)?;
        bases.push(s);
    }
    let summary = Summary { config_hash: hash.clone(), seed: cfg.seed, model: cfg.model.clone(), preparation: prep.report, bases };
    w.put("summary.json", &json_bytes(&summary))?;
    let manifest = Manifest { config_hash: &hash, seed: cfg.seed, created_unix: created, files: std::mem::take(&mut w.files) };
    fs::write(dir.join("manifest.json"), json_bytes(&manifest))?;
    Ok(RunOutput { dir, summary })
}

fn measure_basis_stage(
    cfg: &PipelineConfig,
    prep: &Prepared,
    basis: Basis,
    stream: u64,
    reference: Option<&Statevector>,
    w: &mut Writer,
) -> Result<BasisSummary> {
    let sector = cfg.model.sector(basis);
    let transition = cfg.model.transition(basis)?;
    let (table, moments, gamma, cutoff) = match &cfg.noise {
        None => {
            let t = circuit::measure_basis(&prep.state, basis);
            let moments = cfg
                .measurement
                .moments
                .iter()
                .map(|&n| {
                    let f = fit_table(&t, cfg, basis, n)?;
                    Ok(MomentSummary { n, c: f.c, sigma: f.sigma_fit, c_n: f.c_n, sigma_rand: None, sigma_sys: None })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at("fit"))?;
            (t, moments, None, None)
        }
        Some(spec) => {
            let c = prep.circuit.clone().unwrap_or_else(|| Circuit::new(cfg.model.size()));
            let (input, c) = if prep.circuit.is_some() { (Statevector::zero(c.size), c) } else { (prep.state.clone(), c) };
            let model = load_noise(spec, &c, cfg.seed).map_err(|e| e.at("noise"))?;
            let m = &cfg.measurement;
            let run = noise::pec_run(&c, &model, &input, basis, m.samples, m.shots, cfg.seed.wrapping_add(stream))
                .map_err(|e| e.at("measure"))?;
            w.put(&format!("raw_{basis}.csv"), &csv_bytes(|v| run.raw_table()?.write_csv(v))?)?;
            let b = &cfg.bootstrap;
            let ens = postprocess::bootstrap(&run, b.resamples, b.per_resample, cfg.seed.wrapping_add(stream), sector, b.cutoff)
                .map_err(|e| e.at("mitigate"))?;
            let full = postprocess::project_sector(&run.raw_table()?, sector)
                .and_then(|t| postprocess::cutoff_renormalize(&t, ens.cutoff))
                .map_err(|e| e.at("mitigate"))?;
            let mut moments = Vec::new();
            let mut ensembles = Vec::new();
            for &n in &m.moments {
                let s: EnsembleSummary = ens
                    .summarize(|t| fit_table(t, cfg, basis, n).map(|f| (f.c, f.sigma_fit)))
                    .map_err(|e| e.at("fit"))?;
                let conv = cft::cn_theory(1.0, n, transition)?.c_n;
                let Aggregate { c, sigma, sigma_rand, sigma_sys } = s.aggregate;
                moments.push(MomentSummary { n, c, sigma, c_n: c * conv, sigma_rand: Some(sigma_rand), sigma_sys: Some(sigma_sys) });
                ensembles.push(s);
            }
            w.put(&format!("bootstrap_{basis}.json"), &json_bytes(&ensembles))?;
            (full, moments, Some(run.gamma), Some(ens.cutoff))
        }
    };
    w.put(&format!("table_{basis}.csv"), &csv_bytes(|v| table.write_csv(v))?)?;
    let mut grid = Vec::new();
    for &n in &cfg.measurement.moments {
        for l in 1..cfg.model.size() {
            grid.push((basis, n, l, entropy::rdm(&table, l, n).map_err(|e| e.at("entropy"))?));
        }
    }
    w.put(&format!("entropy_{basis}.csv"), &csv_bytes(|v| entropy::write_grid_csv(&grid, v))?)?;
    let fits = cfg
        .measurement
        .moments
        .iter()
        .map(|&n| fit_table(&table, cfg, basis, n))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("fit"))?;
    w.put(&format!("fits_{basis}.json"), &json_bytes(&fits))?;
    let reconstruction_fidelity = match (basis, reference) {
        (Basis::Z, Some(r)) => Some(circuit::fidelity(&entropy::reconstruct_stoquastic(&table)?, r)?),
        _ => None,
    };
    Ok(BasisSummary {
        basis,
        sector,
        transition,
        best: best(&moments),
        moments,
        gamma,
        cutoff,
        reconstruction_fidelity,
        eta: eta_of(&table, cfg),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObservable {
    /// `m = sqrt(<(Σ Z_i / L)²>)`.
    OrderParameterDerivative,
    /// Full-chain `Sh_2` in the chosen basis.
    ShannonRenyiN2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelSpec,
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub observable: SweepObservable,
    #[serde(default = "default_basis")]
    pub basis: Basis,
}

fn default_basis() -> Basis {
    Basis::Z
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub value: f64,
    pub derivative: f64,
}

/// `sqrt(<(Σ Z_i / L)²>)` from Z-basis weights.
pub fn order_parameter(table: &ProbabilityTable) -> f64 {
    let l = table.size as f64;
    table
        .weights
        .iter()
        .enumerate()
        .map(|(b, p)| {
            let m = (l - 2.0 * b.count_ones() as f64) / l;
            p * m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Central differences inside, one-sided at the ends.
pub fn finite_differences(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::Config(format!("need at least 3 grid points for a derivative, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (y[b] - y[a]) / (x[b] - x[a])
        })
        .collect())
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if cfg.points < 3 {
        return Err(Error::Config(format!("need at least 3 grid points for a derivative, got {}", cfg.points)));
    }
    let grid: Vec<f64> = (0..cfg.points)
        .map(|i| cfg.start + (cfg.stop - cfg.start) * i as f64 / (cfg.points - 1) as f64)
        .collect();
    let values = grid
        .iter()
        .map(|&p| {
            let h = cfg.model.with_parameter(&cfg.parameter, p)?.build()?;
            let g = lattice::ground_state(&h)?;
            let psi = Statevector { size: h.size, amps: g.state };
            Ok(match cfg.observable {
                SweepObservable::OrderParameterDerivative => order_parameter(&circuit::measure_basis(&psi, Basis::Z)),
                SweepObservable::ShannonRenyiN2 => entropy::shannon_renyi(&circuit::measure_basis(&psi, cfg.basis), 2.0)?,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let d = finite_differences(&grid, &values)?;
    Ok(grid.iter().zip(&values).zip(&d).map(|((&p, &v), &dv)| SweepPoint { parameter: p, value: v, derivative: dv }).collect())
}

pub fn write_sweep_csv<W: std::io::Write>(points: &[SweepPoint], mut w: W) -> Result<()> {
    writeln!(w, "parameter,value,derivative")?;
    for p in points {
        writeln!(w, "{:.10},{:.17e},{:.17e}", p.parameter, p.value, p.derivative)?;
    }
    Ok(())
}

/// Entanglement set in a checkerboard with trainable phases.
pub fn checkerboard_circuit(l: usize, d: usize, theta: &[f64], phis: &[f64], boundary: Boundary) -> Result<Circuit> {
    if phis.is_empty() {
        circuit::build_checkerboard(l, d, theta, boundary)
    } else {
        circuit::build_checkerboard_with(l, d, theta, boundary, &Entangler::Cp(phis.to_vec()))
    }
}
