//! Symmetry projection, cutoff renormalization and bootstrap of raw
//! error-cancelled probability tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::PecRun;
use crate::table::{Basis, ProbabilityTable};

/// Renormalizing a table whose sum is this close to one leaves it untouched.
const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetrySector {
    /// Even number of flipped spins; X-basis tables of spin-flip symmetric models.
    EvenParity,
    /// `popcount = L/2`; Z-basis tables of U(1) symmetric models.
    HalfFilling,
    None,
}

impl SymmetrySector {
    pub fn contains(self, b: usize, size: usize) -> bool {
        match self {
            SymmetrySector::EvenParity => b.count_ones() % 2 == 0,
            SymmetrySector::HalfFilling => 2 * b.count_ones() as usize == size,
            SymmetrySector::None => true,
        }
    }

    fn check(self, table: &ProbabilityTable) -> Result<()> {
        match self {
            SymmetrySector::HalfFilling if table.basis != Basis::Z => {
                Err(Error::Config("half-filling sector needs a Z-basis table".into()))
            }
            SymmetrySector::HalfFilling if table.size % 2 == 1 => {
                Err(Error::Config(format!("half filling undefined for odd L={}", table.size)))
            }
            SymmetrySector::EvenParity if table.basis != Basis::X => {
                Err(Error::Config("even-parity sector needs an X-basis table".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Zero every out-of-sector entry; the result stays raw.
pub fn project_sector(table: &ProbabilityTable, sector: SymmetrySector) -> Result<ProbabilityTable> {
    sector.check(table)?;
    let w: Vec<f64> = table
        .weights
        .iter()
        .enumerate()
        .map(|(b, &p)| if sector.contains(b, table.size) { p } else { 0.0 })
        .collect();
    if w.iter().all(|&p| p == 0.0) {
        return Err(Error::Degenerate("no weight left inside the symmetry sector".into()));
    }
    let mut out = ProbabilityTable::raw(table.size, table.basis, w)?;
    out.normalized = table.normalized && out.weights == table.weights;
    Ok(out)
}

/// Zero entries below `cutoff`, then divide by the remaining sum.
pub fn cutoff_renormalize(table: &ProbabilityTable, cutoff: f64) -> Result<ProbabilityTable> {
    if !(cutoff >= 0.0) {
        return Err(Error::OutOfRange(format!("cutoff must be non-negative, got {cutoff}")));
    }
    let mut zeroed = false;
    let mut w: Vec<f64> = table
        .weights
        .iter()
        .map(|&p| {
            if p < cutoff || p < 0.0 {
                zeroed |= p != 0.0;
                0.0
            } else {
                p
            }
        })
        .collect();
    let sum: f64 = w.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate(format!("nothing survives cutoff {cutoff}")));
    }
    if zeroed || (sum - 1.0).abs() > SUM_TOL {
        w.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(ProbabilityTable { size: table.size, basis: table.basis, weights: w, normalized: true })
}

/// Largest magnitude among negative entries, 0 if none.
pub fn max_negative(table: &ProbabilityTable) -> f64 {
    table.weights.iter().filter(|&&p| p < 0.0).fold(0.0, |m, &p| f64::max(m, -p))
}

/// RMS over tables of each table's largest negative magnitude.
pub fn compute_cutoff(tables: &[ProbabilityTable]) -> f64 {
    if tables.is_empty() {
        return 0.0;
    }
    let ss: f64 = tables.iter().map(|t| max_negative(t).powi(2)).sum();
    (ss / tables.len() as f64).sqrt()
}

/// Project, pick the cutoff from the whole set, renormalize each.
pub fn process_tables(raw: &[ProbabilityTable], sector: SymmetrySector, cutoff: Option<f64>) -> Result<(Vec<ProbabilityTable>, f64)> {
    let projected = raw.iter().map(|t| project_sector(t, sector)).collect::<Result<Vec<_>>>()?;
    let cut = cutoff.unwrap_or_else(|| compute_cutoff(&projected));
    let out = projected.par_iter().map(|t| cutoff_renormalize(t, cut)).collect::<Result<Vec<_>>>()?;
    Ok((out, cut))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapEnsemble {
    pub resamples: usize,
    pub per_resample: usize,
    pub cutoff: f64,
    pub sector: SymmetrySector,
    pub datasets: Vec<ProbabilityTable>,
    /// Raw tables before projection and cutoff.
    pub raw: Vec<ProbabilityTable>,
}

/// `b` datasets of `m` instances drawn with replacement, each reconstructed,
/// projected and renormalized with one shared cutoff.
pub fn bootstrap(
    run: &PecRun,
    b: usize,
    m: usize,
    seed: u64,
    sector: SymmetrySector,
    cutoff: Option<f64>,
) -> Result<BootstrapEnsemble> {
    let n = run.instances.len();
    if n == 0 {
        return Err(Error::Degenerate("empty sample store".into()));
    }
    if m == 0 || m > n {
        return Err(Error::OutOfRange(format!("resample size {m} for {n} instances")));
    }
    if b == 0 {
        return Err(Error::OutOfRange("need at least one resample".into()));
    }
    let raw = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            run.subset(&idx).raw_table()
        })
        .collect::<Result<Vec<_>>>()?;
    let (datasets, cut) = process_tables(&raw, sector, cutoff)?;
    Ok(BootstrapEnsemble { resamples: b, per_resample: m, cutoff: cut, sector, datasets, raw })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub c: f64,
    pub sigma: f64,
    pub sigma_rand: f64,
    pub sigma_sys: f64,
}

/// Mean, sample standard deviation, RMS fit error and their quadrature sum.
pub fn aggregate(values: &[f64], fit_errors: &[f64]) -> Result<Aggregate> {
    let k = values.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("need at least 2 datasets, got {k}")));
    }
    if fit_errors.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: fit_errors.len() });
    }
    let c = values.iter().sum::<f64>() / k as f64;
    let sigma_rand = (values.iter().map(|v| (v - c).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
    let sigma_sys = (fit_errors.iter().map(|e| e * e).sum::<f64>() / k as f64).sqrt();
    Ok(Aggregate { c, sigma: sigma_rand.hypot(sigma_sys), sigma_rand, sigma_sys })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub c: f64,
    pub sigma_fit: f64,
    pub max_negative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub cutoff: f64,
    pub per_dataset: Vec<DatasetSummary>,
    pub aggregate: Aggregate,
}

impl BootstrapEnsemble {
    /// Apply a per-dataset estimator returning `(c, fit error)` and summarize.
    pub fn summarize<F>(&self, estimator: F) -> Result<EnsembleSummary>
    where
        F: Fn(&ProbabilityTable) -> Result<(f64, f64)> + Sync,
    {
        let est = self.datasets.par_iter().map(&estimator).collect::<Result<Vec<_>>>()?;
        let (cs, errs): (Vec<f64>, Vec<f64>) = est.iter().copied().unzip();
        let per_dataset = est
            .iter()
            .zip(&self.raw)
            .map(|(&(c, s), r)| DatasetSummary { c, sigma_fit: s, max_negative: max_negative(r) })
            .collect();
        Ok(EnsembleSummary { b: self.resamples, m: self.per_resample, cutoff: self.cutoff, per_dataset, aggregate: aggregate(&cs, &errs)? })
    }
}
