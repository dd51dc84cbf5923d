//! Finite-size scaling fits that turn entropy and probability data into
//! central-charge estimates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Boundary;
use crate::table::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Open,
    Periodic,
    Infinite,
}

impl From<Boundary> for Geometry {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Open => Geometry::Open,
            Boundary::Periodic => Geometry::Periodic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    Rdm,
    EntanglementEntropy,
    FormationProbability,
    PowerLawCorrelator,
}

/// Conformal length of a block of `l` sites in a chain of `big` sites.
pub fn chord(big: usize, l: usize, geometry: Geometry) -> Result<f64> {
    if l == 0 || l >= big {
        return Err(Error::OutOfRange(format!("subsystem length {l} outside (0, {big})")));
    }
    let (lf, bf) = (l as f64, big as f64);
    Ok(match geometry {
        Geometry::Periodic => bf / PI * (PI * lf / bf).sin(),
        Geometry::Open => 2.0 * bf / PI * (PI * lf / bf).sin(),
        Geometry::Infinite => lf,
    })
}

/// Coefficient multiplying `c` (entanglement) or `c_n` (RDM) in front of the
/// log of the chord length.
pub fn prefactor(kind: ScalingKind, geometry: Geometry, n: f64) -> f64 {
    let half = if geometry == Geometry::Open { 0.5 } else { 1.0 };
    match kind {
        ScalingKind::Rdm => 0.25 * half,
        ScalingKind::EntanglementEntropy => (n + 1.0) / n / 6.0 * half,
        ScalingKind::FormationProbability => -0.125,
        ScalingKind::PowerLawCorrelator => -1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ScalingKind,
    pub geometry: Geometry,
    pub n: f64,
    /// Central charge after any `c_n -> c` conversion.
    pub c: f64,
    /// Raw log coefficient divided by its prefactor.
    pub c_n: f64,
    pub sigma_fit: f64,
    pub intercept: f64,
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub points: Vec<usize>,
}

struct Lsq {
    coef: Vec<f64>,
    cov: DMatrix<f64>,
    rms: f64,
}

/// Ordinary or inverse-variance weighted least squares.
fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>, variances: Option<&[f64]>) -> Result<Lsq> {
    let (m, p) = design.shape();
    let w: Vec<f64> = match variances {
        Some(v) => {
            if v.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: v.len() });
            }
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Fit("variances must be positive".into()));
            }
            v.iter().map(|x| 1.0 / x).collect()
        }
        None => vec![1.0; m],
    };
    let sw = DMatrix::from_fn(m, p, |i, j| design[(i, j)] * w[i].sqrt());
    let sy = DVector::from_fn(m, |i, _| y[i] * w[i].sqrt());
    let svd = sw.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::Fit("design matrix is rank deficient".into()));
    }
    let coef = svd.solve(&sy, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    let resid = &sy - &sw * &coef;
    let ata_inv = (sw.transpose() * &sw)
        .try_inverse()
        .ok_or_else(|| Error::Fit("normal matrix is singular".into()))?;
    let cov = match variances {
        Some(_) => ata_inv,
        None => {
            let dof = m.saturating_sub(p);
            let s2 = if dof > 0 { resid.norm_squared() / dof as f64 } else { 0.0 };
            ata_inv * s2
        }
    };
    let raw_resid = y - design * &coef;
    Ok(Lsq { coef: coef.iter().copied().collect(), cov, rms: (raw_resid.norm_squared() / m as f64).sqrt() })
}

fn cov_rows(c: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect()
}

fn log_fit(
    values: &[(usize, f64)],
    variances: Option<&[f64]>,
    big: usize,
    geometry: Geometry,
) -> Result<(Lsq, Vec<usize>)> {
    if values.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", values.len())));
    }
    let mut x = Vec::with_capacity(values.len());
    for &(l, _) in values {
        x.push(chord(big, l, geometry)?.ln());
    }
    let a = DMatrix::from_fn(values.len(), 2, |i, j| if j == 0 { x[i] } else { 1.0 });
    let y = DVector::from_iterator(values.len(), values.iter().map(|v| v.1));
    let fit = least_squares(&a, &y, variances)?;
    Ok((fit, values.iter().map(|v| v.0).collect()))
}

/// Even subsystem lengths `2, 4, ..., L-2`.
pub fn even_points(big: usize) -> Vec<usize> {
    (2..big.saturating_sub(1)).step_by(2).collect()
}

/// Fit `I_n = (c_n k) ln chord + γ_n` with `k` the RDM prefactor for the
/// geometry. `c = c_n (n-1)/n` above the transition moment `n_t`.
pub fn fit_rdm(values: &[(usize, f64)], big: usize, n: f64, geometry: Geometry, n_t: f64) -> Result<FitResult> {
    fit_rdm_inner(values, None, big, n, geometry, n_t)
}

/// As [`fit_rdm`], with per-point variances as inverse weights.
pub fn fit_rdm_weighted(
    values: &[(usize, f64)],
    variances: &[f64],
    big: usize,
    n: f64,
    geometry: Geometry,
    n_t: f64,
) -> Result<FitResult> {
    fit_rdm_inner(values, Some(variances), big, n, geometry, n_t)
}

fn fit_rdm_inner(
    values: &[(usize, f64)],
    variances: Option<&[f64]>,
    big: usize,
    n: f64,
    geometry: Geometry,
    n_t: f64,
) -> Result<FitResult> {
    let conv = cn_theory(1.0, n, n_t)?.c_n.recip();
    let (fit, points) = log_fit(values, variances, big, geometry)?;
    let k = prefactor(ScalingKind::Rdm, geometry, n);
    let c_n = fit.coef[0] / k;
    let sigma_n = fit.cov[(0, 0)].max(0.0).sqrt() / k;
    Ok(FitResult {
        model: ScalingKind::Rdm,
        geometry,
        n,
        c: c_n * conv,
        c_n,
        sigma_fit: sigma_n * conv,
        intercept: fit.coef[1],
        covariance: cov_rows(&fit.cov),
        residual_rms: fit.rms,
        points,
    })
}

/// Fit `S_n = c (n+1)/(6n) ln chord + const` (half the slope for open chains).
pub fn fit_entanglement(values: &[(usize, f64)], big: usize, n: f64, geometry: Geometry) -> Result<FitResult> {
    if n <= 0.0 {
        return Err(Error::OutOfRange(format!("Rényi index must be positive, got {n}")));
    }
    let (fit, points) = log_fit(values, None, big, geometry)?;
    let k = prefactor(ScalingKind::EntanglementEntropy, geometry, n);
    let c = fit.coef[0] / k;
    Ok(FitResult {
        model: ScalingKind::EntanglementEntropy,
        geometry,
        n,
        c,
        c_n: c,
        sigma_fit: fit.cov[(0, 0)].max(0.0).sqrt() / k,
        intercept: fit.coef[1],
        covariance: cov_rows(&fit.cov),
        residual_rms: fit.rms,
        points,
    })
}

/// Three-parameter fit `ln p = -a l - (c/8) ln chord + a0`.
pub fn fit_formation_probability(values: &[(usize, f64)], big: usize, geometry: Geometry) -> Result<FitResult> {
    if values.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", values.len())));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &(l, _) in values {
        rows.push((l as f64, chord(big, l, geometry)?.ln()));
    }
    let a = DMatrix::from_fn(values.len(), 3, |i, j| match j {
        0 => rows[i].0,
        1 => rows[i].1,
        _ => 1.0,
    });
    let y = DVector::from_iterator(values.len(), values.iter().map(|v| v.1));
    let fit = least_squares(&a, &y, None)?;
    let k = prefactor(ScalingKind::FormationProbability, geometry, 1.0);
    let c = fit.coef[1] / k;
    Ok(FitResult {
        model: ScalingKind::FormationProbability,
        geometry,
        n: 1.0,
        c,
        c_n: c,
        sigma_fit: fit.cov[(1, 1)].max(0.0).sqrt() / k.abs(),
        intercept: fit.coef[2],
        covariance: cov_rows(&fit.cov),
        residual_rms: fit.rms,
        points: values.iter().map(|v| v.0).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub eta: f64,
    pub sigma: f64,
    pub points: Vec<usize>,
    /// Distances dropped because the correlator was not positive.
    pub excluded: Vec<usize>,
}

/// Slope of `ln C(r)` against the log distance; chord distance on rings.
pub fn fit_power_law(values: &[(usize, f64)], big: usize, geometry: Geometry) -> Result<PowerLawFit> {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for &(r, v) in values {
        if r == 0 {
            return Err(Error::OutOfRange("distance must be at least 1".into()));
        }
        if v > 0.0 {
            kept.push((r, v));
        } else {
            excluded.push(r);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 positive points, got {}", kept.len())));
    }
    let mut x = Vec::with_capacity(kept.len());
    for &(r, _) in &kept {
        x.push(match geometry {
            Geometry::Periodic => chord(big, r, geometry)?.ln(),
            _ => (r as f64).ln(),
        });
    }
    let a = DMatrix::from_fn(kept.len(), 2, |i, j| if j == 0 { x[i] } else { 1.0 });
    let y = DVector::from_iterator(kept.len(), kept.iter().map(|v| v.1.ln()));
    let fit = least_squares(&a, &y, None)?;
    Ok(PowerLawFit {
        eta: -fit.coef[0],
        sigma: fit.cov[(0, 0)].max(0.0).sqrt(),
        points: kept.iter().map(|v| v.0).collect(),
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CnTheory {
    pub c_n: f64,
    pub above_transition: bool,
}

/// `c_n = c` below `n_t`, `c n/(n-1)` above it.
pub fn cn_theory(c: f64, n: f64, n_t: f64) -> Result<CnTheory> {
    if (n - n_t).abs() < 1e-9 {
        return Err(Error::OutOfRange(format!("n = {n} sits on the discontinuity")));
    }
    if n > n_t {
        if (n - 1.0).abs() < 1e-12 {
            return Err(Error::OutOfRange("c n/(n-1) is singular at n = 1".into()));
        }
        Ok(CnTheory { c_n: c * n / (n - 1.0), above_transition: true })
    } else {
        Ok(CnTheory { c_n: c, above_transition: false })
    }
}

/// Transition moment of the XXZ chain: `2π/arccos Δ` in Z, `(2/π) arccos Δ` in X.
pub fn xxz_transition(delta: f64, basis: Basis) -> Result<f64> {
    if !(delta > -1.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("anisotropy {delta} outside (-1, 1)")));
    }
    let a = delta.acos();
    Ok(match basis {
        Basis::Z => 2.0 * PI / a,
        Basis::X => 2.0 * a / PI,
    })
}

/// Transition moment used for Z2-symmetric chains.
pub const ISING_TRANSITION: f64 = 1.0;
