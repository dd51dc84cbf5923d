//! Ground-state estimation in the span of time-evolved copies of a
//! reference state.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::Statevector;
use crate::error::{Error, Result};
use crate::lattice::{dot, PauliOperator, SpinHamiltonian};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    Plus,
    Zero,
    State(Statevector),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovConfig {
    pub reference: Reference,
    /// `None` picks `π / (2 Σ|coef|)`.
    pub dt: Option<f64>,
    pub order: usize,
    pub eps_s: f64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig { reference: Reference::Plus, dt: None, order: 30, eps_s: 1e-10 }
    }
}

/// `Σ |coef|`, an upper bound on the spectral radius.
pub fn norm_bound(h: &SpinHamiltonian) -> f64 {
    h.terms.iter().map(|(c, _)| c.abs()).sum()
}

impl KrylovConfig {
    pub fn time_step(&self, h: &SpinHamiltonian) -> f64 {
        self.dt.unwrap_or_else(|| std::f64::consts::PI / (2.0 * norm_bound(h)))
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("Krylov order must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("time step must be positive, got {dt}")));
            }
        }
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return Err(Error::Config(format!("ε_S must lie in (0, 1), got {}", self.eps_s)));
        }
        Ok(())
    }

    fn reference_state(&self, size: usize) -> Result<Statevector> {
        let s = match &self.reference {
            Reference::Plus => Statevector::plus(size),
            Reference::Zero => Statevector::zero(size),
            Reference::State(s) => s.clone(),
        };
        if s.size != size {
            return Err(Error::DimensionMismatch { expected: 1 << size, got: s.amps.len() });
        }
        if (s.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Config(format!("reference state has norm {}", s.norm())));
        }
        Ok(s)
    }
}

/// `J_k(x)` for `k = 0..=kmax` from the power series; fine for `|x| ≲ 4`.
fn bessel_j(kmax: usize, x: f64) -> Vec<f64> {
    let h = x / 2.0;
    let mut lead = 1.0;
    (0..=kmax)
        .map(|k| {
            if k > 0 {
                lead *= h / k as f64;
            }
            let (mut term, mut sum) = (lead, lead);
            for m in 1..60 {
                term *= -h * h / (m as f64 * (m + k) as f64);
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            sum
        })
        .collect()
}

/// Chebyshev propagator for `exp(-i H t)`.
pub struct Propagator {
    op: PauliOperator,
    bound: f64,
    steps: usize,
    coefs: Vec<Complex64>,
}

const MAX_TERMS: usize = 200;

impl Propagator {
    pub fn new(h: &SpinHamiltonian, t: f64) -> Result<Self> {
        let bound = norm_bound(h).max(f64::MIN_POSITIVE);
        let steps = ((bound * t.abs()) / 2.0).ceil().max(1.0) as usize;
        let x = bound * t / steps as f64;
        let j = bessel_j(MAX_TERMS, x.abs());
        // Tail Σ_{k>K} 2|J_k| is dominated by its first term for x ≤ 2.
        let kmax = (1..MAX_TERMS)
            .find(|&k| 2.0 * (j[k].abs() + j[k + 1].abs()) < 1e-16)
            .ok_or(Error::Convergence { residual: j[MAX_TERMS].abs(), matvecs: MAX_TERMS })?;
        let mi = Complex64::new(0.0, -x.signum());
        let coefs = (0..kmax).map(|k| mi.powu(k as u32) * j[k] * if k == 0 { 1.0 } else { 2.0 }).collect();
        Ok(Propagator { op: PauliOperator::new(h), bound, steps, coefs })
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        let mut cur = v.to_vec();
        let scaled = |src: &[Complex64], out: &mut [Complex64]| {
            self.op.apply(src, out);
            out.iter_mut().for_each(|o| *o /= self.bound);
        };
        for _ in 0..self.steps {
            let mut t0 = cur.clone();
            let mut t1 = vec![C0; n];
            scaled(&t0, &mut t1);
            let mut acc: Vec<Complex64> = t0.iter().map(|a| a * self.coefs[0]).collect();
            if self.coefs.len() > 1 {
                acc.iter_mut().zip(&t1).for_each(|(a, b)| *a += b * self.coefs[1]);
            }
            let mut t2 = vec![C0; n];
            for c in &self.coefs[2.min(self.coefs.len())..] {
                scaled(&t1, &mut t2);
                for i in 0..n {
                    t2[i] = 2.0 * t2[i] - t0[i];
                    acc[i] += t2[i] * c;
                }
                std::mem::swap(&mut t0, &mut t1);
                std::mem::swap(&mut t1, &mut t2);
            }
            cur = acc;
        }
        cur
    }
}

/// `|ψ_k> = exp(-i H k dt)|ψ>`, `k = 0..order`.
pub fn krylov_basis(h: &SpinHamiltonian, config: &KrylovConfig) -> Result<Vec<Statevector>> {
    config.validate()?;
    let prop = Propagator::new(h, config.time_step(h))?;
    let mut basis = vec![config.reference_state(h.size)?];
    for _ in 1..config.order {
        let next = prop.apply(&basis.last().unwrap().amps);
        basis.push(Statevector { size: h.size, amps: next });
    }
    Ok(basis)
}

/// `T_jl = <ψ_j|H|ψ_l>` and `S_jl = <ψ_j|ψ_l>`.
pub fn assemble(h: &SpinHamiltonian, basis: &[Statevector]) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    if basis.is_empty() {
        return Err(Error::Degenerate("empty Krylov basis".into()));
    }
    let op = PauliOperator::new(h);
    let hb: Vec<Vec<Complex64>> = basis
        .par_iter()
        .map(|v| {
            let mut out = vec![C0; v.amps.len()];
            op.apply(&v.amps, &mut out);
            out
        })
        .collect();
    let r = basis.len();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|j| (j..r).map(move |l| (j, l))).collect();
    let vals: Vec<(Complex64, Complex64)> =
        pairs.par_iter().map(|&(j, l)| (dot(&basis[j].amps, &hb[l]), dot(&basis[j].amps, &basis[l].amps))).collect();
    let mut t = DMatrix::zeros(r, r);
    let mut s = DMatrix::zeros(r, r);
    for (&(j, l), &(tv, sv)) in pairs.iter().zip(&vals) {
        t[(j, l)] = tv;
        t[(l, j)] = tv.conj();
        s[(j, l)] = sv;
        s[(l, j)] = sv.conj();
    }
    Ok((t, s))
}

#[derive(Clone, Debug)]
pub struct Gevp {
    pub eigenvalues: Vec<f64>,
    pub ground_coefficients: DVector<Complex64>,
    pub retained: usize,
}

/// Solve `T c = t S c` on the span of `S` eigenvectors whose eigenvalue is at
/// least `eps_s` times the largest.
pub fn solve_gevp(t: &DMatrix<Complex64>, s: &DMatrix<Complex64>, eps_s: f64) -> Result<Gevp> {
    let r = s.nrows();
    if t.shape() != (r, r) || s.ncols() != r {
        return Err(Error::DimensionMismatch { expected: r, got: t.nrows() });
    }
    let eig = s.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..r).filter(|&i| smax > 0.0 && eig.eigenvalues[i] >= eps_s * smax).collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("overlap matrix has no singular value above threshold".into()));
    }
    let k = keep.len();
    let w = DMatrix::from_fn(r, k, |i, a| eig.eigenvectors[(i, keep[a])] / eig.eigenvalues[keep[a]].sqrt());
    let red = w.adjoint() * t * &w;
    let red = (&red + red.adjoint()).scale(0.5);
    let e = red.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let c = &w * e.eigenvectors.column(order[0]);
    Ok(Gevp { eigenvalues: order.iter().map(|&i| e.eigenvalues[i]).collect(), ground_coefficients: c, retained: k })
}

/// Lowest Ritz value after each basis vector is added, using a nested
/// orthonormalization that drops vectors whose relative residual norm² falls
/// below `eps_s`.
pub fn energy_by_order(h: &SpinHamiltonian, basis: &[Statevector], eps_s: f64) -> Vec<f64> {
    let op = PauliOperator::new(h);
    let mut q: Vec<Vec<Complex64>> = Vec::new();
    let mut hq: Vec<Vec<Complex64>> = Vec::new();
    let mut m = DMatrix::<Complex64>::zeros(0, 0);
    let mut out = Vec::with_capacity(basis.len());
    for v in basis {
        let mut w = v.amps.clone();
        let n0 = crate::lattice::norm(&w);
        for _ in 0..2 {
            for qk in &q {
                let c = dot(qk, &w);
                w.iter_mut().zip(qk).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nw = crate::lattice::norm(&w);
        if n0 > 0.0 && nw * nw >= eps_s * n0 * n0 {
            w.iter_mut().for_each(|a| *a /= nw);
            let mut hw = vec![C0; w.len()];
            op.apply(&w, &mut hw);
            let k = q.len();
            let mut grown = DMatrix::zeros(k + 1, k + 1);
            grown.view_mut((0, 0), (k, k)).copy_from(&m);
            for (i, qi) in q.iter().enumerate() {
                let x = dot(qi, &hw);
                grown[(i, k)] = x;
                grown[(k, i)] = x.conj();
            }
            grown[(k, k)] = Complex64::new(dot(&w, &hw).re, 0.0);
            m = grown;
            q.push(w);
            hq.push(hw);
        }
        let lowest = if q.is_empty() {
            f64::NAN
        } else {
            m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        out.push(lowest);
    }
    out
}

#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub dt: f64,
    pub t: DMatrix<Complex64>,
    pub s: DMatrix<Complex64>,
    pub energy_by_order: Vec<f64>,
    pub energy: f64,
    pub ground_coefficients: DVector<Complex64>,
    pub retained: usize,
}

#[derive(Serialize)]
struct Row {
    r: usize,
    energy: f64,
    gap: Option<f64>,
}

impl KrylovResult {
    /// Ground-state estimate `Σ c_k |ψ_k>`, normalized.
    pub fn ground_state(&self, basis: &[Statevector]) -> Statevector {
        let n = basis[0].amps.len();
        let mut amps = vec![C0; n];
        for (c, v) in self.ground_coefficients.iter().zip(basis) {
            amps.iter_mut().zip(&v.amps).for_each(|(a, b)| *a += c * b);
        }
        let mut s = Statevector { size: basis[0].size, amps };
        s.normalize();
        s
    }

    /// CSV `r,energy,gap`; `gap` is blank without a reference energy.
    pub fn write_csv<W: Write>(&self, exact: Option<f64>, mut w: W) -> Result<()> {
        writeln!(w, "r,energy,gap")?;
        for (i, e) in self.energy_by_order.iter().enumerate() {
            let row = Row { r: i + 1, energy: *e, gap: exact.map(|x| e - x) };
            match row.gap {
                Some(g) => writeln!(w, "{},{:.17e},{:.6e}", row.r, row.energy, g)?,
                None => writeln!(w, "{},{:.17e},", row.r, row.energy)?,
            }
        }
        Ok(())
    }
}

pub fn krylov_ground_state(h: &SpinHamiltonian, config: &KrylovConfig) -> Result<(KrylovResult, Vec<Statevector>)> {
    let basis = krylov_basis(h, config)?;
    let (t, s) = assemble(h, &basis)?;
    let g = solve_gevp(&t, &s, config.eps_s)?;
    let energy_by_order = energy_by_order(h, &basis, config.eps_s);
    let res = KrylovResult {
        dt: config.time_step(h),
        t,
        s,
        energy_by_order,
        energy: g.eigenvalues[0],
        ground_coefficients: g.ground_coefficients,
        retained: g.retained,
    };
    Ok((res, basis))
}
