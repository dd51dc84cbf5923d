//! Marginals, Shannon-Rényi and entanglement Rényi entropies, the Rényi
//! difference measure, correlators and stoquastic reconstruction.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::circuit::Statevector;
use crate::error::{Error, Result};
use crate::table::{Basis, ProbabilityTable};

const N1_TOL: f64 = 1e-9;

/// Marginal over the contiguous block of `len` sites starting at `start`.
pub fn marginal_block(table: &ProbabilityTable, start: usize, len: usize) -> Result<ProbabilityTable> {
    if len == 0 || start + len > table.size {
        return Err(Error::OutOfRange(format!("block [{start}, {}) for L={}", start + len, table.size)));
    }
    let mask = (1usize << len) - 1;
    let mut w = vec![0.0; 1 << len];
    for (b, &p) in table.weights.iter().enumerate() {
        w[(b >> start) & mask] += p;
    }
    Ok(ProbabilityTable { size: len, basis: table.basis, weights: w, normalized: table.normalized })
}

/// Marginal over sites `[0, l)`.
pub fn marginal(table: &ProbabilityTable, l: usize) -> Result<ProbabilityTable> {
    table.require_normalized()?;
    marginal_block(table, 0, l)
}

fn renyi_of_weights<I: Iterator<Item = f64>>(w: I, n: f64) -> f64 {
    if (n - 1.0).abs() < N1_TOL {
        -w.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    } else {
        w.filter(|&p| p > 0.0).map(|p| p.powf(n)).sum::<f64>().ln() / (1.0 - n)
    }
}

/// `Sh_n = ln(Σ p^n) / (1 - n)`, Shannon entropy at `n = 1`.
pub fn shannon_renyi(table: &ProbabilityTable, n: f64) -> Result<f64> {
    if n <= 0.0 {
        return Err(Error::OutOfRange(format!("Rényi index must be positive, got {n}")));
    }
    table.require_normalized()?;
    Ok(renyi_of_weights(table.weights.iter().copied(), n))
}

/// `I_n(l, L-l) = Sh_n(A) + Sh_n(B) - Sh_n(AB)` with `A = [0, l)` and
/// `B = [l, L)`.
pub fn rdm(table: &ProbabilityTable, l: usize, n: f64) -> Result<f64> {
    let big = table.size;
    if l == 0 || l >= big {
        return Err(Error::OutOfRange(format!("subsystem length {l} for L={big}")));
    }
    table.require_normalized()?;
    let a = marginal_block(table, 0, l)?;
    let b = marginal_block(table, l, big - l)?;
    Ok(shannon_renyi(&a, n)? + shannon_renyi(&b, n)? - shannon_renyi(table, n)?)
}

/// `ρ_l = Tr_{[l, L)} |ψ><ψ|`.
pub fn reduced_density_matrix(psi: &Statevector, l: usize) -> Result<DMatrix<Complex64>> {
    if l == 0 || l > psi.size {
        return Err(Error::OutOfRange(format!("subsystem length {l} for L={}", psi.size)));
    }
    let (da, db) = (1usize << l, 1usize << (psi.size - l));
    let m = DMatrix::from_fn(da, db, |a, h| psi.amps[a + h * da]);
    Ok(&m * m.adjoint())
}

/// `S_n = ln Tr ρ^n / (1 - n)` from the eigenvalues of `ρ`; von Neumann at `n = 1`.
pub fn entanglement_renyi(rho: &DMatrix<Complex64>, n: f64) -> Result<f64> {
    if n <= 0.0 {
        return Err(Error::OutOfRange(format!("Rényi index must be positive, got {n}")));
    }
    let eig = rho.clone().symmetric_eigen();
    Ok(renyi_of_weights(eig.eigenvalues.iter().map(|&x| x.max(0.0)), n))
}

/// Entanglement entropy of the block `[0, l)` computed from Schmidt values.
pub fn entanglement_entropy(psi: &Statevector, l: usize, n: f64) -> Result<f64> {
    if n <= 0.0 {
        return Err(Error::OutOfRange(format!("Rényi index must be positive, got {n}")));
    }
    if l == 0 || l >= psi.size {
        return Err(Error::OutOfRange(format!("subsystem length {l} for L={}", psi.size)));
    }
    let (da, db) = (1usize << l, 1usize << (psi.size - l));
    let m = DMatrix::from_fn(da, db, |a, h| psi.amps[a + h * da]);
    let sv = m.singular_values();
    Ok(renyi_of_weights(sv.iter().map(|s| s * s), n))
}

/// `|ψ> = Σ √p_z |z>`.
pub fn reconstruct_stoquastic(table: &ProbabilityTable) -> Result<Statevector> {
    if table.has_negative() {
        return Err(Error::Degenerate("negative weights must be post-processed before reconstruction".into()));
    }
    let mut amps: Vec<Complex64> = table.weights.iter().map(|&p| Complex64::new(p.sqrt(), 0.0)).collect();
    let n = crate::lattice::norm(&amps);
    if n == 0.0 {
        return Err(Error::Degenerate("empty table".into()));
    }
    amps.iter_mut().for_each(|a| *a /= n);
    Ok(Statevector { size: table.size, amps })
}

fn spin(b: usize, site: usize) -> f64 {
    if b >> site & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// `<Z_0 Z_r> - <Z_0><Z_r>` from Z-basis weights (bit 0 ↦ +1).
pub fn connected_correlator(table: &ProbabilityTable, r: usize) -> Result<f64> {
    if table.basis != Basis::Z {
        return Err(Error::Config("connected correlator needs a Z-basis table".into()));
    }
    if r >= table.size {
        return Err(Error::OutOfRange(format!("distance {r} for L={}", table.size)));
    }
    let (mut zz, mut z0, mut zr) = (0.0, 0.0, 0.0);
    for (b, &p) in table.weights.iter().enumerate() {
        let (s0, sr) = (spin(b, 0), spin(b, r));
        zz += p * s0 * sr;
        z0 += p * s0;
        zr += p * sr;
    }
    Ok(zz - z0 * zr)
}

/// CSV rows `basis,n,l,value`.
pub fn write_grid_csv<W: Write>(rows: &[(Basis, f64, usize, f64)], mut w: W) -> Result<()> {
    writeln!(w, "basis,n,l,value")?;
    for (b, n, l, v) in rows {
        writeln!(w, "{b},{n},{l},{v:.17e}")?;
    }
    Ok(())
}
