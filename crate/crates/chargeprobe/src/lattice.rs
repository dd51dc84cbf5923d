//! Spin-chain Hamiltonians as real-weighted Pauli-string sums, and exact
//! ground states.
//!
//! Bit order is little-endian throughout: site 0 is the least significant bit
//! of a basis index.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' | 'i' => Some(Pauli::I),
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A tensor product of single-site Paulis; character `i` of the text form is
/// site `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

/// Bit masks describing how a Pauli string acts on a computational basis state:
/// `P|b> = i^ny (-1)^popcount(b & sign) |b ^ flip>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PauliMasks {
    pub flip: u64,
    pub sign: u64,
    pub ny: u32,
}

impl PauliMasks {
    pub fn phase(&self) -> Complex64 {
        match self.ny % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl PauliString {
    pub fn identity(l: usize) -> Self {
        PauliString { letters: vec![Pauli::I; l] }
    }

    pub fn new(letters: Vec<Pauli>) -> Self {
        PauliString { letters }
    }

    /// Build from `(site, letter)` pairs on an otherwise-identity string.
    pub fn from_sites(l: usize, sites: &[(usize, Pauli)]) -> Result<Self> {
        let mut letters = vec![Pauli::I; l];
        for &(s, p) in sites {
            if s >= l {
                return Err(Error::OutOfRange(format!("site {s} for L={l}")));
            }
            letters[s] = p;
        }
        Ok(PauliString { letters })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let letters = text
            .trim()
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::Parse(format!("bad Pauli letter '{c}' in '{text}'"))))
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Parse("empty Pauli string".into()));
        }
        Ok(PauliString { letters })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.letters.len()).filter(|&i| self.letters[i] != Pauli::I).collect()
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn masks(&self) -> PauliMasks {
        let (mut flip, mut sign, mut ny) = (0u64, 0u64, 0u32);
        for (i, &p) in self.letters.iter().enumerate() {
            let bit = 1u64 << i;
            match p {
                Pauli::I => {}
                Pauli::X => flip |= bit,
                Pauli::Z => sign |= bit,
                Pauli::Y => {
                    flip |= bit;
                    sign |= bit;
                    ny += 1;
                }
            }
        }
        PauliMasks { flip, sign, ny }
    }

    /// True if the string only contains I and Z.
    pub fn is_diagonal(&self) -> bool {
        self.letters.iter().all(|&p| matches!(p, Pauli::I | Pauli::Z))
    }

    /// Apply the string to a statevector in place.
    pub fn apply(&self, amps: &mut [Complex64]) {
        let m = self.masks();
        let phase = m.phase();
        if m.flip == 0 {
            for (b, a) in amps.iter_mut().enumerate() {
                if (b as u64 & m.sign).count_ones() & 1 == 1 {
                    *a = -*a;
                }
            }
            if m.ny % 4 != 0 {
                amps.iter_mut().for_each(|a| *a *= phase);
            }
            return;
        }
        for b in 0..amps.len() {
            let t = b ^ m.flip as usize;
            if t < b {
                continue;
            }
            let sb = if (b as u64 & m.sign).count_ones() & 1 == 1 { -phase } else { phase };
            let st = if (t as u64 & m.sign).count_ones() & 1 == 1 { -phase } else { phase };
            let (ab, at) = (amps[b], amps[t]);
            amps[t] = sb * ab;
            amps[b] = st * at;
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Symmetry used to break exact ground-state degeneracies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    None,
    /// Global spin flip, product of X on every site; even sector preferred.
    SpinFlip,
    /// Product of Z on every site; even sector preferred.
    ZParity,
    /// Zero total magnetization, i.e. popcount = L/2.
    HalfFilling,
}

impl Symmetry {
    /// Project `v` onto the preferred sector.
    pub fn project(&self, l: usize, v: &[Complex64]) -> Vec<Complex64> {
        match self {
            Symmetry::None => v.to_vec(),
            Symmetry::SpinFlip => {
                let full = (1usize << l) - 1;
                (0..v.len()).map(|b| 0.5 * (v[b] + v[b ^ full])).collect()
            }
            Symmetry::ZParity => (0..v.len())
                .map(|b| if b.count_ones() % 2 == 0 { v[b] } else { C0 })
                .collect(),
            Symmetry::HalfFilling => (0..v.len())
                .map(|b| if 2 * b.count_ones() as usize == l { v[b] } else { C0 })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinHamiltonian {
    pub size: usize,
    pub terms: Vec<(f64, PauliString)>,
    pub boundary: Boundary,
    pub symmetry: Symmetry,
}

fn bonds(l: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let n = match boundary {
        Boundary::Open => l - 1,
        Boundary::Periodic => l,
    };
    (0..n).map(|i| (i, (i + 1) % l)).collect()
}

/// `H = -J Σ Z_i Z_{i+1} - h Σ X_i`.
pub fn build_tfi(l: usize, j: f64, h: f64, boundary: Boundary) -> Result<SpinHamiltonian> {
    if l < 2 {
        return Err(Error::InvalidSize(format!("TFI needs L >= 2, got {l}")));
    }
    let mut terms = Vec::new();
    for (a, b) in bonds(l, boundary) {
        terms.push((-j, PauliString::from_sites(l, &[(a, Pauli::Z), (b, Pauli::Z)])?));
    }
    for i in 0..l {
        terms.push((-h, PauliString::from_sites(l, &[(i, Pauli::X)])?));
    }
    Ok(SpinHamiltonian { size: l, terms, boundary, symmetry: Symmetry::SpinFlip })
}

/// `H = -Σ (X_i X_{i+1} + Y_i Y_{i+1} + Δ Z_i Z_{i+1})`.
///
/// With the overall minus sign, Δ < 0 gives antiferromagnetic Ising coupling.
pub fn build_xxz(l: usize, delta: f64, boundary: Boundary) -> Result<SpinHamiltonian> {
    if l < 2 {
        return Err(Error::InvalidSize(format!("XXZ needs L >= 2, got {l}")));
    }
    let mut terms = Vec::new();
    for (a, b) in bonds(l, boundary) {
        terms.push((-1.0, PauliString::from_sites(l, &[(a, Pauli::X), (b, Pauli::X)])?));
        terms.push((-1.0, PauliString::from_sites(l, &[(a, Pauli::Y), (b, Pauli::Y)])?));
        terms.push((-delta, PauliString::from_sites(l, &[(a, Pauli::Z), (b, Pauli::Z)])?));
    }
    Ok(SpinHamiltonian { size: l, terms, boundary, symmetry: Symmetry::HalfFilling })
}

/// TFI plus `λ Σ (X_i Z_{i+1} Z_{i+2} + Z_i Z_{i+1} X_{i+2})`.
pub fn build_tricritical(l: usize, j: f64, h: f64, lambda: f64, boundary: Boundary) -> Result<SpinHamiltonian> {
    if l < 3 {
        return Err(Error::InvalidSize(format!("tricritical model needs L >= 3, got {l}")));
    }
    let mut ham = build_tfi(l, j, h, boundary)?;
    if lambda == 0.0 {
        return Ok(ham);
    }
    let n = match boundary {
        Boundary::Open => l - 2,
        Boundary::Periodic => l,
    };
    for i in 0..n {
        let (a, b, c) = (i, (i + 1) % l, (i + 2) % l);
        ham.terms.push((lambda, PauliString::from_sites(l, &[(a, Pauli::X), (b, Pauli::Z), (c, Pauli::Z)])?));
        ham.terms.push((lambda, PauliString::from_sites(l, &[(a, Pauli::Z), (b, Pauli::Z), (c, Pauli::X)])?));
    }
    Ok(ham)
}

/// Anisotropic XY chain in a field whose Jordan-Wigner image is exactly
/// quadratic on a ring of `L` fermionic modes.
///
/// Nearest-neighbour bonds run over the open chain; the closing bond is carried
/// by the two string terms `Y_0 Z..Z Y_{L-1}` and `X_0 Z..Z X_{L-1}`.
pub fn build_xy_fermionic(l: usize, gamma: f64, lambda: f64) -> Result<SpinHamiltonian> {
    if l < 4 || l % 2 == 1 {
        return Err(Error::InvalidSize(format!("XY chain needs even L >= 4, got {l}")));
    }
    let (a, b) = ((1.0 + gamma) / 2.0, (1.0 - gamma) / 2.0);
    let mut terms = Vec::new();
    for i in 0..l - 1 {
        terms.push((a, PauliString::from_sites(l, &[(i, Pauli::X), (i + 1, Pauli::X)])?));
        terms.push((b, PauliString::from_sites(l, &[(i, Pauli::Y), (i + 1, Pauli::Y)])?));
    }
    for i in 0..l {
        terms.push((lambda, PauliString::from_sites(l, &[(i, Pauli::Z)])?));
    }
    let string = |end: Pauli| {
        let mut letters = vec![Pauli::Z; l];
        letters[0] = end;
        letters[l - 1] = end;
        PauliString::new(letters)
    };
    terms.push((a, string(Pauli::Y)));
    terms.push((b, string(Pauli::X)));
    Ok(SpinHamiltonian { size: l, terms, boundary: Boundary::Periodic, symmetry: Symmetry::ZParity })
}

/// Free-fermion quasiparticle energy of the XY chain at momentum index `k`.
pub fn xy_omega(l: usize, gamma: f64, lambda: f64, k: i64) -> f64 {
    let phi = 2.0 * std::f64::consts::PI * k as f64 / l as f64;
    ((lambda - phi.cos()).powi(2) + gamma * gamma * phi.sin().powi(2)).sqrt()
}

/// Sum of `ω_k` over `k = -L/2+1 .. L/2`.
pub fn xy_ground_energy(l: usize, gamma: f64, lambda: f64) -> f64 {
    let half = (l / 2) as i64;
    (-half + 1..=half).map(|k| -xy_omega(l, gamma, lambda, k)).sum()
}

/// Precompiled sparse form: terms grouped by flip mask.
#[derive(Clone, Debug)]
pub struct PauliOperator {
    pub size: usize,
    diag: Vec<f64>,
    offdiag: Vec<(usize, Vec<(u64, Complex64)>)>,
    real: bool,
}

impl PauliOperator {
    pub fn new(h: &SpinHamiltonian) -> Self {
        let dim = 1usize << h.size;
        let mut diag = vec![0.0; dim];
        let mut groups: Vec<(usize, Vec<(u64, Complex64)>)> = Vec::new();
        let mut real = true;
        for (c, p) in &h.terms {
            let m = p.masks();
            if m.flip == 0 {
                let ph = m.phase().re;
                for (b, d) in diag.iter_mut().enumerate() {
                    let s = if (b as u64 & m.sign).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
                    *d += c * ph * s;
                }
                continue;
            }
            if m.ny % 2 == 1 {
                real = false;
            }
            let coef = *c * m.phase();
            match groups.iter_mut().find(|g| g.0 == m.flip as usize) {
                Some(g) => g.1.push((m.sign, coef)),
                None => groups.push((m.flip as usize, vec![(m.sign, coef)])),
            }
        }
        PauliOperator { size: h.size, diag, offdiag: groups, real }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (o, (d, x)) in out.iter_mut().zip(self.diag.iter().zip(v)) {
            *o = *d * *x;
        }
        for (flip, terms) in &self.offdiag {
            for (a, o) in out.iter_mut().enumerate() {
                let src = a ^ flip;
                let mut acc = C0;
                for &(sign, c) in terms {
                    if (src as u64 & sign).count_ones() & 1 == 1 {
                        acc -= c;
                    } else {
                        acc += c;
                    }
                }
                *o += acc * v[src];
            }
        }
    }

    /// Real-arithmetic `out = H v`; only valid when [`is_real`](Self::is_real).
    pub fn apply_real(&self, v: &[f64], out: &mut [f64]) {
        debug_assert!(self.real);
        for (o, (d, x)) in out.iter_mut().zip(self.diag.iter().zip(v)) {
            *o = *d * *x;
        }
        for (flip, terms) in &self.offdiag {
            for (a, o) in out.iter_mut().enumerate() {
                let src = a ^ flip;
                let mut acc = 0.0;
                for &(sign, c) in terms {
                    if (src as u64 & sign).count_ones() & 1 == 1 {
                        acc -= c.re;
                    } else {
                        acc += c.re;
                    }
                }
                *o += acc * v[src];
            }
        }
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![C0; n];
        let mut col = vec![C0; n];
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = C0;
        }
        m
    }

    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let mut hv = vec![C0; v.len()];
        self.apply(v, &mut hv);
        dot(v, &hv)
    }
}

pub fn dense_matrix(h: &SpinHamiltonian) -> DMatrix<Complex64> {
    PauliOperator::new(h).dense()
}

/// `<a|b>`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `<ψ|H|ψ>`; errors if the imaginary residue exceeds 1e-12 relative.
pub fn expectation(h: &SpinHamiltonian, psi: &[Complex64]) -> Result<f64> {
    let dim = 1usize << h.size;
    if psi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: psi.len() });
    }
    let e = PauliOperator::new(h).expectation(psi);
    let scale = h.terms.iter().map(|t| t.0.abs()).sum::<f64>().max(1.0);
    if e.im.abs() > 1e-12 * scale {
        return Err(Error::Degenerate(format!("non-real expectation value {e}")));
    }
    Ok(e.re)
}

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: Vec<Complex64>,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct EigenConfig {
    pub seed: u64,
    pub tol: f64,
    pub max_matvecs: usize,
    pub krylov_dim: usize,
    /// Sizes up to this use dense diagonalization.
    pub dense_max_l: usize,
    pub degeneracy_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { seed: 7, tol: 1e-10, max_matvecs: 5000, krylov_dim: 160, dense_max_l: 8, degeneracy_tol: 1e-10 }
    }
}

pub fn ground_state(h: &SpinHamiltonian) -> Result<GroundStateResult> {
    ground_state_with(h, &EigenConfig::default())
}

pub fn ground_state_with(h: &SpinHamiltonian, cfg: &EigenConfig) -> Result<GroundStateResult> {
    if h.size > 20 {
        return Err(Error::InvalidSize(format!("exact diagonalization limited to L <= 20, got {}", h.size)));
    }
    let op = PauliOperator::new(h);
    let (vals, vecs) = if h.size <= cfg.dense_max_l {
        dense_lowest(&op)
    } else {
        lanczos_lowest(&op, cfg)?
    };
    // vals ascending; vecs[i] pairs with vals[i]; at least two entries when dim >= 2.
    let e0 = vals[0];
    let mut space: Vec<&Vec<Complex64>> = vec![&vecs[0]];
    for i in 1..vals.len() {
        if vals[i] - e0 < cfg.degeneracy_tol {
            space.push(&vecs[i]);
        }
    }
    let mut state = if space.len() > 1 { sector_tiebreak(h, &space) } else { vecs[0].clone() };
    fix_phase(&mut state);
    let gap = if vals.len() > 1 { vals[1] - e0 } else { f64::INFINITY };
    Ok(GroundStateResult { energy: e0, state, gap, converged: true })
}

/// Rotate a degenerate eigenspace to the vector with maximal weight in the
/// preferred symmetry sector.
fn sector_tiebreak(h: &SpinHamiltonian, space: &[&Vec<Complex64>]) -> Vec<Complex64> {
    let k = space.len();
    let projected: Vec<Vec<Complex64>> = space.iter().map(|v| h.symmetry.project(h.size, v)).collect();
    let mut m = DMatrix::<Complex64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = dot(space[i], &projected[j]);
        }
    }
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = m.symmetric_eigen();
    let mut best = 0;
    for i in 1..k {
        if eig.eigenvalues[i] > eig.eigenvalues[best] + 1e-12 {
            best = i;
        }
    }
    let coef = eig.eigenvectors.column(best);
    let dim = space[0].len();
    let mut out = vec![C0; dim];
    for (i, v) in space.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += coef[i] * x;
        }
    }
    let n = norm(&out);
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Make the largest-magnitude amplitude real and positive; ties go to the
/// lowest index.
pub fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let idx = v.iter().position(|x| x.norm() >= max * (1.0 - 1e-9)).unwrap_or(0);
    let ph = v[idx].conj() / v[idx].norm();
    v.iter_mut().for_each(|x| *x *= ph);
}

fn dense_lowest(op: &PauliOperator) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let m = op.dense();
    let eig = m.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let keep = n.min(8);
    let vals = order[..keep].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..keep].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (vals, vecs)
}

/// Lowest eigenpairs by restarted Lanczos with full reorthogonalization and
/// deflation against converged vectors. Keeps finding eigenpairs until one lies
/// above the ground level by more than the degeneracy tolerance.
fn lanczos_lowest(op: &PauliOperator, cfg: &EigenConfig) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vals: Vec<f64> = Vec::new();
    let mut vecs: Vec<Vec<Complex64>> = Vec::new();
    let mut budget = cfg.max_matvecs;
    let dim = op.dim();
    loop {
        let (e, v, used) = lanczos_one(op, &vecs, &mut rng, cfg, budget)?;
        budget = budget.saturating_sub(used);
        vals.push(e);
        vecs.push(v);
        let e0 = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if e - e0 > cfg.degeneracy_tol && vals.len() >= 2 || vecs.len() >= dim.min(8) {
            break;
        }
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    Ok((order.iter().map(|&i| vals[i]).collect(), order.iter().map(|&i| vecs[i].clone()).collect()))
}

fn lanczos_one(
    op: &PauliOperator,
    deflate: &[Vec<Complex64>],
    rng: &mut ChaCha8Rng,
    cfg: &EigenConfig,
    budget: usize,
) -> Result<(f64, Vec<Complex64>, usize)> {
    let dim = op.dim();
    let orth = |w: &mut Vec<Complex64>, basis: &[Vec<Complex64>]| {
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, w);
                for (x, y) in w.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
    };
    let mut start: Vec<Complex64> = (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let mut used = 0usize;
    let mut last_res = f64::INFINITY;
    let mut hv = vec![C0; dim];
    loop {
        orth(&mut start, deflate);
        let n0 = norm(&start);
        start.iter_mut().for_each(|x| *x /= n0);
        let m = cfg.krylov_dim.min(dim - deflate.len());
        let mut q: Vec<Vec<Complex64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        for j in 0..m {
            if used >= budget {
                return Err(Error::Convergence { residual: last_res, matvecs: used });
            }
            op.apply(&q[j], &mut hv);
            used += 1;
            let a = dot(&q[j], &hv).re;
            alpha.push(a);
            let mut w = hv.clone();
            orth(&mut w, deflate);
            orth(&mut w, &q);
            let b = norm(&w);
            if j + 1 == m || b < 1e-13 {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            q.push(w);
            // Check convergence of the lowest Ritz pair every few steps.
            if j >= 4 && j % 4 == 0 {
                let (_, y) = tridiag_lowest(&alpha, &beta[..alpha.len() - 1]);
                let res = (b * y[y.len() - 1]).abs();
                last_res = res;
                if res < cfg.tol * 0.1 {
                    break;
                }
            }
        }
        let k = alpha.len();
        let (_, y) = tridiag_lowest(&alpha, &beta[..k - 1]);
        let mut v = vec![C0; dim];
        for (i, qi) in q.iter().take(k).enumerate() {
            for (x, z) in v.iter_mut().zip(qi) {
                *x += y[i] * z;
            }
        }
        orth(&mut v, deflate);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        op.apply(&v, &mut hv);
        used += 1;
        let e = dot(&v, &hv).re;
        let res = hv.iter().zip(&v).map(|(a, b)| (a - e * b).norm_sqr()).sum::<f64>().sqrt();
        last_res = res;
        if res < cfg.tol {
            return Ok((e, v, used));
        }
        start = v;
    }
}

/// Lowest eigenpair of the symmetric tridiagonal matrix (alpha, beta).
fn tridiag_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut best = 0;
    for i in 1..k {
        if eig.eigenvalues[i] < eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tfi_term_counts() {
        let h = build_tfi(12, 1.0, 1.0, Boundary::Periodic).unwrap();
        assert_eq!(h.terms.len(), 24);
        let h = build_tfi(5, 1.0, 0.3, Boundary::Open).unwrap();
        assert_eq!(h.terms.len(), 9);
        assert!(h.terms.iter().all(|(_, p)| !(p.letters()[0] != Pauli::I && p.letters()[4] != Pauli::I)));
        assert!(build_tfi(1, 1.0, 1.0, Boundary::Open).is_err());
    }

    #[test]
    fn tfi_dimer_energy() {
        let h = build_tfi(2, 1.0, 1.0, Boundary::Open).unwrap();
        let g = ground_state(&h).unwrap();
        assert!((g.energy + 5f64.sqrt()).abs() < 1e-12);
        assert!(g.state.iter().all(|a| a.re >= -1e-12 && a.im.abs() < 1e-12));
    }

    #[test]
    fn xy_dimer() {
        let h = build_xxz(2, 0.0, Boundary::Open).unwrap();
        assert!((ground_state(&h).unwrap().energy + 2.0).abs() < 1e-12);
    }

    #[test]
    fn classical_ising_degenerate() {
        let h = build_tfi(3, 1.0, 0.0, Boundary::Open).unwrap();
        let g = ground_state(&h).unwrap();
        assert!((g.energy + 2.0).abs() < 1e-12);
        assert!(g.gap.abs() < 1e-12);
        // Even spin-flip combination of the two aligned states.
        assert!((g.state[0].re - 0.5f64.sqrt()).abs() < 1e-10);
        assert!((g.state[7].re - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn pauli_apply_matches_masks() {
        let p = PauliString::parse("XYZ").unwrap();
        let mut v = vec![C0; 8];
        v[0] = Complex64::new(1.0, 0.0);
        p.apply(&mut v);
        // X on site 0 and Y on site 1 flip bits 0 and 1; Y|0> = i|1>.
        assert!((v[3] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(p.to_string(), "XYZ");
    }

    #[test]
    fn field_expectation_on_plus_state() {
        let l = 5;
        let h = build_tfi(l, 0.0, 0.7, Boundary::Open).unwrap();
        let amp = Complex64::new((1.0 / 32.0f64).sqrt(), 0.0);
        let psi = vec![amp; 32];
        assert!((expectation(&h, &psi).unwrap() + 0.7 * l as f64).abs() < 1e-12);
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let h = build_xxz(8, -0.5, Boundary::Periodic).unwrap();
        let dense = ground_state(&h).unwrap();
        let cfg = EigenConfig { dense_max_l: 0, ..Default::default() };
        let lz = ground_state_with(&h, &cfg).unwrap();
        assert!((dense.energy - lz.energy).abs() < 1e-10);
        assert!((dense.gap - lz.gap).abs() < 1e-8);
        assert!((dot(&dense.state, &lz.state).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn xy_matches_free_fermions() {
        for &(g, lam) in &[(1.0, 1.0), (1.0, 0.5), (0.5, 0.3), (0.3, 1.7)] {
            let h = build_xy_fermionic(4, g, lam).unwrap();
            let e = ground_state(&h).unwrap().energy;
            assert!((e - xy_ground_energy(4, g, lam)).abs() < 1e-10, "{g} {lam}");
        }
        assert!(build_xy_fermionic(5, 1.0, 1.0).is_err());
    }

    #[test]
    fn omega_critical_form() {
        for k in -3..=4 {
            let w = xy_omega(8, 1.0, 1.0, k);
            let expect = 2.0 * (std::f64::consts::PI * k as f64 / 8.0).sin().abs();
            assert!((w - expect).abs() < 1e-12);
        }
    }
}
