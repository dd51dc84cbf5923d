//! Classical optimization of the checkerboard ansatz against `<H>`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{self, checkerboard_bonds, checkerboard_index, checkerboard_param_count, Entangler, Statevector};
use crate::error::{Error, Result};
use crate::lattice::{self, PauliOperator, SpinHamiltonian};
use crate::optim::{self, StopRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    GradientQuasiNewton,
    Simplex,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqeConfig {
    pub layers: usize,
    pub optimizer: Optimizer,
    pub max_evals: usize,
    pub restarts: usize,
    pub seed: u64,
    pub tol: f64,
    /// Use trainable controlled-phase entanglers instead of fixed CZ.
    #[serde(default)]
    pub cp_entanglers: bool,
}

impl Default for VqeConfig {
    fn default() -> Self {
        VqeConfig {
            layers: 2,
            optimizer: Optimizer::GradientQuasiNewton,
            max_evals: 5000,
            restarts: 1,
            seed: 0,
            tol: 1e-10,
            cp_entanglers: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VqeResult {
    pub theta: Vec<f64>,
    /// Controlled-phase angles when trainable entanglers are enabled.
    pub phis: Vec<f64>,
    pub trace: Vec<(usize, f64)>,
    pub energy: f64,
    pub energy_error: Option<f64>,
    pub fidelity: Option<f64>,
    pub converged: bool,
    pub restart: usize,
}

impl VqeResult {
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace.iter().map(|&(_, v)| {
            best = best.min(v);
            best
        }).collect()
    }

    /// CSV `layer,site,slot,value`.
    pub fn write_theta_csv<W: Write>(&self, l: usize, d: usize, mut w: W) -> Result<()> {
        writeln!(w, "layer,site,slot,value")?;
        for layer in 0..=d {
            let slots = if layer == d { 1 } else { 2 };
            for slot in 0..slots {
                for site in 0..l {
                    writeln!(w, "{layer},{site},{slot},{:.17e}", self.theta[checkerboard_index(l, layer, site, slot)])?;
                }
            }
        }
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "evaluation,energy")?;
        for (i, v) in &self.trace {
            writeln!(w, "{i},{v:.17e}")?;
        }
        Ok(())
    }
}

pub fn read_theta_csv(text: &str, l: usize, d: usize) -> Result<Vec<f64>> {
    let mut theta = vec![f64::NAN; checkerboard_param_count(l, d)];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            continue;
        }
        let p = |i: usize| f[i].trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad theta row '{line}'")));
        let v: f64 = f[3].trim().parse().map_err(|_| Error::Parse(format!("bad theta row '{line}'")))?;
        let idx = checkerboard_index(l, p(0)?, p(1)?, p(2)?);
        if idx >= theta.len() {
            return Err(Error::Parse(format!("theta index out of range in '{line}'")));
        }
        theta[idx] = v;
    }
    if theta.iter().any(|x| x.is_nan()) {
        return Err(Error::Parse("theta file is incomplete".into()));
    }
    Ok(theta)
}

enum Op {
    Ry { q: usize, p: usize },
    Diag(usize),
    Cp { a: usize, b: usize, p: usize },
}

/// Compiled ansatz plus the Hamiltonian it is scored against.
pub struct Ansatz {
    l: usize,
    d: usize,
    ops: Vec<Op>,
    diags: Vec<Vec<f64>>,
    op: PauliOperator,
    n_theta: usize,
    n_phi: usize,
    real: bool,
    boundary: lattice::Boundary,
}

impl Ansatz {
    pub fn new(h: &SpinHamiltonian, d: usize, cp: bool) -> Result<Self> {
        let l = h.size;
        let (even, odd) = checkerboard_bonds(l, h.boundary)?;
        let dim = 1usize << l;
        let sign_of = |bonds: &[(usize, usize)]| -> Vec<f64> {
            (0..dim)
                .map(|b| {
                    let n = bonds.iter().filter(|&&(x, y)| b >> x & 1 == 1 && b >> y & 1 == 1).count();
                    if n % 2 == 1 { -1.0 } else { 1.0 }
                })
                .collect()
        };
        let diags = vec![sign_of(&even), sign_of(&odd)];
        let mut ops = Vec::new();
        let mut k = 0;
        for layer in 0..d {
            for (slot, bonds) in [(0, &even), (1, &odd)] {
                for s in 0..l {
                    ops.push(Op::Ry { q: s, p: checkerboard_index(l, layer, s, slot) });
                }
                if cp {
                    for &(a, b) in bonds.iter() {
                        ops.push(Op::Cp { a, b, p: k });
                        k += 1;
                    }
                } else {
                    ops.push(Op::Diag(slot));
                }
            }
        }
        for s in 0..l {
            ops.push(Op::Ry { q: s, p: checkerboard_index(l, d, s, 0) });
        }
        let op = PauliOperator::new(h);
        let real = op.is_real() && !cp;
        Ok(Ansatz { l, d, ops, diags, op, n_theta: checkerboard_param_count(l, d), n_phi: k, real, boundary: h.boundary })
    }

    pub fn n_params(&self) -> usize {
        self.n_theta + self.n_phi
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.n_theta)
    }

    pub fn state(&self, x: &[f64]) -> Result<Statevector> {
        if x.len() != self.n_params() {
            return Err(Error::ParameterCount { expected: self.n_params(), got: x.len() });
        }
        let (theta, phis) = self.split(x);
        let ent = if self.n_phi > 0 { Entangler::Cp(phis.to_vec()) } else { Entangler::Cz };
        let c = circuit::build_checkerboard_with(self.l, self.d, theta, self.boundary, &ent)?;
        circuit::run(&c, &Statevector::zero(self.l))
    }

    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_params() {
            return Err(Error::ParameterCount { expected: self.n_params(), got: x.len() });
        }
        let mut g = vec![0.0; x.len()];
        Ok(self.value_grad(x, &mut g))
    }

    /// Energy and its exact gradient by reverse-mode sweep over the circuit.
    pub fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        if self.real {
            self.value_grad_real(x, grad)
        } else {
            self.value_grad_complex(x, grad)
        }
    }

    fn value_grad_real(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let dim = 1usize << self.l;
        let mut s = vec![1.0 / (dim as f64).sqrt(); dim];
        for o in &self.ops {
            match *o {
                Op::Ry { q, p } => ry_real(&mut s, q, x[p]),
                Op::Diag(k) => s.iter_mut().zip(&self.diags[k]).for_each(|(a, d)| *a *= d),
                Op::Cp { .. } => unreachable!(),
            }
        }
        let mut lam = vec![0.0; dim];
        self.op.apply_real(&s, &mut lam);
        let e: f64 = s.iter().zip(&lam).map(|(a, b)| a * b).sum();
        for o in self.ops.iter().rev() {
            match *o {
                Op::Ry { q, p } => {
                    ry_real(&mut s, q, -x[p]);
                    // d/dθ RY(θ) = RY(θ) (-i Y / 2), a real matrix.
                    let (c, sn) = ((x[p] / 2.0).cos(), (x[p] / 2.0).sin());
                    let stride = 1usize << q;
                    let mut acc = 0.0;
                    for base in (0..dim).step_by(2 * stride) {
                        for i in base..base + stride {
                            let (a, b) = (s[i], s[i + stride]);
                            let d0 = -0.5 * sn * a - 0.5 * c * b;
                            let d1 = 0.5 * c * a - 0.5 * sn * b;
                            acc += lam[i] * d0 + lam[i + stride] * d1;
                        }
                    }
                    grad[p] = 2.0 * acc;
                    ry_real(&mut lam, q, -x[p]);
                }
                Op::Diag(k) => {
                    let d = &self.diags[k];
                    s.iter_mut().zip(d).for_each(|(a, d)| *a *= d);
                    lam.iter_mut().zip(d).for_each(|(a, d)| *a *= d);
                }
                Op::Cp { .. } => unreachable!(),
            }
        }
        e
    }

    fn value_grad_complex(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let dim = 1usize << self.l;
        let (theta, phis) = self.split(x);
        let mut s = vec![Complex64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
        let cp = |v: &mut [Complex64], a: usize, b: usize, phi: f64| {
            let m = (1usize << a) | (1usize << b);
            let ph = Complex64::from_polar(1.0, phi);
            v.iter_mut().enumerate().filter(|(i, _)| i & m == m).for_each(|(_, z)| *z *= ph);
        };
        for o in &self.ops {
            match *o {
                Op::Ry { q, p } => ry_complex(&mut s, q, theta[p]),
                Op::Diag(k) => s.iter_mut().zip(&self.diags[k]).for_each(|(a, d)| *a *= d),
                Op::Cp { a, b, p } => cp(&mut s, a, b, phis[p]),
            }
        }
        let mut lam = vec![Complex64::new(0.0, 0.0); dim];
        self.op.apply(&s, &mut lam);
        let e = lattice::dot(&s, &lam).re;
        for o in self.ops.iter().rev() {
            match *o {
                Op::Ry { q, p } => {
                    ry_complex(&mut s, q, -theta[p]);
                    let (c, sn) = ((theta[p] / 2.0).cos(), (theta[p] / 2.0).sin());
                    let stride = 1usize << q;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for base in (0..dim).step_by(2 * stride) {
                        for i in base..base + stride {
                            let (a, b) = (s[i], s[i + stride]);
                            let d0 = -0.5 * sn * a - 0.5 * c * b;
                            let d1 = 0.5 * c * a - 0.5 * sn * b;
                            acc += lam[i].conj() * d0 + lam[i + stride].conj() * d1;
                        }
                    }
                    grad[p] = 2.0 * acc.re;
                    ry_complex(&mut lam, q, -theta[p]);
                }
                Op::Diag(k) => {
                    let d = &self.diags[k];
                    s.iter_mut().zip(d).for_each(|(a, d)| *a *= d);
                    lam.iter_mut().zip(d).for_each(|(a, d)| *a *= d);
                }
                Op::Cp { a, b, p } => {
                    cp(&mut s, a, b, -phis[p]);
                    let m = (1usize << a) | (1usize << b);
                    let ph = Complex64::from_polar(1.0, phis[p]);
                    let acc: Complex64 = (0..dim).filter(|i| i & m == m).map(|i| lam[i].conj() * Complex64::i() * ph * s[i]).sum();
                    grad[self.n_theta + p] = 2.0 * acc.re;
                    cp(&mut lam, a, b, -phis[p]);
                }
            }
        }
        e
    }
}

fn ry_real(s: &mut [f64], q: usize, t: f64) {
    let (c, sn) = ((t / 2.0).cos(), (t / 2.0).sin());
    let stride = 1usize << q;
    for base in (0..s.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let (a, b) = (s[i], s[i + stride]);
            s[i] = c * a - sn * b;
            s[i + stride] = sn * a + c * b;
        }
    }
}

fn ry_complex(s: &mut [Complex64], q: usize, t: f64) {
    let (c, sn) = ((t / 2.0).cos(), (t / 2.0).sin());
    let stride = 1usize << q;
    for base in (0..s.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let (a, b) = (s[i], s[i + stride]);
            s[i] = c * a - sn * b;
            s[i + stride] = sn * a + c * b;
        }
    }
}

/// `C(θ) = <ψ(θ)|H|ψ(θ)>` for the CZ checkerboard of depth `d`.
pub fn cost(h: &SpinHamiltonian, d: usize, theta: &[f64]) -> Result<f64> {
    Ansatz::new(h, d, false)?.cost(theta)
}

/// `|<ψ|φ>|²`.
pub fn fidelity(psi: &Statevector, phi: &Statevector) -> Result<f64> {
    circuit::fidelity(psi, phi)
}

/// Per-restart RNG: stream `restart` of a ChaCha generator keyed by the seed.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

pub fn optimize(h: &SpinHamiltonian, cfg: &VqeConfig) -> Result<VqeResult> {
    optimize_with_reference(h, cfg, None)
}

/// Best result over `cfg.restarts` independent runs; restarts run in parallel.
pub fn optimize_with_reference(h: &SpinHamiltonian, cfg: &VqeConfig, reference: Option<(f64, &Statevector)>) -> Result<VqeResult> {
    if cfg.max_evals == 0 || cfg.restarts == 0 {
        return Err(Error::Config("max_evals and restarts must be at least 1".into()));
    }
    let ansatz = Ansatz::new(h, cfg.layers, cfg.cp_entanglers)?;
    let runs: Vec<VqeResult> = (0..cfg.restarts).into_par_iter().map(|r| single_run(&ansatz, cfg, r)).collect();
    let mut best = runs
        .into_iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart");
    if let Some((e0, psi0)) = reference {
        best.energy_error = Some(((best.energy - e0) / e0).abs());
        let mut x = best.theta.clone();
        x.extend_from_slice(&best.phis);
        best.fidelity = Some(fidelity(&ansatz.state(&x)?, psi0)?);
    }
    Ok(best)
}

fn single_run(ansatz: &Ansatz, cfg: &VqeConfig, restart: usize) -> VqeResult {
    let mut rng = restart_rng(cfg.seed, restart);
    let x0: Vec<f64> = (0..ansatz.n_params()).map(|_| rng.random_range(-0.1..0.1)).collect();
    let rule = StopRule { max_evals: cfg.max_evals, tol: cfg.tol, window: 50, grad_tol: 1e-12 };
    let mut f = |x: &[f64], g: &mut [f64]| ansatz.value_grad(x, g);
    let m = match cfg.optimizer {
        Optimizer::GradientQuasiNewton => optim::lbfgs(&mut f, &x0, 20, &rule),
        Optimizer::Simplex => optim::nelder_mead(&mut f, &x0, 0.1, &rule),
    };
    let (theta, phis) = m.x.split_at(ansatz.n_theta);
    VqeResult {
        theta: theta.to_vec(),
        phis: phis.to_vec(),
        trace: m.trace.values.iter().copied().enumerate().collect(),
        energy: m.value,
        energy_error: None,
        fidelity: None,
        converged: m.converged,
        restart,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tfi, build_xxz, ground_state, Boundary};

    #[test]
    fn gradient_matches_finite_differences() {
        for h in [build_tfi(6, 1.0, 0.8, Boundary::Periodic).unwrap(), build_xxz(6, -0.5, Boundary::Open).unwrap()] {
            for cp in [false, true] {
                let a = Ansatz::new(&h, 2, cp).unwrap();
                let mut rng = restart_rng(3, 0);
                let x: Vec<f64> = (0..a.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut g = vec![0.0; x.len()];
                a.value_grad(&x, &mut g);
                for i in (0..x.len()).step_by(5) {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += 1e-5;
                    xm[i] -= 1e-5;
                    let fd = (a.cost(&xp).unwrap() - a.cost(&xm).unwrap()) / 2e-5;
                    assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "param {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn cost_matches_circuit_expectation() {
        let h = build_tfi(6, 1.0, 1.0, Boundary::Periodic).unwrap();
        let theta: Vec<f64> = (0..checkerboard_param_count(6, 2)).map(|i| (i as f64 * 0.37).sin()).collect();
        let c = circuit::build_checkerboard(6, 2, &theta, Boundary::Periodic).unwrap();
        let psi = circuit::run(&c, &Statevector::zero(6)).unwrap();
        let e = lattice::expectation(&h, &psi.amps).unwrap();
        assert!((cost(&h, 2, &theta).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn single_qubit_toy() {
        let h = SpinHamiltonian {
            size: 1,
            terms: vec![(-1.0, lattice::PauliString::parse("X").unwrap())],
            boundary: Boundary::Open,
            symmetry: lattice::Symmetry::None,
        };
        let g = ground_state(&h).unwrap();
        let gs = Statevector::from_amps(1, g.state.clone()).unwrap();
        let cfg = VqeConfig { layers: 1, max_evals: 500, ..Default::default() };
        let r = optimize_with_reference(&h, &cfg, Some((g.energy, &gs))).unwrap();
        assert!(r.fidelity.unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn seeded_runs_repeat() {
        let h = build_tfi(4, 1.0, 1.0, Boundary::Open).unwrap();
        let cfg = VqeConfig { layers: 1, max_evals: 200, restarts: 2, seed: 9, ..Default::default() };
        let a = optimize(&h, &cfg).unwrap();
        let b = optimize(&h, &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!(a.best_so_far().windows(2).all(|w| w[1] <= w[0]));
    }
}
