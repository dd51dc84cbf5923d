//! Property checks shared by the property-test harness and the acceptance run.
//! Each check returns `Err(message)` on the first counterexample.

#![allow(dead_code)]

use chargeprobe::cft::{self, Geometry};
use chargeprobe::circuit::{self, Circuit, Gate, Statevector};
use chargeprobe::entropy;
use chargeprobe::krylov::{self, KrylovConfig};
use chargeprobe::lattice::{self, Boundary, PauliOperator, SpinHamiltonian};
use chargeprobe::noise;
use chargeprobe::pipeline::{self, PipelineConfig};
use chargeprobe::postprocess::{self, SymmetrySector};
use chargeprobe::table::{Basis, ProbabilityTable};
use chargeprobe::vqe::{self, VqeConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = fn() -> Result<(), String>;

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("lattice: builders match Kronecker oracle", lattice_kronecker as Check),
        ("lattice: hermitian matvec", lattice_hermitian),
        ("lattice: TFI stoquastic ground state", tfi_stoquastic),
        ("lattice: XXZ conserves Z_tot", xxz_u1),
        ("lattice: TFI spin-flip invariant probabilities", tfi_z2),
        ("circuit: unitarity", circuit_unitarity),
        ("circuit: direct preparation energy", direct_prep_energy),
        ("circuit: Z2-even states have no odd X parity", x_parity_of_even_states),
        ("vqe: variational bound and determinism", vqe_bound_and_determinism),
        ("entropy: Renyi monotone in n", renyi_monotone),
        ("entropy: RDM mirror symmetry", rdm_mirror),
        ("entropy: translation invariance of marginals", marginal_translation),
        ("entropy: Schmidt symmetry", schmidt_symmetry),
        ("entropy: eigenvalue and matrix-power Renyi agree", renyi_matrix_power),
        ("entropy: Shannon bounds entanglement", shannon_bounds_entanglement),
        ("cft: synthetic round trip", cft_round_trip),
        ("cft: slope ignores constant offsets", cft_offset_invariance),
        ("cft: fit error shrinks as 1/sqrt(points)", cft_error_scaling),
        ("noise: Walsh-Hadamard round trip", wh_round_trip),
        ("noise: trajectories match channel map", trajectory_channel_exact),
        ("postprocess: idempotent and sector pure", postprocess_idempotent),
        ("postprocess: cutoff shrinks support", postprocess_shrinkage),
        ("krylov: variational, monotone, stable", krylov_invariants),
        ("pipeline: deterministic summary", pipeline_determinism),
        ("pipeline: preparation swap stays within fidelity budget", pipeline_stage_isolation),
    ]
}

/// Fixed-seed runner so failures reproduce.
fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn finish(r: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pauli_2x2(p: char) -> DMatrix<Complex64> {
    let i = Complex64::i();
    match p {
        'I' => DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(1.0)]),
        'X' => DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
        'Y' => DMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]),
        'Z' => DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
        _ => unreachable!(),
    }
}

/// `P_{L-1} ⊗ ... ⊗ P_0` for the letters `(site, letter)`.
fn kron_string(l: usize, sites: &[(usize, char)]) -> DMatrix<Complex64> {
    let mut m = DMatrix::from_element(1, 1, c(1.0));
    for q in (0..l).rev() {
        let p = sites.iter().find(|s| s.0 == q).map(|s| s.1).unwrap_or('I');
        m = m.kronecker(&pauli_2x2(p));
    }
    m
}

fn bonds(l: usize, b: Boundary) -> Vec<(usize, usize)> {
    let n = if b == Boundary::Open { l - 1 } else { l };
    (0..n).map(|i| (i, (i + 1) % l)).collect()
}

fn oracle_tfi(l: usize, j: f64, h: f64, b: Boundary) -> DMatrix<Complex64> {
    let d = 1 << l;
    let mut m = DMatrix::zeros(d, d);
    for (a, bb) in bonds(l, b) {
        m -= kron_string(l, &[(a, 'Z'), (bb, 'Z')]) * c(j);
    }
    for i in 0..l {
        m -= kron_string(l, &[(i, 'X')]) * c(h);
    }
    m
}

fn oracle_xxz(l: usize, delta: f64, b: Boundary) -> DMatrix<Complex64> {
    let d = 1 << l;
    let mut m = DMatrix::zeros(d, d);
    for (a, bb) in bonds(l, b) {
        m -= kron_string(l, &[(a, 'X'), (bb, 'X')]);
        m -= kron_string(l, &[(a, 'Y'), (bb, 'Y')]);
        m -= kron_string(l, &[(a, 'Z'), (bb, 'Z')]) * c(delta);
    }
    m
}

fn oracle_tricritical(l: usize, j: f64, h: f64, lam: f64, b: Boundary) -> DMatrix<Complex64> {
    let mut m = oracle_tfi(l, j, h, b);
    let n = if b == Boundary::Open { l - 2 } else { l };
    for i in 0..n {
        let (x, y, z) = (i, (i + 1) % l, (i + 2) % l);
        m += kron_string(l, &[(x, 'X'), (y, 'Z'), (z, 'Z')]) * c(lam);
        m += kron_string(l, &[(x, 'Z'), (y, 'Z'), (z, 'X')]) * c(lam);
    }
    m
}

/// Jordan-Wigner image of the quadratic XY ring, written out site by site.
fn oracle_xy(l: usize, gamma: f64, lam: f64) -> DMatrix<Complex64> {
    let d = 1 << l;
    let (a, b) = ((1.0 + gamma) / 2.0, (1.0 - gamma) / 2.0);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..l - 1 {
        m += kron_string(l, &[(i, 'X'), (i + 1, 'X')]) * c(a);
        m += kron_string(l, &[(i, 'Y'), (i + 1, 'Y')]) * c(b);
    }
    for i in 0..l {
        m += kron_string(l, &[(i, 'Z')]) * c(lam);
    }
    let string = |end: char| {
        let sites: Vec<(usize, char)> = (0..l).map(|q| (q, if q == 0 || q == l - 1 { end } else { 'Z' })).collect();
        kron_string(l, &sites)
    };
    m += string('Y') * c(a);
    m += string('X') * c(b);
    m
}

fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn boundary_of(p: bool) -> Boundary {
    if p {
        Boundary::Periodic
    } else {
        Boundary::Open
    }
}

pub fn lattice_kronecker() -> Result<(), String> {
    let strat = (3usize..=6, -2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, any::<bool>());
    finish(runner(24).run(&strat, |(l, j, h, x, p)| {
        let b = boundary_of(p);
        let pairs = [
            (lattice::build_tfi(l, j, h, b).unwrap(), oracle_tfi(l, j, h, b)),
            (lattice::build_xxz(l, x, b).unwrap(), oracle_xxz(l, x, b)),
            (lattice::build_tricritical(l, j, h, x, b).unwrap(), oracle_tricritical(l, j, h, x, b)),
        ];
        for (ham, want) in pairs {
            let e = max_diff(&lattice::dense_matrix(&ham), &want);
            check(e < 1e-12, || format!("L={l} {b:?}: deviation {e}"))?;
        }
        if l % 2 == 0 && l >= 4 {
            let e = max_diff(&lattice::dense_matrix(&lattice::build_xy_fermionic(l, j.abs() / 2.0, h).unwrap()), &oracle_xy(l, j.abs() / 2.0, h));
            check(e < 1e-12, || format!("XY L={l}: deviation {e}"))?;
        }
        Ok(())
    }))
}

fn random_state(rng: &mut ChaCha8Rng, l: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..1 << l).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let n = lattice::norm(&v);
    v.iter_mut().for_each(|a| *a /= n);
    v
}

fn any_model(kind: u8, l: usize, j: f64, h: f64, p: bool) -> SpinHamiltonian {
    let b = boundary_of(p);
    match kind % 4 {
        0 => lattice::build_tfi(l, j, h, b).unwrap(),
        1 => lattice::build_xxz(l, j / 2.0, b).unwrap(),
        2 => lattice::build_tricritical(l, j, h, 0.4, b).unwrap(),
        _ => lattice::build_xy_fermionic(2 * (l / 2).max(2), j.abs().min(1.0), h).unwrap(),
    }
}

pub fn lattice_hermitian() -> Result<(), String> {
    let strat = (0u8..4, 3usize..=8, -2.0..2.0f64, -2.0..2.0f64, any::<bool>(), any::<u64>());
    finish(runner(32).run(&strat, |(k, l, j, h, p, seed)| {
        let ham = any_model(k, l, j, h, p);
        let op = PauliOperator::new(&ham);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (phi, psi) = (random_state(&mut rng, ham.size), random_state(&mut rng, ham.size));
        let mut hphi = vec![Complex64::default(); phi.len()];
        let mut hpsi = hphi.clone();
        op.apply(&phi, &mut hphi);
        op.apply(&psi, &mut hpsi);
        let e = (lattice::dot(&phi, &hpsi) - lattice::dot(&psi, &hphi).conj()).norm();
        check(e < 1e-12, || format!("asymmetry {e}"))
    }))
}

pub fn tfi_stoquastic() -> Result<(), String> {
    let strat = (4usize..=10, 0.2..2.0f64, any::<bool>());
    finish(runner(16).run(&strat, |(l, h, p)| {
        let g = lattice::ground_state(&lattice::build_tfi(l, 1.0, h, boundary_of(p)).unwrap()).unwrap();
        let min = g.state.iter().map(|a| a.re).fold(f64::INFINITY, f64::min);
        let im = g.state.iter().map(|a| a.im.abs()).fold(0.0, f64::max);
        check(min >= -1e-10 && im < 1e-8, || format!("L={l} h={h}: min amplitude {min}, imag {im}"))
    }))
}

fn popcount_sector(v: &[Complex64]) -> Vec<u32> {
    let mut s: Vec<u32> = v.iter().enumerate().filter(|(_, a)| a.norm() > 1e-8).map(|(b, _)| b.count_ones()).collect();
    s.sort();
    s.dedup();
    s
}

pub fn xxz_u1() -> Result<(), String> {
    let strat = (4usize..=10, -0.95..0.95f64, any::<bool>(), any::<u64>());
    finish(runner(16).run(&strat, |(l, delta, p, seed)| {
        let ham = lattice::build_xxz(l, delta, boundary_of(p)).unwrap();
        let op = PauliOperator::new(&ham);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_state(&mut rng, l);
        let ztot = |x: &[Complex64]| -> Vec<Complex64> { x.iter().enumerate().map(|(b, a)| a * (l as f64 - 2.0 * b.count_ones() as f64)).collect() };
        let mut a = vec![Complex64::default(); v.len()];
        let mut b = a.clone();
        op.apply(&ztot(&v), &mut a);
        op.apply(&v, &mut b);
        let b = ztot(&b);
        let e = lattice::norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        check(e < 1e-12, || format!("commutator norm {e}"))?;
        if l % 2 == 0 {
            let g = lattice::ground_state(&ham).unwrap();
            let s = popcount_sector(&g.state);
            check(s.len() == 1, || format!("ground state spans sectors {s:?}"))?;
        }
        Ok(())
    }))
}

pub fn tfi_z2() -> Result<(), String> {
    let strat = (4usize..=10, 0.3..2.0f64, any::<bool>());
    finish(runner(16).run(&strat, |(l, h, p)| {
        let g = lattice::ground_state(&lattice::build_tfi(l, 1.0, h, boundary_of(p)).unwrap()).unwrap();
        let full = (1usize << l) - 1;
        let e = (0..1usize << l).map(|b| (g.state[b].norm_sqr() - g.state[b ^ full].norm_sqr()).abs()).fold(0.0, f64::max);
        check(e < 1e-10, || format!("L={l} h={h}: flip asymmetry {e}"))
    }))
}

fn random_circuit(rng: &mut ChaCha8Rng, l: usize, depth: usize) -> Circuit {
    let mut c = Circuit::new(l);
    for k in 0..depth {
        let mut gates = Vec::new();
        for q in 0..l {
            gates.push(match rng.random_range(0..3) {
                0 => Gate::h(q),
                _ => Gate::ry(q, rng.random_range(-3.0..3.0)),
            });
        }
        c.push_layer(gates, None);
        let off = k % 2;
        let pairs: Vec<Gate> = (off..l.saturating_sub(1))
            .step_by(2)
            .map(|q| if rng.random::<bool>() { Gate::cz(q, q + 1) } else { Gate::cp(q, q + 1, rng.random_range(-3.0..3.0)) })
            .collect();
        c.push_layer(pairs, Some(if off == 0 { "even" } else { "odd" }));
    }
    c
}

pub fn circuit_unitarity() -> Result<(), String> {
    let strat = (1usize..=8, 1usize..6, any::<u64>());
    finish(runner(32).run(&strat, |(l, d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(&mut rng, l, d);
        let psi = Statevector { size: l, amps: random_state(&mut rng, l) };
        let n = circuit::run(&c, &psi).unwrap().norm();
        check((n - 1.0).abs() < 1e-10, || format!("norm {n}"))
    }))
}

pub fn direct_prep_energy() -> Result<(), String> {
    for l in [4, 8] {
        for (gamma, lambda) in [(1.0, 1.0), (1.0, 0.5), (0.5, 0.3), (0.8, 1.4), (0.3, 0.0), (1.0, 2.0)] {
            let ham = lattice::build_xy_fermionic(l, gamma, lambda).map_err(|e| e.to_string())?;
            let c = circuit::build_direct_prep(l, gamma, lambda).map_err(|e| e.to_string())?;
            let psi = circuit::run(&c, &Statevector::zero(l)).map_err(|e| e.to_string())?;
            let e = lattice::expectation(&ham, &psi.amps).map_err(|e| e.to_string())?;
            let e0 = lattice::ground_state(&ham).map_err(|e| e.to_string())?.energy;
            if (e - e0).abs() > 1e-8 {
                return Err(format!("L={l} γ={gamma} λ={lambda}: energy {e} vs {e0}"));
            }
        }
    }
    Ok(())
}

pub fn x_parity_of_even_states() -> Result<(), String> {
    let strat = (2usize..=8, any::<u64>());
    finish(runner(32).run(&strat, |(l, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_state(&mut rng, l);
        let full = (1usize << l) - 1;
        // (1 + Π X)/√2-style symmetrization gives a spin-flip even state.
        let mut even: Vec<Complex64> = (0..v.len()).map(|b| v[b] + v[b ^ full]).collect();
        let n = lattice::norm(&even);
        even.iter_mut().for_each(|a| *a /= n);
        let t = circuit::measure_basis(&Statevector { size: l, amps: even }, Basis::X);
        let odd: f64 = t.weights.iter().enumerate().filter(|(b, _)| b.count_ones() % 2 == 1).map(|(_, w)| w).sum();
        check(odd < 1e-10, || format!("odd weight {odd}"))
    }))
}

pub fn vqe_bound_and_determinism() -> Result<(), String> {
    let strat = (3usize..=6, 0.3..1.7f64, any::<bool>(), any::<u64>());
    finish(runner(6).run(&strat, |(l, h, p, seed)| {
        // Periodic checkerboards pair every site, so the ring length is even.
        let l = if p { l + l % 2 } else { l };
        let ham = lattice::build_tfi(l, 1.0, h, boundary_of(p)).unwrap();
        let e0 = lattice::ground_state(&ham).unwrap().energy;
        let cfg = VqeConfig { layers: 2, restarts: 2, max_evals: 300, seed, ..VqeConfig::default() };
        let a = vqe::optimize(&ham, &cfg).unwrap();
        let b = vqe::optimize(&ham, &cfg).unwrap();
        check(a.energy >= e0 - 1e-9, || format!("energy {} below ground {e0}", a.energy))?;
        check(a.trace.iter().all(|&(_, v)| v >= e0 - 1e-9), || "trace below ground energy".into())?;
        check(a.theta == b.theta, || "seeded runs differ".into())
    }))
}

fn random_table(rng: &mut ChaCha8Rng, l: usize, basis: Basis) -> ProbabilityTable {
    let w: Vec<f64> = (0..1 << l).map(|_| rng.random::<f64>().powi(3)).collect();
    let s: f64 = w.iter().sum();
    ProbabilityTable::new(l, basis, w.into_iter().map(|x| x / s).collect()).unwrap()
}

pub fn renyi_monotone() -> Result<(), String> {
    let strat = (1usize..=8, any::<u64>());
    finish(runner(64).run(&strat, |(l, seed)| {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), l, Basis::Z);
        let s: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|&n| entropy::shannon_renyi(&t, n).unwrap()).collect();
        check(s.windows(2).all(|w| w[1] <= w[0] + 1e-12), || format!("not monotone: {s:?}"))
    }))
}

fn reverse_bits(b: usize, l: usize) -> usize {
    (0..l).filter(|&i| b >> i & 1 == 1).fold(0usize, |acc, i| acc | 1 << (l - 1 - i))
}

fn reverse_sites(t: &ProbabilityTable) -> ProbabilityTable {
    let mut w = vec![0.0; t.weights.len()];
    for (b, &p) in t.weights.iter().enumerate() {
        w[reverse_bits(b, t.size)] = p;
    }
    ProbabilityTable { weights: w, ..t.clone() }
}

pub fn rdm_mirror() -> Result<(), String> {
    let strat = (2usize..=8, any::<u64>(), 0.5..6.0f64);
    finish(runner(64).run(&strat, |(l, seed, n)| {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), l, Basis::Z);
        let r = reverse_sites(&t);
        for a in 1..l {
            let (x, y) = (entropy::rdm(&t, a, n).unwrap(), entropy::rdm(&r, l - a, n).unwrap());
            check((x - y).abs() < 1e-12, || format!("I({a},{}) = {x} but mirrored {y}", l - a))?;
        }
        Ok(())
    }))
}

pub fn marginal_translation() -> Result<(), String> {
    let strat = (4usize..=10, 0.3..1.7f64, 0.5..4.0f64, any::<bool>());
    finish(runner(12).run(&strat, |(l, h, n, xxz)| {
        let ham = if xxz {
            lattice::build_xxz(l, h - 1.0, Boundary::Periodic).unwrap()
        } else {
            lattice::build_tfi(l, 1.0, h, Boundary::Periodic).unwrap()
        };
        let g = lattice::ground_state(&ham).unwrap();
        let t = circuit::measure_basis(&Statevector { size: l, amps: g.state }, Basis::Z);
        for len in 1..l {
            let base = entropy::shannon_renyi(&entropy::marginal(&t, len).unwrap(), n).unwrap();
            for s in 1..l {
                let v = entropy::shannon_renyi(&entropy::marginal(&t.rotate(s), len).unwrap(), n).unwrap();
                check((v - base).abs() < 1e-9, || format!("l={len} shift {s}: {v} vs {base}"))?;
            }
        }
        Ok(())
    }))
}

pub fn schmidt_symmetry() -> Result<(), String> {
    let strat = (2usize..=8, any::<u64>(), 0.5..5.0f64);
    finish(runner(48).run(&strat, |(l, seed, n)| {
        let psi = Statevector { size: l, amps: random_state(&mut ChaCha8Rng::seed_from_u64(seed), l) };
        // Reversing the sites turns the complement [a, L) into [0, L-a).
        let rev = Statevector { size: l, amps: (0..1usize << l).map(|b| psi.amps[reverse_bits(b, l)]).collect() };
        for a in 1..l {
            let (x, y) = (entropy::entanglement_entropy(&psi, a, n).unwrap(), entropy::entanglement_entropy(&rev, l - a, n).unwrap());
            check((x - y).abs() < 1e-9, || format!("S([0,{a})) = {x}, S([{a},{l})) = {y}"))?;
        }
        Ok(())
    }))
}

pub fn renyi_matrix_power() -> Result<(), String> {
    let strat = (2usize..=7, any::<u64>());
    finish(runner(32).run(&strat, |(l, seed)| {
        let psi = Statevector { size: l, amps: random_state(&mut ChaCha8Rng::seed_from_u64(seed), l) };
        let rho = entropy::reduced_density_matrix(&psi, l / 2).unwrap();
        for n in [2u32, 3, 4] {
            let mut p = rho.clone();
            for _ in 1..n {
                p = &p * &rho;
            }
            let direct = p.trace().re.ln() / (1.0 - n as f64);
            let e = entropy::entanglement_renyi(&rho, n as f64).unwrap();
            check((direct - e).abs() < 1e-9, || format!("n={n}: {e} vs {direct}"))?;
        }
        Ok(())
    }))
}

pub fn shannon_bounds_entanglement() -> Result<(), String> {
    let strat = (3usize..=10, 0.3..1.7f64, 0.5..4.0f64, any::<bool>());
    finish(runner(12).run(&strat, |(l, h, n, p)| {
        let g = lattice::ground_state(&lattice::build_tfi(l, 1.0, h, boundary_of(p)).unwrap()).unwrap();
        let psi = Statevector { size: l, amps: g.state };
        let sh = entropy::shannon_renyi(&circuit::measure_basis(&psi, Basis::Z), n).unwrap();
        for a in 1..l {
            let s = entropy::entanglement_entropy(&psi, a, n).unwrap();
            check(sh >= s - 1e-9, || format!("Sh={sh} < S({a})={s}"))?;
        }
        Ok(())
    }))
}

pub fn cft_round_trip() -> Result<(), String> {
    let strat = (8usize..=40, 0.2..2.0f64, -2.0..2.0f64, 0u8..3, 1.5..6.0f64);
    finish(runner(64).run(&strat, |(big, cc, b, g, n)| {
        let geom = [Geometry::Open, Geometry::Periodic, Geometry::Infinite][g as usize];
        let pts = cft::even_points(big);
        let k = cft::prefactor(cft::ScalingKind::Rdm, geom, n) * cc * n / (n - 1.0);
        let vals: Vec<(usize, f64)> = pts.iter().map(|&l| (l, k * cft::chord(big, l, geom).unwrap().ln() + b)).collect();
        let f = cft::fit_rdm(&vals, big, n, geom, 1.0).unwrap();
        check((f.c - cc).abs() < 1e-9 && (f.intercept - b).abs() < 1e-9, || format!("c {} vs {cc}", f.c))?;
        let ke = cft::prefactor(cft::ScalingKind::EntanglementEntropy, geom, n) * cc;
        let vals: Vec<(usize, f64)> = pts.iter().map(|&l| (l, ke * cft::chord(big, l, geom).unwrap().ln() + b)).collect();
        let f = cft::fit_entanglement(&vals, big, n, geom).unwrap();
        check((f.c - cc).abs() < 1e-9, || format!("entanglement c {} vs {cc}", f.c))
    }))
}

pub fn cft_offset_invariance() -> Result<(), String> {
    let strat = (prop::collection::vec(-1.0..1.0f64, 9), -5.0..5.0f64);
    finish(runner(64).run(&strat, |(noise, shift)| {
        let pts: Vec<(usize, f64)> = (1..10).map(|l| (l, 0.3 * (l as f64).ln() + noise[l - 1] * 0.05)).collect();
        let shifted: Vec<(usize, f64)> = pts.iter().map(|&(l, v)| (l, v + shift)).collect();
        let a = cft::fit_rdm(&pts, 10, 2.0, Geometry::Periodic, 1.0).unwrap();
        let b = cft::fit_rdm(&shifted, 10, 2.0, Geometry::Periodic, 1.0).unwrap();
        check((a.c - b.c).abs() < 1e-10 && (a.sigma_fit - b.sigma_fit).abs() < 1e-10, || format!("{} vs {}", a.c, b.c))?;
        check((b.intercept - a.intercept - shift).abs() < 1e-9, || "intercept did not absorb the offset".into())
    }))
}

/// Mean fit error with a 12-point design versus the same design repeated four
/// times; the ratio should be close to 2.
pub fn cft_error_scaling() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
    let mean_sigma = |copies: usize, rng: &mut ChaCha8Rng| {
        let reps = 400;
        let mut acc = 0.0;
        for _ in 0..reps {
            let vals: Vec<(usize, f64)> = (0..12 * copies)
                .map(|i| {
                    let l = 1 + (i % 12) * 16;
                    (l, 0.25 * (l as f64).ln() + rand_distr::Distribution::sample(&normal, rng))
                })
                .collect();
            acc += cft::fit_rdm(&vals, 400, 2.0, Geometry::Infinite, 1.0).unwrap().sigma_fit;
        }
        acc / reps as f64
    };
    let (a, b) = (mean_sigma(1, &mut rng), mean_sigma(4, &mut rng));
    let r = a / b;
    if (r - 2.0).abs() < 0.3 {
        Ok(())
    } else {
        Err(format!("σ(12)/σ(48) = {r}"))
    }
}

pub fn wh_round_trip() -> Result<(), String> {
    let strat = (1usize..=10, any::<u64>());
    finish(runner(48).run(&strat, |(l, seed)| {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), l, Basis::Z);
        let mut e = noise::z_expectations(&t);
        e[0] = 1.0;
        let back = noise::walsh_hadamard_probs(&e, l).unwrap();
        let d = back.weights.iter().zip(&t.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(d < 1e-12, || format!("round trip error {d}"))
    }))
}

/// Exact channel application on a density matrix.
pub fn exact_noisy_rho(c: &Circuit, model: &noise::NoiseModel, input: &Statevector) -> DMatrix<Complex64> {
    let l = c.size;
    let d = 1 << l;
    let v = nalgebra::DVector::from_vec(input.amps.clone());
    let mut rho = &v * v.adjoint();
    let unitary_of = |gates: &[Gate]| {
        let mut u = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = vec![Complex64::default(); d];
            e[j] = c_one();
            for g in gates {
                g.apply(&mut e);
            }
            u.set_column(j, &nalgebra::DVector::from_vec(e));
        }
        u
    };
    let pauli_of = |p: &lattice::PauliString| {
        let sites: Vec<(usize, char)> = p.letters().iter().enumerate().map(|(q, x)| (q, x.as_char())).collect();
        kron_string(l, &sites)
    };
    for layer in &c.layers {
        let u = unitary_of(&layer.gates);
        rho = &u * rho * u.adjoint();
        if let Some(tag) = &layer.tag {
            for ch in &model.layers[tag] {
                let p = pauli_of(&ch.pauli);
                rho = rho.scale(ch.beta) + (&p * &rho * &p).scale(1.0 - ch.beta);
            }
        }
    }
    rho
}

fn c_one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

pub fn toy_circuit() -> (Circuit, noise::NoiseModel) {
    use chargeprobe::lattice::PauliString;
    let mut c = Circuit::new(3);
    c.push_layer(vec![Gate::h(0), Gate::ry(1, 0.7), Gate::ry(2, -1.1)], None);
    c.push_layer(vec![Gate::cz(0, 1)], Some("a"));
    c.push_layer(vec![Gate::ry(0, 0.4), Gate::h(1), Gate::ry(2, 0.9)], None);
    c.push_layer(vec![Gate::cz(1, 2)], Some("b"));
    c.push_layer(vec![Gate::ry(0, -0.3), Gate::ry(1, 1.3), Gate::h(2)], None);
    c.push_layer(vec![Gate::cz(0, 1)], Some("a"));
    let mut m = noise::NoiseModel::new();
    m.add("a", PauliString::parse("XZI").unwrap(), 0.93).unwrap();
    m.add("a", PauliString::parse("IYI").unwrap(), 0.96).unwrap();
    m.add("b", PauliString::parse("IXX").unwrap(), 0.9).unwrap();
    m.add("b", PauliString::parse("ZII").unwrap(), 0.97).unwrap();
    (c, m)
}

/// Trajectory-averaged density matrix against the exact channel map, 10^5
/// trajectories, every entry within 5 standard errors.
pub fn trajectory_channel_exact() -> Result<(), String> {
    let (c, m) = toy_circuit();
    let input = Statevector::zero(3);
    let exact = exact_noisy_rho(&c, &m, &input);
    let n = 100_000u64;
    let d = 8;
    let mut sum = DMatrix::<Complex64>::zeros(d, d);
    let mut sq = DMatrix::<f64>::zeros(d, d);
    for s in 0..n {
        let psi = noise::simulate_noisy(&c, &m, &input, s).map_err(|e| e.to_string())?;
        for i in 0..d {
            for j in 0..d {
                let x = psi.amps[i] * psi.amps[j].conj();
                sum[(i, j)] += x;
                sq[(i, j)] += x.norm_sqr();
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            let mean = sum[(i, j)] / n as f64;
            let var = (sq[(i, j)] / n as f64 - mean.norm_sqr()).max(0.0);
            let se = (var / n as f64).sqrt().max(1e-12);
            let dev = (mean - exact[(i, j)]).norm();
            if dev > 5.0 * se + 1e-12 {
                return Err(format!("ρ[{i},{j}] off by {dev:.3e} with standard error {se:.3e}"));
            }
        }
    }
    Ok(())
}

fn noisy_raw_table(rng: &mut ChaCha8Rng, l: usize, basis: Basis, scale: f64) -> ProbabilityTable {
    let t = random_table(rng, l, basis);
    let w: Vec<f64> = t.weights.iter().map(|&p| p + scale * rng.random_range(-1.0..1.0) / (1 << l) as f64).collect();
    let s: f64 = w.iter().sum();
    ProbabilityTable::raw(l, basis, w.into_iter().map(|x| x / s).collect()).unwrap()
}

pub fn postprocess_idempotent() -> Result<(), String> {
    let strat = (2usize..=8, any::<u64>(), 0u8..3, prop::collection::vec(0.0..0.6f64, 1..5));
    finish(runner(64).run(&strat, |(l, seed, k, scales)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sector, basis) = match k {
            0 => (SymmetrySector::EvenParity, Basis::X),
            1 if l % 2 == 0 => (SymmetrySector::HalfFilling, Basis::Z),
            _ => (SymmetrySector::None, Basis::Z),
        };
        let raw: Vec<ProbabilityTable> = scales.iter().map(|&s| noisy_raw_table(&mut rng, l, basis, s)).collect();
        let Ok((once, _)) = postprocess::process_tables(&raw, sector, None) else { return Ok(()) };
        for t in &once {
            check(t.normalized && !t.has_negative(), || "output not a distribution".into())?;
            let outside: f64 = t.weights.iter().enumerate().filter(|(b, _)| !sector.contains(*b, l)).map(|(_, w)| w.abs()).sum();
            check(outside == 0.0, || format!("weight {outside} outside sector"))?;
        }
        let (twice, cut) = postprocess::process_tables(&once, sector, None).unwrap();
        check(cut == 0.0 && twice == once, || "second pass changed the tables".into())
    }))
}

pub fn postprocess_shrinkage() -> Result<(), String> {
    let strat = (2usize..=8, any::<u64>(), 0.0..0.8f64, 0.0..0.2f64);
    finish(runner(64).run(&strat, |(l, seed, scale, cut)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = noisy_raw_table(&mut rng, l, Basis::Z, scale);
        let cut = cut / (1 << l) as f64;
        let Ok(out) = postprocess::cutoff_renormalize(&t, cut) else { return Ok(()) };
        for (b, (&o, &p)) in out.weights.iter().zip(&t.weights).enumerate() {
            check(o == 0.0 || p > 0.0, || format!("entry {b} gained support"))?;
        }
        Ok(())
    }))
}

pub fn krylov_invariants() -> Result<(), String> {
    let strat = (4usize..=8, 0.3..1.7f64, any::<bool>(), 5usize..16);
    finish(runner(8).run(&strat, |(l, h, p, r)| {
        let ham = lattice::build_tfi(l, 1.0, h, boundary_of(p)).unwrap();
        let e0 = lattice::ground_state(&ham).unwrap().energy;
        let cfg = KrylovConfig { order: r, ..KrylovConfig::default() };
        let (res, _) = krylov::krylov_ground_state(&ham, &cfg).unwrap();
        let herm = |m: &DMatrix<Complex64>| (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        check(herm(&res.t) < 1e-10 && herm(&res.s) < 1e-10, || "T or S not hermitian".into())?;
        let smin = res.s.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        check(smin > -1e-10, || format!("S has eigenvalue {smin}"))?;
        check(res.energy >= e0 - 1e-9, || format!("GEVP energy {} below {e0}", res.energy))?;
        let eo = &res.energy_by_order;
        check(eo.iter().all(|&e| e >= e0 - 1e-9), || "order energies below ground".into())?;
        check(eo.windows(2).all(|w| w[1] <= w[0] + 1e-10), || format!("not monotone: {eo:?}"))?;
        let half = KrylovConfig { order: r, eps_s: 5e-11, ..KrylovConfig::default() };
        let (res2, _) = krylov::krylov_ground_state(&ham, &half).unwrap();
        let last = |v: &[f64]| *v.last().unwrap();
        if last(eo) - e0 < 1e-6 {
            check((last(&res2.energy_by_order) - last(eo)).abs() < 1e-8, || "regularization changed the converged energy".into())?;
        }
        Ok(())
    }))
}

pub fn temp_dir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("chargeprobe-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

pub fn pipeline_determinism() -> Result<(), String> {
    let out = temp_dir("determinism");
    let mk = |noisy: bool| {
        let noise = if noisy { "[noise]\ngamma_per_qubit = 1.05\n[bootstrap]\nresamples = 4\nper_resample = 40\n" } else { "" };
        format!(
            "seed = 5\noutput = {out:?}\n[model]\nkind = \"tfi\"\nsize = 6\nboundary = \"periodic\"\n[preparation]\nmethod = \"vqe\"\nlayers = 2\nrestarts = 2\nmax_evals = 200\n[measurement]\nbases = [\"X\", \"Z\"]\nmoments = [2.0, 3.0]\npoints = [1, 2, 3, 4, 5]\nsamples = 60\nshots = 20\n{noise}"
        )
    };
    for noisy in [false, true] {
        let cfg = PipelineConfig::from_toml(&mk(noisy)).map_err(|e| e.to_string())?;
        let a = pipeline::run(&cfg).map_err(|e| e.to_string())?;
        let b = pipeline::run(&cfg).map_err(|e| e.to_string())?;
        let read = |d: &std::path::Path| std::fs::read(d.join("summary.json")).unwrap();
        if read(&a.dir) != read(&b.dir) {
            return Err(format!("summaries differ (noisy = {noisy})"));
        }
    }
    Ok(())
}

/// Replacing exact diagonalization by a good variational state moves the
/// fitted central charges by no more than the state's infidelity allows.
pub fn pipeline_stage_isolation() -> Result<(), String> {
    let out = temp_dir("isolation");
    let mk = |prep: &str| {
        format!(
            "seed = 2\noutput = {out:?}\n[model]\nkind = \"tfi\"\nsize = 8\nboundary = \"periodic\"\n{prep}[measurement]\nbases = [\"X\"]\nmoments = [2.0, 4.0]\npoints = [1, 2, 3, 4]\n"
        )
    };
    let ed = pipeline::run(&PipelineConfig::from_toml(&mk("")).unwrap()).map_err(|e| e.to_string())?;
    let vq = pipeline::run(&PipelineConfig::from_toml(&mk("[preparation]\nmethod = \"vqe\"\nlayers = 4\nrestarts = 2\nmax_evals = 3000\n")).unwrap())
        .map_err(|e| e.to_string())?;
    let f = vq.summary.preparation.fidelity.ok_or("no fidelity reported")?;
    // Probabilities move by at most the trace distance sqrt(1-F); the factor
    // covers its propagation through logarithms and the fit.
    let budget = 10.0 * (1.0 - f).sqrt();
    for (a, b) in ed.summary.bases[0].moments.iter().zip(&vq.summary.bases[0].moments) {
        if (a.c - b.c).abs() > budget.max(1e-6) {
            return Err(format!("n={}: c moved {} with fidelity {f}", a.n, (a.c - b.c).abs()));
        }
    }
    Ok(())
}
