//! Statevector simulation, the checkerboard ansatz and the free-fermion
//! preparation circuit.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::lattice::{self, Boundary};
use crate::table::{bitstring, Basis, ProbabilityTable};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    pub size: usize,
    pub amps: Vec<Complex64>,
}

impl Statevector {
    pub fn zero(size: usize) -> Self {
        let mut amps = vec![C0; 1 << size];
        amps[0] = C1;
        Statevector { size, amps }
    }

    pub fn plus(size: usize) -> Self {
        let n = 1usize << size;
        Statevector { size, amps: vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n] }
    }

    pub fn from_amps(size: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << size {
            return Err(Error::DimensionMismatch { expected: 1 << size, got: amps.len() });
        }
        Ok(Statevector { size, amps })
    }

    pub fn norm(&self) -> f64 {
        lattice::norm(&self.amps)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        self.amps.iter_mut().for_each(|a| *a /= n);
    }

    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        if self.size != other.size {
            return Err(Error::DimensionMismatch { expected: self.amps.len(), got: other.amps.len() });
        }
        Ok(lattice::dot(&self.amps, &other.amps))
    }
}

/// `|<ψ|φ>|²`.
pub fn fidelity(psi: &Statevector, phi: &Statevector) -> Result<f64> {
    Ok(psi.inner(phi)?.norm_sqr())
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    H,
    RY(f64),
    CZ,
    CP(f64),
    /// 4×4 matrix, row-major, basis index `b(q0) + 2 b(q1)`.
    Unitary(Box<[[Complex64; 4]; 4]>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl Gate {
    pub fn h(q: usize) -> Self {
        Gate { kind: GateKind::H, targets: vec![q] }
    }
    pub fn ry(q: usize, theta: f64) -> Self {
        Gate { kind: GateKind::RY(theta), targets: vec![q] }
    }
    pub fn cz(a: usize, b: usize) -> Self {
        Gate { kind: GateKind::CZ, targets: vec![a, b] }
    }
    pub fn cp(a: usize, b: usize, phi: f64) -> Self {
        Gate { kind: GateKind::CP(phi), targets: vec![a, b] }
    }
    pub fn unitary(a: usize, b: usize, m: [[Complex64; 4]; 4]) -> Self {
        Gate { kind: GateKind::Unitary(Box::new(m)), targets: vec![a, b] }
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            GateKind::H | GateKind::RY(_) => 1,
            _ => 2,
        }
    }

    fn validate(&self, l: usize) -> Result<()> {
        if self.targets.len() != self.arity() {
            return Err(Error::Layout(format!("gate {:?} has {} targets", self.kind, self.targets.len())));
        }
        if self.targets.iter().any(|&q| q >= l) {
            return Err(Error::Layout(format!("target out of range in {:?}", self.targets)));
        }
        if self.targets.len() == 2 && self.targets[0] == self.targets[1] {
            return Err(Error::Layout("repeated target".into()));
        }
        if let GateKind::Unitary(m) = &self.kind {
            if unitarity_error(m) > 1e-10 {
                return Err(Error::Layout("two-qubit matrix is not unitary".into()));
            }
        }
        Ok(())
    }

    /// Apply to a raw amplitude buffer.
    pub fn apply(&self, amps: &mut [Complex64]) {
        match &self.kind {
            GateKind::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                apply_1q(amps, self.targets[0], [[s, s], [s, -s]].map(|r| r.map(|x| Complex64::new(x, 0.0))));
            }
            GateKind::RY(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                apply_1q(amps, self.targets[0], [[c, -s], [s, c]].map(|r| r.map(|x| Complex64::new(x, 0.0))));
            }
            GateKind::CZ => {
                let m = (1usize << self.targets[0]) | (1usize << self.targets[1]);
                for (b, a) in amps.iter_mut().enumerate() {
                    if b & m == m {
                        *a = -*a;
                    }
                }
            }
            GateKind::CP(phi) => {
                let m = (1usize << self.targets[0]) | (1usize << self.targets[1]);
                let ph = Complex64::from_polar(1.0, *phi);
                for (b, a) in amps.iter_mut().enumerate() {
                    if b & m == m {
                        *a *= ph;
                    }
                }
            }
            GateKind::Unitary(u) => apply_2q(amps, self.targets[0], self.targets[1], u),
        }
    }
}

fn unitarity_error(m: &[[Complex64; 4]; 4]) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let s: Complex64 = (0..4).map(|k| m[k][i].conj() * m[k][j]).sum();
            let target = if i == j { C1 } else { C0 };
            err = err.max((s - target).norm());
        }
    }
    err
}

fn apply_1q(amps: &mut [Complex64], q: usize, m: [[Complex64; 2]; 2]) {
    let stride = 1usize << q;
    for base in (0..amps.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let (a, b) = (amps[i], amps[i + stride]);
            amps[i] = m[0][0] * a + m[0][1] * b;
            amps[i + stride] = m[1][0] * a + m[1][1] * b;
        }
    }
}

fn apply_2q(amps: &mut [Complex64], q0: usize, q1: usize, m: &[[Complex64; 4]; 4]) {
    let (m0, m1) = (1usize << q0, 1usize << q1);
    for b in 0..amps.len() {
        if b & (m0 | m1) != 0 {
            continue;
        }
        let idx = [b, b | m0, b | m1, b | m0 | m1];
        let v = idx.map(|i| amps[i]);
        for r in 0..4 {
            amps[idx[r]] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layer {
    pub gates: Vec<Gate>,
    pub tag: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub size: usize,
    pub layers: Vec<Layer>,
}

impl Circuit {
    pub fn new(size: usize) -> Self {
        Circuit { size, layers: Vec::new() }
    }

    pub fn push_layer(&mut self, gates: Vec<Gate>, tag: Option<&str>) {
        self.layers.push(Layer { gates, tag: tag.map(str::to_string) });
    }

    /// Append a gate to the earliest untagged layer after every layer touching
    /// its qubits.
    pub fn push_asap(&mut self, gate: Gate) {
        let mut slot = 0;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let busy = layer.tag.is_some() || layer.gates.iter().any(|g| g.targets.iter().any(|q| gate.targets.contains(q)));
            if busy {
                slot = i + 1;
                break;
            }
        }
        if slot == self.layers.len() {
            self.layers.push(Layer::default());
        }
        self.layers[slot].gates.push(gate);
    }

    pub fn gate_count(&self) -> usize {
        self.layers.iter().map(|l| l.gates.len()).sum()
    }

    pub fn two_qubit_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.gates).filter(|g| g.arity() == 2).count()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            let mut used = 0u64;
            for g in &layer.gates {
                g.validate(self.size)?;
                for &q in &g.targets {
                    if used >> q & 1 == 1 {
                        return Err(Error::Layout(format!("layer {i} touches qubit {q} twice")));
                    }
                    used |= 1 << q;
                }
            }
        }
        Ok(())
    }

    /// Line-oriented text form: `LAYER [tag]` separators and one
    /// `GATE q0 [q1] [param]` line per gate.
    pub fn to_text(&self) -> String {
        let mut s = format!("QUBITS {}\n", self.size);
        for layer in &self.layers {
            match &layer.tag {
                Some(t) => writeln!(s, "LAYER {t}").unwrap(),
                None => s.push_str("LAYER\n"),
            }
            for g in &layer.gates {
                let t = &g.targets;
                match &g.kind {
                    GateKind::H => writeln!(s, "H {}", t[0]),
                    GateKind::RY(x) => writeln!(s, "RY {} {:?}", t[0], x),
                    GateKind::CZ => writeln!(s, "CZ {} {}", t[0], t[1]),
                    GateKind::CP(x) => writeln!(s, "CP {} {} {:?}", t[0], t[1], x),
                    GateKind::Unitary(m) => {
                        let vals: Vec<String> = m.iter().flatten().flat_map(|c| [format!("{:?}", c.re), format!("{:?}", c.im)]).collect();
                        writeln!(s, "U4 {} {} {}", t[0], t[1], vals.join(" "))
                    }
                }
                .unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut size = None;
        let mut layers: Vec<Layer> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: '{}'", no + 1, raw));
            let q = |i: usize| tok.get(i).and_then(|t| t.parse::<usize>().ok()).ok_or_else(bad);
            let f = |i: usize| tok.get(i).and_then(|t| t.parse::<f64>().ok()).ok_or_else(bad);
            let gate = match tok[0] {
                "QUBITS" => {
                    size = Some(q(1)?);
                    continue;
                }
                "LAYER" => {
                    layers.push(Layer { gates: Vec::new(), tag: tok.get(1).map(|s| s.to_string()) });
                    continue;
                }
                "H" => Gate::h(q(1)?),
                "RY" => Gate::ry(q(1)?, f(2)?),
                "CZ" => Gate::cz(q(1)?, q(2)?),
                "CP" => Gate::cp(q(1)?, q(2)?, f(3)?),
                "U4" => {
                    let mut m = [[C0; 4]; 4];
                    for r in 0..4 {
                        for c in 0..4 {
                            let k = 3 + 2 * (4 * r + c);
                            m[r][c] = Complex64::new(f(k)?, f(k + 1)?);
                        }
                    }
                    Gate::unitary(q(1)?, q(2)?, m)
                }
                _ => return Err(bad()),
            };
            match layers.last_mut() {
                Some(l) => l.gates.push(gate),
                None => layers.push(Layer { gates: vec![gate], tag: None }),
            }
        }
        let size = size.ok_or_else(|| Error::Parse("missing QUBITS line".into()))?;
        let c = Circuit { size, layers };
        c.validate()?;
        Ok(c)
    }
}

/// Apply every layer in order to a copy of `input`.
pub fn run(circuit: &Circuit, input: &Statevector) -> Result<Statevector> {
    if circuit.size != input.size {
        return Err(Error::DimensionMismatch { expected: 1 << circuit.size, got: input.amps.len() });
    }
    circuit.validate()?;
    let mut out = input.clone();
    for layer in &circuit.layers {
        for g in &layer.gates {
            g.apply(&mut out.amps);
        }
    }
    Ok(out)
}

/// Two-qubit entangler used by the checkerboard ansatz.
#[derive(Clone, Debug, PartialEq)]
pub enum Entangler {
    Cz,
    /// Controlled phase with one angle per two-qubit gate, in circuit order.
    Cp(Vec<f64>),
}

/// Bond sets (even, odd) of the checkerboard; the odd set wraps under
/// periodic boundaries.
pub fn checkerboard_bonds(l: usize, boundary: Boundary) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    if l == 0 {
        return Err(Error::InvalidSize("checkerboard needs L >= 1".into()));
    }
    let even: Vec<_> = (0..l - 1).step_by(2).map(|i| (i, i + 1)).collect();
    let mut odd: Vec<_> = (1..l - 1).step_by(2).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Periodic && l > 2 {
        if l % 2 == 1 {
            return Err(Error::InvalidSize("periodic checkerboard needs even L".into()));
        }
        odd.push((l - 1, 0));
    }
    Ok((even, odd))
}

pub fn checkerboard_param_count(l: usize, d: usize) -> usize {
    l * (2 * d + 1)
}

/// Index of θ(layer, site, slot); the final wall is `layer = d, slot = 0`.
pub fn checkerboard_index(l: usize, layer: usize, site: usize, slot: usize) -> usize {
    layer * 2 * l + slot * l + site
}

pub fn build_checkerboard(l: usize, d: usize, theta: &[f64], boundary: Boundary) -> Result<Circuit> {
    build_checkerboard_with(l, d, theta, boundary, &Entangler::Cz)
}

/// H wall, then `d` blocks of (RY wall, even entanglers, RY wall, odd
/// entanglers), then a final RY wall. Entangler layers are tagged `even` and
/// `odd`.
pub fn build_checkerboard_with(l: usize, d: usize, theta: &[f64], boundary: Boundary, ent: &Entangler) -> Result<Circuit> {
    let expected = checkerboard_param_count(l, d);
    if theta.len() != expected {
        return Err(Error::ParameterCount { expected, got: theta.len() });
    }
    let (even, odd) = checkerboard_bonds(l, boundary)?;
    if let Entangler::Cp(phis) = ent {
        let need = d * (even.len() + odd.len());
        if phis.len() != need {
            return Err(Error::ParameterCount { expected: need, got: phis.len() });
        }
    }
    let mut c = Circuit::new(l);
    c.push_layer((0..l).map(Gate::h).collect(), None);
    let mut k = 0usize;
    let mut two = |bonds: &[(usize, usize)]| -> Vec<Gate> {
        bonds
            .iter()
            .map(|&(a, b)| match ent {
                Entangler::Cz => Gate::cz(a, b),
                Entangler::Cp(phis) => {
                    k += 1;
                    Gate::cp(a, b, phis[k - 1])
                }
            })
            .collect()
    };
    for layer in 0..d {
        for (slot, bonds, tag) in [(0, &even, "even"), (1, &odd, "odd")] {
            let wall = (0..l).map(|s| Gate::ry(s, theta[checkerboard_index(l, layer, s, slot)])).collect();
            c.push_layer(wall, None);
            c.push_layer(two(bonds), Some(tag));
        }
    }
    c.push_layer((0..l).map(|s| Gate::ry(s, theta[checkerboard_index(l, d, s, 0)])).collect(), None);
    Ok(c)
}

/// Two-mode fermionic gate on adjacent Jordan-Wigner wires whose one-particle
/// block is `g` (columns: wire `q0` occupied, wire `q1` occupied).
fn fermionic_block(g: [[Complex64; 2]; 2]) -> [[Complex64; 4]; 4] {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let mut m = [[C0; 4]; 4];
    m[0][0] = C1;
    m[1][1] = g[0][0];
    m[1][2] = g[0][1];
    m[2][1] = g[1][0];
    m[2][2] = g[1][1];
    m[3][3] = det;
    m
}

/// Sign correction carried by the fermionic swap on the doubly occupied state.
pub const FSWAP_PHASE: [f64; 4] = [1.0, 1.0, 1.0, -1.0];

/// Fermionic swap: `SWAP · diag(1, 1, 1, -1)`.
pub fn fswap_matrix() -> [[Complex64; 4]; 4] {
    fermionic_block([[C0, C1], [C1, C0]])
}

/// Fourier butterfly with twiddle `alpha`.
pub fn fourier_matrix(alpha: Complex64) -> [[Complex64; 4]; 4] {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    fermionic_block([[s, s * alpha], [s, -s * alpha]])
}

/// Bogoliubov rotation mixing `|00>` and `|11>` by angle `theta`.
pub fn bogoliubov_matrix(theta: f64) -> [[Complex64; 4]; 4] {
    let (c, s) = (Complex64::new(theta.cos(), 0.0), Complex64::new(0.0, theta.sin()));
    let mut m = [[C0; 4]; 4];
    m[0][0] = c;
    m[0][3] = s;
    m[3][0] = s;
    m[3][3] = c;
    m[1][1] = C1;
    m[2][2] = C1;
    m
}

/// Bogoliubov angle `θ_k` for the XY chain.
pub fn bogoliubov_theta(l: usize, gamma: f64, lambda: f64, k: i64) -> f64 {
    let phi = 2.0 * PI * k as f64 / l as f64;
    let w = lattice::xy_omega(l, gamma, lambda, k);
    if w == 0.0 {
        return 0.0;
    }
    ((-lambda + phi.cos()) / w).clamp(-1.0, 1.0).acos()
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

struct Router {
    circuit: Circuit,
    wires: Vec<usize>,
}

impl Router {
    fn fswap(&mut self, p: usize) {
        self.circuit.push_asap(Gate::unitary(p, p + 1, fswap_matrix()));
        self.wires.swap(p, p + 1);
    }

    fn wire_of(&self, mode: usize) -> usize {
        self.wires.iter().position(|&m| m == mode).unwrap()
    }
}

/// Circuit taking `|0…0>` to the ground state of [`lattice::build_xy_fermionic`].
///
/// Wires start out holding momentum modes in bit-reversed order. Unpaired modes
/// `k = 0, L/2` are filled if their energy is negative, each `(k, -k)` pair is
/// rotated by a Bogoliubov gate after fermionic swaps bring the partners
/// together, and a radix-2 fermionic Fourier network maps momentum modes back
/// to sites.
pub fn build_direct_prep(l: usize, gamma: f64, lambda: f64) -> Result<Circuit> {
    if l < 4 || !l.is_power_of_two() {
        return Err(Error::InvalidSize(format!("direct preparation needs L a power of two >= 4, got {l}")));
    }
    let bits = l.trailing_zeros();
    let mut r = Router { circuit: Circuit::new(l), wires: (0..l).map(|w| bit_reverse(w, bits)).collect() };

    // A zero-energy unpaired mode is filled only when that keeps the overall
    // Z parity even.
    let mut filled = Vec::new();
    let mut zero = None;
    for k in [0, l / 2] {
        let phi = 2.0 * PI * k as f64 / l as f64;
        let (empty, full) = (lambda, 2.0 * phi.cos() - lambda);
        if full < empty - 1e-12 {
            filled.push(k);
        } else if full <= empty + 1e-12 {
            zero = Some(k);
        }
    }
    if let (1, Some(k)) = (filled.len(), zero) {
        filled.push(k);
    }
    for k in filled {
        let w = r.wire_of(k);
        r.circuit.push_asap(Gate::ry(w, PI));
    }

    for k in 1..l / 2 {
        let partner = l - k;
        let mut moves = Vec::new();
        let a = r.wire_of(k);
        let mut b = r.wire_of(partner);
        while b > a + 1 {
            r.fswap(b - 1);
            moves.push(b - 1);
            b -= 1;
        }
        while b < a {
            r.fswap(b);
            moves.push(b);
            b += 1;
        }
        let a = r.wire_of(k);
        debug_assert_eq!(r.wire_of(partner), a + 1);
        let theta = bogoliubov_theta(l, gamma, lambda, k as i64);
        r.circuit.push_asap(Gate::unitary(a, a + 1, bogoliubov_matrix(theta / 2.0)));
        for &p in moves.iter().rev() {
            r.fswap(p);
        }
    }

    let mut m = 2;
    while m <= l {
        let h = m / 2;
        for base in (0..l).step_by(m) {
            let mut moves = Vec::new();
            for j in 0..h {
                let (src, dst) = (base + h + j, base + 2 * j + 1);
                for p in (dst..src).rev() {
                    r.fswap(p);
                    moves.push(p);
                }
            }
            for j in 0..h {
                let alpha = Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64);
                r.circuit.push_asap(Gate::unitary(base + 2 * j, base + 2 * j + 1, fourier_matrix(alpha)));
            }
            for &p in moves.iter().rev() {
                r.fswap(p);
            }
        }
        m *= 2;
    }
    Ok(r.circuit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateCost {
    pub two_qubit_blocks: usize,
    pub cnot_equivalent: usize,
}

/// Closed-form budget: `L²` two-qubit blocks, three CNOTs each.
pub fn direct_prep_cost(l: usize) -> GateCost {
    GateCost { two_qubit_blocks: l * l, cnot_equivalent: 3 * l * l }
}

/// Outcome probabilities in the Z basis, or in the X basis after an H wall.
pub fn measure_basis(psi: &Statevector, basis: Basis) -> ProbabilityTable {
    let mut amps = psi.amps.clone();
    if basis == Basis::X {
        for q in 0..psi.size {
            Gate::h(q).apply(&mut amps);
        }
    }
    let weights = amps.iter().map(|a| a.norm_sqr()).collect();
    ProbabilityTable { size: psi.size, basis, weights, normalized: true }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountTable {
    pub size: usize,
    pub basis: Basis,
    pub counts: BTreeMap<usize, u64>,
}

impl CountTable {
    pub fn shots(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bitstring,count")?;
        for (&b, &c) in &self.counts {
            writeln!(w, "{},{}", bitstring(b, self.size), c)?;
        }
        Ok(())
    }

    pub fn to_table(&self) -> Result<ProbabilityTable> {
        let n = self.shots() as f64;
        if n == 0.0 {
            return Err(Error::Degenerate("empty count table".into()));
        }
        let mut w = vec![0.0; 1 << self.size];
        for (&b, &c) in &self.counts {
            w[b] = c as f64 / n;
        }
        Ok(ProbabilityTable { size: self.size, basis: self.basis, weights: w, normalized: true })
    }
}

/// Multinomial sample by sequential conditional binomials.
pub fn sample_counts(table: &ProbabilityTable, shots: u64, seed: u64) -> Result<CountTable> {
    if table.has_negative() {
        return Err(Error::Degenerate("negative weights must be post-processed before sampling".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut left = shots;
    let mut mass: f64 = table.sum();
    let mut counts = BTreeMap::new();
    for (b, &p) in table.weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let q = if mass <= 0.0 { 1.0 } else { (p / mass).clamp(0.0, 1.0) };
        let n = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).map_err(|e| Error::Degenerate(e.to_string()))?.sample(&mut rng)
        };
        if n > 0 {
            counts.insert(b, n);
        }
        left -= n;
        mass -= p;
    }
    Ok(CountTable { size: table.size, basis: table.basis, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_xy_fermionic, ground_state};

    #[test]
    fn hadamard_wall_gives_uniform() {
        let mut c = Circuit::new(3);
        c.push_layer((0..3).map(Gate::h).collect(), None);
        let out = run(&c, &Statevector::zero(3)).unwrap();
        assert!(out.amps.iter().all(|a| (a.re - (0.125f64).sqrt()).abs() < 1e-15));
    }

    #[test]
    fn overlapping_layer_rejected() {
        let mut c = Circuit::new(3);
        c.push_layer(vec![Gate::cz(0, 1), Gate::h(1)], None);
        assert!(matches!(run(&c, &Statevector::zero(3)), Err(Error::Layout(_))));
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(checkerboard_param_count(6, 1), 18);
        assert_eq!(checkerboard_param_count(12, 12), 300);
        assert!(matches!(build_checkerboard(6, 1, &[0.0; 17], Boundary::Open), Err(Error::ParameterCount { .. })));
    }

    #[test]
    fn text_round_trip() {
        let theta: Vec<f64> = (0..18).map(|i| 0.1 * i as f64).collect();
        let mut c = build_checkerboard(6, 1, &theta, Boundary::Periodic).unwrap();
        c.push_layer(vec![Gate::unitary(0, 1, fourier_matrix(Complex64::new(0.0, 1.0)))], Some("ft"));
        let back = Circuit::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fswap_is_swap_times_phase() {
        let m = fswap_matrix();
        let swap = [0usize, 2, 1, 3];
        for r in 0..4 {
            for c in 0..4 {
                let expect = if swap[r] == c { FSWAP_PHASE[c] } else { 0.0 };
                assert!((m[r][c] - Complex64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn direct_prep_small() {
        let c = build_direct_prep(4, 1.0, 1.0).unwrap();
        assert!(c.two_qubit_count() <= 16);
        let out = run(&c, &Statevector::zero(4)).unwrap();
        let g = ground_state(&build_xy_fermionic(4, 1.0, 1.0).unwrap()).unwrap();
        let f = lattice::dot(&out.amps, &g.state).norm_sqr();
        assert!(f > 1.0 - 1e-10, "fidelity {f}");
    }

    #[test]
    fn cost_formula() {
        assert_eq!(direct_prep_cost(10).cnot_equivalent, 300);
        assert_eq!(direct_prep_cost(1).cnot_equivalent, 3);
        assert_eq!(direct_prep_cost(12).cnot_equivalent, 432);
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = ProbabilityTable::uniform(3, Basis::Z);
        let a = sample_counts(&t, 1000, 4).unwrap();
        assert_eq!(a, sample_counts(&t, 1000, 4).unwrap());
        assert_eq!(a.shots(), 1000);
        let d = ProbabilityTable::delta(3, Basis::Z, 5);
        assert_eq!(sample_counts(&d, 77, 1).unwrap().counts.get(&5), Some(&77));
    }
}
