//! Sparse Pauli-Lindblad layer noise, trajectory simulation and
//! probabilistic error cancellation (PEC).
//!
//! A channel `Λ(ρ) = β ρ + (1-β) P ρ P` sits after every occurrence of a
//! tagged layer. Its inverse `γ (β ρ - (1-β) P ρ P)` with `γ = 1/(2β-1)` is
//! sampled as "insert `P` with probability `1-β`, flip the sign".

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, Statevector};
use crate::error::{Error, Result};
use crate::lattice::{Pauli, PauliMasks, PauliString};
use crate::table::{Basis, ProbabilityTable};

#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub pauli: PauliString,
    pub beta: f64,
}

impl Channel {
    pub fn gamma(&self) -> f64 {
        1.0 / (2.0 * self.beta - 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ChannelSpec {
    pauli: String,
    beta: f64,
}

/// Channels keyed by layer tag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseModel {
    pub layers: BTreeMap<String, Vec<Channel>>,
}

impl NoiseModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// A model whose tags carry no channels.
    pub fn noiseless<'a, I: IntoIterator<Item = &'a str>>(tags: I) -> Self {
        NoiseModel { layers: tags.into_iter().map(|t| (t.to_string(), Vec::new())).collect() }
    }

    pub fn add(&mut self, tag: &str, pauli: PauliString, beta: f64) -> Result<()> {
        let ch = Channel { pauli, beta };
        check_channel(&ch)?;
        self.layers.entry(tag.to_string()).or_default().push(ch);
        Ok(())
    }

    pub fn validate(&self, size: usize) -> Result<()> {
        for (tag, chans) in &self.layers {
            for ch in chans {
                check_channel(ch).map_err(|e| Error::Config(format!("layer '{tag}': {e}")))?;
                if ch.pauli.len() != size {
                    return Err(Error::Config(format!("layer '{tag}': channel {} on {size} qubits", ch.pauli)));
                }
            }
        }
        Ok(())
    }

    /// Parse `{tag: [{pauli, beta}, ...]}` from JSON or TOML.
    pub fn from_text(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<ChannelSpec>> = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        let mut m = NoiseModel::new();
        for (tag, specs) in raw {
            m.layers.entry(tag.clone()).or_default();
            for s in specs {
                let p = PauliString::parse(&s.pauli)?;
                m.add(&tag, p, s.beta).map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, Vec<ChannelSpec>> = self
            .layers
            .iter()
            .map(|(t, cs)| (t.as_str(), cs.iter().map(|c| ChannelSpec { pauli: c.pauli.to_string(), beta: c.beta }).collect()))
            .collect();
        serde_json::to_string_pretty(&raw).expect("noise model serializes")
    }

    /// Synthetic model for the tagged layers of `circuit`: one random 1-local
    /// channel per qubit and one random 2-local channel per two-qubit gate,
    /// all sharing a `β` chosen so that `γ_total^(1/L)` equals
    /// `gamma_per_qubit`.
    pub fn synthetic(circuit: &Circuit, gamma_per_qubit: f64, seed: u64) -> Result<Self> {
        if !(gamma_per_qubit >= 1.0) {
            return Err(Error::Config(format!("per-qubit overhead must be >= 1, got {gamma_per_qubit}")));
        }
        let l = circuit.size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let letters = [Pauli::X, Pauli::Y, Pauli::Z];
        let mut per_tag: BTreeMap<String, Vec<PauliString>> = BTreeMap::new();
        let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
        for layer in &circuit.layers {
            let Some(tag) = &layer.tag else { continue };
            *occurrences.entry(tag.clone()).or_default() += 1;
            if per_tag.contains_key(tag) {
                continue;
            }
            let mut chans = Vec::new();
            for q in 0..l {
                chans.push(PauliString::from_sites(l, &[(q, letters[rng.random_range(0..3)])])?);
            }
            for g in layer.gates.iter().filter(|g| g.arity() == 2) {
                let (a, b) = (g.targets[0], g.targets[1]);
                let pa = letters[rng.random_range(0..3)];
                let pb = letters[rng.random_range(0..3)];
                chans.push(PauliString::from_sites(l, &[(a, pa), (b, pb)])?);
            }
            per_tag.insert(tag.clone(), chans);
        }
        let instances: usize = per_tag.iter().map(|(t, c)| c.len() * occurrences[t]).sum();
        let mut m = NoiseModel::new();
        if instances == 0 {
            return Ok(m);
        }
        let beta = 0.5 * (1.0 + gamma_per_qubit.powf(-(l as f64) / instances as f64));
        for (tag, chans) in per_tag {
            for p in chans {
                m.add(&tag, p, beta)?;
            }
        }
        Ok(m)
    }
}

fn check_channel(ch: &Channel) -> Result<()> {
    if !(ch.beta > 0.5 && ch.beta <= 1.0) {
        return Err(Error::Config(format!("β = {} outside (1/2, 1]", ch.beta)));
    }
    let w = ch.pauli.weight();
    if w == 0 || w > 2 {
        return Err(Error::Config(format!("channel {} must act on one or two sites", ch.pauli)));
    }
    Ok(())
}

/// Channels attached after layer `i`; untagged layers are noiseless.
fn layer_channels<'a>(model: &'a NoiseModel, circuit: &Circuit) -> Result<Vec<&'a [Channel]>> {
    circuit
        .layers
        .iter()
        .map(|layer| match &layer.tag {
            None => Ok(&[][..]),
            Some(t) => model
                .layers
                .get(t)
                .map(|v| v.as_slice())
                .ok_or_else(|| Error::Config(format!("noise model has no entry for layer tag '{t}'"))),
        })
        .collect()
}

/// Product of `γ_i` over every channel instance in the circuit.
pub fn gamma_total(model: &NoiseModel, circuit: &Circuit) -> Result<f64> {
    Ok(layer_channels(model, circuit)?.iter().flat_map(|cs| cs.iter()).map(Channel::gamma).product())
}

/// One stochastic unravelling of the noisy circuit.
pub fn simulate_noisy(circuit: &Circuit, model: &NoiseModel, input: &Statevector, seed: u64) -> Result<Statevector> {
    if circuit.size != input.size {
        return Err(Error::DimensionMismatch { expected: 1 << circuit.size, got: input.amps.len() });
    }
    circuit.validate()?;
    model.validate(circuit.size)?;
    let chans = layer_channels(model, circuit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = input.clone();
    for (layer, cs) in circuit.layers.iter().zip(chans) {
        for g in &layer.gates {
            g.apply(&mut out.amps);
        }
        for ch in cs {
            if rng.random::<f64>() < 1.0 - ch.beta {
                ch.pauli.apply(&mut out.amps);
            }
        }
    }
    Ok(out)
}

/// Amplitude type of the simulation engine. Real circuits (H, RY, CZ) run on
/// `f64`, where Pauli insertions are applied up to a global phase.
trait Amp: Copy + Send + Sync + Default + 'static {
    fn from_c(c: Complex64) -> Self;
    fn prob(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn apply_gate(g: &Gate, amps: &mut [Self]);
}

impl Amp for f64 {
    fn from_c(c: Complex64) -> Self {
        c.re
    }
    fn prob(self) -> f64 {
        self * self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn apply_gate(g: &Gate, amps: &mut [f64]) {
        match g.kind {
            GateKind::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                one_real(amps, g.targets[0], [[s, s], [s, -s]]);
            }
            GateKind::RY(t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                one_real(amps, g.targets[0], [[c, -s], [s, c]]);
            }
            GateKind::CZ => {
                let m = (1usize << g.targets[0]) | (1usize << g.targets[1]);
                for (b, a) in amps.iter_mut().enumerate() {
                    if b & m == m {
                        *a = -*a;
                    }
                }
            }
            _ => unreachable!("complex gate in a real program"),
        }
    }
}

impl Amp for Complex64 {
    fn from_c(c: Complex64) -> Self {
        c
    }
    fn prob(self) -> f64 {
        self.norm_sqr()
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn apply_gate(g: &Gate, amps: &mut [Complex64]) {
        g.apply(amps)
    }
}

fn one_real(s: &mut [f64], q: usize, m: [[f64; 2]; 2]) {
    let stride = 1usize << q;
    for base in (0..s.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let (a, b) = (s[i], s[i + stride]);
            s[i] = m[0][0] * a + m[0][1] * b;
            s[i + stride] = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// Pauli action up to a global phase.
fn apply_pauli<A: Amp>(m: &PauliMasks, amps: &mut [A]) {
    let sgn = |b: usize| if (b as u64 & m.sign).count_ones() & 1 == 1 { -1.0 } else { 1.0 };
    if m.flip == 0 {
        for (b, a) in amps.iter_mut().enumerate() {
            *a = a.scale(sgn(b));
        }
        return;
    }
    let f = m.flip as usize;
    for b in 0..amps.len() {
        let t = b ^ f;
        if t < b {
            continue;
        }
        let (ab, at) = (amps[b], amps[t]);
        amps[t] = ab.scale(sgn(b));
        amps[b] = at.scale(sgn(t));
    }
}

fn is_real_circuit(c: &Circuit) -> bool {
    c.layers.iter().flat_map(|l| &l.gates).all(|g| matches!(g.kind, GateKind::H | GateKind::RY(_) | GateKind::CZ))
}

/// One channel occurrence: layer index and channel data.
#[derive(Clone, Debug)]
struct Instance {
    layer: usize,
    p: f64,
    masks: PauliMasks,
}

/// Noisy-circuit sampler with cached noiseless prefixes and cached output
/// distributions for short error configurations.
struct Engine<A: Amp> {
    gates: Vec<Vec<Gate>>,
    instances: Vec<Instance>,
    p_max: f64,
    /// `prefix[i]`: noiseless state after layers `0..i`.
    prefix: Vec<Vec<A>>,
    base_cdf: Arc<Vec<f64>>,
    single_cdf: Vec<Arc<Vec<f64>>>,
}

impl<A: Amp> Engine<A> {
    fn new(circuit: &Circuit, model: &NoiseModel, input: &Statevector, wall: &[usize]) -> Result<Self> {
        let chans = layer_channels(model, circuit)?;
        let mut gates: Vec<Vec<Gate>> = circuit.layers.iter().map(|l| l.gates.clone()).collect();
        if !wall.is_empty() {
            gates.push(wall.iter().map(|&q| Gate::h(q)).collect());
        }
        let mut instances = Vec::new();
        for (i, cs) in chans.iter().enumerate() {
            for ch in cs.iter() {
                instances.push(Instance { layer: i, p: 1.0 - ch.beta, masks: ch.pauli.masks() });
            }
        }
        let p_max = instances.iter().map(|x| x.p).fold(0.0, f64::max);
        let mut prefix = Vec::with_capacity(gates.len() + 1);
        let mut s: Vec<A> = input.amps.iter().map(|&c| A::from_c(c)).collect();
        prefix.push(s.clone());
        for layer in &gates {
            for g in layer {
                A::apply_gate(g, &mut s);
            }
            prefix.push(s.clone());
        }
        let base_cdf = Arc::new(cdf(&s));
        let mut e = Engine { gates, instances, p_max, prefix, base_cdf, single_cdf: Vec::new() };
        let singles: Vec<_> = (0..e.instances.len()).into_par_iter().map(|i| Arc::new(cdf(&e.final_state(&[i])))).collect();
        e.single_cdf = singles;
        Ok(e)
    }

    /// Final state with Pauli insertions at the sorted instance list `events`.
    fn final_state(&self, events: &[usize]) -> Vec<A> {
        let Some(&first) = events.first() else {
            return self.prefix[self.gates.len()].clone();
        };
        let start = self.instances[first].layer;
        let mut s = self.prefix[start + 1].clone();
        let mut k = 0;
        for layer in start..self.gates.len() {
            if layer > start {
                for g in &self.gates[layer] {
                    A::apply_gate(g, &mut s);
                }
            }
            while k < events.len() && self.instances[events[k]].layer == layer {
                apply_pauli(&self.instances[events[k]].masks, &mut s);
                k += 1;
            }
        }
        s
    }

    /// Independent Bernoulli draws over all instances by thinning a
    /// geometric skip at rate `p_max`.
    fn draw_events(&self, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        if self.p_max <= 0.0 {
            return;
        }
        let n = self.instances.len();
        let log_q = (1.0 - self.p_max).ln();
        let mut i = 0usize;
        loop {
            if self.p_max < 1.0 {
                let u: f64 = rng.random();
                let skip = ((1.0 - u).ln() / log_q).floor();
                if skip >= (n - i) as f64 {
                    return;
                }
                i += skip as usize;
            }
            if i >= n {
                return;
            }
            let p = self.instances[i].p;
            if p >= self.p_max || rng.random::<f64>() * self.p_max < p {
                out.push(i);
            }
            i += 1;
        }
    }

    /// One PEC instance: inversion draw, then `shots` noisy shots.
    fn instance(&self, shots: u32, rng: &mut ChaCha8Rng) -> PecInstance {
        let mut inv = Vec::new();
        self.draw_events(rng, &mut inv);
        let sign = if inv.len() % 2 == 0 { 1 } else { -1 };
        let mut noise = Vec::new();
        let mut hist: HashMap<u32, u32> = HashMap::new();
        let mut local: HashMap<Vec<usize>, Arc<Vec<f64>>> = HashMap::new();
        for _ in 0..shots {
            self.draw_events(rng, &mut noise);
            let config = sym_diff(&inv, &noise);
            let u: f64 = rng.random();
            let b = match config.len() {
                0 => sample_cdf(&self.base_cdf, u),
                1 => sample_cdf(&self.single_cdf[config[0]], u),
                _ => {
                    let c = local.entry(config).or_insert_with_key(|k| Arc::new(cdf(&self.final_state(k))));
                    sample_cdf(c, u)
                }
            };
            *hist.entry(b as u32).or_default() += 1;
        }
        let mut hist: Vec<(u32, u32)> = hist.into_iter().collect();
        hist.sort_unstable();
        PecInstance { sign, hist }
    }
}

fn sym_diff(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

fn cdf<A: Amp>(s: &[A]) -> Vec<f64> {
    let mut acc = 0.0;
    s.iter()
        .map(|a| {
            acc += a.prob();
            acc
        })
        .collect()
}

fn sample_cdf(c: &[f64], u: f64) -> usize {
    let target = u * c[c.len() - 1];
    c.partition_point(|&x| x <= target).min(c.len() - 1)
}

/// One sign-weighted batch of shots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PecInstance {
    pub sign: i8,
    /// Sorted `(outcome, count)` pairs.
    pub hist: Vec<(u32, u32)>,
}

/// All instances of one PEC run in a fixed measurement basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecRun {
    pub size: usize,
    pub basis: Basis,
    pub gamma: f64,
    pub shots: u32,
    pub instances: Vec<PecInstance>,
}

/// Run `samples` PEC instances of `shots` shots each, measuring in `basis`.
/// Instance `i` draws from its own RNG stream, so results do not depend on
/// scheduling.
pub fn pec_run(
    circuit: &Circuit,
    model: &NoiseModel,
    input: &Statevector,
    basis: Basis,
    samples: usize,
    shots: u32,
    seed: u64,
) -> Result<PecRun> {
    let wall: Vec<usize> = if basis == Basis::X { (0..circuit.size).collect() } else { Vec::new() };
    let instances = run_instances(circuit, model, input, &wall, samples, shots, seed)?;
    Ok(PecRun { size: circuit.size, basis, gamma: gamma_total(model, circuit)?, shots, instances })
}

fn run_instances(
    circuit: &Circuit,
    model: &NoiseModel,
    input: &Statevector,
    wall: &[usize],
    samples: usize,
    shots: u32,
    seed: u64,
) -> Result<Vec<PecInstance>> {
    if circuit.size != input.size {
        return Err(Error::DimensionMismatch { expected: 1 << circuit.size, got: input.amps.len() });
    }
    if shots == 0 {
        return Err(Error::Config("shots per sample must be positive".into()));
    }
    circuit.validate()?;
    model.validate(circuit.size)?;
    let real = is_real_circuit(circuit) && input.amps.iter().all(|a| a.im == 0.0);
    let go = |i: usize, f: &(dyn Fn(&mut ChaCha8Rng) -> PecInstance + Sync)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        f(&mut rng)
    };
    Ok(if real {
        let e = Engine::<f64>::new(circuit, model, input, wall)?;
        (0..samples).into_par_iter().map(|i| go(i, &|r| e.instance(shots, r))).collect()
    } else {
        let e = Engine::<Complex64>::new(circuit, model, input, wall)?;
        (0..samples).into_par_iter().map(|i| go(i, &|r| e.instance(shots, r))).collect()
    })
}

impl PecRun {
    /// Instance subset as a new run.
    pub fn subset(&self, idx: &[usize]) -> PecRun {
        PecRun { instances: idx.iter().map(|&i| self.instances[i].clone()).collect(), ..self.clone_meta() }
    }

    fn clone_meta(&self) -> PecRun {
        PecRun { size: self.size, basis: self.basis, gamma: self.gamma, shots: self.shots, instances: Vec::new() }
    }

    /// Sign-weighted outcome frequencies `γ/N Σ σ hist / shots`.
    fn signed_frequencies(&self) -> Vec<f64> {
        let mut w = vec![0.0; 1 << self.size];
        let norm = self.gamma / (self.instances.len() as f64 * self.shots as f64);
        for inst in &self.instances {
            let s = inst.sign as f64 * norm;
            for &(b, c) in &inst.hist {
                w[b as usize] += s * c as f64;
            }
        }
        w
    }

    /// Mitigated expectation of every Z-substring, indexed by its site mask.
    /// The identity entry is fixed to 1.
    pub fn expectations(&self) -> Result<Vec<f64>> {
        if self.instances.is_empty() {
            return Err(Error::Degenerate("no PEC instances".into()));
        }
        let mut e = self.signed_frequencies();
        fwht(&mut e);
        e[0] = 1.0;
        Ok(e)
    }

    /// Raw (possibly negative) probability table from the mitigated
    /// Z-substring expectations.
    pub fn raw_table(&self) -> Result<ProbabilityTable> {
        let mut t = walsh_hadamard_probs(&self.expectations()?, self.size)?;
        t.basis = self.basis;
        Ok(t)
    }

    /// Estimate with standard error for one Z-substring mask.
    pub fn estimate(&self, mask: usize) -> Result<PecEstimate> {
        let n = self.instances.len();
        if n < 2 {
            return Err(Error::Degenerate(format!("need at least 2 samples, got {n}")));
        }
        let vals: Vec<f64> = self
            .instances
            .iter()
            .map(|inst| {
                let m: f64 = inst
                    .hist
                    .iter()
                    .map(|&(b, c)| if (b as usize & mask).count_ones() & 1 == 1 { -(c as f64) } else { c as f64 })
                    .sum();
                self.gamma * inst.sign as f64 * m / self.shots as f64
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(PecEstimate { mask, value: mean, std_error: (var / n as f64).sqrt(), gamma: self.gamma, samples: n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecEstimate {
    /// Site mask of the measured Z-substring.
    pub mask: usize,
    pub value: f64,
    pub std_error: f64,
    pub gamma: f64,
    pub samples: usize,
}

/// PEC estimate of a Pauli observable built from I, Z and X; X sites are
/// rotated by a Hadamard before readout.
pub fn pec_sample(
    circuit: &Circuit,
    model: &NoiseModel,
    input: &Statevector,
    observable: &PauliString,
    samples: usize,
    shots: u32,
    seed: u64,
) -> Result<PecEstimate> {
    if samples < 2 {
        return Err(Error::Degenerate(format!("need at least 2 samples, got {samples}")));
    }
    if observable.len() != circuit.size {
        return Err(Error::DimensionMismatch { expected: circuit.size, got: observable.len() });
    }
    let mut wall = Vec::new();
    let mut mask = 0usize;
    for (q, p) in observable.letters().iter().enumerate() {
        match p {
            Pauli::I => {}
            Pauli::Z => mask |= 1 << q,
            Pauli::X => {
                mask |= 1 << q;
                wall.push(q);
            }
            Pauli::Y => return Err(Error::Config("Y observables need a basis wall that is not supported".into())),
        }
    }
    let instances = run_instances(circuit, model, input, &wall, samples, shots, seed)?;
    let run = PecRun { size: circuit.size, basis: Basis::Z, gamma: gamma_total(model, circuit)?, shots, instances };
    run.estimate(mask)
}

/// In-place unnormalized fast Walsh-Hadamard transform.
pub fn fwht(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for base in (0..n).step_by(2 * h) {
            for i in base..base + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `p(b) = 2^-L Σ_s <Z^s> (-1)^{|b & s|}`; `expectations[s]` is indexed by
/// site mask and `expectations[0]` must be 1.
pub fn walsh_hadamard_probs(expectations: &[f64], size: usize) -> Result<ProbabilityTable> {
    let n = 1usize << size;
    if expectations.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: expectations.len() });
    }
    if (expectations[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Degenerate(format!("identity expectation is {}, expected 1", expectations[0])));
    }
    let mut p = expectations.to_vec();
    fwht(&mut p);
    p.iter_mut().for_each(|x| *x /= n as f64);
    ProbabilityTable::raw(size, Basis::Z, p)
}

/// As [`walsh_hadamard_probs`] from a sparse map; every mask must be present.
pub fn walsh_hadamard_from_map(estimates: &BTreeMap<usize, f64>, size: usize) -> Result<ProbabilityTable> {
    let n = 1usize << size;
    let mut e = vec![0.0; n];
    for (s, slot) in e.iter_mut().enumerate() {
        *slot = if s == 0 {
            1.0
        } else {
            *estimates.get(&s).ok_or_else(|| Error::Degenerate(format!("missing expectation for mask {s:#b}")))?
        };
    }
    walsh_hadamard_probs(&e, size)
}

/// Z-substring expectations of a probability table, indexed by site mask.
pub fn z_expectations(table: &ProbabilityTable) -> Vec<f64> {
    let mut e = table.weights.clone();
    fwht(&mut e);
    e
}
