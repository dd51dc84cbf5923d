//! Unconstrained minimizers: L-BFGS with a strong-Wolfe line search, and
//! Nelder-Mead.

/// Objective returning value and gradient.
pub trait Objective {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Clone, Debug)]
pub struct StopRule {
    pub max_evals: usize,
    /// Stop when the best value improved by less than `tol` over the last
    /// `window` evaluations.
    pub tol: f64,
    pub window: usize,
    pub grad_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { max_evals: 10_000, tol: 1e-10, window: 50, grad_tol: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct Trace {
    /// Value at every evaluation, in order.
    pub values: Vec<f64>,
    best: Vec<f64>,
}

impl Trace {
    fn new() -> Self {
        Trace { values: Vec::new(), best: Vec::new() }
    }

    fn push(&mut self, v: f64) {
        let b = self.best.last().map_or(v, |&b| if v < b { v } else { b });
        self.values.push(v);
        self.best.push(b);
    }

    pub fn best(&self) -> &[f64] {
        &self.best
    }

    fn stalled(&self, rule: &StopRule) -> bool {
        let n = self.best.len();
        n > rule.window && self.best[n - 1 - rule.window] - self.best[n - 1] < rule.tol
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Trace,
    pub converged: bool,
}

struct Tracked<'a, O: Objective> {
    f: &'a mut O,
    trace: Trace,
    best_x: Vec<f64>,
    best_v: f64,
}

impl<O: Objective> Tracked<'_, O> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        let v = self.f.eval(x, g);
        self.trace.push(v);
        if v < self.best_v {
            self.best_v = v;
            self.best_x.copy_from_slice(x);
        }
        v
    }

    fn evals(&self) -> usize {
        self.trace.values.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS; falls back to Nelder-Mead for the remaining budget if the line
/// search keeps failing from a steepest-descent direction.
pub fn lbfgs<O: Objective>(f: &mut O, x0: &[f64], memory: usize, rule: &StopRule) -> Minimum {
    let n = x0.len();
    let mut t = Tracked { f, trace: Trace::new(), best_x: x0.to_vec(), best_v: f64::INFINITY };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = t.eval(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut fresh_failures = 0;
    while t.evals() < rule.max_evals {
        if dot(&g, &g).sqrt() < rule.grad_tol || t.trace.stalled(rule) {
            converged = true;
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let gn = dot(&g, &g).sqrt();
            d.iter_mut().for_each(|v| *v /= gn.max(1.0));
        }
        for i in 0..k {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
        }
        match wolfe_search(&mut t, &x, fx, &d, dg, rule.max_evals) {
            Some((step, fnew, gnew)) => {
                let s: Vec<f64> = d.iter().map(|v| v * step).collect();
                let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
                x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
                if dot(&s, &y) > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                fx = fnew;
                g = gnew;
                fresh_failures = 0;
            }
            None => {
                if s_hist.is_empty() {
                    fresh_failures += 1;
                    if fresh_failures >= 2 {
                        break;
                    }
                }
                s_hist.clear();
                y_hist.clear();
            }
        }
    }
    if !converged && t.evals() < rule.max_evals {
        // Line search exhausted: polish with the simplex method.
        let budget = rule.max_evals - t.evals();
        let start = t.best_x.clone();
        let sub = StopRule { max_evals: budget, ..rule.clone() };
        let mut scratch = vec![0.0; n];
        let nm = {
            let mut wrap = |p: &[f64], _: &mut [f64]| t.eval(p, &mut scratch);
            nelder_mead(&mut wrap, &start, 0.05, &sub)
        };
        converged = nm.converged;
    }
    Minimum { x: t.best_x, value: t.best_v, trace: t.trace, converged }
}

/// Strong-Wolfe line search (bracketing then zoom with cubic interpolation).
fn wolfe_search<O: Objective>(
    t: &mut Tracked<'_, O>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    dg0: f64,
    max_evals: usize,
) -> Option<(f64, f64, Vec<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = x.len();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut phi = |step: f64, t: &mut Tracked<'_, O>, gt: &mut Vec<f64>| {
        for i in 0..n {
            xt[i] = x[i] + step * d[i];
        }
        let v = t.eval(&xt, gt);
        (v, dot(gt, d))
    };
    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut a = 1.0;
    for i in 0..25 {
        if t.evals() >= max_evals {
            return None;
        }
        let (fa, dga) = phi(a, t, &mut gt);
        if !fa.is_finite() {
            a = 0.5 * (a_prev + a);
            continue;
        }
        if fa > f0 + C1 * a * dg0 || (i > 0 && fa >= f_prev) {
            return zoom(t, &mut phi, n, f0, dg0, (a_prev, f_prev, dg_prev), (a, fa, dga), max_evals);
        }
        if dga.abs() <= -C2 * dg0 {
            return Some((a, fa, gt));
        }
        if dga >= 0.0 {
            return zoom(t, &mut phi, n, f0, dg0, (a, fa, dga), (a_prev, f_prev, dg_prev), max_evals);
        }
        a_prev = a;
        f_prev = fa;
        dg_prev = dga;
        a *= 2.0;
    }
    None
}

type Point = (f64, f64, f64);

#[allow(clippy::too_many_arguments)]
fn zoom<O: Objective, P: FnMut(f64, &mut Tracked<'_, O>, &mut Vec<f64>) -> (f64, f64)>(
    t: &mut Tracked<'_, O>,
    phi: &mut P,
    n: usize,
    f0: f64,
    dg0: f64,
    mut lo: Point,
    mut hi: Point,
    max_evals: usize,
) -> Option<(f64, f64, Vec<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut gt = vec![0.0; n];
    for _ in 0..30 {
        if t.evals() >= max_evals {
            return None;
        }
        let a = cubic_min(lo, hi);
        let (fa, dga) = phi(a, t, &mut gt);
        if fa > f0 + C1 * a * dg0 || fa >= lo.1 {
            hi = (a, fa, dga);
        } else {
            if dga.abs() <= -C2 * dg0 {
                return Some((a, fa, gt));
            }
            if dga * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, dga);
        }
        if (hi.0 - lo.0).abs() < 1e-14 * lo.0.abs().max(1.0) {
            break;
        }
    }
    // Accept the low end if it decreased the function at all.
    if lo.0 > 0.0 && lo.1 < f0 {
        let (fa, _) = phi(lo.0, t, &mut gt);
        return Some((lo.0, fa, gt));
    }
    None
}

/// Minimizer of the cubic through two points with derivatives, safeguarded to
/// the interior of the bracket.
fn cubic_min(p: Point, q: Point) -> f64 {
    let (a, fa, da) = p;
    let (b, fb, db) = q;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut x = 0.5 * (a + b);
    if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        let c = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
        if c.is_finite() {
            x = c;
        }
    }
    x.clamp(lo + 0.1 * width, hi - 0.1 * width)
}

/// Nelder-Mead simplex; gradients are ignored.
pub fn nelder_mead<O: Objective>(f: &mut O, x0: &[f64], scale: f64, rule: &StopRule) -> Minimum {
    let n = x0.len();
    let mut dummy = vec![0.0; n];
    let mut trace = Trace::new();
    let mut evals = 0usize;
    let mut call = |x: &[f64], trace: &mut Trace, evals: &mut usize| {
        let v = f.eval(x, &mut dummy);
        trace.push(v);
        *evals += 1;
        v
    };
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += scale;
        pts.push(p);
    }
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(call(p, &mut trace, &mut evals));
    }
    let mut converged = false;
    while evals < rule.max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if trace.stalled(rule) || (vals[n] - vals[0]).abs() < rule.tol * 1e-3 {
            converged = true;
            break;
        }
        let mut cen = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in cen.iter_mut().zip(p) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { cen.iter().zip(&pts[n]).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = along(-1.0);
        let fr = call(&xr, &mut trace, &mut evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = call(&xe, &mut trace, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = call(&xc, &mut trace, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = call(&xc, &mut trace, &mut evals);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(a, b)| a + 0.5 * (b - a)).collect();
                    vals[i] = call(&p, &mut trace, &mut evals);
                    pts[i] = p;
                }
            }
        }
    }
    let best = (0..pts.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    Minimum { x: pts[best].clone(), value: vals[best], trace, converged }
}
