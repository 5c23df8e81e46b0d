//! Derivative-free Nelder-Mead simplex minimizer with a hard evaluation
//! budget.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadSettings {
    /// Edge length of the axis-aligned starting simplex.
    pub initial_edge: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// The simplex is rebuilt around its best vertex once every vertex lies
    /// within this distance of it.
    pub collapse_diameter: f64,
}

impl Default for NelderMeadSettings {
    fn default() -> Self {
        Self {
            initial_edge: 0.1,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            collapse_diameter: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value seen after each evaluation.
    pub history: Vec<f64>,
    pub rebuilds: usize,
    pub reached_target: bool,
}

struct Counter<F> {
    f: F,
    evals: usize,
    max_evals: usize,
    best: f64,
    best_x: Vec<f64>,
    history: Vec<f64>,
    stop_below: Option<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    /// `None` once the budget is spent or the target was hit.
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.done() {
            return None;
        }
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = f64::INFINITY;
        }
        self.evals += 1;
        if v < self.best {
            self.best = v;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
        }
        self.history.push(self.best);
        Some(v)
    }

    fn hit_target(&self) -> bool {
        self.stop_below.is_some_and(|t| self.best <= t)
    }

    fn done(&self) -> bool {
        self.evals >= self.max_evals || self.hit_target()
    }
}

/// Minimizes `f` from `x0` using at most `max_evals` evaluations, stopping
/// early once a value `<= stop_below` is seen. NaN values count as `+inf`.
pub fn minimize<F>(
    f: F,
    x0: &[f64],
    settings: &NelderMeadSettings,
    max_evals: usize,
    stop_below: Option<f64>,
) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut c = Counter {
        f,
        evals: 0,
        max_evals,
        best: f64::INFINITY,
        best_x: x0.to_vec(),
        history: Vec::with_capacity(max_evals.min(1 << 20)),
        stop_below,
    };
    let mut rebuilds = 0;

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    if !build(&mut c, x0, settings.initial_edge, &mut simplex, &mut values) || n == 0 {
        return finish(c, rebuilds);
    }

    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    let mut order: Vec<usize> = (0..=n).collect();

    'outer: loop {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let diameter = simplex
            .iter()
            .map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < settings.collapse_diameter {
            let anchor = simplex[best].clone();
            rebuilds += 1;
            if !build(&mut c, &anchor, settings.initial_edge, &mut simplex, &mut values) {
                break;
            }
            continue;
        }

        centroid.iter_mut().for_each(|v| *v = 0.0);
        for &i in &order[..n] {
            for (cv, xv) in centroid.iter_mut().zip(&simplex[i]) {
                *cv += xv;
            }
        }
        centroid.iter_mut().for_each(|v| *v /= n as f64);

        along(&centroid, &simplex[worst], -settings.reflection, &mut trial);
        let Some(fr) = c.eval(&trial) else { break };

        if fr < values[best] {
            along(&centroid, &trial, settings.expansion, &mut trial2);
            let Some(fe) = c.eval(&trial2) else { break };
            if fe < fr {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = fe;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = fr;
            continue;
        }

        let accepted = if fr < values[worst] {
            along(&centroid, &trial, settings.contraction, &mut trial2);
            let Some(fc) = c.eval(&trial2) else { break };
            fc <= fr && {
                values[worst] = fc;
                true
            }
        } else {
            along(&centroid, &simplex[worst], settings.contraction, &mut trial2);
            let Some(fc) = c.eval(&trial2) else { break };
            fc < values[worst] && {
                values[worst] = fc;
                true
            }
        };
        if accepted {
            simplex[worst].copy_from_slice(&trial2);
            continue;
        }

        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                *v = a + settings.shrink * (*v - a);
            }
            let Some(fv) = c.eval(&simplex[i]) else { break 'outer };
            values[i] = fv;
        }
    }
    finish(c, rebuilds)
}

/// `out = c + s (p - c)`.
fn along(c: &[f64], p: &[f64], s: f64, out: &mut [f64]) {
    for ((o, cv), pv) in out.iter_mut().zip(c).zip(p) {
        *o = cv + s * (pv - cv);
    }
}

fn build<F: FnMut(&[f64]) -> f64>(
    c: &mut Counter<F>,
    anchor: &[f64],
    edge: f64,
    simplex: &mut Vec<Vec<f64>>,
    values: &mut Vec<f64>,
) -> bool {
    simplex.clear();
    values.clear();
    for k in 0..=anchor.len() {
        let mut v = anchor.to_vec();
        if k > 0 {
            v[k - 1] += edge;
        }
        let Some(fv) = c.eval(&v) else { return false };
        simplex.push(v);
        values.push(fv);
    }
    true
}

fn finish<F: FnMut(&[f64]) -> f64>(c: Counter<F>, rebuilds: usize) -> NelderMeadOutcome {
    let reached_target = c.hit_target();
    NelderMeadOutcome {
        x: c.best_x,
        value: c.best,
        evaluations: c.evals,
        history: c.history,
        rebuilds,
        reached_target,
    }
}
