//! Banded real-symmetric matrices and a symmetric tridiagonal eigensolver.
//!
//! Every operator in this crate is real symmetric and banded in the Dicke
//! basis, so matrix-vector products are `O(dim * bandwidth)`. The
//! Hamiltonian splits into two parity blocks, each of which is tridiagonal;
//! [`SymTridiagonal`] diagonalizes those blocks.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Real symmetric band matrix. `bands[k]` holds the `(k+1)`-th
/// superdiagonal, i.e. `bands[k][i] = A[i][i + k + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBanded {
    diag: Vec<f64>,
    bands: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn new(diag: Vec<f64>, bands: Vec<Vec<f64>>) -> Result<Self> {
        let n = diag.len();
        for (k, band) in bands.iter().enumerate() {
            let expected = n.saturating_sub(k + 1);
            if band.len() != expected {
                return Err(Error::DimensionMismatch { expected, found: band.len() });
            }
        }
        Ok(Self { diag, bands })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// The `(k+1)`-th superdiagonal (equal to the subdiagonal by symmetry).
    pub fn band(&self, k: usize) -> &[f64] {
        &self.bands[k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            d if d <= self.bands.len() => self.bands[d - 1][lo],
            _ => 0.0,
        }
    }

    /// Row-major dense copy, mostly useful for tests and small dumps.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        for i in 0..n {
            out[i] = x[i] * self.diag[i];
        }
        for (k, band) in self.bands.iter().enumerate() {
            let off = k + 1;
            for (i, &a) in band.iter().enumerate() {
                if a != 0.0 {
                    out[i] += x[i + off] * a;
                    out[i + off] += x[i] * a;
                }
            }
        }
    }

    /// Largest absolute row sum; an upper bound on the spectral radius.
    pub fn gershgorin_radius(&self) -> f64 {
        let n = self.dim();
        let mut rows: Vec<f64> = self.diag.iter().map(|d| d.abs()).collect();
        for (k, band) in self.bands.iter().enumerate() {
            for (i, &a) in band.iter().enumerate() {
                rows[i] += a.abs();
                rows[i + k + 1] += a.abs();
            }
        }
        rows.into_iter().take(n).fold(0.0, f64::max)
    }
}

/// Real symmetric tridiagonal matrix: `diag` of length `n`, `off` of length `n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Eigen-decomposition with ascending eigenvalues. `vectors` is row-major
/// with one eigenvector per row: component `i` of eigenvector `k` sits at
/// `vectors[k * n + i]`.
#[derive(Clone, Debug)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

const MAX_QL_SWEEPS: usize = 60;

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if off.len() + 1 != diag.len() && !(diag.is_empty() && off.is_empty()) {
            return Err(Error::DimensionMismatch { expected: diag.len().saturating_sub(1), found: off.len() });
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn norm_bound(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn apply_real(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out: Vec<f64> = (0..n).map(|i| self.diag[i] * x[i]).collect();
        for i in 0..n.saturating_sub(1) {
            out[i] += self.off[i] * x[i + 1];
            out[i + 1] += self.off[i] * x[i];
        }
        out
    }

    /// Full eigen-decomposition by implicit QL with accumulated rotations.
    pub fn eigh(&self) -> Result<TridiagonalEigen> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = vec![0.0; n];
        e[..n.saturating_sub(1)].copy_from_slice(&self.off);
        let mut vt = vec![0.0; n * n];
        for k in 0..n {
            vt[k * n + k] = 1.0;
        }
        implicit_ql(&mut d, &mut e, Some(&mut vt))?;
        Ok(sorted(d, vt, n))
    }

    /// Eigenvalues only (ascending), `O(n^2)`.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = vec![0.0; n];
        e[..n.saturating_sub(1)].copy_from_slice(&self.off);
        implicit_ql(&mut d, &mut e, None)?;
        d.sort_by(|a, b| a.total_cmp(b));
        Ok(d)
    }

    /// Eigen-decomposition via QL eigenvalues plus inverse iteration for the
    /// vectors. Roughly an order of magnitude cheaper than [`Self::eigh`];
    /// falls back to it when two eigenvalues are too close for inverse
    /// iteration to deliver orthogonal vectors.
    pub fn eigh_fast(&self) -> Result<TridiagonalEigen> {
        let n = self.dim();
        if n <= 2 {
            return self.eigh();
        }
        let values = self.eigenvalues()?;
        let scale = self.norm_bound().max(f64::MIN_POSITIVE);
        let min_gap = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if min_gap < 1e-7 * scale {
            return self.eigh();
        }
        let tiny = f64::EPSILON * scale;
        let mut vectors = vec![0.0; n * n];
        let mut work = InverseIterationWork::new(n);
        for (k, &lambda) in values.iter().enumerate() {
            let v = &mut vectors[k * n..(k + 1) * n];
            work.eigenvector(self, lambda, tiny, v);
        }
        Ok(TridiagonalEigen { values, vectors, n })
    }
}

impl TridiagonalEigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }

    /// `x <- V exp(-i diag(values) dt) V^T x`.
    pub fn apply_exp(&self, dt: f64, x: &mut [C64], coeffs: &mut Vec<C64>) {
        let n = self.n;
        coeffs.clear();
        for k in 0..n {
            let row = &self.vectors[k * n..(k + 1) * n];
            let mut acc = C64::new(0.0, 0.0);
            for (v, xi) in row.iter().zip(x.iter()) {
                acc += xi * *v;
            }
            let phase = -self.values[k] * dt;
            coeffs.push(acc * C64::new(phase.cos(), phase.sin()));
        }
        x.iter_mut().for_each(|xi| *xi = C64::new(0.0, 0.0));
        for (k, c) in coeffs.iter().enumerate() {
            let row = &self.vectors[k * n..(k + 1) * n];
            for (xi, v) in x.iter_mut().zip(row.iter()) {
                *xi += c * *v;
            }
        }
    }
}

fn sorted(d: Vec<f64>, vt: Vec<f64>, n: usize) -> TridiagonalEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        values.push(d[k]);
        vectors.extend_from_slice(&vt[k * n..(k + 1) * n]);
    }
    TridiagonalEigen { values, vectors, n }
}

/// Implicit QL with Wilkinson-style shifts on `(d, e)`, `e[i]` coupling `i`
/// and `i + 1`. When `vt` is given, rotations are accumulated into its rows
/// so that row `k` ends up as the eigenvector of `d[k]`.
fn implicit_ql(d: &mut [f64], e: &mut [f64], mut vt: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(Error::EigenNoConvergence { dim: n, index: l, iterations: sweeps });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(vt) = vt.as_deref_mut() {
                    let (head, tail) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut head[i * n..];
                    let row_next = &mut tail[..n];
                    for (zi, zn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let f = *zn;
                        *zn = s * *zi + c * f;
                        *zi = c * *zi - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Scratch space for tridiagonal inverse iteration with partial pivoting.
struct InverseIterationWork {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    pivot: Vec<bool>,
}

impl InverseIterationWork {
    fn new(n: usize) -> Self {
        Self {
            u0: vec![0.0; n],
            u1: vec![0.0; n],
            u2: vec![0.0; n],
            mult: vec![0.0; n],
            pivot: vec![false; n],
        }
    }

    fn factor(&mut self, t: &SymTridiagonal, lambda: f64, tiny: f64) {
        let n = t.dim();
        let mut a = t.diag[0] - lambda;
        let mut b = if n > 1 { t.off[0] } else { 0.0 };
        for k in 0..n - 1 {
            let c = t.off[k];
            let d = t.diag[k + 1] - lambda;
            let e = if k + 2 < n { t.off[k + 1] } else { 0.0 };
            if a.abs() >= c.abs() {
                if a == 0.0 {
                    a = tiny;
                }
                let m = c / a;
                self.u0[k] = a;
                self.u1[k] = b;
                self.u2[k] = 0.0;
                self.mult[k] = m;
                self.pivot[k] = false;
                a = d - m * b;
                b = e;
            } else {
                let m = a / c;
                self.u0[k] = c;
                self.u1[k] = d;
                self.u2[k] = e;
                self.mult[k] = m;
                self.pivot[k] = true;
                a = b - m * d;
                b = -m * e;
            }
        }
        self.u0[n - 1] = if a.abs() < tiny { tiny.copysign(if a == 0.0 { 1.0 } else { a }) } else { a };
    }

    fn solve(&self, x: &mut [f64], tiny: f64) {
        let n = x.len();
        for k in 0..n - 1 {
            if self.pivot[k] {
                x.swap(k, k + 1);
            }
            x[k + 1] -= self.mult[k] * x[k];
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            if k + 1 < n {
                s -= self.u1[k] * x[k + 1];
            }
            if k + 2 < n {
                s -= self.u2[k] * x[k + 2];
            }
            let p = if self.u0[k].abs() < tiny { tiny.copysign(self.u0[k] + 0.0) } else { self.u0[k] };
            x[k] = s / p;
        }
    }

    fn eigenvector(&mut self, t: &SymTridiagonal, lambda: f64, tiny: f64, v: &mut [f64]) {
        let n = t.dim();
        self.factor(t, lambda, tiny);
        // deterministic start vector with no special alignment
        for (i, x) in v.iter_mut().enumerate() {
            *x = 1.0 + 0.1 * ((i * 7919 % 97) as f64 / 97.0);
        }
        for _ in 0..2 {
            self.solve(v, tiny);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                v.iter_mut().for_each(|x| *x /= norm);
            } else {
                v.iter_mut().for_each(|x| *x = 0.0);
                v[n / 2] = 1.0;
            }
        }
    }
}

impl SymTridiagonal {
    /// Gershgorin interval `[lo, hi]` containing every eigenvalue.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }
}

/// Bessel functions `J_0(x) .. J_{len-1}(x)` by Miller's downward recurrence,
/// normalized with `J_0 + 2 sum J_{2k} = 1`. `x` must be non-negative.
pub fn bessel_j_sequence(x: f64, len: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(len, 0.0);
    if len == 0 {
        return;
    }
    if x == 0.0 {
        out[0] = 1.0;
        return;
    }
    let start = (len + 20).max((x + 10.0 * x.cbrt() + 20.0) as usize) | 1;
    let (mut above, mut here) = (0.0_f64, 1e-300_f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * here - above;
        above = here;
        here = below;
        // `here` now holds the unnormalized J_{k-1}
        if (k - 1) % 2 == 0 {
            norm += if k == 1 { here } else { 2.0 * here };
        }
        if k - 1 < len {
            out[k - 1] = here;
        }
        if here.abs() > 1e250 {
            above *= 1e-250;
            here *= 1e-250;
            norm *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
}

/// Scratch buffers for [`chebyshev_exp`].
#[derive(Default)]
pub struct ChebyshevWork {
    bessel: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    prev: Vec<C64>,
    cur: Vec<C64>,
}

/// Number of Chebyshev terms for `exp(-i dt H)` when `dt * (hi - lo) / 2 = alpha`.
pub fn chebyshev_terms(alpha: f64) -> usize {
    (alpha + 8.0 * alpha.max(1.0).cbrt() + 12.0).ceil() as usize
}

/// `x <- exp(-i dt H) x` by a Chebyshev expansion on the Gershgorin interval.
/// Accurate to roughly machine precision; the cost grows linearly with
/// `dt` times the spectral width.
pub fn chebyshev_exp(h: &SymTridiagonal, dt: f64, x: &mut [C64], work: &mut ChebyshevWork) {
    let n = h.dim();
    if n == 0 {
        return;
    }
    let (lo, hi) = h.spectral_bounds();
    let center = 0.5 * (hi + lo);
    let half = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
    let alpha = dt * half;
    let terms = chebyshev_terms(alpha);
    let ChebyshevWork { bessel, diag, off, prev, cur } = work;
    bessel_j_sequence(alpha, terms, bessel);

    // Hn = (H - center) / half has its spectrum in [-1, 1]; the recurrence
    // T_{k+1} = 2 Hn T_k - T_{k-1} is run with 2 Hn folded into diag/off.
    let two_over = 2.0 / half;
    diag.clear();
    diag.extend(h.diag.iter().map(|d| (d - center) * two_over));
    off.clear();
    off.extend(h.off.iter().map(|o| o * two_over));

    prev.clear();
    prev.extend_from_slice(x);
    cur.clear();
    cur.resize(n, C64::new(0.0, 0.0));

    // exp(-i alpha Hn) = J_0 + 2 sum_k (-i)^k J_k T_k(Hn)
    x.iter_mut().for_each(|xi| *xi *= bessel[0]);
    if terms > 1 {
        // T_1 = Hn x = (2 Hn x) / 2
        banded_step(diag, off, prev, cur, 0.5);
        let c = C64::new(0.0, -2.0 * bessel[1]);
        x.iter_mut().zip(cur.iter()).for_each(|(xi, v)| *xi += v * c);
    }
    let phases = [C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0)];
    for k in 2..terms {
        // prev <- 2 Hn cur - prev, which becomes T_k
        let c = phases[k % 4] * (2.0 * bessel[k]);
        banded_recur(diag, off, cur, prev, x, c);
        std::mem::swap(prev, cur);
    }
    let global = C64::from_polar(1.0, -center * dt);
    x.iter_mut().for_each(|xi| *xi *= global);
}

/// `out = s * (D v + O v)` for the tridiagonal `(diag, off)`.
fn banded_step(diag: &[f64], off: &[f64], v: &[C64], out: &mut [C64], s: f64) {
    let n = v.len();
    for i in 0..n {
        let mut acc = v[i] * diag[i];
        if i > 0 {
            acc += v[i - 1] * off[i - 1];
        }
        if i + 1 < n {
            acc += v[i + 1] * off[i];
        }
        out[i] = acc * s;
    }
}

/// `old <- A cur - old` and `x += c * old`, fused in one pass.
#[inline]
fn banded_recur(diag: &[f64], off: &[f64], cur: &[C64], old: &mut [C64], x: &mut [C64], c: C64) {
    let n = cur.len();
    if n == 1 {
        old[0] = cur[0] * diag[0] - old[0];
        x[0] += c * old[0];
        return;
    }
    old[0] = cur[0] * diag[0] + cur[1] * off[0] - old[0];
    x[0] += c * old[0];
    for i in 1..n - 1 {
        let v = cur[i - 1] * off[i - 1] + cur[i] * diag[i] + cur[i + 1] * off[i] - old[i];
        old[i] = v;
        x[i] += c * v;
    }
    let last = n - 1;
    old[last] = cur[last - 1] * off[last - 1] + cur[last] * diag[last] - old[last];
    x[last] += c * old[last];
}
