#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use lie_sac::liegroup::GroupKind;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

fn skew(w: &[f64]) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

/// Adjoint matrix written out per group in (omega, translation) coordinates.
pub fn ad_matrix(kind: GroupKind, x: &[f64]) -> DMatrix<f64> {
    match kind {
        GroupKind::SO3 => DMatrix::from_fn(3, 3, |i, j| skew(x)[(i, j)]),
        GroupKind::SE2 => {
            let (w, u, v) = (x[0], x[1], x[2]);
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, v, 0.0, -w, -u, w, 0.0])
        }
        GroupKind::SE3 => {
            let (w, v) = (skew(&x[0..3]), skew(&x[3..6]));
            let mut m = DMatrix::zeros(6, 6);
            m.view_mut((0, 0), (3, 3)).copy_from(&w);
            m.view_mut((3, 3), (3, 3)).copy_from(&w);
            m.view_mut((3, 0), (3, 3)).copy_from(&v);
            m
        }
    }
}

/// Bernoulli numbers B_0..B_{n-1} with B_1 = -1/2.
pub fn bernoulli(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n];
    b[0] = 1.0;
    for m in 1..n {
        // sum_{k<m} C(m+1, k) B_k = -(m+1) B_m
        let mut s = 0.0;
        let mut c = 1.0;
        for (k, bk) in b.iter().enumerate().take(m) {
            s += c * bk;
            c = c * (m + 1 - k) as f64 / (k + 1) as f64;
        }
        b[m] = -s / (m + 1) as f64;
    }
    b
}

/// `sum_j ad^j / (j+1)!` and `sum_j B_j ad^j / j!`, `terms` terms each.
pub fn dexp_series(ad: &DMatrix<f64>, terms: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ad.nrows();
    let b = bernoulli(terms);
    let mut pow = DMatrix::identity(n, n);
    let mut fact = 1.0;
    let (mut d, mut di) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    for (j, bj) in b.iter().enumerate() {
        // fact = j!
        d += &pow / (fact * (j + 1) as f64);
        di += &pow * (bj / fact);
        pow = &pow * ad;
        fact *= (j + 1) as f64;
    }
    (d, di)
}

/// Algebra vector with rotation norm in `[lo, hi]` and unit-scale translation.
pub fn random_algebra(rng: &mut ChaCha8Rng, kind: GroupKind, lo: f64, hi: f64) -> Vec<f64> {
    let r = match kind {
        GroupKind::SE2 => 1,
        _ => 3,
    };
    let mut w: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let target = rng.gen_range(lo..=hi);
    let sign = if r == 1 && rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    w.iter_mut().for_each(|x| *x *= sign * target / n);
    w.extend((r..kind.dim()).map(|_| rng.gen_range(-1.0..1.0)));
    w
}

// ---------------------------------------------------------------------------
// Coordinate-space SAC for a damped double integrator, written without the
// group machinery. Mirrors the discretization of the library.

#[derive(Clone, Debug)]
pub struct Sched {
    pub nominal: DVector<f64>,
    pub segs: Vec<(f64, f64, DVector<f64>)>,
}

impl Sched {
    pub fn with(&self, a: f64, b: f64, u: DVector<f64>) -> Sched {
        if b <= a {
            return self.clone();
        }
        let mut segs = Vec::new();
        for (s, e, v) in &self.segs {
            if *s < e.min(a) {
                segs.push((*s, e.min(a), v.clone()));
            }
            if s.max(b) < *e {
                segs.push((s.max(b), *e, v.clone()));
            }
        }
        segs.push((a, b, u));
        segs.sort_by(|x, y| x.0.total_cmp(&y.0));
        Sched { nominal: self.nominal.clone(), segs }
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        self.segs.iter().find(|s| s.0 <= t && t < s.1).map_or_else(|| self.nominal.clone(), |s| s.2.clone())
    }

    pub fn at_left(&self, t: f64) -> DVector<f64> {
        self.segs.iter().find(|s| s.0 < t && t <= s.1).map_or_else(|| self.nominal.clone(), |s| s.2.clone())
    }

    fn knots(&self, t0: f64, h: f64, dt: f64) -> Vec<f64> {
        let n = ((h / dt) - 1e-9).ceil().max(1.0) as usize;
        let mut ts: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
        ts.push(t0 + h);
        let extra: Vec<f64> = self.segs.iter().flat_map(|s| [s.0, s.1]).filter(|&x| x > t0 && x < t0 + h).collect();
        if !extra.is_empty() {
            ts.extend(extra);
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|b, a| (*b - *a).abs() < 1e-12);
        }
        ts
    }
}

#[derive(Clone, Debug)]
pub struct CoordSac {
    pub damping: f64,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    /// Position, velocity and terminal weights; `p_term` is on `(p, v)`.
    pub m: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p_term: DMatrix<f64>,
    pub p_d: DVector<f64>,
    pub v_d: DVector<f64>,
    pub u_nom: DVector<f64>,
    pub horizon: f64,
    pub sample_dt: f64,
    pub t_calc: f64,
    pub lambda0: f64,
    pub beta: f64,
    pub backtracks: u32,
    pub zeta: f64,
    pub gamma: f64,
    pub r: DVector<f64>,
    pub dt: f64,
    pub held: Vec<(f64, f64, DVector<f64>)>,
}

pub struct CoordStep {
    pub j1: f64,
    pub committed: Vec<(f64, f64, DVector<f64>)>,
    pub action: Option<(f64, f64, DVector<f64>)>,
}

impl CoordSac {
    fn k(&self) -> usize {
        self.p_d.len()
    }

    fn f(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let v = x.rows(k, k);
        let mut out = DVector::zeros(2 * k);
        out.rows_mut(0, k).copy_from(&v);
        out.rows_mut(k, k).copy_from(&(u - v * self.damping));
        out
    }

    fn err(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let k = self.k();
        (x.rows(0, k) - &self.p_d, x.rows(k, k) - &self.v_d)
    }

    fn stage(&self, x: &DVector<f64>) -> f64 {
        let (ep, ev) = self.err(x);
        0.5 * (ep.dot(&(&self.m * &ep)) + ev.dot(&(&self.q * &ev)))
    }

    fn stage_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let (ep, ev) = self.err(x);
        let k = self.k();
        let mut g = DVector::zeros(2 * k);
        g.rows_mut(0, k).copy_from(&(&self.m * ep));
        g.rows_mut(k, k).copy_from(&(&self.q * ev));
        g
    }

    fn terminal(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (ep, ev) = self.err(x);
        let e = DVector::from_iterator(2 * self.k(), ep.iter().chain(ev.iter()).copied());
        let pe = &self.p_term * &e;
        (0.5 * e.dot(&pe), pe)
    }

    pub fn rollout(&self, x0: &DVector<f64>, t0: f64, h: f64, s: &Sched, dt: f64) -> (Vec<f64>, Vec<DVector<f64>>) {
        let ts = s.knots(t0, h, dt);
        let mut xs = vec![x0.clone()];
        for w in ts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let hh = b - a;
            let (u0, um, u1) = (s.at(a), s.at(0.5 * (a + b)), s.at_left(b));
            let x = xs.last().unwrap();
            let k1 = self.f(x, &u0);
            let k2 = self.f(&(x + &k1 * (0.5 * hh)), &um);
            let k3 = self.f(&(x + &k2 * (0.5 * hh)), &um);
            let k4 = self.f(&(x + &k3 * hh), &u1);
            xs.push(x + (k1 + (k2 + k3) * 2.0 + k4) * (hh / 6.0));
        }
        (ts, xs)
    }

    pub fn objective(&self, ts: &[f64], xs: &[DVector<f64>]) -> f64 {
        let mut j = 0.0;
        for k in 1..ts.len() {
            j += 0.5 * (ts[k] - ts[k - 1]) * (self.stage(&xs[k - 1]) + self.stage(&xs[k]));
        }
        j + self.terminal(xs.last().unwrap()).0
    }

    fn costate(&self, ts: &[f64], xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = ts.len();
        let k = self.k();
        let mut rho = vec![DVector::zeros(2 * k); n];
        rho[n - 1] = self.terminal(&xs[n - 1]).1;
        // rho' = -A^T rho - grad, A = [[0, I], [0, -c I]]
        let rhs = |x: &DVector<f64>, r: &DVector<f64>| {
            let mut at_r = DVector::zeros(2 * k);
            at_r.rows_mut(k, k).copy_from(&(r.rows(0, k) - r.rows(k, k) * self.damping));
            -at_r - self.stage_grad(x)
        };
        for i in (0..n - 1).rev() {
            let h = ts[i + 1] - ts[i];
            let mid = (&xs[i] + &xs[i + 1]) * 0.5;
            let r1 = &rho[i + 1];
            let k1 = rhs(&xs[i + 1], r1);
            let k2 = rhs(&mid, &(r1 - &k1 * (0.5 * h)));
            let k3 = rhs(&mid, &(r1 - &k2 * (0.5 * h)));
            let k4 = rhs(&xs[i], &(r1 - &k3 * h));
            rho[i] = r1 - (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        rho
    }

    fn lerp(ts: &[f64], vs: &[DVector<f64>], t: f64) -> DVector<f64> {
        let mut i = 0;
        while i + 2 < ts.len() && ts[i + 1] <= t {
            i += 1;
        }
        let a = ((t - ts[i]) / (ts[i + 1] - ts[i])).clamp(0.0, 1.0);
        &vs[i] * (1.0 - a) + &vs[i + 1] * a
    }

    pub fn step(&mut self, x: &DVector<f64>, t: f64) -> CoordStep {
        let k = self.k();
        self.held.retain(|s| s.1 > t);
        let committed: Vec<_> = self
            .held
            .iter()
            .filter_map(|(a, b, u)| {
                let (s, e) = (a.max(t), b.min(t + self.dt));
                (e > s).then(|| (s, e, u.clone()))
            })
            .collect();
        let base = Sched { nominal: self.u_nom.clone(), segs: self.held.clone() };
        let (ts, xs) = self.rollout(x, t, self.horizon, &base, self.sample_dt);
        let j1 = self.objective(&ts, &xs);
        let rho = self.costate(&ts, &xs);
        let alpha = self.gamma * j1;
        let mut best: Option<(f64, f64, DVector<f64>)> = None;
        let mut j = 0;
        loop {
            let tau = t + self.t_calc + j as f64 * self.sample_dt;
            if tau > t + self.horizon + 1e-9 {
                break;
            }
            let tau = tau.min(t + self.horizon);
            j += 1;
            let r = Self::lerp(&ts, &rho, tau);
            let u1 = base.at(tau);
            let p = r.rows(k, k).into_owned();
            let rp = p.component_div(&self.r);
            let raw = &u1 + &rp * (alpha / (1.0 + p.dot(&rp)));
            let u2 = DVector::from_iterator(k, (0..k).map(|i| raw[i].clamp(self.u_min[i], self.u_max[i])));
            let mig = p.dot(&(&u2 - &u1));
            if mig < 0.0 && best.as_ref().is_none_or(|b| mig < b.0) {
                best = Some((mig, tau, u2));
            }
        }
        let mut action = None;
        if let Some((mig, tau, u2)) = best {
            let cap = t + self.horizon - tau;
            let mut lambda = self.lambda0;
            for _ in 0..=self.backtracks {
                let lam = lambda.min(cap);
                if lam > 0.0 {
                    let s = base.with(tau, tau + lam, u2.clone());
                    let (ts2, xs2) = self.rollout(x, t, self.horizon, &s, self.sample_dt);
                    if self.objective(&ts2, &xs2) - j1 <= self.zeta * lam * mig {
                        action = Some((tau, tau + lam, u2.clone()));
                        break;
                    }
                }
                lambda *= self.beta;
            }
        }
        if let Some((a, b, u)) = &action {
            self.held = base.with(*a, *b, u.clone()).segs;
        }
        CoordStep { j1, committed, action }
    }

    /// Plant step under the committed controls.
    pub fn advance(
        &self,
        x: &DVector<f64>,
        t: f64,
        committed: &[(f64, f64, DVector<f64>)],
        substeps: usize,
    ) -> DVector<f64> {
        let s = Sched { nominal: self.u_nom.clone(), segs: committed.to_vec() };
        let (_, xs) = self.rollout(x, t, self.dt, &s, self.dt / substeps as f64);
        xs.last().unwrap().clone()
    }
}
