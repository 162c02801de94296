//! Algorithmic-time integrators for field flows and a Brent line search.

use crate::dynamics::ControlField;
use crate::error::{Error, Result};

pub const DEFAULT_ATOL: f64 = 1e-6;
pub const DEFAULT_RTOL: f64 = 1e-6;
pub const DEFAULT_DS_MIN: f64 = 1e-6;
pub const DEFAULT_DS_MAX: f64 = 0.1;
pub const DEFAULT_MAX_STEPS: usize = 100_000;

const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MAX_SHRINK: f64 = 0.1;

/// Initial field, `s` interval and step control for one flow.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub initial: ControlField,
    pub s_span: (f64, f64),
    pub atol: f64,
    pub rtol: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Accepted-step budget; exhausting it ends the run as [`Termination::StepLimit`].
    pub max_steps: usize,
}

impl FlowProblem {
    pub fn new(initial: ControlField, s_span: (f64, f64)) -> Self {
        FlowProblem {
            initial,
            s_span,
            atol: DEFAULT_ATOL,
            rtol: DEFAULT_RTOL,
            ds_min: DEFAULT_DS_MIN,
            ds_max: DEFAULT_DS_MAX,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_tolerances(mut self, atol: f64, rtol: f64) -> Self {
        self.atol = atol;
        self.rtol = rtol;
        self
    }

    pub fn with_step_bounds(mut self, ds_min: f64, ds_max: f64) -> Self {
        self.ds_min = ds_min;
        self.ds_max = ds_max;
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    fn validate(&self) -> Result<()> {
        let (s0, s1) = self.s_span;
        if !(s0.is_finite() && s1.is_finite() && s1 > s0) {
            return Err(Error::InvalidInput(format!("s span [{s0}, {s1}] must be finite and increasing")));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(Error::InvalidInput("integration tolerances must be positive".into()));
        }
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds_max) {
            return Err(Error::InvalidInput(format!(
                "step bounds need 0 < ds_min <= ds_max, got [{}, {}]",
                self.ds_min, self.ds_max
            )));
        }
        Ok(())
    }
}

/// Returned by an observer after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObserverAction {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedEnd,
    /// The observer asked to stop.
    Stopped,
    StepLimit,
}

#[derive(Clone, Debug)]
pub struct IntegrationReport {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    /// Accepted `s` values, starting with `s0`; strictly increasing.
    pub s_values: Vec<f64>,
    pub field: ControlField,
    pub termination: Termination,
}

/// Right-hand side `d eps / ds` at `(s, field)`; `step` is the step being attempted.
pub trait FlowRhs {
    fn eval(&mut self, s: f64, field: &ControlField, step: f64) -> Result<Vec<f64>>;
}

impl<F> FlowRhs for F
where
    F: FnMut(f64, &ControlField, f64) -> Result<Vec<f64>>,
{
    fn eval(&mut self, s: f64, field: &ControlField, step: f64) -> Result<Vec<f64>> {
        self(s, field, step)
    }
}

/// Called with `(s, field)` at the initial point and after every accepted step.
pub trait FlowObserver {
    fn observe(&mut self, s: f64, field: &ControlField) -> Result<ObserverAction>;
}

impl<F> FlowObserver for F
where
    F: FnMut(f64, &ControlField) -> Result<ObserverAction>,
{
    fn observe(&mut self, s: f64, field: &ControlField) -> Result<ObserverAction> {
        self(s, field)
    }
}

/// Observer that never stops the run.
pub fn no_observer(_: f64, _: &ControlField) -> Result<ObserverAction> {
    Ok(ObserverAction::Continue)
}

struct Driver<'a, R> {
    rhs: &'a mut R,
    q: usize,
    evaluations: usize,
}

impl<R: FlowRhs> Driver<'_, R> {
    fn eval(&mut self, s: f64, field: &ControlField, step: f64) -> Result<Vec<f64>> {
        self.evaluations += 1;
        let d = self.rhs.eval(s, field, step).map_err(|e| e.at_step(s))?;
        if d.len() != self.q {
            return Err(Error::Dimension(format!("flow derivative has {} samples, field has {}", d.len(), self.q)).at_step(s));
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow derivative").at_step(s));
        }
        Ok(d)
    }
}

fn combine(field: &ControlField, h: f64, terms: &[(f64, &[f64])]) -> Result<ControlField> {
    let mut samples = field.samples().to_vec();
    for (c, k) in terms {
        if *c != 0.0 {
            for (y, d) in samples.iter_mut().zip(k.iter()) {
                *y += h * c * d;
            }
        }
    }
    ControlField::new(samples)
}

/// Fixed-step runs share this loop; `step` advances one step of length `h`.
fn fixed_step<R, O, S>(problem: &FlowProblem, ds: f64, rhs: &mut R, observer: &mut O, mut step: S) -> Result<IntegrationReport>
where
    R: FlowRhs,
    O: FlowObserver,
    S: FnMut(&mut Driver<'_, R>, f64, &ControlField, f64) -> Result<ControlField>,
{
    problem.validate()?;
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {ds}")));
    }
    let (s0, s1) = problem.s_span;
    let mut driver = Driver {
        rhs,
        q: problem.initial.len(),
        evaluations: 0,
    };
    let mut field = problem.initial.clone();
    let mut s_values = vec![s0];
    let mut termination = Termination::ReachedEnd;
    if observer.observe(s0, &field)? == ObserverAction::Stop {
        termination = Termination::Stopped;
    }
    let n = ((s1 - s0) / ds - 1e-9).ceil().max(1.0) as usize;
    let mut k = 0;
    while termination == Termination::ReachedEnd && k < n {
        if k == problem.max_steps {
            termination = Termination::StepLimit;
            break;
        }
        let s = s0 + k as f64 * ds;
        let next = if k + 1 == n { s1 } else { s0 + (k + 1) as f64 * ds };
        field = step(&mut driver, s, &field, next - s)?;
        k += 1;
        s_values.push(next);
        if observer.observe(next, &field)? == ObserverAction::Stop {
            termination = Termination::Stopped;
        }
    }
    Ok(IntegrationReport {
        accepted_steps: k,
        rejected_steps: 0,
        rhs_evaluations: driver.evaluations,
        s_values,
        field,
        termination,
    })
}

/// Forward Euler with fixed step `ds`; the last step is shortened to land on `s1`.
pub fn euler_integrate<R: FlowRhs, O: FlowObserver>(
    problem: &FlowProblem,
    ds: f64,
    mut rhs: R,
    mut observer: O,
) -> Result<IntegrationReport> {
    fixed_step(problem, ds, &mut rhs, &mut observer, |d, s, y, h| {
        let k1 = d.eval(s, y, h)?;
        combine(y, h, &[(1.0, &k1)])
    })
}

/// Classical fourth-order Runge-Kutta with fixed step `ds`.
pub fn rk4_integrate<R: FlowRhs, O: FlowObserver>(
    problem: &FlowProblem,
    ds: f64,
    mut rhs: R,
    mut observer: O,
) -> Result<IntegrationReport> {
    fixed_step(problem, ds, &mut rhs, &mut observer, |d, s, y, h| {
        let k1 = d.eval(s, y, h)?;
        let k2 = d.eval(s + 0.5 * h, &combine(y, h, &[(0.5, &k1)])?, h)?;
        let k3 = d.eval(s + 0.5 * h, &combine(y, h, &[(0.5, &k2)])?, h)?;
        let k4 = d.eval(s + h, &combine(y, h, &[(1.0, &k3)])?, h)?;
        combine(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
    })
}

// Cash-Karp tableau.
const C: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.2, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [0.3, -0.9, 1.2, 0.0, 0.0],
    [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
];
/// Fifth-order weights.
const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
/// Fourth-order embedded weights.
const B4: [f64; 6] = [2825.0 / 27648.0, 0.0, 18575.0 / 48384.0, 13525.0 / 55296.0, 277.0 / 14336.0, 0.25];

/// One Cash-Karp step: the fifth-order solution and the RMS scaled error.
fn cash_karp_step<R: FlowRhs>(
    d: &mut Driver<'_, R>,
    s: f64,
    y: &ControlField,
    k1: &[f64],
    h: f64,
    atol: f64,
    rtol: f64,
) -> Result<(ControlField, f64)> {
    let mut k: Vec<Vec<f64>> = vec![k1.to_vec()];
    for stage in 1..6 {
        let terms: Vec<(f64, &[f64])> = (0..stage).map(|j| (A[stage][j], k[j].as_slice())).collect();
        let ys = combine(y, h, &terms)?;
        k.push(d.eval(s + C[stage] * h, &ys, h)?);
    }
    let terms: Vec<(f64, &[f64])> = (0..6).map(|j| (B5[j], k[j].as_slice())).collect();
    let y5 = combine(y, h, &terms)?;
    let q = y.len();
    let mut sum = 0.0;
    for i in 0..q {
        let e: f64 = h * (0..6).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
        let scale = atol + rtol * y.samples()[i].abs();
        sum += (e / scale).powi(2);
    }
    Ok((y5, (sum / q as f64).sqrt()))
}

/// Adaptive embedded 4(5) Cash-Karp integration.
///
/// A step is accepted when the RMS of the componentwise scaled errors is at
/// most 1; the next step is `0.9 err^(-1/5)` times the current one, growing at
/// most 5x, clamped to `[ds_min, ds_max]`. Needing a step below `ds_min` is a
/// stall error.
pub fn rkck_adaptive<R: FlowRhs, O: FlowObserver>(problem: &FlowProblem, mut rhs: R, mut observer: O) -> Result<IntegrationReport> {
    problem.validate()?;
    let (s0, s1) = problem.s_span;
    let mut driver = Driver {
        rhs: &mut rhs,
        q: problem.initial.len(),
        evaluations: 0,
    };
    let mut field = problem.initial.clone();
    let mut s = s0;
    let mut s_values = vec![s0];
    let (mut accepted, mut rejected) = (0, 0);
    let mut h = problem.ds_max;
    let mut termination = Termination::ReachedEnd;
    if observer.observe(s0, &field)? == ObserverAction::Stop {
        termination = Termination::Stopped;
    }
    let mut k1: Option<Vec<f64>> = None;
    while termination == Termination::ReachedEnd && s < s1 {
        if accepted == problem.max_steps {
            termination = Termination::StepLimit;
            break;
        }
        // Land exactly on s1 rather than leave a sliver.
        let remaining = s1 - s;
        let last = h >= remaining * (1.0 - 1e-12);
        let step = if last { remaining } else { h };
        let k = match k1.take() {
            Some(k) => k,
            None => driver.eval(s, &field, step)?,
        };
        let (candidate, err) = cash_karp_step(&mut driver, s, &field, &k, step, problem.atol, problem.rtol)?;
        let factor = if err == 0.0 {
            MAX_GROWTH
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MAX_SHRINK, MAX_GROWTH)
        };
        if err <= 1.0 {
            accepted += 1;
            s = if last { s1 } else { s + step };
            field = candidate;
            s_values.push(s);
            h = (step * factor).clamp(problem.ds_min, problem.ds_max);
            if observer.observe(s, &field)? == ObserverAction::Stop {
                termination = Termination::Stopped;
            }
        } else {
            rejected += 1;
            let next = step * factor;
            if next < problem.ds_min {
                return Err(Error::Stall { s, step: next, error: err });
            }
            h = next.min(problem.ds_max);
            k1 = Some(k);
        }
    }
    Ok(IntegrationReport {
        accepted_steps: accepted,
        rejected_steps: rejected,
        rhs_evaluations: driver.evaluations,
        s_values,
        field,
        termination,
    })
}

pub const LINE_SEARCH_XTOL: f64 = 1e-4;
pub const LINE_SEARCH_MAX_EVALUATIONS: usize = 100;
/// Evaluations spent expanding the bracket before giving up.
const BRACKET_EVALUATIONS: usize = 50;
const GOLDEN: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const PARABOLIC_LIMIT: f64 = 100.0;
const TINY: f64 = 1e-20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub step: f64,
    pub value: f64,
    pub evaluations: usize,
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(f64) -> Result<f64>> Counted<F> {
    fn eval(&mut self, x: f64) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("line-search objective"));
        }
        Ok(v)
    }
}

/// Minimizes `objective` along a ray: brackets a minimum starting from the
/// points 0 and `bracket_seed` by parabolic extrapolation, then refines it
/// with Brent's method to relative step tolerance 1e-4.
pub fn brent_line_search<F>(objective: F, bracket_seed: f64) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(bracket_seed.is_finite() && bracket_seed != 0.0) {
        return Err(Error::InvalidInput(format!("bracket seed must be finite and nonzero, got {bracket_seed}")));
    }
    let mut f = Counted { f: objective, evaluations: 0 };
    let (a, b, c) = bracket(&mut f, 0.0, bracket_seed)?;
    brent(&mut f, a, b, c)
}

/// Returns `(a, b, c)` with `b` between `a` and `c` and `f(b)` below both ends.
fn bracket<F: FnMut(f64) -> Result<f64>>(f: &mut Counted<F>, a0: f64, b0: f64) -> Result<(f64, f64, f64)> {
    let (mut ax, mut bx) = (a0, b0);
    let (mut fa, mut fb) = (f.eval(ax)?, f.eval(bx)?);
    if fb > fa {
        std::mem::swap(&mut ax, &mut bx);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut cx = bx + GOLDEN * (bx - ax);
    let mut fc = f.eval(cx)?;
    while fb >= fc {
        if f.evaluations >= BRACKET_EVALUATIONS {
            return Err(Error::NoBracket {
                evaluations: f.evaluations,
            });
        }
        let r = (bx - ax) * (fb - fc);
        let q = (bx - cx) * (fb - fa);
        let denom = 2.0 * (q - r).abs().max(TINY).copysign(q - r);
        let mut u = bx - ((bx - cx) * q - (bx - ax) * r) / denom;
        let ulim = bx + PARABOLIC_LIMIT * (cx - bx);
        let fu;
        if (bx - u) * (u - cx) > 0.0 {
            let v = f.eval(u)?;
            if v < fc {
                return Ok((bx, u, cx));
            } else if v > fb {
                return Ok((ax, bx, u));
            }
            u = cx + GOLDEN * (cx - bx);
            fu = f.eval(u)?;
        } else if (cx - u) * (u - ulim) > 0.0 {
            let v = f.eval(u)?;
            if v < fc {
                bx = cx;
                cx = u;
                u = cx + GOLDEN * (cx - bx);
                fb = fc;
                fc = v;
                fu = f.eval(u)?;
            } else {
                fu = v;
            }
        } else if (u - ulim) * (ulim - cx) >= 0.0 {
            u = ulim;
            fu = f.eval(u)?;
        } else {
            u = cx + GOLDEN * (cx - bx);
            fu = f.eval(u)?;
        }
        ax = bx;
        bx = cx;
        cx = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    Ok((ax, bx, cx))
}

fn brent<F: FnMut(f64) -> Result<f64>>(f: &mut Counted<F>, ax: f64, bx: f64, cx: f64) -> Result<LineSearchResult> {
    let (mut a, mut b) = if ax < cx { (ax, cx) } else { (cx, ax) };
    let (mut x, mut w, mut v) = (bx, bx, bx);
    let mut fx = f.eval(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    while f.evaluations < LINE_SEARCH_MAX_EVALUATIONS {
        let xm = 0.5 * (a + b);
        let tol1 = LINE_SEARCH_XTOL * x.abs() + 1e-10;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x) {
                e = if x >= xm { a - x } else { b - x };
                d = CGOLD * e;
            } else {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
            }
        } else {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f.eval(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, w, x) = (w, x, u);
            (fv, fw, fx) = (fw, fx, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, w) = (w, u);
                (fv, fw) = (fw, fu);
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(LineSearchResult {
        step: x,
        value: fx,
        evaluations: f.evaluations,
    })
}
