//! Constrained trajectory solver.
//!
//! Minimizes a smooth objective over the joint trajectory subject to per-joint
//! box limits and linear inter-step velocity bounds. The first step is pinned
//! to the initial grasp configuration.
//!
//! The solver is an SQP variant. Each iteration builds a quadratic model from a
//! damped BFGS approximation of the objective Hessian plus the exact Hessian of
//! the velocity penalty and solves it under the box constraints. A weak Wolfe
//! line search picks the step length. The velocity bounds enter through an augmented
//! Lagrangian whose multipliers and penalty are updated between inner solves.
//! Optional nonlinear per-step inequalities ([`StepConstraints`]) share that
//! mechanism with their own penalty parameter.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::HandModel;

/// `T + 1` joint configurations sampled every `dt` seconds.
///
/// Stored as an `n_dof x (T + 1)` matrix, so each step is a contiguous column
/// and the flat layout is timestep-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    steps: DMatrix<f64>,
    dt: f64,
}

impl Trajectory {
    pub fn from_matrix(steps: DMatrix<f64>, dt: f64) -> Result<Self> {
        if steps.ncols() < 2 || steps.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "trajectory needs at least 2 steps and 1 joint, got {} x {}",
                steps.ncols(),
                steps.nrows()
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("timestep must be > 0, got {dt}")));
        }
        Ok(Self { steps, dt })
    }

    pub fn from_steps(steps: &[Vec<f64>], dt: f64) -> Result<Self> {
        let n = steps.first().map_or(0, Vec::len);
        if steps.iter().any(|s| s.len() != n) {
            return Err(Error::InvalidInput("trajectory steps have different lengths".into()));
        }
        let flat: Vec<f64> = steps.iter().flatten().copied().collect();
        Self::from_matrix(DMatrix::from_vec(n, steps.len(), flat), dt)
    }

    /// Holds `q` for `horizon + 1` steps.
    pub fn constant(q: &[f64], horizon: usize, dt: f64) -> Result<Self> {
        let m = DMatrix::from_fn(q.len(), horizon + 1, |j, _| q[j]);
        Self::from_matrix(m, dt)
    }

    pub fn dof(&self) -> usize {
        self.steps.nrows()
    }

    /// Number of intervals `T`.
    pub fn horizon(&self) -> usize {
        self.steps.ncols() - 1
    }

    pub fn len(&self) -> usize {
        self.steps.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, t: usize) -> &[f64] {
        let n = self.dof();
        &self.steps.as_slice()[t * n..(t + 1) * n]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.dof();
        &mut self.steps.as_mut_slice()[t * n..(t + 1) * n]
    }

    pub fn flat(&self) -> &[f64] {
        self.steps.as_slice()
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.steps.as_mut_slice()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.steps
    }

    pub fn to_steps(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|t| self.step(t).to_vec()).collect()
    }

    pub fn last(&self) -> &[f64] {
        self.step(self.horizon())
    }
}

/// Per-joint position limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl JointLimits {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidInput("joint limits must satisfy lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn from_model(model: &HandModel) -> Self {
        Self {
            lower: model.lower_limits(),
            upper: model.upper_limits(),
        }
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for ((v, lo), hi) in q.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// `max(0, |q[t] - q[t-1]| / dt - v_max)` for every step `t = 1..=T` (rows) and joint (columns).
pub fn velocity_residuals(traj: &Trajectory, v_max: f64) -> DMatrix<f64> {
    let n = traj.dof();
    DMatrix::from_fn(traj.horizon(), n, |r, j| {
        let t = r + 1;
        let v = (traj.step(t)[j] - traj.step(t - 1)[j]).abs() / traj.dt();
        (v - v_max).max(0.0)
    })
}

/// Largest box violation (radians) or velocity violation (rad/s).
pub fn max_violation(traj: &Trajectory, limits: &JointLimits, v_max: f64) -> f64 {
    let vel = velocity_residuals(traj, v_max).max();
    let mut boxv: f64 = 0.0;
    for t in 0..traj.len() {
        for (j, q) in traj.step(t).iter().enumerate() {
            boxv = boxv
                .max(limits.lower[j] - q)
                .max(q - limits.upper[j]);
        }
    }
    vel.max(boxv)
}

/// Clamps every configuration into the box. Idempotent.
pub fn project_box(traj: &Trajectory, limits: &JointLimits) -> Trajectory {
    let mut out = traj.clone();
    for t in 0..out.len() {
        limits.clamp(out.step_mut(t));
    }
    out
}

/// Objective consumed by [`solve`]: value and gradient in the trajectory's flat layout.
pub trait Objective {
    fn evaluate(&self, traj: &Trajectory) -> Result<(f64, DVector<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&Trajectory) -> Result<(f64, DVector<f64>)>,
{
    fn evaluate(&self, traj: &Trajectory) -> Result<(f64, DVector<f64>)> {
        self(traj)
    }
}

/// Nonlinear inequalities `c(q_t) <= 0` that each involve a single step.
pub trait StepConstraints {
    /// Values and gradients (over the step's joints) at step `t`. The number
    /// of constraints must not depend on `q`.
    fn evaluate(&self, t: usize, q: &[f64]) -> Result<Vec<(f64, DVector<f64>)>>;
}

/// No extra constraints.
pub struct Unconstrained;

impl StepConstraints for Unconstrained {
    fn evaluate(&self, _t: usize, _q: &[f64]) -> Result<Vec<(f64, DVector<f64>)>> {
        Ok(Vec::new())
    }
}

/// Largest value of `constraints` over the free steps `1..=T` (0 when none is violated).
pub fn step_constraint_violation<C: StepConstraints + ?Sized>(traj: &Trajectory, constraints: &C) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 1..traj.len() {
        for (c, _) in constraints.evaluate(t, traj.step(t))? {
            worst = worst.max(c);
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Velocity-bound tolerance, rad/s.
    pub feasibility_tolerance: f64,
    /// Infinity norm of the projected Lagrangian gradient.
    pub optimality_tolerance: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Diagonal damping added to every quadratic subproblem.
    pub levenberg: f64,
    /// Largest first step (radians) before curvature information exists.
    pub initial_step: f64,
    pub armijo: f64,
    pub max_qp_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            feasibility_tolerance: 1e-6,
            optimality_tolerance: 1e-6,
            initial_penalty: 1.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            levenberg: 1e-8,
            initial_step: 0.05,
            armijo: 1e-4,
            max_qp_iterations: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.feasibility_tolerance,
            self.optimality_tolerance,
            self.initial_penalty,
            self.max_penalty,
            self.initial_step,
            self.armijo,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.penalty_growth > 1.0) || self.levenberg < 0.0 {
            return Err(Error::InvalidInput("solver tolerances and parameters must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub final_cost: f64,
    pub initial_cost: f64,
    pub max_violation: f64,
    pub optimality: f64,
    pub wall_time_s: f64,
    pub message: String,
}

struct Constraints {
    n: usize,
    horizon: usize,
    dt: f64,
    v_max: f64,
}

impl Constraints {
    /// Signed step velocities `(q[t] - q[t-1]) / dt` for t = 1..=T, joint-minor.
    fn velocities(&self, fixed: &[f64], x: &DVector<f64>) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * self.horizon);
        for t in 1..=self.horizon {
            for j in 0..n {
                let cur = x[(t - 1) * n + j];
                let prev = if t == 1 { fixed[j] } else { x[(t - 2) * n + j] };
                out.push((cur - prev) / self.dt);
            }
        }
        out
    }

    /// Inequality values `c <= 0`: for each velocity, `v - vmax` then `-v - vmax`.
    fn values(&self, fixed: &[f64], x: &DVector<f64>) -> Vec<f64> {
        self.velocities(fixed, x)
            .into_iter()
            .flat_map(|v| [v - self.v_max, -v - self.v_max])
            .collect()
    }

    /// Adds `sum_i coef_i * grad c_i` to `out`.
    fn add_gradient(&self, coef: &[f64], out: &mut DVector<f64>) {
        let n = self.n;
        for (k, pair) in coef.chunks(2).enumerate() {
            let w = (pair[0] - pair[1]) / self.dt;
            if w == 0.0 {
                continue;
            }
            let t = k / n + 1;
            let j = k % n;
            out[(t - 1) * n + j] += w;
            if t > 1 {
                out[(t - 2) * n + j] -= w;
            }
        }
    }

    /// Adds `mu * sum_{active} grad c grad c^T` to `h`.
    fn add_penalty_hessian(&self, active: &[bool], mu: f64, h: &mut DMatrix<f64>) {
        let n = self.n;
        let s = mu / (self.dt * self.dt);
        for (k, pair) in active.chunks(2).enumerate() {
            let count = pair.iter().filter(|a| **a).count() as f64;
            if count == 0.0 {
                continue;
            }
            let t = k / n + 1;
            let j = k % n;
            let a = (t - 1) * n + j;
            h[(a, a)] += s * count;
            if t > 1 {
                let b = (t - 2) * n + j;
                h[(b, b)] += s * count;
                h[(a, b)] -= s * count;
                h[(b, a)] -= s * count;
            }
        }
    }
}

struct Evaluator<'a, O: Objective> {
    objective: &'a O,
    template: Trajectory,
    n: usize,
}

impl<O: Objective> Evaluator<'_, O> {
    fn trajectory(&self, x: &DVector<f64>) -> Trajectory {
        let mut traj = self.template.clone();
        traj.flat_mut()[self.n..].copy_from_slice(x.as_slice());
        traj
    }

    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (f, g) = self.objective.evaluate(&self.trajectory(x))?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("objective returned a non-finite value or gradient".into()));
        }
        if g.len() != self.template.flat().len() {
            return Err(Error::Numerical(format!(
                "objective gradient has length {}, expected {}",
                g.len(),
                self.template.flat().len()
            )));
        }
        Ok((f, g.rows(self.n, g.len() - self.n).into_owned()))
    }

    /// Step constraints at steps `1..=T`, with the gradient block offset of each.
    fn extras<C: StepConstraints + ?Sized>(&self, constraints: &C, x: &DVector<f64>) -> Result<Extras> {
        let n = self.n;
        let horizon = x.len() / n;
        let mut out = Extras::default();
        for t in 1..=horizon {
            for (c, g) in constraints.evaluate(t, &x.as_slice()[(t - 1) * n..t * n])? {
                if !c.is_finite() || g.len() != n || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("step constraint at step {t} is malformed")));
                }
                out.values.push(c);
                out.grads.push(g);
                out.offsets.push((t - 1) * n);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default)]
struct Extras {
    values: Vec<f64>,
    grads: Vec<DVector<f64>>,
    offsets: Vec<usize>,
}

impl Extras {
    fn violation(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(*v))
    }
}

struct AlState {
    lambda: Vec<f64>,
    mu: f64,
    extra_lambda: Vec<f64>,
    extra_mu: f64,
}

/// Augmented-Lagrangian penalty value, multiplier-weighted coefficients and the active set.
fn al_penalty(c: &[f64], lambda: &[f64], mu: f64) -> (f64, Vec<f64>, Vec<bool>) {
    let mut value = 0.0;
    let mut coef = Vec::with_capacity(c.len());
    let mut active = Vec::with_capacity(c.len());
    for (ci, li) in c.iter().zip(lambda) {
        let shifted = li + mu * ci;
        let pos = shifted.max(0.0);
        value += (pos * pos - li * li) / (2.0 * mu);
        coef.push(pos);
        active.push(shifted > 0.0);
    }
    (value, coef, active)
}

impl AlState {
    fn penalty(&self, c: &[f64]) -> (f64, Vec<f64>, Vec<bool>) {
        al_penalty(c, &self.lambda, self.mu)
    }
}

/// Point evaluation of the augmented Lagrangian.
struct Point {
    x: DVector<f64>,
    f: f64,
    grad_f: DVector<f64>,
    merit: f64,
    grad_merit: DVector<f64>,
    active: Vec<bool>,
    extras: Extras,
    extra_active: Vec<bool>,
}

fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    x.iter()
        .zip(g.iter())
        .enumerate()
        .map(|(i, (xi, gi))| ((xi - gi).clamp(lo[i], hi[i]) - xi).abs())
        .fold(0.0, f64::max)
}

/// Solves the trajectory problem starting from `initial`. Step 0 is held fixed.
pub fn solve<O: Objective>(
    initial: &Trajectory,
    objective: &O,
    limits: &JointLimits,
    v_max: f64,
    config: &SolverConfig,
) -> Result<(Trajectory, SolveReport)> {
    solve_constrained(initial, objective, &Unconstrained, limits, v_max, config)
}

/// [`solve`] with additional per-step inequalities.
pub fn solve_constrained<O: Objective, C: StepConstraints + ?Sized>(
    initial: &Trajectory,
    objective: &O,
    constraints: &C,
    limits: &JointLimits,
    v_max: f64,
    config: &SolverConfig,
) -> Result<(Trajectory, SolveReport)> {
    config.validate()?;
    if !(v_max > 0.0) {
        return Err(Error::InvalidInput("velocity limit must be > 0".into()));
    }
    let n = initial.dof();
    if limits.lower.len() != n || limits.upper.len() != n {
        return Err(Error::DofMismatch {
            expected: n,
            got: limits.lower.len(),
        });
    }
    let start = Instant::now();
    let initial = project_box(initial, limits);
    let horizon = initial.horizon();
    let m = n * horizon;
    let fixed: Vec<f64> = initial.step(0).to_vec();
    let lo = DVector::from_fn(m, |i, _| limits.lower[i % n]);
    let hi = DVector::from_fn(m, |i, _| limits.upper[i % n]);

    let eval = Evaluator {
        objective,
        template: initial.clone(),
        n,
    };
    let cons = Constraints {
        n,
        horizon,
        dt: initial.dt(),
        v_max,
    };
    let x0 = DVector::from_column_slice(&initial.flat()[n..]);
    let extras0 = eval.extras(constraints, &x0)?;
    let mut al = AlState {
        lambda: vec![0.0; 2 * m],
        mu: config.initial_penalty,
        extra_lambda: vec![0.0; extras0.values.len()],
        extra_mu: config.initial_penalty,
    };

    let point_at = |x: DVector<f64>, f: f64, grad_f: DVector<f64>, extras: Extras, al: &AlState| -> Point {
        let c = cons.values(&fixed, &x);
        let (pen, coef, active) = al.penalty(&c);
        let mut grad_merit = grad_f.clone();
        cons.add_gradient(&coef, &mut grad_merit);
        let (extra_pen, extra_coef, extra_active) = al_penalty(&extras.values, &al.extra_lambda, al.extra_mu);
        for (i, w) in extra_coef.iter().enumerate() {
            if *w != 0.0 {
                let mut block = grad_merit.rows_mut(extras.offsets[i], n);
                block.axpy(*w, &extras.grads[i], 1.0);
            }
        }
        Point {
            x,
            f,
            grad_f,
            merit: f + pen + extra_pen,
            grad_merit,
            active,
            extras,
            extra_active,
        }
    };

    let (f0, g0) = eval.eval(&x0)?;
    let initial_violation = max_violation(&initial, limits, v_max).max(extras0.violation());
    let mut cur = point_at(x0, f0, g0, extras0, &al);

    let mut hess = DMatrix::<f64>::zeros(m, m);
    let mut hess_ready = false;
    let mut iterations = 0usize;
    let mut outer = 0usize;
    let mut prev_violation = f64::INFINITY;
    let mut prev_extra_violation = f64::INFINITY;
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let mut optimality;

    loop {
        outer += 1;
        // Inner quasi-Newton solve for fixed multipliers.
        let mut stalled = false;
        let mut fresh_model = !hess_ready;
        loop {
            optimality = projected_gradient_norm(&cur.x, &cur.grad_merit, &lo, &hi);
            if optimality <= config.optimality_tolerance || iterations >= config.max_iterations {
                break;
            }
            if !hess_ready {
                let gmax = cur.grad_merit.amax().max(f64::MIN_POSITIVE);
                hess = DMatrix::identity(m, m) * (gmax / config.initial_step);
                hess_ready = true;
                fresh_model = true;
            }
            let mut model = hess.clone();
            cons.add_penalty_hessian(&cur.active, al.mu, &mut model);
            for (i, on) in cur.extra_active.iter().enumerate() {
                if *on {
                    let g = &cur.extras.grads[i];
                    let mut block = model.view_mut((cur.extras.offsets[i], cur.extras.offsets[i]), (n, n));
                    block.ger(al.extra_mu, g, g, 1.0);
                }
            }
            for i in 0..m {
                model[(i, i)] += config.levenberg;
            }
            let lower = &lo - &cur.x;
            let upper = &hi - &cur.x;
            let mut dir = solve_box_qp(&model, &cur.grad_merit, &lower, &upper, config.max_qp_iterations);
            let mut slope = cur.grad_merit.dot(&dir);
            if !(slope < 0.0) {
                // Model failed to give descent: fall back to the projected gradient.
                dir = DVector::from_fn(m, |i, _| {
                    (cur.x[i] - cur.grad_merit[i]).clamp(lo[i], hi[i]) - cur.x[i]
                });
                slope = cur.grad_merit.dot(&dir);
                let gmax = cur.grad_merit.amax().max(f64::MIN_POSITIVE);
                hess = DMatrix::identity(m, m) * (gmax / config.initial_step);
                if !(slope < 0.0) {
                    stalled = true;
                    break;
                }
            }

            // Weak Wolfe bracketing: steps that cross a kink of the objective
            // are accepted, which lets the curvature model learn the kink.
            let (mut a_lo, mut a_hi) = (0.0f64, f64::INFINITY);
            let mut alpha = 1.0;
            let mut best: Option<Point> = None;
            let mut accepted = None;
            for _ in 0..60 {
                let mut xt = &cur.x + &dir * alpha;
                for i in 0..m {
                    xt[i] = xt[i].clamp(lo[i], hi[i]);
                }
                let (ft, gt) = eval.eval(&xt)?;
                let et = eval.extras(constraints, &xt)?;
                let trial = point_at(xt, ft, gt, et, &al);
                if !(trial.merit <= cur.merit + config.armijo * alpha * slope) {
                    a_hi = alpha;
                } else {
                    let moved = &trial.x - &cur.x;
                    if trial.grad_merit.dot(&moved) / alpha < 0.9 * slope && alpha < 1e3 {
                        a_lo = alpha;
                        best = Some(trial);
                    } else {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha = if a_hi.is_finite() { 0.5 * (a_lo + a_hi) } else { 2.0 * alpha };
                if a_hi.is_finite() && a_hi - a_lo < 1e-12 {
                    break;
                }
            }
            let accepted = accepted.or(best);
            let Some(next) = accepted else {
                if fresh_model {
                    stalled = true;
                    break;
                }
                // Curvature model is stale (typically at a kink of the
                // objective): restart from a scaled identity.
                hess_ready = false;
                fresh_model = true;
                continue;
            };
            fresh_model = false;
            iterations += 1;

            let s = &next.x - &cur.x;
            let y = &next.grad_f - &cur.grad_f;
            bfgs_update(&mut hess, &s, &y, iterations == 1);
            cur = next;
        }

        let c = cons.values(&fixed, &cur.x);
        let velocity_violation = c.iter().fold(0.0f64, |a, v| a.max(*v));
        let extra_violation = cur.extras.violation();
        let violation = velocity_violation.max(extra_violation);
        let inner_done = optimality <= config.optimality_tolerance;

        if violation <= config.feasibility_tolerance && inner_done {
            converged = true;
            message = "optimal".into();
            break;
        }
        if iterations >= config.max_iterations {
            break;
        }
        if stalled && violation <= config.feasibility_tolerance {
            message = format!("line search stalled at projected gradient {optimality:.3e}");
            break;
        }
        // Multiplier and penalty update.
        for (li, ci) in al.lambda.iter_mut().zip(&c) {
            *li = (*li + al.mu * ci).max(0.0);
        }
        if velocity_violation > 0.25 * prev_violation {
            al.mu = (al.mu * config.penalty_growth).min(config.max_penalty);
        }
        prev_violation = velocity_violation;
        for (li, ci) in al.extra_lambda.iter_mut().zip(&cur.extras.values) {
            *li = (*li + al.extra_mu * ci).max(0.0);
        }
        if extra_violation > 0.25 * prev_extra_violation {
            al.extra_mu = (al.extra_mu * config.penalty_growth).min(config.max_penalty);
        }
        prev_extra_violation = extra_violation;
        cur = point_at(cur.x.clone(), cur.f, cur.grad_f.clone(), cur.extras.clone(), &al);
        let saturated = |v: f64, mu: f64| v <= config.feasibility_tolerance || mu >= config.max_penalty;
        if stalled && saturated(velocity_violation, al.mu) && saturated(extra_violation, al.extra_mu) {
            message = "penalty limit reached without feasibility".into();
            break;
        }
    }

    let mut result = eval.trajectory(&cur.x);
    let mut final_cost = cur.f;
    let mut violation = max_violation(&result, limits, v_max).max(step_constraint_violation(&result, constraints)?);
    if final_cost > f0 && initial_violation <= config.feasibility_tolerance {
        result = initial.clone();
        final_cost = f0;
        violation = initial_violation;
        converged = false;
        message = "no feasible improvement over the initial trajectory".into();
    }
    if violation > config.feasibility_tolerance {
        converged = false;
    }
    Ok((
        result,
        SolveReport {
            converged,
            iterations,
            outer_iterations: outer,
            final_cost,
            initial_cost: f0,
            max_violation: violation,
            optimality,
            wall_time_s: start.elapsed().as_secs_f64(),
            message,
        },
    ))
}

/// Damped BFGS update of the objective Hessian approximation.
fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: bool) {
    let sy = s.dot(y);
    if first && sy > 0.0 {
        let scale = y.dot(y) / sy;
        *b = DMatrix::identity(b.nrows(), b.ncols()) * scale;
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) || !sbs.is_finite() {
        return;
    }
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    b.ger(1.0 / sr, &r, &r, 1.0);
    b.ger(-1.0 / sbs, &bs, &bs, 1.0);
}

/// Minimizes `g^T d + d^T H d / 2` subject to `lower <= d <= upper` with a
/// projected Newton method on the free variables. `H` must be positive
/// definite; `lower <= 0 <= upper`.
pub(crate) fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    max_iter: usize,
) -> DVector<f64> {
    let m = g.len();
    let model = |d: &DVector<f64>| g.dot(d) + 0.5 * d.dot(&(h * d));
    let mut d = DVector::zeros(m);
    let mut q = 0.0;
    let scale = 1.0 + g.amax();
    for _ in 0..max_iter {
        let grad = g + h * &d;
        let pg = projected_gradient_norm(&d, &grad, lower, upper);
        if pg <= 1e-13 * scale {
            break;
        }
        let free: Vec<usize> = (0..m)
            .filter(|&i| !((d[i] <= lower[i] && grad[i] > 0.0) || (d[i] >= upper[i] && grad[i] < 0.0)))
            .collect();
        if free.is_empty() {
            break;
        }
        let hff = h.select_rows(&free).select_columns(&free);
        let gf = DVector::from_fn(free.len(), |i, _| -grad[free[i]]);
        let step = match hff.clone().cholesky() {
            Some(ch) => ch.solve(&gf),
            None => {
                let mut damped = hff;
                let shift = 1e-8 * (1.0 + damped.diagonal().amax());
                for i in 0..free.len() {
                    damped[(i, i)] += shift;
                }
                match damped.cholesky() {
                    Some(ch) => ch.solve(&gf),
                    None => gf.clone(),
                }
            }
        };
        let mut full = DVector::zeros(m);
        for (k, &i) in free.iter().enumerate() {
            full[i] = step[k];
        }
        let mut alpha = 1.0;
        let mut moved = false;
        while alpha > 1e-10 {
            let mut trial = &d + &full * alpha;
            for i in 0..m {
                trial[i] = trial[i].clamp(lower[i], upper[i]);
            }
            let qt = model(&trial);
            let decrease = grad.dot(&(&trial - &d));
            if qt <= q + 1e-4 * decrease.min(0.0) && qt <= q {
                moved = (&trial - &d).amax() > 0.0;
                d = trial;
                q = qt;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    d
}
