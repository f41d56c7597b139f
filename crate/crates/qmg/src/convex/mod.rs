//! Convex optimization engine: linear objectives under max-of-norm
//! constraints.
//!
//! Programs are stated over a real decision vector `x` with two constraint
//! families — spectral (`‖M₀ + Σ x_j M_j‖_op ≤ bound`) and Euclidean
//! (`‖v₀ + Σ x_j v_j‖₂ ≤ bound`) — plus linear equalities and a box.  Both
//! [`maximize_linear`] and [`minimize_max_norm`] run a Kelley cutting-plane
//! loop: solve the LP over the cuts accumulated so far, evaluate the true
//! norms at the LP optimum, and add one supporting hyperplane per violated
//! constraint, derived from the top singular pair (spectral) or the
//! normalized image (Euclidean).  The LP relaxation bounds the optimum from
//! one side, a feasible rounding from the other; the report carries both and
//! their gap.
//!
//! Determinism: the simplex pivots by Bland's rule, constraints are visited
//! in declaration order, and singular vectors are phase-fixed, so identical
//! inputs produce bit-identical reports.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{self, C64};
use crate::{Error, Result};

mod simplex;
mod transport;

pub use transport::transport_lp;
pub(crate) use transport::validate_metric;

use simplex::{LpOutcome, Row, RowKind};

/// Default tolerance on constraint violation and objective gap.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Cutting-plane iteration budget.
pub const ITERATION_CAP: usize = 20_000;
/// Box-growth budget when no analytic radius is supplied.
const MAX_DOUBLINGS: usize = 60;
/// Iterations with no movement of either side of the enclosure before a
/// solve returns its current (honest) enclosure instead of grinding on.
/// Steep, nearly parallel cuts can pin the relaxation a hair below the
/// true optimum while each new cut removes only one degenerate vertex;
/// the enclosure is sound throughout, so returning it early just reports
/// a larger-than-requested gap.
const STALL_LIMIT: usize = 300;

/// Affine map `x ↦ M₀ + Σ_j x_j M_j` into complex `r × c` matrices.
#[derive(Clone, Debug)]
pub struct AffineMatrixMap {
    pub constant: DMatrix<C64>,
    pub coeffs: Vec<DMatrix<C64>>,
}

impl AffineMatrixMap {
    pub fn new(constant: DMatrix<C64>, coeffs: Vec<DMatrix<C64>>) -> Self {
        for m in &coeffs {
            debug_assert_eq!(m.shape(), constant.shape(), "coefficient shape mismatch");
        }
        AffineMatrixMap { constant, coeffs }
    }

    /// Homogeneous map with zero constant term.
    pub fn homogeneous(rows: usize, cols: usize, coeffs: Vec<DMatrix<C64>>) -> Self {
        AffineMatrixMap::new(DMatrix::zeros(rows, cols), coeffs)
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<C64> {
        let mut m = self.constant.clone();
        for (j, mj) in self.coeffs.iter().enumerate() {
            let c = x[j];
            if c != 0.0 {
                m += mj * C64::new(c, 0.0);
            }
        }
        m
    }
}

/// Affine map `x ↦ v₀ + Σ_j x_j v_j` into complex coordinate columns.
#[derive(Clone, Debug)]
pub struct AffineVectorMap {
    pub constant: DVector<C64>,
    pub coeffs: Vec<DVector<C64>>,
}

impl AffineVectorMap {
    pub fn new(constant: DVector<C64>, coeffs: Vec<DVector<C64>>) -> Self {
        for v in &coeffs {
            debug_assert_eq!(v.len(), constant.len(), "coefficient length mismatch");
        }
        AffineVectorMap { constant, coeffs }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<C64> {
        let mut v = self.constant.clone();
        for (j, vj) in self.coeffs.iter().enumerate() {
            let c = x[j];
            if c != 0.0 {
                v += vj * C64::new(c, 0.0);
            }
        }
        v
    }
}

/// A norm constraint map: operator norm of a matrix map or Euclidean norm of
/// a vector map.
#[derive(Clone, Debug)]
pub enum ConstraintMap {
    Spectral(AffineMatrixMap),
    Euclidean(AffineVectorMap),
}

impl ConstraintMap {
    pub fn dim(&self) -> usize {
        match self {
            ConstraintMap::Spectral(m) => m.coeffs.len(),
            ConstraintMap::Euclidean(v) => v.coeffs.len(),
        }
    }

    /// True norm value at `x`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            ConstraintMap::Spectral(m) => linalg::op_norm(&m.eval(x)),
            ConstraintMap::Euclidean(v) => v.eval(x).norm(),
        }
    }

    /// Whether the constant term vanishes (so the norm is absolutely
    /// homogeneous in `x`).
    pub fn is_homogeneous(&self) -> bool {
        match self {
            ConstraintMap::Spectral(m) => m.constant.iter().all(|z| z.norm() == 0.0),
            ConstraintMap::Euclidean(v) => v.constant.iter().all(|z| z.norm() == 0.0),
        }
    }

    /// Supporting linearization at `x`: coefficients `(a, c₀)` with
    /// `a·y + c₀ ≤ ‖map(y)‖` for every `y`, tight at `x`.
    fn linearize(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        match self {
            ConstraintMap::Spectral(m) => {
                let (_, u, v) = linalg::top_singular_triplet(&m.eval(x));
                let a = DVector::from_iterator(
                    m.coeffs.len(),
                    m.coeffs.iter().map(|mj| (u.adjoint() * mj * &v)[(0, 0)].re),
                );
                let c0 = (u.adjoint() * &m.constant * &v)[(0, 0)].re;
                (a, c0)
            }
            ConstraintMap::Euclidean(vm) => {
                let img = vm.eval(x);
                let norm = img.norm();
                let u = if norm > 1e-14 {
                    img / C64::new(norm, 0.0)
                } else {
                    let mut e = DVector::zeros(vm.constant.len());
                    e[0] = C64::new(1.0, 0.0);
                    e
                };
                let a = DVector::from_iterator(
                    vm.coeffs.len(),
                    vm.coeffs.iter().map(|vj| u.dotc(vj).re),
                );
                let c0 = u.dotc(&vm.constant).re;
                (a, c0)
            }
        }
    }
}

/// Right-hand side of a norm constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundKind {
    /// `‖map(x)‖ ≤ value`.
    Fixed(f64),
    /// `‖map(x)‖ ≤ t`, the shared epigraph variable of
    /// [`minimize_max_norm`].
    Epigraph,
}

#[derive(Clone, Debug)]
pub struct NormConstraint {
    pub map: ConstraintMap,
    pub bound: BoundKind,
}

/// A convex program over `x ∈ R^dim`.
#[derive(Clone, Debug)]
pub struct NormProgram {
    pub dim: usize,
    /// Linear objective (used by [`maximize_linear`] only).
    pub objective: DVector<f64>,
    pub constraints: Vec<NormConstraint>,
    /// Rows `a·x = b`.
    pub equalities: Vec<(DVector<f64>, f64)>,
    /// `Some(R)`: analytic bound `|x_j| ≤ R` known to contain the feasible
    /// region.  `None`: start at 1 and double whenever the optimizer touches
    /// the boundary.
    pub box_radius: Option<f64>,
}

impl NormProgram {
    fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() && self.box_radius.is_none() {
            return Err(Error::BadProgram {
                status: "unbounded",
                context: "no constraints and no box".into(),
            });
        }
        if self.objective.len() != self.dim {
            return Err(Error::BadProgram {
                status: "malformed",
                context: "objective dimension mismatch".into(),
            });
        }
        for c in &self.constraints {
            if c.map.dim() != self.dim {
                return Err(Error::BadProgram {
                    status: "malformed",
                    context: "constraint dimension mismatch".into(),
                });
            }
            if let BoundKind::Fixed(b) = c.bound {
                if b < 0.0 {
                    return Err(Error::BadProgram {
                        status: "malformed",
                        context: "negative norm bound".into(),
                    });
                }
            }
        }
        for (a, _) in &self.equalities {
            if a.len() != self.dim {
                return Err(Error::BadProgram {
                    status: "malformed",
                    context: "equality dimension mismatch".into(),
                });
            }
        }
        Ok(())
    }

    fn is_homogeneous(&self) -> bool {
        self.constraints.iter().all(|c| c.map.is_homogeneous())
            && self.equalities.iter().all(|(_, b)| *b == 0.0)
    }
}

/// Result of a cutting-plane solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    /// The reported optimum: the certified-feasible side of the enclosure.
    pub value: f64,
    /// Optimizer coordinates.
    pub point: Vec<f64>,
    /// Certified lower bound on the true optimum.
    pub lower: f64,
    /// Certified upper bound on the true optimum.
    pub upper: f64,
    /// `upper − lower` at termination.
    pub gap: f64,
    pub iterations: usize,
    pub cuts: usize,
    /// Final box radius (the analytic cap when one was supplied).
    pub box_radius: f64,
}

/// One accumulated cut `a·x (− t) ≤ rhs`.
struct Cut {
    coeffs: DVector<f64>,
    /// Index of the owning constraint (for the epigraph column).
    epigraph: bool,
    rhs: f64,
}

/// Bound the working cut set: once it outgrows the limit, keep the most
/// recent tail unconditionally and fill the remaining budget with the cuts
/// tightest (smallest relative slack) at the current relaxation optimum.
/// Any subset of cuts still describes a relaxation, so the reported bounds
/// stay valid; pruning merely caps the per-iteration LP size.
fn prune_cuts(cuts: &mut Vec<Cut>, x: &DVector<f64>, t: f64) {
    const CUT_LIMIT: usize = 96;
    const RECENT_KEEP: usize = 32;
    if cuts.len() <= CUT_LIMIT {
        return;
    }
    let n = cuts.len();
    let older = n - RECENT_KEEP;
    let mut slacks: Vec<(f64, usize)> = cuts[..older]
        .iter()
        .enumerate()
        .map(|(i, cut)| {
            let slack = cut.rhs + if cut.epigraph { t } else { 0.0 } - cut.coeffs.dot(x);
            (slack / (1.0 + cut.rhs.abs()), i)
        })
        .collect();
    slacks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep = vec![false; n];
    for k in keep.iter_mut().skip(older) {
        *k = true;
    }
    for &(_, i) in slacks.iter().take(CUT_LIMIT - RECENT_KEEP) {
        keep[i] = true;
    }
    let mut idx = 0;
    cuts.retain(|_| {
        idx += 1;
        keep[idx - 1]
    });
}

/// Shared LP assembly: variables are `x` shifted by `radius` (plus one
/// trailing epigraph column when `with_t`).
fn solve_lp(
    dim: usize,
    objective: &DVector<f64>,
    cuts: &[Cut],
    equalities: &[(DVector<f64>, f64)],
    radius: f64,
    with_t: bool,
) -> Result<Option<(DVector<f64>, f64)>> {
    let cols = dim + usize::from(with_t);
    let mut rows = Vec::with_capacity(cuts.len() + equalities.len() + dim);
    for cut in cuts {
        let mut coeffs = DVector::zeros(cols);
        coeffs.rows_mut(0, dim).copy_from(&cut.coeffs);
        if cut.epigraph {
            coeffs[dim] = -1.0;
        }
        // Shift x = z − R: a·x ≤ r  ⇔  a·z ≤ r + R·Σa.
        let shift: f64 = cut.coeffs.iter().sum::<f64>() * radius;
        rows.push(Row { coeffs, rhs: cut.rhs + shift, kind: RowKind::Le });
    }
    for (a, b) in equalities {
        let mut coeffs = DVector::zeros(cols);
        coeffs.rows_mut(0, dim).copy_from(a);
        let shift: f64 = a.iter().sum::<f64>() * radius;
        rows.push(Row { coeffs, rhs: b + shift, kind: RowKind::Eq });
    }
    for j in 0..dim {
        let mut coeffs = DVector::zeros(cols);
        coeffs[j] = 1.0;
        rows.push(Row { coeffs, rhs: 2.0 * radius, kind: RowKind::Le });
    }
    let mut c = DVector::zeros(cols);
    c.rows_mut(0, dim).copy_from(objective);
    if with_t {
        c[dim] = -1.0;
    }
    match simplex::solve(&c, &rows) {
        LpOutcome::Optimal { point, .. } => {
            let x = point.rows(0, dim).map(|z| z) - DVector::from_element(dim, radius);
            let t = if with_t { point[dim] } else { 0.0 };
            Ok(Some((x, t)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::BadProgram {
            status: "unbounded",
            context: "boxed LP reported unbounded".into(),
        }),
    }
}

fn on_boundary(x: &DVector<f64>, radius: f64) -> bool {
    x.iter().any(|&v| v.abs() >= radius * (1.0 - 1e-9))
}

/// Maximize `objective·x` subject to the program's norm constraints,
/// equalities, and box.
///
/// All norm bounds must be [`BoundKind::Fixed`].  On success the report
/// satisfies `lower ≤ true optimum ≤ upper` with `gap ≤ ~tol`, and `value`
/// is the optimum at a point feasible within `tol`.
pub fn maximize_linear(p: &NormProgram, tol: f64) -> Result<SolveReport> {
    p.validate()?;
    if p.constraints.iter().any(|c| c.bound == BoundKind::Epigraph) {
        return Err(Error::BadProgram {
            status: "malformed",
            context: "epigraph bounds belong to minimize_max_norm".into(),
        });
    }
    let homogeneous = p.is_homogeneous();
    let mut radius = p.box_radius.unwrap_or(1.0);
    let capped = p.box_radius.is_some();
    let mut cuts: Vec<Cut> = Vec::new();
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_x: Option<DVector<f64>> = None;
    let mut min_upper = f64::INFINITY;
    let mut doublings = 0;
    let mut prev_lower = f64::NEG_INFINITY;
    let mut prev_upper = f64::INFINITY;
    let mut stall = 0usize;

    for iteration in 1..=ITERATION_CAP {
        let solved = solve_lp(p.dim, &p.objective, &cuts, &p.equalities, radius, false)?;
        let Some((x, _)) = solved else {
            return Err(Error::BadProgram {
                status: "infeasible",
                context: "no point satisfies the equalities and cuts".into(),
            });
        };
        let lp_value = p.objective.dot(&x);
        // The LP optimum bounds the true optimum from above only when the
        // box was inactive (or the caller certified it contains the
        // feasible region).
        let box_active = !capped && on_boundary(&x, radius);
        prune_cuts(&mut cuts, &x, 0.0);

        // Exact constraint evaluation.  Cuts are generated only for
        // violations clearly above noise (0.1·tol); the true worst violation
        // governs termination.
        let mut max_violation = 0.0f64;
        let mut scale = 1.0f64; // shrink factor making x feasible (homogeneous case)
        let mut new_cuts = Vec::new();
        for c in &p.constraints {
            let BoundKind::Fixed(bound) = c.bound else { unreachable!() };
            let v = c.map.value(&x);
            if v > bound {
                max_violation = max_violation.max(v - bound);
                if v > 0.0 {
                    scale = scale.min(bound / v);
                }
                if v > bound + 0.1 * tol {
                    let (a, c0) = c.map.linearize(&x);
                    new_cuts.push(Cut { coeffs: a, epigraph: false, rhs: bound - c0 });
                }
            }
        }
        if !box_active {
            // With valid cuts and a box containing the feasible set, every
            // iteration's LP value bounds the true optimum from above.
            min_upper = min_upper.min(lp_value);
        }
        let candidate = if homogeneous {
            // x = 0 and scale·x are feasible; the objective at the better
            // one is a certified lower bound.
            if scale * lp_value >= 0.0 {
                Some((scale * lp_value, &x * scale))
            } else {
                Some((0.0, DVector::zeros(p.dim)))
            }
        } else if max_violation <= tol {
            Some((lp_value, x.clone()))
        } else {
            None
        };
        if let Some((v, pt)) = candidate {
            if v > best_lower {
                best_lower = v;
                best_x = Some(pt);
            }
        }

        if std::env::var_os("QMG_TRACE_SOLVER").is_some() && iteration % 50 == 0 {
            let lp_resid = cuts
                .iter()
                .map(|cut| cut.coeffs.dot(&x) - cut.rhs)
                .fold(0.0f64, f64::max);
            eprintln!(
                "max_linear it {iteration}: lp {lp_value:.9} viol {max_violation:.3e} cuts {} r {radius} lp_resid {lp_resid:.3e}",
                cuts.len()
            );
        }
        let moved = best_lower > prev_lower + 1e-12 || min_upper < prev_upper - 1e-12;
        prev_lower = best_lower;
        prev_upper = min_upper;
        stall = if moved { 0 } else { stall + 1 };
        if stall >= STALL_LIMIT && min_upper.is_finite() {
            if let Some(bx) = &best_x {
                return Ok(SolveReport {
                    value: best_lower,
                    point: bx.iter().copied().collect(),
                    lower: best_lower,
                    upper: min_upper,
                    gap: (min_upper - best_lower).max(0.0),
                    iterations: iteration,
                    cuts: cuts.len(),
                    box_radius: radius,
                });
            }
        }
        if max_violation <= tol {
            if !box_active {
                let lower = if best_lower.is_finite() { best_lower } else { lp_value };
                return Ok(SolveReport {
                    value: lp_value,
                    point: x.iter().copied().collect(),
                    lower,
                    upper: lp_value,
                    gap: (lp_value - lower).max(0.0),
                    iterations: iteration,
                    cuts: cuts.len(),
                    box_radius: radius,
                });
            }
            // tol-feasible but pressed against the box: grow it.
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BadProgram {
                    status: "unbounded",
                    context: "box doubling budget exhausted; feasible set looks unbounded".into(),
                });
            }
            radius *= 2.0;
        } else {
            debug_assert!(!new_cuts.is_empty());
            cuts.extend(new_cuts);
        }
    }
    Err(Error::NoConvergence {
        gap: f64::NAN,
        iterations: ITERATION_CAP,
        tol,
    })
}

/// Minimize `max_j ‖A_j(x)‖` over the epigraph constraints, subject to the
/// fixed constraints, equalities, and box.
///
/// The report's `value` (= `upper`) is the exact max-norm at a point
/// satisfying the equalities exactly and the fixed constraints within `tol`;
/// `lower` is the LP relaxation bound, so the true infimum lies in
/// `[lower, upper]` with `upper − lower ≤ tol` on success.
pub fn minimize_max_norm(p: &NormProgram, tol: f64) -> Result<SolveReport> {
    p.validate()?;
    if !p.constraints.iter().any(|c| c.bound == BoundKind::Epigraph) {
        return Err(Error::BadProgram {
            status: "malformed",
            context: "minimize_max_norm needs at least one epigraph constraint".into(),
        });
    }
    let mut radius = p.box_radius.unwrap_or(1.0);
    let capped = p.box_radius.is_some();
    let zero_obj = DVector::zeros(p.dim);
    let mut cuts: Vec<Cut> = Vec::new();
    let mut best_upper = f64::INFINITY;
    let mut best_point: Option<DVector<f64>> = None;
    let mut lower = 0.0f64;
    let mut doublings = 0;
    let mut boundary_streak = 0usize;
    let mut prev_upper = f64::INFINITY;
    let mut prev_lower = f64::NEG_INFINITY;
    let mut stall = 0usize;

    for iteration in 1..=ITERATION_CAP {
        let solved = solve_lp(p.dim, &zero_obj, &cuts, &p.equalities, radius, true)?;
        let Some((x, t)) = solved else {
            return Err(Error::BadProgram {
                status: "infeasible",
                context: "equalities (with fixed-constraint cuts) are inconsistent".into(),
            });
        };
        // The relaxation value only bounds the true infimum from below when
        // the box was inactive.
        let box_active = !capped && on_boundary(&x, radius);
        prune_cuts(&mut cuts, &x, t);
        if !box_active {
            lower = lower.max(t);
            boundary_streak = 0;
        } else {
            // A relaxation vertex glued to the start box for many rounds
            // means the feasible set recedes along directions the cuts
            // cannot pin (the enclosure can then never close).  Grow the
            // box so the run either interiorizes or fails loudly when the
            // doubling budget runs out.
            boundary_streak += 1;
            if boundary_streak >= 64 {
                boundary_streak = 0;
                doublings += 1;
                if doublings > MAX_DOUBLINGS {
                    return Err(Error::BadProgram {
                        status: "unbounded",
                        context: "relaxation stays on the box over the doubling budget".into(),
                    });
                }
                radius *= 2.0;
                continue;
            }
        }

        let mut fixed_violation = 0.0f64;
        let mut epi_value = 0.0f64;
        let mut new_cuts = Vec::new();
        for c in &p.constraints {
            let v = c.map.value(&x);
            match c.bound {
                BoundKind::Fixed(bound) => {
                    if v > bound + 0.1 * tol {
                        fixed_violation = fixed_violation.max(v - bound);
                        let (a, c0) = c.map.linearize(&x);
                        new_cuts.push(Cut { coeffs: a, epigraph: false, rhs: bound - c0 });
                    }
                }
                BoundKind::Epigraph => {
                    epi_value = epi_value.max(v);
                    if v > t + 0.1 * tol {
                        let (a, c0) = c.map.linearize(&x);
                        new_cuts.push(Cut { coeffs: a, epigraph: true, rhs: -c0 });
                    }
                }
            }
        }
        if std::env::var_os("QMG_TRACE_SOLVER").is_some() && iteration % 50 == 0 {
            eprintln!(
                "min_max it {iteration}: t {t:.9} epi {epi_value:.9} fixviol {fixed_violation:.3e} \
                 best {best_upper:.9} lower {lower:.9} cuts {} r {radius}",
                cuts.len()
            );
        }
        if fixed_violation <= tol && epi_value < best_upper {
            best_upper = epi_value;
            best_point = Some(x.clone());
        }
        let moved = best_upper < prev_upper - 1e-12 || lower > prev_lower + 1e-12;
        prev_upper = best_upper;
        prev_lower = lower;
        stall = if moved { 0 } else { stall + 1 };
        if best_upper - lower <= tol || (stall >= STALL_LIMIT && best_point.is_some()) {
            let point = best_point.expect("upper bound implies a recorded point");
            return Ok(SolveReport {
                value: best_upper,
                point: point.iter().copied().collect(),
                lower,
                upper: best_upper,
                gap: (best_upper - lower).max(0.0),
                iterations: iteration,
                cuts: cuts.len(),
                box_radius: radius,
            });
        }
        if box_active && fixed_violation <= tol && epi_value <= t + tol {
            // Nothing real to separate inside this box: grow it so the
            // frozen relaxation bound can start moving again.
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BadProgram {
                    status: "unbounded",
                    context: "box doubling budget exhausted".into(),
                });
            }
            radius *= 2.0;
            continue;
        }
        if new_cuts.is_empty() {
            // Nothing left to separate: the LP optimum is tol-feasible but
            // the enclosure did not close (only possible with an infeasible
            // fixed system); report the failure honestly.
            return Err(Error::NoConvergence {
                gap: best_upper - lower,
                iterations: iteration,
                tol,
            });
        }
        cuts.extend(new_cuts);
    }
    Err(Error::NoConvergence {
        gap: best_upper - lower,
        iterations: ITERATION_CAP,
        tol,
    })
}
