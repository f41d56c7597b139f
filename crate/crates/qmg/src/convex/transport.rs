//! Exact optimal-transport oracle on finite metric spaces.
//!
//! Computes the Wasserstein-1 (earth mover) distance between two probability
//! vectors as a plain coupling LP.  This path shares nothing with the
//! cutting-plane machinery except the simplex core, so it serves as an
//! independent cross-check of the state-space distances computed by duality.

use nalgebra::{DMatrix, DVector};

use crate::convex::simplex::{self, LpOutcome, Row, RowKind};
use crate::{Error, Result};

/// Validation tolerance on metric axioms and marginal normalization.
const AXIOM_TOL: f64 = 1e-10;

/// Minimize `Σ_ij d(i,j)·γ_ij` over couplings `γ` of `p` and `q`.
///
/// `dist` must be a genuine metric on the point set: nonnegative, symmetric,
/// zero exactly on the diagonal, and satisfying the triangle inequality.
/// `p` and `q` must be probability vectors.  Returns the exact LP optimum.
pub fn transport_lp(dist: &DMatrix<f64>, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
    let k = dist.nrows();
    validate_metric(dist)?;
    validate_marginal("p", p, k)?;
    validate_marginal("q", q, k)?;

    // Variables γ_ij ≥ 0 flattened row-major; marginals as equalities.  The
    // final column-sum row is implied by the others and dropped.
    let nvars = k * k;
    let mut rows = Vec::with_capacity(2 * k - 1);
    for i in 0..k {
        let mut coeffs = DVector::zeros(nvars);
        for j in 0..k {
            coeffs[i * k + j] = 1.0;
        }
        rows.push(Row { coeffs, rhs: p[i], kind: RowKind::Eq });
    }
    for j in 0..k.saturating_sub(1) {
        let mut coeffs = DVector::zeros(nvars);
        for i in 0..k {
            coeffs[i * k + j] = 1.0;
        }
        rows.push(Row { coeffs, rhs: q[j], kind: RowKind::Eq });
    }
    let objective = DVector::from_fn(nvars, |v, _| -dist[(v / k, v % k)]);
    match simplex::solve(&objective, &rows) {
        LpOutcome::Optimal { value, .. } => Ok(-value),
        LpOutcome::Infeasible => Err(Error::BadProgram {
            status: "infeasible",
            context: "transport marginals admit no coupling".into(),
        }),
        LpOutcome::Unbounded => Err(Error::BadProgram {
            status: "unbounded",
            context: "transport LP cannot be unbounded; invalid input".into(),
        }),
    }
}

pub(crate) fn validate_metric(dist: &DMatrix<f64>) -> Result<()> {
    let k = dist.nrows();
    if k == 0 || dist.ncols() != k {
        return Err(Error::Invalid {
            what: "distance matrix",
            reason: "must be square and nonempty".into(),
        });
    }
    for i in 0..k {
        if dist[(i, i)].abs() > AXIOM_TOL {
            return Err(Error::Invalid {
                what: "distance matrix",
                reason: format!("nonzero diagonal at {i}"),
            });
        }
        for j in 0..k {
            if dist[(i, j)] < -AXIOM_TOL {
                return Err(Error::Invalid {
                    what: "distance matrix",
                    reason: format!("negative entry at ({i},{j})"),
                });
            }
            if (dist[(i, j)] - dist[(j, i)]).abs() > AXIOM_TOL {
                return Err(Error::Invalid {
                    what: "distance matrix",
                    reason: format!("not symmetric at ({i},{j})"),
                });
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                if dist[(i, j)] > dist[(i, l)] + dist[(l, j)] + AXIOM_TOL {
                    return Err(Error::Invalid {
                        what: "distance matrix",
                        reason: format!("triangle inequality fails: d({i},{j}) > d({i},{l}) + d({l},{j})"),
                    });
                }
            }
        }
    }
    Ok(())
}

fn validate_marginal(name: &'static str, v: &DVector<f64>, k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::Invalid {
            what: "marginal",
            reason: format!("{name} has length {} for {k} points", v.len()),
        });
    }
    if v.iter().any(|&x| x < -AXIOM_TOL) {
        return Err(Error::Invalid {
            what: "marginal",
            reason: format!("{name} has a negative entry"),
        });
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > AXIOM_TOL {
        return Err(Error::Invalid {
            what: "marginal",
            reason: format!("{name} sums to {total}, not 1"),
        });
    }
    Ok(())
}
