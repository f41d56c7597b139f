//! Bridges: a pivot element in a common ambient algebra together with
//! unital embeddings of two metrized algebras.
//!
//! A bridge induces a seminorm on pairs, `bn(a, b) = ‖π_A(a)ω − ωπ_B(b)‖`,
//! from which two quantities are estimated: the *reach* (how far the two
//! Lip-balls are from each other under `bn`, in the Hausdorff sense) and the
//! *height* (how far the state spaces are from the states that absorb the
//! pivot).  Their maximum, the *length*, feeds the certified distance
//! estimates produced by the tunnel layer.
//!
//! Estimator honesty: reach and height involve maximizing a convex function
//! over a ball, which sampling can only bound from below.  Reported lower
//! bounds are certified (up to solver tolerance) whenever the inner
//! minimization ran over an exactly-represented set; upper values are the
//! stalling points of a local search and are flagged non-certified except in
//! the exhaustively solvable commutative cases.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{
    self, state_net, AlgebraShape, Element, HermitianBasis, NetKind, StarMorphism, State,
};
use crate::convex::{self, AffineMatrixMap, BoundKind, ConstraintMap, NormConstraint, NormProgram};
use crate::linalg::{self, C64};
use crate::lipnorm::{direct_sum_matrix, Seminorm};
use crate::metric;
use crate::par;
use crate::{Error, Result};

/// Cap on the number of extra solves spent refining the heuristic upper.
const MAX_ASCENT_EVALS: usize = 32;

/// A pivot `ω` in an ambient algebra `D` together with two injective unital
/// *-morphisms `π_A: A → D`, `π_B: B → D`.
///
/// Construction fails unless both maps are embeddings and some state
/// absorbs the pivot, i.e. `ker(1−ω) ∩ ker((1−ω)*)` is nontrivial.
#[derive(Clone, Debug)]
pub struct Bridge {
    pivot: Element,
    embed_a: StarMorphism,
    embed_b: StarMorphism,
    /// Orthonormal basis, per ambient block, of `ker(1−ω) ∩ ker((1−ω)*)`.
    support: Vec<Vec<DVector<C64>>>,
}

/// One-sided enclosure reported by the sampling estimators.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundPair {
    /// Largest value observed over the samples; a true lower bound on the
    /// estimated quantity when `lower_certified` is set.
    pub lower: f64,
    /// Value at which local refinement stalled; an upper bound only when
    /// `upper_certified` is set.
    pub heuristic_upper: f64,
    /// Whether `lower` genuinely bounds the quantity from below (this fails
    /// only when an inner minimization had to run over a finite net instead
    /// of the full feasible set).
    pub lower_certified: bool,
    /// Whether `heuristic_upper` comes from an exact argument (exhausted
    /// extreme points of commutative state spaces) rather than from search.
    pub upper_certified: bool,
}

/// Per-direction solver data for one orientation of the reach estimate:
/// maximize over the gauged `from`-ball, then minimize the pair seminorm
/// over the full `to`-ball.
struct SidePrep {
    from_shape: AlgebraShape,
    from_basis: HermitianBasis,
    /// The `from`-side Lip-norm, used to rescale solver output into the
    /// exact unit ball (solver points are only tolerance-feasible).
    from_lip: Seminorm,
    /// Non-unit basis indices of the `from` algebra (the gauge: shifting
    /// both arguments by the same scalar never changes the pair seminorm).
    outer_indices: Vec<usize>,
    outer_dim: usize,
    outer_constraints: Vec<NormConstraint>,
    inner_dim: usize,
    inner_constraints: Vec<NormConstraint>,
    /// Coefficient of each inner coordinate inside the pair seminorm;
    /// auxiliary coordinates of the `to`-ball constraints contribute zero.
    inner_coeffs: Vec<DMatrix<C64>>,
    /// Whether the `from` algebra is the left argument of the seminorm.
    from_is_a: bool,
    /// Analytic box for the outer maximization (gauged-ball radius plus
    /// slack for auxiliary coordinates).
    outer_box: f64,
    /// Certified Frobenius radius of the gauged `to`-ball.
    inner_gauged_radius: f64,
    /// `√N` of the `to` algebra (coordinate-to-operator norm factor).
    to_sqrt_n: f64,
    /// Operator norm of the pivot (≥ 1: the pivot fixes a vector).
    pivot_norm: f64,
}

fn joint_pivot_kernel(pivot: &Element) -> Vec<Vec<DVector<C64>>> {
    pivot
        .blocks()
        .iter()
        .map(|w| {
            let n = w.nrows();
            let mut stacked = DMatrix::zeros(2 * n, n);
            let defect = DMatrix::identity(n, n) - w;
            stacked.view_mut((0, 0), (n, n)).copy_from(&defect);
            stacked.view_mut((n, 0), (n, n)).copy_from(&defect.adjoint());
            linalg::kernel_basis(&stacked)
        })
        .collect()
}

impl Bridge {
    /// Validate and assemble a bridge.
    ///
    /// Both morphisms must share the pivot's algebra as codomain and be
    /// injective; the pivot must admit at least one absorbing state.
    pub fn new(pivot: Element, embed_a: StarMorphism, embed_b: StarMorphism) -> Result<Self> {
        let ambient = pivot.shape();
        for embed in [&embed_a, &embed_b] {
            if embed.codomain() != ambient {
                return Err(Error::ShapeMismatch {
                    expected: ambient.block_dims.clone(),
                    got: embed.codomain().block_dims.clone(),
                });
            }
        }
        if !embed_a.is_injective() {
            return Err(Error::NotMorphism {
                reason: "left embedding is not injective".into(),
            });
        }
        if !embed_b.is_injective() {
            return Err(Error::NotMorphism {
                reason: "right embedding is not injective".into(),
            });
        }
        let support = joint_pivot_kernel(&pivot);
        if support.iter().all(Vec::is_empty) {
            return Err(Error::Invalid {
                what: "bridge pivot",
                reason: "no state absorbs the pivot: ker(1−ω) ∩ ker((1−ω)*) is trivial".into(),
            });
        }
        Ok(Bridge { pivot, embed_a, embed_b, support })
    }

    pub fn ambient(&self) -> &AlgebraShape {
        self.pivot.shape()
    }

    pub fn pivot(&self) -> &Element {
        &self.pivot
    }

    pub fn embed_a(&self) -> &StarMorphism {
        &self.embed_a
    }

    pub fn embed_b(&self) -> &StarMorphism {
        &self.embed_b
    }

    pub fn domain_a(&self) -> &AlgebraShape {
        self.embed_a.domain()
    }

    pub fn domain_b(&self) -> &AlgebraShape {
        self.embed_b.domain()
    }

    /// Dimension of the joint kernel `ker(1−ω) ∩ ker((1−ω)*)`.
    pub fn support_rank(&self) -> usize {
        self.support.iter().map(Vec::len).sum()
    }

    /// The pair seminorm `bn(a, b) = ‖π_A(a)ω − ωπ_B(b)‖` (exact operator
    /// norm).
    pub fn seminorm(&self, a: &Element, b: &Element) -> Result<f64> {
        for (x, dom) in [(a, self.domain_a()), (b, self.domain_b())] {
            if x.shape() != dom {
                return Err(Error::ShapeMismatch {
                    expected: dom.block_dims.clone(),
                    got: x.shape().block_dims.clone(),
                });
            }
        }
        let left = &self.embed_a.apply(a) * &self.pivot;
        let right = &self.pivot * &self.embed_b.apply(b);
        Ok((&left - &right).operator_norm())
    }

    /// The projection onto the absorbing subspace together with the vector
    /// states given by an orthonormal basis of it.
    ///
    /// A state `φ` absorbs the pivot (`φ(d) = φ(dω) = φ(ωd)` for all `d`)
    /// exactly when its density is supported inside this projection.
    pub fn one_level_support(&self) -> (Element, Vec<State>) {
        let shape = self.pivot.shape().clone();
        let mut proj = Element::zero(&shape);
        let mut net = Vec::new();
        for (b, basis) in self.support.iter().enumerate() {
            for v in basis {
                *proj.block_mut(b) += v * v.adjoint();
                net.push(
                    State::vector_state(&shape, b, v)
                        .expect("orthonormal kernel vectors give unit vector states"),
                );
            }
        }
        (proj, net)
    }

    fn check_lip_pair(&self, lip_a: &Seminorm, lip_b: &Seminorm) -> Result<()> {
        for (lip, dom) in [(lip_a, self.domain_a()), (lip_b, self.domain_b())] {
            if lip.shape() != dom {
                return Err(Error::ShapeMismatch {
                    expected: dom.block_dims.clone(),
                    got: lip.shape().block_dims.clone(),
                });
            }
            if !lip.is_lip_norm() {
                return Err(Error::NotLipschitz { kernel_dim: lip.kernel_dim() });
            }
        }
        Ok(())
    }

    fn side_prep(&self, from_is_a: bool, lip_from: &Seminorm, lip_to: &Seminorm) -> Result<SidePrep> {
        let (from_shape, to_shape) = if from_is_a {
            (self.domain_a(), self.domain_b())
        } else {
            (self.domain_b(), self.domain_a())
        };
        let from_basis = HermitianBasis::new(from_shape);
        let outer_indices: Vec<usize> = (0..from_basis.len())
            .filter(|&j| j != from_basis.unit_index())
            .collect();
        let (outer_maps, outer_extra) = lip_from.program_maps(&from_basis, &outer_indices)?;
        let outer_constraints = outer_maps
            .into_iter()
            .map(|map| NormConstraint { map, bound: BoundKind::Fixed(1.0) })
            .collect();

        // The inner ball keeps the unit coordinate: it is the degree of
        // freedom that compensates the gauge fixed on the outer side.
        let to_basis = HermitianBasis::new(to_shape);
        let to_indices: Vec<usize> = (0..to_basis.len()).collect();
        let (inner_maps, inner_extra) = lip_to.program_maps(&to_basis, &to_indices)?;
        let inner_constraints: Vec<NormConstraint> = inner_maps
            .into_iter()
            .map(|map| NormConstraint { map, bound: BoundKind::Fixed(1.0) })
            .collect();
        let images_to = if from_is_a { self.embed_b.images() } else { self.embed_a.images() };
        let n = self.pivot.shape().hilbert_dim();
        let mut inner_coeffs: Vec<DMatrix<C64>> = to_indices
            .iter()
            .map(|&j| {
                if from_is_a {
                    direct_sum_matrix(&(&self.pivot * &images_to[j])) * C64::new(-1.0, 0.0)
                } else {
                    direct_sum_matrix(&(&images_to[j] * &self.pivot))
                }
            })
            .collect();
        inner_coeffs.extend(std::iter::repeat_with(|| DMatrix::zeros(n, n)).take(inner_extra));

        // Analytic boxes.  The gauged balls have certified Frobenius radii;
        // auxiliary span coordinates are Frobenius-orthonormal, hence
        // bounded by the element radius plus √N of their algebra.
        let outer_radius = lip_from.gauged_ball_radius()?;
        let outer_box = outer_radius + (from_shape.hilbert_dim() as f64).sqrt() + 1.0;
        let inner_gauged_radius = lip_to.gauged_ball_radius()?;

        Ok(SidePrep {
            from_shape: from_shape.clone(),
            from_basis,
            from_lip: lip_from.clone(),
            outer_dim: outer_indices.len() + outer_extra,
            outer_indices,
            outer_constraints,
            inner_dim: to_basis.len() + inner_extra,
            inner_constraints,
            inner_coeffs,
            from_is_a,
            outer_box,
            inner_gauged_radius,
            to_sqrt_n: (to_shape.hilbert_dim() as f64).sqrt(),
            pivot_norm: self.pivot.operator_norm(),
        })
    }

    /// Constant term of the pair seminorm once the outer element is fixed.
    fn bn_constant(&self, from_is_a: bool, fixed: &Element) -> DMatrix<C64> {
        if from_is_a {
            direct_sum_matrix(&(&self.embed_a.apply(fixed) * &self.pivot))
        } else {
            direct_sum_matrix(&(&self.pivot * &self.embed_b.apply(fixed))) * C64::new(-1.0, 0.0)
        }
    }

    /// One directed sample: pick the extreme point of the gauged
    /// `from`-ball along `direction`, then minimize the pair seminorm over
    /// the full `to`-ball.  Returns a certified (within solver tolerance)
    /// lower bound on that minimum.
    fn directed_value(&self, prep: &SidePrep, direction: Option<&DVector<f64>>, tol: f64) -> Result<f64> {
        let extreme = match direction {
            // A zero-dimensional gauged ball (scalar algebra): only 0.
            None => Element::zero(&prep.from_shape),
            Some(d) => {
                let mut objective = DVector::zeros(prep.outer_dim);
                objective.rows_mut(0, d.len()).copy_from(d);
                let program = NormProgram {
                    dim: prep.outer_dim,
                    objective,
                    constraints: prep.outer_constraints.clone(),
                    equalities: vec![],
                    box_radius: Some(prep.outer_box),
                };
                let report = convex::maximize_linear(&program, tol)?;
                let mut a = Element::zero(&prep.from_shape);
                for (k, &j) in prep.outer_indices.iter().enumerate() {
                    a = &a + &prep.from_basis.element(j).scaled_re(report.point[k]);
                }
                // The solver point is only tolerance-feasible; pull it into
                // the exact unit ball so the directed value genuinely
                // lower-bounds the reach.
                let s = prep.from_lip.eval(&a)?;
                if s > 1.0 {
                    a = a.scaled_re(1.0 / s);
                }
                a
            }
        };
        let constant = self.bn_constant(prep.from_is_a, &extreme);
        // A minimizer exists inside an analytic box: the gauged part of any
        // feasible point is bounded by the certified ball radius, and the
        // unit coordinate is pinned by coercivity — a minimizer beats the
        // zero element, whose value is ‖constant‖.
        let c0 = linalg::op_norm(&constant);
        let unit_bound =
            prep.to_sqrt_n * (2.0 * c0 / prep.pivot_norm + prep.inner_gauged_radius);
        let radius = 2.0 * (prep.inner_gauged_radius + unit_bound) + prep.to_sqrt_n + 1.0;
        let mut constraints = prep.inner_constraints.clone();
        constraints.push(NormConstraint {
            map: ConstraintMap::Spectral(AffineMatrixMap::new(constant, prep.inner_coeffs.clone())),
            bound: BoundKind::Epigraph,
        });
        let program = NormProgram {
            dim: prep.inner_dim,
            objective: DVector::zeros(prep.inner_dim),
            constraints,
            equalities: vec![],
            box_radius: Some(radius),
        };
        let report = convex::minimize_max_norm(&program, tol)?;
        Ok(report.lower.max(0.0))
    }

    /// Sampled enclosure of the reach: the Hausdorff distance, under the
    /// pair seminorm, between the two gauged Lip-balls.
    ///
    /// Each of the `directions` samples per orientation maximizes a linear
    /// functional over one ball and minimizes the pair seminorm against the
    /// other; the lower bound is certified within solver tolerance, and the
    /// upper value is a non-certified local-search stall.
    pub fn reach_bounds(
        &self,
        lip_a: &Seminorm,
        lip_b: &Seminorm,
        directions: usize,
        seed: u64,
        tol: f64,
    ) -> Result<BoundPair> {
        self.check_lip_pair(lip_a, lip_b)?;
        if directions == 0 {
            return Err(Error::Invalid {
                what: "reach sampling",
                reason: "at least one direction is required".into(),
            });
        }
        if !(tol > 0.0) {
            return Err(Error::Invalid {
                what: "tolerance",
                reason: format!("must be positive, got {tol}"),
            });
        }
        let prep = [self.side_prep(true, lip_a, lip_b)?, self.side_prep(false, lip_b, lip_a)?];
        // Exploration runs at a coarse tolerance (each value is still a
        // certified lower bound); only the stalled direction gets a final
        // solve at the requested tolerance.
        let coarse = tol.max(1e-4);
        let samples = par::map_range(2 * directions, |i| -> Result<(usize, DVector<f64>, f64)> {
            let side = i % 2;
            let idx = i / 2;
            let p = &prep[side];
            let k = p.outer_indices.len();
            if k == 0 {
                let v = self.directed_value(p, None, coarse)?;
                return Ok((side, DVector::zeros(0), v));
            }
            let d = direction_sample(k, idx, seed, side as u64);
            let v = self.directed_value(p, Some(&d), coarse)?;
            Ok((side, d, v))
        });
        let mut lower = 0.0f64;
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for s in samples {
            let (side, d, v) = s?;
            lower = lower.max(v);
            if best.as_ref().is_none_or(|b| v > b.2) {
                best = Some((side, d, v));
            }
        }

        // Coarse local ascent from the best sampled direction, then one
        // solve at the requested tolerance from the stall point.  Every
        // evaluation is itself certified, so the stall value feeds the
        // lower bound too; only "is this the true supremum over all
        // directions" stays heuristic.
        let mut heuristic = lower;
        if let Some((side, mut dir, mut best_v)) = best {
            let p = &prep[side];
            let k = p.outer_indices.len();
            if k > 0 {
                let mut step = 0.5f64;
                let mut evals = 0usize;
                while step > 1e-2 && evals < MAX_ASCENT_EVALS {
                    let mut improved = false;
                    'axes: for axis in 0..k {
                        for sign in [1.0f64, -1.0] {
                            if evals >= MAX_ASCENT_EVALS {
                                break 'axes;
                            }
                            let mut d = dir.clone();
                            d[axis] += sign * step;
                            let norm = d.norm();
                            if norm < 1e-12 {
                                continue;
                            }
                            d /= norm;
                            let v = self.directed_value(p, Some(&d), coarse)?;
                            evals += 1;
                            if v > best_v + 1e-12 {
                                best_v = v;
                                dir = d;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
            }
            let refined =
                self.directed_value(p, if k > 0 { Some(&dir) } else { None }, tol)?;
            lower = lower.max(best_v.max(refined));
            heuristic = heuristic.max(best_v.max(refined));
        }
        Ok(BoundPair {
            lower,
            heuristic_upper: heuristic,
            lower_certified: true,
            upper_certified: false,
        })
    }

    /// Extra absorbing states inside multi-dimensional kernel blocks:
    /// random unit vectors of the span and random mixed densities
    /// compressed to it.
    fn enrich_support_net(&self, net: &mut Vec<State>, count: usize, seed: u64) -> Result<()> {
        let shape = self.pivot.shape();
        for (b, basis) in self.support.iter().enumerate() {
            let r = basis.len();
            if r < 2 {
                continue;
            }
            let span = DMatrix::from_columns(basis);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            for _ in 0..count {
                let g = algebra::random_ginibre(r, &mut rng);
                let combo = &span * g.column(0);
                if combo.norm() > 1e-9 {
                    net.push(State::vector_state(shape, b, &combo.into_owned())?);
                }
                let corner = &g * g.adjoint();
                let total = linalg::trace(&corner).re;
                if total > 1e-12 {
                    let rho = &span * (corner / C64::new(total, 0.0)) * span.adjoint();
                    let densities = shape
                        .block_dims
                        .iter()
                        .enumerate()
                        .map(|(k, &n)| if k == b { rho.clone() } else { DMatrix::zeros(n, n) })
                        .collect();
                    net.push(State::from_densities(shape.clone(), densities)?);
                }
            }
        }
        Ok(())
    }

    /// Sampled enclosure of the height: the larger of the two directed
    /// Hausdorff estimates from each state space to the pulled-back
    /// absorbing states, in the respective Monge–Kantorovich metrics.
    ///
    /// The lower bound is certified when the absorbing set is represented
    /// exactly (commutative ambient algebra, or a one-dimensional absorbing
    /// subspace); it is additionally an exact value when both state spaces
    /// are commutative, since their extreme points are enumerated.
    pub fn height_bounds(
        &self,
        lip_a: &Seminorm,
        lip_b: &Seminorm,
        net_size: usize,
        seed: u64,
        tol: f64,
    ) -> Result<BoundPair> {
        self.check_lip_pair(lip_a, lip_b)?;
        if net_size == 0 {
            return Err(Error::Invalid {
                what: "height sampling",
                reason: "net size must be at least one".into(),
            });
        }
        if !(tol > 0.0) {
            return Err(Error::Invalid {
                what: "tolerance",
                reason: format!("must be positive, got {tol}"),
            });
        }
        let (_, mut support_net) = self.one_level_support();
        let inner_exact = self.ambient().is_commutative() || self.support_rank() == 1;
        if !inner_exact {
            self.enrich_support_net(&mut support_net, net_size, seed.wrapping_add(3))?;
        }
        let mut lower = 0.0f64;
        let mut both_sides_exhaustive = true;
        for (side, (lip, embed)) in
            [(0u64, (lip_a, &self.embed_a)), (1, (lip_b, &self.embed_b))]
        {
            let shape = embed.domain();
            let exhaustive = shape.is_commutative();
            both_sides_exhaustive &= exhaustive;
            let side_net = if exhaustive {
                state_net(shape, NetKind::PureEnumerate, shape.hilbert_dim(), 0)?
            } else {
                state_net(shape, NetKind::PureRandom, net_size, seed.wrapping_add(1 + side))?
            };
            let pulled: Vec<State> = support_net
                .iter()
                .map(|phi| embed.pull_back(phi))
                .collect::<Result<_>>()?;
            let m = metric::pairwise_matrix(&side_net, &pulled, |x, y| {
                metric::mk_distance(lip, x, y, tol)
            })?;
            let directed = (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).fold(f64::INFINITY, f64::min))
                .fold(0.0f64, f64::max);
            lower = lower.max(directed);
        }
        let upper_certified = inner_exact && both_sides_exhaustive;
        Ok(BoundPair {
            lower,
            heuristic_upper: lower,
            lower_certified: inner_exact,
            upper_certified,
        })
    }

    /// Componentwise combination `length = max{reach, height}`.
    pub fn length_bounds(
        &self,
        lip_a: &Seminorm,
        lip_b: &Seminorm,
        directions: usize,
        net_size: usize,
        seed: u64,
        tol: f64,
    ) -> Result<BoundPair> {
        let reach = self.reach_bounds(lip_a, lip_b, directions, seed, tol)?;
        let height =
            self.height_bounds(lip_a, lip_b, net_size, seed.wrapping_add(0x9e37_79b9), tol)?;
        Ok(BoundPair {
            lower: reach.lower.max(height.lower),
            heuristic_upper: reach.heuristic_upper.max(height.heuristic_upper),
            lower_certified: reach.lower_certified && height.lower_certified,
            upper_certified: reach.upper_certified && height.upper_certified,
        })
    }
}

/// Deterministic direction for sample `idx`: signed coordinate axes first,
/// then seeded Gaussian unit vectors.
fn direction_sample(k: usize, idx: usize, seed: u64, side: u64) -> DVector<f64> {
    if idx < 2 * k {
        let mut d = DVector::zeros(k);
        d[idx / 2] = if idx % 2 == 0 { 1.0 } else { -1.0 };
        return d;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2 * idx as u64 + side));
    let mut gauss = || {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    };
    loop {
        let d = DVector::from_fn(k, |_, _| gauss());
        let norm = d.norm();
        if norm > 1e-9 {
            return d / norm;
        }
    }
}

/// Distance estimate for a bridge whose pivot defect is uniformly small:
/// given `delta ≥ sup{bn(a, a) : L(a) ≤ 1}` (certified by the caller) and a
/// `height` estimate, the induced distance is at most
/// `max{delta·(1 + ½·max{diam_a, diam_b}), height}`.
pub fn perturbation_bound(delta: f64, diam_a: f64, diam_b: f64, height: f64) -> Result<f64> {
    for (name, v) in [
        ("delta", delta),
        ("diam_a", diam_a),
        ("diam_b", diam_b),
        ("height", height),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Invalid {
                what: "perturbation data",
                reason: format!("{name} must be a nonnegative finite real, got {v}"),
            });
        }
    }
    Ok((delta * (1.0 + 0.5 * diam_a.max(diam_b))).max(height))
}

/// Distance bound induced by a `delta`-bi-Lipschitz *-isomorphism between
/// two metrized algebras: `|1−delta|·(½ + max{diam_a, diam_b})`.
pub fn bi_lipschitz_bound(delta: f64, diam_a: f64, diam_b: f64) -> Result<f64> {
    if !delta.is_finite() || delta < 1.0 {
        return Err(Error::Invalid {
            what: "bi-Lipschitz constant",
            reason: format!("must be a finite real ≥ 1, got {delta}"),
        });
    }
    for (name, v) in [("diam_a", diam_a), ("diam_b", diam_b)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Invalid {
                what: "diameter",
                reason: format!("{name} must be a nonnegative finite real, got {v}"),
            });
        }
    }
    Ok((delta - 1.0).abs() * (0.5 + diam_a.max(diam_b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn m2() -> AlgebraShape {
        AlgebraShape::full(2)
    }

    fn pauli(which: char) -> Element {
        let block = match which {
            'x' => dmatrix![
                C64::new(0.0, 0.0), C64::new(1.0, 0.0);
                C64::new(1.0, 0.0), C64::new(0.0, 0.0);
            ],
            'y' => dmatrix![
                C64::new(0.0, 0.0), C64::new(0.0, -1.0);
                C64::new(0.0, 1.0), C64::new(0.0, 0.0);
            ],
            'z' => dmatrix![
                C64::new(1.0, 0.0), C64::new(0.0, 0.0);
                C64::new(0.0, 0.0), C64::new(-1.0, 0.0);
            ],
            _ => unreachable!(),
        };
        Element::from_blocks(m2(), vec![block]).unwrap()
    }

    fn identity_morphism(shape: &AlgebraShape) -> StarMorphism {
        StarMorphism::from_map(shape, shape, Clone::clone).unwrap()
    }

    fn corner_pivot() -> Element {
        Element::from_blocks(
            m2(),
            vec![dmatrix![
                C64::new(1.0, 0.0), C64::new(0.0, 0.0);
                C64::new(0.0, 0.0), C64::new(0.0, 0.0);
            ]],
        )
        .unwrap()
    }

    fn pauli_action() -> Seminorm {
        crate::lipnorm::from_group_action(&m2(), vec![(pauli('x'), 1.0), (pauli('z'), 1.0)]).unwrap()
    }

    fn identity_bridge_m2() -> Bridge {
        let id = identity_morphism(&m2());
        Bridge::new(Element::unit(&m2()), id.clone(), id).unwrap()
    }

    fn corner_bridge_m2() -> Bridge {
        let id = identity_morphism(&m2());
        Bridge::new(corner_pivot(), id.clone(), id).unwrap()
    }

    #[test]
    fn identity_bridge_seminorm_vanishes_on_the_diagonal() {
        let bridge = identity_bridge_m2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = Element::random_sa(&m2(), &mut rng);
            assert!(bridge.seminorm(&a, &a).unwrap() < 1e-12);
        }
    }

    #[test]
    fn unit_pivot_seminorm_is_the_norm_of_the_difference() {
        let bridge = identity_bridge_m2();
        let value = bridge.seminorm(&pauli('x'), &pauli('z')).unwrap();
        assert!((value - 2.0f64.sqrt()).abs() < 1e-12, "got {value}");
    }

    #[test]
    fn corner_pivot_measures_the_commutator() {
        let bridge = corner_bridge_m2();
        let value = bridge.seminorm(&pauli('x'), &pauli('x')).unwrap();
        assert!((value - 1.0).abs() < 1e-12, "got {value}");
    }

    #[test]
    fn pair_seminorm_satisfies_triangle_and_homogeneity() {
        let bridge = corner_bridge_m2();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a1 = Element::random_sa(&m2(), &mut rng);
            let a2 = Element::random_sa(&m2(), &mut rng);
            let b1 = Element::random_sa(&m2(), &mut rng);
            let b2 = Element::random_sa(&m2(), &mut rng);
            let sum = bridge.seminorm(&(&a1 + &a2), &(&b1 + &b2)).unwrap();
            let split = bridge.seminorm(&a1, &b1).unwrap() + bridge.seminorm(&a2, &b2).unwrap();
            assert!(sum <= split + 1e-9, "triangle: {sum} vs {split}");
            let t = -1.75f64;
            let scaled = bridge.seminorm(&a1.scaled_re(t), &b1.scaled_re(t)).unwrap();
            assert!(
                (scaled - t.abs() * bridge.seminorm(&a1, &b1).unwrap()).abs() < 1e-9,
                "homogeneity"
            );
        }
    }

    #[test]
    fn unit_pivot_has_full_support() {
        let bridge = identity_bridge_m2();
        let (proj, net) = bridge.one_level_support();
        assert!((&proj - &Element::unit(&m2())).operator_norm() < 1e-12);
        assert_eq!(net.len(), 2);
        assert_eq!(bridge.support_rank(), 2);
    }

    #[test]
    fn corner_pivot_supports_a_single_state() {
        let bridge = corner_bridge_m2();
        let (proj, net) = bridge.one_level_support();
        assert!((&proj - &corner_pivot()).operator_norm() < 1e-12);
        assert_eq!(net.len(), 1);
        // The unique absorbing state is the first basis vector state.
        assert!((net[0].expect_real(&pauli('z')) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_two_kernel_on_three_dimensions() {
        let shape = AlgebraShape::full(3);
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ]));
        let pivot = Element::from_blocks(shape.clone(), vec![w]).unwrap();
        let id = identity_morphism(&shape);
        let bridge = Bridge::new(pivot, id.clone(), id).unwrap();
        assert_eq!(bridge.support_rank(), 2);
        let (proj, net) = bridge.one_level_support();
        assert_eq!(net.len(), 2);
        assert!((proj.block(0)[(0, 0)].re - 1.0).abs() < 1e-9);
        assert!((proj.block(0)[(2, 2)].re).abs() < 1e-9);
    }

    #[test]
    fn pivot_without_absorbing_state_is_rejected() {
        let id = identity_morphism(&m2());
        let err = Bridge::new(Element::unit(&m2()).scaled_re(2.0), id.clone(), id);
        assert!(matches!(err, Err(Error::Invalid { .. })));
    }

    #[test]
    fn non_injective_embedding_is_rejected() {
        let c2 = AlgebraShape::commutative(2);
        let c1 = AlgebraShape::commutative(1);
        let first_coordinate = StarMorphism::from_map(&c2, &c1, |e| {
            Element::from_blocks(c1.clone(), vec![e.block(0).clone()]).unwrap()
        })
        .unwrap();
        assert!(!first_coordinate.is_injective());
        let err = Bridge::new(
            Element::unit(&c1),
            first_coordinate,
            identity_morphism(&c1),
        );
        assert!(matches!(err, Err(Error::NotMorphism { .. })));
    }

    #[test]
    fn identity_bridge_reach_is_zero() {
        let bridge = identity_bridge_m2();
        let lip = pauli_action();
        let reach = bridge.reach_bounds(&lip, &lip, 4, 11, 1e-7).unwrap();
        assert!(reach.lower.abs() < 1e-6, "lower {}", reach.lower);
        assert!(reach.heuristic_upper < 1e-5, "upper {}", reach.heuristic_upper);
        assert!(reach.lower_certified);
        assert!(!reach.upper_certified);
    }

    /// Two-point space against a one-point space through the unit pivot:
    /// the gauged slope-one ball is the segment `f = (s, −s)`, `|2s| ≤ 1`,
    /// and the best scalar approximation of `f` has sup-distance `|s|`,
    /// so the reach is 1/2.
    #[test]
    fn two_point_against_point_matches_grid_search() {
        let c2 = AlgebraShape::commutative(2);
        let c1 = AlgebraShape::commutative(1);
        let lip_a =
            metric::finite_space_lipschitz(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let tracial = State::tracial(&c1);
        let lip_b = crate::lipnorm::from_stddev(&tracial).unwrap();
        let diagonal = StarMorphism::from_map(&c1, &c2, |e| {
            Element::from_blocks(c2.clone(), vec![e.block(0).clone(), e.block(0).clone()])
                .unwrap()
        })
        .unwrap();
        let bridge =
            Bridge::new(Element::unit(&c2), identity_morphism(&c2), diagonal).unwrap();
        let reach = bridge.reach_bounds(&lip_a, &lip_b, 3, 23, 1e-8).unwrap();

        // Independent dense search over the one-dimensional balls.
        let mut oracle = 0.0f64;
        let steps = 2000;
        for i in 0..=steps {
            let f = -0.5 + i as f64 / steps as f64; // f = (f, −f), slope 2|f| ≤ 1
            let mut inner = f64::INFINITY;
            for j in 0..=steps {
                let t = -1.0 + 2.0 * j as f64 / steps as f64;
                inner = inner.min((f - t).abs().max((-f - t).abs()));
            }
            oracle = oracle.max(inner);
        }
        assert!((reach.lower - 0.5).abs() < 1e-6, "reach {}", reach.lower);
        assert!((reach.lower - oracle).abs() < 2e-3, "oracle {oracle}");
        assert!(reach.heuristic_upper >= reach.lower);
    }

    #[test]
    fn doubling_the_lipnorm_halves_the_reach() {
        let c2 = AlgebraShape::commutative(2);
        let c1 = AlgebraShape::commutative(1);
        let tracial = State::tracial(&c1);
        let lip_b = crate::lipnorm::from_stddev(&tracial).unwrap();
        let diagonal = StarMorphism::from_map(&c1, &c2, |e| {
            Element::from_blocks(c2.clone(), vec![e.block(0).clone(), e.block(0).clone()])
                .unwrap()
        })
        .unwrap();
        let bridge =
            Bridge::new(Element::unit(&c2), identity_morphism(&c2), diagonal).unwrap();
        let lip_a =
            metric::finite_space_lipschitz(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let lip_a_doubled =
            metric::finite_space_lipschitz(&dmatrix![0.0, 0.5; 0.5, 0.0]).unwrap();
        let full = bridge.reach_bounds(&lip_a, &lip_b, 3, 23, 1e-8).unwrap();
        let halved = bridge.reach_bounds(&lip_a_doubled, &lip_b, 3, 23, 1e-8).unwrap();
        assert!(
            (halved.lower - 0.5 * full.lower).abs() < 1e-6,
            "{} vs half of {}",
            halved.lower,
            full.lower
        );
    }

    /// For the corner pivot `diag(1,0)` and the Pauli conjugation ball the
    /// reach is exactly ½: once the outer element `βX+γY+δZ` is fixed, the
    /// best inner match leaves only the lower-left entry, of modulus
    /// `√(β²+γ²) ≤ ½` on the ball, attained at `a = X/2`.
    #[test]
    fn reach_lower_is_sound_and_grows_with_directions() {
        let bridge = corner_bridge_m2();
        let lip = pauli_action();
        let few = bridge.reach_bounds(&lip, &lip, 2, 17, 1e-6).unwrap();
        let many = bridge.reach_bounds(&lip, &lip, 6, 17, 1e-6).unwrap();
        // More directions explore a superset of fewer; the final local
        // polish adds refinement-level noise on top of that ordering.
        assert!(many.lower >= few.lower - 1e-5, "{} < {}", many.lower, few.lower);
        for r in [&few, &many] {
            assert!(r.lower <= 0.5 + 1e-9, "certified lower {} exceeds the true reach", r.lower);
        }
        assert!(many.lower > 0.45, "search should approach the true reach, got {}", many.lower);
    }

    /// For the Pauli conjugation ball on `M_2` the distance to the unique
    /// absorbing state has the closed form
    /// `½·√((|Δx|+|Δz|)² + Δy²)` in Bloch coordinates.
    #[test]
    fn corner_pivot_height_matches_bloch_formula() {
        let bridge = corner_bridge_m2();
        let lip = pauli_action();
        let (_, support) = bridge.one_level_support();
        let psi = &support[0];
        let bloch = |state: &State| {
            (
                state.expect_real(&pauli('x')),
                state.expect_real(&pauli('y')),
                state.expect_real(&pauli('z')),
            )
        };
        let (bx, by, bz) = bloch(psi);
        assert!((bz - 1.0).abs() < 1e-12 && bx.abs() < 1e-12 && by.abs() < 1e-12);

        // The two directed estimates draw their own sampled nets; the
        // oracle must sweep both.
        let net_a = state_net(&m2(), NetKind::PureRandom, 12, 41).unwrap();
        let net_b = state_net(&m2(), NetKind::PureRandom, 12, 42).unwrap();
        let mut expected_height = 0.0f64;
        for phi in net_a.iter().chain(&net_b) {
            let (x, y, z) = bloch(phi);
            let oracle =
                0.5 * ((x.abs() + (z - 1.0).abs()).powi(2) + y * y).sqrt();
            let solved = metric::mk_distance(&lip, phi, psi, 1e-8).unwrap();
            assert!((solved - oracle).abs() < 1e-6, "{solved} vs {oracle}");
            expected_height = expected_height.max(oracle);
        }

        let height = bridge.height_bounds(&lip, &lip, 12, 40, 1e-8).unwrap();
        assert!(
            (height.lower - expected_height).abs() < 1e-6,
            "{} vs {}",
            height.lower,
            expected_height
        );
        assert!(height.lower_certified, "rank-one absorbing set is exact");
        assert!(!height.upper_certified);
    }

    #[test]
    fn full_pivot_commutative_height_is_zero_and_certified() {
        let c3 = AlgebraShape::commutative(3);
        let dist = dmatrix![0.0, 1.0, 2.0; 1.0, 0.0, 1.0; 2.0, 1.0, 0.0];
        let lip = metric::finite_space_lipschitz(&dist).unwrap();
        let id = identity_morphism(&c3);
        let bridge = Bridge::new(Element::unit(&c3), id.clone(), id).unwrap();
        let height = bridge.height_bounds(&lip, &lip, 4, 1, 1e-8).unwrap();
        assert!(height.lower.abs() < 1e-9, "height {}", height.lower);
        assert!(height.lower_certified && height.upper_certified);
        assert!(height.heuristic_upper.abs() < 1e-9);
    }

    #[test]
    fn singleton_nets_height_is_the_sampled_distance() {
        let bridge = corner_bridge_m2();
        let lip = pauli_action();
        let seed = 77u64;
        let height = bridge.height_bounds(&lip, &lip, 1, seed, 1e-8).unwrap();
        let (_, support) = bridge.one_level_support();
        let psi = &support[0];
        let phi_a = &state_net(&m2(), NetKind::PureRandom, 1, seed.wrapping_add(1)).unwrap()[0];
        let phi_b = &state_net(&m2(), NetKind::PureRandom, 1, seed.wrapping_add(2)).unwrap()[0];
        let expected = metric::mk_distance(&lip, phi_a, psi, 1e-8)
            .unwrap()
            .max(metric::mk_distance(&lip, phi_b, psi, 1e-8).unwrap());
        assert!((height.lower - expected).abs() < 1e-12);
    }

    #[test]
    fn length_combines_reach_and_height_componentwise() {
        let bridge = corner_bridge_m2();
        let lip = pauli_action();
        let length = bridge.length_bounds(&lip, &lip, 3, 6, 19, 1e-6).unwrap();
        let reach = bridge.reach_bounds(&lip, &lip, 3, 19, 1e-6).unwrap();
        let height = bridge
            .height_bounds(&lip, &lip, 6, 19u64.wrapping_add(0x9e37_79b9), 1e-6)
            .unwrap();
        assert_eq!(length.lower, reach.lower.max(height.lower));
        assert_eq!(
            length.heuristic_upper,
            reach.heuristic_upper.max(height.heuristic_upper)
        );
        assert!(length.lower <= length.heuristic_upper + 1e-12);
    }

    #[test]
    fn perturbation_bound_formula() {
        assert_eq!(perturbation_bound(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        let v = perturbation_bound(0.1, 2.0, 2.0, 0.05).unwrap();
        assert!((v - 0.2).abs() < 1e-15, "got {v}");
        let h = perturbation_bound(0.0, 1.0, 3.0, 0.7).unwrap();
        assert_eq!(h, 0.7);
        assert!(perturbation_bound(-0.1, 1.0, 1.0, 0.0).is_err());
        assert!(perturbation_bound(0.1, f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn bi_lipschitz_bound_formula() {
        assert_eq!(bi_lipschitz_bound(1.0, 5.0, 2.0).unwrap(), 0.0);
        let v = bi_lipschitz_bound(1.5, 2.0, 2.0).unwrap();
        assert!((v - 1.25).abs() < 1e-15, "got {v}");
        let w = bi_lipschitz_bound(2.0, 0.0, 0.0).unwrap();
        assert!((w - 0.5).abs() < 1e-15, "got {w}");
        assert!(bi_lipschitz_bound(0.9, 1.0, 1.0).is_err());
    }

    /// A pivot-defect constant valid for the corner bridge: over the Pauli
    /// conjugation ball, `‖a·diag(1,0) − diag(1,0)·a‖ = ‖[diag(1,0), a]‖ ≤ ½`,
    /// attained at `a = X/2`.
    #[test]
    fn perturbation_estimate_dominates_the_length_lower_bound() {
        let bridge = corner_bridge_m2();
        let lip = pauli_action();
        let delta = 0.5;
        let diam = metric::diameter_bounds(&lip, 8, 3, 1e-6).unwrap();
        assert!(diam.upper_certified);
        let length = bridge.length_bounds(&lip, &lip, 3, 6, 29, 1e-6).unwrap();
        let bound =
            perturbation_bound(delta, diam.upper, diam.upper, length.lower).unwrap();
        assert!(
            bound >= length.lower - 1e-9,
            "perturbation {bound} vs length lower {}",
            length.lower
        );
    }
}
