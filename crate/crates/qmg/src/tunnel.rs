//! Tunnels: an ambient quantum metric space quotienting onto two endpoint
//! spaces through seminorm-compatible surjections.
//!
//! A tunnel certifies closeness of its endpoints: the ambient Lip-norm
//! induces, by quotient, the endpoint Lip-norms (verified here by sampling),
//! and the four numerical quantities — reach, depth, length, extent —
//! measure how far the two endpoint state spaces sit inside the ambient
//! one.  Chains of bridges (treks) and of tunnels (journeys) turn these
//! per-step quantities into end-to-end distance bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{
    state_net, AlgebraShape, Element, HermitianBasis, NetKind, StarMorphism, State,
};
use crate::bridge::{Bridge, BoundPair};
use crate::convex::{
    self, AffineMatrixMap, AffineVectorMap, BoundKind, ConstraintMap, NormConstraint, NormProgram,
    SolveReport,
};
use crate::linalg::C64;
use crate::lipnorm::{direct_sum_matrix, Atom, AtomValue, PermissibleF, Seminorm};
use crate::metric;
use crate::{Error, Result};

/// Number of random self-adjoint samples per endpoint in the quotient
/// verification run at construction.
const ISOMETRY_SAMPLES_PER_SIDE: usize = 20;
/// Allowed gap between the quotient seminorm and the endpoint Lip-norm on
/// normalized samples.
const ISOMETRY_TOL: f64 = 1e-5;
/// Self-adjointness slack accepted on quotient/lift arguments.
const SA_TOL: f64 = 1e-9;

/// Endpoint selector of a tunnel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    A,
    B,
}

/// Outcome of the sampled quotient-vs-endpoint verification.
///
/// Samples are normalized to endpoint Lip-norm one, so the recorded gaps
/// are relative to the natural scale of each endpoint.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IsometryReport {
    pub samples_per_side: usize,
    /// Gap threshold for `passed`.
    pub tolerance: f64,
    /// Worst `|quotient − endpoint Lip-norm|` over the A-side samples.
    pub worst_gap_a: f64,
    /// Worst gap over the B-side samples.
    pub worst_gap_b: f64,
    pub passed: bool,
}

/// The four sampled quantities of a tunnel.
///
/// All pairs are finite-net estimates except where a flag says otherwise;
/// the only exact entry produced here is the depth of a coordinate-split
/// tunnel, where every ambient state restricts to a mixture of endpoint
/// pullbacks and the depth is identically zero.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TunnelQuantities {
    /// Hausdorff distance between the two endpoint pullback faces.
    pub reach: BoundPair,
    /// Worst distance from an ambient state to the mixtures of the faces.
    pub depth: BoundPair,
    /// `max(reach, depth)`, componentwise.
    pub length: BoundPair,
    /// Worst distance from an ambient state to the nearer face, maximized
    /// over the two faces.
    pub extent: BoundPair,
}

// ---------------------------------------------------------------------------
// Direct-sum plumbing
// ---------------------------------------------------------------------------

fn sum_shape(a: &AlgebraShape, b: &AlgebraShape) -> AlgebraShape {
    let mut dims = a.block_dims.clone();
    dims.extend_from_slice(&b.block_dims);
    AlgebraShape::new(dims).expect("two valid shapes concatenate to a valid shape")
}

fn first_coordinate(e: &Element, a: &AlgebraShape) -> Element {
    let blocks = e.blocks()[..a.num_blocks()].to_vec();
    Element::from_blocks(a.clone(), blocks).expect("leading blocks match the first summand")
}

fn second_coordinate(e: &Element, skip: usize, b: &AlgebraShape) -> Element {
    let blocks = e.blocks()[skip..].to_vec();
    Element::from_blocks(b.clone(), blocks).expect("trailing blocks match the second summand")
}

#[cfg(test)]
fn pair_element(d: &AlgebraShape, a: &Element, b: &Element) -> Element {
    let mut blocks = a.blocks().to_vec();
    blocks.extend(b.blocks().iter().cloned());
    Element::from_blocks(d.clone(), blocks).expect("concatenated blocks match the sum shape")
}

fn matrixize(v: AtomValue) -> DMatrix<C64> {
    match v {
        AtomValue::Matrix(m) => m,
        // A column matrix has the Euclidean norm of its column as operator
        // norm, so vector-valued atoms embed without changing values.
        AtomValue::Vector(v) => {
            let n = v.len();
            DMatrix::from_iterator(n, 1, v.iter().copied())
        }
    }
}

/// Re-express every atom of `lip` as a densely stored atom on the ambient
/// algebra, pre-composed with `project`.
fn lifted_atoms<F>(basis_d: &HermitianBasis, lip: &Seminorm, project: F) -> Result<Vec<Atom>>
where
    F: Fn(&Element) -> Element,
{
    let Some(atoms) = lip.atoms() else {
        return Err(Error::Invalid {
            what: "tunnel",
            reason: "endpoint Lip-norms must be max-of-atoms seminorms".into(),
        });
    };
    let projected: Vec<Element> =
        (0..basis_d.len()).map(|j| project(&basis_d.element(j))).collect();
    Ok(atoms
        .iter()
        .map(|atom| Atom::Dense {
            basis: basis_d.clone(),
            coeffs: projected.iter().map(|p| matrixize(atom.apply(p))).collect(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Tunnel
// ---------------------------------------------------------------------------

/// An ambient Lip-normed algebra with two seminorm-compatible surjections
/// onto endpoint Lip-normed algebras.
#[derive(Clone, Debug)]
pub struct Tunnel {
    ambient: AlgebraShape,
    lip: Seminorm,
    onto_a: StarMorphism,
    onto_b: StarMorphism,
    lip_a: Seminorm,
    lip_b: Seminorm,
    /// Whether the ambient algebra is the direct sum of the endpoints with
    /// coordinate projections (enables the exact zero-depth argument).
    direct_sum: bool,
    /// Certified Frobenius radius of the gauged ambient unit ball, shared
    /// by all fiber programs.
    gauged_radius: f64,
    basis: HermitianBasis,
    frame_a: FiberFrame,
    frame_b: FiberFrame,
    isometry: IsometryReport,
}

/// Homogeneous part of a constraint map after an affine change of
/// variables (the constant term depends on the sample and is rebuilt per
/// solve).
#[derive(Clone, Debug)]
enum SubCoeffs {
    Mat(Vec<DMatrix<C64>>),
    Col(Vec<DVector<C64>>),
}

/// Coefficients of `map` in the variables `y` of the substitution
/// `x = offset + w·y`.
fn substituted_coeffs(map: &ConstraintMap, w: &DMatrix<f64>) -> SubCoeffs {
    match map {
        ConstraintMap::Spectral(m) => SubCoeffs::Mat(
            (0..w.ncols())
                .map(|k| {
                    let mut acc = DMatrix::zeros(m.constant.nrows(), m.constant.ncols());
                    for (j, mj) in m.coeffs.iter().enumerate() {
                        let c = w[(j, k)];
                        if c != 0.0 {
                            acc += mj * C64::new(c, 0.0);
                        }
                    }
                    acc
                })
                .collect(),
        ),
        ConstraintMap::Euclidean(v) => SubCoeffs::Col(
            (0..w.ncols())
                .map(|k| {
                    let mut acc = DVector::zeros(v.constant.len());
                    for (j, vj) in v.coeffs.iter().enumerate() {
                        let c = w[(j, k)];
                        if c != 0.0 {
                            acc += vj * C64::new(c, 0.0);
                        }
                    }
                    acc
                })
                .collect(),
        ),
    }
}

/// The map in `y` coordinates: original map evaluated at `offset` as the
/// constant term, substituted coefficients as the homogeneous part.
fn anchored_map(map: &ConstraintMap, offset: &DVector<f64>, sub: &SubCoeffs) -> ConstraintMap {
    match (map, sub) {
        (ConstraintMap::Spectral(m), SubCoeffs::Mat(coeffs)) => {
            ConstraintMap::Spectral(AffineMatrixMap::new(m.eval(offset), coeffs.clone()))
        }
        (ConstraintMap::Euclidean(v), SubCoeffs::Col(coeffs)) => {
            ConstraintMap::Euclidean(AffineVectorMap::new(v.eval(offset), coeffs.clone()))
        }
        _ => unreachable!("substituted coefficients match their map kind"),
    }
}

/// Per-endpoint data for optimizing over fibers `{d : π(d) = a}`.
///
/// The fiber is parametrized as `d₀ + Z·y` with `Z` an orthonormal basis
/// of the kernel of π (auxiliary program coordinates pass through), which
/// removes equality constraints from the fiber programs entirely: every
/// candidate the solver visits lies on the fiber by construction.
#[derive(Clone, Debug)]
struct FiberFrame {
    basis_cod: HermitianBasis,
    /// Codomain coordinates of the images of the ambient basis (the matrix
    /// of π in the canonical bases).
    matrix: DMatrix<f64>,
    /// Substitution matrix `w` of `x = offset + w·y`: kernel basis over the
    /// algebra coordinates, identity over auxiliary coordinates.
    w: DMatrix<f64>,
    kdim: usize,
    extra: usize,
    /// Ambient Lip-norm maps over the original coordinates.
    maps: Vec<ConstraintMap>,
    /// Their substituted homogeneous parts.
    sub: Vec<SubCoeffs>,
    /// Ambient operator-norm map (objective of minimal-norm lifts).
    norm_map: ConstraintMap,
    norm_sub: SubCoeffs,
}

/// Relative spectral threshold declaring a Gram eigenvalue part of the
/// kernel; matches the validation tolerance of morphisms (coordinates are
/// structural, so nonzero singular values sit far above it).
const KERNEL_EIG_TOL: f64 = 1e-15;

fn build_frame(
    basis: &HermitianBasis,
    ambient: &AlgebraShape,
    maps: Vec<ConstraintMap>,
    extra: usize,
    onto: &StarMorphism,
) -> FiberFrame {
    let dim_sa = basis.len();
    let basis_cod = HermitianBasis::new(onto.codomain());
    let rows = basis_cod.len();
    let cols: Vec<DVector<f64>> =
        (0..dim_sa).map(|j| basis_cod.coords(&onto.apply(&basis.element(j)))).collect();
    let matrix = DMatrix::from_fn(rows, dim_sa, |i, j| cols[j][i]);

    let gram = matrix.transpose() * &matrix;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
    let keep: Vec<usize> =
        (0..dim_sa).filter(|&k| eig.eigenvalues[k] <= KERNEL_EIG_TOL * lmax).collect();
    let kdim = keep.len();
    debug_assert_eq!(dim_sa - kdim, rows, "surjections have full-rank coordinate matrices");

    let mut w = DMatrix::zeros(dim_sa + extra, kdim + extra);
    for (c, &k) in keep.iter().enumerate() {
        for j in 0..dim_sa {
            w[(j, c)] = eig.eigenvectors[(j, k)];
        }
    }
    for e in 0..extra {
        w[(dim_sa + e, kdim + e)] = 1.0;
    }

    let n = ambient.hilbert_dim();
    let mut norm_coeffs: Vec<DMatrix<C64>> =
        (0..dim_sa).map(|j| direct_sum_matrix(&basis.element(j))).collect();
    norm_coeffs.extend(std::iter::repeat_with(|| DMatrix::zeros(n, n)).take(extra));
    let norm_map = ConstraintMap::Spectral(AffineMatrixMap::homogeneous(n, n, norm_coeffs));

    let sub = maps.iter().map(|m| substituted_coeffs(m, &w)).collect();
    let norm_sub = substituted_coeffs(&norm_map, &w);
    FiberFrame { basis_cod, matrix, w, kdim, extra, maps, sub, norm_map, norm_sub }
}

/// Sample-dependent part of a fiber program.
struct SampleFiber {
    /// Particular fiber point in full coordinates (auxiliary coordinates
    /// zero).
    offset: DVector<f64>,
    /// Ambient Lip-norm at that point: a level the fiber certainly attains.
    reference_level: f64,
    unit_rhs: f64,
    unit_coeff: f64,
    unit_row_norm: f64,
    offset_norm: f64,
}

impl Tunnel {
    /// Validate and assemble a tunnel from explicit data, running the
    /// sampled quotient verification.
    ///
    /// The surjections must be onto the shapes of `lip_a`/`lip_b`, and the
    /// construction promises (but sampling, not proof, checks) that the
    /// ambient Lip-norm quotients onto the endpoint ones.
    pub fn new(
        lip: Seminorm,
        onto_a: StarMorphism,
        onto_b: StarMorphism,
        lip_a: Seminorm,
        lip_b: Seminorm,
        tol: f64,
    ) -> Result<Self> {
        Self::assemble(lip, onto_a, onto_b, lip_a, lip_b, false, tol)
    }

    fn assemble(
        lip: Seminorm,
        onto_a: StarMorphism,
        onto_b: StarMorphism,
        lip_a: Seminorm,
        lip_b: Seminorm,
        direct_sum: bool,
        tol: f64,
    ) -> Result<Self> {
        let ambient = lip.shape().clone();
        for (onto, endpoint) in [(&onto_a, &lip_a), (&onto_b, &lip_b)] {
            ambient.check_same(onto.domain())?;
            endpoint.shape().check_same(onto.codomain())?;
            if !onto.is_surjective() {
                return Err(Error::NotMorphism {
                    reason: "tunnel end maps must be surjective".into(),
                });
            }
        }
        for l in [&lip, &lip_a, &lip_b] {
            if !l.is_lip_norm() {
                return Err(Error::NotLipschitz { kernel_dim: l.kernel_dim() });
            }
        }
        let gauged_radius = lip.gauged_ball_radius()?;
        let basis = HermitianBasis::new(&ambient);
        let indices: Vec<usize> = (0..basis.len()).collect();
        let (maps, extra) = lip.program_maps(&basis, &indices)?;
        let frame_a = build_frame(&basis, &ambient, maps.clone(), extra, &onto_a);
        let frame_b = build_frame(&basis, &ambient, maps, extra, &onto_b);
        let mut tunnel = Tunnel {
            ambient,
            lip,
            onto_a,
            onto_b,
            lip_a,
            lip_b,
            direct_sum,
            gauged_radius,
            basis,
            frame_a,
            frame_b,
            isometry: IsometryReport {
                samples_per_side: 0,
                tolerance: ISOMETRY_TOL,
                worst_gap_a: 0.0,
                worst_gap_b: 0.0,
                passed: false,
            },
        };
        tunnel.isometry = tunnel.run_isometry_check(tol)?;
        Ok(tunnel)
    }

    fn run_isometry_check(&self, tol: f64) -> Result<IsometryReport> {
        let mut worst = [0.0f64; 2];
        for (k, side) in [Side::A, Side::B].into_iter().enumerate() {
            let target = self.endpoint_lip(side);
            let shape = target.shape().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(0x7a99 + k as u64);
            for _ in 0..ISOMETRY_SAMPLES_PER_SIDE {
                let mut a = Element::random_sa(&shape, &mut rng);
                let scale = target.eval(&a)?;
                if scale > 1e-9 {
                    a = a.scaled_re(1.0 / scale);
                }
                let q = self.quotient_seminorm(side, &a, tol)?;
                let l = target.eval(&a)?;
                worst[k] = worst[k].max((q - l).abs());
            }
        }
        Ok(IsometryReport {
            samples_per_side: ISOMETRY_SAMPLES_PER_SIDE,
            tolerance: ISOMETRY_TOL,
            worst_gap_a: worst[0],
            worst_gap_b: worst[1],
            passed: worst[0] <= ISOMETRY_TOL && worst[1] <= ISOMETRY_TOL,
        })
    }

    pub fn ambient(&self) -> &AlgebraShape {
        &self.ambient
    }

    pub fn lip(&self) -> &Seminorm {
        &self.lip
    }

    pub fn surjection(&self, side: Side) -> &StarMorphism {
        match side {
            Side::A => &self.onto_a,
            Side::B => &self.onto_b,
        }
    }

    pub fn endpoint_lip(&self, side: Side) -> &Seminorm {
        match side {
            Side::A => &self.lip_a,
            Side::B => &self.lip_b,
        }
    }

    /// Result of the sampled quotient verification run at construction.
    pub fn isometry(&self) -> &IsometryReport {
        &self.isometry
    }

    /// Whether the ambient algebra splits as the direct sum of the
    /// endpoints with coordinate projections.
    pub fn is_direct_sum(&self) -> bool {
        self.direct_sum
    }

    fn frame(&self, side: Side) -> &FiberFrame {
        match side {
            Side::A => &self.frame_a,
            Side::B => &self.frame_b,
        }
    }

    fn check_fiber_argument(&self, side: Side, a: &Element) -> Result<()> {
        self.surjection(side).codomain().check_same(a.shape())?;
        if (&a.adjoint() - a).frobenius_norm() > SA_TOL {
            return Err(Error::Invalid {
                what: "tunnel fiber",
                reason: "the projected element must be self-adjoint".into(),
            });
        }
        Ok(())
    }

    fn sample_fiber(&self, frame: &FiberFrame, a: &Element) -> Result<SampleFiber> {
        let rhs = frame.basis_cod.coords(a);
        let x_p = frame
            .matrix
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Invalid { what: "tunnel fiber", reason: e.into() })?;
        let dim_sa = self.basis.len();
        let mut d0 = Element::zero(&self.ambient);
        for j in 0..dim_sa {
            if x_p[j] != 0.0 {
                d0 = &d0 + &self.basis.element(j).scaled_re(x_p[j]);
            }
        }
        let reference_level = self.lip.eval(&d0)?;
        let u_cod = frame.basis_cod.unit_index();
        let unit_coeff = frame.matrix[(u_cod, self.basis.unit_index())];
        debug_assert!(unit_coeff > 1e-9, "surjections preserve units");
        let offset_norm = x_p.norm();
        let mut offset = DVector::zeros(dim_sa + frame.extra);
        offset.rows_mut(0, dim_sa).copy_from(&x_p);
        Ok(SampleFiber {
            offset,
            reference_level,
            unit_rhs: rhs[u_cod],
            unit_coeff,
            unit_row_norm: frame.matrix.row(u_cod).norm(),
            offset_norm,
        })
    }

    /// Box radius containing, in fiber coordinates, every fiber point of
    /// ambient Lip-norm at most `level`: the gauged part lies in the
    /// certified gauged ball scaled by `level`, the unit coordinate is
    /// pinned by the unit row of the projection, and the substitution is
    /// an isometry up to the recorded offset.
    fn fiber_box(&self, sf: &SampleFiber, level: f64) -> f64 {
        let g = level.max(0.0) * self.gauged_radius;
        let s = (sf.unit_rhs.abs() + sf.unit_row_norm * g) / sf.unit_coeff;
        s + g + sf.offset_norm + (self.ambient.hilbert_dim() as f64).sqrt() + 1.0
    }

    fn rebuild(&self, frame: &FiberFrame, sf: &SampleFiber, y: &[f64]) -> Element {
        let x = &sf.offset + &frame.w * DVector::from_column_slice(y);
        let mut d = Element::zero(&self.ambient);
        for j in 0..self.basis.len() {
            if x[j] != 0.0 {
                d = &d + &self.basis.element(j).scaled_re(x[j]);
            }
        }
        d
    }

    /// Full solver report for the quotient seminorm
    /// `inf{L_D(d) : π(d) = a}`: `value` is the ambient Lip-norm at a point
    /// of the fiber (an upper bound on the infimum), `lower` the relaxation
    /// bound; the report's `point` is expressed in fiber coordinates.
    pub fn quotient_report(&self, side: Side, a: &Element, tol: f64) -> Result<SolveReport> {
        self.check_fiber_argument(side, a)?;
        let frame = self.frame(side);
        let sf = self.sample_fiber(frame, a)?;
        let dim = frame.kdim + frame.extra;
        if dim == 0 {
            // The surjection is invertible: the fiber is a single point.
            return Ok(SolveReport {
                value: sf.reference_level,
                point: vec![],
                lower: sf.reference_level,
                upper: sf.reference_level,
                gap: 0.0,
                iterations: 0,
                cuts: 0,
                box_radius: 0.0,
            });
        }
        let radius = self.fiber_box(&sf, sf.reference_level);
        let constraints = frame
            .maps
            .iter()
            .zip(&frame.sub)
            .map(|(map, sub)| NormConstraint {
                map: anchored_map(map, &sf.offset, sub),
                bound: BoundKind::Epigraph,
            })
            .collect();
        let program = NormProgram {
            dim,
            objective: DVector::zeros(dim),
            constraints,
            equalities: vec![],
            box_radius: Some(radius),
        };
        convex::minimize_max_norm(&program, tol)
    }

    /// The quotient seminorm of `a` through the chosen surjection: the
    /// smallest ambient Lip-norm over the fiber of `a`, reported at a
    /// fiber point.
    pub fn quotient_seminorm(&self, side: Side, a: &Element, tol: f64) -> Result<f64> {
        Ok(self.quotient_report(side, a, tol)?.value)
    }

    /// A fiber point over `a` of minimal operator norm among those of
    /// ambient Lip-norm at most `level`.
    ///
    /// Fails when `level` is below the quotient seminorm of `a` (the fiber
    /// slice is empty).
    pub fn lift_element(&self, side: Side, a: &Element, level: f64, tol: f64) -> Result<Element> {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(Error::Invalid {
                what: "tunnel lift",
                reason: format!("level must be a nonnegative real, got {level}"),
            });
        }
        self.check_fiber_argument(side, a)?;
        let frame = self.frame(side);
        let sf = self.sample_fiber(frame, a)?;
        let dim = frame.kdim + frame.extra;
        if dim == 0 {
            return if sf.reference_level <= level + tol {
                Ok(self.rebuild(frame, &sf, &[]))
            } else {
                Err(Error::Invalid {
                    what: "tunnel lift",
                    reason: format!(
                        "level {level} is below the quotient seminorm of the element"
                    ),
                })
            };
        }
        let radius = self.fiber_box(&sf, level);
        let mut constraints: Vec<NormConstraint> = frame
            .maps
            .iter()
            .zip(&frame.sub)
            .map(|(map, sub)| NormConstraint {
                map: anchored_map(map, &sf.offset, sub),
                bound: BoundKind::Fixed(level),
            })
            .collect();
        constraints.push(NormConstraint {
            map: anchored_map(&frame.norm_map, &sf.offset, &frame.norm_sub),
            bound: BoundKind::Epigraph,
        });
        let program = NormProgram {
            dim,
            objective: DVector::zeros(dim),
            constraints,
            equalities: vec![],
            box_radius: Some(radius),
        };
        let report = convex::minimize_max_norm(&program, tol).map_err(|e| match e {
            Error::BadProgram { status: "infeasible", .. } => Error::Invalid {
                what: "tunnel lift",
                reason: format!("level {level} is below the quotient seminorm of the element"),
            },
            other => other,
        })?;
        Ok(self.rebuild(frame, &sf, &report.point))
    }

    /// Sampled enclosures of reach, depth, length, and extent under the
    /// ambient Monge-Kantorovich metric.
    ///
    /// Ambient states are sampled (`net_size` random mixed states, or every
    /// pure state when the ambient algebra is commutative) and extended by
    /// both endpoint pullback faces, so that the reported values satisfy
    /// `length ≤ extent` structurally.  Only the depth of a
    /// coordinate-split tunnel is certified (it is exactly zero: every
    /// ambient state is a mixture of the two faces).
    pub fn quantities(&self, net_size: usize, seed: u64, tol: f64) -> Result<TunnelQuantities> {
        let ambient_net = if self.ambient.is_commutative() {
            state_net(&self.ambient, NetKind::PureEnumerate, 0, 0)?
        } else {
            state_net(&self.ambient, NetKind::MixedRandom, net_size.max(2), seed)?
        };
        // Both faces share the endpoint sampling seed: when the endpoint
        // shapes coincide the nets then contain matched pairs, which keeps
        // the face-to-face estimates from being dominated by sampling
        // mismatch.
        let face = |onto: &StarMorphism| -> Result<Vec<State>> {
            let cod = onto.codomain();
            let base = if cod.is_commutative() {
                state_net(cod, NetKind::PureEnumerate, 0, 0)?
            } else {
                state_net(cod, NetKind::MixedRandom, net_size.max(2), seed.wrapping_add(1))?
            };
            base.iter().map(|phi| onto.pull_back(phi)).collect()
        };
        let face_a = face(&self.onto_a)?;
        let face_b = face(&self.onto_b)?;
        let mk = |x: &State, y: &State| metric::mk_distance(&self.lip, x, y, tol);

        let reach_h = metric::hausdorff_bounds(&face_a, &face_b, mk, 0.0)?;
        let reach = BoundPair {
            lower: reach_h.lower,
            heuristic_upper: reach_h.lower,
            lower_certified: false,
            upper_certified: false,
        };

        // Rows shared by depth and extent: the sampled ambient states plus
        // both faces, which makes `length ≤ extent` hold at net level.
        let mut rows = ambient_net;
        rows.extend(face_a.iter().cloned());
        rows.extend(face_b.iter().cloned());

        let depth = if self.direct_sum {
            BoundPair {
                lower: 0.0,
                heuristic_upper: 0.0,
                lower_certified: true,
                upper_certified: true,
            }
        } else {
            let mut hull = mixture_net(&face_a, &face_b, net_size.max(4), seed.wrapping_add(3))?;
            hull.extend(face_a.iter().cloned());
            hull.extend(face_b.iter().cloned());
            let m = metric::pairwise_matrix(&rows, &hull, mk)?;
            let v = directed_max_min(&m);
            BoundPair {
                lower: v,
                heuristic_upper: v,
                lower_certified: false,
                upper_certified: false,
            }
        };

        let to_a = metric::pairwise_matrix(&rows, &face_a, mk)?;
        let to_b = metric::pairwise_matrix(&rows, &face_b, mk)?;
        let v = directed_max_min(&to_a).max(directed_max_min(&to_b));
        let extent = BoundPair {
            lower: v,
            heuristic_upper: v,
            lower_certified: false,
            upper_certified: false,
        };

        let length = BoundPair {
            lower: reach.lower.max(depth.lower),
            heuristic_upper: reach.heuristic_upper.max(depth.heuristic_upper),
            lower_certified: reach.lower_certified && depth.lower_certified,
            upper_certified: reach.upper_certified && depth.upper_certified,
        };
        Ok(TunnelQuantities { reach, depth, length, extent })
    }
}

fn directed_max_min(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max)
}

fn mixture_net(
    face_a: &[State],
    face_b: &[State],
    count: usize,
    seed: u64,
) -> Result<Vec<State>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let i = rng.gen_range(0..face_a.len());
            let j = rng.gen_range(0..face_b.len());
            let t: f64 = rng.gen_range(0.0..=1.0);
            face_a[i].mix(&face_b[j], t)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Constructions
// ---------------------------------------------------------------------------

/// The direct-sum tunnel of a bridge: on `A ⊕ B`, the Lip-norm is the
/// largest of the endpoint Lip-norms and the bridge pair seminorm divided
/// by `lambda`, with coordinate projections as end maps.
///
/// Quotienting exactly recovers the endpoint Lip-norms whenever `lambda`
/// exceeds the bridge length; the recorded verification report says
/// whether the sampled check agreed.
pub fn tunnel_from_bridge(
    bridge: &Bridge,
    lip_a: &Seminorm,
    lip_b: &Seminorm,
    lambda: f64,
    tol: f64,
) -> Result<Tunnel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid {
            what: "tunnel",
            reason: format!("the pair-seminorm weight must be a positive real, got {lambda}"),
        });
    }
    lip_a.shape().check_same(bridge.domain_a())?;
    lip_b.shape().check_same(bridge.domain_b())?;
    let shape_a = bridge.domain_a().clone();
    let shape_b = bridge.domain_b().clone();
    let ambient = sum_shape(&shape_a, &shape_b);
    let basis_d = HermitianBasis::new(&ambient);
    let a_blocks = shape_a.num_blocks();

    let mut atoms = lifted_atoms(&basis_d, lip_a, |e| first_coordinate(e, &shape_a))?;
    atoms.extend(lifted_atoms(&basis_d, lip_b, |e| {
        second_coordinate(e, a_blocks, &shape_b)
    })?);
    let pivot = bridge.pivot();
    let inv_lambda = C64::new(1.0 / lambda, 0.0);
    let coeffs: Vec<DMatrix<C64>> = (0..basis_d.len())
        .map(|j| {
            let d = basis_d.element(j);
            let left = &bridge.embed_a().apply(&first_coordinate(&d, &shape_a)) * pivot;
            let right = pivot * &bridge.embed_b().apply(&second_coordinate(&d, a_blocks, &shape_b));
            direct_sum_matrix(&(&left - &right)) * inv_lambda
        })
        .collect();
    atoms.push(Atom::Dense { basis: basis_d.clone(), coeffs });
    let lip = Seminorm::max_of_atoms(&ambient, atoms)?;

    let onto_a = StarMorphism::from_map(&ambient, &shape_a, |e| first_coordinate(e, &shape_a))?;
    let onto_b = StarMorphism::from_map(&ambient, &shape_b, |e| {
        second_coordinate(e, a_blocks, &shape_b)
    })?;
    Tunnel::assemble(lip, onto_a, onto_b, lip_a.clone(), lip_b.clone(), true, tol)
}

/// Join two tunnels end to end: the new ambient algebra is the direct sum
/// of the two ambient algebras, carrying both original Lip-norms and a
/// joining seminorm `‖ρ₁(d₁) − π₂(d₂)‖ / epsilon` that pins the shared
/// middle endpoint.
///
/// The first tunnel's B-endpoint must live on the same algebra (with the
/// same Lip-norm, which is the caller's responsibility) as the second
/// tunnel's A-endpoint.
pub fn compose_tunnels(first: &Tunnel, second: &Tunnel, epsilon: f64, tol: f64) -> Result<Tunnel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Invalid {
            what: "tunnel composition",
            reason: format!("the joining tolerance must be a positive real, got {epsilon}"),
        });
    }
    first
        .surjection(Side::B)
        .codomain()
        .check_same(second.surjection(Side::A).codomain())?;
    let amb1 = first.ambient().clone();
    let amb2 = second.ambient().clone();
    let ambient = sum_shape(&amb1, &amb2);
    let basis_d = HermitianBasis::new(&ambient);
    let skip = amb1.num_blocks();

    let mut atoms = lifted_atoms(&basis_d, first.lip(), |e| first_coordinate(e, &amb1))?;
    atoms.extend(lifted_atoms(&basis_d, second.lip(), |e| second_coordinate(e, skip, &amb2))?);
    let inv_eps = C64::new(1.0 / epsilon, 0.0);
    let coeffs: Vec<DMatrix<C64>> = (0..basis_d.len())
        .map(|j| {
            let d = basis_d.element(j);
            let mid_from_first = first.surjection(Side::B).apply(&first_coordinate(&d, &amb1));
            let mid_from_second =
                second.surjection(Side::A).apply(&second_coordinate(&d, skip, &amb2));
            direct_sum_matrix(&(&mid_from_first - &mid_from_second)) * inv_eps
        })
        .collect();
    atoms.push(Atom::Dense { basis: basis_d.clone(), coeffs });
    let lip = Seminorm::max_of_atoms(&ambient, atoms)?;

    let shape_a = first.surjection(Side::A).codomain().clone();
    let shape_c = second.surjection(Side::B).codomain().clone();
    let onto_a = {
        let inner = first.surjection(Side::A).clone();
        let amb1 = amb1.clone();
        StarMorphism::from_map(&ambient, &shape_a, move |e| {
            inner.apply(&first_coordinate(e, &amb1))
        })?
    };
    let onto_b = {
        let inner = second.surjection(Side::B).clone();
        let amb2 = amb2.clone();
        StarMorphism::from_map(&ambient, &shape_c, move |e| {
            inner.apply(&second_coordinate(e, skip, &amb2))
        })?
    };
    Tunnel::assemble(
        lip,
        onto_a,
        onto_b,
        first.endpoint_lip(Side::A).clone(),
        second.endpoint_lip(Side::B).clone(),
        false,
        tol,
    )
}

/// Default joining tolerance for composition: a thousandth of the larger
/// outer-endpoint diameter, so the join term is negligible against the
/// metric scale of the chain.
pub fn default_join_tolerance(
    first: &Tunnel,
    second: &Tunnel,
    net_size: usize,
    seed: u64,
    tol: f64,
) -> Result<f64> {
    let da = metric::diameter_bounds(first.endpoint_lip(Side::A), net_size, seed, tol)?;
    let dc = metric::diameter_bounds(second.endpoint_lip(Side::B), net_size, seed, tol)?;
    Ok(1e-3 * da.upper.max(dc.upper))
}

/// Sample Jordan and Lie products against the growth law
/// `F(x, y, lx, ly) = c·(x·ly + y·lx) + d·lx·ly` for the ambient Lip-norm.
pub fn check_composite_leibniz(
    tunnel: &Tunnel,
    f: &PermissibleF,
    samples: usize,
    seed: u64,
) -> Result<crate::lipnorm::LeibnizReport> {
    crate::lipnorm::check_quasi_leibniz(tunnel.lip(), f, samples, seed)
}

// ---------------------------------------------------------------------------
// Treks and journeys
// ---------------------------------------------------------------------------

/// A chain of bridges whose endpoint algebras agree link to link, together
/// with the Lip-norm carried by each node of the chain.
#[derive(Clone, Debug)]
pub struct Trek {
    bridges: Vec<Bridge>,
    lips: Vec<Seminorm>,
}

impl Trek {
    /// Validate a chain: `lips[i]` and `lips[i+1]` must live on the
    /// endpoint algebras of `bridges[i]`.
    pub fn new(bridges: Vec<Bridge>, lips: Vec<Seminorm>) -> Result<Self> {
        if bridges.is_empty() {
            return Err(Error::Invalid {
                what: "trek",
                reason: "a trek needs at least one bridge".into(),
            });
        }
        if lips.len() != bridges.len() + 1 {
            return Err(Error::Invalid {
                what: "trek",
                reason: format!(
                    "a chain of {} bridges needs {} Lip-norms, got {}",
                    bridges.len(),
                    bridges.len() + 1,
                    lips.len()
                ),
            });
        }
        for (i, bridge) in bridges.iter().enumerate() {
            lips[i].shape().check_same(bridge.domain_a())?;
            lips[i + 1].shape().check_same(bridge.domain_b())?;
        }
        for lip in &lips {
            if !lip.is_lip_norm() {
                return Err(Error::NotLipschitz { kernel_dim: lip.kernel_dim() });
            }
        }
        Ok(Trek { bridges, lips })
    }

    pub fn bridges(&self) -> &[Bridge] {
        &self.bridges
    }

    pub fn lips(&self) -> &[Seminorm] {
        &self.lips
    }

    /// Sampled length bounds of every bridge in the chain, sharing the
    /// sampling budget.
    pub fn length_bounds(
        &self,
        directions: usize,
        net_size: usize,
        seed: u64,
        tol: f64,
    ) -> Result<Vec<BoundPair>> {
        self.bridges
            .iter()
            .enumerate()
            .map(|(i, bridge)| {
                bridge.length_bounds(
                    &self.lips[i],
                    &self.lips[i + 1],
                    directions,
                    net_size,
                    seed.wrapping_add(i as u64),
                    tol,
                )
            })
            .collect()
    }
}

/// Componentwise sum of per-bridge length bounds along a trek; each side
/// stays certified only when every contribution is.
pub fn trek_length(trek: &Trek, per_bridge: &[BoundPair]) -> Result<BoundPair> {
    if per_bridge.len() != trek.bridges().len() {
        return Err(Error::Invalid {
            what: "trek length",
            reason: format!(
                "chain has {} bridges but {} bound entries were supplied",
                trek.bridges().len(),
                per_bridge.len()
            ),
        });
    }
    Ok(per_bridge.iter().fold(
        BoundPair {
            lower: 0.0,
            heuristic_upper: 0.0,
            lower_certified: true,
            upper_certified: true,
        },
        |acc, b| BoundPair {
            lower: acc.lower + b.lower,
            heuristic_upper: acc.heuristic_upper + b.heuristic_upper,
            lower_certified: acc.lower_certified && b.lower_certified,
            upper_certified: acc.upper_certified && b.upper_certified,
        },
    ))
}

/// Best fully-certified end-to-end upper bound over the supplied treks:
/// the minimum of the summed upper components, counting only treks whose
/// every bridge carries a certified upper bound.  `None` when no trek
/// qualifies.
pub fn propinquity_upper_bound(entries: &[(&Trek, &[BoundPair])]) -> Result<Option<f64>> {
    if entries.is_empty() {
        return Err(Error::Invalid {
            what: "propinquity bound",
            reason: "no treks supplied".into(),
        });
    }
    let mut best: Option<f64> = None;
    for (trek, data) in entries {
        let total = trek_length(trek, data)?;
        if total.upper_certified {
            best = Some(best.map_or(total.heuristic_upper, |b| b.min(total.heuristic_upper)));
        }
    }
    Ok(best)
}

/// A chain of tunnels whose endpoint algebras agree link to link.
#[derive(Clone, Debug)]
pub struct Journey {
    tunnels: Vec<Tunnel>,
}

impl Journey {
    pub fn new(tunnels: Vec<Tunnel>) -> Result<Self> {
        if tunnels.is_empty() {
            return Err(Error::Invalid {
                what: "journey",
                reason: "a journey needs at least one tunnel".into(),
            });
        }
        for pair in tunnels.windows(2) {
            pair[0]
                .surjection(Side::B)
                .codomain()
                .check_same(pair[1].surjection(Side::A).codomain())?;
        }
        Ok(Journey { tunnels })
    }

    pub fn tunnels(&self) -> &[Tunnel] {
        &self.tunnels
    }

    /// Componentwise sum of per-tunnel extent bounds along the chain.
    pub fn extent_sum(&self, per_tunnel: &[BoundPair]) -> Result<BoundPair> {
        if per_tunnel.len() != self.tunnels.len() {
            return Err(Error::Invalid {
                what: "journey extent",
                reason: format!(
                    "chain has {} tunnels but {} bound entries were supplied",
                    self.tunnels.len(),
                    per_tunnel.len()
                ),
            });
        }
        Ok(per_tunnel.iter().fold(
            BoundPair {
                lower: 0.0,
                heuristic_upper: 0.0,
                lower_certified: true,
                upper_certified: true,
            },
            |acc, b| BoundPair {
                lower: acc.lower + b.lower,
                heuristic_upper: acc.heuristic_upper + b.heuristic_upper,
                lower_certified: acc.lower_certified && b.lower_certified,
                upper_certified: acc.upper_certified && b.upper_certified,
            },
        ))
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn m2() -> AlgebraShape {
        AlgebraShape::full(2)
    }

    fn c2() -> AlgebraShape {
        AlgebraShape::commutative(2)
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

    fn weighted_action(wx: f64, wz: f64) -> Seminorm {
        crate::lipnorm::from_group_action(&m2(), vec![(pauli('x'), wx), (pauli('z'), wz)])
            .unwrap()
    }

    fn pauli_action() -> Seminorm {
        weighted_action(1.0, 1.0)
    }

    fn identity_bridge_m2() -> Bridge {
        Bridge::new(Element::unit(&m2()), identity_morphism(&m2()), identity_morphism(&m2()))
            .unwrap()
    }

    fn corner_bridge_m2() -> Bridge {
        let corner = Element::from_blocks(
            m2(),
            vec![dmatrix![
                C64::new(1.0, 0.0), C64::new(0.0, 0.0);
                C64::new(0.0, 0.0), C64::new(0.0, 0.0);
            ]],
        )
        .unwrap();
        Bridge::new(corner, identity_morphism(&m2()), identity_morphism(&m2())).unwrap()
    }

    fn two_point_lip(d: f64) -> Seminorm {
        metric::finite_space_lipschitz(&dmatrix![0.0, d; d, 0.0]).unwrap()
    }

    fn two_point_bridge() -> Bridge {
        Bridge::new(Element::unit(&c2()), identity_morphism(&c2()), identity_morphism(&c2()))
            .unwrap()
    }

    fn two_point_function(f0: f64, f1: f64) -> Element {
        Element::from_blocks(
            c2(),
            vec![
                DMatrix::from_element(1, 1, C64::new(f0, 0.0)),
                DMatrix::from_element(1, 1, C64::new(f1, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_tunnel_is_isometric_and_matches_the_endpoint() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1.0, 1e-7).unwrap();
        assert!(tunnel.isometry().passed, "{:?}", tunnel.isometry());
        assert!(tunnel.is_direct_sum());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let a = Element::random_sa(&m2(), &mut rng);
            let q = tunnel.quotient_seminorm(Side::A, &a, 1e-7).unwrap();
            let l = lip.eval(&a).unwrap();
            assert!((q - l).abs() < 1e-5, "quotient {q} vs Lip-norm {l}");
        }
    }

    #[test]
    fn quotient_respects_the_first_coordinate_floor() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&corner_bridge_m2(), &lip, &lip, 0.3, 1e-7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..6 {
            let a = Element::random_sa(&m2(), &mut rng);
            let q = tunnel.quotient_seminorm(Side::A, &a, 1e-7).unwrap();
            let l = lip.eval(&a).unwrap();
            assert!(q >= l - 1e-9, "quotient {q} undercuts the endpoint value {l}");
        }
    }

    /// Two-point endpoints with edge lengths 1 and 2 and a unit pivot: for
    /// a function `g` with `|g₀ − g₁| = 2` the quotient onto the B side at
    /// joining weight `λ` interpolates `f` between `g` and its mean, giving
    /// `min_s max{2(1−s), 1, s/λ}`; at `λ = 0.2` the first and third terms
    /// balance at `s = 2/7`, so the quotient is `10/7` while the endpoint
    /// Lip-norm is `1`.
    #[test]
    fn small_lambda_two_point_quotient_matches_the_interpolation_formula() {
        let lip_a = two_point_lip(1.0);
        let lip_b = two_point_lip(2.0);
        let tunnel = tunnel_from_bridge(&two_point_bridge(), &lip_a, &lip_b, 0.2, 1e-7).unwrap();

        let g = two_point_function(1.0, -1.0);
        let q = tunnel.quotient_seminorm(Side::B, &g, 1e-7).unwrap();

        // Independent oracle: coarse-to-fine grid over the lift's free
        // A-side coordinates.
        let objective = |f0: f64, f1: f64| -> f64 {
            let la = (f0 - f1).abs();
            let lb = 1.0; // |g0 − g1| / 2
            let join = (f0 - 1.0).abs().max((f1 + 1.0).abs()) / 0.2;
            la.max(lb).max(join)
        };
        let mut center = (0.0f64, 0.0f64);
        let mut best = f64::INFINITY;
        let mut span = 2.0f64;
        for _ in 0..4 {
            let step = span / 200.0;
            let (c0, c1) = center;
            for i in 0..=400 {
                for j in 0..=400 {
                    let f0 = c0 - span + i as f64 * step;
                    let f1 = c1 - span + j as f64 * step;
                    let v = objective(f0, f1);
                    if v < best {
                        best = v;
                        center = (f0, f1);
                    }
                }
            }
            span /= 20.0;
        }
        assert!((best - 10.0 / 7.0).abs() < 1e-4, "grid oracle found {best}");
        assert!((q - best).abs() < 1e-4, "quotient {q} vs grid {best}");

        // Every normalized B-side sample has the same quotient value, so
        // the recorded worst gap is exactly the excess 3/7.
        let report = tunnel.isometry();
        assert!(!report.passed);
        assert!(report.worst_gap_a < 1e-5, "A side stays isometric: {report:?}");
        assert!(
            (report.worst_gap_b - 3.0 / 7.0).abs() < 1e-3,
            "B-side gap should be 3/7, got {}",
            report.worst_gap_b
        );
    }

    #[test]
    fn large_lambda_passes_the_sampled_isometry_check() {
        let lip_a = two_point_lip(1.0);
        let lip_b = two_point_lip(2.0);
        let tunnel =
            tunnel_from_bridge(&two_point_bridge(), &lip_a, &lip_b, 100.0, 1e-7).unwrap();
        assert!(tunnel.isometry().passed, "{:?}", tunnel.isometry());
    }

    #[test]
    fn weighted_pauli_small_lambda_fails_the_isometry_check() {
        let lip_a = weighted_action(1.0, 5.0);
        let lip_b = weighted_action(5.0, 1.0);
        let tunnel =
            tunnel_from_bridge(&identity_bridge_m2(), &lip_a, &lip_b, 1e-3, 1e-7).unwrap();
        let report = tunnel.isometry();
        assert!(!report.passed);
        assert!(
            report.worst_gap_a > 0.5 && report.worst_gap_b > 0.5,
            "mismatched endpoint Lip-norms should leave large gaps: {report:?}"
        );
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let lip = pauli_action();
        for bad in [0.0, -1.0, f64::NAN] {
            let r = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, bad, 1e-7);
            assert!(r.is_err(), "lambda {bad} must be rejected");
        }
    }

    #[test]
    fn depth_of_a_bridge_tunnel_is_certified_zero() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&corner_bridge_m2(), &lip, &lip, 1.0, 1e-6).unwrap();
        let q = tunnel.quantities(3, 11, 1e-6).unwrap();
        assert_eq!(q.depth.lower, 0.0);
        assert_eq!(q.depth.heuristic_upper, 0.0);
        assert!(q.depth.lower_certified && q.depth.upper_certified);
    }

    #[test]
    fn identity_tunnel_reach_stays_below_the_joining_weight() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1e-3, 1e-6).unwrap();
        assert!(tunnel.isometry().passed, "{:?}", tunnel.isometry());
        let q = tunnel.quantities(3, 13, 1e-6).unwrap();
        // Matched elements differ by at most λ in norm inside the unit
        // ball, so every face-to-face distance is at most λ.
        assert!(q.reach.lower <= 2e-3, "reach {}", q.reach.lower);
        assert!(q.length.lower <= 2e-3, "length {}", q.length.lower);
    }

    #[test]
    fn net_quantities_respect_the_length_extent_sandwich() {
        let lip = pauli_action();
        let examples = [
            tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1e-3, 1e-6).unwrap(),
            tunnel_from_bridge(&corner_bridge_m2(), &lip, &lip, 1.0, 1e-6).unwrap(),
            tunnel_from_bridge(
                &two_point_bridge(),
                &two_point_lip(1.0),
                &two_point_lip(2.0),
                100.0,
                1e-6,
            )
            .unwrap(),
        ];
        for (i, tunnel) in examples.iter().enumerate() {
            let q = tunnel.quantities(3, 29 + i as u64, 1e-6).unwrap();
            assert!(
                q.length.lower <= q.extent.lower + 1e-6,
                "example {i}: length {} vs extent {}",
                q.length.lower,
                q.extent.lower
            );
            assert!(
                q.extent.lower <= 2.0 * q.length.lower + 0.05,
                "example {i}: extent {} vs twice length {}",
                q.extent.lower,
                q.length.lower
            );
        }
    }

    #[test]
    fn composite_of_identity_tunnels_has_small_extent() {
        let lip = pauli_action();
        let t1 = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1e-3, 1e-6).unwrap();
        let t2 = t1.clone();
        let eps = 1e-3;
        let joined = compose_tunnels(&t1, &t2, eps, 1e-6).unwrap();
        assert!(joined.isometry().passed, "{:?}", joined.isometry());
        let q = joined.quantities(2, 3, 1e-6).unwrap();
        let q1 = t1.quantities(2, 3, 1e-6).unwrap();
        assert!(
            q.extent.lower <= q1.extent.lower + q1.extent.lower + eps + 0.05,
            "extent {} exceeds the factor sum",
            q.extent.lower
        );
    }

    #[test]
    fn composite_passes_quasi_leibniz_when_factors_do() {
        let lip = pauli_action();
        let t1 = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1.0, 1e-6).unwrap();
        let joined = compose_tunnels(&t1, &t1, 1e-2, 1e-6).unwrap();
        let f = PermissibleF::new(1.0, 0.0).unwrap();
        let report = check_composite_leibniz(&joined, &f, 10, 5).unwrap();
        assert!(report.pass, "worst margin {}", report.worst_margin);
    }

    #[test]
    fn composite_extent_obeys_the_factor_sum_on_commutative_chains() {
        let t12 = tunnel_from_bridge(
            &two_point_bridge(),
            &two_point_lip(1.0),
            &two_point_lip(2.0),
            100.0,
            1e-6,
        )
        .unwrap();
        let t23 = tunnel_from_bridge(
            &two_point_bridge(),
            &two_point_lip(2.0),
            &two_point_lip(4.0),
            100.0,
            1e-6,
        )
        .unwrap();
        let eps = default_join_tolerance(&t12, &t23, 4, 3, 1e-6).unwrap();
        // Outer endpoint diameters are 1 and 4, so the default is 4/1000.
        assert!((eps - 4e-3).abs() < 1e-6, "default joining tolerance {eps}");
        let joined = compose_tunnels(&t12, &t23, eps, 1e-6).unwrap();
        let ext = joined.quantities(4, 7, 1e-6).unwrap().extent.lower;
        let e12 = t12.quantities(4, 7, 1e-6).unwrap().extent.lower;
        let e23 = t23.quantities(4, 7, 1e-6).unwrap().extent.lower;
        assert!(
            ext <= e12 + e23 + eps + 0.02,
            "composite extent {ext} exceeds factor sum {e12} + {e23} + {eps}"
        );
    }

    #[test]
    fn identity_lift_returns_the_diagonal_pair() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1e-3, 1e-7).unwrap();
        let a = &pauli('x').scaled_re(0.3) + &pauli('z').scaled_re(0.1);
        let level = lip.eval(&a).unwrap();
        let d = tunnel.lift_element(Side::A, &a, level, 1e-7).unwrap();
        let first = first_coordinate(&d, &m2());
        let second = second_coordinate(&d, 1, &m2());
        assert!((&first - &a).frobenius_norm() < 1e-6, "A coordinate must be the element");
        assert!(
            (&second - &a).frobenius_norm() < 1e-2,
            "a tight joining weight pins the B coordinate to the element"
        );
        assert!(
            (d.operator_norm() - a.operator_norm()).abs() < 1e-2,
            "lift norm {} vs element norm {}",
            d.operator_norm(),
            a.operator_norm()
        );
    }

    #[test]
    fn lift_below_the_quotient_level_is_infeasible() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1.0, 1e-7).unwrap();
        let a = pauli('x').scaled_re(0.5);
        let level = 0.5 * lip.eval(&a).unwrap();
        let r = tunnel.lift_element(Side::A, &a, level, 1e-7);
        assert!(r.is_err(), "a level below the quotient cannot admit a lift");
    }

    #[test]
    fn lift_obeys_the_level_and_norm_certificates() {
        let lip = pauli_action();
        let tunnel = tunnel_from_bridge(&corner_bridge_m2(), &lip, &lip, 1.0, 1e-6).unwrap();
        let a = &pauli('x').scaled_re(0.2) + &pauli('y').scaled_re(0.1);
        let level = 0.7f64;
        assert!(level >= lip.eval(&a).unwrap());
        let d = tunnel.lift_element(Side::A, &a, level, 1e-7).unwrap();
        let first = first_coordinate(&d, &m2());
        let second = second_coordinate(&d, 1, &m2());
        assert!((&first - &a).frobenius_norm() < 1e-6);
        assert!(tunnel.lip().eval(&d).unwrap() <= level + 1e-5);
        assert!(lip.eval(&second).unwrap() <= level + 1e-5, "B coordinate obeys the level");
        let extent = tunnel.quantities(3, 17, 1e-6).unwrap().extent.heuristic_upper;
        assert!(
            d.operator_norm() <= a.operator_norm() + level * extent + 0.05,
            "lift norm {} vs allowance {}",
            d.operator_norm(),
            a.operator_norm() + level * extent
        );
    }

    #[test]
    fn trek_length_is_additive_under_concatenation() {
        let b1 = two_point_bridge();
        let b2 = two_point_bridge();
        let la = two_point_lip(1.0);
        let lb = two_point_lip(2.0);
        let lc = two_point_lip(4.0);
        let t1 = Trek::new(vec![b1.clone()], vec![la.clone(), lb.clone()]).unwrap();
        let t2 = Trek::new(vec![b2.clone()], vec![lb.clone(), lc.clone()]).unwrap();
        let whole = Trek::new(vec![b1, b2], vec![la, lb, lc]).unwrap();
        let d1 = t1.length_bounds(2, 2, 7, 1e-6).unwrap();
        let d2 = t2.length_bounds(2, 2, 8, 1e-6).unwrap();
        let mut dw = d1.clone();
        dw.extend(d2.iter().copied());
        let sum1 = trek_length(&t1, &d1).unwrap();
        let sum2 = trek_length(&t2, &d2).unwrap();
        let total = trek_length(&whole, &dw).unwrap();
        assert_eq!(total.lower, sum1.lower + sum2.lower);
        assert_eq!(total.heuristic_upper, sum1.heuristic_upper + sum2.heuristic_upper);
    }

    #[test]
    fn trek_rejects_mismatched_chains() {
        let c3 = AlgebraShape::commutative(3);
        let embed = StarMorphism::from_map(&c2(), &c3, |e| {
            Element::from_blocks(
                c3.clone(),
                vec![e.block(0).clone(), e.block(1).clone(), e.block(1).clone()],
            )
            .unwrap()
        })
        .unwrap();
        let wide = Bridge::new(Element::unit(&c3), embed, identity_morphism(&c3)).unwrap();
        let three_point =
            metric::finite_space_lipschitz(&dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0; 1.0, 1.0, 0.0])
                .unwrap();
        // wide: C² → C³, so a following two-point bridge cannot chain.
        let r = Trek::new(
            vec![wide, two_point_bridge()],
            vec![two_point_lip(1.0), three_point, two_point_lip(1.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn single_identity_bridge_trek_has_minuscule_length() {
        let lip = two_point_lip(1.0);
        let trek = Trek::new(vec![two_point_bridge()], vec![lip.clone(), lip]).unwrap();
        let data = trek.length_bounds(1, 2, 5, 1e-6).unwrap();
        let total = trek_length(&trek, &data).unwrap();
        assert!(total.lower.abs() < 1e-6, "lower {}", total.lower);
        assert!(total.heuristic_upper < 1e-2, "upper {}", total.heuristic_upper);
    }

    #[test]
    fn propinquity_takes_the_best_fully_certified_trek() {
        let la = two_point_lip(1.0);
        let lb = two_point_lip(2.0);
        let t1 = Trek::new(vec![two_point_bridge()], vec![la.clone(), lb.clone()]).unwrap();
        let t2 = Trek::new(
            vec![two_point_bridge(), two_point_bridge()],
            vec![la.clone(), lb.clone(), la.clone()],
        )
        .unwrap();
        let certified = |lo: f64, up: f64| BoundPair {
            lower: lo,
            heuristic_upper: up,
            lower_certified: true,
            upper_certified: true,
        };
        let loose = |lo: f64, up: f64| BoundPair {
            lower: lo,
            heuristic_upper: up,
            lower_certified: true,
            upper_certified: false,
        };
        let d1 = vec![certified(0.4, 0.5)];
        let d2 = vec![certified(0.1, 0.3), loose(0.05, 0.1)];
        let best = propinquity_upper_bound(&[(&t1, &d1[..]), (&t2, &d2[..])]).unwrap();
        assert_eq!(best, Some(0.5), "the mixed chain cannot contribute");
        let none = propinquity_upper_bound(&[(&t2, &d2[..])]).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn journey_chains_validate_and_sum_extents() {
        let lip = pauli_action();
        let t = tunnel_from_bridge(&identity_bridge_m2(), &lip, &lip, 1.0, 1e-6).unwrap();
        let journey = Journey::new(vec![t.clone(), t.clone()]).unwrap();
        let pair = BoundPair {
            lower: 0.1,
            heuristic_upper: 0.2,
            lower_certified: true,
            upper_certified: true,
        };
        let sum = journey.extent_sum(&[pair, pair]).unwrap();
        assert!((sum.lower - 0.2).abs() < 1e-12);
        assert!((sum.heuristic_upper - 0.4).abs() < 1e-12);
        assert!(journey.extent_sum(&[pair]).is_err());

        let c2_tunnel = tunnel_from_bridge(
            &two_point_bridge(),
            &two_point_lip(1.0),
            &two_point_lip(2.0),
            10.0,
            1e-6,
        )
        .unwrap();
        assert!(Journey::new(vec![t, c2_tunnel]).is_err(), "endpoint shapes must chain");
    }

    #[test]
    fn pair_element_round_trips_through_the_coordinates() {
        let d = sum_shape(&m2(), &c2());
        let a = pauli('x');
        let b = two_point_function(1.0, -2.0);
        let e = pair_element(&d, &a, &b);
        assert!((&first_coordinate(&e, &m2()) - &a).frobenius_norm() < 1e-14);
        assert!((&second_coordinate(&e, 1, &c2()) - &b).frobenius_norm() < 1e-14);
    }
}
