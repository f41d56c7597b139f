//! Lip-norms: seminorms on the self-adjoint part whose dual gauge metrizes
//! the state space.
//!
//! A seminorm here is either a max of *atoms* — elementary norm maps such as
//! `a ↦ ‖α^g(a) − a‖/ℓ(g)` (group action), `a ↦ ‖[D, π(a)]‖` (commutator),
//! `a ↦ ‖a − E_n(a)‖/β_n` (filtration), the standard deviation under a
//! faithful state, or finite-difference quotients on a commutative algebra —
//! or the distance to a unital adjoint-closed subspace.
//!
//! Atoms are stored structurally (the unitary, the operator `D`, the
//! conditional expectation, ...) and applied on demand; dense coefficient
//! matrices over the canonical basis are materialized only when a convex
//! program needs them, so large algebras can still be evaluated pointwise.
//!
//! Acceptance as a Lipschitz pair is algebraic, never sampled: the stacked
//! atom maps over the canonical basis must have a one-dimensional kernel
//! (the scalars).  Constructors with huge coordinate spaces (filtrations)
//! certify the kernel structurally instead.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{AlgebraShape, ConditionalExpectation, Element, HermitianBasis, StarMorphism, State};
use crate::convex::{self, AffineMatrixMap, AffineVectorMap, ConstraintMap, NormProgram};
use crate::linalg::{self, C64};
use crate::par;
use crate::{Error, Result};

/// Largest self-adjoint dimension for which the dense kernel gate (and
/// program coefficientization) is attempted.
pub const MAX_DENSE_DIM: usize = 1024;

/// Tolerance for structural validation (unitarity, hermiticity, spans).
const ATOM_TOL: f64 = 1e-9;

/// Margin at which the quasi-Leibniz check still counts as a pass.
pub const LEIBNIZ_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Atoms
// ---------------------------------------------------------------------------

/// Value of one atom at one element.
#[derive(Clone, Debug)]
pub enum AtomValue {
    Matrix(DMatrix<C64>),
    Vector(DVector<C64>),
}

impl AtomValue {
    pub fn norm(&self) -> f64 {
        match self {
            AtomValue::Matrix(m) => linalg::op_norm(m),
            AtomValue::Vector(v) => v.norm(),
        }
    }
}

/// One elementary norm map of a max-of-atoms seminorm.
#[derive(Clone, Debug)]
pub enum Atom {
    /// `a ↦ (u a u* − a) · weight`, as a block-diagonal matrix.
    Conjugation { u: Element, weight: f64 },
    /// `a ↦ (D π(a) − π(a) D)` on the representation space of `rep`.
    Commutator { d: DMatrix<C64>, rep: StarMorphism },
    /// `a ↦ (a − E(a)) · weight`, as a block-diagonal matrix.
    ExpectationGap { expectation: ConditionalExpectation, weight: f64 },
    /// `a ↦ vec((a − μ(a)·1) ρ^{1/2})`: the μ-standard-deviation column.
    Stddev { mu: State, roots: Vec<DMatrix<C64>> },
    /// `f ↦ (f(x) − f(y))/d` on a commutative algebra.
    Edge { x: usize, y: usize, inv_d: f64 },
    /// Arbitrary linear map stored densely over the canonical basis
    /// (small shapes only): `a ↦ Σ_j coords(a)_j · coeffs_j`.
    Dense { basis: HermitianBasis, coeffs: Vec<DMatrix<C64>> },
}

/// Block-diagonal embedding of an element into one matrix; the operator
/// norm is unchanged.
pub fn direct_sum_matrix(e: &Element) -> DMatrix<C64> {
    let n = e.shape().hilbert_dim();
    let mut m = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in e.blocks() {
        let k = b.nrows();
        m.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    m
}

impl Atom {
    /// Apply the atom to an element of its algebra.
    pub fn apply(&self, a: &Element) -> AtomValue {
        match self {
            Atom::Conjugation { u, weight } => {
                let conj = &(u * a) * &u.adjoint();
                let diff = (&conj - a).scaled_re(*weight);
                AtomValue::Matrix(direct_sum_matrix(&diff))
            }
            Atom::Commutator { d, rep } => {
                let pa = rep.apply(a);
                let m = pa.block(0);
                AtomValue::Matrix(d * m - m * d)
            }
            Atom::ExpectationGap { expectation, weight } => {
                let diff = (a - &expectation.apply(a)).scaled_re(*weight);
                AtomValue::Matrix(direct_sum_matrix(&diff))
            }
            Atom::Stddev { mu, roots } => {
                let mean = mu.evaluate(a);
                let total: usize = a.blocks().iter().map(|b| b.nrows() * b.nrows()).sum();
                let mut out = DVector::zeros(total);
                let mut off = 0;
                for (block, root) in a.blocks().iter().zip(roots) {
                    let k = block.nrows();
                    let centered = block - DMatrix::from_diagonal_element(k, k, mean);
                    let prod = centered * root;
                    for col in 0..k {
                        for row in 0..k {
                            out[off + col * k + row] = prod[(row, col)];
                        }
                    }
                    off += k * k;
                }
                AtomValue::Vector(out)
            }
            Atom::Edge { x, y, inv_d } => {
                let fx = a.block(*x)[(0, 0)];
                let fy = a.block(*y)[(0, 0)];
                AtomValue::Vector(DVector::from_element(1, (fx - fy) * C64::new(*inv_d, 0.0)))
            }
            Atom::Dense { basis, coeffs } => {
                let c = basis.complex_coords(a);
                let mut m = DMatrix::zeros(coeffs[0].nrows(), coeffs[0].ncols());
                for (z, mj) in c.iter().zip(coeffs) {
                    if *z != C64::new(0.0, 0.0) {
                        m += mj * *z;
                    }
                }
                AtomValue::Matrix(m)
            }
        }
    }

    /// Materialize the atom as a constraint map over the given basis
    /// indices (decision variable `i` multiplies basis element
    /// `indices[i]`).
    pub fn constraint_map(
        &self,
        basis: &HermitianBasis,
        indices: &[usize],
    ) -> ConstraintMap {
        let images: Vec<AtomValue> = indices
            .iter()
            .map(|&j| self.apply(&basis.element(j)))
            .collect();
        match images.first() {
            Some(AtomValue::Matrix(m0)) => {
                let (r, c) = m0.shape();
                let coeffs = images
                    .into_iter()
                    .map(|v| match v {
                        AtomValue::Matrix(m) => m,
                        AtomValue::Vector(_) => unreachable!("atom kind is fixed"),
                    })
                    .collect();
                ConstraintMap::Spectral(AffineMatrixMap::homogeneous(r, c, coeffs))
            }
            Some(AtomValue::Vector(v0)) => {
                let len = v0.len();
                let coeffs = images
                    .into_iter()
                    .map(|v| match v {
                        AtomValue::Vector(v) => v,
                        AtomValue::Matrix(_) => unreachable!("atom kind is fixed"),
                    })
                    .collect();
                ConstraintMap::Euclidean(AffineVectorMap::new(DVector::zeros(len), coeffs))
            }
            None => ConstraintMap::Euclidean(AffineVectorMap::new(DVector::zeros(1), vec![])),
        }
    }
}

// ---------------------------------------------------------------------------
// Seminorm
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Kind {
    MaxOfAtoms(Vec<Atom>),
    DistToSubspace {
        /// Orthonormal Hermitian basis of the span.
        herm_basis: Vec<Element>,
    },
}

/// A seminorm on the self-adjoint part of an algebra.
#[derive(Clone, Debug)]
pub struct Seminorm {
    shape: AlgebraShape,
    kind: Kind,
    /// Kernel dimension on the self-adjoint part (1 = Lipschitz pair).
    kernel_dim: usize,
}

impl Seminorm {
    /// Max-of-atoms seminorm, accepted only when the joint atom kernel is
    /// exactly the scalars (a Lipschitz pair).
    pub fn max_of_atoms(shape: &AlgebraShape, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: "no atoms".into(),
            });
        }
        let kernel_dim = dense_kernel_dim(shape, &atoms)?;
        if kernel_dim != 1 {
            return Err(Error::NotLipschitz { kernel_dim });
        }
        Ok(Seminorm { shape: shape.clone(), kind: Kind::MaxOfAtoms(atoms), kernel_dim })
    }

    /// Max-of-atoms seminorm whose kernel is known to be the scalars by
    /// construction (used by constructors with a structural argument, e.g.
    /// filtrations whose first stage is the scalars).
    pub(crate) fn from_atoms_certified(shape: &AlgebraShape, atoms: Vec<Atom>) -> Self {
        Seminorm { shape: shape.clone(), kind: Kind::MaxOfAtoms(atoms), kernel_dim: 1 }
    }

    /// Distance to the span of `span` in operator norm.  The span must
    /// contain the unit and be closed under adjoints.
    pub fn dist_to_subspace(shape: &AlgebraShape, span: Vec<Element>) -> Result<Self> {
        if span.is_empty() {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: "empty span".into(),
            });
        }
        for e in &span {
            if e.shape() != shape {
                return Err(Error::ShapeMismatch {
                    expected: shape.block_dims.clone(),
                    got: e.shape().block_dims.clone(),
                });
            }
        }
        // Hermitian generators of the span (adjoint closure makes the
        // Hermitian parts generate the same complex span).
        let mut herm: Vec<Element> = Vec::new();
        for e in &span {
            let re = (&(e.clone()) + &e.adjoint()).scaled_re(0.5);
            let im = (&(e.clone()) - &e.adjoint()).scaled(C64::new(0.0, -0.5));
            herm.push(re);
            herm.push(im);
        }
        let herm_basis = gram_schmidt(&herm);
        // Adjoint closure: every original generator must be reproducible
        // from the Hermitian basis.
        for (i, e) in span.iter().enumerate() {
            let mut residual = e.clone();
            for h in &herm_basis {
                let c = inner(h, &residual);
                residual = &residual - &h.scaled(c);
            }
            if residual.frobenius_norm() > ATOM_TOL * (1.0 + e.frobenius_norm()) {
                return Err(Error::Invalid {
                    what: "seminorm",
                    reason: format!("span is not adjoint-closed (generator {i})"),
                });
            }
        }
        // Unit membership.
        let unit = Element::unit(shape);
        let mut residual = unit.clone();
        for h in &herm_basis {
            let c = inner(h, &residual);
            residual = &residual - &h.scaled(c);
        }
        if residual.frobenius_norm() > ATOM_TOL {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: "span does not contain the unit".into(),
            });
        }
        // Kernel on sa = span ∩ sa, spanned by the Hermitian basis.
        let kernel_dim = herm_basis.len();
        Ok(Seminorm { shape: shape.clone(), kind: Kind::DistToSubspace { herm_basis }, kernel_dim })
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    /// Kernel dimension on the self-adjoint part.
    pub fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    /// Whether the seminorm vanishes exactly on the scalars.
    pub fn is_lip_norm(&self) -> bool {
        self.kernel_dim == 1
    }

    /// The atoms of a max-of-atoms seminorm (`None` for subspace
    /// distances).
    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            Kind::MaxOfAtoms(atoms) => Some(atoms),
            Kind::DistToSubspace { .. } => None,
        }
    }

    /// Certified radius of the gauged unit ball: every self-adjoint `a`
    /// with `L(a) ≤ 1` and zero unit coordinate satisfies
    /// `‖a‖_F = ‖coords‖₂ ≤ radius`.
    ///
    /// The bound comes from the smallest singular value `σ` of the
    /// seminorm's linear part restricted to the non-unit coordinates:
    /// `σ·‖y‖₂ ≤ √(Σ dims)·L(a)`.  Fails when the restriction is
    /// (numerically) singular — i.e. the gauged ball is unbounded — or the
    /// coordinate space is too large for dense work.
    pub fn gauged_ball_radius(&self) -> Result<f64> {
        let sa = self.shape.sa_dim();
        if sa > MAX_DENSE_DIM {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: format!(
                    "coordinate space of dimension {sa} is too large for dense programs"
                ),
            });
        }
        let basis = HermitianBasis::new(&self.shape);
        let indices: Vec<usize> =
            (0..basis.len()).filter(|&j| j != basis.unit_index()).collect();
        if indices.is_empty() {
            return Ok(0.0);
        }
        let (k, scale) = match &self.kind {
            Kind::MaxOfAtoms(atoms) => stacked_atom_matrix(&self.shape, atoms, &indices),
            Kind::DistToSubspace { herm_basis } => {
                // Coordinates of the projection onto the Frobenius
                // complement of the span; the operator-norm distance is at
                // least the Frobenius distance over √N.
                let spans: Vec<DVector<f64>> =
                    herm_basis.iter().map(|h| basis.coords(h)).collect();
                let mut m = DMatrix::zeros(sa, indices.len());
                for (c, &j) in indices.iter().enumerate() {
                    let mut col = DVector::zeros(sa);
                    col[j] = 1.0;
                    for v in &spans {
                        col.axpy(-v[j], v, 1.0);
                    }
                    m.set_column(c, &col.map(|t| C64::new(t, 0.0)));
                }
                (m, self.shape.hilbert_dim() as f64)
            }
        };
        let s = linalg::singular_values(&k);
        let top = s.first().copied().unwrap_or(0.0);
        let sigma = s.last().copied().unwrap_or(0.0);
        if s.len() < indices.len() || sigma <= linalg::RANK_TOL * 1.0f64.max(top) {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: "gauged unit ball has no finite certified radius".into(),
            });
        }
        Ok(scale.sqrt() / sigma)
    }

    /// Evaluate the seminorm on a self-adjoint element.
    pub fn eval(&self, a: &Element) -> Result<f64> {
        if a.shape() != &self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.block_dims.clone(),
                got: a.shape().block_dims.clone(),
            });
        }
        if !a.is_self_adjoint(1e-9) {
            return Err(Error::Invalid {
                what: "seminorm argument",
                reason: "element is not self-adjoint".into(),
            });
        }
        match &self.kind {
            Kind::MaxOfAtoms(atoms) => Ok(atoms
                .iter()
                .map(|at| at.apply(a).norm())
                .fold(0.0, f64::max)),
            Kind::DistToSubspace { herm_basis } => {
                // dist(a, span) as an epigraph program over real span
                // coordinates; the Frobenius projection both seeds the box
                // radius and caps the optimum.
                let target = direct_sum_matrix(a);
                let dim = herm_basis.len();
                let coeffs: Vec<DMatrix<C64>> = herm_basis
                    .iter()
                    .map(|h| direct_sum_matrix(h) * C64::new(-1.0, 0.0))
                    .collect();
                let radius =
                    2.0 * a.operator_norm() * (self.shape.hilbert_dim() as f64).sqrt() + 1.0;
                let program = NormProgram {
                    dim,
                    objective: DVector::zeros(dim),
                    constraints: vec![convex::NormConstraint {
                        map: ConstraintMap::Spectral(AffineMatrixMap::new(target, coeffs)),
                        bound: convex::BoundKind::Epigraph,
                    }],
                    equalities: vec![],
                    box_radius: Some(radius),
                };
                Ok(convex::minimize_max_norm(&program, convex::DEFAULT_TOL)?.value)
            }
        }
    }

    /// Constraint maps over the chosen basis coordinates, for embedding the
    /// unit ball `L ≤ bound` into a convex program.
    ///
    /// Returns `(maps, extra)` where `extra` is the number of auxiliary
    /// decision variables the maps expect *after* the `indices` block
    /// (nonzero only for subspace distances, whose span coefficients are
    /// free variables).
    pub fn program_maps(
        &self,
        basis: &HermitianBasis,
        indices: &[usize],
    ) -> Result<(Vec<ConstraintMap>, usize)> {
        if self.shape.sa_dim() > MAX_DENSE_DIM {
            return Err(Error::Invalid {
                what: "seminorm",
                reason: format!(
                    "coordinate space of dimension {} is too large for dense programs",
                    self.shape.sa_dim()
                ),
            });
        }
        match &self.kind {
            Kind::MaxOfAtoms(atoms) => Ok((
                atoms.iter().map(|a| a.constraint_map(basis, indices)).collect(),
                0,
            )),
            Kind::DistToSubspace { herm_basis } => {
                let n = self.shape.hilbert_dim();
                let mut coeffs: Vec<DMatrix<C64>> = indices
                    .iter()
                    .map(|&j| direct_sum_matrix(&basis.element(j)))
                    .collect();
                for h in herm_basis {
                    coeffs.push(direct_sum_matrix(h) * C64::new(-1.0, 0.0));
                }
                let map = ConstraintMap::Spectral(AffineMatrixMap::homogeneous(n, n, coeffs));
                Ok((vec![map], herm_basis.len()))
            }
        }
    }
}

fn inner(a: &Element, b: &Element) -> C64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| linalg::frobenius_inner(x, y))
        .sum()
}

fn gram_schmidt(elements: &[Element]) -> Vec<Element> {
    let mut basis: Vec<Element> = Vec::new();
    for e in elements {
        let mut v = e.clone();
        for b in &basis {
            let c = inner(b, &v);
            v = &v - &b.scaled(c);
        }
        let norm = v.frobenius_norm();
        if norm > 1e-10 {
            basis.push(v.scaled_re(1.0 / norm));
        }
    }
    basis
}

/// Kernel dimension of the stacked atom maps on self-adjoint coordinates.
/// Realified stacked matrix whose column at position `p` is the
/// concatenated atom images of basis element `indices[p]` (real parts above
/// imaginary parts), plus the sum over atoms of the minimal dimension of
/// their value (the constant relating the stacked 2-norm to the max of the
/// atom norms: `‖K y‖₂ ≤ √(Σ dims) · max_i ‖atom_i(a)‖`).
fn stacked_atom_matrix(
    shape: &AlgebraShape,
    atoms: &[Atom],
    indices: &[usize],
) -> (DMatrix<C64>, f64) {
    let basis = HermitianBasis::new(shape);
    let mut dims_total = 0.0f64;
    let mut columns: Vec<Vec<C64>> = Vec::with_capacity(indices.len());
    for (pos, &j) in indices.iter().enumerate() {
        let bj = basis.element(j);
        let mut col = Vec::new();
        for atom in atoms {
            match &atom.apply(&bj) {
                AtomValue::Matrix(m) => {
                    if pos == 0 {
                        dims_total += m.nrows().min(m.ncols()) as f64;
                    }
                    col.extend(m.iter().copied());
                }
                AtomValue::Vector(v) => {
                    if pos == 0 {
                        dims_total += 1.0;
                    }
                    col.extend(v.iter().copied());
                }
            }
        }
        columns.push(col);
    }
    let rows = columns.first().map_or(0, Vec::len);
    let mut k = DMatrix::zeros(2 * rows, indices.len());
    for (c, col) in columns.iter().enumerate() {
        for (r, z) in col.iter().enumerate() {
            k[(r, c)] = C64::new(z.re, 0.0);
            k[(r + rows, c)] = C64::new(z.im, 0.0);
        }
    }
    (k, dims_total)
}

fn dense_kernel_dim(shape: &AlgebraShape, atoms: &[Atom]) -> Result<usize> {
    let sa = shape.sa_dim();
    if sa > MAX_DENSE_DIM {
        return Err(Error::Invalid {
            what: "seminorm",
            reason: format!(
                "coordinate space of dimension {sa} is too large for the dense kernel check; \
                 use a constructor with a structural kernel certificate"
            ),
        });
    }
    let indices: Vec<usize> = (0..sa).collect();
    let (k, _) = stacked_atom_matrix(shape, atoms, &indices);
    let s = linalg::singular_values(&k);
    let cutoff = linalg::RANK_TOL * 1.0f64.max(s.first().copied().unwrap_or(0.0));
    Ok(sa - s.iter().filter(|&&x| x > cutoff).count())
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Seminorm of an ergodic action of a finite group by inner automorphisms:
/// `L(a) = max_g ‖u_g a u_g* − a‖ / ℓ(g)` over the listed non-identity
/// elements.
///
/// Rejected when a listed unitary is not unitary, is central (acts
/// trivially), a length is not positive, or the joint fixed-point space
/// exceeds the scalars (the action is not ergodic).
pub fn from_group_action(shape: &AlgebraShape, action: Vec<(Element, f64)>) -> Result<Seminorm> {
    if action.is_empty() {
        return Err(Error::Invalid {
            what: "group action",
            reason: "no group elements".into(),
        });
    }
    let mut atoms = Vec::with_capacity(action.len());
    for (g, (u, len)) in action.into_iter().enumerate() {
        if u.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.block_dims.clone(),
                got: u.shape().block_dims.clone(),
            });
        }
        if !(len > 0.0) {
            return Err(Error::Invalid {
                what: "group action",
                reason: format!("length of element {g} is not positive"),
            });
        }
        let uu = &u * &u.adjoint();
        if (&uu - &Element::unit(shape)).operator_norm() > ATOM_TOL {
            return Err(Error::Invalid {
                what: "group action",
                reason: format!("element {g} is not unitary"),
            });
        }
        // A central unitary acts trivially — the caller included the
        // identity (or an equivalent phase).
        let central = u.blocks().iter().all(|b| {
            let n = b.nrows() as f64;
            let mean = linalg::trace(b) / C64::new(n, 0.0);
            (b - DMatrix::from_diagonal_element(b.nrows(), b.nrows(), mean)).norm() <= ATOM_TOL
        });
        if central {
            return Err(Error::Invalid {
                what: "group action",
                reason: format!("element {g} is central (identity action excluded)"),
            });
        }
        atoms.push(Atom::Conjugation { u, weight: 1.0 / len });
    }
    Seminorm::max_of_atoms(shape, atoms)
}

/// Commutator seminorm `L(a) = ‖[D, π(a)]‖` for a Hermitian `D` on the
/// representation space of `rep`.
pub fn from_commutator(d: DMatrix<C64>, rep: StarMorphism) -> Result<Seminorm> {
    let k = rep.codomain().hilbert_dim();
    if rep.codomain().num_blocks() != 1 {
        return Err(Error::Invalid {
            what: "commutator seminorm",
            reason: "representation must land in a full matrix algebra".into(),
        });
    }
    if d.shape() != (k, k) || !linalg::is_hermitian(&d, ATOM_TOL) {
        return Err(Error::Invalid {
            what: "commutator seminorm",
            reason: "D must be Hermitian on the representation space".into(),
        });
    }
    let shape = rep.domain().clone();
    Seminorm::max_of_atoms(&shape, vec![Atom::Commutator { d, rep }])
}

/// Filtration seminorm `L(a) = max_n ‖a − E_n(a)‖ / β_n` over a nested
/// chain of unital *-subalgebras whose first stage is the scalars.
///
/// `stages[n]` spans the `n`-th subalgebra (proper subalgebras only); the
/// conditional expectations are trace-orthogonal, or orthogonal for the
/// faithful tracial weight `block_weights` when provided.
pub fn from_filtration(
    shape: &AlgebraShape,
    stages: Vec<Vec<Element>>,
    beta: Vec<f64>,
    block_weights: Option<Vec<f64>>,
) -> Result<Seminorm> {
    if stages.is_empty() || stages.len() != beta.len() {
        return Err(Error::Invalid {
            what: "filtration",
            reason: "need one β per stage".into(),
        });
    }
    if beta.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Invalid {
            what: "filtration",
            reason: "β values must be positive".into(),
        });
    }
    let weights = block_weights.unwrap_or_else(|| vec![1.0; shape.num_blocks()]);
    let mut expectations = Vec::with_capacity(stages.len());
    for (n, span) in stages.iter().enumerate() {
        let e = ConditionalExpectation::with_weights(shape, span.clone(), weights.clone())
            .map_err(|err| Error::Invalid {
                what: "filtration",
                reason: format!("stage {n} is not a unital *-subalgebra: {err}"),
            })?;
        expectations.push(e);
    }
    // Stage 0 must be the scalars: it projects every basis direction onto
    // the unit's span.
    let ortho = gram_schmidt(&stages[0]);
    if ortho.len() != 1 {
        return Err(Error::Invalid {
            what: "filtration",
            reason: "first stage must be the scalar multiples of the unit".into(),
        });
    }
    // Nesting: every generator of stage n must lie in stage n+1.
    for n in 0..stages.len() - 1 {
        for (i, e) in stages[n].iter().enumerate() {
            if expectations[n + 1].distance_to_span(e)
                > ATOM_TOL * (1.0 + e.frobenius_norm())
            {
                return Err(Error::Invalid {
                    what: "filtration",
                    reason: format!("stage {n} generator {i} is not inside stage {}", n + 1),
                });
            }
        }
    }
    // Proper stages: a stage equal to the whole algebra contributes a zero
    // atom and is rejected.
    for (n, e) in expectations.iter().enumerate() {
        let full_rank = shape.sa_dim();
        let stage_rank = stages[n].len().min(full_rank);
        if stage_rank == full_rank {
            let basis = HermitianBasis::new(shape);
            let fixed = (0..basis.len().min(8)).all(|j| {
                let bj = basis.element(j);
                (&e.apply(&bj) - &bj).frobenius_norm() < ATOM_TOL
            });
            if fixed {
                return Err(Error::Invalid {
                    what: "filtration",
                    reason: format!("stage {n} is the whole algebra (zero atom)"),
                });
            }
        }
    }
    let atoms: Vec<Atom> = expectations
        .into_iter()
        .zip(&beta)
        .map(|(expectation, &b)| Atom::ExpectationGap { expectation, weight: 1.0 / b })
        .collect();
    // Kernel certificate: a ∈ ∩_n fix(E_n) = fix(E_0) = scalars, because the
    // stages are nested and stage 0 is the scalars.
    Ok(Seminorm::from_atoms_certified(shape, atoms))
}

/// Standard-deviation seminorm `L(a) = √(μ(a²) − μ(a)²)` of a faithful
/// state `μ`.
pub fn from_stddev(mu: &State) -> Result<Seminorm> {
    let shape = mu.shape().clone();
    let mut roots = Vec::with_capacity(shape.num_blocks());
    for rho in mu.densities() {
        let (vals, _) = linalg::hermitian_eigen(rho);
        if vals.last().copied().unwrap_or(0.0) <= 1e-10 {
            return Err(Error::Invalid {
                what: "standard-deviation seminorm",
                reason: "state is not faithful (a density block is singular)".into(),
            });
        }
        roots.push(linalg::sqrt_psd(rho));
    }
    Seminorm::max_of_atoms(&shape, vec![Atom::Stddev { mu: mu.clone(), roots }])
}

// ---------------------------------------------------------------------------
// Quasi-Leibniz check
// ---------------------------------------------------------------------------

/// The two-parameter family `F_{C,D}(x, y, l_x, l_y) = C(x·l_y + y·l_x) +
/// D·l_x·l_y` of permissible product bounds; `C = 1, D = 0` is the Leibniz
/// inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PermissibleF {
    pub c: f64,
    pub d: f64,
}

impl PermissibleF {
    pub fn new(c: f64, d: f64) -> Result<Self> {
        if c < 1.0 || d < 0.0 {
            return Err(Error::Invalid {
                what: "quasi-Leibniz bound",
                reason: format!("need C ≥ 1 and D ≥ 0, got C = {c}, D = {d}"),
            });
        }
        Ok(PermissibleF { c, d })
    }

    /// The Leibniz bound `x·l_y + y·l_x`.
    pub fn leibniz() -> Self {
        PermissibleF { c: 1.0, d: 0.0 }
    }

    pub fn eval(&self, x: f64, y: f64, lx: f64, ly: f64) -> f64 {
        self.c * (x * ly + y * lx) + self.d * lx * ly
    }
}

/// Outcome of sampling the quasi-Leibniz inequality on random self-adjoint
/// pairs (Jordan and Lie products both checked).
#[derive(Clone, Debug)]
pub struct LeibnizReport {
    /// Worst value of `L(a∘b) − F(‖a‖, ‖b‖, L(a), L(b))` (and the Lie
    /// analogue) over all samples; negative when the bound holds strictly.
    pub worst_margin: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample `samples` random self-adjoint pairs and report the worst margin of
/// the quasi-Leibniz inequality for both the Jordan and Lie products.
pub fn check_quasi_leibniz(
    l: &Seminorm,
    f: &PermissibleF,
    samples: usize,
    seed: u64,
) -> Result<LeibnizReport> {
    if samples == 0 {
        return Err(Error::Invalid {
            what: "quasi-Leibniz check",
            reason: "need at least one sample".into(),
        });
    }
    let shape = l.shape().clone();
    let margins = par::map_range(samples, |i| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let a = Element::random_sa(&shape, &mut rng);
        let b = Element::random_sa(&shape, &mut rng);
        let la = l.eval(&a)?;
        let lb = l.eval(&b)?;
        let na = a.operator_norm();
        let nb = b.operator_norm();
        let bound = f.eval(na, nb, la, lb);
        let jordan = l.eval(&a.jordan(&b))?;
        let lie = l.eval(&a.lie(&b))?;
        Ok((jordan - bound).max(lie - bound))
    });
    let mut worst = f64::NEG_INFINITY;
    for m in margins {
        worst = worst.max(m?);
    }
    Ok(LeibnizReport { worst_margin: worst, samples, pass: worst <= LEIBNIZ_TOL })
}

// ---------------------------------------------------------------------------
