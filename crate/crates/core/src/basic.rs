//! GNS space of the normalized trace, the Jones projection and the basic
//! construction `<L, e_M>`.
//!
//! With the trace state the GNS space of `M_n` is `C^{n^2}` in the
//! coordinates of [`crate::algebra::to_coords`], `xi` is the coordinate
//! vector of the identity, and `pi(x)` is left multiplication `x (x) I_n`.

use crate::algebra::{from_coords, generate_algebra, to_coords, Subalgebra};
use crate::error::{Error, Result};
use crate::expectation::ConditionalExpectation;
use crate::linalg::{identity, opnorm, Matrix, ToleranceProfile, Vector};

#[derive(Clone, Debug)]
pub struct GnsSpace {
    base: Subalgebra,
    cyclic_vector: Vector,
}

impl GnsSpace {
    pub fn base(&self) -> &Subalgebra {
        &self.base
    }

    /// Dimension of the Hilbert space, `n^2`.
    pub fn dim(&self) -> usize {
        self.cyclic_vector.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.ambient_dim()
    }

    pub fn cyclic_vector(&self) -> &Vector {
        &self.cyclic_vector
    }

    /// `<a, b> = phi(b* a)`, the standard form in these coordinates.
    pub fn inner(&self, a: &Vector, b: &Vector) -> crate::linalg::C64 {
        b.dotc(a)
    }

    /// The vector `x xi`.
    pub fn vector_of(&self, x: &Matrix) -> Vector {
        to_coords(x)
    }

    /// Reads a vector back as the ambient element `x` with `x xi = v`.
    pub fn element_of(&self, v: &Vector) -> Matrix {
        from_coords(v, self.ambient_dim())
    }

    /// Left-multiplication representation.
    pub fn pi(&self, x: &Matrix) -> Matrix {
        x.kronecker(&identity(self.ambient_dim()))
    }

    /// Image of an algebra under `pi`. The representation preserves the
    /// normalized traces, so an orthonormal basis stays orthonormal.
    pub fn represent(&self, a: &Subalgebra, tol: &ToleranceProfile) -> Result<Subalgebra> {
        let images: Vec<Matrix> = a.basis().iter().map(|b| self.pi(b)).collect();
        Subalgebra::from_spanning_set(self.dim(), &images, tol)
    }
}

pub fn gns_from_trace(l: &Subalgebra) -> GnsSpace {
    let n = l.ambient_dim();
    GnsSpace {
        base: l.clone(),
        cyclic_vector: to_coords(&identity(n)),
    }
}

/// Projection onto `[M xi]`, assembled from `e_M (x xi) = E_M(x) xi` on
/// the basis of `E_M`'s domain.
pub fn jones_projection(
    gns: &GnsSpace,
    m: &Subalgebra,
    e_m: &ConditionalExpectation,
    tol: &ToleranceProfile,
) -> Result<Matrix> {
    let d = gns.dim();
    let mut e = Matrix::zeros(d, d);
    for b in e_m.domain().basis() {
        let image = gns.vector_of(&e_m.apply_unchecked(b));
        e += image * gns.vector_of(b).adjoint();
    }
    let res = opnorm(&(&e * &e - &e)).max(opnorm(&(&e - e.adjoint())));
    if res > tol.eq_eps {
        return Err(Error::InvalidInput(format!(
            "expectation does not induce a projection (residual {res:e}); it must preserve the trace"
        )));
    }
    let rank_gap = (e.trace().re - m.dim() as f64).abs();
    if rank_gap > tol.eq_eps * m.dim() as f64 {
        return Err(Error::InvalidInput(format!(
            "Jones projection has trace {} but the range has dimension {}",
            e.trace().re,
            m.dim()
        )));
    }
    Ok(e)
}

#[derive(Clone, Debug)]
pub struct BasicConstruction {
    gns: GnsSpace,
    range: Subalgebra,
    e_m: Matrix,
    generated: Subalgebra,
    compression_residual: f64,
}

impl BasicConstruction {
    pub fn gns(&self) -> &GnsSpace {
        &self.gns
    }

    /// The algebra `M` that `e_M` projects onto.
    pub fn range(&self) -> &Subalgebra {
        &self.range
    }

    pub fn jones(&self) -> &Matrix {
        &self.e_m
    }

    /// `<L, e_M>` as a subalgebra of operators on the GNS space.
    pub fn generated(&self) -> &Subalgebra {
        &self.generated
    }

    pub fn pi(&self, x: &Matrix) -> Matrix {
        self.gns.pi(x)
    }

    /// Largest `||e pi(x) e - pi(E_M(x)) e||` over the basis of `L`,
    /// measured when the construction was built.
    pub fn compression_residual(&self) -> f64 {
        self.compression_residual
    }
}

/// `||e pi(x) e - pi(E_M(x)) e||` for one element.
pub fn compression_identity_residual(bc: &BasicConstruction, e_m: &ConditionalExpectation, x: &Matrix) -> f64 {
    let e = bc.jones();
    let lhs = e * bc.pi(x) * e;
    let rhs = bc.pi(&e_m.apply_unchecked(x)) * e;
    opnorm(&(lhs - rhs))
}

pub fn build_basic_construction(
    l: &Subalgebra,
    m: &Subalgebra,
    e_m: &ConditionalExpectation,
    tol: &ToleranceProfile,
) -> Result<BasicConstruction> {
    l.require_includes(m, tol)?;
    let gns = gns_from_trace(l);
    let e = jones_projection(&gns, m, e_m, tol)?;
    let mut generators: Vec<Matrix> = l.basis().iter().map(|b| gns.pi(b)).collect();
    generators.push(e.clone());
    let generated = generate_algebra(gns.dim(), &generators, tol)?;
    let mut bc = BasicConstruction {
        gns,
        range: m.clone(),
        e_m: e,
        generated,
        compression_residual: 0.0,
    };
    bc.compression_residual = l
        .basis()
        .iter()
        .map(|x| compression_identity_residual(&bc, e_m, x))
        .fold(0.0, f64::max);
    if bc.compression_residual > tol.eq_eps {
        return Err(Error::InvalidInput(format!(
            "compression identity fails (residual {:e})",
            bc.compression_residual
        )));
    }
    Ok(bc)
}

/// The isomorphism `e_M <L, e_M> e_M -> M`: the unique `m` with
/// `pi(m) e_M = z`, read off from the vector `z xi`.
pub fn corner_iso(bc: &BasicConstruction, z: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
    crate::linalg::check_finite(z)?;
    crate::linalg::check_shape(z, bc.gns.dim())?;
    let e = bc.jones();
    let scale = 1.0 + z.norm();
    let corner = (e * z * e - z).norm();
    let outside = bc.generated.residual(z);
    if corner.max(outside) > tol.eq_eps * scale {
        return Err(Error::CornerDecoding {
            residual: corner.max(outside),
        });
    }
    let m = bc.gns.element_of(&(z * bc.gns.cyclic_vector()));
    let (in_range, r_range) = bc.range.contains(&m, tol)?;
    let r_lift = (bc.pi(&m) * e - z).norm();
    if !in_range || r_lift > tol.eq_eps * scale {
        return Err(Error::CornerDecoding {
            residual: r_range.max(r_lift),
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::trace_inner;
    use crate::expectation::trace_expectation;
    use crate::linalg::{C64, ONE};
    use crate::rng;

    fn tol() -> ToleranceProfile {
        ToleranceProfile::default()
    }

    fn unit(n: usize, i: usize, j: usize) -> Matrix {
        let mut e = Matrix::zeros(n, n);
        e[(i, j)] = ONE;
        e
    }

    fn setup(m: Subalgebra) -> (Subalgebra, ConditionalExpectation, BasicConstruction) {
        let t = tol();
        let l = Subalgebra::full(m.ambient_dim());
        let e = trace_expectation(&l, &m, &t).unwrap();
        let bc = build_basic_construction(&l, &m, &e, &t).unwrap();
        (l, e, bc)
    }

    #[test]
    fn gns_examples() {
        let g = gns_from_trace(&Subalgebra::full(2));
        assert_eq!(g.dim(), 4);
        let xi = g.cyclic_vector();
        assert!((g.inner(xi, xi) - ONE).norm() < 1e-15);
        assert_eq!(gns_from_trace(&Subalgebra::full(1)).dim(), 1);
        let e11 = g.vector_of(&unit(2, 0, 0));
        assert!((g.inner(&e11, &e11) - C64::new(0.5, 0.0)).norm() < 1e-15);
        let a = Matrix::from_fn(2, 2, |i, j| C64::new(i as f64 + 1.0, j as f64));
        let b = unit(2, 1, 0) + unit(2, 0, 1);
        let (va, vb) = (g.vector_of(&a), g.vector_of(&b));
        assert!((g.inner(&va, &vb) - trace_inner(&a, &b)).norm() < 1e-14);
    }

    #[test]
    fn pi_is_a_unital_star_homomorphism() {
        let g = gns_from_trace(&Subalgebra::full(3));
        let l = Subalgebra::full(3);
        assert!((g.pi(&identity(3)) - identity(9)).norm() < 1e-15);
        for x in l.basis() {
            assert!((g.pi(&x.adjoint()) - g.pi(x).adjoint()).norm() < 1e-12);
            for y in l.basis() {
                assert!((g.pi(&(x * y)) - g.pi(x) * g.pi(y)).norm() < 1e-12);
            }
        }
        // pi(x) xi = x xi
        let x = Matrix::from_fn(3, 3, |i, j| C64::new(i as f64, 1.0 - j as f64));
        assert!((g.pi(&x) * g.cyclic_vector() - g.vector_of(&x)).norm() < 1e-14);
    }

    #[test]
    fn xi_is_cyclic_for_full_algebra() {
        let g = gns_from_trace(&Subalgebra::full(3));
        let cols: Vec<Vector> = Subalgebra::full(3)
            .basis()
            .iter()
            .map(|b| g.pi(b) * g.cyclic_vector())
            .collect();
        let k = Matrix::from_columns(&cols);
        let rank = crate::linalg::singular_values(&k).iter().filter(|&&s| s > 1e-6).count();
        assert_eq!(rank, 9);
    }

    #[test]
    fn jones_projection_examples() {
        let (_, _, bc) = setup(Subalgebra::full(2));
        assert!((bc.jones() - identity(4)).norm() < 1e-14);

        let (_, _, bc) = setup(Subalgebra::scalars(2));
        let xi = bc.gns().cyclic_vector().clone();
        assert!((bc.jones() - &xi * xi.adjoint()).norm() < 1e-14);
        assert_eq!(bc.generated().dim(), 16);

        let (_, _, bc) = setup(Subalgebra::diagonal(2));
        let e = bc.jones();
        assert!((e.trace().re - 2.0).abs() < 1e-14);
        // orthonormalized {e11 xi, e22 xi}
        let g = bc.gns();
        let v1 = g.vector_of(&unit(2, 0, 0)).normalize();
        let v2 = g.vector_of(&unit(2, 1, 1)).normalize();
        assert!((e - (&v1 * v1.adjoint() + &v2 * v2.adjoint())).norm() < 1e-14);
        assert_eq!(bc.generated().dim(), 8);
    }

    #[test]
    fn equal_algebras_give_trivial_construction() {
        let (l, _, bc) = setup(Subalgebra::full(2));
        assert_eq!(bc.generated().dim(), l.dim());
        let pl = bc.gns().represent(&l, &tol()).unwrap();
        assert!(pl.span_distance(bc.generated()) < 1e-12);
    }

    #[test]
    fn compression_identity_and_corner_round_trip() {
        let t = tol();
        let mut r = rng::seeded(21);
        let full = Subalgebra::full(3);
        let w = full.haar_unitary(&mut r, &t);
        let m = Subalgebra::multimatrix(3, &[(1, 1), (2, 1)]).unwrap().conjugate(&w);
        let (l, e_m, bc) = setup(m.clone());
        assert!(bc.compression_residual() < 1e-12);
        let e = bc.jones().clone();
        assert!((&e * bc.gns().cyclic_vector() - bc.gns().cyclic_vector()).norm() < 1e-12);
        for _ in 0..50 {
            let x = l.random_element(&mut r);
            assert!(compression_identity_residual(&bc, &e_m, &x) < 1e-10);
            let z = &e * bc.pi(&x) * &e;
            let y = corner_iso(&bc, &z, &t).unwrap();
            assert!((y - e_m.apply_unchecked(&x)).norm() < 1e-10);
        }
        for b in m.basis() {
            let z = &e * bc.pi(b) * &e;
            assert!((corner_iso(&bc, &z, &t).unwrap() - b).norm() < 1e-10);
        }
        let one = corner_iso(&bc, &e, &t).unwrap();
        assert!((one - identity(3)).norm() < 1e-12);
    }

    #[test]
    fn corner_iso_rejects_elements_outside_the_corner() {
        let t = tol();
        let (_, _, bc) = setup(Subalgebra::diagonal(2));
        let z = bc.pi(&unit(2, 0, 1));
        assert!(matches!(corner_iso(&bc, &z, &t), Err(Error::CornerDecoding { .. })));
    }
}
