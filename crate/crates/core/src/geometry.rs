//! Vectors, decision sets, weighted norms and weighted projections.
//!
//! Every learner in the crate plays points from a [`DecisionSet`] and, after a
//! gradient step, maps the candidate back with [`project_weighted`] under the
//! diagonal preconditioner it maintains.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for every membership check in the crate.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

const BISECTION_MAX_ITERS: usize = 200;
const BISECTION_RESIDUAL: f64 = 1e-12;

/// Dense real vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn zeros(dim: usize) -> Self {
        RealVector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        RealVector(vec![value; dim])
    }

    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn try_new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let v = RealVector(entries);
        if !v.is_finite() {
            return Err(Error::NonFinite("vector entries".into()));
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &RealVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sub(&self, other: &RealVector) -> RealVector {
        debug_assert_eq!(self.dim(), other.dim());
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &RealVector) -> RealVector {
        debug_assert_eq!(self.dim(), other.dim());
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, factor: f64) -> RealVector {
        RealVector(self.0.iter().map(|x| x * factor).collect())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &RealVector) -> RealVector {
        debug_assert_eq!(self.dim(), other.dim());
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a + factor * b).collect())
    }

    pub fn hadamard(&self, other: &RealVector) -> RealVector {
        debug_assert_eq!(self.dim(), other.dim());
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn distance(&self, other: &RealVector) -> f64 {
        self.sub(other).norm()
    }

    pub fn max_abs_diff(&self, other: &RealVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for RealVector {
    fn from(v: Vec<f64>) -> Self {
        RealVector(v)
    }
}

impl Deref for RealVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Positive diagonal matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMatrix {
    diag: RealVector,
}

impl DiagonalMatrix {
    pub fn new(diag: RealVector) -> Result<Self> {
        for (index, &value) in diag.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidPreconditioner { index, value });
            }
        }
        Ok(DiagonalMatrix { diag })
    }

    pub fn identity(dim: usize) -> Self {
        DiagonalMatrix {
            diag: RealVector::filled(dim, 1.0),
        }
    }

    /// `diag(accumulator) + shift * I`, the SC-AdaGrad preconditioner.
    pub fn shifted(accumulator: &RealVector, shift: f64) -> Result<Self> {
        Self::new(RealVector(accumulator.iter().map(|v| v + shift).collect()))
    }

    pub fn dim(&self) -> usize {
        self.diag.dim()
    }

    pub fn diag(&self) -> &RealVector {
        &self.diag
    }

    /// `A^{-1} x`.
    pub fn solve(&self, x: &RealVector) -> RealVector {
        RealVector(x.iter().zip(self.diag.iter()).map(|(a, b)| a / b).collect())
    }

    /// `<x, A^{-1} x>`.
    pub fn inverse_quadratic_form(&self, x: &RealVector) -> f64 {
        x.iter().zip(self.diag.iter()).map(|(xi, ai)| xi * xi / ai).sum()
    }
}

/// `||x||_A^2 = sum_i A_ii x_i^2`.
pub fn weighted_norm_sq(x: &RealVector, a: &DiagonalMatrix) -> Result<f64> {
    check_dim(a.dim(), x.dim())?;
    Ok(x.iter().zip(a.diag.iter()).map(|(xi, ai)| ai * xi * xi).sum())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Convex feasible region with a known diameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSet {
    Ball { center: RealVector, radius: f64 },
    Box { lower: RealVector, upper: RealVector },
}

/// Result of a weighted projection, with whether the constraint was active.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: RealVector,
    pub active: bool,
}

impl DecisionSet {
    pub fn ball(center: RealVector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::config("radius", format!("must be positive, got {radius}")));
        }
        if !center.is_finite() {
            return Err(Error::NonFinite("ball center".into()));
        }
        Ok(DecisionSet::Ball { center, radius })
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(RealVector::zeros(dim), radius)
    }

    pub fn cube(lower: RealVector, upper: RealVector) -> Result<Self> {
        check_dim(lower.dim(), upper.dim())?;
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::NonFinite("box bounds".into()));
        }
        if let Some(i) = (0..lower.dim()).find(|&i| lower[i] >= upper[i]) {
            return Err(Error::config(
                "box",
                format!("lower[{i}] = {} is not below upper[{i}] = {}", lower[i], upper[i]),
            ));
        }
        Ok(DecisionSet::Box { lower, upper })
    }

    /// Box `[lo, hi]^dim`.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::cube(RealVector::filled(dim, lo), RealVector::filled(dim, hi))
    }

    pub fn dim(&self) -> usize {
        match self {
            DecisionSet::Ball { center, .. } => center.dim(),
            DecisionSet::Box { lower, .. } => lower.dim(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DecisionSet::Ball { radius, .. } => 2.0 * radius,
            DecisionSet::Box { lower, upper } => upper.sub(lower).norm(),
        }
    }

    /// Largest Euclidean norm of a point of the set.
    pub fn max_norm(&self) -> f64 {
        self.max_distance_from(&RealVector::zeros(self.dim()))
    }

    /// `max_{x in C} ||x - p||`.
    pub fn max_distance_from(&self, p: &RealVector) -> f64 {
        match self {
            DecisionSet::Ball { center, radius } => center.distance(p) + radius,
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper.iter())
                .zip(p.iter())
                .map(|((lo, hi), pi)| {
                    let far = (pi - lo).abs().max((hi - pi).abs());
                    far * far
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance_to(&self, x: &RealVector) -> f64 {
        match self {
            DecisionSet::Ball { center, radius } => (x.distance(center) - radius).max(0.0),
            DecisionSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(xi, (lo, hi))| {
                    let gap = if xi < lo {
                        lo - xi
                    } else if xi > hi {
                        xi - hi
                    } else {
                        0.0
                    };
                    gap * gap
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    pub fn contains(&self, x: &RealVector, tol: f64) -> bool {
        x.dim() == self.dim() && self.distance_to(x) <= tol
    }

    pub fn project_euclidean(&self, y: &RealVector) -> Result<RealVector> {
        self.project_weighted(y, &DiagonalMatrix::identity(self.dim()))
    }

    /// `argmin_{x in C} ||y - x||_A^2`.
    pub fn project_weighted(&self, y: &RealVector, a: &DiagonalMatrix) -> Result<RealVector> {
        Ok(self.project_weighted_flagged(y, a)?.point)
    }

    pub fn project_weighted_flagged(&self, y: &RealVector, a: &DiagonalMatrix) -> Result<Projection> {
        check_dim(self.dim(), y.dim())?;
        check_dim(self.dim(), a.dim())?;
        // DiagonalMatrix::new already validated positivity; deserialized ones
        // bypass it.
        for (index, &value) in a.diag.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidPreconditioner { index, value });
            }
        }
        match self {
            DecisionSet::Box { lower, upper } => {
                // Separable objective: clamping each coordinate is optimal for any A.
                let point: Vec<f64> = y
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(yi, (lo, hi))| yi.clamp(*lo, *hi))
                    .collect();
                let active = point.iter().zip(y.iter()).any(|(p, yi)| p != yi);
                Ok(Projection {
                    point: RealVector(point),
                    active,
                })
            }
            DecisionSet::Ball { center, radius } => {
                let w = y.sub(center);
                // A few ulps of slack so re-projecting a boundary point is a no-op.
                if w.norm() <= *radius * (1.0 + 8.0 * f64::EPSILON) {
                    return Ok(Projection {
                        point: y.clone(),
                        active: false,
                    });
                }
                let z = ball_kkt_bisection(&w, a, *radius);
                Ok(Projection {
                    point: center.add(&z),
                    active: true,
                })
            }
        }
    }
}

/// Solves `min sum_i A_i (z_i - w_i)^2 s.t. ||z|| <= r` for `||w|| > r`.
///
/// The minimizer is `z_i(theta) = A_i w_i / (A_i + theta)` for the multiplier
/// `theta > 0` with `||z(theta)|| = r`; `||z(theta)||` is decreasing, so the
/// root is bracketed by `[0, max_i A_i ||w|| / r]`.
fn ball_kkt_bisection(w: &RealVector, a: &DiagonalMatrix, radius: f64) -> RealVector {
    let candidate = |theta: f64| -> RealVector {
        RealVector(
            w.iter()
                .zip(a.diag.iter())
                .map(|(wi, ai)| ai * wi / (ai + theta))
                .collect(),
        )
    };
    let a_max = a.diag.iter().copied().fold(0.0, f64::max);
    let mut lo = 0.0;
    let mut hi = a_max * w.norm() / radius;
    let mut theta = hi;
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let n = candidate(mid).norm();
        if (n - radius).abs() < BISECTION_RESIDUAL {
            theta = mid;
            break;
        }
        if n > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        theta = hi;
    }
    let z = candidate(theta);
    let n = z.norm();
    if n > radius {
        z.scale(radius / n)
    } else {
        z
    }
}

/// Constants shared by a run: gradient bound, diameter, strong-convexity
/// modulus of the true losses, horizon and dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub gradient_bound: f64,
    pub diameter: f64,
    pub lambda_sc: f64,
    pub horizon: usize,
    pub dim: usize,
}

impl ProblemConstants {
    pub fn new(gradient_bound: f64, diameter: f64, lambda_sc: f64, horizon: usize, dim: usize) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        positive("G", gradient_bound)?;
        positive("D", diameter)?;
        positive("lambda", lambda_sc)?;
        if horizon == 0 {
            return Err(Error::config("T", "horizon must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        Ok(ProblemConstants {
            gradient_bound,
            diameter,
            lambda_sc,
            horizon,
            dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> RealVector {
        RealVector::from(x.to_vec())
    }

    fn diag(x: &[f64]) -> DiagonalMatrix {
        DiagonalMatrix::new(v(x)).unwrap()
    }

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(weighted_norm_sq(&v(&[1.0, 1.0]), &diag(&[1.0, 2.0])).unwrap(), 3.0);
        assert_eq!(weighted_norm_sq(&v(&[0.0, 0.0]), &diag(&[5.0, 7.0])).unwrap(), 0.0);
        assert_eq!(weighted_norm_sq(&v(&[2.0, 0.0]), &diag(&[3.0, 9.0])).unwrap(), 12.0);
    }

    #[test]
    fn weighted_norm_dimension_mismatch() {
        let err = weighted_norm_sq(&v(&[1.0]), &diag(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn box_projection_clamps() {
        let set = DecisionSet::uniform_box(2, -1.0, 1.0).unwrap();
        for a in [[1.0, 1.0], [1e-8, 30.0], [7.0, 0.2]] {
            let p = set.project_weighted(&v(&[2.0, 0.5]), &diag(&a)).unwrap();
            assert_eq!(p, v(&[1.0, 0.5]));
        }
    }

    #[test]
    fn ball_projection_identity_is_radial() {
        let set = DecisionSet::centered_ball(2, 1.0).unwrap();
        let p = set.project_euclidean(&v(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-10);
        assert_abs_diff_eq!(p[1], 0.8, epsilon = 1e-10);
    }

    #[test]
    fn ball_projection_weighted_axis_point() {
        let set = DecisionSet::centered_ball(2, 1.0).unwrap();
        let p = set.project_weighted(&v(&[2.0, 0.0]), &diag(&[1.0, 4.0])).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_preconditioner_rejected() {
        assert!(matches!(
            DiagonalMatrix::new(v(&[1.0, 0.0])),
            Err(Error::InvalidPreconditioner { index: 1, .. })
        ));
        let set = DecisionSet::centered_ball(2, 1.0).unwrap();
        let bad: DiagonalMatrix = serde_json::from_str(r#"{"diag":[1.0,-2.0]}"#).unwrap();
        assert!(matches!(
            set.project_weighted(&v(&[2.0, 0.0]), &bad),
            Err(Error::InvalidPreconditioner { index: 1, .. })
        ));
    }

    #[test]
    fn contains_examples() {
        let ball = DecisionSet::centered_ball(2, 1.0).unwrap();
        assert!(ball.contains(&v(&[0.0, 0.0]), 0.0));
        assert!(ball.contains(&v(&[1.0 + 1e-12, 0.0]), 1e-9));
        let unit_box = DecisionSet::uniform_box(2, 0.0, 1.0).unwrap();
        assert!(!unit_box.contains(&v(&[2.0, 0.0]), 1e-9));
    }

    #[test]
    fn diameters() {
        assert_eq!(DecisionSet::centered_ball(3, 1.5).unwrap().diameter(), 3.0);
        let b = DecisionSet::cube(v(&[0.0, 0.0]), v(&[3.0, 4.0])).unwrap();
        assert_eq!(b.diameter(), 5.0);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(DecisionSet::cube(v(&[0.0, 1.0]), v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn max_distance_box_uses_far_corner() {
        let b = DecisionSet::uniform_box(2, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(b.max_distance_from(&v(&[0.5, 0.0])), (1.5f64 * 1.5 + 1.0).sqrt());
    }

    fn arb_point(dim: usize, scale: f64) -> impl Strategy<Value = RealVector> {
        prop::collection::vec(-scale..scale, dim).prop_map(RealVector::from)
    }

    fn arb_diag(dim: usize) -> impl Strategy<Value = DiagonalMatrix> {
        prop::collection::vec(-8.0f64..3.0, dim).prop_map(|e| {
            DiagonalMatrix::new(RealVector::from(e.iter().map(|x| 10f64.powf(*x)).collect::<Vec<_>>())).unwrap()
        })
    }

    fn arb_set(dim: usize) -> impl Strategy<Value = DecisionSet> {
        prop_oneof![
            (arb_point(dim, 1.0), 0.1f64..3.0).prop_map(|(c, r)| DecisionSet::ball(c, r).unwrap()),
            (arb_point(dim, 1.0), prop::collection::vec(0.1f64..2.0, dim)).prop_map(|(lo, w)| {
                let hi = lo.add(&RealVector::from(w));
                DecisionSet::cube(lo, hi).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_feasible(
            (set, y, a) in (1usize..6).prop_flat_map(|d| (arb_set(d), arb_point(d, 10.0), arb_diag(d)))
        ) {
            let p = set.project_weighted(&y, &a).unwrap();
            prop_assert!(set.contains(&p, MEMBERSHIP_TOL));
            let pp = set.project_weighted(&p, &a).unwrap();
            prop_assert!(pp.max_abs_diff(&p) <= 1e-12);
        }

        #[test]
        fn box_projection_ignores_weights(
            (set, y, a, b) in (1usize..6).prop_flat_map(|d| (
                (arb_point(d, 1.0), prop::collection::vec(0.1f64..2.0, d)).prop_map(|(lo, w)| {
                    let hi = lo.add(&RealVector::from(w));
                    DecisionSet::cube(lo, hi).unwrap()
                }),
                arb_point(d, 10.0), arb_diag(d), arb_diag(d)))
        ) {
            prop_assert_eq!(set.project_weighted(&y, &a).unwrap(), set.project_weighted(&y, &b).unwrap());
        }

        #[test]
        fn euclidean_ball_projection_is_radial(
            (c, r, y) in (1usize..6).prop_flat_map(|d| (arb_point(d, 1.0), 0.1f64..3.0, arb_point(d, 10.0)))
        ) {
            let set = DecisionSet::ball(c.clone(), r).unwrap();
            let w = y.sub(&c);
            prop_assume!(w.norm() > r);
            let expected = c.add(&w.scale(r / w.norm()));
            let p = set.project_euclidean(&y).unwrap();
            prop_assert!(p.max_abs_diff(&expected) <= 1e-10);
        }
    }

    #[test]
    fn projection_beats_random_feasible_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let d = 1 + trial % 4;
            let set = if trial % 2 == 0 {
                DecisionSet::centered_ball(d, 1.0).unwrap()
            } else {
                DecisionSet::uniform_box(d, -0.5, 1.0).unwrap()
            };
            let y = RealVector::from((0..d).map(|_| rng.gen_range(-4.0..4.0)).collect::<Vec<_>>());
            let a = DiagonalMatrix::new(RealVector::from(
                (0..d).map(|_| 10f64.powf(rng.gen_range(-3.0..2.0))).collect::<Vec<_>>(),
            ))
            .unwrap();
            let p = set.project_weighted(&y, &a).unwrap();
            let best = weighted_norm_sq(&y.sub(&p), &a).unwrap();
            for _ in 0..1000 {
                let z = RealVector::from((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
                if !set.contains(&z, 0.0) {
                    continue;
                }
                assert!(best <= weighted_norm_sq(&y.sub(&z), &a).unwrap() + 1e-9);
            }
        }
    }
}
