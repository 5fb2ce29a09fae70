//! Minimum-norm point of a finite convex hull (Wolfe's algorithm).

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct MinNormPoint {
    pub point: DVector<f64>,
    /// Convex weights, indexed like the input points.
    pub weights: Vec<f64>,
    pub iterations: usize,
}

impl MinNormPoint {
    pub fn norm(&self) -> f64 {
        self.point.norm()
    }
}

/// Minimizes `|sum_i mu_i p_i|` over the affine hull of the selected points.
fn affine_minimizer(points: &[DVector<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut system = DMatrix::<f64>::zeros(k + 1, k + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            system[(a, b)] = points[i].dot(&points[j]);
        }
        system[(a, k)] = 1.0;
        system[(k, a)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = system
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            system
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .expect("both SVD factors were requested")
        });
    sol.rows(0, k).iter().copied().collect()
}

/// Wolfe's min-norm-point iteration over `conv(points)`.
pub fn min_norm_point(points: &[DVector<f64>], max_iter: usize) -> MinNormPoint {
    assert!(!points.is_empty(), "empty point set");
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eps = 1e-15 * scale;
    let weight_eps = 1e-14;

    let start = (0..points.len())
        .min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared()))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (j, best) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, x.dot(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - best <= eps || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let mu = affine_minimizer(points, &active);
            if mu.iter().all(|&m| m > weight_eps) {
                lambda = mu;
                break;
            }
            let theta = lambda
                .iter()
                .zip(&mu)
                .filter(|(_, &m)| m <= weight_eps)
                .map(|(&l, &m)| if l - m > 0.0 { l / (l - m) } else { 0.0 })
                .fold(1.0f64, f64::min);
            for (l, m) in lambda.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let mut keep = Vec::new();
            let mut kept_lambda = Vec::new();
            for (idx, &l) in active.iter().zip(&lambda) {
                if l > weight_eps {
                    keep.push(*idx);
                    kept_lambda.push(l);
                }
            }
            if keep.is_empty() {
                // degenerate step; restart from the newest point
                keep.push(*active.last().unwrap());
                kept_lambda.push(1.0);
            }
            let total: f64 = kept_lambda.iter().sum();
            active = keep;
            lambda = kept_lambda.into_iter().map(|l| l / total).collect();
            if active.len() == 1 {
                break;
            }
        }
        x = DVector::zeros(points[0].len());
        for (&i, &l) in active.iter().zip(&lambda) {
            x.axpy(l, &points[i], 1.0);
        }
    }

    let mut weights = vec![0.0; points.len()];
    for (&i, &l) in active.iter().zip(&lambda) {
        weights[i] = l;
    }
    MinNormPoint {
        point: x,
        weights,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn segment_and_triangle() {
        // closest point of the segment [(1, 1), (1, -1)] is (1, 0)
        let r = min_norm_point(&[v(&[1.0, 1.0]), v(&[1.0, -1.0])], 100);
        assert!((r.point - v(&[1.0, 0.0])).norm() < 1e-12);
        // origin inside the triangle
        let r = min_norm_point(&[v(&[1.0, 0.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0])], 100);
        assert!(r.norm() < 1e-12);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn matches_brute_force_on_random_triangles() {
        let mut rng = crate::rng::seeded(17);
        for _ in 0..50 {
            let pts: Vec<DVector<f64>> = (0..3)
                .map(|_| v(&[rng.random_range(-1.0..1.0) + 0.5, rng.random_range(-1.0..1.0)]))
                .collect();
            let r = min_norm_point(&pts, 100);
            // brute-force over a barycentric grid
            let steps = 400;
            let mut best = f64::INFINITY;
            for a in 0..=steps {
                for b in 0..=(steps - a) {
                    let (wa, wb) = (a as f64 / steps as f64, b as f64 / steps as f64);
                    let p = &pts[0] * wa + &pts[1] * wb + &pts[2] * (1.0 - wa - wb);
                    best = best.min(p.norm());
                }
            }
            assert!(r.norm() <= best + 1e-12);
            assert!(r.norm() >= best - 5e-3);
        }
    }
}
