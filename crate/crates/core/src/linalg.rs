//! Dense vector helpers on `[f64]` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

/// Arithmetic mean of equally sized vectors. Panics on an empty slice.
pub fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    let mut out = vec![0.0; vectors[0].len()];
    for v in vectors {
        axpy(1.0, v, &mut out);
    }
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Euclidean projection of `point` onto the closed ball `B(center, radius)`.
///
/// A point at the center (or inside the ball) is returned unchanged.
pub fn project_ball(point: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    let d = dist(point, center);
    if d <= radius {
        return point.to_vec();
    }
    let w = radius / d;
    center
        .iter()
        .zip(point)
        .map(|(c, p)| c + w * (p - c))
        .collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_projection() {
        assert_eq!(project_ball(&[3.0, 0.0], &[0.0, 0.0], 1.0), vec![1.0, 0.0]);
        assert_eq!(project_ball(&[0.5, 0.0], &[0.0, 0.0], 1.0), vec![0.5, 0.0]);
        assert_eq!(project_ball(&[2.0, 2.0], &[2.0, 2.0], 0.0), vec![2.0, 2.0]);
    }

    #[test]
    fn mean_of_vectors() {
        let m = mean(&[vec![1.0, 0.0], vec![-1.0, 2.0]]);
        assert_eq!(m, vec![0.0, 1.0]);
    }
}
