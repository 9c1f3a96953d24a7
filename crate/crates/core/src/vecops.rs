//! Small dense-vector helpers over `&[f64]`.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + s * b`
pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Componentwise mean; `None` for an empty slice.
pub fn mean<V: AsRef<[f64]>>(vs: &[V]) -> Option<Vec<f64>> {
    let first = vs.first()?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    Some(acc.into_iter().map(|a| a / n).collect())
}

/// Largest pairwise Euclidean distance.
pub fn max_pairwise_dist<V: AsRef<[f64]>>(vs: &[V]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in vs.iter().enumerate() {
        for b in &vs[i + 1..] {
            best = best.max(dist(a.as_ref(), b.as_ref()));
        }
    }
    best
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}
