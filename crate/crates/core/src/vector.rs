//! Small dense-vector helpers shared by every stage.

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

pub fn axpy(acc: &mut [f64], alpha: f64, v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += alpha * x;
    }
}

pub fn scale(v: &[f64], alpha: f64) -> Vec<f64> {
    v.iter().map(|x| alpha * x).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `v / ||v||`, or `None` for the zero vector.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        None
    } else {
        Some(scale(v, 1.0 / n))
    }
}

/// Kronecker product `a ⊗ b`, first factor most significant.
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// `v1 ⊗ v2 ⊗ ... ⊗ vk`; an empty list yields the scalar `[1.0]`.
pub fn kron_all<'a, I>(factors: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    factors
        .into_iter()
        .fold(vec![1.0], |acc, f| kron(&acc, f))
}

/// `v^{⊗ power}`.
pub fn kron_power(v: &[f64], power: usize) -> Vec<f64> {
    kron_all(std::iter::repeat_n(v, power))
}
