//! Dense flat parameter vectors.
//!
//! Models, client updates, coalition averages and validation references all
//! live in this one space. Operations never mutate their inputs and reject
//! results that contain NaN or infinities.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Norms below this are treated as zero by [`cosine_similarity`].
pub const EPS_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Build a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::structural("parameter vector must have dim >= 1"));
        }
        ensure_finite(&values, "ParamVector::new")?;
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector must have dim >= 1");
        Self {
            values: vec![0.0; dim],
        }
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm_squared(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `self - other`.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        axpy(-1.0, other, self)
    }

    /// `self + other`.
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        axpy(1.0, other, self)
    }

    pub fn scale(&self, a: f64) -> Result<ParamVector> {
        let values: Vec<f64> = self.values.iter().map(|v| a * v).collect();
        ensure_finite(&values, "scale")?;
        Ok(Self { values })
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(p: ParamVector) -> Self {
        p.values
    }
}

fn ensure_finite(values: &[f64], op: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns `a * x + y`.
pub fn axpy(a: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    check_dims(y.dim(), x.dim())?;
    let values: Vec<f64> = x
        .values
        .iter()
        .zip(&y.values)
        .map(|(xi, yi)| a * xi + yi)
        .collect();
    ensure_finite(&values, "axpy")?;
    Ok(ParamVector { values })
}

pub fn euclidean_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(squared_distance(&a.values, &b.values).sqrt())
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
///
/// Zero when either norm is below [`EPS_NORM`].
pub fn cosine_similarity(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    let nb = b.norm();
    if na < EPS_NORM || nb < EPS_NORM {
        return Ok(0.0);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Elementwise arithmetic mean.
pub fn mean(vectors: &[&ParamVector]) -> Result<ParamVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::structural("mean of an empty list"))?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        check_dims(dim, v.dim())?;
        for (a, x) in acc.iter_mut().zip(&v.values) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    ensure_finite(&acc, "mean")?;
    Ok(ParamVector { values: acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn random_pv(rng: &mut impl Rng, dim: usize) -> ParamVector {
        pv(&(0..dim)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect::<Vec<_>>())
    }

    #[test]
    fn axpy_examples() {
        assert_eq!(
            axpy(0.0, &pv(&[1.0, 2.0]), &pv(&[3.0, 4.0])).unwrap(),
            pv(&[3.0, 4.0])
        );
        assert_eq!(
            axpy(1.0, &pv(&[1.0, 1.0]), &pv(&[0.0, 0.0])).unwrap(),
            pv(&[1.0, 1.0])
        );
        let x = [2.0, 4.0];
        let y = [1.0, 1.0];
        let mut oracle = [0.0; 2];
        for i in 0..2 {
            oracle[i] = -0.5 * x[i] + y[i];
        }
        assert_eq!(oracle, [0.0, -1.0]);
        assert_eq!(axpy(-0.5, &pv(&x), &pv(&y)).unwrap(), pv(&oracle));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = pv(&[1.0, 2.0]);
        let b = pv(&[1.0]);
        assert!(matches!(
            axpy(1.0, &a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(euclidean_distance(&a, &b).is_err());
        assert!(cosine_similarity(&a, &b).is_err());
        assert!(mean(&[&a, &b]).is_err());
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(ParamVector::new(vec![]).is_err());
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        let big = pv(&[f64::MAX]);
        assert!(matches!(
            axpy(2.0, &big, &big),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn distance_examples() {
        let a = pv(&[5.0, 5.0, 5.0]);
        assert_eq!(euclidean_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            euclidean_distance(&pv(&[3.0, 0.0]), &pv(&[0.0, 4.0])).unwrap(),
            5.0
        );

        let mut rng = crate::rng::seeded_rng(11);
        let a = random_pv(&mut rng, 64);
        let b = random_pv(&mut rng, 64);
        let mut sum = 0.0;
        for i in 0..64 {
            sum += (a.as_slice()[i] - b.as_slice()[i]).powi(2);
        }
        let oracle = sum.sqrt();
        let got = euclidean_distance(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn cosine_examples() {
        let a = pv(&[0.3, -2.0, 1.5]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            cosine_similarity(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert!(
            (cosine_similarity(&pv(&[1.0, 1.0]), &pv(&[-1.0, -1.0])).unwrap() + 1.0).abs() < 1e-15
        );
        assert_eq!(
            cosine_similarity(&ParamVector::zeros(3), &a).unwrap(),
            0.0
        );
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[&pv(&[2.0, 2.0])]).unwrap(), pv(&[2.0, 2.0]));
        assert_eq!(
            mean(&[&pv(&[0.0, 0.0]), &pv(&[2.0, 4.0])]).unwrap(),
            pv(&[1.0, 2.0])
        );
        assert!(mean(&[]).is_err());

        let mut rng = crate::rng::seeded_rng(5);
        let vs: Vec<ParamVector> = (0..5).map(|_| random_pv(&mut rng, 17)).collect();
        let refs: Vec<&ParamVector> = vs.iter().collect();
        let got = mean(&refs).unwrap();
        for j in 0..17 {
            let mut s = 0.0;
            for v in &vs {
                s += v.as_slice()[j];
            }
            let oracle = s / 5.0;
            assert!((got.as_slice()[j] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = ParamVector> {
        proptest::collection::vec(-1e3f64..1e3, dim).prop_map(|v| ParamVector::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_triangular(
            (a, b, c) in (1usize..32).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d), vec_strategy(d)))
        ) {
            let ab = euclidean_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, euclidean_distance(&b, &a).unwrap());
            let bc = euclidean_distance(&b, &c).unwrap();
            let ac = euclidean_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn cosine_is_clamped(
            (a, b) in (1usize..32).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d)))
        ) {
            let c = cosine_similarity(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            let s = cosine_similarity(&a, &a.scale(3.0).unwrap()).unwrap();
            prop_assert!(s <= 1.0);
        }

        #[test]
        fn mean_of_copies_is_identity(v in (1usize..32).prop_flat_map(vec_strategy), k in 1usize..9) {
            let copies: Vec<&ParamVector> = std::iter::repeat_n(&v, k).collect();
            let m = mean(&copies).unwrap();
            for (x, y) in m.as_slice().iter().zip(v.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
            }
        }
    }
}
