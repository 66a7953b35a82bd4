//! Dense f32 tensors and named parameter collections.
//!
//! A [`ParameterSet`] is the unit exchanged between clients and the
//! coordinator. Fusion ([`elementwise_mean`]) is only defined between sets
//! that share a base initialization and an architecture.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Row-major dense tensor of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// `self + scale * src`.
    pub fn axpy(&self, scale: f32, src: &Tensor) -> Result<Tensor> {
        self.check_same_shape(src, "axpy")?;
        let data = self
            .data
            .iter()
            .zip(&src.data)
            .map(|(&d, &s)| d + scale * s)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.axpy(1.0, other)
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// 2-D matrix product with f64 accumulation.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape.as_slice(), rhs.shape.as_slice()) else {
            return Err(Error::ShapeMismatch(format!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                self.shape, rhs.shape
            )));
        };
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += self.data[i * k + p] as f64 * rhs.data[p * n + j] as f64;
                }
                out[i * n + j] = acc as f32;
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Tensor {
        let cols = *self.shape.last().expect("tensor has at least one dim");
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(cols) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
            let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| (e / sum) as f32));
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }
}

/// Named tensors with the lineage needed to decide fusion compatibility.
///
/// Entries iterate in lexicographic name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Tensor>,
    base_id: String,
    arch_hash: String,
}

impl ParameterSet {
    pub fn new(base_id: impl Into<String>, arch_hash: impl Into<String>) -> Self {
        Self {
            entries: BTreeMap::new(),
            base_id: base_id.into(),
            arch_hash: arch_hash.into(),
        }
    }

    pub fn with_entries(
        base_id: impl Into<String>,
        arch_hash: impl Into<String>,
        entries: BTreeMap<String, Tensor>,
    ) -> Self {
        Self {
            entries,
            base_id: base_id.into(),
            arch_hash: arch_hash.into(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.entries.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_id(&self) -> &str {
        &self.base_id
    }

    pub fn arch_hash(&self) -> &str {
        &self.arch_hash
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }

    /// First non-finite tensor name, if any.
    pub fn find_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.as_str())
    }

    /// Ok when both sets share base id, architecture hash, names and shapes.
    pub fn check_compatible(&self, other: &ParameterSet) -> Result<()> {
        if self.base_id != other.base_id {
            return Err(Error::IncompatibleParameterSets(format!(
                "base id `{}` vs `{}`",
                self.base_id, other.base_id
            )));
        }
        if self.arch_hash != other.arch_hash {
            return Err(Error::IncompatibleParameterSets(format!(
                "architecture hash `{}` vs `{}`",
                self.arch_hash, other.arch_hash
            )));
        }
        if self.entries.len() != other.entries.len()
            || !self.entries.keys().eq(other.entries.keys())
        {
            return Err(Error::IncompatibleParameterSets(
                "tensor name sets differ".into(),
            ));
        }
        for (name, t) in &self.entries {
            let o = &other.entries[name];
            if t.shape() != o.shape() {
                return Err(Error::IncompatibleParameterSets(format!(
                    "`{name}` has shape {:?} vs {:?}",
                    t.shape(),
                    o.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn is_compatible(&self, other: &ParameterSet) -> bool {
        self.check_compatible(other).is_ok()
    }

    /// Same layout and lineage, every value zero.
    pub fn zeros_like(&self) -> ParameterSet {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
            base_id: self.base_id.clone(),
            arch_hash: self.arch_hash.clone(),
        }
    }
}

/// Uniform element-wise average of fusion-compatible parameter sets.
///
/// Sums are accumulated in f64 in input order and rounded to f32 once.
pub fn elementwise_mean(sets: &[ParameterSet]) -> Result<ParameterSet> {
    let (first, rest) = sets.split_first().ok_or(Error::EmptyFusionInput)?;
    for other in rest {
        first.check_compatible(other)?;
    }
    let n = sets.len() as f64;
    let mut entries = BTreeMap::new();
    for (name, tensor) in &first.entries {
        let mut acc: Vec<f64> = tensor.data.iter().map(|&v| v as f64).collect();
        for other in rest {
            for (a, &v) in acc.iter_mut().zip(&other.entries[name].data) {
                *a += v as f64;
            }
        }
        let data = acc.into_iter().map(|a| (a / n) as f32).collect();
        entries.insert(
            name.clone(),
            Tensor {
                shape: tensor.shape.clone(),
                data,
            },
        );
    }
    Ok(ParameterSet {
        entries,
        base_id: first.base_id.clone(),
        arch_hash: first.arch_hash.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, values: &[f32]) -> ParameterSet {
        let mut s = ParameterSet::new("base", "arch");
        s.insert(name, Tensor::new(vec![values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn tensor_rejects_bad_length() {
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn axpy_from_zero_returns_source() {
        let t = Tensor::new(vec![3], vec![1.5, -2.0, 7.25]).unwrap();
        let z = Tensor::zeros(&[3]);
        assert_eq!(z.axpy(1.0, &t).unwrap(), t);
        assert!(z.axpy(1.0, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let s = Tensor::zeros(&[1, 2]).softmax();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -50.0, 0.0, 80.0]).unwrap();
        for row in t.softmax().data().chunks(3) {
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn matmul_matches_hand_computation() {
        // [1 2 3; 4 5 6] x [7 8; 9 10; 11 12] = [58 64; 139 154]
        let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn mean_of_two_scalars() {
        let out = elementwise_mean(&[single("w", &[2.0]), single("w", &[4.0])]).unwrap();
        assert_eq!(out.get("w").unwrap().data(), &[3.0]);
        assert_eq!(out.base_id(), "base");
        assert_eq!(out.arch_hash(), "arch");
    }

    #[test]
    fn mean_of_copies_is_identity() {
        let s = single("w", &[0.1, -3.3, 1e-7]);
        let out = elementwise_mean(&[s.clone(), s.clone(), s.clone()]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn mean_rejects_empty_and_incompatible() {
        assert!(matches!(elementwise_mean(&[]), Err(Error::EmptyFusionInput)));

        let a = single("w", &[1.0]);
        let mut other_base = ParameterSet::new("other", "arch");
        other_base.insert("w", Tensor::new(vec![1], vec![1.0]).unwrap());
        assert!(matches!(
            elementwise_mean(&[a.clone(), other_base]),
            Err(Error::IncompatibleParameterSets(_))
        ));

        let mut other_arch = ParameterSet::new("base", "arch2");
        other_arch.insert("w", Tensor::new(vec![1], vec![1.0]).unwrap());
        assert!(elementwise_mean(&[a.clone(), other_arch]).is_err());

        assert!(elementwise_mean(&[a.clone(), single("v", &[1.0])]).is_err());
        assert!(elementwise_mean(&[a, single("w", &[1.0, 2.0])]).is_err());
    }
}
