use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorio::Matrix;

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<S> {
    pub name: String,
    pub value: Matrix<S>,
    pub grad: Matrix<S>,
}

/// Named parameters kept in lexicographic order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<S> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<S>) -> Result<()> {
        let name = name.into();
        match self.entries.binary_search_by(|e| e.name.as_str().cmp(&name)) {
            Ok(_) => Err(Error::Config(format!("duplicate parameter {name}"))),
            Err(pos) => {
                let grad = Matrix::zeros(value.rows(), value.cols());
                self.entries.insert(pos, ParamEntry { name, value, grad });
                Ok(())
            }
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.binary_search_by(|e| e.name.as_str().cmp(name)).ok()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<S>> {
        self.index_of(name).map(|i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<S>> {
        self.index_of(name).map(move |i| &mut self.entries[i])
    }

    pub fn entry(&self, index: usize) -> &ParamEntry<S> {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[ParamEntry<S>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<S>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.as_mut_slice().iter_mut().for_each(|g| *g = S::zero());
        }
    }

    /// `grad += scale * g` for every parameter that received a gradient.
    pub fn accumulate(&mut self, grads: &Gradients<S>, scale: S) {
        for (e, g) in self.entries.iter_mut().zip(&grads.per_param) {
            if let Some(g) = g {
                for (acc, &v) in e.grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *acc += scale * v;
                }
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                })
                .collect(),
        }
    }
}

impl<S: Scalar> fmt::Display for ParamStore<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{}\t{}x{}", e.name, e.value.rows(), e.value.cols())?;
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed like the store.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    pub per_param: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, index: usize) -> Option<&Matrix<S>> {
        self.per_param.get(index).and_then(Option::as_ref)
    }

    /// Elementwise sum of two gradient sets from the same store.
    pub fn add(&mut self, other: &Gradients<S>) {
        for (a, b) in self.per_param.iter_mut().zip(&other.per_param) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a
                    .as_mut_slice()
                    .iter_mut()
                    .zip(b.as_slice())
                    .for_each(|(x, &y)| *x += y),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.per_param
            .iter()
            .flatten()
            .all(|m| m.as_slice().iter().all(|v| v.is_finite()))
    }
}

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-sqrt(1/fan_in), +sqrt(1/fan_in))`, `fan_in` = rows.
    FanIn,
    Zeros,
    Ones,
    /// `N(0, 0.02)`.
    SmallNormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            init,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds a store, drawing values in declaration order.
pub fn build_store<S: Scalar>(specs: &[ParamSpec], rng: &mut impl Rng) -> Result<ParamStore<S>> {
    let mut store = ParamStore::new();
    let normal = Normal::new(0.0, 0.02).expect("valid normal");
    for spec in specs {
        let n = spec.len();
        let data: Vec<S> = match spec.init {
            Init::Zeros => vec![S::zero(); n],
            Init::Ones => vec![S::one(); n],
            Init::SmallNormal => (0..n).map(|_| S::of(normal.sample(rng))).collect(),
            Init::FanIn => {
                let bound = (1.0 / spec.rows.max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                (0..n).map(|_| S::of(dist.sample(rng))).collect()
            }
        };
        store.insert(spec.name.clone(), Matrix::from_vec(spec.rows, spec.cols, data)?)?;
    }
    Ok(store)
}
