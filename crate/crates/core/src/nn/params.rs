//! Named parameter collection with gradients, initialization and the
//! `HCKPT` checkpoint format.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{HaruError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T> {
    names: Vec<String>,
    lookup: HashMap<String, ParamId>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    grads_ready: bool,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            names: Vec::new(),
            lookup: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            grads_ready: false,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(HaruError::Invalid(format!("bad parameter name '{name}'")));
        }
        if self.lookup.contains_key(&name) {
            return Err(HaruError::Invalid(format!("duplicate parameter '{name}'")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(rng.random_range(-bound..=bound)))
            .collect();
        self.add(name, Tensor::from_vec(shape, data)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, &Tensor<T>) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<T>) -> Result<()> {
        let slot = &mut self.grads[id.0];
        if slot.shape() != g.shape() {
            return Err(HaruError::Shape(format!(
                "gradient {:?} for parameter '{}' of shape {:?}",
                g.shape(),
                self.names[id.0],
                slot.shape()
            )));
        }
        slot.add_assign(g);
        self.grads_ready = true;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(T::zero());
        }
        self.grads_ready = false;
    }

    /// True once a gradient has been accumulated since the last
    /// [`zero_grads`](Self::zero_grads).
    pub fn has_grads(&self) -> bool {
        self.grads_ready
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Same names and values in another precision; gradients reset.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            names: self.names.clone(),
            lookup: self.lookup.clone(),
            values: self.values.iter().map(|v| v.cast()).collect(),
            grads: self
                .values
                .iter()
                .map(|v| Tensor::zeros(v.shape()))
                .collect(),
            grads_ready: false,
        }
    }

    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.values.clone()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) -> Result<()> {
        if values.len() != self.values.len()
            || values
                .iter()
                .zip(&self.values)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(HaruError::Shape("snapshot does not match the store".into()));
        }
        self.values = values.to_vec();
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "HCKPT v1 {}", self.values.len())?;
        for (name, v) in self.names.iter().zip(&self.values) {
            write!(out, "{} {}", name, v.shape().len())?;
            for d in v.shape() {
                write!(out, " {d}")?;
            }
            out.write_all(b"\n")?;
            let mut buf = Vec::with_capacity(v.numel() * 4);
            for &x in v.data() {
                buf.extend_from_slice(&x.as_f32().to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| HaruError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| HaruError::io(path, e))
    }

    /// Overwrites values from a checkpoint whose names and shapes match this
    /// store exactly (order may differ).
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let file = fs::File::open(path).map_err(|e| HaruError::io(path, e))?;
        let entries = read_checkpoint(&mut BufReader::new(file))?;
        self.assign_entries(entries)
    }

    pub fn assign_entries(&mut self, entries: Vec<CheckpointEntry>) -> Result<()> {
        if entries.len() != self.values.len() {
            return Err(HaruError::Header(format!(
                "checkpoint has {} parameters, network expects {}",
                entries.len(),
                self.values.len()
            )));
        }
        for e in entries {
            let id = self
                .id(&e.name)
                .ok_or_else(|| HaruError::Header(format!("unknown parameter '{}'", e.name)))?;
            if self.values[id.0].shape() != e.shape.as_slice() {
                return Err(HaruError::Shape(format!(
                    "parameter '{}': checkpoint shape {:?}, network {:?}",
                    e.name,
                    e.shape,
                    self.values[id.0].shape()
                )));
            }
            let data = e.data.iter().map(|&v| T::of(v as f64)).collect();
            self.values[id.0] = Tensor::from_vec(&e.shape, data)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    r.by_ref()
        .take(4096)
        .read_until(b'\n', &mut line)
        .map_err(|e| HaruError::io("<checkpoint>", e))?;
    if line.pop() != Some(b'\n') {
        return Err(HaruError::Header("truncated checkpoint line".into()));
    }
    String::from_utf8(line).map_err(|_| HaruError::Header("checkpoint line is not UTF-8".into()))
}

pub fn read_checkpoint<R: BufRead>(r: &mut R) -> Result<Vec<CheckpointEntry>> {
    let header = read_line(r)?;
    let count: usize = header
        .strip_prefix("HCKPT v1 ")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| HaruError::Header(format!("bad checkpoint header '{header}'")))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let line = read_line(r)?;
        let mut f = line.split(' ');
        let name = f.next().unwrap_or_default().to_string();
        let rank: usize = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| HaruError::Header(format!("bad entry line '{line}'")))?;
        let shape: Vec<usize> = f
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| HaruError::Header(format!("bad shape in '{line}'")))?;
        if shape.len() != rank {
            return Err(HaruError::Header(format!("rank mismatch in '{line}'")));
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)
            .map_err(|_| HaruError::DimensionMismatch(format!("truncated data for '{name}'")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    Ok(entries)
}
