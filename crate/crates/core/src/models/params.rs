use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::VarMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelError, Result};

/// Initial values for a parameter created from scratch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Const(f32),
    Uniform(f32),
    Normal(f32),
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    GlorotUniform { fan_in: usize, fan_out: usize },
}

enum Fallback {
    Init(Init),
    Value(Tensor),
}

/// Named parameter store with a seeded initializer.
///
/// Parameters are taken from `source` when it holds a tensor under the same
/// name (pretrained checkpoint or saved model) and otherwise drawn from a
/// ChaCha8 stream, so construction is reproducible for a given seed. All
/// parameters live in one [`VarMap`]; only those marked trainable are handed
/// to the optimizer.
pub struct ParamStore {
    varmap: VarMap,
    trainable: Vec<(String, Var)>,
    source: HashMap<String, Tensor>,
    strict: bool,
    rng: ChaCha8Rng,
    device: Device,
    from_source: usize,
    from_init: usize,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self::with_source(HashMap::new(), seed, false)
    }

    /// With `strict`, every requested parameter must be present in `source`.
    pub fn with_source(source: HashMap<String, Tensor>, seed: u64, strict: bool) -> Self {
        ParamStore {
            varmap: VarMap::new(),
            trainable: Vec::new(),
            source,
            strict,
            rng: ChaCha8Rng::seed_from_u64(seed),
            device: Device::Cpu,
            from_source: 0,
            from_init: 0,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn has_source(&self, name: &str) -> bool {
        self.source.contains_key(name)
    }

    /// Counts of parameters taken from the source vs freshly initialized.
    pub fn provenance(&self) -> (usize, usize) {
        (self.from_source, self.from_init)
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init, trainable: bool) -> Result<Tensor> {
        self.insert(name, shape, Fallback::Init(init), trainable)
    }

    /// Like [`Self::get`], but a parameter missing from the source starts at
    /// `initial` instead of a random draw.
    pub fn get_or_value(&mut self, name: &str, initial: Tensor, trainable: bool) -> Result<Tensor> {
        let shape = initial.dims().to_vec();
        self.insert(name, &shape, Fallback::Value(initial), trainable)
    }

    fn insert(&mut self, name: &str, shape: &[usize], fallback: Fallback, trainable: bool) -> Result<Tensor> {
        if self.varmap.data().lock().unwrap().contains_key(name) {
            return Err(ModelError::InvalidSpec(format!("parameter {name} declared twice")));
        }
        let value = match self.source.remove(name) {
            Some(t) => {
                if t.dims() != shape {
                    return Err(ModelError::ShapeMismatch(format!(
                        "parameter {name}: expected {shape:?}, stored {:?}",
                        t.dims()
                    )));
                }
                self.from_source += 1;
                t.to_dtype(DType::F32)?.contiguous()?
            }
            None if self.strict => {
                return Err(ModelError::ShapeMismatch(format!("parameter {name} missing from stored weights")));
            }
            None => {
                self.from_init += 1;
                match fallback {
                    Fallback::Init(init) => self.sample(shape, init)?,
                    Fallback::Value(t) => t.to_dtype(DType::F32)?.copy()?,
                }
            }
        };
        let var = Var::from_tensor(&value)?;
        let tensor = var.as_tensor().clone();
        if trainable {
            self.trainable.push((name.to_string(), var.clone()));
        }
        self.varmap.data().lock().unwrap().insert(name.to_string(), var);
        Ok(tensor)
    }

    fn sample(&mut self, shape: &[usize], init: Init) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values: Vec<f32> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Const(c) => vec![c; n],
            Init::Uniform(a) => (0..n).map(|_| self.rng.gen_range(-a..=a)).collect(),
            Init::Normal(std) => {
                let d = Normal::new(0.0f32, std).map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut self.rng)).collect()
            }
            Init::GlorotUniform { fan_in, fan_out } => {
                let a = (6.0 / (fan_in + fan_out) as f32).sqrt();
                (0..n).map(|_| self.rng.gen_range(-a..=a)).collect()
            }
        };
        Ok(Tensor::from_vec(values, shape, &self.device)?)
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.trainable.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.varmap
            .data()
            .lock()
            .unwrap()
            .values()
            .map(|v| v.elem_count())
            .sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Deep copy of every parameter value.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        let data = self.varmap.data().lock().unwrap();
        data.iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<()> {
        let data = self.varmap.data().lock().unwrap();
        for (k, v) in data.iter() {
            let t = snapshot
                .get(k)
                .ok_or_else(|| ModelError::ShapeMismatch(format!("snapshot lacks {k}")))?;
            v.set(t)?;
        }
        Ok(())
    }

    /// Writes all parameters as safetensors (via a temporary file and rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("safetensors.tmp");
        self.varmap.save(&tmp)?;
        std::fs::rename(&tmp, path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Every parameter name with its shape, sorted by name.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let data = self.varmap.data().lock().unwrap();
        let mut v: Vec<_> = data.iter().map(|(k, t)| (k.clone(), t.dims().to_vec())).collect();
        v.sort();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let mut a = ParamStore::new(3);
        let mut b = ParamStore::new(3);
        let ta = a.get("w", &[4, 5], Init::GlorotUniform { fan_in: 5, fan_out: 4 }, true).unwrap();
        let tb = b.get("w", &[4, 5], Init::GlorotUniform { fan_in: 5, fan_out: 4 }, true).unwrap();
        assert_eq!(ta.to_vec2::<f32>().unwrap(), tb.to_vec2::<f32>().unwrap());
        let bound = (6.0f32 / 9.0).sqrt();
        assert!(ta.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn source_values_win_and_shapes_are_checked() {
        let mut src = HashMap::new();
        src.insert("b".to_string(), Tensor::new(&[1f32, 2.0], &Device::Cpu).unwrap());
        let mut s = ParamStore::with_source(src.clone(), 0, false);
        let b = s.get("b", &[2], Init::Zeros, false).unwrap();
        assert_eq!(b.to_vec1::<f32>().unwrap(), vec![1.0, 2.0]);
        s.get("c", &[3], Init::Ones, true).unwrap();
        assert_eq!(s.provenance(), (1, 1));
        assert_eq!(s.parameter_count(), 5);
        assert_eq!(s.trainable_count(), 3);

        let mut bad = ParamStore::with_source(src.clone(), 0, false);
        assert!(bad.get("b", &[3], Init::Zeros, true).is_err());
        let mut strict = ParamStore::with_source(src, 0, true);
        assert!(strict.get("zzz", &[1], Init::Zeros, true).is_err());
    }

    #[test]
    fn snapshot_restore() {
        let mut s = ParamStore::new(1);
        let w = s.get("w", &[2], Init::Uniform(1.0), true).unwrap();
        let snap = s.snapshot().unwrap();
        let before = w.to_vec1::<f32>().unwrap();
        s.trainable_vars()[0].set(&Tensor::new(&[9f32, 9.0], &Device::Cpu).unwrap()).unwrap();
        assert_eq!(w.to_vec1::<f32>().unwrap(), vec![9.0, 9.0]);
        s.restore(&snap).unwrap();
        assert_eq!(w.to_vec1::<f32>().unwrap(), before);
    }
}
