//! Parameter files and initialisation.
//!
//! Weight file layout (all integers little-endian):
//!
//! ```text
//! "MPCW" | version u8 | frac_bits u8 | tensor_count u32
//! per tensor: ndim u32 | dims u64 × ndim | data u64 × product(dims)
//! ```
//!
//! Tensors are stored in layer order, weight before bias.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::spec::ModelGraph;
use crate::ring::{FixedPointConfig, RingTensor};

pub const WEIGHT_MAGIC: &[u8; 4] = b"MPCW";
pub const WEIGHT_VERSION: u8 = 1;

/// Plaintext parameters as real numbers: `(shape, values)` pairs in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatParams {
    pub tensors: Vec<(Vec<usize>, Vec<f64>)>,
}

impl FloatParams {
    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases alike.
    pub fn init(graph: &ModelGraph, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for layer in graph.layers() {
            if let (Some((ws, bs)), Some(fan_in)) = (layer.param_shapes(), layer.fan_in()) {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for shape in [ws, bs] {
                    let n: usize = shape.iter().product();
                    let vals = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                    tensors.push((shape, vals));
                }
            }
        }
        FloatParams { tensors }
    }

    pub fn encode(&self, fixed: FixedPointConfig) -> Result<Vec<RingTensor>> {
        self.tensors.iter().map(|(s, v)| fixed.encode_tensor(s, v)).collect()
    }

    pub fn decode(tensors: &[RingTensor], fixed: FixedPointConfig) -> Self {
        FloatParams { tensors: tensors.iter().map(|t| (t.shape().to_vec(), fixed.decode_tensor(t))).collect() }
    }

    /// Check the tensors fit a model's parameter shapes.
    pub fn check(&self, graph: &ModelGraph) -> Result<()> {
        check_shapes(graph, self.tensors.iter().map(|(s, _)| s.as_slice()))
    }
}

pub fn check_shapes<'a>(graph: &ModelGraph, shapes: impl Iterator<Item = &'a [usize]>) -> Result<()> {
    let want: Vec<Vec<usize>> = graph.param_shapes().into_iter().flat_map(|(w, b)| [w, b]).collect();
    let got: Vec<Vec<usize>> = shapes.map(<[usize]>::to_vec).collect();
    if want != got {
        return Err(Error::shape(format!("parameters {got:?} do not match model {want:?}")));
    }
    Ok(())
}

pub fn write_weights(path: impl AsRef<Path>, fixed: FixedPointConfig, tensors: &[RingTensor]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(WEIGHT_MAGIC)?;
    f.write_all(&[WEIGHT_VERSION, fixed.frac_bits() as u8])?;
    f.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        f.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            f.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format("weight file truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::format("weight file truncated"))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<(FixedPointConfig, Vec<RingTensor>)> {
    let bytes = std::fs::read(path)?;
    parse_weights(&bytes)
}

pub fn parse_weights(bytes: &[u8]) -> Result<(FixedPointConfig, Vec<RingTensor>)> {
    let mut r = bytes;
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(|_| Error::format("weight file truncated"))?;
    if &head[..4] != WEIGHT_MAGIC {
        return Err(Error::format("bad weight file magic"));
    }
    if head[4] != WEIGHT_VERSION {
        return Err(Error::format(format!("unsupported weight file version {}", head[4])));
    }
    let fixed = FixedPointConfig::new(u32::from(head[5]))?;
    let count = read_u32(&mut r)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let ndim = read_u32(&mut r)?;
        if ndim > 8 {
            return Err(Error::format(format!("tensor with {ndim} dimensions")));
        }
        let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::format("tensor too large"))?;
        if n.checked_mul(8).is_none_or(|b| b > r.len()) {
            return Err(Error::format("weight file truncated"));
        }
        let data = (0..n).map(|_| read_u64(&mut r)).collect::<Result<Vec<_>>>()?;
        tensors.push(RingTensor::new(shape, data)?);
    }
    if !r.is_empty() {
        return Err(Error::format(format!("{} trailing bytes in weight file", r.len())));
    }
    Ok((fixed, tensors))
}

/// Re-encode ring tensors from one fixed-point precision to another.
pub fn convert_precision(tensors: &[RingTensor], from: FixedPointConfig, to: FixedPointConfig) -> Result<Vec<RingTensor>> {
    FloatParams::decode(tensors, from).encode(to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::lenet;

    #[test]
    fn init_respects_fan_in_bounds() {
        let g = lenet();
        let p = FloatParams::init(&g, 1);
        p.check(&g).unwrap();
        let (shape, vals) = &p.tensors[0];
        assert_eq!(shape, &vec![6, 1, 5, 5]);
        assert!(vals.iter().all(|v| v.abs() < 0.2));
        assert_eq!(FloatParams::init(&g, 1), p);
        assert_ne!(FloatParams::init(&g, 2), p);
    }

    #[test]
    fn weight_file_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let fixed = FixedPointConfig::default();
        let tensors = vec![
            RingTensor::new(vec![2, 3], vec![1, 2, 3, 4, 5, u64::MAX]).unwrap(),
            RingTensor::from_vec(vec![7]),
        ];
        write_weights(&path, fixed, &tensors).unwrap();
        let (f2, t2) = read_weights(&path).unwrap();
        assert_eq!((f2, t2), (fixed, tensors));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        assert!(matches!(parse_weights(&bytes), Err(Error::Format(_))));
        let bytes = std::fs::read(&path).unwrap();
        assert!(matches!(parse_weights(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    }

    #[test]
    fn precision_conversion() {
        let hi = FixedPointConfig::new(20).unwrap();
        let lo = FixedPointConfig::new(10).unwrap();
        let t = hi.encode_tensor(&[2], &[1.5, -0.25]).unwrap();
        let c = convert_precision(&[t], hi, lo).unwrap();
        assert_eq!(lo.decode_tensor(&c[0]), vec![1.5, -0.25]);
    }
}
