//! Model checkpoints: a config echo, one or two named view models with
//! every parameter tensor, and the batch-norm running statistics needed to
//! reproduce inference bit-for-bit. Little-endian, versioned.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bytes::{
    expect_header, read_f64, read_string, read_u32, read_u64, read_u8, write_f64, write_string,
    write_u32, write_u64,
};
use crate::error::{Error, Result};
use crate::models::{Projection, ViewModel};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CVHK";
const VERSION: u8 = 1;
const KIND_IMAGE: u8 = 0;
const KIND_TEXT: u8 = 1;

pub struct Checkpoint {
    /// Human-readable run-configuration echo, stored verbatim.
    pub meta: String,
    pub iteration: u64,
    pub models: Vec<(String, ViewModel)>,
}

impl Checkpoint {
    pub fn model(&self, name: &str) -> Option<&ViewModel> {
        self.models.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn take_model(&mut self, name: &str) -> Result<ViewModel> {
        let at = self
            .models
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("checkpoint holds no model named {name:?}")))?;
        Ok(self.models.swap_remove(at).1)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        write_string(&mut w, &self.meta)?;
        write_u64(&mut w, self.iteration)?;
        write_u32(&mut w, self.models.len() as u32)?;
        for (name, model) in &self.models {
            write_string(&mut w, name)?;
            let (kind, args) = shape_args(model)?;
            w.write_all(&[kind])?;
            write_u32(&mut w, args.len() as u32)?;
            for a in args {
                write_u32(&mut w, a)?;
            }
            write_u32(&mut w, model.params.len() as u32)?;
            for entry in model.params.iter() {
                write_string(&mut w, &entry.name)?;
                write_tensor(&mut w, &entry.value)?;
            }
            let bn = model.projection.bn_states();
            write_u32(&mut w, bn.len() as u32)?;
            for (name, state) in bn {
                write_string(&mut w, &name)?;
                w.write_all(&[u8::from(state.initialized)])?;
                write_tensor(&mut w, &state.running_mean)?;
                write_tensor(&mut w, &state.running_var)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        expect_header(&mut r, MAGIC, VERSION, "checkpoint")?;
        let meta = read_string(&mut r)?;
        let iteration = read_u64(&mut r)?;
        let model_count = read_u32(&mut r)? as usize;
        let mut models = Vec::with_capacity(model_count);
        for _ in 0..model_count {
            let name = read_string(&mut r)?;
            let kind = read_u8(&mut r)?;
            let arg_count = read_u32(&mut r)? as usize;
            let mut args = Vec::with_capacity(arg_count);
            for _ in 0..arg_count {
                args.push(read_u32(&mut r)? as usize);
            }
            let mut model = rebuild(kind, &args)?;

            let tensor_count = read_u32(&mut r)? as usize;
            if tensor_count != model.params.len() {
                return Err(Error::Format(format!(
                    "model {name:?} stores {tensor_count} tensors, expected {}",
                    model.params.len()
                )));
            }
            for _ in 0..tensor_count {
                let pname = read_string(&mut r)?;
                let tensor = read_tensor(&mut r)?;
                let slot = model.params.value_mut(&pname).ok_or_else(|| {
                    Error::Format(format!("model {name:?} has no parameter {pname:?}"))
                })?;
                if slot.shape() != tensor.shape() {
                    return Err(Error::Format(format!(
                        "parameter {pname:?} has shape {:?}, expected {:?}",
                        tensor.shape(),
                        slot.shape()
                    )));
                }
                *slot = tensor;
            }

            let bn_count = read_u32(&mut r)? as usize;
            let mut bn = model.projection.bn_states_mut();
            if bn_count != bn.len() {
                return Err(Error::Format(format!(
                    "model {name:?} stores {bn_count} norm states, expected {}",
                    bn.len()
                )));
            }
            for _ in 0..bn_count {
                let bname = read_string(&mut r)?;
                let initialized = read_u8(&mut r)? != 0;
                let mean = read_tensor(&mut r)?;
                let var = read_tensor(&mut r)?;
                let state = bn
                    .iter_mut()
                    .find(|(n, _)| *n == bname)
                    .map(|(_, s)| s)
                    .ok_or_else(|| {
                        Error::Format(format!("model {name:?} has no norm state {bname:?}"))
                    })?;
                if state.running_mean.shape() != mean.shape() {
                    return Err(Error::Format(format!(
                        "norm state {bname:?} has width {:?}, expected {:?}",
                        mean.shape(),
                        state.running_mean.shape()
                    )));
                }
                state.initialized = initialized;
                state.running_mean = mean;
                state.running_var = var;
            }
            drop(bn);
            models.push((name, model));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after final model".into()));
        }
        Ok(Checkpoint { meta, iteration, models })
    }
}

/// Constructor arguments recovered from parameter shapes, so the binary
/// layout stays self-describing.
fn shape_args(model: &ViewModel) -> Result<(u8, Vec<u32>)> {
    let categories = model.params.value("clf.w").shape()[1] as u32;
    match &model.projection {
        Projection::Image(_) => {
            let mut hidden = Vec::new();
            let mut feature_dim = None;
            for i in 0.. {
                match model.params.get(&format!("proj.h{i}.w")) {
                    Some(w) => {
                        if i == 0 {
                            feature_dim = Some(w.shape()[0] as u32);
                        }
                        hidden.push(w.shape()[1] as u32);
                    }
                    None => break,
                }
            }
            let dbe_w = model.params.value("proj.dbe.w").shape();
            let feature_dim = feature_dim.unwrap_or(dbe_w[0] as u32);
            let code_bits = dbe_w[1] as u32;
            let mut args = vec![feature_dim, code_bits, categories];
            args.extend(hidden);
            Ok((KIND_IMAGE, args))
        }
        Projection::Text(_) => {
            let conv1 = model.params.value("proj.conv1.k").shape();
            let conv2 = model.params.value("proj.conv2.k").shape();
            let fc = model.params.value("proj.fc.w").shape();
            let dbe = model.params.value("proj.dbe.w").shape();
            Ok((
                KIND_TEXT,
                vec![
                    conv1[1] as u32,            // glove_dim
                    (conv2[1] / conv1[0]) as u32, // max_words
                    conv1[0] as u32,
                    conv2[0] as u32,
                    fc[1] as u32,
                    dbe[1] as u32,
                    categories,
                ],
            ))
        }
    }
}

/// Fresh model of the stored architecture; every value is overwritten by
/// the stored tensors, so the init seed is irrelevant.
fn rebuild(kind: u8, args: &[usize]) -> Result<ViewModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match kind {
        KIND_IMAGE => {
            if args.len() < 3 {
                return Err(Error::Format("image model header too short".into()));
            }
            ViewModel::new_image(args[0], &args[3..], args[1], args[2], &mut rng)
        }
        KIND_TEXT => {
            if args.len() != 7 {
                return Err(Error::Format("text model header malformed".into()));
            }
            ViewModel::new_text(args[0], args[1], args[2], args[3], args[4], args[5], args[6], &mut rng)
        }
        other => Err(Error::Format(format!("unknown model kind {other}"))),
    }
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    write_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        write_u64(w, d as u64)?;
    }
    for &v in t.data() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let ndim = read_u32(r)? as usize;
    if ndim > 8 {
        return Err(Error::Format(format!("implausible tensor rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u64(r)? as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(read_f64(r)?);
    }
    Tensor::new(shape, data)
}
