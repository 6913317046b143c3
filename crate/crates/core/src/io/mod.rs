//! File formats: tensor containers, netpbm images and network checkpoints.

pub mod pnm;
pub mod tensorfile;

use std::io::Write;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::maps::EmbeddingMap;
use crate::toynet::{AdamConfig, AdamState, ConvLayer, NetConfig, NetParams};

pub use tensorfile::{TensorData, TensorFile};

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_embedding(path: &Path, emb: &EmbeddingMap) -> Result<()> {
    TensorFile::f64(&[emb.height(), emb.width(), emb.dims()], emb.as_slice().to_vec())?.write(path)
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMap> {
    let t = TensorFile::read(path)?;
    if t.dims.len() != 3 {
        return Err(Error::format(path, format!("expected 3 dims, found {}", t.dims.len())));
    }
    let values = t.to_f64().ok_or_else(|| Error::format(path, "embedding must be floating point"))?;
    EmbeddingMap::from_vec(t.dims[0] as usize, t.dims[1] as usize, t.dims[2] as usize, values)
}

const NET_CONFIG_FILE: &str = "net.cfg";
const ADAM_FILE: &str = "adam.state.dseg";

fn net_config_text(c: &NetConfig) -> String {
    format!(
        "in_channels = {}\nhidden_channels = {}\nnum_layers = {}\nkernel_size = {}\nout_dims = {}\ninit_seed = {}\nnegative_slope = {:?}\n",
        c.in_channels, c.hidden_channels, c.num_layers, c.kernel_size, c.out_dims, c.weight_init_seed, c.negative_slope
    )
}

fn parse_net_config(path: &Path, text: &str) -> Result<NetConfig> {
    let kv = KeyValues::parse(text).map_err(|m| Error::format(path, m))?;
    let mut c = NetConfig::default();
    for (key, value) in kv.iter() {
        let bad = |_| Error::format(path, format!("bad value for {key}: {value}"));
        match key {
            "in_channels" => c.in_channels = value.parse().map_err(bad)?,
            "hidden_channels" => c.hidden_channels = value.parse().map_err(bad)?,
            "num_layers" => c.num_layers = value.parse().map_err(bad)?,
            "kernel_size" => c.kernel_size = value.parse().map_err(bad)?,
            "out_dims" => c.out_dims = value.parse().map_err(bad)?,
            "init_seed" => c.weight_init_seed = value.parse().map_err(bad)?,
            "negative_slope" => {
                c.negative_slope =
                    value.parse().map_err(|_| Error::format(path, format!("bad value for {key}: {value}")))?
            }
            other => return Err(Error::format(path, format!("unknown key {other}"))),
        }
    }
    c.validate()?;
    Ok(c)
}

/// A checkpoint directory: `net.cfg`, one tensor file per named parameter,
/// and the optimizer moments under `adam.m.*` / `adam.v.*` plus
/// `adam.state.dseg` holding `[step, lr, beta1, beta2, epsilon]`.
pub fn save_checkpoint(dir: &Path, params: &NetParams, optimizer: Option<&AdamState>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(NET_CONFIG_FILE), net_config_text(params.config()).as_bytes())?;
    for (i, l) in params.layers().iter().enumerate() {
        TensorFile::f64(&l.weight_dims(), l.weight.clone())?.write(&dir.join(format!("layer{i}.weight.dseg")))?;
        TensorFile::f64(&[l.out_channels], l.bias.clone())?.write(&dir.join(format!("layer{i}.bias.dseg")))?;
    }
    if let Some(state) = optimizer {
        for ((name, t), (m, v)) in params.tensors().zip(state.m.iter().zip(&state.v)) {
            TensorFile::f64(&[t.len()], m.clone())?.write(&dir.join(format!("adam.m.{name}.dseg")))?;
            TensorFile::f64(&[t.len()], v.clone())?.write(&dir.join(format!("adam.v.{name}.dseg")))?;
        }
        let c = state.config;
        TensorFile::f64(&[5], vec![state.step as f64, c.lr, c.beta1, c.beta2, c.epsilon])?
            .write(&dir.join(ADAM_FILE))?;
    }
    Ok(())
}

fn read_f64(path: &Path, len: usize) -> Result<Vec<f64>> {
    let t = TensorFile::read(path)?;
    let v = t.to_f64().ok_or_else(|| Error::format(path, "expected floating point data"))?;
    if v.len() != len {
        return Err(Error::format(path, format!("expected {len} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn load_params(dir: &Path) -> Result<NetParams> {
    let cfg_path = dir.join(NET_CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config = parse_net_config(&cfg_path, &text)?;
    let template = NetParams::zeros(&config)?;
    let layers = template
        .layers()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(ConvLayer {
                weight: read_f64(&dir.join(format!("layer{i}.weight.dseg")), t.weight.len())?,
                bias: read_f64(&dir.join(format!("layer{i}.bias.dseg")), t.bias.len())?,
                ..t.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetParams::from_layers(&config, layers)
}

/// Optimizer state, if the checkpoint carries one.
pub fn load_optimizer(dir: &Path, params: &NetParams) -> Result<Option<AdamState>> {
    let path = dir.join(ADAM_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let s = read_f64(&path, 5)?;
    let config = AdamConfig { lr: s[1], beta1: s[2], beta2: s[3], epsilon: s[4] };
    let mut state = AdamState::new(params, config);
    state.step = s[0] as u64;
    for (k, (name, t)) in params.tensors().enumerate() {
        state.m[k] = read_f64(&dir.join(format!("adam.m.{name}.dseg")), t.len())?;
        state.v[k] = read_f64(&dir.join(format!("adam.v.{name}.dseg")), t.len())?;
    }
    Ok(Some(state))
}
