//! Flat `key = value` configuration files and the run configuration shared
//! by every command.

use std::path::Path;
use std::str::FromStr;

use crate::clustering::{ClusterConfig, SeedPolicy};
use crate::error::{Error, Result};
use crate::loss::{ClassReduction, LossConfig};
use crate::synthdata::SticksConfig;
use crate::toynet::{NetConfig, TrainConfig};

/// Ordered `key = value` pairs. Blank lines and `#` comments are skipped;
/// a repeated key is an error.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(format!("line {}: duplicate key {key}", n + 1));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }
}

/// Every tunable of the toolkit in one place.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub cluster: ClusterConfig,
    /// `bandwidth` follows `delta_v` unless set explicitly.
    pub bandwidth_explicit: bool,
    pub sticks: SticksConfig,
    pub scene_count: usize,
    pub net: NetConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        Self {
            cluster: ClusterConfig::with_bandwidth(loss.delta_v),
            loss,
            bandwidth_explicit: false,
            sticks: SticksConfig::default(),
            scene_count: 1,
            net: NetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "delta_v",
    "delta_d",
    "alpha",
    "beta",
    "gamma",
    "norm",
    "class_reduction",
    "bandwidth",
    "min_cluster_size",
    "max_shift_iters",
    "shift_tolerance",
    "cluster_seed",
    "image_size",
    "stick_count_min",
    "stick_count_max",
    "stick_length",
    "stick_width",
    "count",
    "seed",
    "in_channels",
    "hidden_channels",
    "num_layers",
    "kernel_size",
    "out_dims",
    "init_seed",
    "negative_slope",
    "steps",
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "augment",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("bad value for {key}: {value:?}"))),
    }
}

impl RunConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "delta_v" => self.loss.delta_v = parse_value(key, value)?,
            "delta_d" => self.loss.delta_d = parse_value(key, value)?,
            "alpha" => self.loss.alpha = parse_value(key, value)?,
            "beta" => self.loss.beta = parse_value(key, value)?,
            "gamma" => self.loss.gamma = parse_value(key, value)?,
            "norm" => self.loss.norm = parse_value(key, value)?,
            "class_reduction" => {
                self.loss.class_reduction = match value {
                    "sum" => ClassReduction::Sum,
                    "mean" => ClassReduction::Mean,
                    _ => return Err(Error::InvalidConfig(format!("bad value for {key}: {value:?}"))),
                }
            }
            "bandwidth" => {
                self.cluster.bandwidth = parse_value(key, value)?;
                self.bandwidth_explicit = true;
            }
            "min_cluster_size" => {
                self.cluster.min_cluster_size = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "max_shift_iters" => self.cluster.max_shift_iters = parse_value(key, value)?,
            "shift_tolerance" => self.cluster.shift_tolerance = parse_value(key, value)?,
            "cluster_seed" => {
                self.cluster.seed_policy = match value {
                    "scan" => SeedPolicy::ScanOrder,
                    v => SeedPolicy::SeededRandom(parse_value(key, v)?),
                }
            }
            "image_size" => self.sticks.image_size = parse_value(key, value)?,
            "stick_count_min" => self.sticks.stick_count_min = parse_value(key, value)?,
            "stick_count_max" => self.sticks.stick_count_max = parse_value(key, value)?,
            "stick_length" => self.sticks.stick_length = parse_value(key, value)?,
            "stick_width" => self.sticks.stick_width = parse_value(key, value)?,
            "count" => self.scene_count = parse_value(key, value)?,
            "seed" => {
                let seed = parse_value(key, value)?;
                self.sticks.seed = seed;
                self.train.seed = seed;
            }
            "in_channels" => self.net.in_channels = parse_value(key, value)?,
            "hidden_channels" => self.net.hidden_channels = parse_value(key, value)?,
            "num_layers" => self.net.num_layers = parse_value(key, value)?,
            "kernel_size" => self.net.kernel_size = parse_value(key, value)?,
            "out_dims" => self.net.out_dims = parse_value(key, value)?,
            "init_seed" => self.net.weight_init_seed = parse_value(key, value)?,
            "negative_slope" => self.net.negative_slope = parse_value(key, value)?,
            "steps" => self.train.steps = parse_value(key, value)?,
            "lr" => self.train.adam.lr = parse_value(key, value)?,
            "beta1" => self.train.adam.beta1 = parse_value(key, value)?,
            "beta2" => self.train.adam.beta2 = parse_value(key, value)?,
            "epsilon" => self.train.adam.epsilon = parse_value(key, value)?,
            "augment" => self.train.augment = parse_bool(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        if !self.bandwidth_explicit {
            self.cluster.bandwidth = self.loss.delta_v;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text).map_err(Error::InvalidConfig)?;
        let mut config = Self::default();
        for (k, v) in kv.iter() {
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::format(path, m),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.cluster.validate()?;
        self.sticks.validate()?;
        self.net.validate()?;
        self.train.adam.validate()?;
        Ok(())
    }

    /// Round-trips through [`RunConfig::from_text`].
    pub fn to_text(&self) -> String {
        let l = &self.loss;
        let c = &self.cluster;
        let s = &self.sticks;
        let n = &self.net;
        let t = &self.train;
        let mut lines = vec![
            format!("delta_v = {:?}", l.delta_v),
            format!("delta_d = {:?}", l.delta_d),
            format!("alpha = {:?}", l.alpha),
            format!("beta = {:?}", l.beta),
            format!("gamma = {:?}", l.gamma),
            format!("norm = {}", l.norm),
            format!(
                "class_reduction = {}",
                match l.class_reduction {
                    ClassReduction::Sum => "sum",
                    ClassReduction::Mean => "mean",
                }
            ),
        ];
        if self.bandwidth_explicit {
            lines.push(format!("bandwidth = {:?}", c.bandwidth));
        }
        lines.push(match c.min_cluster_size {
            Some(m) => format!("min_cluster_size = {m}"),
            None => "min_cluster_size = auto".into(),
        });
        lines.push(format!("max_shift_iters = {}", c.max_shift_iters));
        lines.push(format!("shift_tolerance = {:?}", c.shift_tolerance));
        lines.push(match c.seed_policy {
            SeedPolicy::ScanOrder => "cluster_seed = scan".into(),
            SeedPolicy::SeededRandom(s) => format!("cluster_seed = {s}"),
        });
        lines.extend([
            format!("image_size = {}", s.image_size),
            format!("stick_count_min = {}", s.stick_count_min),
            format!("stick_count_max = {}", s.stick_count_max),
            format!("stick_length = {:?}", s.stick_length),
            format!("stick_width = {:?}", s.stick_width),
            format!("count = {}", self.scene_count),
            format!("seed = {}", t.seed),
            format!("in_channels = {}", n.in_channels),
            format!("hidden_channels = {}", n.hidden_channels),
            format!("num_layers = {}", n.num_layers),
            format!("kernel_size = {}", n.kernel_size),
            format!("out_dims = {}", n.out_dims),
            format!("init_seed = {}", n.weight_init_seed),
            format!("negative_slope = {:?}", n.negative_slope),
            format!("steps = {}", t.steps),
            format!("lr = {:?}", t.adam.lr),
            format!("beta1 = {:?}", t.adam.beta1),
            format!("beta2 = {:?}", t.adam.beta2),
            format!("epsilon = {:?}", t.adam.epsilon),
            format!("augment = {}", t.augment),
        ]);
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let kv = KeyValues::parse("# header\n\na = 1\n b=two # trailing\n").unwrap();
        assert_eq!(kv.iter().collect::<Vec<_>>(), vec![("a", "1"), ("b", "two")]);
        assert_eq!(kv.get("b"), Some("two"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("= 3\n").is_err());
        assert!(KeyValues::parse("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(RunConfig::from_text("delta_vv = 0.5\n"), Err(Error::InvalidConfig(_))));
        assert!(RunConfig::from_text("norm = l3\n").is_err());
    }

    #[test]
    fn bandwidth_follows_delta_v_until_set() {
        let c = RunConfig::from_text("delta_v = 0.3\n").unwrap();
        assert_eq!(c.cluster.bandwidth, 0.3);
        let c = RunConfig::from_text("bandwidth = 0.7\ndelta_v = 0.3\n").unwrap();
        assert_eq!(c.cluster.bandwidth, 0.7);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        for (k, v) in [
            ("delta_v", "0.4"),
            ("norm", "l1"),
            ("min_cluster_size", "3"),
            ("cluster_seed", "9"),
            ("seed", "17"),
            ("lr", "0.001"),
            ("augment", "true"),
            ("bandwidth", "0.45"),
            ("class_reduction", "mean"),
        ] {
            c.set(k, v).unwrap();
        }
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::from_text(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let text = RunConfig::default().to_text();
        let kv = KeyValues::parse(&text).unwrap();
        for (k, _) in kv.iter() {
            assert!(KEYS.contains(&k), "{k}");
        }
        let mut c = RunConfig::default();
        c.set("bandwidth", "0.5").unwrap();
        assert_eq!(KeyValues::parse(&c.to_text()).unwrap().iter().count(), KEYS.len());
    }
}
