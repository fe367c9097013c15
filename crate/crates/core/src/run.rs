//! Run configuration files and the training loop built on them.
//!
//! A config is flat `key = value` text; `#` starts a comment. Unset keys
//! keep their defaults, unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::conditioning::DEFAULT_BINS;
use crate::data::{
    generate_toy, load_cifar10, load_manifest_dataset, LabeledSample, ToyDatasetSpec, ToyKind,
};
use crate::diffusion::{training_step, Mode, StepStats};
use crate::error::{Error, Result};
use crate::model::{AcDiffModel, ModelConfig};
use crate::rng::Rng;
use crate::schedule::{BaseScheduleConfig, ScheduleKind};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Toy(ToyKind),
    /// CIFAR-10 binary batch file.
    Cifar10(PathBuf),
    /// `path,label` manifest of PGM images.
    Manifest(PathBuf),
}

/// Which half of a dataset to load. Toy datasets draw the two from
/// independent streams; file datasets serve the same samples for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    HeldOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub num_classes: usize,
    pub data_dim: usize,
    pub samples_per_class: usize,
    /// Caps how many records are read from file datasets; 0 reads all.
    pub subset: usize,
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Toy(ToyKind::TwoMoons2d),
            num_classes: 3,
            data_dim: 2,
            samples_per_class: 200,
            subset: 0,
            model: ModelConfig {
                num_classes: 3,
                data_dim: 2,
                d_emb: 64,
                hidden: 32,
                hidden_denoiser: 128,
                d_time: 64,
                bins: DEFAULT_BINS,
                schedule: BaseScheduleConfig::default(),
                clip_x0: None,
            },
            lr: 1e-3,
            batch_size: 64,
            steps: 5000,
            seed: 0,
            mode: Mode::Adaptive,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

fn keyed(key: &str, err: Error) -> Error {
    match err {
        Error::Config { .. } => err,
        other => Error::Config {
            key: key.to_string(),
            message: other.to_string(),
        },
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut dataset_name = None;
        let mut dataset_path = None;
        let mut data_dim = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: line.to_string(),
                message: format!("line {} is not `key = value`", n + 1),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let m = &mut cfg.model;
            match key {
                "dataset" => dataset_name = Some(value.to_string()),
                "dataset_path" => dataset_path = Some(PathBuf::from(value)),
                "num_classes" => cfg.num_classes = parse(key, value)?,
                "data_dim" => data_dim = Some(parse::<usize>(key, value)?),
                "samples_per_class" => cfg.samples_per_class = parse(key, value)?,
                "subset" => cfg.subset = parse(key, value)?,
                "t_min" => m.schedule.t_min = parse(key, value)?,
                "t_max" => m.schedule.t_max = parse(key, value)?,
                "beta_min" => m.schedule.beta_min = parse(key, value)?,
                "beta_max" => m.schedule.beta_max = parse(key, value)?,
                "schedule" => {
                    m.schedule.kind = value.parse::<ScheduleKind>().map_err(|e| keyed(key, e))?
                }
                "bins" => m.bins = parse(key, value)?,
                "d_emb" => m.d_emb = parse(key, value)?,
                "hidden" => m.hidden = parse(key, value)?,
                "hidden_denoiser" => m.hidden_denoiser = parse(key, value)?,
                "d_time" => m.d_time = parse(key, value)?,
                "lr" => cfg.lr = parse(key, value)?,
                "batch_size" => cfg.batch_size = parse(key, value)?,
                "steps" => cfg.steps = parse(key, value)?,
                "seed" => cfg.seed = parse(key, value)?,
                "clip_x0" => {
                    m.clip_x0 = match value {
                        "none" => None,
                        v => Some(parse(key, v)?),
                    }
                }
                "mode" => cfg.mode = value.parse::<Mode>().map_err(|e| keyed(key, e))?,
                other => {
                    return Err(Error::Config {
                        key: other.to_string(),
                        message: "unknown key".into(),
                    })
                }
            }
        }
        let need_path = |kind: &str| {
            dataset_path.clone().ok_or_else(|| Error::Config {
                key: "dataset_path".into(),
                message: format!("required for dataset `{kind}`"),
            })
        };
        if let Some(name) = dataset_name {
            cfg.dataset = match name.as_str() {
                "cifar10" => DatasetSource::Cifar10(need_path("cifar10")?),
                "manifest" => DatasetSource::Manifest(need_path("manifest")?),
                toy => DatasetSource::Toy(toy.parse().map_err(|e| keyed("dataset", e))?),
            };
        }
        let implied = match &cfg.dataset {
            DatasetSource::Toy(kind) => Some(kind.data_dim()),
            DatasetSource::Cifar10(_) => Some(crate::data::CIFAR_SIDE * crate::data::CIFAR_SIDE),
            DatasetSource::Manifest(_) => None,
        };
        cfg.data_dim = match (implied, data_dim) {
            (Some(i), Some(d)) if i != d => {
                return Err(Error::Config {
                    key: "data_dim".into(),
                    message: format!("dataset implies {i}, config says {d}"),
                })
            }
            (Some(i), _) => i,
            (None, Some(d)) => d,
            (None, None) => {
                return Err(Error::Config {
                    key: "data_dim".into(),
                    message: "required for manifest datasets".into(),
                })
            }
        };
        cfg.model.data_dim = cfg.data_dim;
        cfg.model.num_classes = cfg.num_classes;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let s = &self.model.schedule;
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    key: key.into(),
                    message: msg.into(),
                })
            }
        };
        check(self.num_classes > 0, "num_classes", "must be positive")?;
        check(
            self.samples_per_class > 0,
            "samples_per_class",
            "must be positive",
        )?;
        check(
            self.lr > 0.0 && self.lr.is_finite(),
            "lr",
            "must be positive and finite",
        )?;
        check(self.batch_size > 0, "batch_size", "must be positive")?;
        check(s.beta_min > 0.0, "beta_min", "must be positive")?;
        check(
            s.beta_max > s.beta_min && s.beta_max < 1.0,
            "beta_max",
            "must lie in (beta_min, 1)",
        )?;
        check(s.t_min >= 1, "t_min", "must be at least 1")?;
        check(s.t_max > s.t_min, "t_max", "must exceed t_min")?;
        check(self.model.bins >= 2, "bins", "must be at least 2")?;
        if let Some(c) = self.model.clip_x0 {
            check(
                c > 0.0 && c.is_finite(),
                "clip_x0",
                "must be positive or `none`",
            )?;
        }
        for (key, v) in [
            ("d_emb", self.model.d_emb),
            ("hidden", self.model.hidden),
            ("hidden_denoiser", self.model.hidden_denoiser),
            ("d_time", self.model.d_time),
            ("data_dim", self.data_dim),
        ] {
            check(v > 0, key, "must be positive")?;
        }
        if let DatasetSource::Toy(ToyKind::Shapes16x16) | DatasetSource::Cifar10(_) = self.dataset {
            check(
                self.data_dim >= 9,
                "data_dim",
                "image datasets need at least 3x3 pixels",
            )?;
        }
        if matches!(self.dataset, DatasetSource::Cifar10(_)) {
            check(
                self.num_classes >= 10,
                "num_classes",
                "CIFAR-10 has 10 classes",
            )?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let (name, path) = match &self.dataset {
            DatasetSource::Toy(k) => (k.to_string(), None),
            DatasetSource::Cifar10(p) => ("cifar10".to_string(), Some(p)),
            DatasetSource::Manifest(p) => ("manifest".to_string(), Some(p)),
        };
        let _ = writeln!(out, "dataset = {name}");
        if let Some(p) = path {
            let _ = writeln!(out, "dataset_path = {}", p.display());
        }
        let fields: [(&str, String); 20] = [
            ("num_classes", self.num_classes.to_string()),
            ("data_dim", self.data_dim.to_string()),
            ("samples_per_class", self.samples_per_class.to_string()),
            ("subset", self.subset.to_string()),
            ("t_min", m.schedule.t_min.to_string()),
            ("t_max", m.schedule.t_max.to_string()),
            ("beta_min", format!("{:?}", m.schedule.beta_min)),
            ("beta_max", format!("{:?}", m.schedule.beta_max)),
            ("schedule", m.schedule.kind.to_string()),
            ("bins", m.bins.to_string()),
            ("d_emb", m.d_emb.to_string()),
            ("hidden", m.hidden.to_string()),
            ("hidden_denoiser", m.hidden_denoiser.to_string()),
            ("d_time", m.d_time.to_string()),
            (
                "clip_x0",
                m.clip_x0.map_or("none".to_string(), |c| format!("{c:?}")),
            ),
            ("lr", format!("{:?}", self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load_dataset(&self, split: Split) -> Result<Vec<LabeledSample>> {
        let subset = (self.subset > 0).then_some(self.subset);
        let data = match &self.dataset {
            DatasetSource::Toy(kind) => {
                let spec = ToyDatasetSpec::graded(*kind, self.num_classes, self.samples_per_class);
                let stream = match split {
                    Split::Train => 0,
                    Split::HeldOut => 1,
                };
                generate_toy(&spec, &mut Rng::stream(self.seed, stream))?
            }
            DatasetSource::Cifar10(p) => load_cifar10(p, subset)?,
            DatasetSource::Manifest(p) => {
                let mut d = load_manifest_dataset(p)?;
                if let Some(n) = subset {
                    d.truncate(n);
                }
                d
            }
        };
        if data.is_empty() {
            return Err(Error::contract("dataset is empty"));
        }
        for s in &data {
            if s.x_0.len() != self.data_dim {
                return Err(Error::Config {
                    key: "data_dim".into(),
                    message: format!("dataset sample has {} values", s.x_0.len()),
                });
            }
            if s.prompt.class_id >= self.num_classes {
                return Err(Error::Config {
                    key: "num_classes".into(),
                    message: format!("dataset contains class {}", s.prompt.class_id),
                });
            }
        }
        Ok(data)
    }
}

/// Trains a freshly initialized model for `cfg.steps` steps on the training
/// split, calling `log` after each step. Returns the model and per-step losses.
pub fn train(
    cfg: &RunConfig,
    mut log: impl FnMut(usize, &StepStats),
) -> Result<(AcDiffModel, Vec<f64>)> {
    cfg.validate()?;
    let data = cfg.load_dataset(Split::Train)?;
    let mut model = AcDiffModel::new(cfg.model.clone(), cfg.seed)?;
    let mut rng = Rng::stream(cfg.seed, 2);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&LabeledSample> = (0..cfg.batch_size)
            .map(|_| &data[rng.below(data.len() as u64) as usize])
            .collect();
        let stats = training_step(&mut model, &batch, &mut rng, cfg.lr, cfg.mode)?;
        log(step, &stats);
        losses.push(stats.loss);
    }
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        assert_eq!(
            RunConfig::parse("# nothing\n\n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig::parse(
            "dataset = shapes_16x16 # images\nnum_classes=5\nschedule = sigmoid\nlr = 0.05\nmode = adaptive_T_fixed_beta\nbeta_max=0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.data_dim, 256);
        assert_eq!(cfg.model.num_classes, 5);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let key_of = |text: &str| match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of("lr = fast"), "lr");
        assert_eq!(key_of("lr = -1"), "lr");
        assert_eq!(key_of("wat = 1"), "wat");
        assert_eq!(key_of("t_max = 10\nt_min = 10"), "t_max");
        assert_eq!(key_of("schedule = cosine"), "schedule");
        assert_eq!(key_of("mode = ddim"), "mode");
        assert_eq!(key_of("data_dim = 3"), "data_dim");
        assert_eq!(key_of("dataset = cifar10"), "dataset_path");
        assert_eq!(
            key_of("dataset = manifest\ndataset_path = m.csv"),
            "data_dim"
        );
        assert_eq!(key_of("beta_max = 1.5"), "beta_max");
        assert_eq!(key_of("just words"), "just words");
    }

    #[test]
    fn splits_differ_for_toys() {
        let cfg = RunConfig {
            samples_per_class: 3,
            ..Default::default()
        };
        let a = cfg.load_dataset(Split::Train).unwrap();
        let b = cfg.load_dataset(Split::HeldOut).unwrap();
        assert_eq!(a.len(), 9);
        assert_ne!(a, b);
    }

    #[test]
    fn short_training_is_reproducible() {
        let cfg = RunConfig {
            samples_per_class: 10,
            steps: 3,
            batch_size: 4,
            ..Default::default()
        };
        let (m1, l1) = train(&cfg, |_, _| {}).unwrap();
        let (m2, l2) = train(&cfg, |_, _| {}).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(l1, l2);
        assert_eq!(l1.len(), 3);
    }
}
