//! Run configuration, read from a single TOML file. Every section and field
//! is optional and falls back to the defaults in [`DEFAULT_CONFIG`].

use serde::{Deserialize, Serialize};

use crate::datagen::SynthConfig;
use crate::denoiser::{DenoiserHyper, TrainConfig};
use crate::error::{Error, Result};
use crate::forward::ContagionParam;
use crate::graph::Condition;
use crate::guidance::ClassifierTrainConfig;
use crate::optim::AdamConfig;
use crate::sampler::GuidanceOptions;
use crate::schedule::{NoiseSchedule, ScheduleConfig};

pub const CONFIG_VERSION: u32 = 1;

/// The default configuration with every field spelled out.
pub const DEFAULT_CONFIG: &str = r#"version = 1

# Synthetic corpus (gen-data).
[data]
num_graphs = 200
n_min = 6
n_max = 12
rho_target = 0.2   # phi correlation between the two condition bits
p_in = 0.6         # edge probability when endpoints agree on both bits
p_out = 0.1        # edge probability otherwise
base_rate = 0.5    # marginal probability of satisfying a condition
seed = 0

# Noise schedule: beta_t from beta_min to beta_max over `steps` steps.
[schedule]
steps = 50
beta_min = 0.02
beta_max = 0.6
shape = "linear"   # or "cosine"

[denoiser]
rounds = 2         # message-passing rounds
hidden = 32
contagion_p = 0.8  # in (0.5, 1)

[train]
steps = 3000
batch_size = 8
lambda = 1.0       # weight of the edge loss
seed = 0

[train.adam]
lr = 0.001
beta1 = 0.9
beta2 = 0.999
eps = 1e-8

[classifier]
outer = "c2"       # condition guided first
steps = 1500
batch_size = 16
hidden = [32]
seed = 0

[classifier.adam]
lr = 0.005
beta1 = 0.9
beta2 = 0.999
eps = 1e-8

[sample]
num_graphs = 200
seed = 100
trace = false
gamma = 1.0                  # guidance strength
hard_gate = false            # inner guidance only when the outer classifier fires
guide_reconstruction = true  # also guide the final draw
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSection {
    pub rounds: usize,
    pub hidden: usize,
    pub contagion_p: f64,
}

impl Default for DenoiserSection {
    fn default() -> Self {
        let h = DenoiserHyper::default();
        DenoiserSection {
            rounds: h.rounds,
            hidden: h.hidden,
            contagion_p: h.contagion_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub outer: Condition,
    pub steps: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierTrainConfig::default();
        ClassifierSection {
            outer: Condition::C2,
            steps: c.steps,
            batch_size: c.batch_size,
            hidden: c.hidden,
            seed: c.seed,
            adam: c.adam,
        }
    }
}

impl ClassifierSection {
    pub fn train_config(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            hidden: self.hidden.clone(),
            seed: self.seed,
            adam: self.adam.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub num_graphs: usize,
    pub seed: u64,
    pub trace: bool,
    pub gamma: f64,
    pub hard_gate: bool,
    pub guide_reconstruction: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        let g = GuidanceOptions::default();
        SampleSection {
            num_graphs: 200,
            seed: 100,
            trace: false,
            gamma: g.gamma,
            hard_gate: g.hard_gate,
            guide_reconstruction: g.guide_reconstruction,
        }
    }
}

impl SampleSection {
    pub fn guidance(&self) -> GuidanceOptions {
        GuidanceOptions {
            gamma: self.gamma,
            hard_gate: self.hard_gate,
            guide_reconstruction: self.guide_reconstruction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub data: SynthConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub denoiser: DenoiserSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub sample: SampleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            data: SynthConfig::default(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserSection::default(),
            train: TrainConfig::default(),
            classifier: ClassifierSection::default(),
            sample: SampleSection::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

fn check_adam(name: &str, a: &AdamConfig) -> Result<()> {
    check(a.lr.is_finite() && a.lr >= 0.0, || format!("{name}.adam.lr must be >= 0"))?;
    check((0.0..1.0).contains(&a.beta1), || format!("{name}.adam.beta1 outside [0, 1)"))?;
    check((0.0..1.0).contains(&a.beta2), || format!("{name}.adam.beta2 outside [0, 1)"))?;
    check(a.eps.is_finite() && a.eps > 0.0, || format!("{name}.adam.eps must be > 0"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        // Check the version before the shape so old files get a clear error.
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Format(format!("config: {e}")))?;
        let found = raw
            .get("version")
            .and_then(|v| v.as_integer())
            .ok_or_else(|| Error::Format("config: missing integer `version`".into()))?;
        if found != CONFIG_VERSION as i64 {
            return Err(Error::Version {
                found: found.max(0) as u32,
                expected: CONFIG_VERSION,
            });
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        NoiseSchedule::from_config(&self.schedule)?;
        check(self.schedule.beta_max < 1.0, || "schedule.beta_max must be < 1".into())?;
        check(self.denoiser.rounds >= 1, || "denoiser.rounds must be >= 1".into())?;
        check(self.denoiser.hidden >= 1, || "denoiser.hidden must be >= 1".into())?;
        ContagionParam::new(self.denoiser.contagion_p)?;
        check(self.train.batch_size >= 1, || "train.batch_size must be >= 1".into())?;
        check(self.train.lambda.is_finite() && self.train.lambda >= 0.0, || {
            "train.lambda must be >= 0".into()
        })?;
        check_adam("train", &self.train.adam)?;
        check(self.classifier.batch_size >= 1, || "classifier.batch_size must be >= 1".into())?;
        check(self.classifier.hidden.iter().all(|&h| h >= 1), || {
            "classifier.hidden widths must be >= 1".into()
        })?;
        check_adam("classifier", &self.classifier.adam)?;
        check(self.sample.num_graphs >= 1, || "sample.num_graphs must be >= 1".into())?;
        check(self.sample.gamma.is_finite() && self.sample.gamma >= 0.0, || {
            "sample.gamma must be finite and >= 0".into()
        })
    }

    pub fn hyper(&self) -> DenoiserHyper {
        DenoiserHyper {
            rounds: self.denoiser.rounds,
            hidden: self.denoiser.hidden,
            contagion_p: self.denoiser.contagion_p,
            steps: self.schedule.steps,
        }
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::from_config(&self.schedule)
    }
}
