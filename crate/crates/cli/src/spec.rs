use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use riskbo::acquire::OptimizerConfig;
use riskbo::bench::{ProblemName, ZMode};
use riskbo::lacing::{LvMode, LvSearchConfig};
use riskbo::risk::PinballConfig;
use riskbo::surrogate::LnsoConfig;
use riskbo::vucb::{AcqMode, BetaSpec, RecommendMode, RunConfig};

pub const OUT_ENV: &str = "RISKBO_OUT";
pub const DEFAULT_OUT_ROOT: &str = "riskbo-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    VucbUnif,
    VucbProb,
    #[serde(rename = "stableopt")]
    StableOpt,
    Random,
    EnvSampled,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::VucbUnif, Algorithm::VucbProb, Algorithm::StableOpt, Algorithm::Random, Algorithm::EnvSampled];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::VucbUnif => "vucb-unif",
            Algorithm::VucbProb => "vucb-prob",
            Algorithm::StableOpt => "stableopt",
            Algorithm::Random => "random",
            Algorithm::EnvSampled => "env-sampled",
        }
    }

    fn from_acq(acq: AcqMode, lv_mode: Option<LvMode>) -> Algorithm {
        match (acq, lv_mode) {
            (AcqMode::Vucb, Some(LvMode::Uniform)) => Algorithm::VucbUnif,
            (AcqMode::Vucb, _) => Algorithm::VucbProb,
            (AcqMode::StableOpt, _) => Algorithm::StableOpt,
            (AcqMode::Random, _) => Algorithm::Random,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.as_str() == s).with_context(|| {
            let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.as_str()).collect();
            format!("unknown algorithm `{s}`; valid names are {}", names.join(", "))
        })
    }
}

/// `beta` accepts `"practical"`, `"theoretical"` or a number (a constant β).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaChoice {
    Practical,
    Theoretical,
    Constant(f64),
}

impl FromStr for BetaChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "practical" => Ok(BetaChoice::Practical),
            "theoretical" => Ok(BetaChoice::Theoretical),
            _ => s
                .parse::<f64>()
                .map(BetaChoice::Constant)
                .map_err(|_| anyhow::anyhow!("beta must be `practical`, `theoretical` or a number, got `{s}`")),
        }
    }
}

impl Serialize for BetaChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaChoice::Practical => s.serialize_str("practical"),
            BetaChoice::Theoretical => s.serialize_str("theoretical"),
            BetaChoice::Constant(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for BetaChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Value(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Value(v) => Ok(BetaChoice::Constant(v)),
        }
    }
}

fn from_str_de<'de, D, T>(d: D) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: fmt::Display,
{
    String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
}

fn display_ser<S: Serializer, T: fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn default_alpha() -> f64 {
    0.1
}

fn default_t() -> usize {
    60
}

fn default_repeats() -> usize {
    10
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::VucbProb, Algorithm::VucbUnif, Algorithm::Random]
}

fn default_beta() -> BetaChoice {
    BetaChoice::Practical
}

fn default_beta_b() -> f64 {
    1.0
}

fn default_beta_delta() -> f64 {
    0.1
}

fn default_refit() -> usize {
    3
}

fn default_true() -> bool {
    true
}

fn default_restarts() -> usize {
    3
}

fn default_env_samples() -> usize {
    100
}

/// An experiment: one problem, several algorithms, `repeats` seeds each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(deserialize_with = "from_str_de", serialize_with = "display_ser")]
    pub problem: ProblemName,
    #[serde(deserialize_with = "from_str_de", serialize_with = "display_ser")]
    pub z_mode: ZMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "T", default = "default_t")]
    pub iterations: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Explicit seeds, one per repeat; otherwise derived from `master_seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Replaces `algorithms` with the single algorithm it names.
    #[serde(default)]
    pub acq: Option<AcqMode>,
    /// Lacing-value rule when `acq = "vucb"`.
    #[serde(default)]
    pub lv_mode: Option<LvMode>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub n_init: Option<usize>,
    #[serde(default = "default_beta")]
    pub beta: BetaChoice,
    #[serde(rename = "beta_B", default = "default_beta_b")]
    pub beta_b: f64,
    #[serde(default = "default_beta_delta")]
    pub beta_delta: f64,
    #[serde(default = "default_refit")]
    pub refit_every: usize,
    #[serde(default = "default_recommend")]
    pub recommend: RecommendMode,
    #[serde(default = "default_true")]
    pub fit_hyper: bool,
    #[serde(default = "default_restarts")]
    pub hyper_restarts: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Environment draws per iteration for `env-sampled`.
    #[serde(default = "default_env_samples")]
    pub env_samples: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub pinball: PinballConfig,
    #[serde(default)]
    pub lnso: LnsoConfig,
    #[serde(default)]
    pub lv_search: LvSearchConfig,
}

fn default_recommend() -> RecommendMode {
    RecommendMode::MeanVar
}

/// Command-line values that take precedence over the spec file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub iterations: Option<usize>,
    pub repeats: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub acq: Option<AcqMode>,
    pub lv_mode: Option<LvMode>,
    pub beta: Option<BetaChoice>,
    pub beta_b: Option<f64>,
    pub beta_delta: Option<f64>,
    pub refit_every: Option<usize>,
    pub n_init: Option<usize>,
    pub env_samples: Option<usize>,
    pub pinball_iters: Option<usize>,
    pub pinball_batch: Option<usize>,
    pub pinball_step: Option<f64>,
    pub lnso_radius: Option<f64>,
    pub lnso_t_v: Option<usize>,
    pub lnso_t_g: Option<usize>,
    pub lnso_gamma_x: Option<f64>,
    pub lnso_gamma_g: Option<f64>,
    pub lnso_n_z: Option<usize>,
    pub lnso_n_x: Option<usize>,
    pub lnso_trigger: Option<f64>,
    pub workers: Option<usize>,
    pub master_seed: Option<u64>,
    pub output: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                anyhow::anyhow!("invalid spec: {inner}")
            } else {
                anyhow::anyhow!("invalid spec at `{path}`: {inner}")
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        set(&mut self.alpha, o.alpha);
        set(&mut self.iterations, o.iterations);
        set(&mut self.repeats, o.repeats);
        set(&mut self.algorithms, o.algorithms.clone());
        if o.acq.is_some() {
            self.acq = o.acq;
        }
        if o.lv_mode.is_some() {
            self.lv_mode = o.lv_mode;
        }
        set(&mut self.beta, o.beta);
        set(&mut self.beta_b, o.beta_b);
        set(&mut self.beta_delta, o.beta_delta);
        set(&mut self.refit_every, o.refit_every);
        if o.n_init.is_some() {
            self.n_init = o.n_init;
        }
        set(&mut self.env_samples, o.env_samples);
        set(&mut self.pinball.iters, o.pinball_iters);
        set(&mut self.pinball.batch, o.pinball_batch);
        set(&mut self.pinball.step, o.pinball_step);
        set(&mut self.lnso.radius, o.lnso_radius);
        set(&mut self.lnso.t_v, o.lnso_t_v);
        set(&mut self.lnso.t_g, o.lnso_t_g);
        set(&mut self.lnso.gamma_x, o.lnso_gamma_x);
        set(&mut self.lnso.gamma_g, o.lnso_gamma_g);
        set(&mut self.lnso.n_z, o.lnso_n_z);
        set(&mut self.lnso.n_x, o.lnso_n_x);
        if o.lnso_trigger.is_some() {
            self.lnso.trigger = o.lnso_trigger;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        set(&mut self.master_seed, o.master_seed);
        if o.output.is_some() {
            self.output = o.output.clone();
        }
        if self.acq.is_some() {
            self.algorithms = self.selected_algorithms();
        }
    }

    /// The algorithms that will run, after `acq` is taken into account.
    pub fn selected_algorithms(&self) -> Vec<Algorithm> {
        match self.acq {
            Some(acq) => vec![Algorithm::from_acq(acq, self.lv_mode)],
            None => self.algorithms.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha: must lie in (0, 1), got {}", self.alpha);
        }
        if self.repeats == 0 {
            bail!("repeats: must be at least 1");
        }
        if self.algorithms.is_empty() {
            bail!("algorithms: list is empty");
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.repeats {
                bail!("seeds: {} given for {} repeats", seeds.len(), self.repeats);
            }
        }
        if self.workers == Some(0) {
            bail!("workers: must be at least 1");
        }
        if self.env_samples == 0 {
            bail!("env_samples: must be at least 1");
        }
        let needs_atoms = self.algorithms.contains(&Algorithm::StableOpt) || self.algorithms.contains(&Algorithm::EnvSampled);
        if needs_atoms && self.z_mode != ZMode::Discrete {
            bail!("algorithms: stableopt and env-sampled need z_mode = \"discrete\"");
        }
        self.run_config(Algorithm::VucbProb, 0).validate().context("run settings")?;
        Ok(())
    }

    /// Seed of repeat `r`: explicit, or a counter-based split of the
    /// master seed. Every algorithm shares the seed of a repeat.
    pub fn seed(&self, r: usize) -> u64 {
        match &self.seeds {
            Some(s) => s[r],
            None => split_seed(self.master_seed, r as u64),
        }
    }

    pub fn beta_spec(&self) -> BetaSpec {
        match self.beta {
            BetaChoice::Practical => BetaSpec::Practical,
            BetaChoice::Theoretical => BetaSpec::Theoretical { rkhs_bound: self.beta_b, delta: self.beta_delta },
            BetaChoice::Constant(value) => BetaSpec::Constant { value },
        }
    }

    pub fn run_config(&self, alg: Algorithm, seed: u64) -> RunConfig {
        let (acq, lv_mode) = match alg {
            Algorithm::VucbUnif => (AcqMode::Vucb, LvMode::Uniform),
            Algorithm::VucbProb | Algorithm::EnvSampled => (AcqMode::Vucb, LvMode::MaxMass),
            Algorithm::StableOpt => (AcqMode::StableOpt, LvMode::MaxMass),
            Algorithm::Random => (AcqMode::Random, LvMode::MaxMass),
        };
        RunConfig {
            iterations: self.iterations,
            seed,
            n_init: self.n_init,
            lv_mode,
            acq,
            beta: self.beta_spec(),
            refit_every: self.refit_every,
            recommend: self.recommend,
            fit_hyper: self.fit_hyper,
            hyper_init: None,
            hyper_restarts: self.hyper_restarts,
            standardize: self.standardize,
            optimizer: self.optimizer,
            pinball: self.pinball,
            lnso: self.lnso,
            lv_search: self.lv_search,
        }
    }

    /// `output`, else `$RISKBO_OUT/<name>`, else `riskbo-out/<name>`.
    pub fn output_dir(&self, name: &str) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
        root.join(name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// SplitMix64 applied to `master + (counter + 1) · golden`.
pub fn split_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
