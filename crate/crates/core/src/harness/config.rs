//! Experiment configuration, loaded from JSON. Unknown keys are rejected and
//! validation errors name the offending field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blind_rx::{Derotation, InitMethod, MixingFallback, DEFAULT_CONDITION_LIMIT};
use crate::channel::{delay_union, PowerDelayProfile, DEFAULT_CARRIER_HZ};
use crate::error::{Error, Result};
use crate::waveform::SUPPORTED_ORDERS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BerSweep,
    TapError,
    Temporal,
    Utilization,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::BerSweep => "ber-sweep",
            ExperimentKind::TapError => "tap-error",
            ExperimentKind::Temporal => "temporal",
            ExperimentKind::Utilization => "utilization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    Blind,
    MrcLinear,
    MrcFft,
    Mmse,
}

impl ReceiverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::Blind => "blind",
            ReceiverKind::MrcLinear => "mrc-linear",
            ReceiverKind::MrcFft => "mrc-fft",
            ReceiverKind::Mmse => "mmse",
        }
    }

    pub fn uses_baseline_pilots(self) -> bool {
        self != ReceiverKind::Blind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Variance,
    Circularity,
    GivenTap,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Variance => "variance",
            InitKind::Circularity => "circularity",
            InitKind::GivenTap => "given-tap",
        }
    }
}

impl From<InitKind> for InitMethod {
    fn from(k: InitKind) -> Self {
        match k {
            InitKind::Variance => InitMethod::Variance,
            InitKind::Circularity => InitMethod::Circularity,
            InitKind::GivenTap => InitMethod::GivenTap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerotationKind {
    InLoop,
    PilotOnly,
    Cluster,
}

impl From<DerotationKind> for Derotation {
    fn from(k: DerotationKind) -> Self {
        match k {
            DerotationKind::InLoop => Derotation::InLoop,
            DerotationKind::PilotOnly => Derotation::PilotOnly,
            DerotationKind::Cluster => Derotation::Cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackKind {
    Error,
    PseudoInverse,
    GivenTap,
}

impl From<FallbackKind> for MixingFallback {
    fn from(k: FallbackKind) -> Self {
        match k {
            FallbackKind::Error => MixingFallback::Error,
            FallbackKind::PseudoInverse => MixingFallback::PseudoInverse,
            FallbackKind::GivenTap => MixingFallback::GivenTap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlindSettings {
    /// Defaults to 10 for one user and 20 for several.
    pub iterations: Option<usize>,
    pub mu: f64,
    pub derotate_at: usize,
    /// Defaults to variance for one user and circularity for several.
    pub init: Option<InitKind>,
    pub derotation: DerotationKind,
    /// Rotational pilots per user (`η`).
    pub pilots_per_user: usize,
    pub mixing_fallback: FallbackKind,
    pub condition_limit: f64,
}

impl Default for BlindSettings {
    fn default() -> Self {
        BlindSettings {
            iterations: None,
            mu: 0.1,
            derotate_at: 4,
            init: None,
            derotation: DerotationKind::InLoop,
            pilots_per_user: 1,
            mixing_fallback: FallbackKind::Error,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalSettings {
    pub speeds_kmh: Vec<f64>,
    /// Symbol times after the cold-start symbol, in milliseconds.
    pub times_ms: Vec<f64>,
    pub carrier_hz: f64,
    /// Upper bound of the iteration-count search.
    pub max_iterations: usize,
}

impl Default for TemporalSettings {
    fn default() -> Self {
        TemporalSettings {
            speeds_kmh: vec![5.0, 10.0],
            times_ms: vec![5.0, 10.0],
            carrier_hz: DEFAULT_CARRIER_HZ,
            max_iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilizationSettings {
    /// Smallest and largest baseline pilot totals searched.
    pub min_pilots: usize,
    pub max_pilots: usize,
    /// Search granularity; rounded up to a multiple of the user count.
    pub step: usize,
}

impl Default for UtilizationSettings {
    fn default() -> Self {
        UtilizationSettings {
            min_pilots: 8,
            max_pilots: 512,
            step: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TapErrorSettings {
    pub estimators: Vec<InitKind>,
}

impl Default for TapErrorSettings {
    fn default() -> Self {
        TapErrorSettings {
            estimators: vec![InitKind::Variance, InitKind::Circularity],
        }
    }
}

mod snr_list {
    //! SNR values as JSON numbers, with the string `"inf"` for a noiseless
    //! point.
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Value {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Value> = v
            .iter()
            .map(|&x| if x == f64::INFINITY { Value::Text("inf".into()) } else { Value::Num(x) })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Value>::deserialize(d)?
            .into_iter()
            .map(|v| match v {
                Value::Num(x) => Ok(x),
                Value::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Value::Text(t) => Err(serde::de::Error::custom(format!(
                    "SNR must be a number or \"inf\", got {t:?}"
                ))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Experiment id used in the output and the seed derivation; defaults to
    /// the kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::n_r")]
    pub n_r: usize,
    #[serde(default = "defaults::m")]
    pub m: usize,
    #[serde(default = "defaults::n_u")]
    pub n_u: usize,
    /// Receiver delay grid; defaults to the union of the profiles' delays.
    #[serde(default)]
    pub delays: Option<Vec<usize>>,
    /// Profile names or JSON paths, one per user or a single one for all.
    #[serde(default = "defaults::pdp")]
    pub pdp: Vec<String>,
    /// Exponential receive-correlation coefficient.
    #[serde(default)]
    pub spatial_r: f64,
    #[serde(default = "defaults::snr_db", with = "snr_list")]
    pub snr_db: Vec<f64>,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::receivers")]
    pub receivers: Vec<ReceiverKind>,
    #[serde(default)]
    pub blind: BlindSettings,
    /// Total baseline pilots over all users.
    #[serde(default = "defaults::baseline_pilots")]
    pub baseline_pilots: usize,
    /// FFT-interpolation delay window; defaults to the channel length.
    #[serde(default)]
    pub fft_l_max: Option<usize>,
    #[serde(default)]
    pub temporal: TemporalSettings,
    #[serde(default)]
    pub utilization: UtilizationSettings,
    #[serde(default)]
    pub tap_error: TapErrorSettings,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
}

mod defaults {
    use super::ReceiverKind;

    pub fn n() -> usize {
        1024
    }
    pub fn n_r() -> usize {
        64
    }
    pub fn m() -> usize {
        64
    }
    pub fn n_u() -> usize {
        1
    }
    pub fn pdp() -> Vec<String> {
        vec!["ped4".into()]
    }
    pub fn snr_db() -> Vec<f64> {
        vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
    }
    pub fn trials() -> usize {
        200
    }
    pub fn receivers() -> Vec<ReceiverKind> {
        vec![ReceiverKind::Blind, ReceiverKind::MrcFft]
    }
    pub fn baseline_pilots() -> usize {
        104
    }
    pub fn seed() -> u64 {
        1
    }
}

impl ExperimentConfig {
    /// Defaults for `kind` on the default system: N = 1024, N_r = 64, four
    /// taps, 64-QAM.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: kind,
            name: None,
            n: defaults::n(),
            n_r: defaults::n_r(),
            m: defaults::m(),
            n_u: defaults::n_u(),
            delays: None,
            pdp: defaults::pdp(),
            spatial_r: 0.0,
            snr_db: defaults::snr_db(),
            trials: defaults::trials(),
            receivers: defaults::receivers(),
            blind: BlindSettings::default(),
            baseline_pilots: defaults::baseline_pilots(),
            fft_l_max: None,
            temporal: TemporalSettings::default(),
            utilization: UtilizationSettings::default(),
            tap_error: TapErrorSettings::default(),
            seed: defaults::seed(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn experiment_id(&self) -> &str {
        self.name.as_deref().unwrap_or(self.experiment.as_str())
    }

    /// One profile per user.
    pub fn profiles(&self) -> Result<Vec<PowerDelayProfile>> {
        let names: Vec<&String> = if self.pdp.len() == 1 {
            vec![&self.pdp[0]; self.n_u]
        } else {
            self.pdp.iter().collect()
        };
        names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                PowerDelayProfile::resolve(name)
                    .map_err(|e| Error::config(format!("pdp[{i}]"), e.to_string()))
            })
            .collect()
    }

    pub fn delay_grid(&self) -> Result<Vec<usize>> {
        match &self.delays {
            Some(d) => Ok(d.clone()),
            None => Ok(delay_union(&self.profiles()?)),
        }
    }

    /// Channel length used as the genie FFT-interpolation window.
    pub fn l_max(&self) -> Result<usize> {
        match self.fft_l_max {
            Some(l) => Ok(l),
            None => Ok(self.delay_grid()?.iter().max().map_or(1, |d| d + 1)),
        }
    }

    pub fn blind_iterations(&self) -> usize {
        self.blind
            .iterations
            .unwrap_or(if self.n_u > 1 { 20 } else { 10 })
    }

    pub fn blind_init(&self) -> InitKind {
        self.blind.init.unwrap_or(if self.n_u > 1 {
            InitKind::Circularity
        } else {
            InitKind::Variance
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::config(path, msg));
        if self.n < 2 {
            return bad("n", format!("must be >= 2, got {}", self.n));
        }
        if self.n_r == 0 {
            return bad("n_r", "must be >= 1".into());
        }
        if !SUPPORTED_ORDERS.contains(&self.m) {
            return bad("m", format!("must be one of {SUPPORTED_ORDERS:?}, got {}", self.m));
        }
        if self.n_u == 0 {
            return bad("n_u", "must be >= 1".into());
        }
        if self.pdp.is_empty() || (self.pdp.len() != 1 && self.pdp.len() != self.n_u) {
            return bad(
                "pdp",
                format!("give one profile or one per user ({}), got {}", self.n_u, self.pdp.len()),
            );
        }
        let profiles = self.profiles()?;
        let grid = self.delay_grid()?;
        if grid.is_empty() || grid.iter().any(|&d| d >= self.n) {
            return bad("delays", format!("delays must be nonempty and below n = {}", self.n));
        }
        for (i, p) in profiles.iter().enumerate() {
            if let Some(d) = p.delays().iter().find(|d| !grid.contains(d)) {
                return bad(&format!("pdp[{i}]"), format!("delay {d} is not on the receiver delay grid"));
            }
        }
        if !(0.0..1.0).contains(&self.spatial_r) {
            return bad("spatial_r", format!("must be in [0, 1), got {}", self.spatial_r));
        }
        if self.snr_db.is_empty() {
            return bad("snr_db", "must not be empty".into());
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return bad("snr_db", format!("invalid SNR {s}"));
        }
        if self.trials == 0 {
            return bad("trials", "must be >= 1".into());
        }
        if self.receivers.is_empty() {
            return bad("receivers", "must not be empty".into());
        }
        let b = &self.blind;
        if self.blind_iterations() == 0 {
            return bad("blind.iterations", "must be >= 1".into());
        }
        if !(b.mu > 0.0 && b.mu < 1.0) {
            return bad("blind.mu", format!("must be in (0, 1), got {}", b.mu));
        }
        if b.derotate_at == 0 {
            return bad("blind.derotate_at", "must be >= 1".into());
        }
        if b.pilots_per_user == 0 || b.pilots_per_user * self.n_u > self.n / 2 {
            return bad(
                "blind.pilots_per_user",
                format!("must be in 1..={}", self.n / 2 / self.n_u),
            );
        }
        if self.n_u > 1 && b.derotation == DerotationKind::Cluster {
            return bad("blind.derotation", "cluster de-rotation is single-user only".into());
        }
        if !(b.condition_limit > 1.0) {
            return bad("blind.condition_limit", "must be > 1".into());
        }
        let needs_baseline = self.receivers.iter().any(|r| r.uses_baseline_pilots())
            || self.experiment == ExperimentKind::Utilization;
        if needs_baseline {
            if self.baseline_pilots < 2 * self.n_u || self.baseline_pilots > self.n / 2 {
                return bad(
                    "baseline_pilots",
                    format!("must be in {}..={}", 2 * self.n_u, self.n / 2),
                );
            }
            if !self.baseline_pilots.is_multiple_of(self.n_u) {
                return bad("baseline_pilots", format!("must be a multiple of n_u = {}", self.n_u));
            }
            let l = self.l_max()?;
            if l == 0 || l > self.baseline_pilots / self.n_u {
                return bad("fft_l_max", format!("must be in 1..={}", self.baseline_pilots / self.n_u));
            }
        }
        if self.n_u > 1 && self.receivers.iter().any(|r| matches!(r, ReceiverKind::MrcFft | ReceiverKind::MrcLinear)) {
            return bad("receivers", "MRC baselines are single-user; use mmse".into());
        }
        if self.n_u == 1 && self.receivers.contains(&ReceiverKind::Mmse) {
            return bad("receivers", "mmse baseline is for several users; use mrc-fft".into());
        }
        if self.experiment == ExperimentKind::Temporal {
            let t = &self.temporal;
            if self.n_u != 1 {
                return bad("n_u", "temporal runs are single-user".into());
            }
            if t.speeds_kmh.is_empty() || t.speeds_kmh.iter().any(|v| !(*v >= 0.0)) {
                return bad("temporal.speeds_kmh", "need nonnegative speeds".into());
            }
            if t.times_ms.is_empty() || t.times_ms.iter().any(|v| !(*v > 0.0)) {
                return bad("temporal.times_ms", "need positive times".into());
            }
            if !(t.carrier_hz > 0.0) {
                return bad("temporal.carrier_hz", "must be positive".into());
            }
            if t.max_iterations == 0 {
                return bad("temporal.max_iterations", "must be >= 1".into());
            }
        }
        if self.experiment == ExperimentKind::Utilization {
            let u = &self.utilization;
            if u.step == 0 || u.min_pilots == 0 || u.min_pilots > u.max_pilots || u.max_pilots > self.n / 2 {
                return bad(
                    "utilization",
                    format!("need 0 < min_pilots <= max_pilots <= {} and step > 0", self.n / 2),
                );
            }
        }
        if self.experiment == ExperimentKind::TapError && self.tap_error.estimators.is_empty() {
            return bad("tap_error.estimators", "must not be empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_table_one_defaults() {
        let c = ExperimentConfig::from_json_str(r#"{"experiment": "ber-sweep"}"#).unwrap();
        assert_eq!((c.n, c.n_r, c.m, c.n_u), (1024, 64, 64, 1));
        assert_eq!(c.delay_grid().unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(c.l_max().unwrap(), 4);
        assert_eq!(c.blind_iterations(), 10);
        assert_eq!(c, ExperimentConfig::new(ExperimentKind::BerSweep));
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = ExperimentConfig::from_json_str(r#"{"experiment": "ber-sweep", "nn": 3}"#);
        assert!(matches!(e, Err(Error::Config { .. })));
        let e = ExperimentConfig::from_json_str(r#"{"experiment": "ber-sweep", "blind": {"iters": 3}}"#);
        assert!(matches!(e, Err(Error::Config { .. })));
    }

    #[test]
    fn validation_names_the_field() {
        let check = |json: &str, field: &str| match ExperimentConfig::from_json_str(json) {
            Err(Error::Config { path, .. }) => assert_eq!(path, field, "{json}"),
            other => panic!("{json}: {other:?}"),
        };
        check(r#"{"experiment": "ber-sweep", "m": 32}"#, "m");
        check(r#"{"experiment": "ber-sweep", "trials": 0}"#, "trials");
        check(r#"{"experiment": "ber-sweep", "snr_db": []}"#, "snr_db");
        check(r#"{"experiment": "ber-sweep", "blind": {"mu": 0}}"#, "blind.mu");
        check(r#"{"experiment": "ber-sweep", "pdp": ["nope"]}"#, "pdp[0]");
        check(r#"{"experiment": "ber-sweep", "n_u": 4, "baseline_pilots": 102, "receivers": ["mmse"]}"#, "baseline_pilots");
        check(r#"{"experiment": "ber-sweep", "n_u": 2}"#, "receivers");
    }

    #[test]
    fn snr_infinity_round_trips() {
        let c = ExperimentConfig::from_json_str(r#"{"experiment": "ber-sweep", "snr_db": [0, "inf"]}"#).unwrap();
        assert_eq!(c.snr_db, vec![0.0, f64::INFINITY]);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), c);
        assert!(ExperimentConfig::from_json_str(r#"{"experiment": "ber-sweep", "snr_db": ["x"]}"#).is_err());
    }

    #[test]
    fn multi_user_defaults() {
        let c = ExperimentConfig::from_json_str(
            r#"{"experiment": "ber-sweep", "n_u": 4, "receivers": ["blind", "mmse"]}"#,
        )
        .unwrap();
        assert_eq!(c.blind_iterations(), 20);
        assert_eq!(c.blind_init(), InitKind::Circularity);
        assert_eq!(c.profiles().unwrap().len(), 4);
    }
}
