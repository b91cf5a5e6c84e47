use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use super::ScenarioError;
use crate::faultinject::FaultSpec;
use crate::plant::{GhostOpponent, PlantConfig};
use crate::simbus::PacingMode;
use crate::stack::StackConfig;

/// Spawn pose and speed, given on the racing line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub s: f64,
    pub d: f64,
    pub mu: f64,
    pub v0: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            s: 0.0,
            d: 0.0,
            mu: 0.0,
            v0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Centerline CSV, relative to the scenario directory.
    pub track: PathBuf,
    pub racing_line: PathBuf,
    pub init: InitConfig,
    pub pacing: PacingMode,
    pub speedup: f64,
    pub ground_truth_mode: bool,
    pub seed: Option<u64>,
    pub ghosts: Vec<GhostOpponent>,
    /// Standard deviation of the perceived opponent position, m.
    pub perception_sigma: f64,
    /// Fault file; `faults.yaml` in the scenario directory is used when
    /// this is unset and the file exists.
    pub faults: Option<PathBuf>,
    /// Hard wall on sim time, s. Reaching it fails the run.
    pub max_time: f64,
    pub tags: Vec<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            track: PathBuf::from("track.csv"),
            racing_line: PathBuf::from("racing_line.csv"),
            init: InitConfig::default(),
            pacing: PacingMode::AsFastAsPossible,
            speedup: 1.0,
            ground_truth_mode: false,
            seed: None,
            ghosts: Vec::new(),
            perception_sigma: 0.0,
            faults: None,
            max_time: 600.0,
            tags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub yellow: f64,
    pub red: f64,
}

impl Threshold {
    pub const fn new(yellow: f64, red: f64) -> Self {
        Self { yellow, red }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    #[default]
    OverviewOnly,
    Full,
}

/// Names of the automatic tests, in execution order.
pub const TEST_NAMES: [&str; 7] = [
    "tracking_errors",
    "car_started",
    "car_stopped",
    "stack_errors",
    "track_boundaries",
    "dynamics_metrics",
    "ghost_collisions",
];

/// Second document of `config.yaml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Enabled tests; all by default.
    pub tests: Vec<String>,
    /// Per-metric thresholds. Known keys: lateral_error, heading_error,
    /// understeer, sideslip, yaw_rate, lateral_velocity.
    pub thresholds: BTreeMap<String, Threshold>,
    /// Minimum distance covered for `car_started`, m.
    pub min_distance: f64,
    /// Upper bound on the merged table frequency, Hz.
    pub freq_bound: f64,
    pub mode: ReportMode,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let thresholds = [
            ("lateral_error", Threshold::new(1.0, 3.0)),
            ("heading_error", Threshold::new(0.1, 0.3)),
            ("understeer", Threshold::new(3.0, 6.0)),
            ("sideslip", Threshold::new(4.0, 8.0)),
            ("yaw_rate", Threshold::new(0.6, 1.0)),
            ("lateral_velocity", Threshold::new(4.0, 8.0)),
        ]
        .into_iter()
        .map(|(k, t)| (k.to_owned(), t))
        .collect();
        Self {
            tests: TEST_NAMES.iter().map(|s| (*s).to_owned()).collect(),
            thresholds,
            min_distance: 100.0,
            freq_bound: 100.0,
            mode: ReportMode::OverviewOnly,
        }
    }
}

impl ReportConfig {
    pub fn enabled(&self, test: &str) -> bool {
        self.tests.iter().any(|t| t == test)
    }

    pub fn threshold(&self, metric: &str) -> Option<Threshold> {
        self.thresholds.get(metric).copied()
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        for t in &self.tests {
            if !TEST_NAMES.contains(&t.as_str()) {
                return Err(ScenarioError::Invalid(format!("unknown test {t}")));
            }
        }
        for (k, t) in &self.thresholds {
            if !(t.yellow <= t.red) {
                return Err(ScenarioError::Invalid(format!("threshold {k}: yellow must not exceed red")));
            }
        }
        if !(self.freq_bound > 0.0) {
            return Err(ScenarioError::Invalid("freq_bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FirstDoc {
    sim: SimConfig,
    params: BTreeMap<String, Value>,
}

/// Parsed `config.yaml` with all overrides applied to copies of the node
/// defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub sim: SimConfig,
    /// Overrides as written, in key order.
    pub params: BTreeMap<String, String>,
    pub stack: StackConfig,
    pub plant: PlantConfig,
    pub report: ReportConfig,
}

impl ScenarioConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        let mut docs = serde_yaml::Deserializer::from_str(text);
        let first = docs
            .next()
            .map(FirstDoc::deserialize)
            .transpose()
            .map_err(|e| ScenarioError::Invalid(format!("config document 1: {e}")))?
            .unwrap_or_default();
        let report = docs
            .next()
            .map(|d| Option::<ReportConfig>::deserialize(d))
            .transpose()
            .map_err(|e| ScenarioError::Invalid(format!("config document 2: {e}")))?
            .flatten()
            .unwrap_or_default();
        if docs.next().is_some() {
            return Err(ScenarioError::Invalid("config.yaml must hold at most two documents".into()));
        }
        let mut report = report;
        // a partial threshold map refines the defaults instead of replacing them
        for (k, t) in ReportConfig::default().thresholds {
            report.thresholds.entry(k).or_insert(t);
        }
        report.validate()?;
        let mut cfg = Self {
            sim: first.sim,
            params: BTreeMap::new(),
            stack: StackConfig::default(),
            plant: PlantConfig::default(),
            report,
        };
        for (key, value) in &first.params {
            let text = yaml_text(value)?;
            cfg.set_param(key, &text)?;
            cfg.params.insert(key.clone(), text);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `node/param.path` override. `plant/...` addresses the
    /// vehicle and sensor configuration; everything else the stack.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let res = match key.split_once('/') {
            Some(("plant", path)) => crate::params::patch(&mut self.plant, path, value),
            _ => self.stack.set(key, value),
        };
        res.map_err(|e| ScenarioError::UnknownParam(format!("{key}: {e}")))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = &self.sim;
        if !(s.speedup >= 1.0) {
            return Err(ScenarioError::Invalid(format!("speedup {} must be >= 1", s.speedup)));
        }
        if !(s.max_time > 0.0) {
            return Err(ScenarioError::Invalid("max_time must be positive".into()));
        }
        if !(s.init.v0 >= 0.0) {
            return Err(ScenarioError::Invalid("init.v0 must be non-negative".into()));
        }
        self.plant.vehicle.validate().map_err(ScenarioError::Invalid)?;
        self.plant.sensors.validate().map_err(ScenarioError::Invalid)?;
        let mut ids: Vec<&str> = s.ghosts.iter().map(|g| g.id.as_str()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ScenarioError::Invalid("ghost ids must be unique".into()));
        }
        Ok(())
    }
}

/// One scripted command: either `node/param` with a value or `faults` with
/// a fault-file fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptCommand {
    pub target: String,
    pub value: Value,
}

impl ScriptCommand {
    /// (node, param, value text) as sent on the command topic.
    pub fn resolve(&self) -> Result<(String, String, String), ScenarioError> {
        let value = yaml_text(&self.value)?;
        match self.target.split_once('/') {
            Some((node, param)) if !node.is_empty() && !param.is_empty() => {
                Ok((node.to_owned(), param.to_owned(), value))
            }
            None if self.target == crate::faultinject::PROXY_NAME => {
                Ok((self.target.clone(), "patch".to_owned(), value))
            }
            _ => Err(ScenarioError::Invalid(format!(
                "command target {} must be node/param or faults",
                self.target
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandGroup {
    pub lap: u32,
    pub s: f64,
    #[serde(default)]
    pub parameters: Vec<ScriptCommand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EndCondition {
    /// Finish once this lap is complete.
    pub after_lap: Option<u32>,
    /// Finish at this sim time, s.
    pub after_time: Option<f64>,
    /// Heartbeat keeps running this long after the condition is met, s.
    pub grace: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioScript {
    pub end: EndCondition,
    pub groups: Vec<CommandGroup>,
}

impl ScenarioScript {
    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        let mut script: Self = match serde_yaml::from_str::<Option<Self>>(text) {
            Ok(s) => s.unwrap_or_default(),
            Err(e) => return Err(ScenarioError::Invalid(format!("scenario.yaml: {e}"))),
        };
        for g in &script.groups {
            if g.lap < 1 || !(g.s >= 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "group (lap {}, s {}) needs lap >= 1 and s >= 0",
                    g.lap, g.s
                )));
            }
            for c in &g.parameters {
                c.resolve()?;
            }
        }
        if script.end.after_lap == Some(0) {
            return Err(ScenarioError::Invalid("end.after_lap must be >= 1".into()));
        }
        script
            .groups
            .sort_by(|a, b| (a.lap, a.s).partial_cmp(&(b.lap, b.s)).unwrap_or(std::cmp::Ordering::Equal));
        Ok(script)
    }

    /// Lap after which the scenario is over when no explicit condition is
    /// given: one full lap after the last group.
    pub fn final_lap(&self) -> u32 {
        self.end
            .after_lap
            .unwrap_or_else(|| self.groups.last().map_or(1, |g| g.lap + 1))
    }

    /// Fault patches sent at runtime, so the proxy can intercept their
    /// topics from the start.
    pub fn fault_topics(&self) -> Result<Vec<String>, ScenarioError> {
        let mut out = Vec::new();
        for c in self.groups.iter().flat_map(|g| &g.parameters) {
            if c.target == crate::faultinject::PROXY_NAME {
                let spec = FaultSpec::from_value(&c.value).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                out.extend(spec.topics().map(|t| t.name.clone()));
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// A scenario directory: `config.yaml`, `scenario.yaml`, optional
/// `faults.yaml`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dir: PathBuf,
    pub config: ScenarioConfig,
    pub script: ScenarioScript,
    pub faults: FaultSpec,
}

impl Scenario {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(ScenarioError::Missing(dir.display().to_string()));
        }
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|_| ScenarioError::Missing(p.display().to_string()))
        };
        let config = ScenarioConfig::from_yaml(&read("config.yaml")?)?;
        let script = ScenarioScript::from_yaml(&read("scenario.yaml")?)?;
        let fault_path = match &config.sim.faults {
            Some(p) => Some(dir.join(p)),
            None => Some(dir.join("faults.yaml")).filter(|p| p.exists()),
        };
        let faults = match fault_path {
            Some(p) => FaultSpec::from_file(&p).map_err(|e| ScenarioError::Invalid(e.to_string()))?,
            None => FaultSpec::default(),
        };
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Ok(Self {
            name,
            dir: dir.to_path_buf(),
            config,
            script,
            faults,
        })
    }

    pub fn track_path(&self) -> PathBuf {
        self.dir.join(&self.config.sim.track)
    }

    pub fn racing_line_path(&self) -> PathBuf {
        self.dir.join(&self.config.sim.racing_line)
    }
}

/// Render a YAML value as the text form used in parameter patches.
fn yaml_text(v: &Value) -> Result<String, ScenarioError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        _ => serde_yaml::to_string(v)
            .map(|s| s.trim_end().to_owned())
            .map_err(|e| ScenarioError::Invalid(e.to_string())),
    }
}
