use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bandits::PerToolSelectorConfig;
use crate::credit::CREDIT_METHODS;
use crate::market::SynthConfig;
use crate::memory::MemoryConfig;
use crate::planners::PlannerParams;
use crate::reflection::{EvolutionSchedule, BACKENDS};
use crate::toolkit::ToolParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 140,
            val: 40,
            test: 28,
        }
    }
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum DataSource {
    /// Generated market; `preset` is "standard" or "planted" unless an
    /// explicit generator config is given.
    Synth {
        #[serde(default = "default_preset")]
        preset: String,
        #[serde(default)]
        config: Option<SynthConfig>,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_preset() -> String {
    "standard".to_string()
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            preset: default_preset(),
            config: None,
        }
    }
}

/// One-component switches varied by the ablation grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub no_warm_up: bool,
    pub no_reflection: bool,
    pub cold_start: bool,
    pub planner_evolution: bool,
    pub per_tool_selection: bool,
    pub skill_extraction: bool,
    /// LinUCB over the planner pool instead of the fixed planner.
    pub planner_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split: Split,
    pub warm_up: usize,
    pub slow_window: usize,
    pub fast_window: usize,
    pub distill_every: usize,
    pub evolution: EvolutionSchedule,
    pub credit_method: String,
    pub lambda: f64,
    /// Memory store and the retrieval-policy bandit.
    pub memory: bool,
    pub flags: AblationFlags,
    pub cost_bp: f64,
    pub data: DataSource,
    /// Directory of per-ticker static JSON for the data-backed tools.
    pub static_data_dir: Option<PathBuf>,
    /// Planner used when planner selection is off, and the counterfactual
    /// default.
    pub planner: String,
    pub planner_params: PlannerParams,
    pub tool_params: ToolParams,
    pub memory_config: MemoryConfig,
    pub per_tool: PerToolSelectorConfig,
    pub linucb_alpha: f64,
    pub outcome_scale: f64,
    pub shapley_every: usize,
    pub planner_failure_streak: usize,
    /// Pseudo-weight of the default full trust when blending evidence.
    pub trust_prior_weight: f64,
    /// Weight of the reflection tool assessment relative to one unit of
    /// memory evidence, scaled by the insight confidence.
    pub insight_weight: f64,
    pub backend: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            split: Split::default(),
            warm_up: 15,
            slow_window: 10,
            fast_window: 1,
            distill_every: 10,
            evolution: EvolutionSchedule::default(),
            credit_method: "uniform".into(),
            lambda: 0.5,
            memory: true,
            flags: AblationFlags::default(),
            cost_bp: 0.0,
            data: DataSource::default(),
            static_data_dir: None,
            planner: "sequential".into(),
            planner_params: PlannerParams::default(),
            tool_params: ToolParams::default(),
            memory_config: MemoryConfig::default(),
            per_tool: PerToolSelectorConfig::default(),
            linucb_alpha: 1.0,
            outcome_scale: 0.01,
            shapley_every: 80,
            planner_failure_streak: 3,
            trust_prior_weight: 1.0,
            insight_weight: 10.0,
            backend: "stub".into(),
        }
    }
}

impl RunConfig {
    pub fn warm_up_len(&self) -> usize {
        if self.flags.no_warm_up {
            0
        } else {
            self.warm_up
        }
    }

    pub fn reflection_enabled(&self) -> bool {
        !self.flags.no_reflection
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.split.train == 0 || self.split.val == 0 || self.split.test < 2 {
            return bad("split needs train > 0, val > 0 and test >= 2".into());
        }
        if self.slow_window == 0 || self.fast_window == 0 || self.distill_every == 0 {
            return bad("window sizes must be positive".into());
        }
        if self.fast_window != 1 {
            return bad("only per-episode fast updates (fast_window = 1) are supported".into());
        }
        if self.split.train < self.slow_window {
            return bad("training split shorter than one slow window".into());
        }
        if !CREDIT_METHODS.contains(&self.credit_method.as_str()) {
            return bad(format!(
                "credit_method `{}` not in {:?}",
                self.credit_method, CREDIT_METHODS
            ));
        }
        if !BACKENDS.contains(&self.backend.as_str()) {
            return bad(format!("backend `{}` not in {:?}", self.backend, BACKENDS));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda outside [0, 1]".into());
        }
        if !(self.cost_bp >= 0.0 && self.cost_bp.is_finite()) {
            return bad("cost_bp must be a non-negative number".into());
        }
        if !(self.outcome_scale > 0.0) {
            return bad("outcome_scale must be positive".into());
        }
        if self.linucb_alpha < 0.0 || !(self.trust_prior_weight > 0.0) || self.insight_weight < 0.0 {
            return bad("exploration and trust weights must be non-negative".into());
        }
        if self.shapley_every == 0 || self.planner_failure_streak == 0 {
            return bad("shapley_every and planner_failure_streak must be positive".into());
        }
        if let DataSource::Synth { preset, config: None } = &self.data {
            if !SYNTH_PRESETS.contains(&preset.as_str()) {
                return bad(format!("unknown synthetic preset `{preset}`"));
            }
        }
        Ok(())
    }
}

pub const SYNTH_PRESETS: [&str; 2] = ["standard", "planted"];

pub fn synth_preset(name: &str) -> Option<SynthConfig> {
    match name {
        "standard" => Some(SynthConfig::standard()),
        "planted" => Some(SynthConfig::planted()),
        _ => None,
    }
}

/// Incremental builds, each adding one component to the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Stateless,
    Tools,
    Memory,
    Ael,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Stateless, Preset::Tools, Preset::Memory, Preset::Ael];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Stateless => "stateless",
            Preset::Tools => "+tools",
            Preset::Memory => "+memory",
            Preset::Ael => "ael",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s.to_ascii_lowercase())
    }

    /// Applies the preset's component switches on top of `base`.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.flags = AblationFlags::default();
        c.credit_method = "uniform".into();
        match self {
            Preset::Stateless => {
                c.memory = false;
                c.flags.no_reflection = true;
            }
            Preset::Tools => {
                c.memory = false;
                c.flags.no_reflection = true;
                c.flags.per_tool_selection = true;
            }
            Preset::Memory => {
                c.memory = true;
                c.flags.no_reflection = true;
            }
            Preset::Ael => {
                c.memory = true;
            }
        }
        c
    }
}
