//! The five experiment scenarios with their A/B sub-scenarios, the LOSO
//! fold layout and the 280-session matrix.
//!
//! Scenario inputs and task pairs:
//!
//! 1. conversion only (clean input, two conversion targets)
//! 2. bias correction + conversion (contaminated input)
//! 3. segmentation + conversion (clean input)
//! 4. segmentation + bias correction (contaminated input)
//! 5. segmentation + conversion (contaminated input)
//!
//! Sub-scenario A takes T2-FLAIR as input, B takes T1. Four methods run per
//! spec and fold: `unet_st`, `cgan_st`, `unet_mt`, `cgan_mt`, giving
//! `2 x 5 x 7 x 4 = 280` sessions on the seven-subject dataset. A
//! single-task method trains one network per task internally but counts as
//! one session, matching the matrix accounting.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Modality;
use crate::error::{Error, Result};

/// What a network is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Convert,
    BiasCorrect,
    Segment,
}

/// One task of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Conversion target; `None` for segmentation and bias correction.
    pub target_modality: Option<Modality>,
}

impl TaskSpec {
    pub fn convert(to: Modality) -> Self {
        TaskSpec {
            kind: TaskKind::Convert,
            target_modality: Some(to),
        }
    }

    pub fn bias_correct() -> Self {
        TaskSpec {
            kind: TaskKind::BiasCorrect,
            target_modality: None,
        }
    }

    pub fn segment() -> Self {
        TaskSpec {
            kind: TaskKind::Segment,
            target_modality: None,
        }
    }

    /// Stable task name used in metric records and reports.
    pub fn name(&self) -> String {
        match self.kind {
            TaskKind::Convert => format!(
                "convert_to_{}",
                self.target_modality.map(|m| m.stem()).unwrap_or("?")
            ),
            TaskKind::BiasCorrect => "bias_correct".into(),
            TaskKind::Segment => "segment".into(),
        }
    }

    /// Whether outputs are scored with Dice/FPR instead of SSIM/NCC.
    pub fn is_segmentation(&self) -> bool {
        self.kind == TaskKind::Segment
    }
}

/// A or B sub-scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sub {
    A,
    B,
}

impl fmt::Display for Sub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl Sub {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Sub::A),
            "B" | "b" => Ok(Sub::B),
            other => Err(Error::InvalidArgument(format!("unknown sub-scenario {other}"))),
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: u8,
    pub sub: Sub,
    pub input_modality: Modality,
    pub contaminated: bool,
    pub tasks: Vec<TaskSpec>,
}

impl ScenarioSpec {
    /// Short id like `1A`.
    pub fn id(&self) -> String {
        format!("{}{}", self.scenario_id, self.sub)
    }

    /// Derives the single-task spec for task `index`.
    pub fn single_task(&self, index: usize) -> ScenarioSpec {
        ScenarioSpec {
            tasks: vec![self.tasks[index]],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.scenario_id) {
            return Err(Error::InvalidArgument(format!(
                "scenario_id {} out of 1..=5",
                self.scenario_id
            )));
        }
        if self.tasks.is_empty() || self.tasks.len() > 2 {
            return Err(Error::InvalidArgument("scenario needs 1 or 2 tasks".into()));
        }
        for t in &self.tasks {
            if t.kind == TaskKind::Convert {
                match t.target_modality {
                    None => {
                        return Err(Error::InvalidArgument(
                            "conversion task needs a target modality".into(),
                        ))
                    }
                    Some(m) if m == self.input_modality => {
                        return Err(Error::InvalidArgument(
                            "conversion target must differ from the input modality".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// The ten built-in (scenario, sub) specs.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    use Modality::{T1, T1Ir, T2Flair};
    let spec = |scenario_id, sub, input, contaminated, tasks: Vec<TaskSpec>| ScenarioSpec {
        scenario_id,
        sub,
        input_modality: input,
        contaminated,
        tasks,
    };
    vec![
        spec(1, Sub::A, T2Flair, false, vec![TaskSpec::convert(T1), TaskSpec::convert(T1Ir)]),
        spec(1, Sub::B, T1, false, vec![TaskSpec::convert(T2Flair), TaskSpec::convert(T1Ir)]),
        spec(2, Sub::A, T2Flair, true, vec![TaskSpec::bias_correct(), TaskSpec::convert(T1)]),
        spec(2, Sub::B, T1, true, vec![TaskSpec::bias_correct(), TaskSpec::convert(T2Flair)]),
        spec(3, Sub::A, T2Flair, false, vec![TaskSpec::segment(), TaskSpec::convert(T1)]),
        spec(3, Sub::B, T1, false, vec![TaskSpec::segment(), TaskSpec::convert(T2Flair)]),
        spec(4, Sub::A, T2Flair, true, vec![TaskSpec::segment(), TaskSpec::bias_correct()]),
        spec(4, Sub::B, T1, true, vec![TaskSpec::segment(), TaskSpec::bias_correct()]),
        spec(5, Sub::A, T2Flair, true, vec![TaskSpec::segment(), TaskSpec::convert(T1)]),
        spec(5, Sub::B, T1, true, vec![TaskSpec::segment(), TaskSpec::convert(T2Flair)]),
    ]
}

/// One cross-validation fold: all subjects minus one for training, the
/// held-out subject for testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_subjects: Vec<String>,
    pub test_subject: String,
}

/// Leave-one-subject-out folds, one per subject, in input order.
pub fn loso_folds(subject_ids: &[String]) -> Result<Vec<Fold>> {
    if subject_ids.len() < 2 {
        return Err(Error::InvalidArgument(
            "LOSO needs at least 2 subjects".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for id in subject_ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateSubject(id.clone()));
        }
    }
    Ok(subject_ids
        .iter()
        .map(|held_out| Fold {
            train_subjects: subject_ids
                .iter()
                .filter(|s| *s != held_out)
                .cloned()
                .collect(),
            test_subject: held_out.clone(),
        })
        .collect())
}

/// The four trained method variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKey {
    UnetSt,
    CganSt,
    UnetMt,
    CganMt,
}

impl MethodKey {
    pub const ALL: [MethodKey; 4] = [
        MethodKey::UnetSt,
        MethodKey::CganSt,
        MethodKey::UnetMt,
        MethodKey::CganMt,
    ];

    pub fn is_multitask(self) -> bool {
        matches!(self, MethodKey::UnetMt | MethodKey::CganMt)
    }

    pub fn is_gan(self) -> bool {
        matches!(self, MethodKey::CganSt | MethodKey::CganMt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKey::UnetSt => "unet_st",
            MethodKey::CganSt => "cgan_st",
            MethodKey::UnetMt => "unet_mt",
            MethodKey::CganMt => "cgan_mt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unet_st" => Ok(MethodKey::UnetSt),
            "cgan_st" => Ok(MethodKey::CganSt),
            "unet_mt" => Ok(MethodKey::UnetMt),
            "cgan_mt" => Ok(MethodKey::CganMt),
            other => Err(Error::InvalidArgument(format!("unknown method {other}"))),
        }
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one training/testing session of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub scenario_id: u8,
    pub sub: Sub,
    pub fold: usize,
    pub method: MethodKey,
}

impl SessionKey {
    pub fn scenario_tag(&self) -> String {
        format!("{}{}", self.scenario_id, self.sub)
    }

    /// Run-directory layout: `<out>/<scenario><sub>/<method>/fold<k>/`.
    pub fn run_dir(&self, out_root: &std::path::Path) -> std::path::PathBuf {
        out_root
            .join(self.scenario_tag())
            .join(self.method.as_str())
            .join(format!("fold{}", self.fold))
    }
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}/{}/fold{}",
            self.scenario_id, self.sub, self.method, self.fold
        )
    }
}

/// Full cross product in deterministic `(scenario, sub, fold, method)` order.
pub fn enumerate_sessions(scenarios: &[ScenarioSpec], fold_count: usize) -> Vec<SessionKey> {
    let mut keys = Vec::with_capacity(scenarios.len() * fold_count * MethodKey::ALL.len());
    for spec in scenarios {
        for fold in 0..fold_count {
            for method in MethodKey::ALL {
                keys.push(SessionKey {
                    scenario_id: spec.scenario_id,
                    sub: spec.sub,
                    fold,
                    method,
                });
            }
        }
    }
    keys
}
