use std::fmt;

use serde::{Deserialize, Serialize};

use super::{downsample_class, Beat, BoxError, ClassHistogram, DataError, Dataset, Origin, NUM_CLASSES};

/// Produces new beats for a class.
pub trait BeatSource {
    fn synthesize(&mut self, class: u8, count: usize) -> Result<Vec<Beat>, BoxError>;
}

impl<F> BeatSource for F
where
    F: FnMut(u8, usize) -> Result<Vec<Beat>, BoxError>,
{
    fn synthesize(&mut self, class: u8, count: usize) -> Result<Vec<Beat>, BoxError> {
        self(class, count)
    }
}

/// Serves pre-generated beats per class, first come first served.
#[derive(Clone, Debug, Default)]
pub struct BeatPool {
    pools: [Vec<Beat>; NUM_CLASSES],
}

impl BeatPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, beats: impl IntoIterator<Item = Beat>) {
        for b in beats {
            self.pools[usize::from(b.label())].push(b);
        }
    }

    pub fn available(&self, class: u8) -> usize {
        self.pools[usize::from(class)].len()
    }
}

impl BeatSource for BeatPool {
    fn synthesize(&mut self, class: u8, count: usize) -> Result<Vec<Beat>, BoxError> {
        let pool = &mut self.pools[usize::from(class)];
        if pool.len() < count {
            return Err(format!("{count} beats requested but only {} available", pool.len()).into());
        }
        Ok(pool.drain(..count).collect())
    }
}

/// Per-class target counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePolicy {
    pub targets: [usize; NUM_CLASSES],
    pub seed: u64,
}

impl BalancePolicy {
    pub fn uniform(target: usize, seed: u64) -> Self {
        Self {
            targets: [target; NUM_CLASSES],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(class) = self.targets.iter().position(|&t| t == 0) {
            return Err(DataError::Policy(format!("target for class {class} must be positive")));
        }
        Ok(())
    }

    pub fn plan(&self, hist: &ClassHistogram) -> Result<BalancePlan, DataError> {
        self.validate()?;
        let classes = (0..NUM_CLASSES)
            .map(|c| {
                let (original, target) = (hist[c], self.targets[c]);
                let action = match original.cmp(&target) {
                    std::cmp::Ordering::Greater => ClassAction::DownSample,
                    std::cmp::Ordering::Less => ClassAction::Synthesize,
                    std::cmp::Ordering::Equal => ClassAction::Keep,
                };
                ClassPlan {
                    class: c as u8,
                    original,
                    target,
                    delta: target as i64 - original as i64,
                    action,
                }
            })
            .collect();
        Ok(BalancePlan { classes })
    }
}

impl Default for BalancePolicy {
    fn default() -> Self {
        Self::uniform(10_000, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassAction {
    Keep,
    DownSample,
    Synthesize,
}

impl ClassAction {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassAction::Keep => "keep",
            ClassAction::DownSample => "down-sample",
            ClassAction::Synthesize => "synthesize",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub class: u8,
    pub original: usize,
    pub target: usize,
    pub delta: i64,
    pub action: ClassAction,
}

/// What rebalancing does to each class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub classes: Vec<ClassPlan>,
}

impl BalancePlan {
    /// `class,original,delta,final,method` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,original,delta,final,method\n");
        for c in &self.classes {
            s.push_str(&format!(
                "{},{},{:+},{},{}\n",
                c.class,
                c.original,
                c.delta,
                c.target,
                c.action.as_str()
            ));
        }
        s
    }
}

impl fmt::Display for BalancePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>5} {:>9} {:>9} {:>9}  method",
            "class", "original", "delta", "final"
        )?;
        for c in &self.classes {
            writeln!(
                f,
                "{:>5} {:>9} {:>+9} {:>9}  {}",
                c.class,
                c.original,
                c.delta,
                c.target,
                c.action.as_str()
            )?;
        }
        Ok(())
    }
}

/// Brings every class to its target: surplus classes are down-sampled with
/// a seeded choice, deficit classes are topped up from `source`. Real beats
/// keep their order and come first; synthetic beats follow, by class.
pub fn rebalance(
    ds: &Dataset,
    policy: &BalancePolicy,
    source: &mut dyn BeatSource,
) -> Result<(Dataset, BalancePlan), DataError> {
    let plan = policy.plan(&ds.class_histogram())?;
    let mut out = ds.clone();
    for c in &plan.classes {
        if c.action == ClassAction::DownSample {
            out = downsample_class(&out, c.class, c.target, policy.seed.wrapping_add(u64::from(c.class)))?;
        }
    }
    for c in &plan.classes {
        if c.action != ClassAction::Synthesize {
            continue;
        }
        let need = c.delta as usize;
        let beats = source
            .synthesize(c.class, need)
            .map_err(|source| DataError::Synthesis { class: c.class, source })?;
        if beats.len() != need {
            return Err(DataError::Synthesis {
                class: c.class,
                source: format!("asked for {need} beats, got {}", beats.len()).into(),
            });
        }
        if let Some(b) = beats.iter().find(|b| b.label() != c.class) {
            return Err(DataError::Synthesis {
                class: c.class,
                source: format!("returned a beat labelled {}", b.label()).into(),
            });
        }
        for b in beats {
            out.push(b, Origin::Synthetic);
        }
    }
    let hist = out.class_histogram();
    debug_assert_eq!(hist.0, policy.targets);
    Ok((out, plan))
}
