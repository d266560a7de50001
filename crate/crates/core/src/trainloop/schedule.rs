use super::TrainError;

/// Trainable groups from `start` until the next phase begins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub start: usize,
    pub trainable: Vec<String>,
}

/// Epoch-indexed freezing plan. Phases are sorted by start, the first starts
/// at epoch 0 and each one lasts until the next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreezeSchedule {
    pub total_epochs: usize,
    pub phases: Vec<Phase>,
}

impl FreezeSchedule {
    pub fn new(total_epochs: usize, phases: Vec<Phase>) -> Result<Self, TrainError> {
        let ok = phases.first().is_some_and(|p| p.start == 0)
            && phases.windows(2).all(|w| w[0].start < w[1].start)
            && phases.last().is_some_and(|p| p.start < total_epochs);
        if !ok {
            return Err(TrainError::InvalidConfig(
                "phases must start at 0, increase strictly and begin before the last epoch".into(),
            ));
        }
        Ok(Self {
            total_epochs,
            phases,
        })
    }

    /// A single phase training `groups` for every epoch.
    pub fn constant(total_epochs: usize, groups: Vec<String>) -> Result<Self, TrainError> {
        Self::new(
            total_epochs,
            vec![Phase {
                start: 0,
                trainable: groups,
            }],
        )
    }

    /// Index of the phase active in `epoch`.
    pub fn phase_index(&self, epoch: usize) -> usize {
        self.phases.iter().rposition(|p| p.start <= epoch).unwrap_or(0)
    }

    pub fn trainable_at(&self, epoch: usize) -> &[String] {
        &self.phases[self.phase_index(epoch)].trainable
    }

    /// True when no phase removes a group that an earlier phase trained.
    pub fn is_monotone(&self) -> bool {
        self.phases
            .windows(2)
            .all(|w| w[0].trainable.iter().all(|g| w[1].trainable.contains(g)))
    }
}

/// Gradual unfreezing over `groups` given output side first
/// (`decoder`, `encoder.n` … `encoder.1`, `embedding`).
///
/// Epochs `[0, b1)` train the decoder, `[b1, b2)` unfreeze the encoder groups
/// one at a time over equal sub-intervals, and `[b2, total)` train everything,
/// with `b1 = round(total·10/35)` and `b2 = round(total·20/35)`.
pub fn gu_schedule(total_epochs: usize, groups: &[String]) -> Result<FreezeSchedule, TrainError> {
    if total_epochs < 3 {
        return Err(TrainError::TooFewEpochs(total_epochs));
    }
    if groups.len() < 2 {
        return Err(TrainError::InvalidConfig(
            "gradual unfreezing needs at least two groups".into(),
        ));
    }
    let b1 = (total_epochs as f64 * 10.0 / 35.0).round() as usize;
    let b2 = (total_epochs as f64 * 20.0 / 35.0).round() as usize;
    let encoders = &groups[1..groups.len() - 1];

    let mut phases = vec![Phase {
        start: 0,
        trainable: groups[..1].to_vec(),
    }];
    let mut push = |start: usize, trainable: Vec<String>| match phases.last_mut() {
        Some(last) if last.start == start => last.trainable = trainable,
        _ => phases.push(Phase { start, trainable }),
    };
    let k = encoders.len();
    for i in 0..k {
        let start = b1 + i * (b2 - b1) / k;
        push(start, groups[..i + 2].to_vec());
    }
    push(b2, groups.to_vec());
    FreezeSchedule::new(total_epochs, phases)
}
