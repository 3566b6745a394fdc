//! Greedy merge projection onto the separation constraint.

use serde::{Deserialize, Serialize};

use crate::model::{distance, Spike, SpikeTrain};

/// One pairwise merge. `merged` holds indices into the spike list as it
/// stood just before this merge; the result replaces the lower index and the
/// higher one is removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub step: usize,
    pub merged: Vec<usize>,
    pub result: Spike,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    pub events: Vec<MergeEvent>,
    pub spikes_before: usize,
    pub spikes_after: usize,
}

impl MergeReport {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

fn closest_pair(spikes: &[Spike]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..spikes.len() {
        for j in i + 1..spikes.len() {
            let dist = distance(&spikes[i].position, &spikes[j].position);
            if best.is_none_or(|(_, _, b)| dist < b) {
                best = Some((i, j, dist));
            }
        }
    }
    best
}

/// Repeatedly merges the closest pair of spikes while it is closer than
/// `epsilon`. A merge puts one spike at the midpoint of the pair carrying the
/// sum of both amplitudes. Closest-pair ties go to the smaller first index,
/// then the smaller second index.
///
/// A train that is already `epsilon`-separated is returned untouched.
pub fn project_separation(train: SpikeTrain, epsilon: f64) -> (SpikeTrain, MergeReport) {
    let before = train.len();
    let mut report = MergeReport {
        events: Vec::new(),
        spikes_before: before,
        spikes_after: before,
    };
    match closest_pair(train.spikes()) {
        Some((_, _, dist)) if dist < epsilon => {}
        _ => return (train, report),
    }

    let dimension = train.dimension();
    let mut spikes = train.into_spikes();
    while let Some((i, j, dist)) = closest_pair(&spikes) {
        if dist >= epsilon {
            break;
        }
        let removed = spikes.remove(j);
        let kept = &mut spikes[i];
        kept.amplitude += removed.amplitude;
        for (p, q) in kept.position.iter_mut().zip(&removed.position) {
            *p = (*p + q) / 2.0;
        }
        report.events.push(MergeEvent {
            step: report.events.len(),
            merged: vec![i, j],
            result: kept.clone(),
        });
    }
    report.spikes_after = spikes.len();
    let projected = SpikeTrain::new(dimension, spikes).expect("merging keeps spikes finite");
    (projected, report)
}
