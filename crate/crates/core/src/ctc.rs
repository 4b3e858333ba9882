//! Blank gating and best-path collapse of window labels into events.

use serde::{Deserialize, Serialize};

use crate::pcloud::Label;

pub const DEFAULT_TAU: f64 = 0.5;

/// One decoded window: its label, the time span it stands for, and the
/// confidence behind the label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledStep {
    pub label: Label,
    pub start: f64,
    pub end: f64,
    pub confidence: f64,
}

impl LabeledStep {
    pub fn new(label: Label, start: f64, end: f64, confidence: f64) -> Self {
        Self { label, start, end, confidence }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: usize,
    pub start: f64,
    pub end: f64,
    /// Mean step confidence over the run.
    pub confidence: f64,
}

/// Argmax class if its probability reaches `tau`, otherwise blank.
/// Ties go to the lower class id.
pub fn blank_gate(posterior: &[f64], tau: f64) -> Label {
    let mut best = 0;
    for (i, &p) in posterior.iter().enumerate() {
        if p > posterior[best] {
            best = i;
        }
    }
    match posterior.get(best) {
        Some(&p) if p >= tau => Label::Activity(best),
        _ => Label::Blank,
    }
}

/// Incremental collapse: holds the currently open run and emits an event
/// when it ends.
#[derive(Clone, Debug, Default)]
pub struct StreamingCollapser {
    open: Option<OpenRun>,
}

#[derive(Clone, Debug)]
struct OpenRun {
    label: usize,
    start: f64,
    end: f64,
    confidence_sum: f64,
    steps: usize,
}

impl OpenRun {
    fn close(self) -> Event {
        Event {
            label: self.label,
            start: self.start,
            end: self.end,
            confidence: self.confidence_sum / self.steps as f64,
        }
    }
}

impl StreamingCollapser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: LabeledStep) -> Option<Event> {
        match step.label {
            Label::Activity(c) => match &mut self.open {
                Some(run) if run.label == c => {
                    run.end = step.end;
                    run.confidence_sum += step.confidence;
                    run.steps += 1;
                    None
                }
                _ => self
                    .open
                    .replace(OpenRun {
                        label: c,
                        start: step.start,
                        end: step.end,
                        confidence_sum: step.confidence,
                        steps: 1,
                    })
                    .map(OpenRun::close),
            },
            Label::Blank => self.open.take().map(OpenRun::close),
        }
    }

    pub fn flush(&mut self) -> Option<Event> {
        self.open.take().map(OpenRun::close)
    }

    pub fn open_label(&self) -> Option<usize> {
        self.open.as_ref().map(|r| r.label)
    }
}

pub fn collapse(steps: &[LabeledStep]) -> Vec<Event> {
    let mut collapser = StreamingCollapser::new();
    let mut events: Vec<Event> = steps.iter().filter_map(|&s| collapser.push(s)).collect();
    events.extend(collapser.flush());
    events
}

/// Collapse over bare labels.
pub fn collapse_labels(labels: &[Label]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut previous = Label::Blank;
    for &label in labels {
        if let Label::Activity(c) = label {
            if previous != label {
                out.push(c);
            }
        }
        previous = label;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    const A: Label = Label::Activity(0);
    const B: Label = Label::Activity(1);
    const E: Label = Label::Blank;

    fn steps(labels: &[Label]) -> Vec<LabeledStep> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| LabeledStep::new(l, i as f64, i as f64 + 1.0, 0.5 + 0.01 * i as f64))
            .collect()
    }

    fn labels_of(events: &[Event]) -> Vec<usize> {
        events.iter().map(|e| e.label).collect()
    }

    /// Dedupe consecutive runs, then drop blanks.
    fn two_pass(labels: &[Label]) -> Vec<usize> {
        let mut deduped: Vec<Label> = Vec::new();
        for &l in labels {
            if deduped.last() != Some(&l) {
                deduped.push(l);
            }
        }
        deduped.into_iter().filter_map(Label::activity).collect()
    }

    #[test]
    fn gate_cases() {
        assert_eq!(blank_gate(&[0.05, 0.9, 0.05], 0.5), B);
        assert_eq!(blank_gate(&[0.3, 0.25, 0.25, 0.2], 0.5), E);
        assert_eq!(blank_gate(&[0.2; 5], 0.5), E);
        assert_eq!(blank_gate(&[0.5, 0.5], 0.5), A);
        assert_eq!(blank_gate(&[0.2, 0.8], 0.8), B);
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(labels_of(&collapse(&steps(&[A, A, E, A, B, B]))), vec![0, 0, 1]);
        assert!(collapse(&steps(&[E, E, E])).is_empty());
        assert_eq!(collapse_labels(&[A, A, E, A, B, B]), vec![0, 0, 1]);
    }

    #[test]
    fn event_spans_and_confidence() {
        let events = collapse(&steps(&[E, A, A, A, B]));
        assert_eq!(events[0].start, 1.0);
        assert_eq!(events[0].end, 4.0);
        assert!((events[0].confidence - (0.51 + 0.52 + 0.53) / 3.0).abs() < 1e-15);
        assert_eq!(events[1].start, 4.0);
    }

    #[test]
    fn stream_emits_on_boundary_and_flush() {
        let mut c = StreamingCollapser::new();
        let s = steps(&[A, A, B]);
        assert!(c.push(s[0]).is_none());
        assert!(c.push(s[1]).is_none());
        assert_eq!(c.push(s[2]).map(|e| e.label), Some(0));
        assert_eq!(c.flush().map(|e| e.label), Some(1));
        assert!(c.flush().is_none());
    }

    fn random_labels(rng: &mut crate::rng::Rng) -> Vec<Label> {
        let n = rng.random_range(0..30);
        (0..n)
            .map(|_| match rng.random_range(0..6) {
                5 => Label::Blank,
                c => Label::Activity(c),
            })
            .collect()
    }

    #[test]
    fn matches_two_pass_reference() {
        let mut rng = rng_for(8, &[]);
        for _ in 0..1000 {
            let labels = random_labels(&mut rng);
            let batch = labels_of(&collapse(&steps(&labels)));
            assert_eq!(batch, two_pass(&labels));
            assert_eq!(collapse_labels(&labels), batch);
        }
    }

    proptest! {
        #[test]
        fn stream_equals_batch(raw in proptest::collection::vec(0usize..6, 0..60)) {
            let labels: Vec<Label> = raw.iter().map(|&c| if c == 5 { E } else { Label::Activity(c) }).collect();
            let s = steps(&labels);
            let mut c = StreamingCollapser::new();
            let mut streamed: Vec<Event> = s.iter().filter_map(|&x| c.push(x)).collect();
            streamed.extend(c.flush());
            let batch = collapse(&s);
            prop_assert_eq!(&streamed, &batch);
            prop_assert!(batch.len() <= labels.len());
            // collapsing the events again, one step each, is a fixed point
            let again: Vec<Label> = batch.iter().map(|e| Label::Activity(e.label)).collect();
            let twice = collapse_labels(&again);
            prop_assert_eq!(twice.len() <= batch.len(), true);
            let with_gaps: Vec<Label> = batch.iter().flat_map(|e| [Label::Activity(e.label), E]).collect();
            prop_assert_eq!(collapse_labels(&with_gaps), labels_of(&batch));
            for e in &batch {
                prop_assert!(e.start < e.end);
            }
        }
    }
}
