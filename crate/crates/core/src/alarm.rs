//! Incipient/alarm state machine over per-frame classifications.
//!
//! ```text
//!            top ≥ incipient                 on_hold frames ≥ on
//!   Normal ──────────────────► Incipient ─────────────────────────► Alarm
//!     ▲        (Raised)            │            (Escalated)           │
//!     └────────────────────────────┴──────────────────────────────────┘
//!          off_hold frames with top < off or nothing matched
//!                           (ReturnedToNormal)
//! ```
//!
//! Only the top-ranked label is tracked. If a different label stays on top
//! (at or above the incipient threshold) for `on_hold_frames` consecutive
//! frames while a fault is open, the open label is closed and the new one
//! raised in the same frame, at the current severity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmConfig {
    pub on_threshold: f64,
    pub incipient_threshold: f64,
    pub off_threshold: f64,
    pub on_hold_frames: usize,
    pub off_hold_frames: usize,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        Self {
            on_threshold: 0.8,
            incipient_threshold: 0.5,
            off_threshold: 0.3,
            on_hold_frames: 3,
            off_hold_frames: 5,
        }
    }
}

impl AlarmConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.on_threshold) {
            return Err(Error::param("on_threshold", "must lie in (0, 1]"));
        }
        if !unit(self.incipient_threshold) {
            return Err(Error::param("incipient_threshold", "must lie in (0, 1]"));
        }
        if !(self.off_threshold >= 0.0 && self.off_threshold < 1.0) {
            return Err(Error::param("off_threshold", "must lie in [0, 1)"));
        }
        if !(self.off_threshold < self.incipient_threshold && self.incipient_threshold <= self.on_threshold) {
            return Err(Error::param(
                "thresholds",
                "need off_threshold < incipient_threshold ≤ on_threshold",
            ));
        }
        if self.on_hold_frames == 0 || self.off_hold_frames == 0 {
            return Err(Error::param("hold_frames", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", content = "label", rename_all = "snake_case")]
pub enum AlarmLevel {
    Normal,
    Incipient(String),
    Alarm(String),
}

impl AlarmLevel {
    fn label(&self) -> Option<&str> {
        match self {
            AlarmLevel::Normal => None,
            AlarmLevel::Incipient(l) | AlarmLevel::Alarm(l) => Some(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmState {
    pub level: AlarmLevel,
    /// Consecutive frames with the open label at or above `on_threshold`.
    pub on_count: usize,
    /// Consecutive quiet frames.
    pub off_count: usize,
    /// A different label currently on top, and for how many frames.
    pub challenger: Option<(String, usize)>,
    pub last_time_s: Option<f64>,
}

impl Default for AlarmState {
    fn default() -> Self {
        Self {
            level: AlarmLevel::Normal,
            on_count: 0,
            off_count: 0,
            challenger: None,
            last_time_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Raised,
    Escalated,
    ReturnedToNormal,
}

/// One line of the alarm event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub time_s: f64,
    pub transition: Transition,
    pub label: String,
    pub score: f64,
}

impl AlarmEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Classification of one frame: ranked `(label, score)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedFrame {
    pub time_s: f64,
    pub labels: Vec<(String, f64)>,
}

/// Advances the state machine by one frame.
pub fn step(
    state: &AlarmState,
    classification: &[(String, f64)],
    time_s: f64,
    cfg: &AlarmConfig,
) -> Result<(AlarmState, Vec<AlarmEvent>)> {
    cfg.validate()?;
    if !time_s.is_finite() {
        return Err(Error::param("time_s", "must be finite"));
    }
    if let Some(prev) = state.last_time_s {
        if time_s <= prev {
            return Err(Error::NonMonotonicTime {
                previous: prev,
                current: time_s,
            });
        }
    }
    let mut next = state.clone();
    next.last_time_s = Some(time_s);
    let mut events = Vec::new();
    let event = |transition, label: &str, score| AlarmEvent {
        time_s,
        transition,
        label: label.to_string(),
        score,
    };
    let top = classification.first();
    let top_score = top.map_or(0.0, |t| t.1);

    let Some(open) = state.level.label().map(str::to_string) else {
        if let Some((label, score)) = top.filter(|t| t.1 >= cfg.incipient_threshold) {
            events.push(event(Transition::Raised, label, *score));
            next.level = AlarmLevel::Incipient(label.clone());
            next.on_count = usize::from(*score >= cfg.on_threshold);
            next.off_count = 0;
            next.challenger = None;
            if next.on_count >= cfg.on_hold_frames {
                events.push(event(Transition::Escalated, label, *score));
                next.level = AlarmLevel::Alarm(label.clone());
            }
        }
        return Ok((next, events));
    };

    if top.is_none() || top_score < cfg.off_threshold {
        next.off_count += 1;
        next.on_count = 0;
        next.challenger = None;
        if next.off_count >= cfg.off_hold_frames {
            events.push(event(Transition::ReturnedToNormal, &open, top_score));
            next = AlarmState {
                last_time_s: Some(time_s),
                ..AlarmState::default()
            };
        }
        return Ok((next, events));
    }
    next.off_count = 0;

    let (top_label, _) = top.expect("checked above");
    let mut current = open.clone();
    if *top_label != open && top_score >= cfg.incipient_threshold {
        let count = match &state.challenger {
            Some((l, c)) if l == top_label => c + 1,
            _ => 1,
        };
        next.challenger = Some((top_label.clone(), count));
        if count >= cfg.on_hold_frames {
            let open_score = classification.iter().find(|(l, _)| *l == open).map_or(0.0, |x| x.1);
            events.push(event(Transition::ReturnedToNormal, &open, open_score));
            events.push(event(Transition::Raised, top_label, top_score));
            current = top_label.clone();
            next.challenger = None;
            next.on_count = 0;
            next.level = match state.level {
                AlarmLevel::Alarm(_) => AlarmLevel::Alarm(current.clone()),
                _ => AlarmLevel::Incipient(current.clone()),
            };
        }
    } else {
        next.challenger = None;
    }

    if let AlarmLevel::Incipient(_) = next.level {
        let score = classification.iter().find(|(l, _)| *l == current).map(|x| x.1);
        match score {
            Some(s) if s >= cfg.on_threshold => next.on_count += 1,
            _ => next.on_count = 0,
        }
        if next.on_count >= cfg.on_hold_frames {
            events.push(event(Transition::Escalated, &current, score.unwrap_or(top_score)));
            next.level = AlarmLevel::Alarm(current);
        }
    }
    Ok((next, events))
}

/// Folds [`step`] over a time-ordered sequence, starting from Normal.
pub fn run_monitor(frames: &[ClassifiedFrame], cfg: &AlarmConfig) -> Result<Vec<AlarmEvent>> {
    cfg.validate()?;
    let mut state = AlarmState::default();
    let mut events = Vec::new();
    for f in frames {
        let (s, e) = step(&state, &f.labels, f.time_s, cfg)?;
        state = s;
        events.extend(e);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames(scores: &[Option<(&str, f64)>]) -> Vec<ClassifiedFrame> {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| ClassifiedFrame {
                time_s: (i + 1) as f64,
                labels: s.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
            })
            .collect()
    }

    #[test]
    fn quiet_input_stays_normal() {
        let f = frames(&[None; 10]);
        assert!(run_monitor(&f, &AlarmConfig::default()).unwrap().is_empty());
        assert!(run_monitor(&[], &AlarmConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn sustained_fault_walks_to_alarm() {
        let cfg = AlarmConfig {
            on_threshold: 0.9,
            ..AlarmConfig::default()
        };
        let f = frames(&[Some(("rotor", 0.95)); 5]);
        // Hand walk: frame 1 Normal→Incipient (on_count 1), frame 2 on_count 2,
        // frame 3 on_count 3 = on_hold → Alarm; frames 4–5 hold.
        let got = run_monitor(&f, &cfg).unwrap();
        let want = vec![
            AlarmEvent {
                time_s: 1.0,
                transition: Transition::Raised,
                label: "rotor".into(),
                score: 0.95,
            },
            AlarmEvent {
                time_s: 3.0,
                transition: Transition::Escalated,
                label: "rotor".into(),
                score: 0.95,
            },
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn oscillating_scores_raise_once_and_never_clear() {
        let cfg = AlarmConfig {
            off_hold_frames: 3,
            ..AlarmConfig::default()
        };
        let seq: Vec<Option<(&str, f64)>> = (0..40).map(|i| (i % 2 == 0).then_some(("rotor", 0.95))).collect();
        let got = run_monitor(&frames(&seq), &cfg).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].transition, Transition::Raised);
    }

    #[test]
    fn fault_then_recovery() {
        let mut seq = vec![None; 5];
        seq.extend(vec![Some(("valve", 0.97)); 8]);
        seq.extend(vec![None; 10]);
        let got = run_monitor(&frames(&seq), &AlarmConfig::default()).unwrap();
        let kinds: Vec<Transition> = got.iter().map(|e| e.transition).collect();
        assert_eq!(
            kinds,
            vec![Transition::Raised, Transition::Escalated, Transition::ReturnedToNormal]
        );
        assert_eq!(got[0].time_s, 6.0);
        assert_eq!(got[1].time_s, 8.0);
        // Five quiet frames from t = 14 close the alarm at t = 18.
        assert_eq!(got[2].time_s, 18.0);
    }

    #[test]
    fn sustained_new_label_replaces_the_open_one() {
        let mut seq = vec![Some(("a", 0.9)); 4];
        seq.extend(vec![Some(("b", 0.9)); 4]);
        let got = run_monitor(&frames(&seq), &AlarmConfig::default()).unwrap();
        let summary: Vec<(Transition, &str)> = got.iter().map(|e| (e.transition, e.label.as_str())).collect();
        assert_eq!(
            summary,
            vec![
                (Transition::Raised, "a"),
                (Transition::Escalated, "a"),
                (Transition::ReturnedToNormal, "a"),
                (Transition::Raised, "b"),
            ]
        );
        assert_eq!(got[3].time_s, 7.0);
    }

    #[test]
    fn non_monotonic_time_is_rejected() {
        let s = AlarmState {
            last_time_s: Some(2.0),
            ..AlarmState::default()
        };
        assert!(matches!(
            step(&s, &[], 2.0, &AlarmConfig::default()),
            Err(Error::NonMonotonicTime { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = AlarmConfig {
            off_threshold: 0.6,
            ..AlarmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AlarmConfig {
            on_hold_frames: 0,
            ..AlarmConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn event_json_field_names() {
        let e = AlarmEvent {
            time_s: 1.5,
            transition: Transition::ReturnedToNormal,
            label: "x".into(),
            score: 0.25,
        };
        assert_eq!(
            e.to_json_line(),
            r#"{"time_s":1.5,"transition":"returned_to_normal","label":"x","score":0.25}"#
        );
    }

    /// Independent fold written against the documented transitions.
    fn oracle(frames: &[ClassifiedFrame], cfg: &AlarmConfig) -> Vec<AlarmEvent> {
        let mut state = AlarmState::default();
        let mut out = Vec::new();
        for f in frames {
            let (s, e) = step(&state, &f.labels, f.time_s, cfg).unwrap();
            state = s;
            out.extend(e);
        }
        out
    }

    fn arb_frames() -> impl Strategy<Value = Vec<ClassifiedFrame>> {
        let label = prop_oneof![Just("a".to_string()), Just("b".to_string())];
        prop::collection::vec(prop::option::of((label, 0.0f64..1.0)), 0..80).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, l)| ClassifiedFrame {
                    time_s: i as f64 * 0.5,
                    labels: l.into_iter().collect(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn fold_invariants(f in arb_frames()) {
            let cfg = AlarmConfig::default();
            let got = run_monitor(&f, &cfg).unwrap();
            prop_assert_eq!(&got, &oracle(&f, &cfg));
            prop_assert_eq!(&got, &run_monitor(&f, &cfg).unwrap());
            // Raised / ReturnedToNormal alternate per label.
            for label in ["a", "b"] {
                let mut open = false;
                for e in got.iter().filter(|e| e.label == label) {
                    match e.transition {
                        Transition::Raised => { prop_assert!(!open); open = true; }
                        Transition::ReturnedToNormal => { prop_assert!(open); open = false; }
                        Transition::Escalated => prop_assert!(open),
                    }
                }
            }
            // Times never decrease.
            prop_assert!(got.windows(2).all(|w| w[0].time_s <= w[1].time_s));
        }

        #[test]
        fn alternating_between_thresholds_raises_at_most_once(
            hi in 0.8f64..1.0,
            lo in 0.0f64..0.3,
            n in 1usize..100,
            on_hold in 1usize..6,
            off_hold in 1usize..6,
        ) {
            let cfg = AlarmConfig { on_hold_frames: on_hold, off_hold_frames: off_hold.max(2), ..AlarmConfig::default() };
            let f: Vec<ClassifiedFrame> = (0..n)
                .map(|i| ClassifiedFrame {
                    time_s: i as f64,
                    labels: vec![("a".to_string(), if i % 2 == 0 { hi } else { lo })],
                })
                .collect();
            let raised = run_monitor(&f, &cfg).unwrap().iter().filter(|e| e.transition == Transition::Raised).count();
            prop_assert!(raised <= 1);
        }

        #[test]
        fn alternating_inside_the_hysteresis_band_raises_at_most_once(
            a in 0.31f64..0.8,
            b in 0.31f64..0.8,
            n in 1usize..100,
            on_hold in 1usize..6,
            off_hold in 1usize..6,
        ) {
            let cfg = AlarmConfig { on_hold_frames: on_hold, off_hold_frames: off_hold, ..AlarmConfig::default() };
            let f: Vec<ClassifiedFrame> = (0..n)
                .map(|i| ClassifiedFrame {
                    time_s: i as f64,
                    labels: vec![("a".to_string(), if i % 2 == 0 { a } else { b })],
                })
                .collect();
            let raised = run_monitor(&f, &cfg).unwrap().iter().filter(|e| e.transition == Transition::Raised).count();
            prop_assert!(raised <= 1);
        }
    }
}
