//! Ordered event record of one protocol run.
//!
//! The transcript is the referee's log: it records both parties' actions,
//! including the receiver's private settings, with an abstract tick per
//! event. Only ordering relative to the detection matters for the security
//! arguments. Message counts per direction are tracked separately; the
//! sender-security invariant is that the receiver-to-sender count is zero
//! in every run.
//!
//! Serialization is JSON Lines, one event per line, using the fixed field
//! vocabulary `event`, `t`, `detector`, `slot`, `tau_a`, `tau_b`,
//! `theta_a`, `theta_b`, `outcome`, `reason`.

use crate::bit::Bit;
use crate::error::{Error, Result};
use crate::timebin::{DetectionEvent, Detector};
use serde::Serialize;

/// Abstract protocol time unit.
pub type Tick = u64;

/// How one run ended for the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// Delays matched: the receiver learned the bit with certainty.
    Conclusive(Bit),
    /// Delays differed: the receiver knows he failed to get the bit.
    Inconclusive,
    /// Zero or multiple clicks: the receiver concludes the sender cheated.
    Abort(AbortReason),
}

impl RunOutcome {
    pub fn is_conclusive(&self) -> bool {
        matches!(self, RunOutcome::Conclusive(_))
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, RunOutcome::Abort(_))
    }

    pub fn conclusive_bit(&self) -> Option<Bit> {
        match self {
            RunOutcome::Conclusive(b) => Some(*b),
            _ => None,
        }
    }

    fn label(&self) -> String {
        match self {
            RunOutcome::Conclusive(b) => format!("conclusive_{b}"),
            RunOutcome::Inconclusive => "inconclusive".to_string(),
            RunOutcome::Abort(_) => "abort".to_string(),
        }
    }
}

/// Why a run aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    NoClick,
    MultiClick,
}

impl AbortReason {
    fn label(&self) -> &'static str {
        match self {
            AbortReason::NoClick => "no_click",
            AbortReason::MultiClick => "multi_click",
        }
    }
}

/// One logged protocol event.
#[derive(Debug, Clone, PartialEq)]
pub enum TranscriptEvent {
    /// Receiver fixed his delay and phase settings.
    BobConfigured { t: Tick, tau_b: usize, theta_b: f64 },
    /// Sender released the photon at slot `slot`.
    PhotonSent { t: Tick, slot: usize },
    /// Receiver's detectors fired (or failed to). `outside_window` marks a
    /// click whose slot lies past the agreed window end; the receiver's own
    /// delay can push arrivals there and the click is still used.
    Detection {
        t: Tick,
        event: DetectionEvent,
        outside_window: bool,
    },
    /// The agreed announcement delay has elapsed.
    AnnouncementDue { t: Tick },
    /// Sender announced her delay setting.
    TauAnnounced { t: Tick, tau_a: usize },
    /// Receiver's final verdict.
    Concluded { t: Tick, outcome: RunOutcome },
}

impl TranscriptEvent {
    pub fn tick(&self) -> Tick {
        match self {
            TranscriptEvent::BobConfigured { t, .. }
            | TranscriptEvent::PhotonSent { t, .. }
            | TranscriptEvent::Detection { t, .. }
            | TranscriptEvent::AnnouncementDue { t }
            | TranscriptEvent::TauAnnounced { t, .. }
            | TranscriptEvent::Concluded { t, .. } => *t,
        }
    }
}

/// Flat JSONL record; field order is the serialization order.
#[derive(Serialize)]
struct EventRecord {
    event: &'static str,
    t: Tick,
    #[serde(skip_serializing_if = "Option::is_none")]
    detector: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_a: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'static str>,
}

impl EventRecord {
    fn blank(event: &'static str, t: Tick) -> Self {
        Self {
            event,
            t,
            detector: None,
            slot: None,
            tau_a: None,
            tau_b: None,
            theta_a: None,
            theta_b: None,
            outcome: None,
            reason: None,
        }
    }
}

/// Full record of one run: events in order plus channel message counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
    messages_to_bob: usize,
    messages_to_alice: usize,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn record(&mut self, event: TranscriptEvent) {
        self.events.push(event);
    }

    pub(crate) fn set_message_counts(&mut self, to_bob: usize, to_alice: usize) {
        self.messages_to_bob = to_bob;
        self.messages_to_alice = to_alice;
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn messages_to_bob(&self) -> usize {
        self.messages_to_bob
    }

    pub fn messages_to_alice(&self) -> usize {
        self.messages_to_alice
    }

    pub fn outcome(&self) -> Option<RunOutcome> {
        self.events.iter().rev().find_map(|e| match e {
            TranscriptEvent::Concluded { outcome, .. } => Some(*outcome),
            _ => None,
        })
    }

    pub fn announced_tau(&self) -> Option<usize> {
        self.events.iter().find_map(|e| match e {
            TranscriptEvent::TauAnnounced { tau_a, .. } => Some(*tau_a),
            _ => None,
        })
    }

    /// Delay setting from the first receiver configuration (his blind
    /// choice before any announcement).
    pub fn initial_bob_tau(&self) -> Option<usize> {
        self.events.iter().find_map(|e| match e {
            TranscriptEvent::BobConfigured { tau_b, .. } => Some(*tau_b),
            _ => None,
        })
    }

    /// Delay setting in force when the measurement happened (the last
    /// configuration; a storing receiver reconfigures after the
    /// announcement).
    pub fn effective_bob_tau(&self) -> Option<usize> {
        self.events.iter().rev().find_map(|e| match e {
            TranscriptEvent::BobConfigured { tau_b, .. } => Some(*tau_b),
            _ => None,
        })
    }

    pub fn effective_bob_theta(&self) -> Option<f64> {
        self.events.iter().rev().find_map(|e| match e {
            TranscriptEvent::BobConfigured { theta_b, .. } => Some(*theta_b),
            _ => None,
        })
    }

    pub fn photon_slot(&self) -> Option<usize> {
        self.events.iter().find_map(|e| match e {
            TranscriptEvent::PhotonSent { slot, .. } => Some(*slot),
            _ => None,
        })
    }

    pub fn detection(&self) -> Option<(Tick, DetectionEvent, bool)> {
        self.events.iter().find_map(|e| match e {
            TranscriptEvent::Detection {
                t,
                event,
                outside_window,
            } => Some((*t, *event, *outside_window)),
            _ => None,
        })
    }

    pub fn announcement_tick(&self) -> Option<Tick> {
        self.events.iter().find_map(|e| match e {
            TranscriptEvent::TauAnnounced { t, .. } => Some(*t),
            _ => None,
        })
    }

    /// True when the detection is logged strictly before the announcement.
    /// Holds for every honest run; the store-and-wait attack with a long
    /// enough memory is exactly the case where it fails.
    pub fn detection_before_announcement(&self) -> bool {
        let detection_index = self
            .events
            .iter()
            .position(|e| matches!(e, TranscriptEvent::Detection { .. }));
        let announce_index = self
            .events
            .iter()
            .position(|e| matches!(e, TranscriptEvent::TauAnnounced { .. }));
        match (detection_index, announce_index) {
            (Some(d), Some(a)) => d < a,
            _ => false,
        }
    }

    /// Structural checks: ticks never decrease, an announcement is preceded
    /// by its due marker, and a verdict (if any) closes the run.
    pub fn validate(&self) -> Result<()> {
        let mut last_tick = 0;
        let mut due_seen = false;
        for (i, event) in self.events.iter().enumerate() {
            if event.tick() < last_tick {
                return Err(Error::InvalidConfig(format!(
                    "event {i} goes back in time: {} after {last_tick}",
                    event.tick()
                )));
            }
            last_tick = event.tick();
            match event {
                TranscriptEvent::AnnouncementDue { .. } => due_seen = true,
                TranscriptEvent::TauAnnounced { .. } if !due_seen => {
                    return Err(Error::InvalidConfig(
                        "announcement before its due marker".to_string(),
                    ));
                }
                TranscriptEvent::Concluded { .. } if i + 1 != self.events.len() => {
                    return Err(Error::InvalidConfig(
                        "events recorded after the verdict".to_string(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// JSON Lines serialization, one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            let record = match event {
                TranscriptEvent::BobConfigured { t, tau_b, theta_b } => EventRecord {
                    tau_b: Some(*tau_b),
                    theta_b: Some(*theta_b),
                    ..EventRecord::blank("bob_configured", *t)
                },
                TranscriptEvent::PhotonSent { t, slot } => EventRecord {
                    slot: Some(*slot),
                    ..EventRecord::blank("photon_sent", *t)
                },
                TranscriptEvent::Detection {
                    t,
                    event,
                    outside_window,
                } => {
                    let mut record = EventRecord::blank("detection", *t);
                    match event {
                        DetectionEvent::Click { detector, slot } => {
                            record.detector = Some(match detector {
                                Detector::D0 => "D0",
                                Detector::D1 => "D1",
                            });
                            record.slot = Some(*slot);
                            if *outside_window {
                                record.reason = Some("outside_window");
                            }
                        }
                        DetectionEvent::NoClick => record.reason = Some("no_click"),
                        DetectionEvent::MultiClick => record.reason = Some("multi_click"),
                    }
                    record
                }
                TranscriptEvent::AnnouncementDue { t } => {
                    EventRecord::blank("announcement_due", *t)
                }
                TranscriptEvent::TauAnnounced { t, tau_a } => EventRecord {
                    tau_a: Some(*tau_a),
                    ..EventRecord::blank("tau_announced", *t)
                },
                TranscriptEvent::Concluded { t, outcome } => {
                    let mut record = EventRecord::blank("concluded", *t);
                    record.outcome = Some(outcome.label());
                    if let RunOutcome::Abort(reason) = outcome {
                        record.reason = Some(reason.label());
                    }
                    record
                }
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}
