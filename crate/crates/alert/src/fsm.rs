//! The alert state machine.
//!
//! States: Idle, PreIctalAlarm, IctalActive, HospitalAlerted, Stopped.
//! A pre-ictal prediction from Idle raises the patient alarm and one SMS
//! per caretaker. Any ictal prediction enters IctalActive (recording the
//! seizure start), notifying caretakers by SMS and the doctor by email.
//! When an ictal episode persists beyond five virtual minutes, the
//! hospital is notified exactly once. A healthy prediction from any alert
//! state returns to Idle and flushes one seizure event for the episode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use epilnet_wire::{EventKind, GeoFix, LocationSource, SeizureEvent};

use crate::contacts::{ContactBook, Role};

/// Continuous ictal seconds after which the hospital is alerted
/// (strictly greater than).
pub const HOSPITAL_THRESHOLD_SECONDS: u64 = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictedClass {
    Healthy,
    PreIctal,
    Ictal,
    InterIctal,
}

impl PredictedClass {
    /// Map a served label name onto the alert semantics. Three-class
    /// labels map directly; five-class letters fold A/B into healthy and
    /// C into inter-ictal (which never changes the alert state).
    pub fn from_label_name(label: &str) -> Option<Self> {
        match label {
            "healthy" | "A" | "B" => Some(Self::Healthy),
            "pre-ictal" | "D" => Some(Self::PreIctal),
            "ictal" | "E" => Some(Self::Ictal),
            "inter-ictal" | "C" => Some(Self::InterIctal),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Healthy => "healthy",
            Self::PreIctal => "pre-ictal",
            Self::Ictal => "ictal",
            Self::InterIctal => "inter-ictal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    PreIctalAlarm,
    IctalActive,
    HospitalAlerted,
    Stopped,
}

/// Current machine state. The seizure start is set exactly while in
/// IctalActive or HospitalAlerted.
#[derive(Clone, Debug, PartialEq)]
pub struct AlertState {
    pub phase: Phase,
    pub seizure_start: Option<u64>,
    pub last_prediction: Option<PredictedClass>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Alarm,
    Sms,
    Email,
    Hospital,
}

/// Location attached to a notification: a fix (possibly stale) or the
/// explicit "location unavailable" marker, never absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocationInfo {
    Fix(GeoFix),
    Marker(String),
}

impl LocationInfo {
    pub fn unavailable() -> Self {
        Self::Marker("location unavailable".to_owned())
    }

    pub fn fix(&self) -> Option<&GeoFix> {
        match self {
            Self::Fix(f) => Some(f),
            Self::Marker(_) => None,
        }
    }
}

/// One recorded notification. Append-only, totally ordered by virtual
/// time; contains no wall-clock data so replays are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub channel: Channel,
    pub recipient: String,
    pub at: u64,
    pub class: String,
    pub location: LocationInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<u64>,
}

/// Simulated location providers: network preferred, GPS fallback, then the
/// last known fix marked stale, then the explicit unavailable marker.
#[derive(Clone, Debug)]
pub struct LocationProviders {
    pub network_up: bool,
    pub gps_up: bool,
    network_coords: (f64, f64),
    gps_coords: (f64, f64),
    last_fix: Option<GeoFix>,
}

impl Default for LocationProviders {
    fn default() -> Self {
        Self {
            network_up: true,
            gps_up: true,
            network_coords: (28.6139, 77.2090),
            gps_coords: (28.6129, 77.2295),
            last_fix: None,
        }
    }
}

impl LocationProviders {
    pub fn fix(&mut self) -> LocationInfo {
        if self.network_up {
            let fix = GeoFix {
                lat: self.network_coords.0,
                lon: self.network_coords.1,
                source: LocationSource::Network,
                stale: false,
            };
            self.last_fix = Some(fix);
            return LocationInfo::Fix(fix);
        }
        if self.gps_up {
            let fix = GeoFix {
                lat: self.gps_coords.0,
                lon: self.gps_coords.1,
                source: LocationSource::Gps,
                stale: false,
            };
            self.last_fix = Some(fix);
            return LocationInfo::Fix(fix);
        }
        match self.last_fix {
            Some(mut fix) => {
                fix.stale = true;
                LocationInfo::Fix(fix)
            }
            None => LocationInfo::unavailable(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FsmError {
    #[error("prediction received before the service was started")]
    NotStarted,
    #[error("the service needs at least one caretaker contact to start")]
    NoCaretakers,
    #[error("the service is already running")]
    AlreadyStarted,
}

/// Everything that happened during one alert episode, buffered until the
/// patient recovers (or the service stops) and then flushed as exactly one
/// seizure event.
#[derive(Clone, Debug, Default)]
struct EpisodeBuffer {
    alarm_at: Option<u64>,
    ictal_start: Option<u64>,
    hospital_at: Option<u64>,
    location: Option<GeoFix>,
    probabilities: Option<Vec<f64>>,
}

impl EpisodeBuffer {
    fn into_event(self, end: u64) -> SeizureEvent {
        match self.ictal_start {
            Some(start) => SeizureEvent {
                kind: EventKind::Ictal,
                timestamp: start,
                location: self.location,
                duration_seconds: Some(end.saturating_sub(start)),
                probabilities: self.probabilities,
            },
            None => SeizureEvent {
                kind: EventKind::PreIctalAlarm,
                timestamp: self.alarm_at.unwrap_or(end),
                location: self.location,
                duration_seconds: None,
                probabilities: self.probabilities,
            },
        }
    }
}

pub struct AlertFsm {
    started: bool,
    state: AlertState,
    episode: Option<EpisodeBuffer>,
    hospital_threshold_s: u64,
}

impl Default for AlertFsm {
    fn default() -> Self {
        Self::new()
    }
}

impl AlertFsm {
    pub fn new() -> Self {
        Self {
            started: false,
            state: AlertState {
                phase: Phase::Idle,
                seizure_start: None,
                last_prediction: None,
            },
            episode: None,
            hospital_threshold_s: HOSPITAL_THRESHOLD_SECONDS,
        }
    }

    pub fn state(&self) -> &AlertState {
        &self.state
    }

    pub fn is_started(&self) -> bool {
        self.started && self.state.phase != Phase::Stopped
    }

    /// Start the prediction service; refuses without a caretaker.
    pub fn start(&mut self, contacts: &ContactBook) -> Result<(), FsmError> {
        if self.is_started() {
            return Err(FsmError::AlreadyStarted);
        }
        if contacts.caretaker_count() == 0 {
            return Err(FsmError::NoCaretakers);
        }
        self.started = true;
        self.state.phase = Phase::Idle;
        Ok(())
    }

    /// Stop the service. A truncated episode, if any, is flushed with the
    /// stop time as its end.
    pub fn stop(&mut self, now: u64) -> Option<SeizureEvent> {
        let event = self.episode.take().map(|e| e.into_event(now));
        self.state.phase = Phase::Stopped;
        self.state.seizure_start = None;
        self.started = false;
        event
    }

    /// Feed one prediction into the machine at virtual time `now`.
    /// Returns the notifications raised by the transition and, on recovery
    /// to Idle, the flushed seizure event for the completed episode.
    pub fn on_prediction(
        &mut self,
        class: PredictedClass,
        now: u64,
        contacts: &ContactBook,
        providers: &mut LocationProviders,
        probabilities: Option<Vec<f64>>,
    ) -> Result<(Vec<NotificationRecord>, Option<SeizureEvent>), FsmError> {
        if !self.is_started() {
            return Err(FsmError::NotStarted);
        }
        self.state.last_prediction = Some(class);
        let mut notifications = Vec::new();
        let mut flushed = None;

        match (self.state.phase, class) {
            (Phase::Idle, PredictedClass::PreIctal) => {
                self.state.phase = Phase::PreIctalAlarm;
                let location = providers.fix();
                let episode = self.episode.get_or_insert_with(EpisodeBuffer::default);
                episode.alarm_at = Some(now);
                episode.location = location.fix().copied();
                if episode.probabilities.is_none() {
                    episode.probabilities = probabilities;
                }
                notifications.push(NotificationRecord {
                    channel: Channel::Alarm,
                    recipient: "patient".to_owned(),
                    at: now,
                    class: class.as_str().to_owned(),
                    location: location.clone(),
                    duration_seconds: None,
                });
                for caretaker in contacts.with_role(Role::Caretaker) {
                    notifications.push(NotificationRecord {
                        channel: Channel::Sms,
                        recipient: caretaker.phone.clone(),
                        at: now,
                        class: class.as_str().to_owned(),
                        location: location.clone(),
                        duration_seconds: None,
                    });
                }
            }

            (Phase::Idle | Phase::PreIctalAlarm, PredictedClass::Ictal) => {
                self.state.phase = Phase::IctalActive;
                self.state.seizure_start = Some(now);
                let location = providers.fix();
                let episode = self.episode.get_or_insert_with(EpisodeBuffer::default);
                episode.ictal_start = Some(now);
                episode.location = location.fix().copied().or(episode.location);
                if let Some(p) = probabilities {
                    episode.probabilities = Some(p);
                }
                for caretaker in contacts.with_role(Role::Caretaker) {
                    notifications.push(NotificationRecord {
                        channel: Channel::Sms,
                        recipient: caretaker.phone.clone(),
                        at: now,
                        class: class.as_str().to_owned(),
                        location: location.clone(),
                        duration_seconds: None,
                    });
                }
                for doctor in contacts.with_role(Role::Doctor) {
                    notifications.push(NotificationRecord {
                        channel: Channel::Email,
                        recipient: doctor.name.clone(),
                        at: now,
                        class: class.as_str().to_owned(),
                        location: location.clone(),
                        duration_seconds: None,
                    });
                }
            }

            (Phase::IctalActive, PredictedClass::Ictal) => {
                let start = self
                    .state
                    .seizure_start
                    .expect("IctalActive always has a seizure start");
                if now.saturating_sub(start) > self.hospital_threshold_s {
                    self.state.phase = Phase::HospitalAlerted;
                    let location = providers.fix();
                    if let Some(episode) = self.episode.as_mut() {
                        episode.hospital_at = Some(now);
                    }
                    let recipient = contacts
                        .with_role(Role::Hospital)
                        .next()
                        .map(|c| c.name.clone())
                        .unwrap_or_else(|| "hospital".to_owned());
                    notifications.push(NotificationRecord {
                        channel: Channel::Hospital,
                        recipient,
                        at: now,
                        class: class.as_str().to_owned(),
                        location,
                        duration_seconds: Some(now - start),
                    });
                }
            }

            // Hospital already alerted; the episode just continues.
            (Phase::HospitalAlerted, PredictedClass::Ictal) => {}

            (
                Phase::PreIctalAlarm | Phase::IctalActive | Phase::HospitalAlerted,
                PredictedClass::Healthy,
            ) => {
                flushed = self.episode.take().map(|e| e.into_event(now));
                self.state.phase = Phase::Idle;
                self.state.seizure_start = None;
            }

            // A repeated pre-ictal while already alarmed, a pre-ictal
            // during an ictal episode, inter-ictal anywhere, and healthy
            // while idle change nothing.
            (Phase::PreIctalAlarm, PredictedClass::PreIctal)
            | (Phase::IctalActive | Phase::HospitalAlerted, PredictedClass::PreIctal)
            | (_, PredictedClass::InterIctal)
            | (Phase::Idle, PredictedClass::Healthy) => {}

            (Phase::Stopped, _) => unreachable!("is_started() excludes Stopped"),
        }

        Ok((notifications, flushed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contacts::Contact;

    fn book(caretakers: usize, doctors: usize) -> ContactBook {
        let mut book = ContactBook::new();
        for i in 0..caretakers {
            book.add(Contact {
                name: format!("care{i}"),
                phone: format!("+1-{i:03}"),
                role: Role::Caretaker,
            })
            .unwrap();
        }
        for i in 0..doctors {
            book.add(Contact {
                name: format!("doc{i}"),
                phone: format!("+2-{i:03}"),
                role: Role::Doctor,
            })
            .unwrap();
        }
        book
    }

    #[test]
    fn start_requires_a_caretaker() {
        let mut fsm = AlertFsm::new();
        assert_eq!(fsm.start(&book(0, 1)), Err(FsmError::NoCaretakers));
        assert!(fsm.start(&book(1, 0)).is_ok());
    }

    #[test]
    fn prediction_before_start_is_rejected() {
        let mut fsm = AlertFsm::new();
        let mut providers = LocationProviders::default();
        assert_eq!(
            fsm.on_prediction(
                PredictedClass::PreIctal,
                0,
                &book(1, 0),
                &mut providers,
                None
            )
            .unwrap_err(),
            FsmError::NotStarted
        );
    }

    #[test]
    fn pre_ictal_alarm_with_one_sms_per_caretaker() {
        let contacts = book(2, 1);
        let mut fsm = AlertFsm::new();
        fsm.start(&contacts).unwrap();
        let mut providers = LocationProviders::default();
        let (notifications, flushed) = fsm
            .on_prediction(PredictedClass::PreIctal, 0, &contacts, &mut providers, None)
            .unwrap();
        assert!(flushed.is_none());
        assert_eq!(fsm.state().phase, Phase::PreIctalAlarm);
        let alarms = notifications
            .iter()
            .filter(|n| n.channel == Channel::Alarm)
            .count();
        let sms = notifications
            .iter()
            .filter(|n| n.channel == Channel::Sms)
            .count();
        assert_eq!((alarms, sms), (1, 2));
        // Every notification carries a location or the explicit marker.
        for n in &notifications {
            match &n.location {
                LocationInfo::Fix(f) => assert_eq!(f.source, LocationSource::Network),
                LocationInfo::Marker(m) => assert_eq!(m, "location unavailable"),
            }
        }
    }

    #[test]
    fn hospital_alert_after_strictly_more_than_threshold() {
        let contacts = book(1, 1);
        let mut fsm = AlertFsm::new();
        fsm.start(&contacts).unwrap();
        let mut providers = LocationProviders::default();
        fsm.on_prediction(PredictedClass::Ictal, 100, &contacts, &mut providers, None)
            .unwrap();
        assert_eq!(fsm.state().phase, Phase::IctalActive);
        assert_eq!(fsm.state().seizure_start, Some(100));

        // Exactly 300 elapsed seconds: not yet.
        let (n, _) = fsm
            .on_prediction(PredictedClass::Ictal, 400, &contacts, &mut providers, None)
            .unwrap();
        assert!(n.is_empty());
        assert_eq!(fsm.state().phase, Phase::IctalActive);

        // 301 elapsed seconds: alert once.
        let (n, _) = fsm
            .on_prediction(PredictedClass::Ictal, 401, &contacts, &mut providers, None)
            .unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].channel, Channel::Hospital);
        assert_eq!(n[0].duration_seconds, Some(301));
        assert_eq!(fsm.state().phase, Phase::HospitalAlerted);

        // Never again within the same episode.
        let (n, _) = fsm
            .on_prediction(PredictedClass::Ictal, 900, &contacts, &mut providers, None)
            .unwrap();
        assert!(n.is_empty());
    }

    #[test]
    fn recovery_from_pre_ictal_never_reaches_hospital_and_flushes_alarm_event() {
        let contacts = book(1, 0);
        let mut fsm = AlertFsm::new();
        fsm.start(&contacts).unwrap();
        let mut providers = LocationProviders::default();
        fsm.on_prediction(PredictedClass::PreIctal, 10, &contacts, &mut providers, None)
            .unwrap();
        let (notifications, flushed) = fsm
            .on_prediction(PredictedClass::Healthy, 70, &contacts, &mut providers, None)
            .unwrap();
        assert!(notifications.is_empty());
        let event = flushed.unwrap();
        assert_eq!(event.kind, EventKind::PreIctalAlarm);
        assert_eq!(event.timestamp, 10);
        assert!(event.duration_seconds.is_none());
        assert_eq!(fsm.state().phase, Phase::Idle);
    }

    #[test]
    fn completed_ictal_episode_flushes_one_ictal_event_with_duration() {
        let contacts = book(1, 1);
        let mut fsm = AlertFsm::new();
        fsm.start(&contacts).unwrap();
        let mut providers = LocationProviders::default();
        fsm.on_prediction(PredictedClass::PreIctal, 0, &contacts, &mut providers, None)
            .unwrap();
        fsm.on_prediction(
            PredictedClass::Ictal,
            60,
            &contacts,
            &mut providers,
            Some(vec![0.1, 0.2, 0.7]),
        )
        .unwrap();
        let (_, flushed) = fsm
            .on_prediction(PredictedClass::Healthy, 105, &contacts, &mut providers, None)
            .unwrap();
        let event = flushed.unwrap();
        assert_eq!(event.kind, EventKind::Ictal);
        assert_eq!(event.timestamp, 60);
        assert_eq!(event.duration_seconds, Some(45));
        assert_eq!(event.probabilities.as_deref(), Some(&[0.1, 0.2, 0.7][..]));
        assert!(event.duration_field_valid());
    }

    #[test]
    fn stop_mid_episode_flushes_truncated_event() {
        let contacts = book(1, 0);
        let mut fsm = AlertFsm::new();
        fsm.start(&contacts).unwrap();
        let mut providers = LocationProviders::default();
        fsm.on_prediction(PredictedClass::Ictal, 20, &contacts, &mut providers, None)
            .unwrap();
        let event = fsm.stop(50).unwrap();
        assert_eq!(event.kind, EventKind::Ictal);
        assert_eq!(event.duration_seconds, Some(30));
        assert_eq!(fsm.state().phase, Phase::Stopped);
        // Predictions after stop are rejected.
        assert_eq!(
            fsm.on_prediction(PredictedClass::Ictal, 60, &contacts, &mut providers, None)
                .unwrap_err(),
            FsmError::NotStarted
        );
    }

    #[test]
    fn location_fallback_chain() {
        let mut providers = LocationProviders::default();
        // Network preferred.
        match providers.fix() {
            LocationInfo::Fix(f) => {
                assert_eq!(f.source, LocationSource::Network);
                assert!(!f.stale);
            }
            _ => panic!("expected a fix"),
        }
        // GPS when network is down.
        providers.network_up = false;
        match providers.fix() {
            LocationInfo::Fix(f) => {
                assert_eq!(f.source, LocationSource::Gps);
                assert!(!f.stale);
            }
            _ => panic!("expected a fix"),
        }
        // Both down: last fix, marked stale.
        providers.gps_up = false;
        match providers.fix() {
            LocationInfo::Fix(f) => {
                assert_eq!(f.source, LocationSource::Gps);
                assert!(f.stale);
            }
            _ => panic!("expected a stale fix"),
        }
        // Both down, no history: the explicit marker.
        let mut fresh = LocationProviders {
            network_up: false,
            gps_up: false,
            ..LocationProviders::default()
        };
        assert_eq!(fresh.fix(), LocationInfo::unavailable());
    }
}
