//! Property tests over random prediction sequences: the hospital is never
//! notified without more than 300 continuous ictal seconds, at most once
//! per episode, and every completed episode flushes exactly one event.

use proptest::prelude::*;

use epilnet_alert::{
    AlertFsm, Channel, Contact, ContactBook, LocationProviders, PredictedClass, Role,
};
use epilnet_wire::EventKind;

fn contacts() -> ContactBook {
    let mut book = ContactBook::new();
    book.add(Contact {
        name: "c0".into(),
        phone: "+0".into(),
        role: Role::Caretaker,
    })
    .unwrap();
    book
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hospital_invariants_hold_for_any_prediction_sequence(
        steps in prop::collection::vec((1u64..240, 0usize..4), 1..80),
    ) {
        let classes = [
            PredictedClass::Healthy,
            PredictedClass::PreIctal,
            PredictedClass::Ictal,
            PredictedClass::InterIctal,
        ];
        let book = contacts();
        let mut providers = LocationProviders::default();
        let mut fsm = AlertFsm::new();
        fsm.start(&book).unwrap();

        let mut now = 0u64;
        let mut hospital_in_episode = 0usize;
        let mut ictal_started_in_episode = false;
        for (dt, class_idx) in steps {
            now += dt;
            let class = classes[class_idx];
            let (notifications, flushed) = fsm
                .on_prediction(class, now, &book, &mut providers, None)
                .unwrap();

            if class == PredictedClass::Ictal {
                ictal_started_in_episode = true;
            }
            for n in &notifications {
                if n.channel == Channel::Hospital {
                    hospital_in_episode += 1;
                    prop_assert!(
                        hospital_in_episode <= 1,
                        "hospital notified twice in one episode"
                    );
                    // The notification carries the continuous ictal time,
                    // which must exceed the five-minute threshold.
                    prop_assert!(
                        n.duration_seconds.unwrap_or(0) > 300,
                        "hospital notified after only {:?}s",
                        n.duration_seconds
                    );
                }
            }

            if let Some(event) = flushed {
                // One event per completed episode, ictal iff a seizure
                // happened, and the duration field is well-formed.
                if ictal_started_in_episode {
                    prop_assert_eq!(event.kind, EventKind::Ictal);
                } else {
                    prop_assert_eq!(event.kind, EventKind::PreIctalAlarm);
                }
                prop_assert!(event.duration_field_valid());
                hospital_in_episode = 0;
                ictal_started_in_episode = false;
            }

            // The seizure start is set exactly in the ictal phases.
            let state = fsm.state();
            let in_ictal_phase = matches!(
                state.phase,
                epilnet_alert::Phase::IctalActive | epilnet_alert::Phase::HospitalAlerted
            );
            prop_assert_eq!(state.seizure_start.is_some(), in_ictal_phase);
        }
    }
}
