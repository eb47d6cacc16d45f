#[path = "support/arb.rs"]
mod arb;

use std::cell::RefCell;
use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use qrs_core::wire::{batch_alarms, decode, encode, unbatch_alarms, DecodeError, DetectorAlarm, Message, HEADER_LEN};
use qrs_core::StationId;

use arb::{corrupt, corruption, flowspec, message};

#[test]
fn round_trip_ten_thousand_messages_of_every_kind() {
    let seen = RefCell::new(BTreeMap::new());
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&message(), |m| {
            let bytes = encode(&m).unwrap();
            prop_assert_eq!(bytes.len(), m.encoded_len().unwrap());
            prop_assert_eq!(bytes.len(), HEADER_LEN + u16::from_be_bytes([bytes[6], bytes[7]]) as usize);
            prop_assert_eq!(bytes[5], m.message_type() as u8);
            prop_assert_eq!(decode(&bytes).unwrap(), m.clone());
            *seen.borrow_mut().entry(m.message_type().name()).or_insert(0) += 1;
            Ok(())
        })
        .unwrap();
    let seen = seen.into_inner();
    assert_eq!(seen.len(), 9, "{seen:?}");
    assert!(seen.values().all(|&n| n > 100), "{seen:?}");
}

fn check_corrupted(m: &Message, c: &arb::Corruption) -> Result<(), TestCaseError> {
    let bytes = corrupt(encode(m).unwrap(), c);
    match decode(&bytes) {
        // no checksum: a damaged body can still be a valid message, but then
        // it must be the message those exact bytes encode
        Ok(other) => prop_assert_eq!(encode(&other).unwrap(), bytes),
        Err(e) => {
            prop_assert!(e.offset() <= bytes.len(), "{:?} past {} bytes", e, bytes.len());
            prop_assert!(!e.to_string().is_empty());
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4000))]

    #[test]
    fn corrupted_bytes_never_panic(m in message(), c in corruption()) {
        check_corrupted(&m, &c)?;
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        if let Ok(m) = decode(&bytes) {
            prop_assert_eq!(encode(&m).unwrap(), bytes);
        }
    }

    #[test]
    fn batching_preserves_alarm_order(
        connector in any::<u32>(),
        entries in prop::collection::vec((any::<u32>(), flowspec()), 1..20),
    ) {
        let alarms: Vec<DetectorAlarm> = entries
            .iter()
            .map(|&(s, f)| DetectorAlarm { connector_id: connector, failed_station: StationId(s), failed_qos: f })
            .collect();
        let batch = batch_alarms(&alarms).unwrap();
        prop_assert_eq!(batch.entries.len(), alarms.len());
        prop_assert_eq!(unbatch_alarms(&batch), alarms.clone());

        let one = encode(&Message::CumulativeAlarm(batch)).unwrap().len();
        let many: usize = alarms
            .iter()
            .map(|a| encode(&Message::DetectorAlarm(a.clone())).unwrap().len())
            .sum();
        // the entry count costs two bytes, so saving starts at two alarms
        if alarms.len() >= 2 {
            prop_assert!(one < many);
        } else {
            prop_assert_eq!(one, many + 2);
        }
    }
}

#[test]
fn header_errors_are_named() {
    let m = Message::DetectorAlarm(DetectorAlarm {
        connector_id: 1,
        failed_station: StationId(2),
        failed_qos: qrs_core::FlowSpec::new(1, 1, 1, qrs_core::Priority::BestEffort).unwrap(),
    });
    let good = encode(&m).unwrap();

    let mut b = good.clone();
    b[1] ^= 0xff;
    assert_eq!(decode(&b), Err(DecodeError::BadMagic { offset: 1 }));

    let mut b = good.clone();
    b[4] = 9;
    assert_eq!(decode(&b), Err(DecodeError::BadVersion { offset: 4, found: 9 }));

    let mut b = good.clone();
    b[5] = 0;
    assert_eq!(decode(&b), Err(DecodeError::UnknownType { offset: 5, found: 0 }));

    assert_eq!(decode(&good[..6]), Err(DecodeError::TruncatedHeader { offset: 6 }));
    assert_eq!(
        decode(&good[..good.len() - 1]),
        Err(DecodeError::TruncatedBody { offset: good.len() - 1 })
    );

    let mut b = good.clone();
    b.push(0);
    assert_eq!(
        decode(&b),
        Err(DecodeError::TrailingBytes {
            offset: good.len(),
            count: 1
        })
    );
}
