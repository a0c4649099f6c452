use std::thread;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use oran_isac::transport::{Connection, Endpoint, FrameClass, Listener, TransportError};

fn tcp_pair() -> (Connection, Connection) {
    let listener = Listener::bind_tcp_ephemeral().unwrap();
    let ep = listener.endpoint().unwrap();
    let server = thread::spawn(move || listener.accept(Duration::from_secs(5)).unwrap());
    let client = Connection::connect(&ep, Duration::from_secs(5)).unwrap();
    (client, server.join().unwrap())
}

fn in_order(a: Connection, b: Connection) {
    let n = 10_000u32;
    let sender = thread::spawn(move || {
        for i in 0..n {
            a.send_until(i.to_be_bytes().to_vec(), FrameClass::Control, Instant::now() + Duration::from_secs(5))
                .unwrap();
        }
        a
    });
    for i in 0..n {
        let f = b.recv_timeout(Duration::from_secs(5)).unwrap();
        assert_eq!(u32::from_be_bytes(f.try_into().unwrap()), i);
    }
    drop(sender.join().unwrap());
}

#[test]
fn ten_thousand_frames_arrive_in_order_inproc() {
    let (a, b) = Connection::pair();
    in_order(a, b);
}

#[test]
fn ten_thousand_frames_arrive_in_order_tcp() {
    let (a, b) = tcp_pair();
    in_order(a, b);
}

#[test]
fn tcp_peer_drop_is_seen_within_a_second() {
    let (a, b) = tcp_pair();
    a.send(vec![1, 2, 3], FrameClass::Telemetry).unwrap();
    drop(b);
    let start = Instant::now();
    loop {
        match a.send(vec![0; 1024], FrameClass::Telemetry) {
            Err(TransportError::Disconnected) => break,
            _ if start.elapsed() > Duration::from_secs(1) => panic!("no disconnect after 1 s"),
            _ => thread::sleep(Duration::from_millis(5)),
        }
    }
    assert!(start.elapsed() < Duration::from_secs(1));
    assert!(matches!(
        a.recv_timeout(Duration::from_secs(1)),
        Err(TransportError::Disconnected)
    ));
}

#[test]
fn receiver_sees_sender_drop_after_draining() {
    let (a, b) = tcp_pair();
    a.send(vec![9; 10], FrameClass::Control).unwrap();
    drop(a);
    assert_eq!(b.recv_timeout(Duration::from_secs(1)).unwrap(), vec![9; 10]);
    assert!(matches!(
        b.recv_timeout(Duration::from_secs(1)),
        Err(TransportError::Disconnected)
    ));
}

#[test]
fn backpressure_drops_only_old_telemetry() {
    let (a, b) = Connection::pair_with_capacity(4);
    a.send(vec![100], FrameClass::Control).unwrap();
    for i in 0..10u8 {
        a.send(vec![i], FrameClass::Telemetry).unwrap();
    }
    // A full outbox refuses control rather than dropping it; the caller may block.
    assert_eq!(a.send(vec![101], FrameClass::Control), Err(TransportError::Backpressure));
    let got: Vec<u8> = std::iter::from_fn(|| b.try_recv().ok()).map(|f| f[0]).collect();
    // The newest telemetry survives, still ascending, behind the control frame.
    assert_eq!(got, vec![100, 7, 8, 9]);
    assert_eq!(a.evicted_telemetry(), 7);
    a.send_until(vec![101], FrameClass::Control, Instant::now() + Duration::from_millis(100))
        .unwrap();
    assert_eq!(b.try_recv().unwrap(), vec![101]);
}

#[test]
fn endpoint_port_bounds() {
    assert!(Endpoint::tcp("127.0.0.1:0").is_err());
    assert!(Endpoint::tcp("127.0.0.1:65536").is_err());
    assert!(Endpoint::tcp("127.0.0.1:1").is_ok());
    assert!("tcp://127.0.0.1:65535".parse::<Endpoint>().is_ok());
    assert!("udp://x".parse::<Endpoint>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn frames_survive_whole(sizes in proptest::collection::vec(1usize..=65_536, 1..12), seed in any::<u8>()) {
        let frames: Vec<Vec<u8>> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (0..n).map(|k| (k as u8).wrapping_mul(31).wrapping_add(seed ^ i as u8)).collect())
            .collect();
        for (a, b) in [Connection::pair(), tcp_pair()] {
            for f in &frames {
                a.send(f.clone(), FrameClass::Control).unwrap();
            }
            for f in &frames {
                let got = b.recv_timeout(Duration::from_secs(5)).unwrap();
                prop_assert_eq!(&got, f);
            }
        }
    }
}
