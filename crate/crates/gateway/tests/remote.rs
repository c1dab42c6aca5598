use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::mpsc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use csi_core::model::{Stance, Assertion};
use csi_core::relay::{DistillRequest, Distiller, RelayError};
use csi_gateway::RemoteDistiller;
use serde_json::{json, Value};

/// Starts a mock distiller on its own runtime thread.
fn mock() -> SocketAddr {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route(
                    "/ok",
                    post(|Json(req): Json<Value>| async move {
                        // Echo back enough to check the request body arrived intact.
                        let room = req["room_id"].as_str().unwrap_or_default().to_owned();
                        let window = req["transcript_window"].as_array().map_or(0, |w| w.len());
                        Json(json!({"assertions": [
                            {"subject": "QB2", "stance": "For", "arguments": [format!("{room} had {window} messages")], "support_count": 9},
                            {"subject": "QB2", "stance": "For", "arguments": [], "support_count": 1},
                            {"subject": "RB1", "stance": "Against", "support_count": 1},
                            {"subject": "WR4", "stance": "For", "support_count": 1}
                        ]}))
                    }),
                )
                .route("/down", post(|| async { StatusCode::SERVICE_UNAVAILABLE }))
                .route("/garbage", post(|| async { "not json" }))
                .route(
                    "/slow",
                    post(|| async {
                        tokio::time::sleep(Duration::from_secs(2)).await;
                        Json(json!({"assertions": []}))
                    }),
                );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn request(already: &[&str]) -> DistillRequest {
    DistillRequest {
        session_id: "s".into(),
        room_id: "room-3".into(),
        transcript_window: vec![],
        tallies: BTreeMap::new(),
        already_relayed: already.iter().map(|&a| a.into()).collect::<BTreeSet<_>>(),
        options: vec!["QB2".into(), "RB1".into()],
        max_assertions: 2,
    }
}

fn remote(addr: SocketAddr, path: &str) -> RemoteDistiller {
    RemoteDistiller::new(format!("http://{addr}{path}"), Duration::from_millis(300)).unwrap()
}

#[test]
fn structured_response_becomes_assertions() {
    let addr = mock();
    let got = remote(addr, "/ok").distill(&request(&[]), 4).unwrap();
    let ids: Vec<&str> = got.iter().map(|a: &Assertion| a.id.as_str()).collect();
    assert_eq!(ids, ["room-3/QB2/for", "room-3/RB1/against"]);
    assert_eq!(got[0].stance, Stance::For);
    // capped at room size
    assert_eq!(got[0].support_count, 4);
    assert_eq!(got[0].arguments, ["room-3 had 0 messages"]);
    assert!(got[1].arguments.is_empty());
    assert!(got.iter().all(|a| a.origin_room.as_str() == "room-3"));
}

#[test]
fn already_relayed_are_dropped_before_the_cap() {
    let addr = mock();
    let got = remote(addr, "/ok").distill(&request(&["room-3/QB2/for"]), 4).unwrap();
    let ids: Vec<&str> = got.iter().map(|a| a.id.as_str()).collect();
    assert_eq!(ids, ["room-3/RB1/against", "room-3/WR4/for"]);
}

#[test]
fn failures_are_remote_unavailable() {
    let addr = mock();
    for path in ["/down", "/garbage", "/slow", "/missing"] {
        match remote(addr, path).distill(&request(&[]), 4) {
            Err(RelayError::RemoteUnavailable(_)) => {}
            other => panic!("{path}: {other:?}"),
        }
    }
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    assert!(matches!(
        remote(closed, "/").distill(&request(&[]), 4),
        Err(RelayError::RemoteUnavailable(_))
    ));
}
