use std::time::Duration;

use futures::StreamExt;
use kinetrain_core::session::gateway::{Gateway, GatewayConfig, StreamEvent};
use kinetrain_core::session::{read_log_file, replay, SessionConfig, SessionError};
use kinetrain_core::TaskId;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

fn post(url: String, body: Value) -> (u16, Value) {
    match ureq::post(&url).send_json(body) {
        Ok(r) => (r.status(), r.into_json().unwrap_or(Value::Null)),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap_or(Value::Null)),
        Err(e) => panic!("{e}"),
    }
}

async fn post_async(url: String, body: Value) -> (u16, Value) {
    tokio::task::spawn_blocking(move || post(url, body)).await.unwrap()
}

async fn next_event<S>(ws: &mut S) -> Option<StreamEvent>
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("stream stalled")?;
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(&t).expect("event parses")),
            Message::Close(_) => return None,
            _ => continue,
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn interactive_session_streams_echoes_and_stops() {
    let logs = tempfile::tempdir().unwrap();
    let www = tempfile::tempdir().unwrap();
    std::fs::write(www.path().join("index.html"), "<html>trainer</html>").unwrap();
    let config = GatewayConfig {
        bind: "127.0.0.1:0".into(),
        static_dir: Some(www.path().to_path_buf()),
        log_dir: Some(logs.path().to_path_buf()),
        tick_period: Duration::from_millis(40),
        session: SessionConfig { task: TaskId::SteepTurn, ..SessionConfig::default() },
    };
    let gw = Gateway::bind(config).await.unwrap();
    let addr = gw.local_addr().unwrap();
    let base = format!("http://{addr}");
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(gw.serve(async move {
        let _ = stop_rx.await;
    }));

    let taken = Gateway::bind(GatewayConfig { bind: addr.to_string(), ..GatewayConfig::default() }).await;
    assert!(matches!(taken, Err(SessionError::PortInUse(_))));

    let page = tokio::task::spawn_blocking({
        let u = format!("{base}/index.html");
        move || ureq::get(&u).call().unwrap().into_string().unwrap()
    })
    .await
    .unwrap();
    assert!(page.contains("trainer"));

    let (code, _) = post_async(format!("{base}/api/control"), json!({"stick_x":0.1,"stick_y":0,"throttle":0.5})).await;
    assert_eq!(code, 409);

    let (code, status) = post_async(format!("{base}/api/session/start"), json!({})).await;
    assert_eq!(code, 200, "{status}");
    assert_eq!(status["running"], true);
    let (code, _) = post_async(format!("{base}/api/session/start"), json!({})).await;
    assert_eq!(code, 409);

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/api/stream")).await.unwrap();
    match next_event(&mut ws).await {
        Some(StreamEvent::Snapshot { session, .. }) => {
            assert!(session.running);
            assert_eq!(session.config.task, TaskId::SteepTurn);
        }
        other => panic!("expected snapshot, got {other:?}"),
    }
    let first = loop {
        if let Some(StreamEvent::Tick(p)) = next_event(&mut ws).await {
            break p.tick;
        }
    };

    let (code, _) =
        post_async(format!("{base}/api/control"), json!({"stick_x":0.3,"stick_y":-0.1,"throttle":0.6})).await;
    assert_eq!(code, 202);
    let (code, _) =
        post_async(format!("{base}/api/control"), json!({"stick_x":0.3,"stick_y":-0.1,"throttle":0.6})).await;
    assert_eq!(code, 429);

    let mut echoed = None;
    let mut last = first;
    for _ in 0..4 {
        if let Some(StreamEvent::Tick(p)) = next_event(&mut ws).await {
            assert_eq!(p.tick, last + 1);
            last = p.tick;
            let input = p.control.unwrap().input;
            if input.stick_x == 0.3 && input.stick_y == -0.1 && input.throttle == 0.6 {
                echoed = Some(p.tick);
                break;
            }
        }
    }
    assert!(echoed.is_some(), "control input never echoed");

    let (code, status) = post_async(format!("{base}/api/session/stop"), json!({})).await;
    assert_eq!(code, 200);
    assert_eq!(status["running"], false);
    let mut end = None;
    while let Some(ev) = next_event(&mut ws).await {
        if let StreamEvent::End { reason, ticks, .. } = ev {
            end = Some((reason, ticks));
        }
    }
    let (reason, ticks) = end.expect("terminal event");
    assert_eq!(reason, "stopped");

    let log = read_log_file(&logs.path().join("session-1.jsonl")).unwrap();
    assert_eq!(log.records.len() as u64, ticks);
    assert!(replay(&log).is_clean());

    stop_tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
