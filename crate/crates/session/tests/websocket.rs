use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use tandem::sim::ScenarioConfig;
use tandem::SimTrace;
use tandem_session::{serve, Pace, ServerConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

struct TestServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl TestServer {
    async fn start(scenario: &str, pace: Pace, trace_dir: Option<PathBuf>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let mut cfg = ServerConfig::new(scenario_dir(), scenario);
        cfg.pace = pace;
        cfg.trace_dir = trace_dir;
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            serve(listener, cfg, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        TestServer {
            addr,
            stop: Some(tx),
            task,
        }
    }

    async fn connect(&self, session: &str) -> Ws {
        let (ws, _) = connect_async(format!("ws://{}/session/{session}", self.addr)).await.unwrap();
        ws
    }

    async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        tokio::time::timeout(Duration::from_secs(10), self.task).await.unwrap().unwrap();
    }
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("no message within 5 s")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Next message of the given type, skipping others.
async fn recv_type(ws: &mut Ws, ty: &str) -> Value {
    loop {
        let v = recv(ws).await;
        if v["type"] == ty {
            return v;
        }
    }
}

/// Next ack or error, skipping snapshots.
async fn reply(ws: &mut Ws) -> Value {
    loop {
        let v = recv(ws).await;
        if v["type"] != "snapshot" {
            return v;
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn snapshots_for(ws: &mut Ws, window: Duration) -> Vec<(Instant, Value)> {
    recv_type(ws, "snapshot").await;
    let end = Instant::now() + window;
    let mut out = Vec::new();
    while Instant::now() < end {
        let v = recv(ws).await;
        if v["type"] == "snapshot" {
            out.push((Instant::now(), v));
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn hello_and_snapshot_rate_and_pacing() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let mut ws = server.connect("rate").await;
    let hello = recv(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["v"], 1);
    assert_eq!(hello["demo"]["points"].as_array().unwrap().len(), 1000);

    let snaps = snapshots_for(&mut ws, Duration::from_secs(2)).await;
    let n = snaps.len() as f64 / 2.0;
    assert!((28.0..=32.0).contains(&n), "{n} snapshots per second");
    let (t0, first) = &snaps[0];
    let (t1, last) = snaps.last().unwrap();
    let sim = last["time"].as_f64().unwrap() - first["time"].as_f64().unwrap();
    let wall = t1.duration_since(*t0).as_secs_f64();
    assert!((sim / wall - 1.0).abs() < 0.05, "sim {sim} s over wall {wall} s");
    for w in snaps.windows(2) {
        assert!(w[1].1["time"].as_f64() >= w[0].1["time"].as_f64());
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn replies_in_order_with_clamps_and_errors() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let mut ws = server.connect("replies").await;
    recv_type(&mut ws, "hello").await;
    send(&mut ws, json!({"v":1,"req":1,"type":"human_force","frame":"tool","wrench":[500,0,0,0,0,40]})).await;
    send(&mut ws, json!({"v":1,"req":2,"type":"set_param","key":"controller.K_bar","value":3.0})).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    send(&mut ws, json!({"v":1,"req":4,"type":"place_obstacle","center":[0,0,0],"radius":2.0,"v_dir":[0,1,0]})).await;
    send(&mut ws, json!({"v":1,"req":5,"type":"set_param","key":"motion.v_th","value":0.2})).await;

    let r1 = reply(&mut ws).await;
    assert_eq!((r1["type"].as_str(), r1["req"].as_u64()), (Some("ack"), Some(1)));
    assert_eq!(r1["applied"]["wrench"], json!([100.0, 0.0, 0.0, 0.0, 0.0, 10.0]));
    let r2 = reply(&mut ws).await;
    assert_eq!((r2["code"].as_str(), r2["req"].as_u64()), (Some("unknown_key"), Some(2)));
    let r3 = reply(&mut ws).await;
    assert_eq!(r3["code"], "malformed");
    let r4 = reply(&mut ws).await;
    assert_eq!((r4["code"].as_str(), r4["req"].as_u64()), (Some("invalid_value"), Some(4)));
    let r5 = reply(&mut ws).await;
    assert_eq!((r5["type"].as_str(), r5["req"].as_u64()), (Some("ack"), Some(5)));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn pause_freezes_time_but_snapshots_continue() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let mut ws = server.connect("pause").await;
    recv_type(&mut ws, "hello").await;
    tokio::time::sleep(Duration::from_millis(200)).await;
    send(&mut ws, json!({"v":1,"type":"pause"})).await;
    assert_eq!(reply(&mut ws).await["type"], "ack");
    recv_type(&mut ws, "snapshot").await;
    let snaps = snapshots_for(&mut ws, Duration::from_secs(1)).await;
    assert!(snaps.len() >= 28, "{} snapshots while paused", snaps.len());
    let t = snaps[0].1["time"].as_f64().unwrap();
    assert!(t > 0.0);
    assert!(snaps.iter().all(|(_, s)| s["time"].as_f64() == Some(t) && s["paused"] == true));

    send(&mut ws, json!({"v":1,"type":"resume"})).await;
    assert_eq!(reply(&mut ws).await["type"], "ack");
    let later = snapshots_for(&mut ws, Duration::from_millis(300)).await;
    assert!(later.last().unwrap().1["time"].as_f64().unwrap() > t);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn body_force_shows_in_estimate_and_goes_stale() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let mut ws = server.connect("force").await;
    recv_type(&mut ws, "hello").await;
    let push = json!({"v":1,"type":"human_force","frame":"body","wrench":[0,6,0,0,0,0]});
    let start = Instant::now();
    let mut diffs = Vec::new();
    let mut last_push_time = 0.0;
    while start.elapsed() < Duration::from_millis(600) {
        send(&mut ws, push.clone()).await;
        let deadline = Instant::now() + Duration::from_millis(50);
        while Instant::now() < deadline {
            let v = recv(&mut ws).await;
            if v["type"] == "snapshot" {
                last_push_time = v["time"].as_f64().unwrap();
                if start.elapsed() > Duration::from_millis(100) {
                    diffs.push(v["w_est"][1].as_f64().unwrap() - v["w_s"][1].as_f64().unwrap());
                }
            }
        }
    }
    assert!(diffs.len() >= 10);
    assert!(diffs.iter().all(|d| (d - 6.0).abs() < 0.5), "{diffs:?}");

    // no refresh: the force is dropped after the staleness timeout
    let mut checked = 0;
    while checked < 5 {
        let s = recv_type(&mut ws, "snapshot").await;
        if s["time"].as_f64().unwrap() > last_push_time + 0.35 {
            let d = s["w_est"][1].as_f64().unwrap() - s["w_s"][1].as_f64().unwrap();
            assert!(d.abs() < 0.5, "stale force still applied: {d}");
            checked += 1;
        }
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stalled_client_does_not_slow_others() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let _stalled = server.connect("shared").await;
    let mut healthy = server.connect("shared").await;
    recv_type(&mut healthy, "hello").await;
    let snaps = snapshots_for(&mut healthy, Duration::from_secs(2)).await;
    let n = snaps.len() as f64 / 2.0;
    assert!((28.0..=32.0).contains(&n), "{n} snapshots per second");
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn goal_edit_resends_polyline_once() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    let mut ws = server.connect("goal").await;
    let hello = recv_type(&mut ws, "hello").await;
    let first = recv_type(&mut ws, "snapshot").await;
    assert!(first.get("demo").is_none());
    let g = first["goal"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect::<Vec<_>>();
    send(&mut ws, json!({"v":1,"type":"set_goal","goal":[g[0] + 0.05, g[1], g[2]]})).await;
    let ack = reply(&mut ws).await;
    assert_eq!(ack["applied"]["transform_version"], 1);
    let with_demo = recv_type(&mut ws, "snapshot").await;
    assert_eq!(with_demo["transform_version"], 1);
    assert_eq!(with_demo["demo"]["version"], 1);
    assert_ne!(with_demo["demo"]["points"], hello["demo"]["points"]);
    let next = recv_type(&mut ws, "snapshot").await;
    assert!(next.get("demo").is_none());
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn bad_session_id_is_refused() {
    let server = TestServer::start("leaf", Pace::Real, None).await;
    assert!(connect_async(format!("ws://{}/session/bad.id", server.addr)).await.is_err());
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn observed_session_trace_matches_headless_run() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start("takeover", Pace::Max, Some(dir.path().to_path_buf())).await;
    let mut ws = server.connect("det").await;
    recv_type(&mut ws, "hello").await;
    loop {
        let s = recv_type(&mut ws, "snapshot").await;
        if s["finished"] == true {
            break;
        }
    }
    drop(ws);
    server.stop().await;

    let saved = SimTrace::load(dir.path().join("det-0.csv")).unwrap();
    let cfg = ScenarioConfig::load(scenario_dir().join("takeover.toml")).unwrap();
    let headless = tandem::run_scenario(&cfg, None).unwrap();
    assert_eq!(saved.rows, headless.trace.rows);
}
