//! The simulation owner: one thread per session that drains the command
//! queue, steps the simulation and publishes snapshots. It never waits on a
//! client.

use std::str::FromStr;
use std::sync::mpsc::{self, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tokio::sync::{broadcast, mpsc::UnboundedSender, watch};

use crate::core::SessionCore;
use crate::protocol::{DemoPolyline, Rejection, Request, ServerMessage, Snapshot};

/// Snapshot rate, Hz.
pub const SNAPSHOT_HZ: f64 = 30.0;
/// Snapshots buffered per client before the oldest are dropped.
const SNAPSHOT_BUFFER: usize = 4;
/// Steps taken between command-queue checks at maximum pace.
const MAX_PACE_BATCH: usize = 20;
/// Real-time pacing gives up on catching up past this many steps.
const MAX_CATCH_UP: u64 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pace {
    /// Simulated time follows wall-clock time.
    Real,
    /// Steps as fast as possible.
    Max,
}

impl Pace {
    pub fn as_str(self) -> &'static str {
        match self {
            Pace::Real => "real",
            Pace::Max => "max",
        }
    }
}

impl FromStr for Pace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Pace::Real),
            "max" => Ok(Pace::Max),
            _ => Err(format!("unknown pace `{s}`, expected real or max")),
        }
    }
}

pub enum Command {
    /// A client connected; the owner replies with a hello.
    Join { reply: UnboundedSender<String> },
    /// A client frame, parsed or rejected by the reader.
    Request {
        request: Result<Request, Rejection>,
        reply: UnboundedSender<String>,
    },
    /// Saves the trace and stops the owner.
    Shutdown,
}

/// Handle held by the server; clones of the senders go to client tasks.
pub struct SessionHandle {
    pub commands: mpsc::Sender<Command>,
    pub snapshots: broadcast::Sender<Arc<Snapshot>>,
    pub demo: watch::Receiver<Arc<DemoPolyline>>,
    thread: Option<JoinHandle<()>>,
}

impl SessionHandle {
    pub fn spawn(core: SessionCore, pace: Pace, snapshot_hz: f64) -> Self {
        let (cmd_tx, cmd_rx) = mpsc::channel();
        let (snap_tx, _) = broadcast::channel(SNAPSHOT_BUFFER);
        let (demo_tx, demo_rx) = watch::channel(Arc::new(core.demo_polyline()));
        let owner = Owner {
            core,
            pace,
            period: Duration::from_secs_f64(1.0 / snapshot_hz),
            snapshot_hz,
            commands: cmd_rx,
            snapshots: snap_tx.clone(),
            demo: demo_tx,
        };
        let name = format!("session-{}", owner.core.id());
        let thread = std::thread::Builder::new()
            .name(name)
            .spawn(move || owner.run())
            .expect("spawning session thread");
        SessionHandle {
            commands: cmd_tx,
            snapshots: snap_tx,
            demo: demo_rx,
            thread: Some(thread),
        }
    }

    /// Stops the owner thread and waits for it to save its trace.
    pub fn shutdown(mut self) {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

struct Owner {
    core: SessionCore,
    pace: Pace,
    period: Duration,
    snapshot_hz: f64,
    commands: mpsc::Receiver<Command>,
    snapshots: broadcast::Sender<Arc<Snapshot>>,
    demo: watch::Sender<Arc<DemoPolyline>>,
}

/// Wall-clock anchor for real-time pacing, reset whenever stepping resumes.
struct Anchor {
    wall: Instant,
    step: u64,
}

impl Owner {
    fn run(mut self) {
        let mut next_snapshot = Instant::now();
        let mut anchor: Option<Anchor> = None;
        loop {
            loop {
                match self.commands.try_recv() {
                    Ok(cmd) => {
                        if !self.execute(cmd) {
                            return self.finish();
                        }
                    }
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return self.finish(),
                }
            }

            let now = Instant::now();
            if self.core.is_running() {
                let a = anchor.get_or_insert(Anchor {
                    wall: now,
                    step: self.core.simulation().step_index(),
                });
                match self.pace {
                    Pace::Max => {
                        for _ in 0..MAX_PACE_BATCH {
                            self.core.step();
                        }
                    }
                    Pace::Real => {
                        let current = self.core.simulation().step_index();
                        if current < a.step {
                            // the session was reset
                            *a = Anchor { wall: now, step: current };
                        }
                        let mut due = a.step + (now.duration_since(a.wall).as_secs_f64() / self.core.dt()) as u64;
                        if due > current + MAX_CATCH_UP {
                            log::warn!("session {}: falling behind real time, re-anchoring", self.core.id());
                            *a = Anchor { wall: now, step: current };
                            due = current;
                        }
                        while self.core.is_running() && self.core.simulation().step_index() < due {
                            self.core.step();
                        }
                    }
                }
            } else {
                anchor = None;
            }

            let now = Instant::now();
            if now >= next_snapshot {
                self.publish();
                next_snapshot += self.period;
                if next_snapshot < now {
                    next_snapshot = now + self.period;
                }
            }

            let wait = if self.core.is_running() {
                match self.pace {
                    Pace::Max => Duration::ZERO,
                    Pace::Real => Duration::from_secs_f64(self.core.dt()).min(next_snapshot.saturating_duration_since(now)),
                }
            } else {
                next_snapshot.saturating_duration_since(now)
            };
            if !wait.is_zero() {
                match self.commands.recv_timeout(wait) {
                    Ok(cmd) => {
                        if !self.execute(cmd) {
                            return self.finish();
                        }
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => return self.finish(),
                }
            }
        }
    }

    /// Returns false on shutdown.
    fn execute(&mut self, cmd: Command) -> bool {
        match cmd {
            Command::Join { reply } => {
                let _ = reply.send(self.core.hello(self.pace.as_str(), self.snapshot_hz).to_json());
            }
            Command::Request { request, reply } => {
                let version = self.core.transform_version();
                let msg = match request {
                    Ok(r) => self.core.handle(r),
                    Err(e) => ServerMessage::rejection(e),
                };
                let _ = reply.send(msg.to_json());
                // reset or goal edits may rebuild the transformed demo
                if self.core.transform_version() != version {
                    self.demo.send_replace(Arc::new(self.core.demo_polyline()));
                }
            }
            Command::Shutdown => return false,
        }
        true
    }

    fn publish(&self) {
        // no receivers is fine; lagging receivers lose their oldest frames
        let _ = self.snapshots.send(Arc::new(self.core.snapshot()));
    }

    fn finish(self) {
        if let Err(e) = self.core.save_trace() {
            log::error!("session {}: saving trace failed: {e}", self.core.id());
        }
    }
}
