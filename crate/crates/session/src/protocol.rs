//! Wire messages. Every message is one websocket text frame holding a JSON
//! object with the schema version `v` and a `type` tag.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Schema version carried in every message.
pub const PROTOCOL_VERSION: u32 = 1;

/// Largest accepted force magnitude, N.
pub const MAX_FORCE: f64 = 100.0;
/// Largest accepted torque magnitude, N·m.
pub const MAX_TORQUE: f64 = 10.0;
/// Largest accepted obstacle radius, m.
pub const MAX_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceFrame {
    Tool,
    Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    HumanForce {
        frame: ForceFrame,
        wrench: [f64; 6],
    },
    PlaceObstacle {
        center: [f64; 3],
        radius: f64,
        v_dir: [f64; 3],
    },
    RemoveObstacle {
        id: u64,
    },
    SetGoal {
        goal: [f64; 3],
    },
    Pause {},
    Resume {},
    Reset {
        #[serde(default)]
        scenario: Option<String>,
    },
    SetParam {
        key: String,
        value: f64,
    },
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::HumanForce { .. } => "human_force",
            ClientMessage::PlaceObstacle { .. } => "place_obstacle",
            ClientMessage::RemoveObstacle { .. } => "remove_obstacle",
            ClientMessage::SetGoal { .. } => "set_goal",
            ClientMessage::Pause {} => "pause",
            ClientMessage::Resume {} => "resume",
            ClientMessage::Reset { .. } => "reset",
            ClientMessage::SetParam { .. } => "set_param",
        }
    }
}

/// A parsed client frame: the message and the optional request id echoed in
/// the reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub req: Option<u64>,
    pub msg: ClientMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnknownKey,
    InvalidValue,
    UnknownObstacle,
    UnknownScenario,
    VersionMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub req: Option<u64>,
    pub code: ErrorCode,
    pub message: String,
}

/// Parses one text frame. Failures carry the request id when it could be read.
pub fn parse_request(text: &str) -> Result<Request, Rejection> {
    let reject = |req, code, message: String| Rejection { req, code, message };
    let mut obj = match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(o)) => o,
        Ok(_) => return Err(reject(None, ErrorCode::Malformed, "expected a JSON object".into())),
        Err(e) => return Err(reject(None, ErrorCode::Malformed, e.to_string())),
    };
    let req = match obj.remove("req") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(r) => Some(r),
            None => return Err(reject(None, ErrorCode::Malformed, "`req` must be a non-negative integer".into())),
        },
    };
    match obj.remove("v").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(v) => {
            return Err(reject(
                req,
                ErrorCode::VersionMismatch,
                format!("server speaks v{PROTOCOL_VERSION}, got v{v}"),
            ))
        }
        None => return Err(reject(req, ErrorCode::Malformed, "missing integer field `v`".into())),
    }
    serde_json::from_value::<ClientMessage>(Value::Object(obj))
        .map(|msg| Request { req, msg })
        .map_err(|e| reject(req, ErrorCode::Malformed, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleView {
    pub id: u64,
    pub center: [f64; 3],
    pub radius: f64,
    pub v_dir: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonView {
    pub wall: usize,
    pub trigger_force: f64,
    pub latched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub gamma: bool,
    pub zeta: bool,
    pub phi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoPolyline {
    pub version: u64,
    pub points: Vec<[f64; 3]>,
}

/// State published at the snapshot rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: String,
    pub scenario: String,
    pub time: f64,
    pub step: u64,
    pub paused: bool,
    pub finished: bool,
    /// Set when a simulation error stopped stepping; cleared by reset.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fault: Option<String>,
    pub pose: [f64; 6],
    pub vel: [f64; 6],
    pub x_dot_ref: [f64; 3],
    pub w_ref: [f64; 6],
    pub w_s: [f64; 6],
    pub w_est: [f64; 6],
    pub w_env: [f64; 6],
    pub w_contact: [f64; 6],
    pub alpha_h: f64,
    pub psi: f64,
    pub psi_lower: f64,
    pub psi_upper: f64,
    pub flags: Flags,
    pub i_min: usize,
    pub goal: [f64; 3],
    pub obstacles: Vec<ObstacleView>,
    pub button: Option<ButtonView>,
    pub transform_version: u64,
    /// Present on the first snapshot after the transformed demo changes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub demo: Option<DemoPolyline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        v: u32,
        session: String,
        scenario: String,
        dt: f64,
        pace: String,
        snapshot_hz: f64,
        params: Vec<String>,
        demo: DemoPolyline,
    },
    Ack {
        v: u32,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        req: Option<u64>,
        of: String,
        applied: Value,
    },
    Error {
        v: u32,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        req: Option<u64>,
        code: ErrorCode,
        message: String,
    },
    Snapshot {
        v: u32,
        #[serde(flatten)]
        snapshot: Box<Snapshot>,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn rejection(r: Rejection) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            req: r.req,
            code: r.code,
            message: r.message,
        }
    }
}

/// Scales the force and torque parts onto their magnitude limits.
pub fn clamp_wrench(w: [f64; 6]) -> [f64; 6] {
    let mut out = w;
    for (range, limit) in [(0..3, MAX_FORCE), (3..6, MAX_TORQUE)] {
        let norm = w[range.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > limit {
            for v in &mut out[range] {
                *v *= limit / norm;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tagged_message_with_req() {
        let r = parse_request(r#"{"v":1,"req":7,"type":"human_force","frame":"body","wrench":[1,2,3,0,0,0]}"#).unwrap();
        assert_eq!(r.req, Some(7));
        assert_eq!(
            r.msg,
            ClientMessage::HumanForce {
                frame: ForceFrame::Body,
                wrench: [1.0, 2.0, 3.0, 0.0, 0.0, 0.0]
            }
        );
        assert_eq!(parse_request(r#"{"v":1,"type":"pause"}"#).unwrap().msg, ClientMessage::Pause {});
    }

    #[test]
    fn rejects_schema_violations() {
        for bad in [
            "not json",
            "[1,2]",
            r#"{"type":"pause"}"#,
            r#"{"v":1,"type":"warp"}"#,
            r#"{"v":1,"type":"human_force","frame":"tool","wrench":[1,2]}"#,
            r#"{"v":1,"type":"pause","extra":1}"#,
            r#"{"v":1,"req":-1,"type":"pause"}"#,
        ] {
            assert_eq!(parse_request(bad).unwrap_err().code, ErrorCode::Malformed, "{bad}");
        }
        let e = parse_request(r#"{"v":2,"req":3,"type":"pause"}"#).unwrap_err();
        assert_eq!((e.code, e.req), (ErrorCode::VersionMismatch, Some(3)));
    }

    #[test]
    fn clamp_scales_force_and_torque_separately() {
        let w = clamp_wrench([500.0, 0.0, 0.0, 0.0, 30.0, 40.0]);
        assert_eq!(w, [100.0, 0.0, 0.0, 0.0, 6.0, 8.0]);
        let small = [1.0, -2.0, 3.0, 0.1, 0.2, 0.3];
        assert_eq!(clamp_wrench(small), small);
    }

    #[test]
    fn snapshot_message_is_flat_and_versioned() {
        let msg = ServerMessage::Ack {
            v: PROTOCOL_VERSION,
            req: None,
            of: "pause".into(),
            applied: Value::Null,
        };
        let v: Value = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(v["type"], "ack");
        assert_eq!(v["v"], 1);
        assert!(v.get("req").is_none());
    }
}
