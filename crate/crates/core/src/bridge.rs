//! Newline-delimited JSON protocol that lets an external agent drive the
//! environment: one request line in, one reply line out.
//!
//! Client messages: `hello`, `reset`, `action`, `bye`. Server replies:
//! `hello`, `obs`, `transition`, `error`, `bye`. A session must open with
//! `hello`; afterwards `reset` starts a shift and every `obs`/`transition`
//! with a pending truck expects exactly one `action`. Rejected messages
//! produce an `error` reply and leave the session untouched.

use std::io::{self, BufRead, Write};
use std::net::TcpListener;

use serde::{Deserialize, Serialize};

use crate::env::{MineEnv, StepInfo, Transition};
use crate::world::WorldError;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        protocol: u32,
    },
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Action {
        shovel_id: u32,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol: u32,
        obs_dim: usize,
        n_actions: usize,
        shovels: usize,
        trucks: usize,
    },
    Obs {
        obs: Vec<f64>,
        truck_id: Option<u32>,
        clock: f64,
        done: bool,
    },
    Transition {
        obs: Vec<f64>,
        truck_id: Option<u32>,
        clock: f64,
        reward: f64,
        done: bool,
        info: StepInfo,
    },
    Error {
        message: String,
        phase: SessionPhase,
    },
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    AwaitingHello,
    /// Greeted, no shift running.
    Idle,
    AwaitingAction,
    /// The shift has ended; only `reset` or `bye` make progress.
    Terminal,
    Closed,
}

pub struct Session {
    env: MineEnv,
    phase: SessionPhase,
    default_seed: u64,
}

impl Session {
    pub fn new(env: MineEnv) -> Session {
        let default_seed = env.config().simulation.seed;
        Session {
            env,
            phase: SessionPhase::AwaitingHello,
            default_seed,
        }
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn env(&self) -> &MineEnv {
        &self.env
    }

    /// Parse one request line and produce the reply.
    pub fn handle_line(&mut self, line: &str) -> ServerMessage {
        match serde_json::from_str::<ClientMessage>(line.trim()) {
            Ok(msg) => self.handle(msg),
            Err(e) => self.error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> ServerMessage {
        use SessionPhase as P;
        match (self.phase, msg) {
            (P::Closed, _) => self.error("session is closed"),
            (_, ClientMessage::Bye) => {
                self.phase = P::Closed;
                ServerMessage::Bye
            }
            (P::AwaitingHello, ClientMessage::Hello { protocol }) => {
                if protocol != PROTOCOL_VERSION {
                    return self.error(format!(
                        "unsupported protocol {protocol}, server speaks {PROTOCOL_VERSION}"
                    ));
                }
                self.phase = P::Idle;
                let cfg = self.env.config();
                ServerMessage::Hello {
                    protocol: PROTOCOL_VERSION,
                    obs_dim: self.env.obs_dim(),
                    n_actions: self.env.n_actions(),
                    shovels: cfg.fleet.shovels,
                    trucks: cfg.fleet.trucks,
                }
            }
            (P::AwaitingHello, _) => self.error("expected hello"),
            (_, ClientMessage::Hello { .. }) => self.error("hello already received"),
            (_, ClientMessage::Reset { seed }) => {
                match self.env.reset(seed.unwrap_or(self.default_seed)) {
                    Ok(t) => {
                        self.phase = if t.done { P::Terminal } else { P::AwaitingAction };
                        ServerMessage::Obs {
                            obs: t.obs,
                            truck_id: t.truck,
                            clock: t.clock,
                            done: t.done,
                        }
                    }
                    Err(e) => self.error(e.to_string()),
                }
            }
            (P::AwaitingAction, ClientMessage::Action { shovel_id }) => match self.env.step(shovel_id) {
                Ok(t) => {
                    if t.done {
                        self.phase = P::Terminal;
                    }
                    transition_message(t)
                }
                Err(e) => self.error(e.to_string()),
            },
            (_, ClientMessage::Action { .. }) => self.error(WorldError::NoPendingDecision.to_string()),
        }
    }

    fn error(&self, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error {
            message: message.into(),
            phase: self.phase,
        }
    }
}

fn transition_message(t: Transition) -> ServerMessage {
    ServerMessage::Transition {
        obs: t.obs,
        truck_id: t.truck,
        clock: t.clock,
        reward: t.reward,
        done: t.done,
        info: t.info,
    }
}

pub fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages always serialize")
}

/// Serve one session over a line-oriented stream until `bye` or EOF.
/// Every exchange is appended to `transcript` when given.
pub fn serve_stream<R: BufRead, W: Write>(
    session: &mut Session,
    input: R,
    mut output: W,
    mut transcript: Option<&mut dyn Write>,
) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = encode(&session.handle_line(&line));
        writeln!(output, "{reply}")?;
        output.flush()?;
        if let Some(t) = transcript.as_deref_mut() {
            writeln!(t, "C {}", line.trim())?;
            writeln!(t, "S {reply}")?;
        }
        if session.phase() == SessionPhase::Closed {
            break;
        }
    }
    Ok(())
}

/// Accept connections on `port` one after another, each with a fresh
/// session from `make_session`.
pub fn serve_tcp(port: u16, mut make_session: impl FnMut() -> Session) -> io::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = io::BufReader::new(stream.try_clone()?);
        let mut session = make_session();
        serve_stream(&mut session, reader, stream, None)?;
    }
    Ok(())
}

/// Run the client lines of `requests` through a session and return the
/// full transcript.
pub fn record(session: &mut Session, requests: &[String]) -> String {
    let mut out = String::new();
    for req in requests {
        let reply = encode(&session.handle_line(req));
        out += &format!("C {req}\nS {reply}\n");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayVerdict {
    Identical,
    Diverged {
        line: usize,
        expected: String,
        actual: String,
    },
    /// The transcript ends before the reply to a request, or contains a
    /// line that is neither a request nor a reply.
    Incomplete { line: usize },
}

/// Feed every `C` line of `transcript` to `session` and compare each reply
/// with the `S` line that follows it byte for byte.
pub fn replay(session: &mut Session, transcript: &str) -> ReplayVerdict {
    let mut lines = transcript.lines().enumerate().filter(|(_, l)| !l.is_empty());
    while let Some((i, line)) = lines.next() {
        let Some(req) = line.strip_prefix("C ") else {
            return ReplayVerdict::Incomplete { line: i + 1 };
        };
        let actual = encode(&session.handle_line(req));
        let Some((j, reply)) = lines.next() else {
            return ReplayVerdict::Incomplete { line: i + 1 };
        };
        let Some(expected) = reply.strip_prefix("S ") else {
            return ReplayVerdict::Incomplete { line: j + 1 };
        };
        if expected != actual {
            return ReplayVerdict::Diverged {
                line: j + 1,
                expected: expected.to_string(),
                actual,
            };
        }
    }
    ReplayVerdict::Identical
}
