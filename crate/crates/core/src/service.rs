// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hybridplan Authors

//! Newline-delimited JSON over TCP.
//!
//! Each request is one JSON object with an `op` field:
//!
//! - `{"op":"plan", ...PlanRequest}` answers with the PlanResponse fields.
//! - `{"op":"execute","plan":{..},"n_tasks":N,"task_service_s":S}` simulates
//!   the plan, records it and answers with the ExecutionRecord fields.
//! - `{"op":"status"}` answers with the serving model version and the
//!   retrain monitor's counters.
//!
//! Every reply carries `"ok"`; failures are `{"ok":false,"error":".."}`.
//! Connections are served on their own threads and may send any number of
//! requests.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::MonitorStatus;
use crate::error::{Error, Result};
use crate::planner::{PlanRequest, PlanResponse, Planner};
use crate::sim::QuerySpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Plan(PlanRequest),
    Execute {
        plan: Box<PlanResponse>,
        n_tasks: u32,
        task_service_s: f64,
    },
    Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub model_version: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorStatus>,
}

/// Handles one request line and returns the reply line (without newline).
pub fn respond(planner: &Planner, line: &str) -> String {
    let reply = serde_json::from_str::<Request>(line)
        .map_err(Error::from)
        .and_then(|req| dispatch(planner, req));
    let value = match reply {
        Ok(Value::Object(mut body)) => {
            body.insert("ok".into(), Value::Bool(true));
            Value::Object(body)
        }
        Ok(other) => json!({ "ok": true, "result": other }),
        Err(e) => json!({ "ok": false, "error": e.to_string() }),
    };
    value.to_string()
}

fn dispatch(planner: &Planner, request: Request) -> Result<Value> {
    match request {
        Request::Plan(req) => Ok(serde_json::to_value(planner.plan(&req)?)?),
        Request::Execute {
            plan,
            n_tasks,
            task_service_s,
        } => {
            let query = QuerySpec::new(n_tasks, task_service_s);
            Ok(serde_json::to_value(
                planner.execute_and_record(&plan, &query)?,
            )?)
        }
        Request::Status => Ok(serde_json::to_value(Status {
            model_version: planner.handle().version(),
            monitor: planner.monitor().map(|m| m.status()),
        })?),
    }
}

pub struct Server {
    listener: TcpListener,
    planner: Arc<Planner>,
    stop: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, planner: Arc<Planner>) -> Result<Self> {
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            planner,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until stopped.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            if self.stop.load(Ordering::Acquire) {
                break;
            }
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let planner = Arc::clone(&self.planner);
            std::thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(&planner, stream) {
                    log::debug!("connection {peer:?} closed: {e}");
                }
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<RunningServer> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let thread = std::thread::Builder::new()
            .name("planner-service".into())
            .spawn(move || self.run())?;
        Ok(RunningServer {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

fn serve_connection(planner: &Planner, stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = respond(planner, &line);
        reply.push('\n');
        writer.write_all(reply.as_bytes())?;
    }
    Ok(())
}

pub struct RunningServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) -> Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<()> {
        let Some(thread) = self.thread.take() else {
            return Ok(());
        };
        self.stop.store(true, Ordering::Release);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        thread
            .join()
            .map_err(|_| Error::Planning("service thread panicked".into()))?
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// A blocking client holding one connection.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Ok(Client {
            writer: stream.try_clone()?,
            reader: BufReader::new(stream),
        })
    }

    pub fn call(&mut self, request: &Value) -> Result<Value> {
        let mut line = request.to_string();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Io(std::io::ErrorKind::UnexpectedEof.into()));
        }
        Ok(serde_json::from_str(&reply)?)
    }
}
