//! Adapter for models living in another process.
//!
//! The child speaks a line protocol over its standard streams, UTF-8, one
//! message per line:
//!
//! ```text
//! -> FIT D N          then N lines of D+1 space-separated reals (features, target)
//! <- OK | ERR <message>
//! -> PREDICT D N      then N lines of D reals
//! <- N lines holding one real each, then OK
//! -> QUIT             the child exits with status 0
//! ```
//!
//! Reals are written with 17 significant digits so they round-trip exactly.
//! Every request has a deadline. Death maps to [`ModelError::ProcessExited`],
//! a stall to [`ModelError::Timeout`], and an unparsable answer to
//! [`ModelError::MalformedResponse`]; the child is killed in each case.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{check_training_data, ModelError, Regressor};
use crate::data::Matrix;

pub const DEFAULT_STARTUP_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

/// Grace period for a child to exit after `QUIT` or after closing its pipes.
const EXIT_GRACE: Duration = Duration::from_secs(2);

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalModelSpec {
    /// Program followed by whitespace-separated arguments.
    pub command: String,
    /// Extra allowance for the first request, covering process startup.
    pub startup_timeout: Duration,
    pub request_timeout: Duration,
}

impl ExternalModelSpec {
    pub fn new(command: &str) -> Result<Self, ModelError> {
        if command.split_whitespace().next().is_none() {
            return Err(ModelError::InvalidInput("external model command is empty".into()));
        }
        Ok(ExternalModelSpec {
            command: command.trim().to_string(),
            startup_timeout: DEFAULT_STARTUP_TIMEOUT,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
        })
    }

    pub fn with_timeouts(mut self, startup: Duration, request: Duration) -> Self {
        self.startup_timeout = startup;
        self.request_timeout = request;
        self
    }
}

/// Formats a real with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Session {
    child: Child,
    writer: Option<Sender<Vec<u8>>>,
    write_acks: Receiver<std::io::Result<()>>,
    lines: Receiver<std::io::Result<String>>,
    lines_read: usize,
    started: bool,
    /// Set once the child has been killed or has died.
    failed: Option<String>,
}

pub struct ExternalModel {
    spec: ExternalModelSpec,
    session: Mutex<Session>,
}

impl ExternalModel {
    pub fn spawn(spec: &ExternalModelSpec) -> Result<Self, ModelError> {
        let mut parts = spec.command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| ModelError::InvalidInput("external model command is empty".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ModelError::Spawn {
                command: spec.command.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");

        let (line_tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let failed = line.is_err();
                if line_tx.send(line).is_err() || failed {
                    break;
                }
            }
        });

        let (writer, jobs) = mpsc::channel::<Vec<u8>>();
        let (ack_tx, write_acks) = mpsc::channel();
        thread::spawn(move || writer_loop(stdin, jobs, ack_tx));

        Ok(ExternalModel {
            spec: spec.clone(),
            session: Mutex::new(Session {
                child,
                writer: Some(writer),
                write_acks,
                lines,
                lines_read: 0,
                started: false,
                failed: None,
            }),
        })
    }

    /// Sends the training data with `FIT` and waits for `OK`.
    pub fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<(), ModelError> {
        check_training_data(features, targets, 1)?;
        let mut payload = format!("FIT {} {}\n", features.ncols(), features.nrows());
        for (row, &y) in features.rows().zip(targets) {
            push_row(&mut payload, row.iter().copied().chain(std::iter::once(y)));
        }
        let mut session = self.lock();
        let deadline = session.deadline(&self.spec);
        session.guard(|s| {
            s.send(payload.into_bytes(), deadline, &self.spec, "sending FIT")?;
            s.expect_ok(deadline, &self.spec, "waiting for the FIT acknowledgement")
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn writer_loop(mut stdin: ChildStdin, jobs: Receiver<Vec<u8>>, acks: Sender<std::io::Result<()>>) {
    for job in jobs {
        let result = stdin.write_all(&job).and_then(|()| stdin.flush());
        let failed = result.is_err();
        if acks.send(result).is_err() || failed {
            break;
        }
    }
}

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    for (j, v) in values.enumerate() {
        if j > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn remaining(deadline: Instant) -> Duration {
    deadline.saturating_duration_since(Instant::now())
}

impl Session {
    fn deadline(&self, spec: &ExternalModelSpec) -> Instant {
        let mut budget = spec.request_timeout;
        if !self.started {
            budget += spec.startup_timeout;
        }
        Instant::now() + budget
    }

    /// Runs one request; any failure kills the child so later calls fail fast.
    fn guard<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ModelError>) -> Result<T, ModelError> {
        if let Some(status) = &self.failed {
            return Err(ModelError::ProcessExited {
                status: status.clone(),
                context: "starting a new request".into(),
            });
        }
        let result = f(self);
        match &result {
            Ok(_) => self.started = true,
            Err(ModelError::Remote(_)) => {}
            Err(e) => {
                let _ = self.child.kill();
                let _ = self.child.wait();
                self.failed.get_or_insert_with(|| e.to_string());
            }
        }
        result
    }

    fn exit_status(&mut self) -> String {
        let until = Instant::now() + EXIT_GRACE;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return status.to_string(),
                Ok(None) if Instant::now() < until => thread::sleep(Duration::from_millis(10)),
                Ok(None) => return "closed its output but did not exit".into(),
                Err(e) => return format!("status unavailable: {e}"),
            }
        }
    }

    fn exited(&mut self, context: &str) -> ModelError {
        let status = self.exit_status();
        self.failed = Some(status.clone());
        ModelError::ProcessExited {
            status,
            context: context.to_string(),
        }
    }

    fn timeout(&self, spec: &ExternalModelSpec, context: &str) -> ModelError {
        ModelError::Timeout {
            timeout_ms: spec.request_timeout.as_millis(),
            context: context.to_string(),
        }
    }

    fn send(
        &mut self,
        payload: Vec<u8>,
        deadline: Instant,
        spec: &ExternalModelSpec,
        context: &str,
    ) -> Result<(), ModelError> {
        let queued = self.writer.as_ref().is_some_and(|w| w.send(payload).is_ok());
        if !queued {
            return Err(self.exited(context));
        }
        match self.write_acks.recv_timeout(remaining(deadline)) {
            Ok(Ok(())) => Ok(()),
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(self.exited(context)),
            Err(RecvTimeoutError::Timeout) => Err(self.timeout(spec, context)),
        }
    }

    fn read_line(
        &mut self,
        deadline: Instant,
        spec: &ExternalModelSpec,
        context: &str,
    ) -> Result<String, ModelError> {
        match self.lines.recv_timeout(remaining(deadline)) {
            Ok(Ok(line)) => {
                self.lines_read += 1;
                Ok(line)
            }
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => Err(self.exited(context)),
            Err(RecvTimeoutError::Timeout) => Err(self.timeout(spec, context)),
        }
    }

    fn expect_ok(&mut self, deadline: Instant, spec: &ExternalModelSpec, context: &str) -> Result<(), ModelError> {
        let line = self.read_line(deadline, spec, context)?;
        let trimmed = line.trim();
        if trimmed == "OK" {
            Ok(())
        } else if let Some(message) = trimmed.strip_prefix("ERR") {
            Err(ModelError::Remote(message.trim().to_string()))
        } else {
            Err(ModelError::MalformedResponse {
                line_no: self.lines_read,
                line,
                context: format!("{context} (expected OK or ERR)"),
            })
        }
    }
}

impl Regressor for ExternalModel {
    fn descriptor(&self) -> String {
        format!("cmd:{}", self.spec.command)
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        let n = features.nrows();
        let mut payload = format!("PREDICT {} {}\n", features.ncols(), n);
        for row in features.rows() {
            push_row(&mut payload, row.iter().copied());
        }
        let mut session = self.lock();
        let deadline = session.deadline(&self.spec);
        session.guard(|s| {
            s.send(payload.into_bytes(), deadline, &self.spec, "sending PREDICT")?;
            let mut predictions = Vec::with_capacity(n);
            for i in 0..n {
                let context = format!("reading prediction {} of {n}", i + 1);
                let line = s.read_line(deadline, &self.spec, &context)?;
                let trimmed = line.trim();
                if let Some(message) = trimmed.strip_prefix("ERR") {
                    return Err(ModelError::Remote(message.trim().to_string()));
                }
                match trimmed.parse::<f64>() {
                    Ok(v) if v.is_finite() => predictions.push(v),
                    _ => {
                        return Err(ModelError::MalformedResponse {
                            line_no: s.lines_read,
                            line,
                            context: format!("{context} (expected a finite real)"),
                        })
                    }
                }
            }
            s.expect_ok(deadline, &self.spec, "waiting for the PREDICT acknowledgement")?;
            Ok(predictions)
        })
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        let session = self.session.get_mut().unwrap_or_else(|e| e.into_inner());
        if session.failed.is_none() {
            if let Some(writer) = &session.writer {
                let _ = writer.send(b"QUIT\n".to_vec());
            }
        }
        session.writer = None;
        let until = Instant::now() + EXIT_GRACE;
        while Instant::now() < until {
            match session.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
        let _ = session.child.kill();
        let _ = session.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_reals_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 123456789.123456789] {
            let s = format_real(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn empty_command_rejected() {
        assert!(ExternalModelSpec::new("   ").is_err());
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let spec = ExternalModelSpec::new("/definitely/not/a/program").unwrap();
        assert!(matches!(ExternalModel::spawn(&spec), Err(ModelError::Spawn { .. })));
    }
}
