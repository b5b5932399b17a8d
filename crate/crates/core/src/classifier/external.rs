//! Subprocess classifier speaking the line protocol
//!
//! ```text
//! -> EVAL <n> <d>
//! -> n lines of d space-separated floats
//! <- n lines, each "0" or "1"
//! ```
//!
//! over the child's stdin/stdout.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{check_points, Classifier};
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 1024;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

/// How to launch and talk to a worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Per-batch response deadline.
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub dim: Option<usize>,
}

impl ExternalSpec {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            batch_size: DEFAULT_BATCH_SIZE,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            dim: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() {
            return Err(Error::Config("external classifier command is empty".into()));
        }
        if self.batch_size == 0 || self.timeout_ms == 0 {
            return Err(Error::Config("external classifier batch_size and timeout_ms must be positive".into()));
        }
        Ok(())
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

/// A classifier backed by a child process. The child is started lazily and
/// killed on drop.
pub struct ExternalClassifier {
    spec: ExternalSpec,
    worker: Option<Worker>,
}

impl std::fmt::Debug for ExternalClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalClassifier")
            .field("spec", &self.spec)
            .field("running", &self.worker.is_some())
            .finish()
    }
}

impl ExternalClassifier {
    pub fn new(spec: ExternalSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, worker: None })
    }

    pub fn spec(&self) -> &ExternalSpec {
        &self.spec
    }

    fn start(&mut self) -> Result<&mut Worker> {
        if self.worker.is_none() {
            let mut child = Command::new(&self.spec.command[0])
                .args(&self.spec.command[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::Transport(format!("cannot start `{}`: {e}", self.spec.command.join(" "))))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let stop = line.is_err();
                    if tx.send(line).is_err() || stop {
                        break;
                    }
                }
            });
            self.worker = Some(Worker {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.worker.as_mut().expect("worker started"))
    }

    fn shutdown(&mut self) {
        if let Some(mut w) = self.worker.take() {
            let _ = w.child.kill();
            let _ = w.child.wait();
        }
    }

    fn round_trip(&mut self, rows: &[f64], dim: usize) -> Result<Vec<u8>> {
        let n = rows.len() / dim;
        let mut req = String::with_capacity(rows.len() * 20 + 32);
        let _ = writeln!(req, "EVAL {n} {dim}");
        for row in rows.chunks_exact(dim) {
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    req.push(' ');
                }
                // `{:?}` is the shortest representation that round-trips.
                let _ = write!(req, "{x:?}");
            }
            req.push('\n');
        }
        let timeout = Duration::from_millis(self.spec.timeout_ms);
        let w = self.start()?;
        // A worker that stops reading would block this write; the reader side
        // enforces the deadline, so write from a helper thread.
        let mut stdin = w
            .stdin
            .try_clone_for_write()
            .map_err(|e| Error::Transport(format!("cannot write to worker: {e}")))?;
        let writer = thread::spawn(move || -> std::io::Result<()> {
            stdin.write_all(req.as_bytes())?;
            stdin.flush()
        });
        let deadline = Instant::now() + timeout;
        let mut labels = Vec::with_capacity(n);
        while labels.len() < n {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match w.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(Error::Transport(format!("reading worker output: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Transport(format!(
                        "worker timed out after {} ms ({} of {n} labels received)",
                        self.spec.timeout_ms,
                        labels.len()
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Transport(format!(
                        "worker closed its output after {} of {n} labels",
                        labels.len()
                    )))
                }
            };
            match line.trim() {
                "0" => labels.push(0),
                "1" => labels.push(1),
                other => return Err(Error::Transport(format!("malformed response line {other:?}"))),
            }
        }
        match writer.join() {
            Ok(Ok(())) => Ok(labels),
            Ok(Err(e)) => Err(Error::Transport(format!("writing to worker: {e}"))),
            Err(_) => Err(Error::Transport("writer thread panicked".into())),
        }
    }
}

trait CloneForWrite {
    fn try_clone_for_write(&self) -> std::io::Result<std::fs::File>;
}

impl CloneForWrite for ChildStdin {
    #[cfg(unix)]
    fn try_clone_for_write(&self) -> std::io::Result<std::fs::File> {
        use std::os::fd::AsFd;
        Ok(std::fs::File::from(self.as_fd().try_clone_to_owned()?))
    }

    #[cfg(windows)]
    fn try_clone_for_write(&self) -> std::io::Result<std::fs::File> {
        use std::os::windows::io::AsHandle;
        Ok(std::fs::File::from(self.as_handle().try_clone_to_owned()?))
    }
}

impl Classifier for ExternalClassifier {
    fn input_dim(&self) -> Option<usize> {
        self.spec.dim
    }

    fn evaluate(&mut self, points: &[f64], dim: usize) -> Result<Vec<u8>> {
        check_points(points, dim, self.spec.dim).map_err(|e| Error::Transport(e.to_string()))?;
        let mut out = Vec::with_capacity(points.len() / dim);
        for block in points.chunks(self.spec.batch_size * dim) {
            match self.round_trip(block, dim) {
                Ok(l) => out.extend(l),
                Err(e) => {
                    // The stream is out of sync after any failure.
                    self.shutdown();
                    return Err(e);
                }
            }
        }
        Ok(out)
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        self.shutdown();
    }
}
