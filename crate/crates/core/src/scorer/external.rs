use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{parse_hello_reply, parse_response, HostMessage};
use super::{ScoreRequest, ScoreResponse, Scorer, ScorerError, ScorerHandle, ScorerKind};

/// How to launch an external scorer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessSpec {
    pub command: String,
    pub args: Vec<String>,
}

impl ProcessSpec {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }

    pub fn args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args.extend(args.into_iter().map(Into::into));
        self
    }
}

enum ReaderEvent {
    Line(String),
    Eof,
    Failed(String),
}

/// Client for one external scorer process.
///
/// After a timeout, crash or protocol violation the stream is out of sync;
/// the process is killed and later batches fail with [`ScorerError::Poisoned`].
pub struct ProcessScorer {
    handle: ScorerHandle,
    child: Child,
    stdin: Option<ChildStdin>,
    events: Receiver<ReaderEvent>,
    poisoned: bool,
}

impl std::fmt::Debug for ProcessScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessScorer")
            .field("handle", &self.handle)
            .field("pid", &self.child.id())
            .field("poisoned", &self.poisoned)
            .finish()
    }
}

impl ProcessScorer {
    /// Starts the process and performs the handshake.
    pub fn spawn(spec: &ProcessSpec, handshake_timeout: Duration) -> Result<Self, ScorerError> {
        let mut child = Command::new(&spec.command)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ScorerError::Spawn {
                command: spec.command.clone(),
                source,
            })?;

        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, events) = mpsc::channel();
        thread::Builder::new()
            .name("scorer-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let event = match line {
                        Ok(l) => ReaderEvent::Line(l),
                        Err(e) => ReaderEvent::Failed(e.to_string()),
                    };
                    let stop = matches!(event, ReaderEvent::Failed(_));
                    if tx.send(event).is_err() || stop {
                        return;
                    }
                }
                let _ = tx.send(ReaderEvent::Eof);
            })
            .map_err(|source| ScorerError::Spawn {
                command: spec.command.clone(),
                source,
            })?;

        let stdin = child.stdin.take();
        let mut scorer = ProcessScorer {
            handle: ScorerHandle {
                kind: ScorerKind::ExternalProcess,
                name: spec.command.clone(),
                version: String::new(),
                capabilities: BTreeSet::new(),
            },
            child,
            stdin,
            events,
            poisoned: false,
        };
        match scorer.handshake(handshake_timeout) {
            Ok(()) => Ok(scorer),
            Err(e) => {
                scorer.poison();
                Err(e)
            }
        }
    }

    fn handshake(&mut self, timeout: Duration) -> Result<(), ScorerError> {
        let hello = HostMessage::hello().encode();
        let stdin = self.stdin.as_mut().expect("stdin open during handshake");
        writeln!(stdin, "{hello}")
            .and_then(|_| stdin.flush())
            .map_err(|e| self.crashed(format!("handshake write failed: {e}")))?;

        let deadline = Instant::now() + timeout;
        loop {
            let line = self.next_line(deadline, timeout)?;
            if line.trim().is_empty() {
                continue;
            }
            let (reply, modes) = parse_hello_reply(&line).map_err(|detail| self.violation(detail))?;
            self.handle.name = reply.name;
            self.handle.version = reply.version;
            self.handle.capabilities = modes.into_iter().collect();
            return Ok(());
        }
    }

    fn next_line(&mut self, deadline: Instant, timeout: Duration) -> Result<String, ScorerError> {
        let now = Instant::now();
        if now >= deadline {
            return Err(self.timed_out(timeout));
        }
        match self.events.recv_timeout(deadline - now) {
            Ok(ReaderEvent::Line(l)) => Ok(l),
            Ok(ReaderEvent::Failed(e)) => Err(self.violation(format!("unreadable output: {e}"))),
            Ok(ReaderEvent::Eof) | Err(RecvTimeoutError::Disconnected) => {
                let status = self.exit_status_within(Duration::from_secs(1));
                let detail = match status {
                    Some(s) => format!("process exited ({s})"),
                    None => "stdout closed".to_string(),
                };
                Err(self.crashed(detail))
            }
            Err(RecvTimeoutError::Timeout) => Err(self.timed_out(timeout)),
        }
    }

    fn timed_out(&self, timeout: Duration) -> ScorerError {
        ScorerError::Timeout {
            scorer: self.handle.name.clone(),
            timeout,
        }
    }

    fn crashed(&self, detail: String) -> ScorerError {
        ScorerError::Crashed {
            scorer: self.handle.name.clone(),
            detail,
        }
    }

    fn violation(&self, detail: String) -> ScorerError {
        ScorerError::ProtocolViolation {
            scorer: self.handle.name.clone(),
            detail,
        }
    }

    fn exit_status_within(&mut self, wait: Duration) -> Option<ExitStatus> {
        let deadline = Instant::now() + wait;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => return None,
            }
        }
    }

    fn poison(&mut self) {
        self.poisoned = true;
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn run_batch(&mut self, requests: &[ScoreRequest], timeout: Duration) -> Result<Vec<ScoreResponse>, ScorerError> {
        let index: HashMap<&str, usize> = requests
            .iter()
            .enumerate()
            .map(|(i, r)| (r.request_id.as_str(), i))
            .collect();
        let mut slots: Vec<Option<ScoreResponse>> = vec![None; requests.len()];
        let deadline = Instant::now() + timeout;

        let Some(mut stdin) = self.stdin.take() else {
            return Err(ScorerError::Poisoned(self.handle.name.clone()));
        };

        let (collected, write_result, stdin) = thread::scope(|s| {
            let writer = s.spawn(move || {
                let res = (|| -> io::Result<()> {
                    let mut w = BufWriter::new(&mut stdin);
                    for r in requests {
                        writeln!(w, "{}", HostMessage::from(r).encode())?;
                    }
                    w.flush()
                })();
                (res, stdin)
            });

            let mut remaining = requests.len();
            let mut outcome = Ok(());
            while remaining > 0 {
                let line = match self.next_line(deadline, timeout) {
                    Ok(l) => l,
                    Err(e) => {
                        outcome = Err(e);
                        break;
                    }
                };
                if line.trim().is_empty() {
                    continue;
                }
                let resp = match parse_response(&line) {
                    Ok(r) => r,
                    Err(detail) => {
                        outcome = Err(self.violation(detail));
                        break;
                    }
                };
                let Some(&i) = index.get(resp.request_id.as_str()) else {
                    outcome = Err(self.violation(format!("unknown request_id `{}`", resp.request_id)));
                    break;
                };
                if slots[i].is_some() {
                    outcome = Err(self.violation(format!("duplicate response for `{}`", resp.request_id)));
                    break;
                }
                slots[i] = Some(resp);
                remaining -= 1;
            }
            if outcome.is_err() {
                // Unblocks a writer stuck on a full pipe.
                let _ = self.child.kill();
            }
            let (write_result, stdin) = writer.join().expect("writer thread panicked");
            (outcome, write_result, stdin)
        });

        self.stdin = Some(stdin);
        collected?;
        if let Err(e) = write_result {
            return Err(self.crashed(format!("request write failed: {e}")));
        }
        Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
    }

    /// Sends the shutdown record and waits for exit. Kills the process if it
    /// has not exited within `wait`.
    pub fn shutdown(mut self, wait: Duration) -> Option<ExitStatus> {
        self.shutdown_inner(wait)
    }

    fn shutdown_inner(&mut self, wait: Duration) -> Option<ExitStatus> {
        if let Ok(Some(status)) = self.child.try_wait() {
            self.stdin = None;
            return Some(status);
        }
        if let Some(mut stdin) = self.stdin.take() {
            let _ = writeln!(stdin, "{}", HostMessage::Shutdown.encode());
            let _ = stdin.flush();
        }
        let status = self.exit_status_within(wait);
        if status.is_none() {
            let _ = self.child.kill();
            return self.child.wait().ok();
        }
        status
    }
}

impl Scorer for ProcessScorer {
    fn handle(&self) -> &ScorerHandle {
        &self.handle
    }

    fn score_batch_unchecked(
        &mut self,
        requests: &[ScoreRequest],
        timeout: Duration,
    ) -> Result<Vec<ScoreResponse>, ScorerError> {
        if self.poisoned {
            return Err(ScorerError::Poisoned(self.handle.name.clone()));
        }
        let out = self.run_batch(requests, timeout);
        if out.is_err() {
            self.poison();
        }
        out
    }

    fn is_usable(&self) -> bool {
        !self.poisoned
    }
}

impl Drop for ProcessScorer {
    fn drop(&mut self) {
        if !self.poisoned {
            self.shutdown_inner(Duration::from_secs(5));
        }
    }
}
