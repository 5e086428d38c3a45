//! Scorer process for exercising the host side of the wire protocol.
//!
//! Scores match the built-in lexical scorer exactly. Flags inject faults:
//!
//! ```text
//! --metric M           utility/quality metric (rouge_1, rouge_2, rouge_l)
//! --modes LIST         advertised modes, comma-separated
//! --name N --version V handshake identity
//! --reverse-chunk N    answer every N requests in reverse order
//! --error-on TEXT      error response when the hypothesis contains TEXT
//! --error-msg MSG      message for --error-on (default "oom")
//! --crash-after N      exit with status 3 when request N+1 arrives
//! --garbage-after N    print a non-JSON line after N responses
//! --unknown-id         answer the first request under a foreign id
//! --duplicate          answer the first request twice
//! --hang               complete the handshake, then never answer
//! --silent-hello       never answer the handshake
//! --record PATH        append every line read (`> `) and written (`< `) to PATH
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use sumrank::lexical::LexicalMetric;
use sumrank::scorer::protocol::{encode_response, HelloReply, HostMessage};
use sumrank::scorer::{LexicalScorer, ScoreMode, ScoreRequest, ScoreResponse};

struct Options {
    metric: LexicalMetric,
    modes: Vec<ScoreMode>,
    name: String,
    version: String,
    reverse_chunk: usize,
    error_on: Option<String>,
    error_msg: String,
    crash_after: Option<usize>,
    garbage_after: Option<usize>,
    unknown_id: bool,
    duplicate: bool,
    hang: bool,
    silent_hello: bool,
    record: Option<String>,
}

fn parse_args() -> Result<Options, String> {
    let mut o = Options {
        metric: LexicalMetric::Rouge1,
        modes: vec![ScoreMode::Consistency, ScoreMode::Utility, ScoreMode::Quality],
        name: "test-scorer".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        reverse_chunk: 1,
        error_on: None,
        error_msg: "oom".into(),
        crash_after: None,
        garbage_after: None,
        unknown_id: false,
        duplicate: false,
        hang: false,
        silent_hello: false,
        record: None,
    };
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = |f: &str| args.next().ok_or_else(|| format!("{f} needs a value"));
        let count = |s: String| s.parse::<usize>().map_err(|e| format!("{flag}: {e}"));
        match flag.as_str() {
            "--metric" => o.metric = value(&flag)?.parse()?,
            "--modes" => o.modes = value(&flag)?.split(',').map(str::parse).collect::<Result<_, _>>()?,
            "--name" => o.name = value(&flag)?,
            "--version" => o.version = value(&flag)?,
            "--reverse-chunk" => o.reverse_chunk = count(value(&flag)?)?.max(1),
            "--error-on" => o.error_on = Some(value(&flag)?),
            "--error-msg" => o.error_msg = value(&flag)?,
            "--crash-after" => o.crash_after = Some(count(value(&flag)?)?),
            "--garbage-after" => o.garbage_after = Some(count(value(&flag)?)?),
            "--unknown-id" => o.unknown_id = true,
            "--duplicate" => o.duplicate = true,
            "--hang" => o.hang = true,
            "--silent-hello" => o.silent_hello = true,
            "--record" => o.record = Some(value(&flag)?),
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(o)
}

struct Io {
    out: io::StdoutLock<'static>,
    record: Option<File>,
}

impl Io {
    fn note(&mut self, prefix: &str, line: &str) -> io::Result<()> {
        if let Some(f) = &mut self.record {
            writeln!(f, "{prefix}{line}")?;
        }
        Ok(())
    }

    fn send(&mut self, line: &str) -> io::Result<()> {
        self.note("< ", line)?;
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }
}

fn run(o: Options) -> io::Result<ExitCode> {
    let record = match &o.record {
        Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    let mut io = Io {
        out: io::stdout().lock(),
        record,
    };
    let scorer = LexicalScorer::new(o.metric);
    let mut pending: Vec<ScoreResponse> = Vec::new();
    let (mut received, mut sent) = (0usize, 0usize);

    for line in io::stdin().lock().lines() {
        let line = line?;
        io.note("> ", &line)?;
        let msg: HostMessage = match serde_json::from_str(&line) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("test-scorer: bad host record: {e}");
                return Ok(ExitCode::from(2));
            }
        };
        match msg {
            HostMessage::Hello { .. } => {
                if !o.silent_hello {
                    io.send(&HelloReply::new(&o.name, &o.version, &o.modes).encode())?;
                }
            }
            HostMessage::Shutdown => {
                for r in pending.drain(..).rev() {
                    io.send(&encode_response(&r))?;
                }
                return Ok(ExitCode::SUCCESS);
            }
            HostMessage::Score {
                request_id,
                mode,
                premise,
                hypothesis,
            } => {
                if o.crash_after == Some(received) {
                    return Ok(ExitCode::from(3));
                }
                received += 1;
                if o.hang {
                    continue;
                }
                let req = ScoreRequest::new(request_id, mode, premise, hypothesis);
                let result = match &o.error_on {
                    Some(t) if req.hypothesis.contains(t.as_str()) => Err(o.error_msg.clone()),
                    _ if !o.modes.contains(&mode) => Err(format!("unsupported mode `{mode}`")),
                    _ => Ok(scorer.score_one(&req)),
                };
                let mut resp = ScoreResponse {
                    request_id: req.request_id,
                    result,
                };
                if o.unknown_id && received == 1 {
                    resp.request_id = "bogus".into();
                }
                if o.duplicate && received == 1 {
                    io.send(&encode_response(&resp))?;
                }
                pending.push(resp);
                if pending.len() >= o.reverse_chunk {
                    for r in pending.drain(..).rev() {
                        if o.garbage_after == Some(sent) {
                            io.send("this is not json")?;
                        }
                        io.send(&encode_response(&r))?;
                        sent += 1;
                    }
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let opts = match parse_args() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("test-scorer: {e}");
            return ExitCode::from(2);
        }
    };
    match run(opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("test-scorer: {e}");
            ExitCode::from(1)
        }
    }
}
