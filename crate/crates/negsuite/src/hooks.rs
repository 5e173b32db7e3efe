//! External model hooks over a one-line-in, one-line-out process protocol.
//!
//! A hook is a long-lived child process. For every request the tool writes one
//! line to its stdin and reads exactly one line from its stdout.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;

use negsuite_core::cooccur::{Verdict, Verifier};
use negsuite_core::synthesis::{IdentityParaphraser, Paraphraser};
use negsuite_core::types::Concept;

use crate::error::{Error, Result};

/// `identity` or `command:<argv>`; the argv is split with shell quoting rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HookSpec {
    Identity,
    Command(Vec<String>),
}

impl FromStr for HookSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "identity" {
            return Ok(HookSpec::Identity);
        }
        let Some(cmd) = s.strip_prefix("command:") else {
            return Err(format!("expected `identity` or `command:<argv>`, got {s:?}"));
        };
        match shlex::split(cmd) {
            Some(argv) if !argv.is_empty() => Ok(HookSpec::Command(argv)),
            _ => Err(format!("cannot split command {cmd:?}")),
        }
    }
}

pub struct LineProcess {
    argv: Vec<String>,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl LineProcess {
    pub fn spawn(argv: &[String]) -> Result<Self> {
        let (prog, args) = argv.split_first().ok_or_else(|| Error::Hook("empty command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Hook(format!("cannot start {prog}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(LineProcess { argv: argv.to_vec(), child, stdin, stdout })
    }

    /// Send one line and wait for one line back, without its terminator.
    pub fn request(&mut self, line: &str) -> std::result::Result<String, String> {
        if line.contains('\n') || line.contains('\r') {
            return Err("request contains a line break".into());
        }
        let name = &self.argv[0];
        writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()).map_err(|e| format!("{name}: write failed: {e}"))?;
        let mut reply = String::new();
        match self.stdout.read_line(&mut reply) {
            Ok(0) => Err(format!("{name}: closed its output")),
            Ok(_) => Ok(reply.trim_end_matches(['\n', '\r']).to_string()),
            Err(e) => Err(format!("{name}: read failed: {e}")),
        }
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Paraphraser hook. A reply starting with `error` is a failure.
pub struct CommandParaphraser {
    process: LineProcess,
}

impl CommandParaphraser {
    pub fn spawn(argv: &[String]) -> Result<Self> {
        Ok(CommandParaphraser { process: LineProcess::spawn(argv)? })
    }
}

impl Paraphraser for CommandParaphraser {
    fn paraphrase(&mut self, text: &str) -> std::result::Result<String, String> {
        let reply = self.process.request(text)?;
        if reply.starts_with("error") {
            return Err(reply);
        }
        if reply.trim().is_empty() {
            return Err(format!("empty paraphrase for {text:?}"));
        }
        Ok(reply)
    }
}

/// Verifier hook. Requests are `media<TAB>concept`; replies are `present`,
/// `absent` or `unknown`. Anything else, including a dead process, is `Unknown`.
pub struct CommandVerifier {
    process: LineProcess,
    pub last_error: Option<String>,
}

impl CommandVerifier {
    pub fn spawn(argv: &[String]) -> Result<Self> {
        Ok(CommandVerifier { process: LineProcess::spawn(argv)?, last_error: None })
    }
}

impl Verifier for CommandVerifier {
    fn verify(&mut self, media_ref: Option<&str>, concept: &Concept) -> Verdict {
        let req = format!("{}\t{}", media_ref.unwrap_or(""), concept.as_str());
        match self.process.request(&req) {
            Ok(reply) => match reply.trim() {
                "present" => Verdict::Present,
                "absent" => Verdict::Absent,
                "unknown" => Verdict::Unknown,
                other => {
                    self.last_error = Some(format!("unexpected verifier reply {other:?}"));
                    Verdict::Unknown
                }
            },
            Err(e) => {
                self.last_error = Some(e);
                Verdict::Unknown
            }
        }
    }
}

pub fn paraphraser(spec: &HookSpec) -> Result<Box<dyn Paraphraser>> {
    Ok(match spec {
        HookSpec::Identity => Box::new(IdentityParaphraser),
        HookSpec::Command(argv) => Box::new(CommandParaphraser::spawn(argv)?),
    })
}

/// `None` for `identity`, which accepts every candidate.
pub fn verifier(spec: &HookSpec) -> Result<Option<CommandVerifier>> {
    Ok(match spec {
        HookSpec::Identity => None,
        HookSpec::Command(argv) => Some(CommandVerifier::spawn(argv)?),
    })
}
