use std::path::Path;
use std::process::Stdio;
use std::time::Duration;

use tokio::process::Command;

use crate::store::Cancel;

/// Lines of tool output kept in failure messages.
const TAIL_LINES: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("{tool}: invalid command template: {message}")]
    Template { tool: String, message: String },
    #[error("{tool}: cannot start `{program}`: {message}")]
    Spawn {
        tool: String,
        program: String,
        message: String,
    },
    #[error("{tool} exited with {status}: {tail}")]
    Exit {
        tool: String,
        status: String,
        tail: String,
    },
    #[error("{tool} timed out after {secs} s")]
    Timeout { tool: String, secs: u64 },
    #[error("{tool} cancelled")]
    Cancelled { tool: String },
}

/// Splits `template` into words and substitutes `{name}` placeholders inside
/// each word, so substituted paths never need quoting.
pub fn expand(template: &str, vars: &[(&str, &str)]) -> Result<Vec<String>, shell_words::ParseError> {
    Ok(shell_words::split(template)?
        .into_iter()
        .map(|word| {
            vars.iter()
                .fold(word, |w, (k, v)| w.replace(&format!("{{{k}}}"), v))
        })
        .collect())
}

fn tail(stdout: &[u8], stderr: &[u8]) -> String {
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(stdout),
        String::from_utf8_lossy(stderr)
    );
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let start = lines.len().saturating_sub(TAIL_LINES);
    if lines.is_empty() {
        "(no output)".into()
    } else {
        lines[start..].join("\n")
    }
}

/// Runs one stage tool in `cwd`. The child is killed on timeout or
/// cancellation.
pub async fn run_tool(
    tool: &str,
    template: &str,
    vars: &[(&str, &str)],
    cwd: &Path,
    timeout: Duration,
    cancel: &Cancel,
) -> Result<(), ToolError> {
    let words = expand(template, vars).map_err(|e| ToolError::Template {
        tool: tool.into(),
        message: e.to_string(),
    })?;
    let Some((program, args)) = words.split_first() else {
        return Err(ToolError::Template {
            tool: tool.into(),
            message: "command is empty".into(),
        });
    };
    let child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true)
        .spawn()
        .map_err(|e| ToolError::Spawn {
            tool: tool.into(),
            program: program.clone(),
            message: e.to_string(),
        })?;
    let output = tokio::select! {
        out = tokio::time::timeout(timeout, child.wait_with_output()) => match out {
            Ok(out) => out.map_err(|e| ToolError::Spawn {
                tool: tool.into(),
                program: program.clone(),
                message: e.to_string(),
            })?,
            Err(_) => return Err(ToolError::Timeout { tool: tool.into(), secs: timeout.as_secs() }),
        },
        _ = cancel.cancelled() => return Err(ToolError::Cancelled { tool: tool.into() }),
    };
    if output.status.success() {
        Ok(())
    } else {
        let status = match output.status.code() {
            Some(code) => format!("status {code}"),
            None => "a signal".into(),
        };
        Err(ToolError::Exit {
            tool: tool.into(),
            status,
            tail: tail(&output.stdout, &output.stderr),
        })
    }
}
