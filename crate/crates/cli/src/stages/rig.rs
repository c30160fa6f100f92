//! Rig script replay: run a file of protocol commands through the LED state
//! machine and record the command/reply transcript.

use std::fs;
use std::path::Path;

use crackscan_core::illumsim::rig::{apply_rig_command, parse_rig_command, LedState};
use crackscan_core::illumsim::RigGeometry;

use crate::error::CliError;

#[derive(Debug)]
pub struct RigOutcome {
    pub transcript: String,
    pub final_state: LedState,
    /// 1-based line numbers that failed to parse.
    pub error_lines: Vec<usize>,
}

/// Replay `script` against a fresh LED state. Parse failures reply
/// `ERR <msg>` in the transcript; under `strict` the first failure aborts
/// with a data error (after the transcript is written).
pub fn cmd_rig(
    script: &Path,
    geom: &RigGeometry,
    strict: bool,
    transcript_path: Option<&Path>,
) -> Result<RigOutcome, CliError> {
    geom.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let text = fs::read_to_string(script).map_err(|e| CliError::io(script, e))?;

    let mut state = LedState::new(geom);
    let mut transcript = String::new();
    let mut error_lines = Vec::new();
    let mut first_error: Option<(usize, String)> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        transcript.push_str(line);
        transcript.push('\n');
        match parse_rig_command(line, geom) {
            Ok(cmd) => {
                let (next, reply) = apply_rig_command(&state, &cmd);
                state = next;
                transcript.push_str(&reply);
                transcript.push('\n');
            }
            Err(e) => {
                transcript.push_str(&format!("ERR {e}\n"));
                log::warn!("rig script line {line_no}: {e}");
                error_lines.push(line_no);
                if first_error.is_none() {
                    first_error = Some((line_no, e.to_string()));
                }
                if strict {
                    break;
                }
            }
        }
    }

    if let Some(path) = transcript_path {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, &transcript).map_err(|e| CliError::io(path, e))?;
    }

    if strict {
        if let Some((line_no, msg)) = first_error {
            return Err(CliError::Data(format!("rig script line {line_no}: {msg}")));
        }
    }
    Ok(RigOutcome {
        transcript,
        final_state: state,
        error_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_script(dir: &tempfile::TempDir, content: &str) -> std::path::PathBuf {
        let path = dir.path().join("script.txt");
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn all_on_then_status_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let script = write_script(&dir, "ALL ON\nSTATUS\n");
        let outcome = cmd_rig(&script, &RigGeometry::default(), false, None).unwrap();
        assert!(outcome.transcript.ends_with("OK 47 47 48 47\n"));
        assert_eq!(outcome.final_state.total_on(), 189);
        assert!(outcome.error_lines.is_empty());
    }

    #[test]
    fn empty_script_succeeds_with_empty_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let script = write_script(&dir, "");
        let outcome = cmd_rig(&script, &RigGeometry::default(), true, None).unwrap();
        assert!(outcome.transcript.is_empty());
    }

    #[test]
    fn strict_mode_fails_on_unknown_verb() {
        let dir = tempfile::tempdir().unwrap();
        let script = write_script(&dir, "ALL ON\nBLINK\nSTATUS\n");
        let transcript_path = dir.path().join("transcript.txt");
        let err = cmd_rig(
            &script,
            &RigGeometry::default(),
            true,
            Some(&transcript_path),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("line 2"));
        // Transcript written up to the failure.
        let written = fs::read_to_string(&transcript_path).unwrap();
        assert!(written.contains("ERR unknown verb"));
        assert!(!written.contains("STATUS"));
    }

    #[test]
    fn lenient_mode_records_errors_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let script = write_script(&dir, "BLINK\nALL ON\n");
        let outcome = cmd_rig(&script, &RigGeometry::default(), false, None).unwrap();
        assert_eq!(outcome.error_lines, vec![1]);
        assert_eq!(outcome.final_state.total_on(), 189);
    }
}
