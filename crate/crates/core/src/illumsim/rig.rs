//! LED rig control protocol: newline-terminated ASCII commands applied to a
//! pure LED state machine.
//!
//! Grammar, one command per line:
//!
//! ```text
//! LEVEL <1-4> <ON|OFF>
//! LED <level> <index> <ON|OFF>
//! PATTERN <1-5>
//! ALL <ON|OFF>
//! STATUS
//! ```
//!
//! Replies are `OK ...` or `ERR <msg>`. Mutating commands reply with the
//! total number of LEDs on; `STATUS` replies with the four per-level counts.
//! Pattern ids 1 through 5 select the five lighting configurations in order:
//! all lights, then only level 1 through only level 4.

use thiserror::Error;

use super::{LightingConfig, RigGeometry};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RigError {
    #[error("empty command")]
    EmptyCommand,
    #[error("unknown verb at column {column}")]
    UnknownVerb { column: usize },
    #[error("missing argument for {verb} at column {column}")]
    MissingArgument { verb: &'static str, column: usize },
    #[error("malformed integer '{token}' at column {column}")]
    MalformedInteger { token: String, column: usize },
    #[error("expected ON or OFF at column {column}")]
    ExpectedOnOff { column: usize },
    #[error("level {level} out of range 1-4 at column {column}")]
    LevelOutOfRange { level: u64, column: usize },
    #[error("index {index} out of range for level {level} ({count} LEDs) at column {column}")]
    IndexOutOfRange {
        index: u64,
        level: u8,
        count: u32,
        column: usize,
    },
    #[error("pattern id {id} out of range 1-5 at column {column}")]
    PatternOutOfRange { id: u64, column: usize },
    #[error("trailing input at column {column}")]
    TrailingInput { column: usize },
}

/// A validated rig command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigCommand {
    SetLevel { level: u8, on: bool },
    SetLed { level: u8, index: u32, on: bool },
    Pattern { id: u8 },
    All { on: bool },
    Status,
}

/// Per-LED on/off state grouped by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedState {
    levels: [Vec<bool>; 4],
    /// Set when the state was produced by a PATTERN command and not
    /// modified since.
    pub active_pattern: Option<u8>,
}

impl LedState {
    /// All LEDs off.
    pub fn new(geom: &RigGeometry) -> Self {
        let levels = std::array::from_fn(|i| vec![false; geom.leds_per_level[i] as usize]);
        Self {
            levels,
            active_pattern: None,
        }
    }

    pub fn level(&self, index: usize) -> &[bool] {
        &self.levels[index]
    }

    pub fn level_on_counts(&self) -> [usize; 4] {
        std::array::from_fn(|i| self.levels[i].iter().filter(|&&b| b).count())
    }

    pub fn total_on(&self) -> usize {
        self.level_on_counts().iter().sum()
    }
}

/// Token with its 1-based starting column.
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    tokens
}

fn parse_int(tok: &Token) -> Result<u64, RigError> {
    tok.text.parse::<u64>().map_err(|_| RigError::MalformedInteger {
        token: tok.text.to_string(),
        column: tok.column,
    })
}

fn parse_on_off(tok: &Token) -> Result<bool, RigError> {
    match tok.text {
        "ON" => Ok(true),
        "OFF" => Ok(false),
        _ => Err(RigError::ExpectedOnOff { column: tok.column }),
    }
}

fn expect_arg<'a, 'b>(
    tokens: &'b [Token<'a>],
    pos: usize,
    verb: &'static str,
    line_len: usize,
) -> Result<&'b Token<'a>, RigError> {
    tokens.get(pos).ok_or(RigError::MissingArgument {
        verb,
        column: line_len + 1,
    })
}

fn parse_level(tok: &Token) -> Result<u8, RigError> {
    let level = parse_int(tok)?;
    if !(1..=4).contains(&level) {
        return Err(RigError::LevelOutOfRange {
            level,
            column: tok.column,
        });
    }
    Ok(level as u8)
}

/// Parse one command line against the configured geometry.
///
/// LED indices are zero-based within their level and validated here, so
/// [`apply_rig_command`] never has to fail.
pub fn parse_rig_command(line: &str, geom: &RigGeometry) -> Result<RigCommand, RigError> {
    let tokens = tokenize(line);
    let Some(verb) = tokens.first() else {
        return Err(RigError::EmptyCommand);
    };
    let line_len = line.trim_end().len();

    let command = match verb.text {
        "LEVEL" => {
            let level = parse_level(expect_arg(&tokens, 1, "LEVEL", line_len)?)?;
            let on = parse_on_off(expect_arg(&tokens, 2, "LEVEL", line_len)?)?;
            check_end(&tokens, 3)?;
            RigCommand::SetLevel { level, on }
        }
        "LED" => {
            let level = parse_level(expect_arg(&tokens, 1, "LED", line_len)?)?;
            let idx_tok = expect_arg(&tokens, 2, "LED", line_len)?;
            let index = parse_int(idx_tok)?;
            let count = geom.leds_per_level[(level - 1) as usize];
            if index >= u64::from(count) {
                return Err(RigError::IndexOutOfRange {
                    index,
                    level,
                    count,
                    column: idx_tok.column,
                });
            }
            let on = parse_on_off(expect_arg(&tokens, 3, "LED", line_len)?)?;
            check_end(&tokens, 4)?;
            RigCommand::SetLed {
                level,
                index: index as u32,
                on,
            }
        }
        "PATTERN" => {
            let id_tok = expect_arg(&tokens, 1, "PATTERN", line_len)?;
            let id = parse_int(id_tok)?;
            if !(1..=5).contains(&id) {
                return Err(RigError::PatternOutOfRange {
                    id,
                    column: id_tok.column,
                });
            }
            check_end(&tokens, 2)?;
            RigCommand::Pattern { id: id as u8 }
        }
        "ALL" => {
            let on = parse_on_off(expect_arg(&tokens, 1, "ALL", line_len)?)?;
            check_end(&tokens, 2)?;
            RigCommand::All { on }
        }
        "STATUS" => {
            check_end(&tokens, 1)?;
            RigCommand::Status
        }
        _ => {
            return Err(RigError::UnknownVerb {
                column: verb.column,
            })
        }
    };
    Ok(command)
}

fn check_end(tokens: &[Token], expected_len: usize) -> Result<(), RigError> {
    match tokens.get(expected_len) {
        Some(extra) => Err(RigError::TrailingInput {
            column: extra.column,
        }),
        None => Ok(()),
    }
}

/// Lighting configuration selected by a pattern id.
pub fn pattern_config(id: u8) -> LightingConfig {
    match id {
        1 => LightingConfig::AllLights,
        2 => LightingConfig::OnlyLevel1,
        3 => LightingConfig::OnlyLevel2,
        4 => LightingConfig::OnlyLevel3,
        5 => LightingConfig::OnlyLevel4,
        _ => unreachable!("pattern ids validated at parse time"),
    }
}

/// Apply a validated command as a pure state transition, returning the new
/// state and the reply text.
pub fn apply_rig_command(state: &LedState, cmd: &RigCommand) -> (LedState, String) {
    let mut next = state.clone();
    match *cmd {
        RigCommand::Status => {
            let counts = state.level_on_counts();
            let reply = format!(
                "OK {} {} {} {}",
                counts[0], counts[1], counts[2], counts[3]
            );
            return (next, reply);
        }
        RigCommand::SetLevel { level, on } => {
            next.levels[(level - 1) as usize].fill(on);
            next.active_pattern = None;
        }
        RigCommand::SetLed { level, index, on } => {
            next.levels[(level - 1) as usize][index as usize] = on;
            next.active_pattern = None;
        }
        RigCommand::All { on } => {
            for level in &mut next.levels {
                level.fill(on);
            }
            next.active_pattern = None;
        }
        RigCommand::Pattern { id } => {
            let cfg = pattern_config(id);
            for (i, level) in next.levels.iter_mut().enumerate() {
                let on = match cfg.level_index() {
                    None => true,
                    Some(active) => i == active,
                };
                level.fill(on);
            }
            next.active_pattern = Some(id);
        }
    }
    let reply = format!("OK {}", next.total_on());
    (next, reply)
}
