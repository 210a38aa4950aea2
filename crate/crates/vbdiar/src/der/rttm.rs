//! RTTM turn-list files.
//!
//! One line per turn, space-separated:
//! `SPEAKER <recording-id> 1 <start> <duration> <NA> <NA> <speaker> <NA> <NA>`
//! with start and duration printed with exactly 3 decimal places.

use std::io::Write;
use std::path::Path;

use super::{Turn, TurnList};
use crate::error::{Error, Result};

pub fn rttm_to_string(turns: &TurnList) -> String {
    let mut out = String::new();
    for t in turns.turns() {
        out.push_str(&format!(
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
            turns.recording_id(),
            t.start,
            t.end - t.start,
            t.speaker
        ));
    }
    out
}

pub fn write_rttm(path: &Path, turns: &TurnList) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(rttm_to_string(turns).as_bytes())?;
    Ok(())
}

/// Reads an RTTM file holding exactly one recording.
pub fn read_rttm(path: &Path) -> Result<TurnList> {
    let text = std::fs::read_to_string(path)?;
    let mut recording: Option<String> = None;
    let mut turns = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let context = || format!("{}:{}", path.display(), lineno + 1);
        if fields.len() != 10 || fields[0] != "SPEAKER" {
            return Err(Error::Format(format!(
                "{}: expected 10-field SPEAKER line, got {:?}",
                context(),
                line
            )));
        }
        let start: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad start {:?}", context(), fields[3])))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad duration {:?}", context(), fields[4])))?;
        match &recording {
            None => recording = Some(fields[1].to_string()),
            Some(id) if id != fields[1] => {
                return Err(Error::Format(format!(
                    "{}: multiple recording ids in one file ({id} and {})",
                    context(),
                    fields[1]
                )))
            }
            _ => {}
        }
        turns.push(Turn::new(start, start + duration, fields[7]));
    }
    let recording = recording
        .ok_or_else(|| Error::Format(format!("{}: no SPEAKER lines", path.display())))?;
    TurnList::new(recording, turns)
}
