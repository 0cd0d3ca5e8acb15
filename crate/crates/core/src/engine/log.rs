use std::io::{self, Write};

use super::Location;
use crate::stats::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A birth, or the creation of an initial particle (no parent).
    Birth,
    /// The level reached the ceiling.
    Death,
    Immigrate,
    /// Killed by a catastrophe; the logged level is the scaled one.
    Catastrophe,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Birth => "birth",
            EventKind::Death => "death",
            EventKind::Immigrate => "immigrate",
            EventKind::Catastrophe => "catastrophe",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub time: f64,
    pub id: u64,
    pub parent_id: Option<u64>,
    pub level: f64,
    pub location: Location,
}

/// Writes `event,time,id,parent_id,level,loc0,...` with one location column
/// per coordinate (widest record wins; shorter rows are padded).
pub fn write_event_log<W: Write>(records: &[EventRecord], mut out: W) -> io::Result<()> {
    let width = records.iter().map(|r| r.location.csv_fields().len()).max().unwrap_or(0);
    write!(out, "event,time,id,parent_id,level")?;
    for i in 0..width {
        write!(out, ",loc{i}")?;
    }
    writeln!(out)?;
    for r in records {
        let parent = r.parent_id.map(|p| p.to_string()).unwrap_or_default();
        write!(out, "{},{},{},{},{}", r.kind.as_str(), fmt_f64(r.time), r.id, parent, fmt_f64(r.level))?;
        let fields = r.location.csv_fields();
        for i in 0..width {
            write!(out, ",{}", fields.get(i).map(String::as_str).unwrap_or(""))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
