use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::layout::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub time: f64,
    pub entity: String,
    pub event: &'static str,
    pub node: NodeId,
}

/// Per-episode event trace, written as CSV `time,entity,event,node`.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    pub rows: Vec<LogRow>,
}

impl EventLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
