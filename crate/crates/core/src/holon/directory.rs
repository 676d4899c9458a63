//! Service directory kept by the coordinator.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::fb::{Behavior, ExecContext, FBTypeDef};
use crate::messaging::ChannelId;
use crate::protocol::{ProtocolMsg, RspLookup};

use super::interface::{IN_GROUP, REC_GROUP};
use super::{incoming, send_group};

pub const COORDINATOR: &str = "Coordinator";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    #[serde(rename = "ID")]
    pub id: u32,
    #[serde(rename = "Service")]
    pub service: String,
    #[serde(rename = "HolonAddr")]
    pub holon_addr: ChannelId,
}

/// Rows of `(Service, HolonAddr)`, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct Directory {
    rows: Vec<DirectoryEntry>,
    file: Option<PathBuf>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<DirectoryEntry>) -> Self {
        let mut d = Self::new();
        for r in rows {
            d.register(&r.service, r.holon_addr);
        }
        d
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<DirectoryEntry>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }

    /// Loads `path`, which later registrations are appended to. A missing file
    /// starts empty.
    pub fn open(path: &Path) -> io::Result<Self> {
        let rows = match File::open(path) {
            Ok(f) => {
                let mut rows = Vec::new();
                for line in BufReader::new(f).lines() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    rows.push(serde_json::from_str(&line).map_err(io::Error::other)?);
                }
                rows
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut d = Self::from_rows(rows);
        d.file = Some(path.to_path_buf());
        Ok(d)
    }

    pub fn rows(&self) -> &[DirectoryEntry] {
        &self.rows
    }

    /// Adds the pair unless present; returns its row id.
    pub fn register(&mut self, service: &str, holon_addr: ChannelId) -> u32 {
        if let Some(row) = self
            .rows
            .iter()
            .find(|r| r.service == service && r.holon_addr == holon_addr)
        {
            return row.id;
        }
        let id = self.rows.last().map_or(1, |r| r.id + 1);
        let row = DirectoryEntry {
            id,
            service: service.to_string(),
            holon_addr,
        };
        if let Some(path) = &self.file {
            if let Err(e) = append(path, &row) {
                tracing::error!(path = %path.display(), error = %e, "cannot persist directory row");
            }
        }
        self.rows.push(row);
        id
    }

    /// Providers of `service` in row order.
    pub fn lookup(&self, service: &str) -> Vec<ChannelId> {
        self.rows
            .iter()
            .filter(|r| r.service == service)
            .map(|r| r.holon_addr)
            .collect()
    }
}

fn append(path: &Path, row: &DirectoryEntry) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(row).map_err(io::Error::other)?;
    line.push('\n');
    f.write_all(line.as_bytes())
}

struct Coordinator {
    directory: Arc<Mutex<Directory>>,
}

impl Behavior for Coordinator {
    fn on_event(&mut self, event: &str, ctx: &mut ExecContext<'_>) {
        if event != REC_GROUP {
            return;
        }
        match incoming(ctx, IN_GROUP) {
            Some(ProtocolMsg::RegisterService(r)) => {
                self.directory
                    .lock()
                    .unwrap()
                    .register(&r.serv_id, r.holon_addr);
            }
            Some(ProtocolMsg::LookupService(l)) => {
                let holons = self.directory.lock().unwrap().lookup(&l.serv_id);
                let reply = ProtocolMsg::RspLookup(RspLookup {
                    serv_id: l.serv_id,
                    holons,
                });
                send_group(ctx, l.sender, &reply);
            }
            Some(other) => tracing::debug!(kind = other.type_name(), "coordinator ignores message"),
            None => {}
        }
    }
}

/// The coordinator block: answers lookups from and records registrations in
/// `directory`.
pub fn coordinator_type(directory: Arc<Mutex<Directory>>) -> FBTypeDef {
    use super::interface::*;
    use crate::fb::ValueKind;
    FBTypeDef::basic(COORDINATOR, move || Coordinator {
        directory: directory.clone(),
    })
    .event_in(REC_GROUP, &[IN_GROUP])
    .event_out(SEND_GROUP, &[OUT_GROUP, ID_DEST])
    .data_in(ID, ValueKind::Text)
    .data_in(IN_GROUP, ValueKind::Text)
    .data_out(OUT_GROUP, ValueKind::Text)
    .data_out(ID_DEST, ValueKind::Text)
}
