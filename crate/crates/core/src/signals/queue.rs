use std::io::{BufRead, Write};

use crossbeam_channel::{bounded, Receiver, Sender};

use super::{SignalError, SignalUpdate};

/// Sending half handed to one producer thread. Updates must be sent in
/// non-decreasing timestamp order.
#[derive(Debug, Clone)]
pub struct Producer {
    index: usize,
    tx: Sender<SignalUpdate>,
}

impl Producer {
    pub fn index(&self) -> usize {
        self.index
    }

    /// Returns false once the consumer has gone away.
    pub fn send(&self, update: SignalUpdate) -> bool {
        self.tx.send(update).is_ok()
    }
}

/// Time-ordered merge of several producers. The consumer waits until every
/// live producer has an update pending, then yields the earliest one, ties
/// going to the lower producer index. The result depends only on what each
/// producer sent, never on thread timing.
#[derive(Debug, Default)]
pub struct UpdateQueue {
    inputs: Vec<Receiver<SignalUpdate>>,
    heads: Vec<Option<SignalUpdate>>,
    closed: Vec<bool>,
}

impl UpdateQueue {
    pub fn new() -> Self {
        UpdateQueue::default()
    }

    pub fn producer(&mut self) -> Producer {
        let (tx, rx) = bounded(1024);
        self.inputs.push(rx);
        self.heads.push(None);
        self.closed.push(false);
        Producer {
            index: self.inputs.len() - 1,
            tx,
        }
    }
}

impl Iterator for UpdateQueue {
    type Item = SignalUpdate;

    fn next(&mut self) -> Option<SignalUpdate> {
        for i in 0..self.inputs.len() {
            if self.heads[i].is_none() && !self.closed[i] {
                match self.inputs[i].recv() {
                    Ok(u) => self.heads[i] = Some(u),
                    Err(_) => self.closed[i] = true,
                }
            }
        }
        let best = self
            .heads
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.as_ref().map(|u| (i, u.timestamp)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?
            .0;
        self.heads[best].take()
    }
}

/// Appends one update as a JSON line.
pub fn write_record<W: Write>(out: &mut W, update: &SignalUpdate) -> Result<(), SignalError> {
    serde_json::to_writer(&mut *out, update).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a newline-delimited record file; blank lines are skipped.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<SignalUpdate>, SignalError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let update = serde_json::from_str(&line).map_err(|e| SignalError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(update);
    }
    Ok(out)
}
