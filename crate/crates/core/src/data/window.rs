use std::io::{BufRead, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EhdError, Result};
use crate::event::{DistillInstance, Event, EventSequence};
use crate::rng;

/// Sliding `(history, future)` windows of every sequence.
///
/// A sequence of `l` events gives `max(0, l - window + 1)` instances with
/// `window = len_history + len_future`. Returns the instances and the number
/// of sequences too short to contribute.
pub fn sliding_windows(
    sequences: &[EventSequence],
    len_future: usize,
    len_history: usize,
) -> Result<(Vec<DistillInstance>, usize)> {
    if len_future == 0 || len_history == 0 {
        return Err(EhdError::Config("window lengths must be at least 1".into()));
    }
    let window = len_future + len_history;
    let mut out = Vec::new();
    let mut skipped = 0;
    for (id, seq) in sequences.iter().enumerate() {
        let l = seq.len();
        if l < window {
            skipped += 1;
            continue;
        }
        for offset in 0..=l - window {
            out.push(DistillInstance {
                seq_id: id as u64,
                offset,
                history: seq.events[offset..offset + len_history].to_vec(),
                future: seq.events[offset + len_history..offset + window].to_vec(),
            });
        }
    }
    Ok((out, skipped))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
}

/// Split of a source sequence from a hash of its id: 80% train, 10% eval, 10% test.
pub fn split_of(seq_id: u64) -> Split {
    let h = Sha256::digest(seq_id.to_le_bytes());
    let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % 100;
    match bucket {
        0..=79 => Split::Train,
        80..=89 => Split::Eval,
        _ => Split::Test,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<DistillInstance>,
    pub eval: Vec<DistillInstance>,
    pub test: Vec<DistillInstance>,
    pub test_sampled: Vec<DistillInstance>,
}

/// Assigns whole sequences to splits and draws a seeded uniform sample of
/// `sample` test instances without replacement (kept in input order).
pub fn split_and_sample(instances: Vec<DistillInstance>, sample: usize, seed: u64) -> Result<Splits> {
    let mut s = Splits::default();
    for inst in instances {
        match split_of(inst.seq_id) {
            Split::Train => s.train.push(inst),
            Split::Eval => s.eval.push(inst),
            Split::Test => s.test.push(inst),
        }
    }
    s.test_sampled = sample_instances(&s.test, sample, seed)?;
    Ok(s)
}

/// Seeded uniform sample without replacement, in input order.
pub fn sample_instances(pool: &[DistillInstance], sample: usize, seed: u64) -> Result<Vec<DistillInstance>> {
    if sample > pool.len() {
        return Err(EhdError::InvalidData(format!(
            "requested a sample of {sample} from {} instances",
            pool.len()
        )));
    }
    let mut r = rng::derived(seed, &[0x7361_6d70]);
    let mut picked = index::sample(&mut r, pool.len(), sample).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    seq_id: u64,
    offset: usize,
    history: Vec<(usize, f64)>,
    future: Vec<(usize, f64)>,
}

fn pairs(events: &[Event]) -> Vec<(usize, f64)> {
    events.iter().map(|e| (e.mark, e.time)).collect()
}

fn events(pairs: &[(usize, f64)]) -> Vec<Event> {
    pairs.iter().map(|&(m, t)| Event::new(m, t)).collect()
}

/// One JSON object per line: `{seq_id, offset, history: [[mark, time]..], future: [..]}`.
/// Readers skip lines starting with `#`.
pub fn write_instances(out: &mut impl Write, instances: &[DistillInstance]) -> Result<()> {
    for inst in instances {
        let rec = InstanceRecord {
            seq_id: inst.seq_id,
            offset: inst.offset,
            history: pairs(&inst.history),
            future: pairs(&inst.future),
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n").map_err(|e| EhdError::io("instance stream", e))?;
    }
    Ok(())
}

pub fn read_instances(input: impl BufRead) -> Result<Vec<DistillInstance>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EhdError::io("instance stream", e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| EhdError::InvalidData(format!("instance line {}: {e}", i + 1)))?;
        out.push(DistillInstance {
            seq_id: rec.seq_id,
            offset: rec.offset,
            history: events(&rec.history),
            future: events(&rec.future),
        });
    }
    Ok(out)
}
