//! Interaction logs: ids, CSV ingestion and the chronological split used for
//! training and all-ranking evaluation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fmt::Write as _;

use log::warn;

use crate::error::{HcrError, Result};

/// Dense user index in `[0, num_users)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

/// Dense item index in `[0, num_items)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemId(pub u32);

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One impression record. `like` implies `click`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: u64,
    pub click: bool,
    pub like: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    num_users: usize,
    num_items: usize,
}

impl InteractionLog {
    /// Builds a log, validating bounds and the like-implies-click rule.
    /// Records are stably sorted by timestamp.
    pub fn new(
        mut interactions: Vec<Interaction>,
        num_users: usize,
        num_items: usize,
    ) -> Result<Self> {
        for (row, rec) in interactions.iter().enumerate() {
            if rec.user.index() >= num_users || rec.item.index() >= num_items {
                return Err(HcrError::InvalidArgument(format!(
                    "record {row} has ids ({}, {}) outside {num_users}x{num_items}",
                    rec.user, rec.item
                )));
            }
            if rec.like && !rec.click {
                return Err(HcrError::InvalidArgument(format!(
                    "record {row} has like without click"
                )));
            }
        }
        interactions.sort_by_key(|r| r.timestamp);
        Ok(Self { interactions, num_users, num_items })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn click_count(&self) -> usize {
        self.interactions.iter().filter(|r| r.click).count()
    }

    pub fn like_count(&self) -> usize {
        self.interactions.iter().filter(|r| r.like).count()
    }

    /// Items each user interacted with in this log.
    pub fn items_per_user(&self) -> Vec<BTreeSet<ItemId>> {
        let mut out = vec![BTreeSet::new(); self.num_users];
        for r in &self.interactions {
            out[r.user.index()].insert(r.item);
        }
        out
    }

    /// Writes the log as CSV with a header line, using dense ids.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.interactions.len() * 16 + 40);
        out.push_str("user_id,item_id,timestamp,click,like\n");
        for r in &self.interactions {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.user.0, r.item.0, r.timestamp, r.click as u8, r.like as u8
            );
        }
        out
    }
}

/// Result of ingesting a CSV log.
#[derive(Clone, Debug)]
pub struct ParsedLog {
    pub log: InteractionLog,
    /// Rows dropped because `like = 1` while `click = 0`.
    pub rejected: usize,
    /// Raw user id for each dense index.
    pub user_labels: Vec<u64>,
    /// Raw item id for each dense index.
    pub item_labels: Vec<u64>,
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str, line: usize) -> Result<T> {
    let text = field.ok_or_else(|| HcrError::Malformed {
        line,
        reason: format!("missing field {name}"),
    })?;
    text.trim().parse().map_err(|_| HcrError::Malformed {
        line,
        reason: format!("cannot parse {name} from {text:?}"),
    })
}

fn parse_flag(field: Option<&str>, name: &str, line: usize) -> Result<bool> {
    match parse_field::<u8>(field, name, line)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(HcrError::Malformed {
            line,
            reason: format!("{name} must be 0 or 1, got {other}"),
        }),
    }
}

/// Parses `user_id,item_id,timestamp,click,like` rows.
///
/// Raw ids are re-indexed densely in ascending raw-id order, so a log whose
/// ids already cover `0..n` keeps its ids. Rows with a like but no click are
/// dropped and counted in [`ParsedLog::rejected`]; any other defect fails the
/// whole parse with the offending 1-based line number.
pub fn parse_interaction_log(text: &str) -> Result<ParsedLog> {
    struct Row {
        user: u64,
        item: u64,
        timestamp: u64,
        click: bool,
        like: bool,
    }

    let mut rows = Vec::new();
    let mut rejected = 0usize;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line.starts_with("user_id") {
            continue;
        }
        let mut fields = line.split(',');
        let user = parse_field::<u64>(fields.next(), "user_id", line_no)?;
        let item = parse_field::<u64>(fields.next(), "item_id", line_no)?;
        let timestamp = parse_field::<u64>(fields.next(), "timestamp", line_no)?;
        let click = parse_flag(fields.next(), "click", line_no)?;
        let like = parse_flag(fields.next(), "like", line_no)?;
        if fields.next().is_some() {
            return Err(HcrError::Malformed {
                line: line_no,
                reason: "expected exactly 5 fields".into(),
            });
        }
        if like && !click {
            rejected += 1;
            continue;
        }
        rows.push(Row { user, item, timestamp, click, like });
    }
    if rejected > 0 {
        warn!("rejected {rejected} rows with like=1 and click=0");
    }

    let user_labels: Vec<u64> = rows
        .iter()
        .map(|r| r.user)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let item_labels: Vec<u64> = rows
        .iter()
        .map(|r| r.item)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_index: BTreeMap<u64, u32> =
        user_labels.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
    let item_index: BTreeMap<u64, u32> =
        item_labels.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();

    let interactions = rows
        .iter()
        .map(|r| Interaction {
            user: UserId(user_index[&r.user]),
            item: ItemId(item_index[&r.item]),
            timestamp: r.timestamp,
            click: r.click,
            like: r.like,
        })
        .collect();
    let log = InteractionLog::new(interactions, user_labels.len(), item_labels.len())?;
    Ok(ParsedLog { log, rejected, user_labels, item_labels })
}

/// Training log plus per-user held-out liked items, each list ordered by
/// the time the like was observed.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: InteractionLog,
    pub validation: Vec<Vec<ItemId>>,
    pub test: Vec<Vec<ItemId>>,
}

impl DatasetSplit {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }
}

/// Keeps the earliest `floor(train_fraction * N)` records for training.
/// Each user's later liked items that never appear in that user's training
/// records are de-duplicated and halved by time: the earlier half (plus the
/// middle item for odd counts) is validation, the rest is test.
pub fn chronological_split(log: &InteractionLog, train_fraction: f64) -> Result<DatasetSplit> {
    if log.is_empty() {
        return Err(HcrError::EmptyLog);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(HcrError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let records = log.interactions();
    let cut = (train_fraction * records.len() as f64).floor() as usize;
    let train = InteractionLog {
        interactions: records[..cut].to_vec(),
        num_users: log.num_users(),
        num_items: log.num_items(),
    };
    let train_items = train.items_per_user();

    let mut held_out: Vec<Vec<ItemId>> = vec![Vec::new(); log.num_users()];
    let mut seen: Vec<HashSet<ItemId>> = vec![HashSet::new(); log.num_users()];
    for r in &records[cut..] {
        let u = r.user.index();
        if r.like && !train_items[u].contains(&r.item) && seen[u].insert(r.item) {
            held_out[u].push(r.item);
        }
    }

    let mut validation = Vec::with_capacity(held_out.len());
    let mut test = Vec::with_capacity(held_out.len());
    for mut items in held_out {
        let later = items.split_off(items.len().div_ceil(2));
        validation.push(items);
        test.push(later);
    }
    Ok(DatasetSplit { train, validation, test })
}
