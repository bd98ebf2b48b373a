//! In-process topic log with replayable, exactly-once subscriptions.
//!
//! Every topic keeps its full message log for the lifetime of the bus.
//! Publishing appends under the topic lock, so sequence numbers handed out to
//! concurrent publishers are gap-free and totally ordered. A [`Subscription`]
//! is a cursor into that log; it never skips and never repeats a message.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("invalid topic name {0:?}")]
    InvalidTopic(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("from_seq {from_seq} out of range for topic {topic:?} (next_seq {next_seq})")]
    SeqOutOfRange {
        topic: String,
        from_seq: u64,
        next_seq: u64,
    },
}

/// Topic names: non-empty, ASCII alphanumerics plus `.`, `-` and `_`.
pub fn validate_topic_name(name: &str) -> Result<(), BusError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'));
    if ok {
        Ok(())
    } else {
        Err(BusError::InvalidTopic(name.to_string()))
    }
}

/// Snapshot of a topic's metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub next_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: String,
    pub seq: u64,
    /// Logical milliseconds since the epoch, supplied by the publisher.
    pub timestamp: i64,
    pub content_type: String,
    pub payload: Arc<[u8]>,
}

impl Message {
    pub fn payload_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.payload).ok()
    }
}

pub const CONTENT_JSON: &str = "application/json";

#[derive(Debug)]
struct TopicLog {
    name: String,
    messages: Mutex<Vec<Message>>,
    appended: Condvar,
}

impl TopicLog {
    fn next_seq(&self) -> u64 {
        self.messages.lock().unwrap().len() as u64
    }
}

#[derive(Debug, Default)]
pub struct MessageBus {
    topics: RwLock<HashMap<String, Arc<TopicLog>>>,
    live: Mutex<HashMap<u64, Arc<AtomicBool>>>,
    next_sub_id: AtomicU64,
}

impl MessageBus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates the topic, or returns the existing one untouched.
    pub fn create_topic(&self, name: &str) -> Result<Topic, BusError> {
        validate_topic_name(name)?;
        let log = {
            let mut topics = self.topics.write().unwrap();
            topics
                .entry(name.to_string())
                .or_insert_with(|| {
                    Arc::new(TopicLog {
                        name: name.to_string(),
                        messages: Mutex::new(Vec::new()),
                        appended: Condvar::new(),
                    })
                })
                .clone()
        };
        Ok(Topic {
            name: name.to_string(),
            next_seq: log.next_seq(),
        })
    }

    pub fn topic(&self, name: &str) -> Result<Topic, BusError> {
        let log = self.log(name)?;
        Ok(Topic {
            name: log.name.clone(),
            next_seq: log.next_seq(),
        })
    }

    pub fn topics(&self) -> Vec<Topic> {
        let topics = self.topics.read().unwrap();
        let mut out: Vec<Topic> = topics
            .values()
            .map(|log| Topic {
                name: log.name.clone(),
                next_seq: log.next_seq(),
            })
            .collect();
        out.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    fn log(&self, name: &str) -> Result<Arc<TopicLog>, BusError> {
        self.topics
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))
    }

    /// Appends a message and returns its sequence number.
    pub fn publish(
        &self,
        topic: &str,
        content_type: &str,
        payload: impl Into<Arc<[u8]>>,
        timestamp: i64,
    ) -> Result<u64, BusError> {
        let log = self.log(topic)?;
        let mut messages = log.messages.lock().unwrap();
        let seq = messages.len() as u64;
        messages.push(Message {
            topic: log.name.clone(),
            seq,
            timestamp,
            content_type: content_type.to_string(),
            payload: payload.into(),
        });
        drop(messages);
        log.appended.notify_all();
        Ok(seq)
    }

    /// Serializes `value` as JSON and publishes it.
    pub fn publish_json<T: Serialize>(
        &self,
        topic: &str,
        value: &T,
        timestamp: i64,
    ) -> Result<u64, BusError> {
        let bytes = serde_json::to_vec(value).expect("serializable payload");
        self.publish(topic, CONTENT_JSON, bytes, timestamp)
    }

    pub fn subscribe(&self, topic: &str, from_seq: u64) -> Result<Subscription, BusError> {
        let log = self.log(topic)?;
        let next_seq = log.next_seq();
        if from_seq > next_seq {
            return Err(BusError::SeqOutOfRange {
                topic: topic.to_string(),
                from_seq,
                next_seq,
            });
        }
        let id = self.next_sub_id.fetch_add(1, Ordering::Relaxed);
        let active = Arc::new(AtomicBool::new(true));
        self.live.lock().unwrap().insert(id, active.clone());
        Ok(Subscription {
            id: SubscriptionId(id),
            log,
            cursor: from_seq,
            active,
        })
    }

    /// Stops deliveries to the subscription. Unknown or already-removed ids
    /// are acknowledged as well.
    pub fn unsubscribe(&self, id: SubscriptionId) {
        if let Some(flag) = self.live.lock().unwrap().remove(&id.0) {
            flag.store(false, Ordering::Release);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubscriptionId(pub u64);

/// A cursor over one topic's log.
#[derive(Debug)]
pub struct Subscription {
    id: SubscriptionId,
    log: Arc<TopicLog>,
    cursor: u64,
    active: Arc<AtomicBool>,
}

impl Subscription {
    pub fn id(&self) -> SubscriptionId {
        self.id
    }

    pub fn topic(&self) -> &str {
        &self.log.name
    }

    /// Sequence number of the next message this subscription will deliver.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn is_active(&self) -> bool {
        self.active.load(Ordering::Acquire)
    }

    /// Next message if one is already available.
    pub fn try_next(&mut self) -> Option<Message> {
        if !self.is_active() {
            return None;
        }
        let messages = self.log.messages.lock().unwrap();
        let msg = messages.get(self.cursor as usize).cloned();
        if msg.is_some() {
            self.cursor += 1;
        }
        msg
    }

    /// Blocks up to `timeout` for the next message.
    pub fn next_timeout(&mut self, timeout: Duration) -> Option<Message> {
        let deadline = Instant::now() + timeout;
        let mut messages = self.log.messages.lock().unwrap();
        loop {
            if !self.is_active() {
                return None;
            }
            if let Some(msg) = messages.get(self.cursor as usize) {
                self.cursor += 1;
                return Some(msg.clone());
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            messages = self
                .log
                .appended
                .wait_timeout(messages, deadline - now)
                .unwrap()
                .0;
        }
    }

    /// Delivers every message currently available.
    pub fn drain(&mut self) -> Vec<Message> {
        if !self.is_active() {
            return Vec::new();
        }
        let messages = self.log.messages.lock().unwrap();
        let start = self.cursor as usize;
        let out = messages[start..].to_vec();
        self.cursor = messages.len() as u64;
        out
    }
}
