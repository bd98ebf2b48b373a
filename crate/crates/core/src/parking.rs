//! Per-block parking occupancy, bucketed history and free-slot ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::city::{CityGraph, Coordinate};

pub const TOPIC_PARKING_EVENTS: &str = "parking.events";
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 1.0 / 300.0;
pub const SLOT_MINUTES: i64 = 30;
pub const MS_PER_SLOT: i64 = SLOT_MINUTES * 60_000;
pub const SLOTS_PER_DAY: u8 = (24 * 60 / SLOT_MINUTES) as u8;
const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParkingError {
    #[error("unknown block {0:?}")]
    UnknownBlock(String),
    #[error("block {0:?} is not in the metered zone")]
    UnmeteredBlock(String),
    #[error("block {0:?} has no parking capacity")]
    ZeroCapacity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CheckIn,
    CheckOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParkingEvent {
    pub id: String,
    pub block: String,
    pub kind: EventKind,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockOccupancy {
    pub block_id: String,
    pub occupied: u32,
    pub capacity: u32,
    pub last_update: i64,
}

impl BlockOccupancy {
    /// `None` for capacity-0 blocks.
    pub fn free_fraction(&self) -> Option<f64> {
        (self.capacity > 0)
            .then(|| (self.capacity - self.occupied.min(self.capacity)) as f64 / self.capacity as f64)
    }
}

/// Weekday (0 = Monday) and half-hour slot of the day, in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBucket {
    pub weekday: u8,
    pub slot: u8,
}

impl TimeBucket {
    pub fn new(weekday: u8, slot: u8) -> Option<Self> {
        (weekday < 7 && slot < SLOTS_PER_DAY).then_some(Self { weekday, slot })
    }

    pub fn of(t_ms: i64) -> Self {
        let days = t_ms.div_euclid(MS_PER_DAY);
        // 1970-01-01 was a Thursday
        let weekday = (days + 3).rem_euclid(7) as u8;
        let slot = (t_ms.rem_euclid(MS_PER_DAY) / MS_PER_SLOT) as u8;
        Self { weekday, slot }
    }

    /// Position in the 7 x 48 weekly grid.
    pub fn index(&self) -> usize {
        self.weekday as usize * SLOTS_PER_DAY as usize + self.slot as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyCounts {
    /// Check-ins on a full block.
    pub overflow: u64,
    /// Check-outs on an empty block.
    pub underflow: u64,
}

impl AnomalyCounts {
    pub fn total(&self) -> u64 {
        self.overflow + self.underflow
    }
}

/// Live occupancy of every metered block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParkingState {
    blocks: BTreeMap<String, BlockOccupancy>,
    anomalies: AnomalyCounts,
    applied: u64,
}

impl ParkingState {
    /// Empty occupancy for every metered block of the graph.
    pub fn for_graph(graph: &CityGraph) -> Self {
        let blocks = graph
            .blocks()
            .iter()
            .filter(|b| b.in_metered_zone)
            .map(|b| {
                (
                    b.id.clone(),
                    BlockOccupancy {
                        block_id: b.id.clone(),
                        occupied: 0,
                        capacity: b.capacity,
                        last_update: 0,
                    },
                )
            })
            .collect();
        Self {
            blocks,
            ..Self::default()
        }
    }

    pub fn with_blocks(blocks: impl IntoIterator<Item = (String, u32)>) -> Self {
        Self {
            blocks: blocks
                .into_iter()
                .map(|(id, capacity)| {
                    (
                        id.clone(),
                        BlockOccupancy {
                            block_id: id,
                            occupied: 0,
                            capacity,
                            last_update: 0,
                        },
                    )
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn get(&self, block: &str) -> Option<&BlockOccupancy> {
        self.blocks.get(block)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockOccupancy> {
        self.blocks.values()
    }

    pub fn anomalies(&self) -> AnomalyCounts {
        self.anomalies
    }

    pub fn events_applied(&self) -> u64 {
        self.applied
    }

    /// Applies one meter event. Impossible transitions are clamped and
    /// counted rather than rejected.
    pub fn apply_event(&mut self, event: &ParkingEvent) -> Result<BlockOccupancy, ParkingError> {
        let occ = self
            .blocks
            .get_mut(&event.block)
            .ok_or_else(|| ParkingError::UnknownBlock(event.block.clone()))?;
        match event.kind {
            EventKind::CheckIn if occ.occupied >= occ.capacity => self.anomalies.overflow += 1,
            EventKind::CheckIn => occ.occupied += 1,
            EventKind::CheckOut if occ.occupied == 0 => self.anomalies.underflow += 1,
            EventKind::CheckOut => occ.occupied -= 1,
        }
        occ.last_update = occ.last_update.max(event.timestamp);
        self.applied += 1;
        Ok(occ.clone())
    }

    /// Like [`apply_event`](Self::apply_event) but distinguishes blocks that
    /// exist in the graph yet are not metered.
    pub fn apply_checked(
        &mut self,
        graph: &CityGraph,
        event: &ParkingEvent,
    ) -> Result<BlockOccupancy, ParkingError> {
        match graph.block(&event.block) {
            None => Err(ParkingError::UnknownBlock(event.block.clone())),
            Some(b) if !b.in_metered_zone => Err(ParkingError::UnmeteredBlock(b.id.clone())),
            Some(_) => self.apply_event(event),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub mean: f64,
    pub count: u64,
}

/// Running mean of the free fraction per (block, time bucket).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyHistory {
    stats: BTreeMap<(String, TimeBucket), BucketStat>,
}

impl OccupancyHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds the block's current free fraction into the bucket of `t`.
    /// Capacity-0 blocks are skipped and yield `None`.
    pub fn record_snapshot(&mut self, occupancy: &BlockOccupancy, t: i64) -> Option<BucketStat> {
        let free = occupancy.free_fraction()?;
        let stat = self
            .stats
            .entry((occupancy.block_id.clone(), TimeBucket::of(t)))
            .or_default();
        stat.count += 1;
        stat.mean += (free - stat.mean) / stat.count as f64;
        Some(*stat)
    }

    /// Snapshots every block in `state`.
    pub fn record_all(&mut self, state: &ParkingState, t: i64) {
        for occ in state.blocks() {
            self.record_snapshot(occ, t);
        }
    }

    pub fn stat(&self, block: &str, bucket: TimeBucket) -> BucketStat {
        self.stats
            .get(&(block.to_string(), bucket))
            .copied()
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }
}

/// Blend of the historical free fraction for the bucket of `t` with the
/// block's live free fraction. Without history the live fraction is used.
pub fn predict_free_probability(
    history: &OccupancyHistory,
    state: &ParkingState,
    block: &str,
    t: i64,
    alpha: f64,
) -> Result<f64, ParkingError> {
    let occ = state
        .get(block)
        .ok_or_else(|| ParkingError::UnknownBlock(block.to_string()))?;
    let current = occ
        .free_fraction()
        .ok_or_else(|| ParkingError::ZeroCapacity(block.to_string()))?;
    let stat = history.stat(block, TimeBucket::of(t));
    let p = if stat.count == 0 {
        current
    } else {
        (1.0 - alpha) * stat.mean + alpha * current
    };
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBlock {
    pub block_id: String,
    pub p_free: f64,
    pub walk_distance: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionRanking(pub Vec<RankedBlock>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for RankingParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

pub fn ranking_score(p_free: f64, walk_distance: f64, lambda: f64) -> f64 {
    p_free * (-lambda * walk_distance).exp()
}

/// Metered blocks with capacity within `radius` of `destination`, ordered
/// by `p_free * exp(-lambda * distance)` descending, ties by block id.
pub fn rank_blocks(
    graph: &CityGraph,
    history: &OccupancyHistory,
    state: &ParkingState,
    destination: Coordinate,
    radius: f64,
    t: i64,
    params: RankingParams,
) -> PredictionRanking {
    let mut out: Vec<RankedBlock> = graph
        .nearest_blocks(destination, radius)
        .into_iter()
        .filter(|(b, _)| b.capacity > 0 && b.in_metered_zone)
        .filter_map(|(b, d)| {
            let p = predict_free_probability(history, state, &b.id, t, params.alpha).ok()?;
            Some(RankedBlock {
                block_id: b.id.clone(),
                p_free: p,
                walk_distance: d,
                score: ranking_score(p, d, params.lambda),
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.block_id.cmp(&b.block_id))
    });
    PredictionRanking(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::city::{BlockDoc, CityBuilder};

    fn ev(block: &str, kind: EventKind, t: i64) -> ParkingEvent {
        ParkingEvent {
            id: format!("{block}-{t}"),
            block: block.into(),
            kind,
            timestamp: t,
        }
    }

    #[test]
    fn in_out_arithmetic() {
        let mut s = ParkingState::with_blocks([("b".to_string(), 10)]);
        for (i, k) in [EventKind::CheckIn, EventKind::CheckIn, EventKind::CheckIn, EventKind::CheckOut]
            .into_iter()
            .enumerate()
        {
            s.apply_event(&ev("b", k, i as i64)).unwrap();
        }
        let occ = s.get("b").unwrap();
        assert_eq!(occ.occupied, 2);
        assert_eq!(occ.last_update, 3);
    }

    #[test]
    fn clamps_are_counted() {
        let mut s = ParkingState::with_blocks([("b".to_string(), 1)]);
        s.apply_event(&ev("b", EventKind::CheckOut, 5)).unwrap();
        assert_eq!(s.get("b").unwrap().occupied, 0);
        assert_eq!(s.anomalies().underflow, 1);
        s.apply_event(&ev("b", EventKind::CheckIn, 6)).unwrap();
        s.apply_event(&ev("b", EventKind::CheckIn, 7)).unwrap();
        assert_eq!(s.get("b").unwrap().occupied, 1);
        assert_eq!(s.anomalies().overflow, 1);
        assert_eq!(
            s.apply_event(&ev("zz", EventKind::CheckIn, 0)),
            Err(ParkingError::UnknownBlock("zz".into()))
        );
    }

    #[test]
    fn unmetered_block_rejected() {
        let g = CityBuilder::new()
            .node("a", 0.0, 0.0)
            .node("b", 100.0, 0.0)
            .edge("e", "a", "b", "X", false)
            .block(BlockDoc {
                id: "free".into(),
                edge: "e".into(),
                usable_length: 80.0,
                prohibited: vec![],
                garages: vec![],
                metered: false,
            })
            .build()
            .unwrap();
        let mut s = ParkingState::for_graph(&g);
        assert_eq!(
            s.apply_checked(&g, &ev("free", EventKind::CheckIn, 0)),
            Err(ParkingError::UnmeteredBlock("free".into()))
        );
    }

    #[test]
    fn buckets() {
        assert_eq!(TimeBucket::of(0), TimeBucket { weekday: 3, slot: 0 });
        // 2024-01-01T08:45Z, a Monday
        let t = 1_704_067_200_000 + (8 * 60 + 45) * 60_000;
        assert_eq!(TimeBucket::of(t), TimeBucket { weekday: 0, slot: 17 });
        assert_eq!(TimeBucket::of(-1), TimeBucket { weekday: 2, slot: 47 });
        assert!(TimeBucket::new(7, 0).is_none());
        assert!(TimeBucket::new(6, 48).is_none());
    }

    #[test]
    fn snapshot_means() {
        let mut h = OccupancyHistory::new();
        let mut occ = BlockOccupancy {
            block_id: "b".into(),
            occupied: 5,
            capacity: 10,
            last_update: 0,
        };
        let s = h.record_snapshot(&occ, 0).unwrap();
        assert_eq!((s.mean, s.count), (0.5, 1));

        let mut h = OccupancyHistory::new();
        occ.occupied = 10;
        h.record_snapshot(&occ, 0);
        occ.occupied = 0;
        let s = h.record_snapshot(&occ, 60_000).unwrap();
        assert_eq!((s.mean, s.count), (0.5, 2));

        occ.capacity = 0;
        assert!(h.record_snapshot(&occ, 0).is_none());
    }

    #[test]
    fn prediction_formula() {
        let mut s = ParkingState::with_blocks([("b".to_string(), 10), ("z".to_string(), 0)]);
        let mut h = OccupancyHistory::new();
        assert_eq!(predict_free_probability(&h, &s, "b", 0, 0.5), Ok(1.0));

        let occ = BlockOccupancy {
            block_id: "b".into(),
            occupied: 8,
            capacity: 10,
            last_update: 0,
        };
        h.record_snapshot(&occ, 0);
        for i in 0..4 {
            s.apply_event(&ev("b", EventKind::CheckIn, i)).unwrap();
        }
        let p = predict_free_probability(&h, &s, "b", 0, 0.5).unwrap();
        assert!((p - 0.4).abs() < 1e-12);
        assert_eq!(
            predict_free_probability(&h, &s, "z", 0, 0.5),
            Err(ParkingError::ZeroCapacity("z".into()))
        );
        assert_eq!(
            predict_free_probability(&h, &s, "q", 0, 0.5),
            Err(ParkingError::UnknownBlock("q".into()))
        );
    }

    fn line_city() -> CityGraph {
        let mut b = CityBuilder::new()
            .node("n0", 0.0, 0.0)
            .node("n1", 200.0, 0.0)
            .node("n2", 400.0, 0.0)
            .edge("e1", "n0", "n1", "X", false)
            .edge("e2", "n1", "n2", "X", false);
        for (id, edge) in [("b1", "e1"), ("b2", "e2")] {
            b = b.block(BlockDoc {
                id: id.into(),
                edge: edge.into(),
                usable_length: 50.0,
                prohibited: vec![],
                garages: vec![],
                metered: true,
            });
        }
        b.build().unwrap()
    }

    #[test]
    fn ranking_prefers_nearer_block_on_equal_probability() {
        let g = line_city();
        let s = ParkingState::for_graph(&g);
        let h = OccupancyHistory::new();
        // midpoints at x=100 and x=300
        let r = rank_blocks(&g, &h, &s, Coordinate::new(0.0, 0.0), 1000.0, 0, RankingParams::default());
        assert_eq!(r.0.len(), 2);
        assert_eq!(r.0[0].block_id, "b1");
        assert_eq!(r.0[0].walk_distance, 100.0);
        assert_eq!(r.0[1].walk_distance, 300.0);
        let single = rank_blocks(&g, &h, &s, Coordinate::new(100.0, 0.0), 10.0, 0, RankingParams::default());
        assert_eq!(single.0.len(), 1);
        assert_eq!(single.0[0].block_id, "b1");
        assert_eq!(single.0[0].score, 1.0);
    }
}
