use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Dram,
    Sram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessKind {
    Feature,
    Rit,
    Weights,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Unclassified,
    Streaming,
    Random,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Dram => "dram",
            Level::Sram => "sram",
        }
    }
}

impl AccessKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AccessKind::Feature => "feature",
            AccessKind::Rit => "rit",
            AccessKind::Weights => "weights",
        }
    }
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Unclassified => "",
            Tag::Streaming => "streaming",
            Tag::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessEvent {
    pub level: Level,
    pub kind: AccessKind,
    pub address: u64,
    pub size: u32,
    pub tag: Tag,
}

impl AccessEvent {
    pub fn new(level: Level, kind: AccessKind, address: u64, size: u32) -> Self {
        AccessEvent { level, kind, address, size, tag: Tag::Unclassified }
    }

    pub fn end(&self) -> u64 {
        self.address + self.size as u64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccessTrace {
    pub events: Vec<AccessEvent>,
}

impl AccessTrace {
    pub fn push(&mut self, e: AccessEvent) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn select(&self, level: Level, kind: AccessKind) -> Vec<AccessEvent> {
        self.events.iter().filter(|e| e.level == level && e.kind == kind).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seq,level,kind,address,size,tag\n");
        for (i, e) in self.events.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{},{}", e.level.as_str(), e.kind.as_str(), e.address, e.size, e.tag.as_str());
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStats {
    pub events: usize,
    /// Streaming share of events after the first (1.0 for fewer than two).
    pub streaming_fraction: f64,
    pub bytes_total: u64,
    pub unique_bytes: u64,
    pub redundancy_ratio: f64,
    pub streaming_bytes: u64,
    pub random_bytes: u64,
}

/// Streaming iff the event starts where the previous one ended, or inside
/// the burst window holding the previous event's last byte. The first
/// event counts as streaming.
pub fn classify_stream(events: &[AccessEvent], burst_bytes: u64) -> Vec<Tag> {
    let burst = burst_bytes.max(1);
    let mut tags = Vec::with_capacity(events.len());
    let mut prev: Option<&AccessEvent> = None;
    for e in events {
        let streaming = prev.is_none_or(|p| {
            let last = p.end().saturating_sub(1).max(p.address);
            e.address == p.end() || e.address / burst == last / burst
        });
        tags.push(if streaming { Tag::Streaming } else { Tag::Random });
        prev = Some(e);
    }
    tags
}

fn union_bytes(events: &[AccessEvent]) -> u64 {
    let mut iv: Vec<(u64, u64)> = events.iter().filter(|e| e.size > 0).map(|e| (e.address, e.end())).collect();
    iv.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(u64, u64)> = None;
    for (a, b) in iv {
        match cur {
            Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    total + cur.map_or(0, |(s, e)| e - s)
}

/// Classifies `events` as one access stream.
pub fn classify_trace(events: &[AccessEvent], burst_bytes: u64) -> TraceStats {
    let tags = classify_stream(events, burst_bytes);
    let bytes_total: u64 = events.iter().map(|e| e.size as u64).sum();
    let unique_bytes = union_bytes(events);
    let mut streaming_bytes = 0;
    for (e, t) in events.iter().zip(&tags) {
        if *t == Tag::Streaming {
            streaming_bytes += e.size as u64;
        }
    }
    let later = tags.len().saturating_sub(1);
    let streaming_later = tags.iter().skip(1).filter(|&&t| t == Tag::Streaming).count();
    TraceStats {
        events: events.len(),
        streaming_fraction: if later == 0 { 1.0 } else { streaming_later as f64 / later as f64 },
        bytes_total,
        unique_bytes,
        redundancy_ratio: if unique_bytes == 0 { 1.0 } else { bytes_total as f64 / unique_bytes as f64 },
        streaming_bytes,
        random_bytes: bytes_total - streaming_bytes,
    }
}

/// Tags every DRAM event, treating each access kind as its own stream.
/// SRAM events are left unclassified.
pub fn tag_trace(trace: &mut AccessTrace, burst_bytes: u64) {
    let mut streams: BTreeMap<AccessKind, Vec<usize>> = BTreeMap::new();
    for (i, e) in trace.events.iter().enumerate() {
        if e.level == Level::Dram {
            streams.entry(e.kind).or_default().push(i);
        }
    }
    for idx in streams.values() {
        let evs: Vec<AccessEvent> = idx.iter().map(|&i| trace.events[i]).collect();
        for (&i, t) in idx.iter().zip(classify_stream(&evs, burst_bytes)) {
            trace.events[i].tag = t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(address: u64, size: u32) -> AccessEvent {
        AccessEvent::new(Level::Dram, AccessKind::Feature, address, size)
    }

    #[test]
    fn sequential_trace_is_fully_streaming() {
        let evs: Vec<_> = (0..100).map(|i| ev(i * 48, 48)).collect();
        let s = classify_trace(&evs, 64);
        assert_eq!(s.streaming_fraction, 1.0);
        assert_eq!(s.redundancy_ratio, 1.0);
        assert_eq!(s.unique_bytes, 4800);
    }

    #[test]
    fn alternating_far_addresses_never_stream() {
        let evs: Vec<_> = (0..50).map(|i| ev(if i % 2 == 0 { 0 } else { 1 << 20 }, 64)).collect();
        let s = classify_trace(&evs, 64);
        assert_eq!(s.streaming_fraction, 0.0);
        assert_eq!(s.unique_bytes, 128);
        assert_eq!(s.redundancy_ratio, 50.0 * 64.0 / 128.0);
        assert_eq!(classify_stream(&evs, 64)[0], Tag::Streaming);
    }

    #[test]
    fn same_burst_window_counts_as_streaming() {
        let evs = vec![ev(0, 8), ev(40, 8), ev(70, 8), ev(200, 8)];
        assert_eq!(classify_stream(&evs, 64), vec![Tag::Streaming, Tag::Streaming, Tag::Random, Tag::Random]);
        let empty = classify_trace(&[], 64);
        assert_eq!((empty.streaming_fraction, empty.bytes_total), (1.0, 0));
    }

    #[test]
    fn kinds_are_separate_streams() {
        let mut t = AccessTrace::default();
        t.push(ev(0, 64));
        t.push(AccessEvent::new(Level::Dram, AccessKind::Rit, 1 << 30, 48));
        t.push(ev(64, 64));
        t.push(AccessEvent::new(Level::Dram, AccessKind::Rit, (1 << 30) + 48, 48));
        t.push(AccessEvent::new(Level::Sram, AccessKind::Feature, 0, 64));
        tag_trace(&mut t, 64);
        let tags: Vec<Tag> = t.events.iter().map(|e| e.tag).collect();
        assert_eq!(tags, vec![Tag::Streaming, Tag::Streaming, Tag::Streaming, Tag::Streaming, Tag::Unclassified]);
        let csv = t.to_csv();
        assert!(csv.starts_with("seq,level,kind,address,size,tag\n0,dram,feature,0,64,streaming\n"));
    }
}
