//! Shared test support: an independent brute-force reimplementation of the
//! anchored sweep used to cross-check the production selectors, plus random
//! fixture builders.
//!
//! The oracle deliberately recomputes every accumulation A(i, j) from
//! scratch with a fresh inner loop — no incremental reuse — so it shares no
//! failure mode with the O(n) production sweep. It was written and frozen
//! before the production selector.

#![allow(dead_code)]

use std::collections::BTreeMap;

use kafr::detections::{Point, Role, ToolTrack};

/// Anchored (or consecutive-reference) sweep, brute force: for each
/// candidate j the accumulation since the anchor is rebuilt term by term.
pub fn brute_sweep(
    domain: &[u64],
    contrib: &dyn Fn(u64, u64) -> f64,
    budget: f64,
    consecutive: bool,
) -> Vec<u64> {
    assert!(!domain.is_empty());
    let mut selected = vec![domain[0]];
    let mut anchor_pos = 0usize;
    for j_pos in 1..domain.len() {
        let mut acc = 0.0;
        for k_pos in anchor_pos + 1..=j_pos {
            let reference = if consecutive { domain[k_pos - 1] } else { domain[anchor_pos] };
            acc += contrib(reference, domain[k_pos]);
        }
        if acc >= budget {
            selected.push(domain[j_pos]);
            anchor_pos = j_pos;
        }
    }
    selected
}

fn role_tracks<'a>(tracks: &'a [ToolTrack], roles: &[Role]) -> Vec<&'a ToolTrack> {
    roles
        .iter()
        .map(|r| tracks.iter().find(|t| t.role == *r).expect("role present"))
        .collect()
}

/// Brute-force displacement selector: dense frame domain over the requested
/// roles, contribution = summed centroid distances.
pub fn brute_adaptive1(
    tracks: &[ToolTrack],
    roles: &[Role],
    budget: f64,
    consecutive: bool,
) -> Vec<u64> {
    let picked = role_tracks(tracks, roles);
    let lo = picked.iter().filter_map(|t| t.first_frame()).min().unwrap();
    let hi = picked.iter().filter_map(|t| t.last_frame()).max().unwrap();
    let domain: Vec<u64> = (lo..=hi).collect();
    let contrib = |r: u64, j: u64| {
        let mut sum = 0.0;
        for track in &picked {
            if let (Some(a), Some(b)) = (track.samples.get(&r), track.samples.get(&j)) {
                let dx = a.x - b.x;
                let dy = a.y - b.y;
                sum += (dx * dx + dy * dy).sqrt();
            }
        }
        sum
    };
    brute_sweep(&domain, &contrib, budget, consecutive)
}

/// Independent speed series: displacement over the true frame gap, with the
/// same long-gap restart rule as production.
pub fn brute_speeds(track: &ToolTrack, max_gap: u64) -> BTreeMap<u64, f64> {
    let samples: Vec<(u64, Point)> = track.samples.iter().map(|(&f, &p)| (f, p)).collect();
    let mut speeds = BTreeMap::new();
    for pair in samples.windows(2) {
        let (f0, p0) = pair[0];
        let (f1, p1) = pair[1];
        let gap = f1 - f0;
        if gap < max_gap {
            let dx = p1.x - p0.x;
            let dy = p1.y - p0.y;
            speeds.insert(f1, (dx * dx + dy * dy).sqrt() / gap as f64);
        }
    }
    speeds
}

/// Brute-force velocity-variation selector. Domain spans the first through
/// last speed-bearing frames; a frame with no speed contributes zero, an
/// anchor with no speed counts as zero speed. A track set with no speeds at
/// all degenerates to the first sample frame.
pub fn brute_adaptive2(
    tracks: &[ToolTrack],
    roles: &[Role],
    budget: f64,
    max_gap: u64,
    consecutive: bool,
) -> Vec<u64> {
    let picked = role_tracks(tracks, roles);
    let speed_maps: Vec<BTreeMap<u64, f64>> =
        picked.iter().map(|t| brute_speeds(t, max_gap)).collect();
    let lo = speed_maps.iter().filter_map(|m| m.keys().next()).min().copied();
    let hi = speed_maps.iter().filter_map(|m| m.keys().next_back()).max().copied();
    let (Some(lo), Some(hi)) = (lo, hi) else {
        let first = picked.iter().filter_map(|t| t.first_frame()).min().unwrap();
        return vec![first];
    };
    let domain: Vec<u64> = (lo..=hi).collect();
    let contrib = |r: u64, j: u64| {
        let mut sum = 0.0;
        for speeds in &speed_maps {
            if let Some(&vj) = speeds.get(&j) {
                let vr = speeds.get(&r).copied().unwrap_or(0.0);
                sum += (vr - vj).abs();
            }
        }
        sum
    };
    brute_sweep(&domain, &contrib, budget, consecutive)
}

/// MINSTD (Lehmer) generator for test-case randomization. Constants match
/// the classic minimal standard generator, so sequences are reproducible
/// anywhere.
pub struct Minstd(u64);

impl Minstd {
    const MODULUS: u64 = 2_147_483_647;
    const MULTIPLIER: u64 = 48_271;

    pub fn new(seed: u64) -> Self {
        Minstd(seed % (Self::MODULUS - 1) + 1)
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0 = self.0 * Self::MULTIPLIER % Self::MODULUS;
        self.0 as u32
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u32() - 1) as f64 / (Self::MODULUS - 1) as f64
    }

    /// Uniform integer in [lo, hi].
    pub fn next_range(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as u64;
        lo + (self.next_u32() as u64 % span) as i64
    }
}

/// Random track on an integer grid: occasional gaps, integer jumps.
pub fn random_track(rng: &mut Minstd, video: &str, role: Role, frames: u64) -> ToolTrack {
    let mut track = ToolTrack::new(video, role);
    let mut x = rng.next_range(0, 500) as f64;
    let mut y = rng.next_range(0, 500) as f64;
    for frame in 0..frames {
        // ~15% dropout, never the first frame so the track is non-empty.
        if frame > 0 && rng.next_range(0, 99) < 15 {
            continue;
        }
        x += rng.next_range(-12, 12) as f64;
        y += rng.next_range(-12, 12) as f64;
        track.samples.insert(frame, Point::new(x, y));
    }
    track
}
