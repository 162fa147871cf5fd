//! Detection (MODA, MODP, precision, recall) and tracking (MOTA, MOTP, IDF1,
//! MT, ML) metrics on ground-plane center points.
//!
//! MODP is the mean of `1 - d/r` over true positives. A pair counts as a
//! match when its distance is `<= r`.

use crate::assignment::{self, CostMatrix};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

pub const DETECTION_RADIUS: f64 = 0.5;
pub const TRACKING_RADIUS: f64 = 1.0;
pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no ground-truth points: metric is undefined")]
    NoGroundTruth,
    #[error("no frames to evaluate")]
    NoFrames,
    #[error("matching radius must be > 0, got {0}")]
    InvalidRadius(f64),
    #[error("frame {frame}: {side} point is missing an id")]
    MissingId { frame: u64, side: &'static str },
    #[error("frame {frame}: duplicate {side} id {id}")]
    DuplicateId { frame: u64, side: &'static str, id: u64 },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtPoint {
    pub id: Option<u64>,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypPoint {
    pub id: Option<u64>,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAnnotations {
    pub frame: u64,
    pub gt: Vec<GtPoint>,
    pub hyp: Vec<HypPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    /// Index into the frame's gt points.
    pub gt: usize,
    /// Index into the frame's hypothesis points.
    pub hyp: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Sorted by gt index.
    pub pairs: Vec<MatchPair>,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
}

fn dist(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - bx).hypot(ay - by)
}

/// Matches one frame. `carry` maps gt id to the hypothesis id it was last
/// matched with; such pairs are kept first if they are still within `r`,
/// and a match to any other id counts as an id switch.
pub fn match_frame(gt: &[GtPoint], hyp: &[HypPoint], r: f64, carry: Option<&HashMap<u64, u64>>) -> MatchResult {
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];

    if let Some(carry) = carry {
        for (gi, g) in gt.iter().enumerate() {
            let Some(want) = g.id.and_then(|id| carry.get(&id)) else { continue };
            let Some(hi) = hyp.iter().position(|h| h.id == Some(*want)) else { continue };
            let d = dist(g.x, g.y, hyp[hi].x, hyp[hi].y);
            if d <= r && !hyp_used[hi] {
                pairs.push(MatchPair { gt: gi, hyp: hi, distance: d });
                gt_used[gi] = true;
                hyp_used[hi] = true;
            }
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|g| !gt_used[*g]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|h| !hyp_used[*h]).collect();
    let costs = CostMatrix::from_fn(free_gt.len(), free_hyp.len(), |a, b| {
        let (g, h) = (&gt[free_gt[a]], &hyp[free_hyp[b]]);
        let d = dist(g.x, g.y, h.x, h.y);
        (d <= r).then_some(d)
    });
    for (a, b) in assignment::solve(&costs) {
        let distance = costs.get(a, b).expect("solver returns allowed pairs");
        pairs.push(MatchPair { gt: free_gt[a], hyp: free_hyp[b], distance });
    }
    pairs.sort_by_key(|p| p.gt);

    let id_switches = match carry {
        Some(carry) => pairs
            .iter()
            .filter(|p| match (gt[p.gt].id.and_then(|id| carry.get(&id)), hyp[p.hyp].id) {
                (Some(prev), Some(now)) => *prev != now,
                _ => false,
            })
            .count(),
        None => 0,
    };
    MatchResult {
        false_positives: hyp.len() - pairs.len(),
        false_negatives: gt.len() - pairs.len(),
        pairs,
        id_switches,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt: usize,
    pub radius: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub mota: f64,
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub mt: f64,
    pub ml: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
    pub gt: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub gt_tracks: usize,
    pub hyp_tracks: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub radius: f64,
    pub frames: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 { num / den } else { 0.0 }
}

fn check_radius(r: f64) -> Result<(), MetricsError> {
    if r > 0.0 && r.is_finite() { Ok(()) } else { Err(MetricsError::InvalidRadius(r)) }
}

pub fn detection_metrics(frames: &[FrameAnnotations], r: f64) -> Result<DetectionReport, MetricsError> {
    check_radius(r)?;
    if frames.is_empty() {
        return Err(MetricsError::NoFrames);
    }
    let (mut tp, mut fp, mut fn_, mut gt) = (0, 0, 0, 0);
    let mut closeness = 0.0;
    for f in frames {
        let m = match_frame(&f.gt, &f.hyp, r, None);
        tp += m.pairs.len();
        fp += m.false_positives;
        fn_ += m.false_negatives;
        gt += f.gt.len();
        closeness += m.pairs.iter().map(|p| 1.0 - p.distance / r).sum::<f64>();
    }
    if gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    Ok(DetectionReport {
        moda: (gt as f64 - (fn_ + fp) as f64) / gt as f64,
        modp: ratio(closeness, tp as f64),
        precision: ratio(tp as f64, (tp + fp) as f64),
        recall: tp as f64 / gt as f64,
        tp,
        fp,
        fn_,
        gt,
        radius: r,
        frames: frames.len(),
    })
}

fn check_ids(f: &FrameAnnotations) -> Result<(), MetricsError> {
    let mut seen = BTreeSet::new();
    for g in &f.gt {
        let id = g.id.ok_or(MetricsError::MissingId { frame: f.frame, side: "gt" })?;
        if !seen.insert(id) {
            return Err(MetricsError::DuplicateId { frame: f.frame, side: "gt", id });
        }
    }
    seen.clear();
    for h in &f.hyp {
        let id = h.id.ok_or(MetricsError::MissingId { frame: f.frame, side: "hypothesis" })?;
        if !seen.insert(id) {
            return Err(MetricsError::DuplicateId { frame: f.frame, side: "hypothesis", id });
        }
    }
    Ok(())
}

/// Identity-level counts from one global one-to-one matching of gt and
/// hypothesis trajectories maximizing the number of co-located frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityMatch {
    /// `(gt id, hyp id)` sorted by gt id.
    pub pairs: Vec<(u64, u64)>,
    pub idtp: usize,
    pub gt_points: usize,
    pub hyp_points: usize,
}

/// `idtp[g][h]` = frames where trajectories g and h are both present within `r`.
pub fn identity_overlap(frames: &[FrameAnnotations], r: f64) -> (Vec<u64>, Vec<u64>, Vec<Vec<usize>>) {
    let gt_ids: Vec<u64> = frames.iter().flat_map(|f| f.gt.iter().filter_map(|g| g.id)).collect::<BTreeSet<_>>().into_iter().collect();
    let hyp_ids: Vec<u64> = frames.iter().flat_map(|f| f.hyp.iter().filter_map(|h| h.id)).collect::<BTreeSet<_>>().into_iter().collect();
    let gi: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let hi: HashMap<u64, usize> = hyp_ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    let mut overlap = vec![vec![0usize; hyp_ids.len()]; gt_ids.len()];
    for f in frames {
        for g in &f.gt {
            for h in &f.hyp {
                if let (Some(a), Some(b)) = (g.id, h.id) {
                    if dist(g.x, g.y, h.x, h.y) <= r {
                        overlap[gi[&a]][hi[&b]] += 1;
                    }
                }
            }
        }
    }
    (gt_ids, hyp_ids, overlap)
}

pub fn identity_match(frames: &[FrameAnnotations], r: f64) -> IdentityMatch {
    let (gt_ids, hyp_ids, overlap) = identity_overlap(frames, r);
    let costs = CostMatrix::from_fn(gt_ids.len(), hyp_ids.len(), |g, h| Some(-(overlap[g][h] as f64)));
    let mut pairs = Vec::new();
    let mut idtp = 0;
    for (g, h) in assignment::solve(&costs) {
        if overlap[g][h] > 0 {
            pairs.push((gt_ids[g], hyp_ids[h]));
            idtp += overlap[g][h];
        }
    }
    IdentityMatch {
        pairs,
        idtp,
        gt_points: frames.iter().map(|f| f.gt.len()).sum(),
        hyp_points: frames.iter().map(|f| f.hyp.len()).sum(),
    }
}

pub fn tracking_metrics(frames: &[FrameAnnotations], r: f64) -> Result<TrackingReport, MetricsError> {
    check_radius(r)?;
    if frames.is_empty() {
        return Err(MetricsError::NoFrames);
    }
    for f in frames {
        check_ids(f)?;
    }
    let mut ordered: Vec<&FrameAnnotations> = frames.iter().collect();
    ordered.sort_by_key(|f| f.frame);

    let (mut tp, mut fp, mut fn_, mut idsw, mut gt) = (0, 0, 0, 0, 0);
    let mut dist_sum = 0.0;
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    // gt id -> (frames present, frames matched)
    let mut coverage: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for f in &ordered {
        let m = match_frame(&f.gt, &f.hyp, r, Some(&last_match));
        tp += m.pairs.len();
        fp += m.false_positives;
        fn_ += m.false_negatives;
        idsw += m.id_switches;
        gt += f.gt.len();
        dist_sum += m.pairs.iter().map(|p| p.distance).sum::<f64>();
        for g in &f.gt {
            coverage.entry(g.id.expect("checked")).or_default().0 += 1;
        }
        for p in &m.pairs {
            let gid = f.gt[p.gt].id.expect("checked");
            coverage.get_mut(&gid).expect("inserted above").1 += 1;
            last_match.insert(gid, f.hyp[p.hyp].id.expect("checked"));
        }
    }
    if gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }

    let ident = identity_match(frames, r);
    let idfp = ident.hyp_points - ident.idtp;
    let idfn = ident.gt_points - ident.idtp;
    let gt_tracks = coverage.len();
    let mostly_tracked = coverage.values().filter(|(n, m)| *m as f64 >= MOSTLY_TRACKED * *n as f64).count();
    let mostly_lost = coverage.values().filter(|(n, m)| *m as f64 <= MOSTLY_LOST * *n as f64).count();
    let hyp_tracks = frames.iter().flat_map(|f| f.hyp.iter().filter_map(|h| h.id)).collect::<BTreeSet<_>>().len();

    Ok(TrackingReport {
        mota: (gt as f64 - (fn_ + fp + idsw) as f64) / gt as f64,
        motp: ratio(dist_sum, tp as f64),
        idf1: ratio(2.0 * ident.idtp as f64, (ident.gt_points + ident.hyp_points) as f64),
        idp: ratio(ident.idtp as f64, ident.hyp_points as f64),
        idr: ratio(ident.idtp as f64, ident.gt_points as f64),
        mt: mostly_tracked as f64 / gt_tracks as f64,
        ml: mostly_lost as f64 / gt_tracks as f64,
        precision: ratio(tp as f64, (tp + fp) as f64),
        recall: tp as f64 / gt as f64,
        tp,
        fp,
        fn_,
        idsw,
        gt,
        idtp: ident.idtp,
        idfp,
        idfn,
        gt_tracks,
        hyp_tracks,
        mostly_tracked,
        mostly_lost,
        radius: r,
        frames: frames.len(),
    })
}

/// Row of a ground-truth CSV `frame,id,x,y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub frame: u64,
    pub id: u64,
    pub x: f64,
    pub y: f64,
}

/// Row of a hypothesis CSV `frame,id,x,y,score`. The id may be empty for
/// detection-only output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypRecord {
    pub frame: u64,
    pub id: Option<u64>,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

fn read_csv<T: serde::de::DeserializeOwned>(r: impl Read) -> Result<Vec<T>, MetricsError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rd.deserialize().map(|row| row.map_err(MetricsError::from)).collect()
}

fn write_csv<T: Serialize>(w: impl Write, header: &[&str], rows: &[T]) -> Result<(), MetricsError> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(header)?;
    }
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_ground_truth_csv(r: impl Read) -> Result<Vec<GtRecord>, MetricsError> {
    read_csv(r)
}

pub fn write_ground_truth_csv(w: impl Write, rows: &[GtRecord]) -> Result<(), MetricsError> {
    write_csv(w, &["frame", "id", "x", "y"], rows)
}

pub fn read_hypotheses_csv(r: impl Read) -> Result<Vec<HypRecord>, MetricsError> {
    read_csv(r)
}

pub fn write_hypotheses_csv(w: impl Write, rows: &[HypRecord]) -> Result<(), MetricsError> {
    write_csv(w, &["frame", "id", "x", "y", "score"], rows)
}

/// Groups rows by frame. Every frame that appears on either side is present,
/// in ascending order; points keep their file order.
pub fn group_frames(gt: &[GtRecord], hyp: &[HypRecord]) -> Vec<FrameAnnotations> {
    let mut frames: BTreeMap<u64, FrameAnnotations> = BTreeMap::new();
    for g in gt {
        frames
            .entry(g.frame)
            .or_insert_with(|| FrameAnnotations { frame: g.frame, ..Default::default() })
            .gt
            .push(GtPoint { id: Some(g.id), x: g.x, y: g.y });
    }
    for h in hyp {
        frames
            .entry(h.frame)
            .or_insert_with(|| FrameAnnotations { frame: h.frame, ..Default::default() })
            .hyp
            .push(HypPoint { id: h.id, x: h.x, y: h.y, score: h.score });
    }
    frames.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(id: u64, x: f64, y: f64) -> GtPoint {
        GtPoint { id: Some(id), x, y }
    }

    fn h(id: u64, x: f64, y: f64) -> HypPoint {
        HypPoint { id: Some(id), x, y, score: 1.0 }
    }

    /// Exhaustive oracle: max cardinality first, then min total distance.
    fn brute_force(gt: &[GtPoint], hyp: &[HypPoint], r: f64) -> (usize, f64, Vec<(usize, usize)>) {
        fn rec(k: usize, gt: &[GtPoint], hyp: &[HypPoint], r: f64, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: &mut (usize, f64, Vec<(usize, usize)>)) {
            if k == gt.len() {
                let total: f64 = cur.iter().map(|&(a, b)| dist(gt[a].x, gt[a].y, hyp[b].x, hyp[b].y)).sum();
                if cur.len() > best.0 || (cur.len() == best.0 && total < best.1) {
                    *best = (cur.len(), total, cur.clone());
                }
                return;
            }
            rec(k + 1, gt, hyp, r, used, cur, best);
            for b in 0..hyp.len() {
                if !used[b] && dist(gt[k].x, gt[k].y, hyp[b].x, hyp[b].y) <= r {
                    used[b] = true;
                    cur.push((k, b));
                    rec(k + 1, gt, hyp, r, used, cur, best);
                    cur.pop();
                    used[b] = false;
                }
            }
        }
        let mut best = (0, f64::INFINITY, Vec::new());
        rec(0, gt, hyp, r, &mut vec![false; hyp.len()], &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn identical_sets_all_match() {
        let gt = [g(1, 0.0, 0.0), g(2, 3.0, 1.0)];
        let hyp = [h(7, 0.0, 0.0), h(8, 3.0, 1.0)];
        let m = match_frame(&gt, &hyp, 0.5, None);
        assert_eq!((m.pairs.len(), m.false_positives, m.false_negatives), (2, 0, 0));
    }

    #[test]
    fn radius_is_inclusive() {
        let m = match_frame(&[g(1, 0.0, 0.0)], &[h(1, 1.01, 0.0)], 1.0, None);
        assert_eq!((m.false_negatives, m.false_positives), (1, 1));
        let m = match_frame(&[g(1, 0.0, 0.0)], &[h(1, 0.5, 0.0)], 0.5, None);
        assert_eq!(m.pairs.len(), 1);
    }

    #[test]
    fn optimal_beats_greedy() {
        // greedy takes (g0,h0) at 0.1 and strands g1; optimal pairs both
        let gt = [g(1, 0.0, 0.0), g(2, 0.9, 0.0)];
        let hyp = [h(1, 0.1, 0.0), h(2, -0.8, 0.0)];
        let m = match_frame(&gt, &hyp, 1.0, None);
        assert_eq!(m.pairs.len(), 2);
        assert_eq!((m.pairs[0].hyp, m.pairs[1].hyp), (1, 0));
        assert_eq!(brute_force(&gt, &hyp, 1.0).0, 2);
    }

    #[test]
    fn carry_over_keeps_previous_pair() {
        // hyp 5 is farther than hyp 6 but still within r, so continuity wins
        let mut carry = HashMap::new();
        carry.insert(1, 5);
        let m = match_frame(&[g(1, 0.0, 0.0)], &[h(5, 0.6, 0.0), h(6, 0.1, 0.0)], 1.0, Some(&carry));
        assert_eq!(m.pairs[0].hyp, 0);
        assert_eq!(m.id_switches, 0);
        let m = match_frame(&[g(1, 0.0, 0.0)], &[h(5, 1.6, 0.0), h(6, 0.1, 0.0)], 1.0, Some(&carry));
        assert_eq!(m.pairs[0].hyp, 1);
        assert_eq!(m.id_switches, 1);
    }

    fn det_frames(gt_n: usize, matched: usize, fp: usize) -> Vec<FrameAnnotations> {
        let gt = (0..gt_n).map(|k| g(k as u64, 10.0 * k as f64, 0.0)).collect();
        let mut hyp: Vec<HypPoint> = (0..matched).map(|k| h(k as u64, 10.0 * k as f64 + 0.1, 0.0)).collect();
        hyp.extend((0..fp).map(|k| h(100 + k as u64, -50.0 - 10.0 * k as f64, 5.0)));
        vec![FrameAnnotations { frame: 0, gt, hyp }]
    }

    #[test]
    fn detection_hand_cases() {
        let perfect: Vec<FrameAnnotations> = det_frames(4, 0, 0)
            .into_iter()
            .map(|mut f| {
                f.hyp = f.gt.iter().map(|p| h(p.id.unwrap(), p.x, p.y)).collect();
                f
            })
            .collect();
        let rep = detection_metrics(&perfect, DETECTION_RADIUS).unwrap();
        assert_eq!((rep.moda, rep.modp), (1.0, 1.0));

        let rep = detection_metrics(&det_frames(10, 9, 0), DETECTION_RADIUS).unwrap();
        assert_eq!((rep.recall, rep.precision), (0.9, 1.0));
        assert_eq!(rep.moda, 0.9);
        let rep = detection_metrics(&det_frames(10, 9, 2), DETECTION_RADIUS).unwrap();
        assert_eq!(rep.moda, 0.7);
        assert_eq!((rep.tp, rep.fp, rep.fn_, rep.gt), (9, 2, 1, 10));
    }

    #[test]
    fn no_ground_truth_errors() {
        let frames = vec![FrameAnnotations { frame: 0, gt: vec![], hyp: vec![h(1, 0.0, 0.0)] }];
        assert!(matches!(detection_metrics(&frames, 0.5), Err(MetricsError::NoGroundTruth)));
        assert!(matches!(tracking_metrics(&frames, 1.0), Err(MetricsError::NoGroundTruth)));
        assert!(matches!(detection_metrics(&[], 0.5), Err(MetricsError::NoFrames)));
        assert!(matches!(detection_metrics(&frames, 0.0), Err(MetricsError::InvalidRadius(_))));
    }

    fn switch_sequence() -> Vec<FrameAnnotations> {
        (0..10u64)
            .map(|f| {
                let x = f as f64 * 0.3;
                FrameAnnotations { frame: f, gt: vec![g(1, x, 0.0)], hyp: vec![h(if f < 5 { 10 } else { 20 }, x, 0.05)] }
            })
            .collect()
    }

    #[test]
    fn tracking_hand_cases() {
        let rep = tracking_metrics(&switch_sequence(), TRACKING_RADIUS).unwrap();
        assert_eq!(rep.idsw, 1);
        assert_eq!(rep.mota, 0.9);
        assert_eq!(rep.idf1, 0.5);

        let perfect: Vec<FrameAnnotations> = switch_sequence()
            .into_iter()
            .map(|mut f| {
                f.hyp[0].id = Some(10);
                f
            })
            .collect();
        let rep = tracking_metrics(&perfect, TRACKING_RADIUS).unwrap();
        assert_eq!((rep.mota, rep.idf1, rep.mt, rep.ml), (1.0, 1.0, 1.0, 0.0));

        let empty: Vec<FrameAnnotations> = perfect.into_iter().map(|f| FrameAnnotations { hyp: vec![], ..f }).collect();
        let rep = tracking_metrics(&empty, TRACKING_RADIUS).unwrap();
        assert_eq!((rep.mota, rep.idf1, rep.ml, rep.motp), (0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn tracking_requires_unique_ids() {
        let frames = vec![FrameAnnotations { frame: 0, gt: vec![g(1, 0.0, 0.0), g(1, 1.0, 0.0)], hyp: vec![] }];
        assert!(matches!(tracking_metrics(&frames, 1.0), Err(MetricsError::DuplicateId { .. })));
        let frames = vec![FrameAnnotations { frame: 0, gt: vec![g(1, 0.0, 0.0)], hyp: vec![HypPoint { id: None, x: 0.0, y: 0.0, score: 1.0 }] }];
        assert!(matches!(tracking_metrics(&frames, 1.0), Err(MetricsError::MissingId { .. })));
    }

    #[test]
    fn report_json_key_order() {
        let rep = detection_metrics(&det_frames(3, 2, 1), DETECTION_RADIUS).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.starts_with("{\"moda\":"));
        assert!(json.contains("\"fn\":1"));
    }

    #[test]
    fn csv_round_trip_and_grouping() {
        let gt = vec![GtRecord { frame: 0, id: 1, x: 0.1, y: 0.2 }, GtRecord { frame: 2, id: 1, x: 1.0 / 3.0, y: 0.2 }];
        let hyp = vec![HypRecord { frame: 1, id: None, x: 0.0, y: 0.0, score: 0.5 }];
        let mut buf = Vec::new();
        write_ground_truth_csv(&mut buf, &gt).unwrap();
        assert_eq!(read_ground_truth_csv(buf.as_slice()).unwrap(), gt);
        let mut buf = Vec::new();
        write_hypotheses_csv(&mut buf, &hyp).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("frame,id,x,y,score\n1,,"));
        assert_eq!(read_hypotheses_csv(buf.as_slice()).unwrap(), hyp);
        let frames = group_frames(&gt, &hyp);
        assert_eq!(frames.iter().map(|f| f.frame).collect::<Vec<_>>(), vec![0, 1, 2]);
        let err = read_ground_truth_csv("frame,id,x,y\n0,1,0.5,zz\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((0.0..3.0f64, 0.0..3.0f64), 0..8)
    }

    fn tracks() -> impl Strategy<Value = Vec<FrameAnnotations>> {
        // (frame, gt id or hyp id, x, y) pools for up to 4 ids each over 6 frames
        (
            proptest::collection::vec((0..6u64, 0..4u64, 0.0..4.0f64, 0.0..4.0f64), 1..20),
            proptest::collection::vec((0..6u64, 0..4u64, 0.0..4.0f64, 0.0..4.0f64), 0..20),
        )
            .prop_map(|(gs, hs)| {
                let mut gt: Vec<GtRecord> = gs.into_iter().map(|(frame, id, x, y)| GtRecord { frame, id, x, y }).collect();
                let mut hyp: Vec<HypRecord> = hs.into_iter().map(|(frame, id, x, y)| HypRecord { frame, id: Some(id), x, y, score: 1.0 }).collect();
                gt.sort_by_key(|r| (r.frame, r.id));
                gt.dedup_by_key(|r| (r.frame, r.id));
                hyp.sort_by_key(|r| (r.frame, r.id));
                hyp.dedup_by_key(|r| (r.frame, r.id));
                group_frames(&gt, &hyp)
            })
    }

    proptest! {
        #[test]
        fn match_frame_is_optimal(gs in points(), hs in points(), r in 0.3..2.0f64) {
            let gt: Vec<GtPoint> = gs.iter().enumerate().map(|(k, p)| g(k as u64, p.0, p.1)).collect();
            let hyp: Vec<HypPoint> = hs.iter().enumerate().map(|(k, p)| h(k as u64, p.0, p.1)).collect();
            let m = match_frame(&gt, &hyp, r, None);
            let (n, total, _) = brute_force(&gt, &hyp, r);
            prop_assert_eq!(m.pairs.len(), n);
            let got: f64 = m.pairs.iter().map(|p| p.distance).sum();
            let want = if n == 0 { 0.0 } else { total };
            prop_assert!((got - want).abs() < 1e-9);
            prop_assert!(m.pairs.iter().all(|p| p.distance <= r));
        }

        #[test]
        fn reports_are_consistent(frames in tracks()) {
            let det = detection_metrics(&frames, DETECTION_RADIUS).unwrap();
            prop_assert!((det.moda - (1.0 - (det.fn_ + det.fp) as f64 / det.gt as f64)).abs() < 1e-12);
            prop_assert_eq!(det.tp + det.fn_, det.gt);
            prop_assert!((0.0..=1.0).contains(&det.modp));
            let tr = tracking_metrics(&frames, TRACKING_RADIUS).unwrap();
            prop_assert!((tr.mota - (1.0 - (tr.fn_ + tr.fp + tr.idsw) as f64 / tr.gt as f64)).abs() < 1e-12);
            prop_assert_eq!(tr.recall, tr.tp as f64 / tr.gt as f64);
            prop_assert!((0.0..=TRACKING_RADIUS).contains(&tr.motp));
            for v in [tr.idf1, tr.mt, tr.ml] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn hypothesis_relabeling_is_invariant(frames in tracks(), perm in Just(vec![3u64, 0, 2, 1]).prop_shuffle()) {
            let relabeled: Vec<FrameAnnotations> = frames
                .iter()
                .map(|f| FrameAnnotations {
                    hyp: f.hyp.iter().map(|p| HypPoint { id: p.id.map(|id| 50 + perm[id as usize]), ..*p }).collect(),
                    ..f.clone()
                })
                .collect();
            let a = tracking_metrics(&frames, TRACKING_RADIUS).unwrap();
            let b = tracking_metrics(&relabeled, TRACKING_RADIUS).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn single_frame_ids_reduce_to_detection(gs in points(), hs in points()) {
            prop_assume!(!gs.is_empty());
            // every id appears in exactly one frame
            let frames: Vec<FrameAnnotations> = (0..3u64)
                .map(|f| FrameAnnotations {
                    frame: f,
                    gt: gs.iter().enumerate().map(|(k, p)| g(f * 100 + k as u64, p.0 + f as f64, p.1)).collect(),
                    hyp: hs.iter().enumerate().map(|(k, p)| h(f * 100 + k as u64, p.0 + f as f64, p.1)).collect(),
                })
                .collect();
            let det = detection_metrics(&frames, 0.7).unwrap();
            let tr = tracking_metrics(&frames, 0.7).unwrap();
            prop_assert_eq!(det.moda, tr.mota);
        }
    }
}
