//! Statistical region merging on wrapped velocities and the segment-wise
//! dealiasing that propagates Nyquist numbers outward from the largest
//! segment.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{unwrap_with_labels, DopplerFrame, LabelMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeanParams {
    pub q: f64,
    pub power_floor: f64,
}

impl Default for DeanParams {
    fn default() -> Self {
        DeanParams { q: 10.0, power_floor: 0.3 }
    }
}

impl DeanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::Config(format!("q = {} must be positive", self.q)));
        }
        if !(0.0..=1.0).contains(&self.power_floor) {
            return Err(Error::Config(format!("power_floor {} outside [0, 1]", self.power_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub pixels: usize,
    pub mean_velocity: f64,
    pub mean_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGraph {
    /// Ids numbered by first appearance in row-major order.
    pub segment_id: Array2<u32>,
    pub stats: Vec<SegmentStats>,
    /// Pairs `(a, b)` with `a < b` of segments sharing a pixel edge.
    pub adjacency: BTreeSet<(u32, u32)>,
}

impl SegmentGraph {
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Builds the graph from an id raster, renumbering ids by first
    /// appearance and recounting all statistics.
    pub fn from_ids<T: Scalar>(ids: &Array2<u32>, frame: &DopplerFrame<T>) -> Result<Self> {
        if ids.dim() != frame.velocity.dim() {
            return Err(Error::InvalidArgument("id raster does not match the frame".into()));
        }
        let mut remap = std::collections::HashMap::new();
        let segment_id = ids.mapv(|id| {
            let next = remap.len() as u32;
            *remap.entry(id).or_insert(next)
        });
        let n = remap.len();
        let mut sums = vec![(0usize, 0.0f64, 0.0f64); n];
        for ((&id, &v), &p) in segment_id.iter().zip(frame.velocity.iter()).zip(frame.power.iter()) {
            let s = &mut sums[id as usize];
            s.0 += 1;
            s.1 += v.as_f64();
            s.2 += p.as_f64();
        }
        let stats = sums
            .into_iter()
            .map(|(c, v, p)| SegmentStats { pixels: c, mean_velocity: v / c as f64, mean_power: p / c as f64 })
            .collect();
        let mut adjacency = BTreeSet::new();
        for_each_edge(segment_id.dim(), |a, b| {
            let (x, y) = (segment_id[a], segment_id[b]);
            if x != y {
                adjacency.insert((x.min(y), x.max(y)));
            }
        });
        Ok(SegmentGraph { segment_id, stats, adjacency })
    }
}

/// Calls `f` for every 4-neighbour pixel pair, right neighbours first.
fn for_each_edge((nr, na): (usize, usize), mut f: impl FnMut((usize, usize), (usize, usize))) {
    for i in 0..nr {
        for j in 0..na {
            if j + 1 < na {
                f((i, j), (i, j + 1));
            }
            if i + 1 < nr {
                f((i, j), (i + 1, j));
            }
        }
    }
}

struct Regions {
    parent: Vec<usize>,
    count: Vec<usize>,
    sum: Vec<f64>,
}

impl Regions {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn mean(&self, r: usize) -> f64 {
        self.sum[r] / self.count[r] as f64
    }

    fn union(&mut self, a: usize, b: usize) {
        let (keep, drop) = if self.count[a] > self.count[b] || (self.count[a] == self.count[b] && a < b) {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[drop] = keep;
        self.count[keep] += self.count[drop];
        self.sum[keep] += self.sum[drop];
    }
}

/// Squared merge bound `b(R)^2` of a region with `pixels` pixels.
fn bound_sq(g: f64, log_term: f64, q: f64, pixels: usize) -> f64 {
    g * g * log_term / (2.0 * q * pixels as f64)
}

/// Segments the wrapped velocity field.
///
/// Neighbouring pixel pairs are visited in ascending order of their velocity
/// difference; their regions merge when the difference of the region means
/// is within `sqrt(b1^2 + b2^2)`, `b(R) = g sqrt(ln(6/delta) / (2 Q |R|))`,
/// with `g = 2 V_N` and `delta = 1 / (6 |I|^2)`. Larger `q` tightens the
/// bound and yields a finer segmentation.
pub fn srm_segment<T: Scalar>(frame: &DopplerFrame<T>, params: &DeanParams) -> Result<SegmentGraph> {
    params.validate()?;
    frame.validate()?;
    let (nr, na) = frame.velocity.dim();
    let n = nr * na;
    let v: Vec<f64> = frame.velocity.iter().map(|x| x.as_f64()).collect();
    let g = 2.0 * frame.nyquist_velocity.as_f64();
    let pixels = n as f64;
    let log_term = (36.0 * pixels * pixels).ln();

    let mut edges = Vec::with_capacity(2 * n);
    for_each_edge((nr, na), |a, b| {
        let (ia, ib) = (a.0 * na + a.1, b.0 * na + b.1);
        edges.push((ia, ib));
    });
    edges.sort_by(|&(a, b), &(c, d)| (v[a] - v[b]).abs().total_cmp(&(v[c] - v[d]).abs()));

    let mut regions = Regions { parent: (0..n).collect(), count: vec![1; n], sum: v.clone() };
    for (a, b) in edges {
        let (ra, rb) = (regions.find(a), regions.find(b));
        if ra == rb {
            continue;
        }
        let diff = (regions.mean(ra) - regions.mean(rb)).abs();
        let limit = bound_sq(g, log_term, params.q, regions.count[ra]) + bound_sq(g, log_term, params.q, regions.count[rb]);
        if diff * diff <= limit {
            regions.union(ra, rb);
        }
    }
    let roots: Vec<u32> = (0..n).map(|p| regions.find(p) as u32).collect();
    let ids = Array2::from_shape_vec((nr, na), roots).expect("sized");
    SegmentGraph::from_ids(&ids, frame)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeanOutcome<T> {
    pub labels: LabelMap,
    pub dealiased: DopplerFrame<T>,
    pub graph: SegmentGraph,
    pub segment_labels: Vec<i8>,
    /// Strong segments never reached from the largest one; left at 0.
    pub unreachable: usize,
}

/// Labels segments outward from the largest strong segment, which is taken
/// as alias-free.
///
/// The next segment is the largest unlabelled strong one that borders a
/// labelled segment (lower id on ties). Its label `l` minimises the mean
/// velocity jump across those borders after a `2 l V_N` shift, and a nonzero
/// `l` is kept only if it shrinks the raw jump by more than `V_N`. Segments
/// whose mean power is below the floor keep label 0 and play no part in the
/// decisions, as do border pixels below the floor.
pub fn dean_dealias_detailed<T: Scalar>(frame: &DopplerFrame<T>, params: &DeanParams) -> Result<DeanOutcome<T>> {
    let graph = srm_segment(frame, params)?;
    let k = graph.len();
    let vn = frame.nyquist_velocity.as_f64();
    let floor = params.power_floor;
    let strong: Vec<bool> = graph.stats.iter().map(|s| s.mean_power >= floor).collect();

    // borders[s] lists (own pixel velocity, neighbour segment, neighbour velocity)
    let mut borders: Vec<Vec<(f64, u32, f64)>> = vec![Vec::new(); k];
    for_each_edge(graph.segment_id.dim(), |a, b| {
        let (sa, sb) = (graph.segment_id[a], graph.segment_id[b]);
        if sa == sb || !strong[sa as usize] || !strong[sb as usize] {
            return;
        }
        if frame.power[a].as_f64() < floor || frame.power[b].as_f64() < floor {
            return;
        }
        let (va, vb) = (frame.velocity[a].as_f64(), frame.velocity[b].as_f64());
        borders[sa as usize].push((va, sb, vb));
        borders[sb as usize].push((vb, sa, va));
    });

    let mut label: Vec<Option<i8>> = vec![None; k];
    let seed = (0..k).filter(|&s| strong[s]).max_by(|&a, &b| graph.stats[a].pixels.cmp(&graph.stats[b].pixels).then(b.cmp(&a)));
    let mut unreachable = 0;
    if let Some(seed) = seed {
        label[seed] = Some(0);
        loop {
            let next = (0..k)
                .filter(|&s| label[s].is_none() && borders[s].iter().any(|&(_, t, _)| label[t as usize].is_some()))
                .max_by(|&a, &b| graph.stats[a].pixels.cmp(&graph.stats[b].pixels).then(b.cmp(&a)));
            let Some(s) = next else { break };
            let (mut jump, mut count) = (0.0, 0usize);
            for &(v, t, u) in &borders[s] {
                if let Some(lt) = label[t as usize] {
                    jump += v - (u + 2.0 * lt as f64 * vn);
                    count += 1;
                }
            }
            let jump = jump / count as f64;
            let raw = jump.abs();
            let (best, best_abs) = [-1i8, 0, 1]
                .into_iter()
                .map(|l| (l, (jump + 2.0 * l as f64 * vn).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.abs().cmp(&b.0.abs())))
                .expect("three candidates");
            label[s] = Some(if best != 0 && raw - best_abs > vn { best } else { 0 });
        }
        unreachable = (0..k).filter(|&s| strong[s] && label[s].is_none()).count();
        if unreachable > 0 {
            log::warn!("{unreachable} segments unreachable from the largest segment; left unshifted");
        }
    }
    let segment_labels: Vec<i8> = label.into_iter().map(|l| l.unwrap_or(0)).collect();
    let labels = LabelMap::new(graph.segment_id.mapv(|s| segment_labels[s as usize]))?;
    let velocity = unwrap_with_labels(&frame.velocity, &labels, frame.nyquist_velocity)?;
    let dealiased = DopplerFrame { velocity, wrapped: false, ..frame.clone() };
    Ok(DeanOutcome { labels, dealiased, graph, segment_labels, unreachable })
}

pub fn dean_dealias<T: Scalar>(frame: &DopplerFrame<T>, params: &DeanParams) -> Result<(LabelMap, DopplerFrame<T>)> {
    let out = dean_dealias_detailed(frame, params)?;
    Ok((out.labels, out.dealiased))
}
