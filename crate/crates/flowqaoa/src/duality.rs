//! Dual height-field encoding of flow differences, and path-to-path
//! transformation as an explicit sequence of plaquette loop operations.
//!
//! A height field assigns an integer to every interior face, with the outer
//! face pinned at zero. Raising a face by one superposes one counterclockwise
//! unit of circulation on its boundary, so a height field encodes exactly the
//! divergence-free difference between two flow configurations. Integration
//! runs breadth-first over the dual graph, which keeps the construction
//! linear and makes the emitted operation order deterministic.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{FlowConfig, FlowNetwork};
use crate::invalid_arg;

/// Integer height per interior face, relative to a reference configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeightField {
    pub heights: Vec<i64>,
}

impl HeightField {
    pub fn max_abs(&self) -> i64 {
        self.heights.iter().map(|h| h.abs()).max().unwrap_or(0)
    }

    /// Total loop-operation count needed to realize the field one plaquette
    /// at a time.
    pub fn total_ops(&self) -> u64 {
        self.heights.iter().map(|h| h.unsigned_abs()).sum()
    }
}

/// One signed plaquette move: add `direction` units of circulation along the
/// face's stored boundary orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoopOp {
    #[serde(rename = "face_id")]
    pub face: usize,
    pub direction: i8,
}

/// Per-edge list of adjacent interior faces with traversal signs; at most
/// two entries, with the outer face implicit.
fn edge_face_incidence(net: &FlowNetwork) -> Vec<Vec<(usize, i8)>> {
    let mut incidence = vec![Vec::new(); net.n_edges()];
    for (f, face) in net.faces().iter().enumerate() {
        for &(e, sign) in &face.edges {
            incidence[e].push((f, sign));
        }
    }
    incidence
}

fn single_commodity_flows<'a>(cfg: &'a FlowConfig, what: &str) -> Result<&'a [i8]> {
    if cfg.k() != 1 {
        return Err(invalid_arg!(
            "{what} must be single-commodity, got {} commodities",
            cfg.k()
        ));
    }
    Ok(cfg.flows())
}

fn edge_count_check(net: &FlowNetwork, cfg: &FlowConfig, what: &str) -> Result<()> {
    if cfg.n_edges() != net.n_edges() {
        return Err(invalid_arg!(
            "{what} covers {} edges but the network has {}",
            cfg.n_edges(),
            net.n_edges()
        ));
    }
    Ok(())
}

/// Breadth-first integration of `diff` over the dual graph, outer face at
/// height zero. Returns the heights and the face discovery order.
fn integrate_heights(net: &FlowNetwork, diff: &[i64]) -> Result<(Vec<i64>, Vec<usize>)> {
    let incidence = edge_face_incidence(net);
    let faces = net.faces();
    let mut heights: Vec<Option<i64>> = vec![None; faces.len()];
    let mut order = Vec::with_capacity(faces.len());
    let mut queue = VecDeque::new();

    // edges bordering exactly one interior face connect it to the outer face
    for (e, adj) in incidence.iter().enumerate() {
        if let [(f, sign)] = adj[..] {
            if heights[f].is_none() {
                heights[f] = Some(sign as i64 * diff[e]);
                order.push(f);
                queue.push_back(f);
            }
        }
    }
    while let Some(f) = queue.pop_front() {
        let h_f = heights[f].unwrap();
        for &(e, sign_f) in &faces[f].edges {
            for &(g, sign_g) in &incidence[e] {
                if g != f && heights[g].is_none() {
                    heights[g] = Some(sign_g as i64 * (diff[e] - sign_f as i64 * h_f));
                    order.push(g);
                    queue.push_back(g);
                }
            }
        }
    }
    let heights: Vec<i64> = heights
        .into_iter()
        .map(|h| h.ok_or_else(|| Error::Numerical("dual graph is not connected".into())))
        .collect::<Result<_>>()?;

    // every edge equation must hold, or the difference is not a sum of faces
    for (e, adj) in incidence.iter().enumerate() {
        let curl: i64 = adj.iter().map(|&(f, s)| s as i64 * heights[f]).sum();
        if curl != diff[e] {
            return Err(Error::InfeasibleDifference(format!(
                "edge {e} needs difference {}, face heights give {curl}",
                diff[e]
            )));
        }
    }
    Ok((heights, order))
}

/// Heights whose discrete curl turns `ref_cfg` into `target_cfg`.
///
/// Both configurations must be single-commodity on `net`; their difference
/// must be divergence-free, or equivalently a sum of face circulations.
pub fn dual_heights(
    net: &FlowNetwork,
    ref_cfg: &FlowConfig,
    target_cfg: &FlowConfig,
) -> Result<HeightField> {
    edge_count_check(net, ref_cfg, "reference configuration")?;
    edge_count_check(net, target_cfg, "target configuration")?;
    let from = single_commodity_flows(ref_cfg, "reference configuration")?;
    let to = single_commodity_flows(target_cfg, "target configuration")?;
    let diff: Vec<i64> = from
        .iter()
        .zip(to)
        .map(|(&a, &b)| b as i64 - a as i64)
        .collect();
    let (heights, _) = integrate_heights(net, &diff)?;
    Ok(HeightField { heights })
}

/// Inverse of [`dual_heights`]: reference flow plus the curl of `field`.
pub fn apply_heights(
    net: &FlowNetwork,
    ref_cfg: &FlowConfig,
    field: &HeightField,
) -> Result<FlowConfig> {
    edge_count_check(net, ref_cfg, "reference configuration")?;
    let from = single_commodity_flows(ref_cfg, "reference configuration")?;
    if field.heights.len() != net.faces().len() {
        return Err(invalid_arg!(
            "height field covers {} faces but the network has {}",
            field.heights.len(),
            net.faces().len()
        ));
    }
    let mut flows: Vec<i64> = from.iter().map(|&f| f as i64).collect();
    for (f, face) in net.faces().iter().enumerate() {
        for &(e, sign) in &face.edges {
            flows[e] += sign as i64 * field.heights[f];
        }
    }
    let mut out = Vec::with_capacity(flows.len());
    for (e, &v) in flows.iter().enumerate() {
        if !(-1..=1).contains(&v) {
            return Err(Error::RangeExceeded(format!(
                "edge {e} would carry {v} units after applying the heights"
            )));
        }
        out.push(v as i8);
    }
    Ok(FlowConfig::single(out))
}

fn divergence(net: &FlowNetwork, flows: &[i64]) -> Vec<i64> {
    let mut div = vec![0i64; net.n_vertices()];
    for (e, &(u, v)) in net.edges().iter().enumerate() {
        div[u] += flows[e];
        div[v] -= flows[e];
    }
    div
}

/// Endpoints of a single-commodity simple-path configuration.
///
/// Rejects anything else: multi-commodity registers, broken conservation,
/// configurations with circulation loops, or flows that branch.
pub fn simple_path_endpoints(net: &FlowNetwork, cfg: &FlowConfig) -> Result<(usize, usize)> {
    edge_count_check(net, cfg, "path configuration")?;
    let flows = single_commodity_flows(cfg, "path configuration")?;
    let as_i64: Vec<i64> = flows.iter().map(|&f| f as i64).collect();
    let div = divergence(net, &as_i64);
    let sources: Vec<usize> = (0..net.n_vertices()).filter(|&v| div[v] == 1).collect();
    let sinks: Vec<usize> = (0..net.n_vertices()).filter(|&v| div[v] == -1).collect();
    let balanced = div.iter().all(|&d| (-1..=1).contains(&d));
    if sources.len() != 1 || sinks.len() != 1 || !balanced {
        return Err(invalid_arg!(
            "configuration is not a unit source-to-sink flow"
        ));
    }
    let (s, t) = (sources[0], sinks[0]);

    // walk the flow from the source; a simple path consumes every carrying
    // edge exactly once without revisiting a vertex
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); net.n_vertices()];
    let mut support = 0usize;
    for (e, &(u, v)) in net.edges().iter().enumerate() {
        match flows[e] {
            0 => {}
            1 => {
                outgoing[u].push(e);
                support += 1;
            }
            -1 => {
                outgoing[v].push(e);
                support += 1;
            }
            _ => return Err(invalid_arg!("edge {e} carries more than one unit")),
        }
    }
    let mut visited = vec![false; net.n_vertices()];
    let mut at = s;
    let mut used = 0usize;
    loop {
        if visited[at] {
            return Err(invalid_arg!("flow revisits vertex {at}"));
        }
        visited[at] = true;
        if at == t {
            break;
        }
        let [e] = outgoing[at][..] else {
            return Err(invalid_arg!("flow branches at vertex {at}"));
        };
        let (u, v) = net.edges()[e];
        at = if flows[e] == 1 { v } else { u };
        debug_assert_ne!(at, if flows[e] == 1 { u } else { v });
        used += 1;
    }
    if used != support {
        return Err(invalid_arg!(
            "configuration carries circulation off the source-sink path"
        ));
    }
    Ok((s, t))
}

/// Ordered plaquette moves turning the simple path `p1` into `p2`.
///
/// Faces are emitted in increasing height magnitude, ties broken by dual
/// breadth-first discovery order, each face repeated `|height|` times. Every
/// prefix of the returned list preserves flow conservation at every vertex;
/// the full list reproduces `p2` exactly.
pub fn path_transform(net: &FlowNetwork, p1: &FlowConfig, p2: &FlowConfig) -> Result<Vec<LoopOp>> {
    let (s1, t1) = simple_path_endpoints(net, p1)?;
    let (s2, t2) = simple_path_endpoints(net, p2)?;
    if (s1, t1) != (s2, t2) {
        return Err(invalid_arg!(
            "paths connect different terminals: {s1}->{t1} vs {s2}->{t2}"
        ));
    }
    let diff: Vec<i64> = p1
        .flows()
        .iter()
        .zip(p2.flows())
        .map(|(&a, &b)| b as i64 - a as i64)
        .collect();
    let (heights, order) = integrate_heights(net, &diff)?;

    let mut rank = vec![usize::MAX; heights.len()];
    for (pos, &f) in order.iter().enumerate() {
        rank[f] = pos;
    }
    let mut active: Vec<usize> = (0..heights.len()).filter(|&f| heights[f] != 0).collect();
    active.sort_by_key(|&f| (heights[f].abs(), rank[f]));

    let mut ops = Vec::with_capacity(heights.iter().map(|h| h.unsigned_abs() as usize).sum());
    let mut work: Vec<i64> = p1.flows().iter().map(|&f| f as i64).collect();
    let conserved = divergence(net, &work);
    for &f in &active {
        let direction = heights[f].signum() as i8;
        for _ in 0..heights[f].abs() {
            for &(e, sign) in &net.faces()[f].edges {
                work[e] += sign as i64 * direction as i64;
            }
            assert_eq!(
                divergence(net, &work),
                conserved,
                "loop operation broke flow conservation"
            );
            ops.push(LoopOp { face: f, direction });
        }
    }
    for (e, &w) in work.iter().enumerate() {
        assert_eq!(
            w,
            p2.flows()[e] as i64,
            "transform did not reproduce the target on edge {e}"
        );
    }
    Ok(ops)
}
