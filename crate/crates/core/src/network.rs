//! Member correlation network: thresholded mean inventory-variation
//! correlations as edges, weighted Newman modularity, and two-level
//! map-equation community detection (greedy node moves with community
//! aggregation, best of several seeded restarts).

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::panel::{Domicile, TradePanel};
use crate::stats::{self, StatsError};

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.015;
pub const DEFAULT_MIN_VOLUME_RATIO: f64 = 0.1;
/// Members active on fewer days than this are excluded as short-history.
pub const DEFAULT_MIN_HISTORY_DAYS: usize = 120;
pub const DEFAULT_MIN_OVERLAP_DAYS: usize = 30;
/// Number of seeded restarts of the community search.
pub const RESTARTS: u64 = 10;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("fewer than two members remain after the exclusion filters")]
    TooFewMembers,
    #[error("network has no nodes or no edge weight")]
    EmptyNetwork,
    #[error("partition labels do not match the node set")]
    InvalidPartition,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkNode {
    pub member_id: String,
    pub domicile: Domicile,
    pub volume: f64,
}

/// Undirected weighted member network. Edges store (a, b, weight) with
/// a < b; weights exceed the construction threshold.
#[derive(Debug, Clone)]
pub struct MemberNetwork {
    pub nodes: Vec<NetworkNode>,
    pub edges: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

impl MemberNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b, w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }

    pub fn strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for &(a, b, w) in &self.edges {
            s[a] += w;
            s[b] += w;
        }
        s
    }
}

/// A node -> community assignment with its quality scores.
#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    /// Community label per node, contiguous from 0.
    pub labels: Vec<usize>,
    pub n_communities: usize,
    pub modularity: f64,
    /// Two-level map-equation codelength in bits.
    pub codelength: f64,
}

/// Build the member network over one decile: edge weight is the mean
/// over (decile stock, year) of the pairwise net-flow correlation on
/// overlapping active days; edges at or below `threshold` are dropped.
/// Members under the volume filter or with short histories are excluded.
pub fn build_network(
    panel: &TradePanel,
    decile: u8,
    threshold: f64,
    min_volume_ratio: f64,
    min_history_days: usize,
    min_overlap_days: usize,
) -> Result<MemberNetwork, NetworkError> {
    let volume_floor = min_volume_ratio * panel.mean_member_volume();
    let eligible: Vec<usize> = (0..panel.members().len())
        .filter(|&m| {
            let info = &panel.members()[m];
            info.volume > 0.0 && info.volume >= volume_floor && info.active_days >= min_history_days
        })
        .collect();
    if eligible.len() < 2 {
        return Err(NetworkError::TooFewMembers);
    }
    let stocks = panel.stocks_in_decile(decile);

    // Per-member day -> net flow maps for each (stock, year), built once.
    let mut series: HashMap<(usize, usize, i32), HashMap<u32, f64>> = HashMap::new();
    for &m in &eligible {
        for &s in &stocks {
            for slice in panel.years() {
                let map: HashMap<u32, f64> = panel
                    .trade_obs(m, s)
                    .iter()
                    .filter(|o| o.day >= slice.days.0 && o.day < slice.days.1)
                    .map(|o| (o.day, o.buy - o.sell))
                    .collect();
                if map.len() >= min_overlap_days {
                    series.insert((m, s, slice.year), map);
                }
            }
        }
    }

    let pairs: Vec<(usize, usize)> = (0..eligible.len())
        .flat_map(|i| ((i + 1)..eligible.len()).map(move |j| (i, j)))
        .collect();
    let edges: Vec<(usize, usize, f64)> = pairs
        .par_iter()
        .filter_map(|&(i, j)| {
            let (ma, mb) = (eligible[i], eligible[j]);
            let mut sum = 0.0;
            let mut count = 0usize;
            for &s in &stocks {
                for slice in panel.years() {
                    let (sa, sb) = match (
                        series.get(&(ma, s, slice.year)),
                        series.get(&(mb, s, slice.year)),
                    ) {
                        (Some(a), Some(b)) => (a, b),
                        _ => continue,
                    };
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    let mut days: Vec<u32> = sa.keys().filter(|d| sb.contains_key(d)).copied().collect();
                    if days.len() < min_overlap_days {
                        continue;
                    }
                    days.sort_unstable();
                    for d in days {
                        xs.push(sa[&d]);
                        ys.push(sb[&d]);
                    }
                    if let Ok(c) = stats::pearson(&xs, &ys) {
                        sum += c;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                return None;
            }
            let weight = sum / count as f64;
            (weight > threshold).then_some((i, j, weight))
        })
        .collect();
    let mut edges = edges;
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let nodes = eligible
        .iter()
        .map(|&m| {
            let info = &panel.members()[m];
            NetworkNode {
                member_id: info.id.clone(),
                domicile: info.domicile,
                volume: info.volume,
            }
        })
        .collect();
    Ok(MemberNetwork {
        nodes,
        edges,
        threshold,
    })
}

/// Weighted Newman modularity of a partition:
/// Q = sum_c (w_in_c / W - (s_c / 2W)^2).
pub fn modularity(net: &MemberNetwork, labels: &[usize]) -> Result<f64, NetworkError> {
    if net.n_nodes() == 0 {
        return Err(NetworkError::EmptyNetwork);
    }
    if labels.len() != net.n_nodes() {
        return Err(NetworkError::InvalidPartition);
    }
    let total = net.total_weight();
    if total <= 0.0 {
        return Err(NetworkError::EmptyNetwork);
    }
    let n_comms = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut w_in = vec![0.0; n_comms];
    let mut strength = vec![0.0; n_comms];
    for &(a, b, w) in &net.edges {
        if labels[a] == labels[b] {
            w_in[labels[a]] += w;
        }
        strength[labels[a]] += w;
        strength[labels[b]] += w;
    }
    let mut q = 0.0;
    for c in 0..n_comms {
        q += w_in[c] / total - (strength[c] / (2.0 * total)).powi(2);
    }
    Ok(q)
}

fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Two-level map-equation codelength (bits) of a partition.
pub fn map_equation_codelength(net: &MemberNetwork, labels: &[usize]) -> f64 {
    let strengths = net.strengths();
    let two_w: f64 = 2.0 * net.total_weight();
    if two_w <= 0.0 {
        return 0.0;
    }
    let n_comms = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut s_c = vec![0.0; n_comms];
    let mut in_c = vec![0.0; n_comms];
    for (v, &l) in labels.iter().enumerate() {
        s_c[l] += strengths[v];
    }
    for &(a, b, w) in &net.edges {
        if labels[a] == labels[b] {
            in_c[labels[a]] += w;
        }
    }
    let node_term: f64 = strengths.iter().map(|&s| plogp(s / two_w)).sum();
    codelength_from_stats(&s_c, &in_c, two_w, node_term)
}

fn codelength_from_stats(s_c: &[f64], in_c: &[f64], two_w: f64, node_term: f64) -> f64 {
    let mut total_q = 0.0;
    let mut sum_plogp_q = 0.0;
    let mut sum_plogp_p = 0.0;
    for c in 0..s_c.len() {
        if s_c[c] <= 0.0 {
            continue;
        }
        let q = (s_c[c] - 2.0 * in_c[c]).max(0.0) / two_w;
        let p = q + s_c[c] / two_w;
        total_q += q;
        sum_plogp_q += plogp(q);
        sum_plogp_p += plogp(p);
    }
    plogp(total_q) - 2.0 * sum_plogp_q + sum_plogp_p - node_term
}

/// Working graph for the community search; starts as the member network
/// and is rebuilt from communities after each aggregation round.
struct Working {
    /// Sum of original node strengths per unit.
    strength: Vec<f64>,
    /// Original edge weight internal to the unit.
    selfw: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl Working {
    fn n(&self) -> usize {
        self.strength.len()
    }
}

struct MoveState {
    two_w: f64,
    node_term: f64,
    com: Vec<usize>,
    s_c: Vec<f64>,
    in_c: Vec<f64>,
    total_q: f64,
    sum_plogp_q: f64,
    sum_plogp_p: f64,
}

impl MoveState {
    fn new(g: &Working, two_w: f64, node_term: f64) -> Self {
        let n = g.n();
        let com: Vec<usize> = (0..n).collect();
        let s_c = g.strength.clone();
        let in_c = g.selfw.clone();
        let mut st = MoveState {
            two_w,
            node_term,
            com,
            s_c,
            in_c,
            total_q: 0.0,
            sum_plogp_q: 0.0,
            sum_plogp_p: 0.0,
        };
        for c in 0..n {
            let (q, p) = st.community_terms(c);
            st.total_q += q;
            st.sum_plogp_q += plogp(q);
            st.sum_plogp_p += plogp(p);
        }
        st
    }

    fn community_terms(&self, c: usize) -> (f64, f64) {
        if self.s_c[c] <= 0.0 {
            return (0.0, 0.0);
        }
        let q = (self.s_c[c] - 2.0 * self.in_c[c]).max(0.0) / self.two_w;
        (q, q + self.s_c[c] / self.two_w)
    }

    fn codelength(&self) -> f64 {
        plogp(self.total_q) - 2.0 * self.sum_plogp_q + self.sum_plogp_p - self.node_term
    }

    /// Codelength delta of moving unit `u` (strength su, self weight wu)
    /// from its community to `to`, given its edge weight into each.
    fn move_delta(&self, su: f64, wu: f64, from: usize, to: usize, w_from: f64, w_to: f64) -> f64 {
        let (qf, pf) = self.community_terms(from);
        let (qt, pt) = self.community_terms(to);
        let old = plogp(self.total_q)
            - 2.0 * (plogp(qf) + plogp(qt))
            + plogp(pf)
            + plogp(pt);

        let sf = self.s_c[from] - su;
        let inf = self.in_c[from] - w_from - wu;
        let st = self.s_c[to] + su;
        let int = self.in_c[to] + w_to + wu;
        let term = |s: f64, i: f64| -> (f64, f64) {
            if s <= 0.0 {
                (0.0, 0.0)
            } else {
                let q = (s - 2.0 * i).max(0.0) / self.two_w;
                (q, q + s / self.two_w)
            }
        };
        let (nqf, npf) = term(sf, inf);
        let (nqt, npt) = term(st, int);
        let new_total_q = self.total_q - qf - qt + nqf + nqt;
        let new = plogp(new_total_q)
            - 2.0 * (plogp(nqf) + plogp(nqt))
            + plogp(npf)
            + plogp(npt);
        new - old
    }

    fn apply_move(&mut self, u: usize, su: f64, wu: f64, to: usize, w_from: f64, w_to: f64) {
        let from = self.com[u];
        let (qf, pf) = self.community_terms(from);
        let (qt, pt) = self.community_terms(to);
        self.total_q -= qf + qt;
        self.sum_plogp_q -= plogp(qf) + plogp(qt);
        self.sum_plogp_p -= plogp(pf) + plogp(pt);

        self.s_c[from] -= su;
        self.in_c[from] -= w_from + wu;
        self.s_c[to] += su;
        self.in_c[to] += w_to + wu;
        self.com[u] = to;

        let (qf, pf) = self.community_terms(from);
        let (qt, pt) = self.community_terms(to);
        self.total_q += qf + qt;
        self.sum_plogp_q += plogp(qf) + plogp(qt);
        self.sum_plogp_p += plogp(pf) + plogp(pt);
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}

/// One full restart: local moves + aggregation until stable. Returns the
/// node-level labels (dense) and the final codelength.
fn infomap_once(net: &MemberNetwork, seed: u64, stream: u64) -> (Vec<usize>, f64) {
    let n = net.n_nodes();
    let strengths = net.strengths();
    let two_w = 2.0 * net.total_weight();
    let node_term: f64 = if two_w > 0.0 {
        strengths.iter().map(|&s| plogp(s / two_w)).sum()
    } else {
        0.0
    };
    let mut labels: Vec<usize> = (0..n).collect();
    if two_w <= 0.0 {
        return (labels, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut g = Working {
        strength: strengths,
        selfw: vec![0.0; n],
        adj: net.adjacency(),
    };

    let mut final_len;
    loop {
        let mut st = MoveState::new(&g, two_w, node_term);
        let mut order: Vec<usize> = (0..g.n()).collect();
        let mut moved_any = false;
        loop {
            shuffle(&mut order, &mut rng);
            let mut moved = false;
            for &u in &order {
                let from = st.com[u];
                // weight from u into each neighboring community
                let mut w_by_com: HashMap<usize, f64> = HashMap::new();
                for &(v, w) in &g.adj[u] {
                    *w_by_com.entry(st.com[v]).or_default() += w;
                }
                let w_from = w_by_com.get(&from).copied().unwrap_or(0.0);
                let mut best_to = from;
                let mut best_delta = 0.0;
                let mut candidates: Vec<(usize, f64)> =
                    w_by_com.iter().map(|(&c, &w)| (c, w)).collect();
                candidates.sort_by_key(|&(c, _)| c);
                for (to, w_to) in candidates {
                    if to == from {
                        continue;
                    }
                    let delta =
                        st.move_delta(g.strength[u], g.selfw[u], from, to, w_from, w_to);
                    if delta < best_delta - 1e-12 {
                        best_delta = delta;
                        best_to = to;
                    }
                }
                if best_to != from {
                    let w_to = w_by_com.get(&best_to).copied().unwrap_or(0.0);
                    let before = st.codelength();
                    st.apply_move(u, g.strength[u], g.selfw[u], best_to, w_from, w_to);
                    debug_assert!(st.codelength() <= before + 1e-9, "codelength went up");
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        final_len = st.codelength();

        // renumber communities densely in order of first appearance
        let mut dense: HashMap<usize, usize> = HashMap::new();
        let mut assign = vec![0usize; g.n()];
        for u in 0..g.n() {
            let next = dense.len();
            let id = *dense.entry(st.com[u]).or_insert(next);
            assign[u] = id;
        }
        let n_comms = dense.len();
        for l in labels.iter_mut() {
            *l = assign[*l];
        }
        if !moved_any || n_comms == g.n() {
            break;
        }

        // aggregate communities into super-units
        let mut strength = vec![0.0; n_comms];
        let mut selfw = vec![0.0; n_comms];
        let mut cross: HashMap<(usize, usize), f64> = HashMap::new();
        for u in 0..g.n() {
            let cu = assign[u];
            strength[cu] += g.strength[u];
            selfw[cu] += g.selfw[u];
            for &(v, w) in &g.adj[u] {
                let cv = assign[v];
                if cu == cv {
                    if u < v {
                        selfw[cu] += w;
                    }
                } else if cu < cv {
                    *cross.entry((cu, cv)).or_default() += w;
                }
            }
        }
        let mut adj = vec![Vec::new(); n_comms];
        let mut cross: Vec<((usize, usize), f64)> = cross.into_iter().collect();
        cross.sort_by_key(|&(k, _)| k);
        for ((a, b), w) in cross {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        g = Working {
            strength,
            selfw,
            adj,
        };
    }
    (labels, final_len)
}

/// Detect communities by minimizing the two-level map equation; greedy
/// seeded node moves with aggregation, best of `RESTARTS` restarts.
/// Deterministic for a fixed seed.
pub fn detect_communities(net: &MemberNetwork, seed: u64) -> Result<Partition, NetworkError> {
    if net.n_nodes() == 0 {
        return Err(NetworkError::EmptyNetwork);
    }
    let runs: Vec<(Vec<usize>, f64)> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| infomap_once(net, seed, r))
        .collect();
    let (labels, codelength) = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ia.cmp(ib)))
        .map(|(_, run)| run)
        .expect("at least one restart");

    // relabel densely by first appearance over node order
    let mut dense: HashMap<usize, usize> = HashMap::new();
    let mut out = vec![0usize; labels.len()];
    for (i, &l) in labels.iter().enumerate() {
        let next = dense.len();
        out[i] = *dense.entry(l).or_insert(next);
    }
    let n_communities = dense.len();
    let q = if net.total_weight() > 0.0 {
        modularity(net, &out)?
    } else {
        0.0
    };
    Ok(Partition {
        labels: out,
        n_communities,
        modularity: q,
        codelength,
    })
}

/// Normalized mutual information between two labelings of the same
/// node set; 1.0 for identical partitions (up to renaming), 0.0 for
/// independent ones.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let count = |xs: &[usize]| -> HashMap<usize, f64> {
        let mut m = HashMap::new();
        for &x in xs {
            *m.entry(x).or_insert(0.0) += 1.0;
        }
        m
    };
    let pa = count(a);
    let pb = count(b);
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        *joint.entry((a[i], b[i])).or_insert(0.0) += 1.0;
    }
    let nf = n as f64;
    let h = |m: &HashMap<usize, f64>| -> f64 { -m.values().map(|&c| plogp(c / nf)).sum::<f64>() };
    let ha = h(&pa);
    let hb = h(&pb);
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c / nf;
        let px = pa[&x] / nf;
        let py = pb[&y] / nf;
        mi += pxy * (pxy / (px * py)).log2();
    }
    if ha + hb == 0.0 {
        1.0
    } else {
        (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
    }
}
