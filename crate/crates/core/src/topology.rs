//! Room partitioning and the directed neighbor graph that relay agents
//! post along.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ParticipantId, RoomId};

fn default_target_size() -> usize {
    5
}

fn default_out_degree() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyParams {
    #[serde(default = "default_target_size")]
    pub target_size: usize,
    #[serde(default)]
    pub room_count_override: Option<usize>,
    #[serde(default = "default_out_degree")]
    pub out_degree: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            target_size: default_target_size(),
            room_count_override: None,
            out_degree: default_out_degree(),
            seed: 0,
        }
    }
}

impl TopologyParams {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.target_size < 2 {
            return Err(TopologyError::InvalidParams("target_size must be at least 2"));
        }
        if self.out_degree < 1 {
            return Err(TopologyError::InvalidParams("out_degree must be at least 1"));
        }
        if self.room_count_override == Some(0) {
            return Err(TopologyError::InvalidParams("room_count_override must be positive"));
        }
        Ok(())
    }

    pub fn room_count(&self, participants: usize) -> usize {
        self.room_count_override
            .unwrap_or_else(|| (participants / self.target_size).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("invalid topology parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no participants to partition")]
    NoParticipants,
    #[error("{rooms} rooms cannot hold {participants} participants with no room empty")]
    InfeasibleOverride { participants: usize, rooms: usize },
    #[error("graph is not strongly connected")]
    Disconnected,
}

pub fn room_id(index: usize) -> RoomId {
    RoomId(format!("room-{index}"))
}

/// Index of a room id produced by [`room_id`].
pub fn room_index(id: &RoomId) -> Option<usize> {
    id.0.strip_prefix("room-")?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub members: Vec<ParticipantId>,
}

/// Rooms plus directed relay edges. Room `i` is always `rooms[i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupGraph {
    pub rooms: Vec<Room>,
    pub edges: BTreeSet<(usize, usize)>,
}

impl SubgroupGraph {
    pub fn from_rooms(rooms: Vec<Room>, out_degree: usize) -> Self {
        let edges = build_neighbor_graph(rooms.len(), out_degree);
        Self { rooms, edges }
    }

    pub fn room_count(&self) -> usize {
        self.rooms.len()
    }

    pub fn out_neighbors(&self, room: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .range((room, 0)..(room + 1, 0))
            .map(|&(_, to)| to)
    }

    pub fn room_of(&self, participant: &ParticipantId) -> Option<usize> {
        self.rooms
            .iter()
            .position(|r| r.members.contains(participant))
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rooms.len()];
        for &(from, to) in &self.edges {
            adj[from].push(to);
        }
        adj
    }

    /// Hop counts from `origin` to every room; `None` where unreachable.
    pub fn bfs_distances(&self, origin: usize) -> Vec<Option<usize>> {
        bfs(&self.adjacency(), origin)
    }
}

fn bfs(adj: &[Vec<usize>], origin: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    dist[origin] = Some(0);
    queue.push_back(origin);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or_default();
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Splits participants into rooms whose sizes differ by at most one.
///
/// Participants are shuffled with `params.seed` first; the first
/// `n mod r` rooms get the extra member.
pub fn partition(
    participants: &[ParticipantId],
    params: &TopologyParams,
) -> Result<Vec<Room>, TopologyError> {
    params.validate()?;
    let n = participants.len();
    if n == 0 {
        return Err(TopologyError::NoParticipants);
    }
    let rooms = params.room_count(n);
    if rooms > n {
        return Err(TopologyError::InfeasibleOverride {
            participants: n,
            rooms,
        });
    }

    let mut shuffled = participants.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let base = n / rooms;
    let extra = n % rooms;
    let mut rest = shuffled.into_iter();
    Ok((0..rooms)
        .map(|i| {
            let size = base + usize::from(i < extra);
            Room {
                id: room_id(i),
                members: rest.by_ref().take(size).collect(),
            }
        })
        .collect())
}

/// Directed ring: room `i` links to `i+1 ..= i+k` (mod r), without self
/// edges. Strongly connected for every `r >= 2`.
pub fn build_neighbor_graph(room_count: usize, out_degree: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    if room_count < 2 {
        return edges;
    }
    let k = out_degree.min(room_count - 1);
    for i in 0..room_count {
        for step in 1..=k {
            edges.insert((i, (i + step) % room_count));
        }
    }
    edges
}

/// Longest shortest path over all ordered room pairs.
pub fn graph_diameter(graph: &SubgroupGraph) -> Result<usize, TopologyError> {
    let adj = graph.adjacency();
    let mut diameter = 0;
    for origin in 0..adj.len() {
        for d in bfs(&adj, origin) {
            diameter = diameter.max(d.ok_or(TopologyError::Disconnected)?);
        }
    }
    Ok(diameter)
}

pub fn is_strongly_connected(graph: &SubgroupGraph) -> bool {
    if graph.rooms.is_empty() {
        return true;
    }
    // Reachability from room 0 in the graph and its transpose.
    let adj = graph.adjacency();
    let mut rev = vec![Vec::new(); adj.len()];
    for &(from, to) in &graph.edges {
        rev[to].push(from);
    }
    bfs(&adj, 0).iter().all(Option::is_some) && bfs(&rev, 0).iter().all(Option::is_some)
}
