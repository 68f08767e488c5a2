//! Network topology: nodes, pipes, validation and the JSON schema.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A junction node with its static head characteristics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub elevation_m: f64,
    pub base_pressure_m: f64,
}

/// Pipe record as stored in the topology file; endpoints reference node ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipeSpec {
    pub from: String,
    pub to: String,
    pub length_m: f64,
    pub diameter_mm: f64,
    pub roughness: f64,
}

/// On-disk topology schema: `{ "nodes": [...], "pipes": [...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub nodes: Vec<NodeSpec>,
    pub pipes: Vec<PipeSpec>,
}

/// Pipe with endpoints resolved to node indices.
#[derive(Debug, Clone)]
pub struct Pipe {
    pub a: usize,
    pub b: usize,
    pub length_m: f64,
    pub diameter_mm: f64,
    pub roughness: f64,
}

/// Validated network: connected pipe graph with positive pipe parameters.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<NodeSpec>,
    pipes: Vec<Pipe>,
    adjacency: Vec<Vec<usize>>,
}

/// Reads and validates a topology JSON file.
pub fn load_topology(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Topology(format!("cannot read {}: {e}", path.display())))?;
    let file: TopologyFile = serde_json::from_str(&text)
        .map_err(|e| Error::Topology(format!("parse error in {}: {e}", path.display())))?;
    Network::from_parts(file.nodes, &file.pipes)
}

impl Network {
    /// Builds a network from node and pipe records, rejecting schema violations
    /// (dangling endpoints, non-positive pipe parameters, duplicate ids,
    /// self loops) and disconnected graphs.
    pub fn from_parts(nodes: Vec<NodeSpec>, pipes: &[PipeSpec]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Topology("topology has no nodes".into()));
        }
        let mut index = std::collections::BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(Error::Topology(format!("node {i} has an empty id")));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Topology(format!("duplicate node id {:?}", n.id)));
            }
        }
        let mut resolved = Vec::with_capacity(pipes.len());
        for p in pipes {
            let a = *index
                .get(&p.from)
                .ok_or_else(|| Error::Topology(format!("pipe references missing node {:?}", p.from)))?;
            let b = *index
                .get(&p.to)
                .ok_or_else(|| Error::Topology(format!("pipe references missing node {:?}", p.to)))?;
            if a == b {
                return Err(Error::Topology(format!("pipe {:?}-{:?} is a self loop", p.from, p.to)));
            }
            if !(p.length_m > 0.0) || !(p.diameter_mm > 0.0) || !(p.roughness > 0.0) {
                return Err(Error::Topology(format!(
                    "pipe {:?}-{:?} has non-positive length, diameter or roughness",
                    p.from, p.to
                )));
            }
            resolved.push(Pipe {
                a,
                b,
                length_m: p.length_m,
                diameter_mm: p.diameter_mm,
                roughness: p.roughness,
            });
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (pi, p) in resolved.iter().enumerate() {
            adjacency[p.a].push(pi);
            adjacency[p.b].push(pi);
        }
        let net = Network { nodes, pipes: resolved, adjacency };
        let reach = net.hop_distances(0);
        if reach.iter().any(|d| *d == usize::MAX) {
            return Err(Error::Topology("pipe graph is disconnected".into()));
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Pipe indices incident to node `k`.
    pub fn incident_pipes(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }

    /// Hop distance from `from` to every node (BFS over the pipe graph).
    /// Unreachable nodes get `usize::MAX`; validated networks have none.
    pub fn hop_distances(&self, from: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(u) = queue.pop_front() {
            for &pi in &self.adjacency[u] {
                let p = &self.pipes[pi];
                let v = if p.a == u { p.b } else { p.a };
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Writes the topology back out in the documented JSON schema.
    pub fn to_file(&self, path: &Path) -> Result<()> {
        let file = TopologyFile {
            nodes: self.nodes.clone(),
            pipes: self
                .pipes
                .iter()
                .map(|p| PipeSpec {
                    from: self.nodes[p.a].id.clone(),
                    to: self.nodes[p.b].id.clone(),
                    length_m: p.length_m,
                    diameter_mm: p.diameter_mm,
                    roughness: p.roughness,
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file).expect("topology serialization");
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Copy of the network with pipe length, diameter and roughness perturbed
    /// by independent uniform relative factors in `[-rel, +rel]`. Topology and
    /// node records are unchanged.
    pub fn with_jittered_pipes(&self, rel: f64, rng: &mut ChaCha8Rng) -> Network {
        let mut out = self.clone();
        for p in &mut out.pipes {
            p.length_m *= 1.0 + rng.gen_range(-rel..=rel);
            p.diameter_mm *= 1.0 + rng.gen_range(-rel..=rel);
            p.roughness *= 1.0 + rng.gen_range(-rel..=rel);
        }
        out
    }

    /// Seeded random connected network with the requested node and pipe
    /// counts. Pipe parameters are drawn from realistic ranges (lengths up to
    /// ~1 km, diameters 100-400 mm). Used for desk-scale experiments and
    /// examples where no measured topology is available.
    pub fn synthetic(node_count: usize, pipe_count: usize, seed: u64) -> Result<Network> {
        if node_count < 2 {
            return Err(Error::Config("synthetic network needs at least 2 nodes".into()));
        }
        let max_pipes = node_count * (node_count - 1) / 2;
        if pipe_count < node_count - 1 || pipe_count > max_pipes {
            return Err(Error::Config(format!(
                "pipe count {pipe_count} not in [{}, {max_pipes}] for {node_count} nodes",
                node_count - 1
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes: Vec<NodeSpec> = (0..node_count)
            .map(|i| NodeSpec {
                id: format!("n{i:03}"),
                elevation_m: rng.gen_range(0.0..50.0),
                base_pressure_m: rng.gen_range(35.0..60.0),
            })
            .collect();
        let mut edges = std::collections::BTreeSet::new();
        // Random spanning tree first, then extra chords up to the pipe count.
        for i in 1..node_count {
            let j = rng.gen_range(0..i);
            edges.insert((j, i));
        }
        while edges.len() < pipe_count {
            let a = rng.gen_range(0..node_count);
            let b = rng.gen_range(0..node_count);
            if a == b {
                continue;
            }
            let e = (a.min(b), a.max(b));
            edges.insert(e);
        }
        let pipes: Vec<PipeSpec> = edges
            .into_iter()
            .map(|(a, b)| PipeSpec {
                from: nodes[a].id.clone(),
                to: nodes[b].id.clone(),
                length_m: rng.gen_range(1.0..1094.73),
                diameter_mm: rng.gen_range(100.0..400.0),
                roughness: rng.gen_range(70.0..150.0),
            })
            .collect();
        Network::from_parts(nodes, &pipes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring4_json() -> String {
        serde_json::json!({
            "nodes": [
                {"id": "a", "elevation_m": 1.0, "base_pressure_m": 40.0},
                {"id": "b", "elevation_m": 2.0, "base_pressure_m": 42.0},
                {"id": "c", "elevation_m": 3.0, "base_pressure_m": 44.0},
                {"id": "d", "elevation_m": 4.0, "base_pressure_m": 46.0}
            ],
            "pipes": [
                {"from": "a", "to": "b", "length_m": 100.0, "diameter_mm": 200.0, "roughness": 100.0},
                {"from": "b", "to": "c", "length_m": 120.0, "diameter_mm": 200.0, "roughness": 100.0},
                {"from": "c", "to": "d", "length_m": 140.0, "diameter_mm": 200.0, "roughness": 100.0},
                {"from": "d", "to": "a", "length_m": 160.0, "diameter_mm": 200.0, "roughness": 100.0}
            ]
        })
        .to_string()
    }

    #[test]
    fn ring_topology_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ring.json");
        std::fs::write(&path, ring4_json()).unwrap();
        let net = load_topology(&path).unwrap();
        assert_eq!(net.node_count(), 4);
        assert_eq!(net.pipes().len(), 4);

        let back = dir.path().join("ring_back.json");
        net.to_file(&back).unwrap();
        let again = load_topology(&back).unwrap();
        assert_eq!(again.node_count(), 4);
        assert_eq!(again.pipes().len(), 4);
    }

    #[test]
    fn modena_sized_network_loads() {
        // Same node and pipe counts as the Modena benchmark network.
        let net = Network::synthetic(268, 317, 7).unwrap();
        assert_eq!(net.node_count(), 268);
        assert_eq!(net.pipes().len(), 317);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("modena_shaped.json");
        net.to_file(&path).unwrap();
        let loaded = load_topology(&path).unwrap();
        assert_eq!(loaded.node_count(), 268);
    }

    #[test]
    fn missing_endpoint_is_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let bad = ring4_json().replace("\"to\":\"b\"", "\"to\":\"zz\"");
        std::fs::write(&path, bad).unwrap();
        let err = load_topology(&path).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "got {err:?}");
        assert!(err.to_string().contains("missing node"));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let nodes = vec![
            NodeSpec { id: "a".into(), elevation_m: 0.0, base_pressure_m: 40.0 },
            NodeSpec { id: "b".into(), elevation_m: 0.0, base_pressure_m: 40.0 },
            NodeSpec { id: "c".into(), elevation_m: 0.0, base_pressure_m: 40.0 },
        ];
        let pipes = vec![PipeSpec {
            from: "a".into(),
            to: "b".into(),
            length_m: 10.0,
            diameter_mm: 100.0,
            roughness: 100.0,
        }];
        let err = Network::from_parts(nodes, &pipes).unwrap_err();
        assert!(err.to_string().contains("disconnected"));
    }

    #[test]
    fn hop_distances_on_ring() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ring.json");
        std::fs::write(&path, ring4_json()).unwrap();
        let net = load_topology(&path).unwrap();
        assert_eq!(net.hop_distances(0), vec![0, 1, 2, 1]);
    }

    #[test]
    fn jitter_changes_pipes_only() {
        let net = Network::synthetic(8, 10, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let jittered = net.with_jittered_pipes(0.1, &mut rng);
        assert_eq!(jittered.node_count(), net.node_count());
        for (a, b) in net.pipes().iter().zip(jittered.pipes()) {
            assert_eq!(a.a, b.a);
            assert_eq!(a.b, b.b);
            assert!((b.length_m / a.length_m - 1.0).abs() <= 0.1 + 1e-12);
        }
    }
}
