// SPDX-License-Identifier: Apache-2.0

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{LinkScope, NodeId};

pub const GBPS: f64 = 1e9 / 8.0;
pub const MBPS: f64 = 1e6 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub dc: usize,
    pub rack: usize,
}

/// Base latencies per scope and bandwidths in bytes per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub rack_latency: Duration,
    pub dc_latency: Duration,
    pub remote_latency: Duration,
    pub intra_dc_bandwidth: f64,
    pub cross_dc_bandwidth: f64,
}

impl LinkProfile {
    pub fn high_bandwidth() -> Self {
        LinkProfile {
            rack_latency: Duration::from_micros(100),
            dc_latency: Duration::from_micros(300),
            remote_latency: Duration::from_millis(10),
            intra_dc_bandwidth: GBPS,
            cross_dc_bandwidth: GBPS,
        }
    }

    pub fn low_bandwidth() -> Self {
        LinkProfile {
            cross_dc_bandwidth: 10.0 * MBPS,
            ..Self::high_bandwidth()
        }
    }
}

/// Datacenters made of racks made of nodes. Node ids are assigned densely in
/// datacenter, rack, slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    racks: Vec<Vec<usize>>,
    locations: Vec<Location>,
    links: LinkProfile,
}

impl Topology {
    pub fn new(racks: Vec<Vec<usize>>, links: LinkProfile) -> Result<Self, SimError> {
        if links.rack_latency > links.dc_latency || links.dc_latency > links.remote_latency {
            return Err(SimError::InvalidTopology(
                "latencies must satisfy rack <= dc <= remote".into(),
            ));
        }
        if !(links.intra_dc_bandwidth > 0.0 && links.cross_dc_bandwidth > 0.0) {
            return Err(SimError::InvalidTopology(
                "bandwidth must be positive".into(),
            ));
        }
        let mut locations = Vec::new();
        for (dc, rs) in racks.iter().enumerate() {
            for (rack, &n) in rs.iter().enumerate() {
                locations.extend(std::iter::repeat_n(Location { dc, rack }, n));
            }
        }
        if locations.is_empty() {
            return Err(SimError::InvalidTopology("no nodes".into()));
        }
        Ok(Topology {
            racks,
            locations,
            links,
        })
    }

    /// Two datacenters, each with racks of 4 and 5 nodes.
    pub fn two_dc() -> Self {
        Self::new(vec![vec![4, 5], vec![4, 5]], LinkProfile::high_bandwidth()).unwrap()
    }

    pub fn two_dc_low_bandwidth() -> Self {
        Self::new(vec![vec![4, 5], vec![4, 5]], LinkProfile::low_bandwidth()).unwrap()
    }

    pub fn uniform(dcs: usize, racks_per_dc: usize, nodes_per_rack: usize) -> Self {
        Self::new(
            vec![vec![nodes_per_rack; racks_per_dc]; dcs],
            LinkProfile::high_bandwidth(),
        )
        .unwrap()
    }

    pub fn links(&self) -> &LinkProfile {
        &self.links
    }

    pub fn racks(&self) -> &[Vec<usize>] {
        &self.racks
    }

    pub fn set_cross_dc_bandwidth(&mut self, bytes_per_sec: f64) {
        self.links.cross_dc_bandwidth = bytes_per_sec;
    }

    pub fn node_count(&self) -> usize {
        self.locations.len()
    }

    pub fn datacenters(&self) -> usize {
        self.racks.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.locations.len() as u32).map(NodeId)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        (n.0 as usize) < self.locations.len()
    }

    pub fn location(&self, n: NodeId) -> Location {
        self.locations[n.0 as usize]
    }

    pub fn scope(&self, a: NodeId, b: NodeId) -> LinkScope {
        if a == b {
            return LinkScope::Local;
        }
        let (la, lb) = (self.location(a), self.location(b));
        if la.dc != lb.dc {
            LinkScope::Remote
        } else if la.rack != lb.rack {
            LinkScope::Datacenter
        } else {
            LinkScope::Rack
        }
    }

    pub fn latency(&self, scope: LinkScope) -> Duration {
        match scope {
            LinkScope::Local => Duration::ZERO,
            LinkScope::Rack => self.links.rack_latency,
            LinkScope::Datacenter => self.links.dc_latency,
            LinkScope::Remote => self.links.remote_latency,
        }
    }

    /// Bytes per second on a link of the given scope; infinite for local.
    pub fn bandwidth(&self, scope: LinkScope) -> f64 {
        match scope {
            LinkScope::Local => f64::INFINITY,
            LinkScope::Rack | LinkScope::Datacenter => self.links.intra_dc_bandwidth,
            LinkScope::Remote => self.links.cross_dc_bandwidth,
        }
    }

    pub fn transfer_time(&self, scope: LinkScope, bytes: usize) -> Duration {
        let bw = self.bandwidth(scope);
        if bw.is_infinite() {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(bytes as f64 / bw)
        }
    }

    /// Unloaded delivery delay for a message of `bytes` over `scope`.
    pub fn delay(&self, scope: LinkScope, bytes: usize) -> Duration {
        self.latency(scope) + self.transfer_time(scope, bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dc_preset_shape() {
        let t = Topology::two_dc();
        assert_eq!(t.node_count(), 18);
        assert_eq!(t.datacenters(), 2);
        assert_eq!(t.scope(NodeId(0), NodeId(3)), LinkScope::Rack);
        assert_eq!(t.scope(NodeId(0), NodeId(4)), LinkScope::Datacenter);
        assert_eq!(t.scope(NodeId(0), NodeId(9)), LinkScope::Remote);
        assert_eq!(t.scope(NodeId(7), NodeId(7)), LinkScope::Local);
    }

    #[test]
    fn latency_order_is_enforced() {
        let mut links = LinkProfile::high_bandwidth();
        links.rack_latency = Duration::from_millis(50);
        assert!(Topology::new(vec![vec![2]], links).is_err());
    }

    #[test]
    fn one_mib_cross_dc_at_one_mib_per_second() {
        let mut links = LinkProfile::high_bandwidth();
        links.cross_dc_bandwidth = 1024.0 * 1024.0;
        let t = Topology::new(vec![vec![1], vec![1]], links).unwrap();
        assert_eq!(
            t.delay(LinkScope::Remote, 1024 * 1024),
            Duration::from_millis(1010)
        );
    }
}
