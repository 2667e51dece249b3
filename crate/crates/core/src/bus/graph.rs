use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::core::Tier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub name: String,
    pub tier: Tier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicInfo {
    pub name: String,
    pub schema: String,
    /// Distinct owning nodes.
    pub publishers: Vec<String>,
    pub subscribers: Vec<String>,
    /// Endpoint counts; a node may own several endpoints on one topic.
    pub publisher_count: usize,
    pub subscriber_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub name: String,
    pub request: String,
    pub response: String,
    pub provider: String,
}

/// Snapshot of the live graph, sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: Vec<NodeInfo>,
    pub topics: Vec<TopicInfo>,
    pub services: Vec<ServiceInfo>,
}

/// Names-and-types view used to compare two graphs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphShape {
    pub nodes: BTreeSet<(String, String)>,
    pub topics: BTreeSet<(String, String)>,
    pub services: BTreeSet<(String, String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphDiff {
    pub added: GraphShape,
    pub removed: GraphShape,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.added == GraphShape::default() && self.removed == GraphShape::default()
    }
}

impl GraphInfo {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.topics.is_empty() && self.services.is_empty()
    }

    pub fn node(&self, name: &str) -> Option<&NodeInfo> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn topic(&self, name: &str) -> Option<&TopicInfo> {
        self.topics.iter().find(|t| t.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceInfo> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn node_names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn topic_names(&self) -> Vec<&str> {
        self.topics.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn shape(&self) -> GraphShape {
        GraphShape {
            nodes: self.nodes.iter().map(|n| (n.name.clone(), n.tier.as_str().to_string())).collect(),
            topics: self.topics.iter().map(|t| (t.name.clone(), t.schema.clone())).collect(),
            services: self
                .services
                .iter()
                .map(|s| (s.name.clone(), s.request.clone(), s.response.clone()))
                .collect(),
        }
    }

    /// What `other` adds to and removes from `self`.
    pub fn diff(&self, other: &GraphInfo) -> GraphDiff {
        let a = self.shape();
        let b = other.shape();
        GraphDiff {
            added: GraphShape {
                nodes: b.nodes.difference(&a.nodes).cloned().collect(),
                topics: b.topics.difference(&a.topics).cloned().collect(),
                services: b.services.difference(&a.services).cloned().collect(),
            },
            removed: GraphShape {
                nodes: a.nodes.difference(&b.nodes).cloned().collect(),
                topics: a.topics.difference(&b.topics).cloned().collect(),
                services: a.services.difference(&b.services).cloned().collect(),
            },
        }
    }

    /// Every publisher and subscriber names a live node.
    pub fn is_consistent(&self) -> bool {
        let live: BTreeSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        self.topics
            .iter()
            .all(|t| t.publishers.iter().chain(&t.subscribers).all(|n| live.contains(n.as_str())))
            && self.services.iter().all(|s| live.contains(s.provider.as_str()))
    }
}
