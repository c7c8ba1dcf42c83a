//! Tracing-success metrics and the protocol event trace.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ids::{ContactLog, DailyRandomId, RollingProximityId};

/// One protocol event, serialized as a JSON line
/// `{t, node, event, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub node: u32,
    pub event: String,
    pub detail: serde_json::Value,
}

impl TraceEvent {
    pub fn new(t: f64, node: u32, event: &str, detail: serde_json::Value) -> Self {
        TraceEvent {
            t,
            node,
            event: event.to_string(),
            detail,
        }
    }
}

/// Write a trace as JSON lines.
pub fn write_trace_jsonl<W: std::io::Write>(trace: &[TraceEvent], mut w: W) -> std::io::Result<()> {
    for event in trace {
        serde_json::to_writer(&mut w, event)?;
        writeln!(w)?;
    }
    Ok(())
}

/// The identifier schedule a node actually used during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeIdentity {
    pub node_id: u32,
    /// Day-0 daily ID of the node's schedule.
    pub drid: DailyRandomId,
    /// Rolling IDs broadcast during the run, in rotation order.
    pub rpids: Vec<RollingProximityId>,
}

/// Result of one simulated run.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub n_nodes: usize,
    /// R_i = k_i / (n − 1) per node, in scene order.
    pub per_node_rates: Vec<f64>,
    /// r = mean of R_i.
    pub group_rate: f64,
    /// delivery[rx][tx] = decoded frames rx heard from tx.
    pub delivery: Vec<Vec<u32>>,
    /// Decodes whose payload matched no scheduled rolling ID.
    pub phantom_decodes: usize,
    pub trace: Vec<TraceEvent>,
    /// Per-node contact logs, in scene order.
    pub contact_logs: Vec<ContactLog>,
    /// Per-node schedules, in scene order.
    pub identities: Vec<NodeIdentity>,
}

impl MetricsReport {
    pub(crate) fn from_delivery(
        node_ids: &[u32],
        delivery: Vec<Vec<u32>>,
        phantom_decodes: usize,
        trace: Vec<TraceEvent>,
        contact_logs: Vec<ContactLog>,
        identities: Vec<NodeIdentity>,
    ) -> Self {
        let n = node_ids.len();
        let per_node_rates: Vec<f64> = (0..n)
            .map(|rx| {
                let heard = (0..n)
                    .filter(|&tx| tx != rx && delivery[rx][tx] > 0)
                    .count();
                heard as f64 / (n - 1) as f64
            })
            .collect();
        let group_rate = per_node_rates.iter().sum::<f64>() / n as f64;
        MetricsReport {
            n_nodes: n,
            per_node_rates,
            group_rate,
            delivery,
            phantom_decodes,
            trace,
            contact_logs,
            identities,
        }
    }

    /// Summary line for machine consumption.
    pub fn to_json_summary(&self) -> serde_json::Value {
        json!({
            "n_nodes": self.n_nodes,
            "group_rate": self.group_rate,
            "per_node_rates": self.per_node_rates,
            "delivery": self.delivery,
            "phantom_decodes": self.phantom_decodes,
        })
    }
}

/// Aggregated repetitions at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub distance_ft: f64,
    pub mean_r: f64,
    pub stddev: f64,
    pub n_reps: usize,
}

/// `distance_ft,mean_r,stddev,n_reps` CSV.
pub fn points_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("distance_ft,mean_r,stddev,n_reps\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            p.distance_ft, p.mean_r, p.stddev, p.n_reps
        ));
    }
    out
}

pub(crate) fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_from_delivery_matrix() {
        let delivery = vec![
            vec![0, 2, 1, 0],
            vec![1, 0, 0, 0],
            vec![0, 0, 0, 0],
            vec![3, 1, 1, 0],
        ];
        let report = MetricsReport::from_delivery(
            &[0, 1, 2, 3],
            delivery,
            0,
            vec![],
            vec![Default::default(); 4],
            vec![],
        );
        assert_eq!(report.per_node_rates, vec![2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0]);
        assert!((report.group_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_format() {
        let points = vec![SweepPoint {
            distance_ft: 3.0,
            mean_r: 0.975,
            stddev: 0.05,
            n_reps: 10,
        }];
        let csv = points_to_csv(&points);
        assert_eq!(csv.lines().next().unwrap(), "distance_ft,mean_r,stddev,n_reps");
        assert_eq!(csv.lines().nth(1).unwrap(), "3,0.975000,0.050000,10");
    }

    #[test]
    fn stddev_of_constant_is_zero() {
        let (m, s) = mean_and_stddev(&[0.5, 0.5, 0.5]);
        assert_eq!(m, 0.5);
        assert_eq!(s, 0.0);
    }
}
