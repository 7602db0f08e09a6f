//! Threshold alert rules with per-metric highest-priority-wins selection.

use serde::{Deserialize, Serialize};

use crate::TriageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    HrBpm,
    GatewayTemp,
    DataTimeout,
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricId::HrBpm => "hr_bpm",
            MetricId::GatewayTemp => "gateway_temp",
            MetricId::DataTimeout => "data_timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub metric: MetricId,
    pub threshold: f64,
    pub priority: u32,
    pub direction: Direction,
}

impl AlertRule {
    pub fn validate(&self) -> Result<(), TriageError> {
        if self.priority < 1 {
            return Err(TriageError::InvalidParameter(format!(
                "alert priority must be at least 1, got {}",
                self.priority
            )));
        }
        if !self.threshold.is_finite() {
            return Err(TriageError::InvalidParameter("alert threshold must be finite".into()));
        }
        Ok(())
    }

    fn violated_by(&self, observed: f64) -> bool {
        match self.direction {
            Direction::Above => observed > self.threshold,
            Direction::Below => observed < self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub priority: u32,
    pub metric: MetricId,
    pub observed: f64,
    /// Milliseconds since the epoch.
    pub timestamp: u64,
    /// Gateway id.
    pub source: String,
}

impl AlertEvent {
    /// Sorted-key JSON line for the gateway event log.
    pub fn to_log_json(&self) -> String {
        serde_json::to_value(self).expect("alert event serializes").to_string()
    }
}

/// Published heart-rate rules plus configurable hardware/connectivity rules:
/// HR above 80 bpm → priority 1, HR above 120 bpm → priority 3, gateway
/// temperature above 70 °C and data timeout above 30 s → priority 2.
pub fn default_rules() -> Vec<AlertRule> {
    vec![
        AlertRule { metric: MetricId::HrBpm, threshold: 80.0, priority: 1, direction: Direction::Above },
        AlertRule { metric: MetricId::HrBpm, threshold: 120.0, priority: 3, direction: Direction::Above },
        AlertRule { metric: MetricId::GatewayTemp, threshold: 70.0, priority: 2, direction: Direction::Above },
        AlertRule { metric: MetricId::DataTimeout, threshold: 30.0, priority: 2, direction: Direction::Above },
    ]
}

/// One evaluation window's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertInput<'a> {
    /// Heart-rate series for the window (bpm).
    pub hr_series: &'a [f64],
    /// Gateway internal temperature (°C).
    pub gateway_temp_c: f64,
    /// Seconds since data was last received.
    pub last_data_age_s: f64,
    /// Timestamp stamped onto emitted events (ms since epoch).
    pub timestamp: u64,
    /// Gateway id stamped onto emitted events.
    pub source: &'a str,
}

/// Evaluate every rule and emit at most one event per metric, carrying the
/// highest violated priority. Events appear in fixed metric order (heart
/// rate, temperature, timeout) and share the window timestamp, so timestamps
/// are non-decreasing within a call.
pub fn raise_alerts(
    input: &AlertInput<'_>,
    rules: &[AlertRule],
) -> Result<Vec<AlertEvent>, TriageError> {
    for rule in rules {
        rule.validate()?;
    }
    let mut events = Vec::new();
    for metric in [MetricId::HrBpm, MetricId::GatewayTemp, MetricId::DataTimeout] {
        let mut best: Option<(u32, f64)> = None;
        for rule in rules.iter().filter(|r| r.metric == metric) {
            // The reported observation is the worst sample in the rule's
            // direction: the series maximum for `Above`, minimum for `Below`.
            let observed = match metric {
                MetricId::HrBpm => {
                    let worst = match rule.direction {
                        Direction::Above => {
                            input.hr_series.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                        }
                        Direction::Below => {
                            input.hr_series.iter().cloned().fold(f64::INFINITY, f64::min)
                        }
                    };
                    if input.hr_series.is_empty() {
                        continue;
                    }
                    worst
                }
                MetricId::GatewayTemp => input.gateway_temp_c,
                MetricId::DataTimeout => input.last_data_age_s,
            };
            if rule.violated_by(observed) {
                let better = match best {
                    None => true,
                    Some((p, _)) => rule.priority > p,
                };
                if better {
                    best = Some((rule.priority, observed));
                }
            }
        }
        if let Some((priority, observed)) = best {
            events.push(AlertEvent {
                priority,
                metric,
                observed,
                timestamp: input.timestamp,
                source: input.source.to_string(),
            });
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(hr: &[f64]) -> AlertInput<'_> {
        AlertInput {
            hr_series: hr,
            gateway_temp_c: 40.0,
            last_data_age_s: 1.0,
            timestamp: 1_000,
            source: "gw-1",
        }
    }

    #[test]
    fn test_hr_85_raises_exactly_one_priority_1_event() {
        let events = raise_alerts(&window(&[85.0]), &default_rules()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].priority, 1);
        assert_eq!(events[0].metric, MetricId::HrBpm);
        assert_eq!(events[0].observed, 85.0);
    }

    #[test]
    fn test_hr_130_raises_exactly_one_priority_3_event() {
        let events = raise_alerts(&window(&[130.0]), &default_rules()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].priority, 3);
    }

    #[test]
    fn test_hr_70_fresh_data_cool_gateway_raises_nothing() {
        let events = raise_alerts(&window(&[70.0]), &default_rules()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn test_hr_exactly_at_threshold_is_not_a_violation() {
        let events = raise_alerts(&window(&[80.0]), &default_rules()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn test_priority_is_monotone_in_heart_rate() {
        let rules = default_rules();
        let mut last = 0;
        for hr10 in 600..=1500 {
            let hr = hr10 as f64 / 10.0;
            let events = raise_alerts(&window(&[hr]), &rules).unwrap();
            let priority = events.iter().map(|e| e.priority).max().unwrap_or(0);
            assert!(
                priority >= last,
                "priority dropped from {last} to {priority} at hr {hr}"
            );
            last = priority;
        }
    }

    #[test]
    fn test_temperature_and_timeout_rules_fire_independently() {
        let input = AlertInput {
            hr_series: &[72.0],
            gateway_temp_c: 75.5,
            last_data_age_s: 45.0,
            timestamp: 99,
            source: "gw-2",
        };
        let events = raise_alerts(&input, &default_rules()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].metric, MetricId::GatewayTemp);
        assert_eq!(events[0].observed, 75.5);
        assert_eq!(events[1].metric, MetricId::DataTimeout);
        assert_eq!(events[1].observed, 45.0);
        // Non-decreasing timestamps within one call.
        assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn test_worst_sample_in_series_drives_the_event() {
        let events = raise_alerts(&window(&[62.0, 95.0, 71.0]), &default_rules()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].observed, 95.0);
        assert_eq!(events[0].priority, 1);
    }

    #[test]
    fn test_empty_hr_series_raises_no_hr_events() {
        let events = raise_alerts(&window(&[]), &default_rules()).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn test_priority_zero_rule_is_rejected() {
        let rules = vec![AlertRule {
            metric: MetricId::HrBpm,
            threshold: 10.0,
            priority: 0,
            direction: Direction::Above,
        }];
        assert!(matches!(
            raise_alerts(&window(&[50.0]), &rules),
            Err(TriageError::InvalidParameter(_))
        ));
    }

    #[test]
    fn test_event_log_json_has_sorted_keys() {
        let event = AlertEvent {
            priority: 3,
            metric: MetricId::HrBpm,
            observed: 130.0,
            timestamp: 42,
            source: "gw-1".into(),
        };
        let json = event.to_log_json();
        assert_eq!(
            json,
            r#"{"metric":"hr_bpm","observed":130.0,"priority":3,"source":"gw-1","timestamp":42}"#
        );
    }

    #[test]
    fn test_below_direction_rule() {
        let rules = vec![AlertRule {
            metric: MetricId::HrBpm,
            threshold: 40.0,
            priority: 2,
            direction: Direction::Below,
        }];
        let events = raise_alerts(&window(&[35.0, 80.0]), &rules).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].observed, 35.0);
        assert_eq!(events[0].priority, 2);
    }
}
