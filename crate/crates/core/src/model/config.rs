use serde::{Deserialize, Serialize};

use crate::dual::DualMode;
use crate::error::{Error, Result};

/// Architecture and ablation switches. Field names double as the keys of the
/// flat configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Total node/edge representation width; each directional branch gets half.
    pub hidden: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    /// Width of the time encoding; 0 means "same as the branch width".
    pub time_dim: usize,
    pub classifier_hidden: usize,
    pub node_features: usize,
    pub edge_features: usize,
    pub use_dual: bool,
    pub use_time_encoding: bool,
    pub use_cross_query: bool,
    pub use_causal_pruning: bool,
    pub dual_mode: DualMode,
    /// When false the outgoing node branch sees no neighbors (in-edges-only
    /// message passing).
    pub use_out_branch: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            layers: 2,
            ff_hidden: 512,
            time_dim: 0,
            classifier_hidden: 128,
            node_features: 1,
            edge_features: 1,
            use_dual: true,
            use_time_encoding: true,
            use_cross_query: true,
            use_causal_pruning: true,
            dual_mode: DualMode::Augmented,
            use_out_branch: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Branch width `hidden / 2`.
    pub fn branch_width(&self) -> usize {
        self.hidden / 2
    }

    /// Effective time-encoding width (0 when time encoding is off).
    pub fn time_width(&self) -> usize {
        if !self.use_time_encoding {
            0
        } else if self.time_dim == 0 {
            self.branch_width()
        } else {
            self.time_dim
        }
    }

    /// Input width of the classifier head.
    pub fn classifier_input(&self) -> usize {
        if self.use_cross_query {
            5 * self.hidden
        } else {
            3 * self.hidden
        }
    }

    /// The "reduced" variant: no dual graph, no cross-query attention.
    pub fn reduced(&self) -> Self {
        Self {
            use_dual: false,
            use_cross_query: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden < 2 || !self.hidden.is_multiple_of(2) {
            return Err(Error::Config(format!("hidden must be even and >= 2, got {}", self.hidden)));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.ff_hidden == 0 || self.classifier_hidden == 0 {
            return Err(Error::Config("ff_hidden and classifier_hidden must be positive".into()));
        }
        if self.use_time_encoding && !self.time_width().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time encoding width must be even, got {}",
                self.time_width()
            )));
        }
        if !self.use_dual && self.dual_mode == DualMode::PlainLine {
            return Err(Error::Config("dual_mode = plain_line requires use_dual = true".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_setup() {
        let c = ModelConfig::default();
        assert_eq!(c.hidden, 128);
        assert_eq!(c.branch_width(), 64);
        assert_eq!(c.layers, 2);
        assert_eq!(c.ff_hidden, 512);
        assert_eq!(c.time_width(), 64);
        assert_eq!(c.classifier_input(), 640);
        c.validate().unwrap();
    }

    #[test]
    fn reduced_drops_cross_query_width() {
        let c = ModelConfig::default().reduced();
        assert_eq!(c.classifier_input(), 3 * 128);
        assert!(!c.use_dual);
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let odd = ModelConfig {
            hidden: 7,
            ..Default::default()
        };
        assert!(odd.validate().is_err());
        let plain_without_dual = ModelConfig {
            use_dual: false,
            dual_mode: DualMode::PlainLine,
            ..Default::default()
        };
        assert!(plain_without_dual.validate().is_err());
        let odd_time = ModelConfig {
            time_dim: 3,
            ..Default::default()
        };
        assert!(odd_time.validate().is_err());
        let no_time = ModelConfig {
            time_dim: 3,
            use_time_encoding: false,
            ..Default::default()
        };
        assert!(no_time.validate().is_ok());
        assert_eq!(no_time.time_width(), 0);
    }
}
