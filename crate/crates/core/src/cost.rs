//! Multiply-accumulate, parameter, feature-map and receptive-field counts
//! for stacks of stride-1 convolutions on the LR or HR grid.

use crate::conv2d::Space;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerConfig {
    pub c_in: usize,
    pub c_out: usize,
    /// Square kernel size.
    pub k: usize,
    pub space: Space,
}

impl LayerConfig {
    pub fn new(c_in: usize, c_out: usize, k: usize, space: Space) -> Self {
        LayerConfig {
            c_in,
            c_out,
            k,
            space,
        }
    }

    pub fn lr(c_in: usize, c_out: usize, k: usize) -> Self {
        Self::new(c_in, c_out, k, Space::Lr)
    }

    pub fn hr(c_in: usize, c_out: usize, k: usize) -> Self {
        Self::new(c_in, c_out, k, Space::Hr)
    }

    pub fn params(&self) -> u64 {
        (self.c_out * self.c_in * self.k * self.k) as u64
    }
}

/// Layers plus the HR reference frame `width x height` and ratio `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    layers: Vec<LayerConfig>,
    ratio: usize,
    width: usize,
    height: usize,
}

impl NetworkConfig {
    pub fn new(layers: Vec<LayerConfig>, ratio: usize, width: usize, height: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        if ratio == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidArgument(
                "ratio, width and height must be positive".into(),
            ));
        }
        if let Some(n) = layers
            .iter()
            .position(|l| l.c_in == 0 || l.c_out == 0 || l.k == 0)
        {
            return Err(Error::InvalidArgument(format!("layer {n} has a zero dimension")));
        }
        if layers.iter().any(|l| l.space == Space::Lr) {
            for (what, value) in [("width", width), ("height", height)] {
                if value % ratio != 0 {
                    return Err(Error::NotDivisible {
                        what,
                        value,
                        divisor: ratio,
                    });
                }
            }
        }
        Ok(NetworkConfig {
            layers,
            ratio,
            width,
            height,
        })
    }

    /// `l` copies of one layer.
    pub fn uniform(layer: LayerConfig, depth: usize, ratio: usize, width: usize, height: usize) -> Result<Self> {
        Self::new(vec![layer; depth], ratio, width, height)
    }

    pub fn layers(&self) -> &[LayerConfig] {
        &self.layers
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Output pixels per channel for a layer living in `space`.
    pub fn spatial_size(&self, space: Space) -> u64 {
        match space {
            Space::Hr => (self.width * self.height) as u64,
            Space::Lr => ((self.width / self.ratio) * (self.height / self.ratio)) as u64,
        }
    }
}

pub fn mac_count(net: &NetworkConfig) -> u64 {
    net.layers
        .iter()
        .map(|l| l.params() * net.spatial_size(l.space))
        .sum()
}

/// Weights only; no biases.
pub fn param_count(net: &NetworkConfig) -> u64 {
    net.layers.iter().map(LayerConfig::params).sum()
}

/// Total feature-map elements produced by all layers.
pub fn info_retained(net: &NetworkConfig) -> u64 {
    net.layers
        .iter()
        .map(|l| l.c_out as u64 * net.spatial_size(l.space))
        .sum()
}

/// Receptive field in original LR pixels: `1 + sum(span - 1)`, where an LR
/// layer spans `k` pixels and an HR layer spans `ceil(k / r)`.
pub fn receptive_field_lr(net: &NetworkConfig) -> usize {
    1 + net
        .layers
        .iter()
        .map(|l| match l.space {
            Space::Lr => l.k - 1,
            Space::Hr => l.k.div_ceil(net.ratio) - 1,
        })
        .sum::<usize>()
}

/// The HR network with the same MAC budget: channels divided by `r^2`,
/// kernels multiplied by `r`.
pub fn matched_hr_config(lr: &NetworkConfig) -> Result<NetworkConfig> {
    let r2 = lr.ratio * lr.ratio;
    let layers = lr
        .layers
        .iter()
        .map(|l| {
            if l.space != Space::Lr {
                return Err(Error::InvalidArgument("matched config expects LR layers".into()));
            }
            for (what, value) in [("input channels", l.c_in), ("output channels", l.c_out)] {
                if value % r2 != 0 {
                    return Err(Error::NotDivisible {
                        what,
                        value,
                        divisor: r2,
                    });
                }
            }
            Ok(LayerConfig::hr(l.c_in / r2, l.c_out / r2, l.k * lr.ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkConfig::new(layers, lr.ratio, lr.width, lr.height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_budget_example() {
        let lr = NetworkConfig::uniform(LayerConfig::lr(32, 32, 3), 1, 2, 16, 16).unwrap();
        let hr = NetworkConfig::uniform(LayerConfig::hr(8, 8, 6), 1, 2, 16, 16).unwrap();
        assert_eq!(mac_count(&lr), 589_824);
        assert_eq!(mac_count(&hr), 589_824);
        assert_eq!(matched_hr_config(&lr).unwrap(), hr);
    }

    #[test]
    fn unit_cases() {
        let net = NetworkConfig::uniform(LayerConfig::hr(1, 1, 1), 1, 1, 1, 1).unwrap();
        assert_eq!(mac_count(&net), 1);
        assert_eq!(param_count(&net), 1);
        assert_eq!(receptive_field_lr(&net), 1);
    }

    #[test]
    fn params_per_layer() {
        for l in 1..=4 {
            let lr = NetworkConfig::uniform(LayerConfig::lr(32, 32, 3), l, 2, 8, 8).unwrap();
            let hr = matched_hr_config(&lr).unwrap();
            assert_eq!(param_count(&lr), 9216 * l as u64);
            assert_eq!(param_count(&hr), 2304 * l as u64);
        }
    }

    #[test]
    fn info_example() {
        let lr = NetworkConfig::uniform(LayerConfig::lr(32, 32, 3), 1, 2, 4, 4).unwrap();
        assert_eq!(info_retained(&lr), 128);
        assert_eq!(info_retained(&matched_hr_config(&lr).unwrap()), 128);
    }

    #[test]
    fn receptive_fields() {
        let lr = NetworkConfig::uniform(LayerConfig::lr(4, 4, 3), 1, 2, 4, 4).unwrap();
        let hr = NetworkConfig::uniform(LayerConfig::hr(1, 1, 6), 1, 2, 4, 4).unwrap();
        assert_eq!(receptive_field_lr(&lr), 3);
        assert_eq!(receptive_field_lr(&hr), 3);
    }

    #[test]
    fn unit_ratio_is_unchanged() {
        let lr = NetworkConfig::uniform(LayerConfig::lr(5, 7, 3), 2, 1, 5, 3).unwrap();
        let hr = matched_hr_config(&lr).unwrap();
        assert_eq!(hr.layers()[0], LayerConfig::hr(5, 7, 3));
        assert_eq!(mac_count(&hr), mac_count(&lr));
    }

    #[test]
    fn invalid_configs() {
        assert!(NetworkConfig::new(vec![], 2, 4, 4).is_err());
        assert!(NetworkConfig::uniform(LayerConfig::lr(4, 4, 3), 1, 2, 5, 4).is_err());
        assert!(NetworkConfig::uniform(LayerConfig::hr(4, 4, 3), 1, 2, 5, 4).is_ok());
        assert!(NetworkConfig::uniform(LayerConfig::lr(0, 4, 3), 1, 2, 4, 4).is_err());
        let odd = NetworkConfig::uniform(LayerConfig::lr(6, 8, 3), 1, 2, 4, 4).unwrap();
        assert!(matches!(matched_hr_config(&odd), Err(Error::NotDivisible { .. })));
    }
}
