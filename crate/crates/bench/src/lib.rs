//! Fixtures shared by the criterion benchmarks in `benches/`.

use dualirs::channel_model::{cascade, gen_channels, CascadedChannelSet, ChannelRealization};
use dualirs::SystemConfig;

/// One realization and its cascaded CSI.
pub struct Fixture {
    pub config: SystemConfig,
    pub real: ChannelRealization,
    pub truth: CascadedChannelSet,
}

pub fn fixture(n: usize, m: usize, k: usize) -> Fixture {
    let config = SystemConfig {
        n,
        m1: m,
        m2: m,
        k,
        gamma0_db: 0.0,
        alpha_near: 0.0,
        alpha_far: 0.0,
        ..SystemConfig::default()
    };
    let real = gen_channels(&config, 0).expect("valid bench config");
    let truth = cascade(&real).expect("non-degenerate draw");
    Fixture {
        config,
        real,
        truth,
    }
}

/// Desk scale: N = 8, M1 = M2 = 8, K = 3.
pub fn desk() -> Fixture {
    fixture(8, 8, 3)
}

/// Full scale: N = 45, M1 = M2 = 20, K = 10.
pub fn full() -> Fixture {
    fixture(45, 20, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shape() {
        let f = desk();
        assert_eq!((f.real.n(), f.real.m1(), f.real.k()), (8, 8, 3));
        assert_eq!(f.truth.users.len(), 3);
    }
}
