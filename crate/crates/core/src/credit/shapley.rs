use serde::{Deserialize, Serialize};

use super::{CreditError, CreditVector, Module};

/// Coalition values over {planner, tools, memory}, indexed by bit mask
/// (planner = 1, tools = 2, memory = 4).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFunction {
    values: [Option<f64>; 8],
}

impl CharacteristicFunction {
    pub fn from_fn(mut f: impl FnMut(u8) -> f64) -> Self {
        Self {
            values: std::array::from_fn(|m| Some(f(m as u8))),
        }
    }

    pub fn set(&mut self, mask: u8, value: f64) {
        self.values[usize::from(mask & 7)] = Some(value);
    }

    pub fn get(&self, mask: u8) -> Option<f64> {
        self.values[usize::from(mask & 7)]
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    fn require(&self, mask: u8) -> Result<f64, CreditError> {
        self.get(mask).ok_or(CreditError::MissingCoalition(mask))
    }

    /// Exact Shapley values in module order, unclipped.
    pub fn shapley_values(&self) -> Result<[f64; 3], CreditError> {
        // |S|!(n-|S|-1)!/n! for n = 3 and |S| = 0, 1, 2
        const W: [f64; 3] = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0];
        let mut phi = [0.0; 3];
        for m in Module::ALL {
            let bit = m.bit();
            let mut acc = 0.0;
            for s in 0u8..8 {
                if s & bit != 0 {
                    continue;
                }
                let gain = self.require(s | bit)? - self.require(s)?;
                acc += W[s.count_ones() as usize] * gain;
            }
            phi[m.index()] = acc;
        }
        Ok(phi)
    }
}

/// Shapley credit clipped into the credit range.
pub fn shapley_credit(v: &CharacteristicFunction) -> Result<CreditVector, CreditError> {
    v.shapley_values().map(CreditVector::from_array)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dummy_players() {
        let v = CharacteristicFunction::from_fn(|s| if s & 1 != 0 { 0.6 } else { 0.0 });
        let phi = v.shapley_values().unwrap();
        assert!((phi[0] - 0.6).abs() < 1e-15);
        assert_eq!(phi[1], 0.0);
        assert_eq!(phi[2], 0.0);
    }

    #[test]
    fn symmetric_game() {
        let v = CharacteristicFunction::from_fn(|s| s.count_ones() as f64 / 3.0);
        for p in v.shapley_values().unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn worked_game_efficiency() {
        // P = 1, T = 2, M = 4
        let table = [0.0, 0.2, 0.1, 0.5, 0.0, 0.3, 0.2, 0.6];
        let v = CharacteristicFunction::from_fn(|s| table[s as usize]);
        let phi = v.shapley_values().unwrap();
        assert!((phi.iter().sum::<f64>() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn missing_coalition_errors() {
        let mut v = CharacteristicFunction::default();
        for s in 0..7 {
            v.set(s, 0.1);
        }
        assert!(!v.is_complete());
        assert_eq!(v.shapley_values(), Err(CreditError::MissingCoalition(7)));
    }
}
