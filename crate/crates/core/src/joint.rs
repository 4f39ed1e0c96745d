//! Mixed-radix indexing of joint states and joint actions.
//!
//! Agent 0 is the most significant digit. A joint state-action profile is
//! flattened as `state_index * num_joint_actions + action_index`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSpace {
    state_radices: Vec<usize>,
    action_radices: Vec<usize>,
}

impl JointSpace {
    pub fn new(state_radices: Vec<usize>, action_radices: Vec<usize>) -> Self {
        assert_eq!(state_radices.len(), action_radices.len());
        Self {
            state_radices,
            action_radices,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.state_radices.len()
    }

    pub fn state_radices(&self) -> &[usize] {
        &self.state_radices
    }

    pub fn action_radices(&self) -> &[usize] {
        &self.action_radices
    }

    pub fn num_joint_states(&self) -> usize {
        self.state_radices.iter().product()
    }

    pub fn num_joint_actions(&self) -> usize {
        self.action_radices.iter().product()
    }

    pub fn num_profiles(&self) -> usize {
        self.num_joint_states() * self.num_joint_actions()
    }

    /// Product of all radices as an overflow-free count, checked against `cap`.
    pub fn checked_profile_count(&self, cap: u128) -> Result<usize> {
        let size = self
            .state_radices
            .iter()
            .chain(&self.action_radices)
            .fold(1u128, |acc, &r| acc.saturating_mul(r as u128));
        if size > cap {
            return Err(Error::CapExceeded {
                what: format!(
                    "joint state-action space (states {:?}, actions {:?})",
                    self.state_radices, self.action_radices
                ),
                size,
                cap,
            });
        }
        Ok(size as usize)
    }

    pub fn state_index(&self, states: &[usize]) -> usize {
        encode(&self.state_radices, states)
    }

    pub fn action_index(&self, actions: &[usize]) -> usize {
        encode(&self.action_radices, actions)
    }

    pub fn profile_index(&self, states: &[usize], actions: &[usize]) -> usize {
        self.state_index(states) * self.num_joint_actions() + self.action_index(actions)
    }

    pub fn decode_state(&self, index: usize, out: &mut [usize]) {
        decode(&self.state_radices, index, out);
    }

    pub fn decode_action(&self, index: usize, out: &mut [usize]) {
        decode(&self.action_radices, index, out);
    }

    pub fn decode_profile(&self, index: usize, states: &mut [usize], actions: &mut [usize]) {
        let na = self.num_joint_actions();
        self.decode_state(index / na, states);
        self.decode_action(index % na, actions);
    }
}

pub fn encode(radices: &[usize], digits: &[usize]) -> usize {
    radices
        .iter()
        .zip(digits)
        .fold(0, |acc, (&r, &d)| acc * r + d)
}

pub fn decode(radices: &[usize], mut index: usize, out: &mut [usize]) {
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = index % r;
        index /= r;
    }
}

/// Advances `digits` to the next combination; returns false after the last one.
pub fn next_combo(radices: &[usize], digits: &mut [usize]) -> bool {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < radices[k] {
            return true;
        }
        digits[k] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let space = JointSpace::new(vec![3, 2], vec![2, 4]);
        let mut s = [0; 2];
        let mut a = [0; 2];
        for idx in 0..space.num_profiles() {
            space.decode_profile(idx, &mut s, &mut a);
            assert_eq!(space.profile_index(&s, &a), idx);
        }
    }

    #[test]
    fn odometer_visits_every_combo_once() {
        let radices = [2, 3, 1];
        let mut digits = [0; 3];
        let mut count = 1;
        while next_combo(&radices, &mut digits) {
            count += 1;
        }
        assert_eq!(count, 6);
        assert_eq!(digits, [0, 0, 0]);
    }

    #[test]
    fn cap_is_enforced() {
        let space = JointSpace::new(vec![49; 3], vec![4; 3]);
        assert!(space.checked_profile_count(1_000_000).is_err());
        assert_eq!(space.checked_profile_count(u128::MAX).unwrap(), 49usize.pow(3) * 64);
    }
}
