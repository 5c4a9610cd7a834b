use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rules::{Violation, ViolationKind};

use super::{Difficulty, Persona};

/// A violation an opponent can see in someone else's speech.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibleViolation {
    pub violation: Violation,
    pub target_is_human: bool,
    /// 1-based position of this violation among all violations the target
    /// has committed this game.
    pub ordinal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeIntent {
    pub rule: ViolationKind,
    /// Index into the visible violations that triggered the challenge.
    pub index: usize,
}

/// Challenges the first visible violation that passes a Bernoulli draw with
/// probability `aggressiveness × multiplier`, skipping the human's first
/// `user_violation_grace` violations.
pub fn decide_challenge<R: Rng + ?Sized>(
    persona: &Persona,
    visible: &[VisibleViolation],
    difficulty: &Difficulty,
    rng: &mut R,
) -> Option<ChallengeIntent> {
    let p = difficulty.scaled(persona.challenge_aggressiveness);
    for (index, v) in visible.iter().enumerate() {
        if v.target_is_human && v.ordinal <= difficulty.user_violation_grace {
            continue;
        }
        if p > 0.0 && rng.random_bool(p) {
            return Some(ChallengeIntent {
                rule: v.violation.kind,
                index,
            });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselessChallenge {
    pub rule: ViolationKind,
    /// Offset into the opponent's speech at which to challenge.
    pub offset_ms: u64,
}

/// Decides once per opponent speech whether to bluff a challenge, and when.
pub fn plan_baseless_challenge<R: Rng + ?Sized>(
    persona: &Persona,
    difficulty: &Difficulty,
    speech_ms: u64,
    rng: &mut R,
) -> Option<BaselessChallenge> {
    let p = difficulty.scaled(persona.false_challenge_rate);
    if speech_ms == 0 || p == 0.0 || !rng.random_bool(p) {
        return None;
    }
    Some(BaselessChallenge {
        rule: ViolationKind::ALL[rng.random_range(0..3)],
        offset_ms: rng.random_range(0..speech_ms),
    })
}
