//! Structured observation features and their fusion into one input vector.

use rand::Rng;
use thiserror::Error;

use crate::env::{Action, Pose, Position, PATCH_SIZE};
use crate::hier::{plan_feature, Plan, PLAN_FEATURE_WIDTH};
use crate::scalar::Scalar;

pub const PATCH_WIDTH: usize = PATCH_SIZE * PATCH_SIZE;
pub const GOAL_WIDTH: usize = 3;
pub const ACTION_WIDTH: usize = Action::COUNT;
/// `121 + 3 + 10 + 4`.
pub const FEATURE_WIDTH: usize = PATCH_WIDTH + GOAL_WIDTH + PLAN_FEATURE_WIDTH + ACTION_WIDTH;
/// Geodesic distance is divided by this and clipped to 1.
pub const GOAL_DISTANCE_SCALE_M: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("{field} has width {found}, expected {expected}")]
    ShapeMismatch { field: &'static str, expected: usize, found: usize },
}

/// Navigation channel: `sin`, `cos` of the goal bearing relative to the
/// heading and the clipped normalized geodesic distance.
///
/// Unreachable goals report distance 1; a goal at the agent's position has
/// bearing 0.
pub fn goal_vec<S: Scalar>(pose: &Pose, goal: Position, geodesic_m: f64) -> [S; GOAL_WIDTH] {
    let (dx, dy) = (goal.x - pose.x, goal.y - pose.y);
    let bearing = if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        dy.atan2(dx) - f64::from(pose.heading.degrees()).to_radians()
    };
    let d = if geodesic_m.is_finite() { (geodesic_m / GOAL_DISTANCE_SCALE_M).clamp(0.0, 1.0) } else { 1.0 };
    [S::lit(bearing.sin()), S::lit(bearing.cos()), S::lit(d)]
}

/// Concatenate `patch | goal | plan | prev_action one-hot` into `out`.
pub fn fuse_into<S: Scalar>(
    patch: &[u8],
    goal: &[S],
    plan: &[S],
    prev_action: Option<Action>,
    out: &mut [S],
) -> Result<(), FeatureError> {
    check("ego_patch", PATCH_WIDTH, patch.len())?;
    check("goal_vec", GOAL_WIDTH, goal.len())?;
    check("plan_feat", PLAN_FEATURE_WIDTH, plan.len())?;
    check("output", FEATURE_WIDTH, out.len())?;
    let (p, rest) = out.split_at_mut(PATCH_WIDTH);
    for (o, &v) in p.iter_mut().zip(patch) {
        *o = if v != 0 { S::one() } else { S::zero() };
    }
    let (g, rest) = rest.split_at_mut(GOAL_WIDTH);
    g.copy_from_slice(goal);
    let (pl, a) = rest.split_at_mut(PLAN_FEATURE_WIDTH);
    pl.copy_from_slice(plan);
    a.fill(S::zero());
    if let Some(act) = prev_action {
        a[act.index()] = S::one();
    }
    Ok(())
}

pub fn fuse<S: Scalar>(patch: &[u8], goal: &[S], plan: &[S], prev_action: Option<Action>) -> Result<Vec<S>, FeatureError> {
    let mut out = vec![S::zero(); FEATURE_WIDTH];
    fuse_into(patch, goal, plan, prev_action, &mut out)?;
    Ok(out)
}

fn check(field: &'static str, expected: usize, found: usize) -> Result<(), FeatureError> {
    if expected == found {
        Ok(())
    } else {
        Err(FeatureError::ShapeMismatch { field, expected, found })
    }
}

/// Everything the executor sees at one step, before fusion.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub patch: [u8; PATCH_WIDTH],
    pub pose: Pose,
    pub goal: Position,
    pub geodesic_m: f64,
    pub plan: &'a Plan,
    pub step: u32,
    pub k: u32,
    pub prev_action: Option<Action>,
}

impl Observation<'_> {
    pub fn features_into<S: Scalar>(&self, out: &mut [S]) {
        let goal: [S; GOAL_WIDTH] = goal_vec(&self.pose, self.goal, self.geodesic_m);
        let plan: [S; PLAN_FEATURE_WIDTH] = plan_feature(self.plan, &self.pose, self.step, self.k);
        fuse_into(&self.patch, &goal, &plan, self.prev_action, out).expect("fixed widths");
    }
}

/// Zero each patch entry of a fused vector independently with probability `p`.
pub fn patch_dropout<S: Scalar, R: Rng>(fused: &mut [S], p: f64, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    for v in fused[..PATCH_WIDTH].iter_mut() {
        if rng.gen_bool(p) {
            *v = S::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Heading;
    use crate::hier::PlanToken;
    use proptest::prelude::*;

    #[test]
    fn zero_inputs_give_zero_vector() {
        let f = fuse::<f64>(&[0; PATCH_WIDTH], &[0.0; 3], &[0.0; 10], None).unwrap();
        assert_eq!(f.len(), 138);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn explore_only_lights_its_index() {
        let pose = Pose::default();
        let plan: [f64; 10] = plan_feature(&Plan::explore(0), &pose, 0, 15);
        let f = fuse(&[0; PATCH_WIDTH], &[0.0; 3], &plan, None).unwrap();
        let nz: Vec<usize> = f.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(nz, vec![PATCH_WIDTH + GOAL_WIDTH + PlanToken::Explore.index()]);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let err = fuse::<f32>(&[0; 120], &[0.0; 3], &[0.0; 10], None).unwrap_err();
        assert_eq!(err, FeatureError::ShapeMismatch { field: "ego_patch", expected: 121, found: 120 });
    }

    #[test]
    fn goal_straight_ahead() {
        let pose = Pose::new(0.0, 0.0, Heading::from_degrees(90).unwrap());
        let g: [f64; 3] = goal_vec(&pose, Position::new(0.0, 2.0), 2.0);
        assert!(g[0].abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
        assert_eq!(g[2], 0.2);
        let far: [f64; 3] = goal_vec(&pose, Position::new(0.0, 2.0), 25.0);
        assert_eq!(far[2], 1.0);
    }

    proptest! {
        #[test]
        fn fused_width_and_ranges(
            bits in proptest::collection::vec(0u8..2, PATCH_WIDTH),
            x in -5.0f64..5.0, y in -5.0f64..5.0, h in 0u8..12, d in 0.0f64..50.0, a in 0usize..4,
        ) {
            let pose = Pose::new(0.0, 0.0, Heading::from_index(h));
            let g: [f64; 3] = goal_vec(&pose, Position::new(x, y), d);
            let plan: [f64; 10] = plan_feature(&Plan::explore(0), &pose, 3, 15);
            let f = fuse(&bits, &g, &plan, Action::from_index(a)).unwrap();
            prop_assert_eq!(f.len(), FEATURE_WIDTH);
            prop_assert!(f.iter().all(|v| v.is_finite()));
            prop_assert!(f[..PATCH_WIDTH].iter().all(|&v| v == 0.0 || v == 1.0));
            prop_assert_eq!(f[FEATURE_WIDTH - ACTION_WIDTH..].iter().sum::<f64>(), 1.0);
        }
    }
}
