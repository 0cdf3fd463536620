"""Long-horizon tracking: keyframe chaining and single-loop closure.

Every incoming frame is registered against the latest keyframe; the
frame's absolute pose is that registration composed with the aggregated
keyframe chain, so drift grows with the number of keyframe handoffs
rather than the number of frames. A frame-to-frame registration runs in
parallel as a consistency probe: when the keyframe estimate disagrees
with the composed frame-to-frame prediction, the previous frame is
promoted to a new keyframe.

Absolute poses map first-frame coordinates into the current frame, the
same convention as registration results and ground-truth CSVs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateHessianError,
    InsufficientOverlapError,
    InvalidLoopError,
)
from .maps import TactileFrame
from .se3 import (
    RigidTransform,
    compose,
    identity,
    invert,
    se3_exp,
    se3_log,
    transform_distance,
)
from .solver import RegistrationResult, SolverConfig, register


@dataclass(frozen=True)
class KeyframePolicy:
    """Promotion thresholds for the keyframe consistency test."""

    rot_threshold: float = 0.02  # radians
    trans_threshold: float = 0.15  # millimeters

    def __post_init__(self):
        if not (self.rot_threshold > 0 and self.trans_threshold > 0):
            raise ValueError("thresholds must be positive")

    def exceeded(self, rot: float, trans: float) -> bool:
        return rot > self.rot_threshold or trans > self.trans_threshold


@dataclass
class TrackerState:
    """Mutable tracking state; single-owner, updated sequentially."""

    keyframe: TactileFrame
    keyframe_index: int
    chain_transform: RigidTransform  # first frame -> latest keyframe
    prev_frame: TactileFrame
    prev_to_key: RigidTransform  # keyframe coords -> previous-frame coords
    last_step: RigidTransform  # previous frame-to-frame motion
    keyframe_indices: list = field(default_factory=list)
    pose_log: list = field(default_factory=list)
    lost_flags: list = field(default_factory=list)
    step_log: list = field(default_factory=list)  # per-frame ^cT_p

    @property
    def frames_processed(self) -> int:
        return len(self.pose_log)


def init_tracker(first_frame: TactileFrame) -> TrackerState:
    return TrackerState(
        keyframe=first_frame,
        keyframe_index=0,
        chain_transform=identity(),
        prev_frame=first_frame,
        prev_to_key=identity(),
        last_step=identity(),
        keyframe_indices=[0],
        pose_log=[identity()],
        lost_flags=[False],
        step_log=[identity()],
    )


def track_step(
    state: TrackerState,
    frame: TactileFrame,
    policy: KeyframePolicy = KeyframePolicy(),
    config: SolverConfig = SolverConfig(),
) -> RigidTransform:
    """Process one frame; returns its pose and updates state in place.

    Registration failures (overlap loss, degenerate contact) mark the
    frame as tracking-lost: its pose freezes at the last good estimate
    and the keyframe relationships are left untouched.
    """
    try:
        # Initialize the keyframe leg from the motion-predicted pose.
        init_key = compose(state.last_step, state.prev_to_key)
        to_key = register(state.keyframe, frame, init_key, config)
        to_prev = register(state.prev_frame, frame, None, config)
    except (InsufficientOverlapError, DegenerateHessianError):
        state.pose_log.append(state.pose_log[-1])
        state.lost_flags.append(True)
        state.step_log.append(identity())
        return state.pose_log[-1]

    c_t_k = to_key.transform
    c_t_p = to_prev.transform
    implied_p_t_k = compose(invert(c_t_p), c_t_k)
    rot_err, trans_err = transform_distance(implied_p_t_k, state.prev_to_key)

    if policy.exceeded(rot_err, trans_err):
        # Promote the previous frame; its keyframe-relative transform was
        # estimated while registration was still consistent.
        state.chain_transform = compose(state.prev_to_key, state.chain_transform)
        state.keyframe = state.prev_frame
        state.keyframe_index = state.frames_processed - 1
        state.keyframe_indices.append(state.keyframe_index)
        # Registration against the new keyframe is exactly the
        # frame-to-frame registration already computed.
        c_t_k = c_t_p

    pose = compose(c_t_k, state.chain_transform)
    state.pose_log.append(pose)
    state.lost_flags.append(False)
    state.step_log.append(c_t_p)
    state.prev_frame = frame
    state.prev_to_key = c_t_k
    state.last_step = c_t_p
    return pose


def track_stream(
    frames,
    policy: KeyframePolicy = KeyframePolicy(),
    config: SolverConfig = SolverConfig(),
) -> TrackerState:
    """Track an iterable of frames from scratch."""
    iterator = iter(frames)
    state = init_tracker(next(iterator))
    for frame in iterator:
        track_step(state, frame, policy, config)
    return state


def naive_chain(state: TrackerState) -> list[RigidTransform]:
    """Frame-to-frame composition of the tracked stream, for comparison
    against the keyframe-chained pose log."""
    poses = [identity()]
    for step in state.step_log[1:]:
        poses.append(compose(step, poses[-1]))
    return poses


def detect_loop_candidate(
    state: TrackerState, policy: KeyframePolicy = KeyframePolicy()
):
    """Index 0 when the latest pose re-entered the start region, else None."""
    if not state.pose_log:
        raise ValueError("pose log is empty")
    rot, trans = transform_distance(state.pose_log[-1], identity())
    if rot <= policy.rot_threshold and trans <= policy.trans_threshold:
        return 0
    return None


def loop_corrections(poses, loop_constraint, converged: bool = True):
    """Right-composition corrections exp((i/n) log E) per keyframe.

    E is the discrepancy between the chain-predicted last-to-first
    transform and the measured loop_constraint. Exposed separately so
    intermediate frames can inherit their governing keyframe's share.
    """
    if isinstance(loop_constraint, RegistrationResult):
        converged = loop_constraint.converged
        loop_constraint = loop_constraint.transform
    if not converged:
        raise InvalidLoopError("loop constraint registration did not converge")
    poses = list(poses)
    n = len(poses)
    if n < 2:
        raise ValueError("need at least two keyframes to close a loop")
    predicted = compose(poses[0], invert(poses[-1]))  # last -> first via chain
    log_e = se3_log(compose(predicted, invert(loop_constraint)))
    return [se3_exp(log_e * (i / n)) for i in range(n)]


def close_loop(poses, loop_constraint, converged: bool = True):
    """Distribute a single loop error evenly along a keyframe chain.

    poses: absolute keyframe poses (first-frame -> keyframe_i), first
    entry expected at identity. loop_constraint: measured transform
    taking last-keyframe coordinates into first-keyframe coordinates
    (a RegistrationResult or RigidTransform). With identical per-edge
    covariances, giving keyframe i the correction exp((i/n) log E) is
    the least-squares optimum for the n-edge cycle: every chain edge and
    the closing measurement edge absorb exp(log(E)/n) each, and the
    corrected last pose extended by the closing share meets the measured
    constraint exactly.
    """
    corrections = loop_corrections(poses, loop_constraint, converged)
    return [compose(pose, c) for pose, c in zip(poses, corrections)]
