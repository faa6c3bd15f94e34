import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from vcsel_rs.errors import ValidationError
from vcsel_rs.geometry import Scene, los_geometry_batch
from vcsel_rs.optics import GainModel, link_gains


logger = logging.getLogger(__name__)

MAX_SUM_POWER = "max_sum_power"
MAX_MIN_GAIN = "max_min_gain"
BRANCH_POLICIES = (MAX_SUM_POWER, MAX_MIN_GAIN)


@dataclass(frozen=True, eq=False)
class BranchGains:
    gains: np.ndarray  # K x B x N optical gains
    users: np.ndarray
    model: GainModel
    responsivity_a_per_w: float
    element_power_w: np.ndarray

    @property
    def shape(self):
        return self.gains.shape


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    h: np.ndarray  # K x N, amps per unit transmit symbol
    selected_branch: np.ndarray
    model: GainModel
    received_power_w: np.ndarray

    @property
    def served(self):
        return np.any(self.h > 0.0, axis=1)

    @property
    def unserved_users(self):
        return np.flatnonzero(~self.served)

    @property
    def user_count(self):
        return self.h.shape[0]

    @property
    def element_count(self):
        return self.h.shape[1]


@dataclass(frozen=True)
class ConditionReport:
    rank: int
    condition_number: float
    min_row_norm: float

    @property
    def rank_deficient(self):
        return self.min_row_norm == 0.0 or self.condition_number == np.inf


def build_branch_gains(scene: Scene, users, model: GainModel) -> BranchGains:
    users = np.asarray(users, dtype=float).reshape(-1, 3)
    inside = scene.room.contains(users)
    if not np.all(inside):
        raise ValidationError("users outside the room or off the receiver plane: {}".format(
            np.flatnonzero(~inside).tolist()
        ))

    adr = scene.adr
    element_count = scene.element_count
    if len(users) == 0:
        gains = np.zeros((0, len(adr.branches), element_count))
    else:
        distance, cos_phi, sin_phi, cos_psi = los_geometry_batch(
            scene.element_positions, scene.boresights, users, adr.normals
        )
        gains = link_gains(
            model,
            distance[:, None, :],
            cos_phi[:, None, :],
            sin_phi[:, None, :],
            cos_psi,
            scene.beam_waists_m[None, None, :],
            scene.wavelengths_m[None, None, :],
            adr.areas_m2[None, :, None],
            adr.fovs_deg[None, :, None]
        )
    return BranchGains(
        gains=gains,
        users=users,
        model=model,
        responsivity_a_per_w=adr.responsivity_a_per_w,
        element_power_w=scene.optical_powers_w
    )


def _branch_scores(gains, policy):
    if policy == MAX_SUM_POWER:
        return np.sum(gains ** 2, axis=-1)
    if policy == MAX_MIN_GAIN:
        visible = gains > 0.0
        weakest = np.where(visible, gains, np.inf).min(axis=-1)
        return np.where(visible.any(axis=-1), weakest, 0.0)
    raise ValidationError("unknown branch policy {!r}, expected one of {}".format(policy, BRANCH_POLICIES))


def select_branch(gains: BranchGains, policy: str = MAX_SUM_POWER) -> ChannelMatrix:
    scores = _branch_scores(gains.gains, policy)
    # argmax returns the first maximum, so ties go to the lowest branch index
    selected = np.argmax(scores, axis=1) if len(scores) else np.zeros(0, dtype=int)
    rows = gains.gains[np.arange(len(selected)), selected, :]
    received_power = rows @ gains.element_power_w
    h = gains.responsivity_a_per_w * rows * gains.element_power_w[None, :]

    channel = ChannelMatrix(h=h, selected_branch=selected, model=gains.model, received_power_w=received_power)
    unserved = channel.unserved_users
    if len(unserved):
        logger.debug("Users without any visible element: %s", unserved.tolist())
    return channel


def condition_report(channel, user_subset: Optional[Sequence[int]] = None) -> ConditionReport:
    h = channel.h if isinstance(channel, ChannelMatrix) else np.asarray(channel, dtype=float)
    if user_subset is not None:
        user_subset = list(user_subset)
        if not user_subset:
            raise ValidationError("user_subset must not be empty")
        h = h[user_subset]
    singular_values = np.linalg.svd(h, compute_uv=False)
    rank = int(np.linalg.matrix_rank(h))
    if rank < min(h.shape):
        condition_number = np.inf
    else:
        condition_number = float(singular_values[0] / singular_values[-1])
    return ConditionReport(
        rank=rank,
        condition_number=condition_number,
        min_row_norm=float(np.linalg.norm(h, axis=1).min())
    )


def channel_to_frame(channel: ChannelMatrix) -> pd.DataFrame:
    """One row per user: selected branch, then the electrical gain to every element."""
    frame = pd.DataFrame(channel.h, columns=["n{}".format(n) for n in range(channel.element_count)])
    frame.insert(0, "branch", channel.selected_branch.astype(int))
    frame.insert(0, "user", np.arange(channel.user_count))
    return frame
