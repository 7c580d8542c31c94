"""Network drops on a wrap-around square and large-scale fading.

Urban-microcell path loss, per-AP spatially correlated shadowing across
users, and assembly of per-path large-scale gains beta[p, q, i].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SHADOW_STD_DB = 4.0
DECORRELATION_M = 9.0
CHOL_JITTER = 1e-9


@dataclass(frozen=True)
class Topology:
    ap_positions: np.ndarray  # (M_a, 2) metres
    user_positions: np.ndarray  # (K_u, 2) metres
    side: float = 1000.0

    @property
    def num_aps(self) -> int:
        return len(self.ap_positions)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    def ap_user_distances(self) -> np.ndarray:
        return torus_distance(self.ap_positions[:, None, :], self.user_positions[None, :, :], self.side)

    def user_user_distances(self) -> np.ndarray:
        return torus_distance(self.user_positions[:, None, :], self.user_positions[None, :, :], self.side)


@dataclass(frozen=True)
class LargeScaleFading:
    beta: np.ndarray  # (M_a, K_u, L) linear
    shadow_db: np.ndarray  # (M_a, K_u)


def torus_distance(a, b, side: float):
    """Euclidean distance on the torus of the given side length; equals the
    minimum over the 3x3 shifted images."""
    d = np.abs(np.asarray(a, float) - np.asarray(b, float)) % side
    d = np.minimum(d, side - d)
    return np.sqrt(np.sum(d**2, axis=-1))


def sample_topology(num_aps: int, num_users: int, side: float, rng: np.random.Generator) -> Topology:
    if num_aps < 1 or num_users < 1 or side <= 0:
        raise ValueError("need at least one AP, one user and a positive side")
    aps = rng.uniform(0.0, side, size=(num_aps, 2))
    users = rng.uniform(0.0, side, size=(num_users, 2))
    return Topology(aps, users, float(side))


def path_loss_db(d):
    """-30.5 - 36.7 log10(d / 1 m), with d clamped below at 1 m."""
    return -30.5 - 36.7 * np.log10(np.maximum(np.asarray(d, float), 1.0))


def shadow_covariance(user_distances: np.ndarray, std_db: float = SHADOW_STD_DB,
                      decorrelation: float = DECORRELATION_M) -> np.ndarray:
    return std_db**2 * 2.0 ** (-user_distances / decorrelation)


def sample_shadowing(topology: Topology, rng: np.random.Generator, std_db: float = SHADOW_STD_DB,
                     decorrelation: float = DECORRELATION_M) -> np.ndarray:
    """Shadowing in dB, shape (M_a, K_u): correlated across users at the same
    AP, independent across APs."""
    C = shadow_covariance(topology.user_user_distances(), std_db, decorrelation)
    C = 0.5 * (C + C.T)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        try:
            L = np.linalg.cholesky(C + CHOL_JITTER * std_db**2 * np.eye(len(C)))
        except np.linalg.LinAlgError as exc:
            eig = np.linalg.eigvalsh(C).min()
            raise ValueError(f"shadowing covariance not PSD (min eigenvalue {eig:.3e})") from exc
    z = rng.standard_normal((topology.num_aps, topology.num_users))
    return z @ L.T


BETA_MODES = ("split", "profile", "uniform", "unit")


def assemble_beta(topology: Topology, shadow_db: np.ndarray, num_paths: int,
                  mode: str = "split", tap_powers_db=None) -> LargeScaleFading:
    """Per-path large-scale gains.

    split    beta_pq / L on every path (default)
    profile  beta_pq weighted by normalized tap powers of the profile
    uniform  1/L on every path, no geometry (analytical regime)
    unit     1 on every path
    """
    Ma, Ku = topology.num_aps, topology.num_users
    L = num_paths
    if mode == "uniform":
        return LargeScaleFading(np.full((Ma, Ku, L), 1.0 / L), np.zeros((Ma, Ku)))
    if mode == "unit":
        return LargeScaleFading(np.ones((Ma, Ku, L)), np.zeros((Ma, Ku)))
    pair = 10 ** (path_loss_db(topology.ap_user_distances()) / 10) * 10 ** (shadow_db / 10)
    if mode == "split":
        w = np.full(L, 1.0 / L)
    elif mode == "profile":
        if tap_powers_db is None or len(tap_powers_db) != L:
            raise ValueError("profile mode needs one power per tap")
        w = 10 ** (np.asarray(tap_powers_db, float) / 10)
        w = w / w.sum()
    else:
        raise ValueError(f"unknown beta mode {mode!r}; expected one of {BETA_MODES}")
    return LargeScaleFading(pair[:, :, None] * w, np.asarray(shadow_db, float))


def export_topology(topology: Topology, path) -> None:
    """Plain-text table: header `role x y`, one node per line."""
    lines = [f"# side {float(topology.side)!r}", "role x y"]
    lines += [f"ap {float(x)!r} {float(y)!r}" for x, y in topology.ap_positions]
    lines += [f"user {float(x)!r} {float(y)!r}" for x, y in topology.user_positions]
    Path(path).write_text("\n".join(lines) + "\n")


def import_topology(path, side: float | None = None) -> Topology:
    aps, users = [], []
    file_side = 1000.0
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "side":
                file_side = float(parts[1])
            continue
        role, *xy = line.split()
        if role == "role":
            continue
        if len(xy) != 2:
            raise ValueError(f"malformed topology row: {raw!r}")
        pt = (float(xy[0]), float(xy[1]))
        if role == "ap":
            aps.append(pt)
        elif role == "user":
            users.append(pt)
        else:
            raise ValueError(f"unknown role {role!r}")
    return Topology(np.array(aps, float).reshape(-1, 2), np.array(users, float).reshape(-1, 2),
                    side if side is not None else file_side)
