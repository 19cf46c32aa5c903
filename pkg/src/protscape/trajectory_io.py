"""Conformation trajectories: in-memory types, a plain-text format, synthetic generators.

The on-disk format (``PTRAJ v1``) is deliberately dumb: a one-line header,
the residue sequence, then one ``FRAME <time>`` block per conformation with
one ``x y z`` line per residue center. UTF-8, LF line endings, whitespace
separated. Files written by :func:`write_trajectory` parse back to the same
floats bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Canonical one-letter amino-acid codes, alphabetical. Channel order is frozen:
# feature channel c always means AMINO_ACIDS[c].
AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"

FORMAT_MAGIC = "PTRAJ v1"


class TrajectoryFormatError(ValueError):
    """Raised when trajectory text does not conform to the PTRAJ v1 format."""


@dataclass
class TrajectoryFrame:
    """One conformation: a time stamp and an (n, 3) array of residue centers."""

    time: float
    coords: np.ndarray

    def __post_init__(self):
        self.time = float(self.time)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise ValueError(
                f"coords must have shape (n, 3), got {self.coords.shape}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("coords contain non-finite values")

    @property
    def n_residues(self) -> int:
        return self.coords.shape[0]


@dataclass
class Trajectory:
    """An ordered list of frames sharing one residue sequence."""

    sequence: str
    frames: list[TrajectoryFrame] = field(default_factory=list)

    def __post_init__(self):
        if not self.sequence:
            raise ValueError("sequence must be non-empty")
        n = len(self.sequence)
        for k, fr in enumerate(self.frames):
            if fr.n_residues != n:
                raise ValueError(
                    f"frame {k} has {fr.n_residues} residues, sequence has {n}"
                )
            if k > 0 and fr.time <= self.frames[k - 1].time:
                raise ValueError(
                    f"frame {k} time {fr.time} does not increase past "
                    f"{self.frames[k - 1].time}"
                )

    @property
    def n_residues(self) -> int:
        return len(self.sequence)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def times(self) -> np.ndarray:
        return np.array([fr.time for fr in self.frames], dtype=np.float64)

    def coords_array(self) -> np.ndarray:
        """All coordinates stacked to shape (n_frames, n, 3)."""
        return np.stack([fr.coords for fr in self.frames], axis=0)


def _fmt(v: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(v))


def write_trajectory(traj: Trajectory) -> str:
    """Serialize a trajectory to PTRAJ v1 text."""
    lines = [
        f"{FORMAT_MAGIC} n={traj.n_residues} frames={traj.n_frames}",
        traj.sequence,
    ]
    for fr in traj.frames:
        lines.append(f"FRAME {_fmt(fr.time)}")
        for row in fr.coords:
            lines.append(" ".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_trajectory(traj))


def parse_trajectory(text: str) -> Trajectory:
    """Parse PTRAJ v1 text. Errors name the offending 1-based line."""
    lines = text.splitlines()
    if not lines:
        raise TrajectoryFormatError("line 1: empty input")
    header = lines[0].split()
    if (
        len(header) != 4
        or " ".join(header[:2]) != FORMAT_MAGIC
        or not header[2].startswith("n=")
        or not header[3].startswith("frames=")
    ):
        raise TrajectoryFormatError(
            f"line 1: expected '{FORMAT_MAGIC} n=<int> frames=<int>', got {lines[0]!r}"
        )
    try:
        n = int(header[2][2:])
        n_frames = int(header[3][7:])
    except ValueError as exc:
        raise TrajectoryFormatError(f"line 1: bad integer in header: {exc}") from None
    if n <= 0 or n_frames < 0:
        raise TrajectoryFormatError("line 1: n must be positive, frames non-negative")
    if len(lines) < 2:
        raise TrajectoryFormatError("line 2: missing sequence line")
    sequence = lines[1].strip()
    if len(sequence) != n:
        raise TrajectoryFormatError(
            f"line 2: sequence length {len(sequence)} does not match n={n}"
        )

    frames = []
    ln = 2  # 0-based index of the next unread line
    for k in range(n_frames):
        if ln >= len(lines):
            raise TrajectoryFormatError(
                f"line {ln + 1}: expected 'FRAME <t>' for frame {k}, got end of input"
            )
        parts = lines[ln].split()
        if len(parts) != 2 or parts[0] != "FRAME":
            raise TrajectoryFormatError(
                f"line {ln + 1}: expected 'FRAME <t>', got {lines[ln]!r}"
            )
        try:
            t = float(parts[1])
        except ValueError:
            raise TrajectoryFormatError(
                f"line {ln + 1}: bad time value {parts[1]!r}"
            ) from None
        ln += 1
        coords = np.empty((n, 3), dtype=np.float64)
        for i in range(n):
            if ln >= len(lines):
                raise TrajectoryFormatError(
                    f"line {ln + 1}: expected coordinate row, got end of input"
                )
            row = lines[ln].split()
            if len(row) != 3:
                raise TrajectoryFormatError(
                    f"line {ln + 1}: expected 3 coordinates, got {len(row)}"
                )
            try:
                coords[i] = [float(v) for v in row]
            except ValueError:
                raise TrajectoryFormatError(
                    f"line {ln + 1}: bad coordinate in {lines[ln]!r}"
                ) from None
            ln += 1
        try:
            frames.append(TrajectoryFrame(time=t, coords=coords))
        except ValueError as exc:
            raise TrajectoryFormatError(f"frame {k}: {exc}") from None
    for extra in lines[ln:]:
        if extra.strip():
            raise TrajectoryFormatError(
                f"line {ln + 1}: trailing content after last frame"
            )
        ln += 1
    return Trajectory(sequence=sequence, frames=frames)


def load_trajectory(path) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectory(fh.read())


def _round_robin_sequence(n: int) -> str:
    return "".join(AMINO_ACIDS[i % len(AMINO_ACIDS)] for i in range(n))


def hinge_angle(t, n_frames: int, theta_min: float, theta_max: float):
    """Hinge opening angle at frame t: sinusoidal sweep over one period."""
    t = np.asarray(t, dtype=np.float64)
    return theta_min + (theta_max - theta_min) * (1.0 + np.sin(2.0 * np.pi * t / n_frames)) / 2.0


def _hinge_coords(n_per_arm: int, theta: float) -> np.ndarray:
    # two rigid arms in the xy-plane joined at the origin, opening angle theta;
    # beads sit at radii 1..n_per_arm along each arm
    half = theta / 2.0
    up = np.array([np.cos(half), np.sin(half), 0.0])
    dn = np.array([np.cos(half), -np.sin(half), 0.0])
    radii = np.arange(1, n_per_arm + 1, dtype=np.float64)[:, None]
    return np.vstack([radii * up, radii * dn])


def tip_distance(n_per_arm: int, theta) -> np.ndarray:
    """Distance between the two arm-tip beads: 2 L sin(theta/2), L = n_per_arm."""
    return 2.0 * n_per_arm * np.sin(np.asarray(theta, dtype=np.float64) / 2.0)


def synth_hinge(
    n_per_arm: int = 5,
    n_frames: int = 300,
    theta_min: float = 0.6,
    theta_max: float = 2.6,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> Trajectory:
    """Two rigid arms on a pivot, opening angle swept sinusoidally.

    The tip-to-tip distance varies monotonically with the angle, so the
    trajectory has a single slow structural degree of freedom. Gaussian
    jitter of scale ``noise_sigma`` is added per bead when positive.
    """
    if n_per_arm < 2:
        raise ValueError("n_per_arm must be at least 2")
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    if not (0.0 < theta_min < theta_max < np.pi):
        raise ValueError("need 0 < theta_min < theta_max < pi")
    rng = np.random.default_rng(seed)
    n = 2 * n_per_arm
    frames = []
    for t in range(n_frames):
        theta = float(hinge_angle(t, n_frames, theta_min, theta_max))
        coords = _hinge_coords(n_per_arm, theta)
        if noise_sigma > 0.0:
            coords = coords + rng.normal(0.0, noise_sigma, size=(n, 3))
        frames.append(TrajectoryFrame(time=float(t), coords=coords))
    return Trajectory(sequence=_round_robin_sequence(n), frames=frames)


def synth_two_state(
    n: int = 10,
    n_frames: int = 300,
    switch_prob: float = 0.1,
    theta_open: float = 2.4,
    theta_closed: float = 0.8,
    seed: int = 0,
) -> Trajectory:
    """Markov switching between an open and a closed hinge conformation.

    State 0 (open) starts; each step flips state with probability
    ``switch_prob``. Returns exact, noise-free coordinates, so every frame
    is one of two structures.
    """
    if n < 4 or n % 2 != 0:
        raise ValueError("n must be an even integer >= 4 (two equal arms)")
    if not (0.0 <= switch_prob <= 1.0):
        raise ValueError("switch_prob must lie in [0, 1]")
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    rng = np.random.default_rng(seed)
    n_per_arm = n // 2
    open_coords = _hinge_coords(n_per_arm, theta_open)
    closed_coords = _hinge_coords(n_per_arm, theta_closed)
    state = 0
    frames = []
    for t in range(n_frames):
        if t > 0 and rng.random() < switch_prob:
            state = 1 - state
        coords = open_coords if state == 0 else closed_coords
        frames.append(TrajectoryFrame(time=float(t), coords=coords.copy()))
    return Trajectory(sequence=_round_robin_sequence(n), frames=frames)


def two_state_labels(traj: Trajectory, n_per_arm: int | None = None) -> np.ndarray:
    """Recover 0/1 state labels of a two-state trajectory from tip distance."""
    if n_per_arm is None:
        n_per_arm = traj.n_residues // 2
    tips = traj.coords_array()[:, [n_per_arm - 1, 2 * n_per_arm - 1], :]
    d = np.linalg.norm(tips[:, 0] - tips[:, 1], axis=1)
    mid = (d.min() + d.max()) / 2.0
    return (d < mid).astype(int)
