"""Dual-attention scattering autoencoder over a residue graph.

Per frame the model sees one connected residue graph plus the fixed one-hot
signals X. The pipeline is

    U = scatter(soft wavelet bank(theta), X)            (n, F)
    S = [R | U]          R = positional encoding        (n, 3F)
    residue transformer on S      -> (n, res_out)       attention n x n
    amino-acid transformer on U^T -> (F, aa_out)        attention F x F
    p = concat of both outputs, flattened               (1, P)
    z = E(p)                                            (1, latent)
    t_hat = N(z), structure = M(z), U_recon = D(z)

Attention uses the left-multiplied form Q = W_Q S, K = W_K S, V = W_V S with
square row-space weights, scores softmaxed column-wise with scale
1/sqrt(d_k) where d_k is the number of columns of Q, and a two-layer ReLU
MLP after the attended values. Multi-head means independent single-head
blocks concatenated and linearly mixed.

The whole forward pass runs on the autodiff tape, including the soft scale
selection, so training moves theta along with everything else.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .diffusion import lazy_walk, matrix_powers
from .graphs import ProteinGraph
from .scattering import dyadic_logits, feature_count, soft_bank, scatter_coeffs

CHECKPOINT_MAGIC = "PSCAPE-CKPT v1"


class CollinearDihedralWarning(UserWarning):
    """A pseudo-dihedral quadruple was (nearly) collinear; angle set to 0."""


# -- structure targets -------------------------------------------------


def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    """(n, n) Euclidean distance matrix of residue centers."""
    coords = np.asarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(x, dtype=np.float64), 2.0 * np.pi)
    return np.where(w > np.pi, w - 2.0 * np.pi, w)


def pseudo_dihedrals(coords: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Dihedral angle of each run of 4 consecutive centers, length n - 3.

    Degenerate (collinear) quadruples get angle 0 and raise a
    CollinearDihedralWarning.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 4:
        raise ValueError("need at least 4 centers for a pseudo-dihedral")
    phi = np.zeros(n - 3)
    n_collinear = 0
    for i in range(n - 3):
        b1 = coords[i + 1] - coords[i]
        b2 = coords[i + 2] - coords[i + 1]
        b3 = coords[i + 3] - coords[i + 2]
        c12 = np.cross(b1, b2)
        c23 = np.cross(b2, b3)
        if np.linalg.norm(c12) < tol or np.linalg.norm(c23) < tol:
            n_collinear += 1
            continue
        nb2 = np.linalg.norm(b2)
        phi[i] = np.arctan2(np.dot(np.cross(c12, c23), b2) / nb2, np.dot(c12, c23))
    if n_collinear:
        warnings.warn(
            "collinear quadruple(s) in pseudo-dihedral computation; angle set to 0",
            CollinearDihedralWarning,
            stacklevel=2,
        )
    return phi


def dihedral_diff_matrix(phi: np.ndarray) -> np.ndarray:
    """Pairwise wrapped differences wrap(phi_a - phi_b), antisymmetric mod 2 pi."""
    phi = np.asarray(phi, dtype=np.float64)
    return wrap_angle(phi[:, None] - phi[None, :])


def upper_indices(n: int):
    return np.triu_indices(n, k=1)


def upper_to_symmetric(vec: np.ndarray, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    iu = upper_indices(n)
    M[iu] = vec
    return M + M.T


def upper_to_antisymmetric(vec: np.ndarray, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    iu = upper_indices(n)
    M[iu] = vec
    return M - M.T


@dataclass
class StructureTargets:
    """Ground-truth regression targets of one frame."""

    pairdist: np.ndarray  # (n, n) symmetric
    dihedral_diff: np.ndarray  # (n', n'), n' = n - 3
    coords: np.ndarray  # (n, 3)
    time: float

    @classmethod
    def from_coords(cls, coords: np.ndarray, time: float) -> "StructureTargets":
        phi = pseudo_dihedrals(coords)
        return cls(
            pairdist=pairwise_distances(coords),
            dihedral_diff=dihedral_diff_matrix(phi),
            coords=np.asarray(coords, dtype=np.float64),
            time=float(time),
        )

    def upper_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.pairdist.shape[0]
        m = self.dihedral_diff.shape[0]
        return (
            self.pairdist[upper_indices(n)],
            self.dihedral_diff[upper_indices(m)],
        )


# -- positional encoding ----------------------------------------------


def positional_encoding(n: int, d: int) -> np.ndarray:
    """(n, 2d) interleaved sin/cos rows.

    Pair p = 1..d uses angle i / 10000^(2p/d); sin sits in 0-based column
    2(p-1), cos in 2(p-1)+1. Row 0 therefore alternates 0 and 1.
    """
    R = np.empty((n, 2 * d))
    i = np.arange(n, dtype=np.float64)[:, None]
    p = np.arange(1, d + 1, dtype=np.float64)[None, :]
    angle = i / np.power(10000.0, 2.0 * p / d)
    R[:, 0::2] = np.sin(angle)
    R[:, 1::2] = np.cos(angle)
    return R


# -- configuration and parameters --------------------------------------


@dataclass
class ModelConfig:
    """Shapes and loss weights; everything the checkpoint needs to rebuild."""

    n: int
    n_channels: int = 20
    J: int = 4
    t_max: int = 16
    latent_dim: int = 32
    hidden: int = 128
    heads: int = 4
    res_head_dim: int = 16
    res_out: int = 32
    aa_head_dim: int = 4
    aa_out: int = 8
    alpha: float = 0.3
    beta: float = 0.2
    gamma: float = 0.35
    node_autoencoder: bool | None = None  # None: auto-enable when n > 200
    node_dim: int = 3
    node_hidden: int = 16
    coords_head: bool = False
    literal_loss: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("need n >= 4 residues (pseudo-dihedrals)")
        if self.J < 1 or self.t_max < 2 ** self.J:
            raise ValueError(f"need t_max >= 2^J, got t_max={self.t_max}, J={self.J}")
        if self.node_autoencoder is None:
            self.node_autoencoder = self.n > 200
        w = [self.alpha, self.beta]
        if self.node_autoencoder:
            w.append(self.gamma)
        if any(v < 0.0 for v in w) or sum(w) > 1.0:
            raise ValueError("loss weights must be non-negative and sum to at most 1")

    @property
    def effective_channels(self) -> int:
        return self.node_dim if self.node_autoencoder else self.n_channels

    @property
    def n_features(self) -> int:
        return feature_count(self.J, self.effective_channels)

    @property
    def n_dihedral(self) -> int:
        return self.n - 3


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _mlp_params(rng, d_in: int, d_hidden: int, d_out: int, prefix: str) -> dict:
    return {
        f"{prefix}.W1": _uniform(rng, (d_in, d_hidden), d_in),
        f"{prefix}.b1": _uniform(rng, (1, d_hidden), d_in),
        f"{prefix}.W2": _uniform(rng, (d_hidden, d_out), d_hidden),
        f"{prefix}.b2": _uniform(rng, (1, d_out), d_hidden),
    }


def _attention_params(rng, rows: int, d_in: int, hidden: int, head_dim: int,
                      heads: int, out_dim: int, prefix: str) -> dict:
    p = {}
    for h in range(heads):
        for w in ("Wq", "Wk", "Wv"):
            p[f"{prefix}.h{h}.{w}"] = _uniform(rng, (rows, rows), rows)
        p.update(_mlp_params(rng, d_in, hidden, head_dim, f"{prefix}.h{h}.mlp"))
    p[f"{prefix}.Wmix"] = _uniform(rng, (heads * head_dim, out_dim), heads * head_dim)
    p[f"{prefix}.bmix"] = _uniform(rng, (1, out_dim), heads * head_dim)
    return p


class ModelParams:
    """Named trainable leaves in a fixed, checkpoint-stable order."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        n, F = config.n, config.n_features
        arrays: dict[str, np.ndarray] = {}
        arrays["theta"] = dyadic_logits(config.J, config.t_max).astype(np.float64)
        if config.node_autoencoder:
            arrays.update(_mlp_params(rng, config.n_channels, config.node_hidden,
                                      config.node_dim, "node_enc"))
            arrays.update(_mlp_params(rng, config.node_dim, config.node_hidden,
                                      config.n_channels, "node_dec"))
        arrays.update(_attention_params(rng, n, 3 * F, config.hidden,
                                        config.res_head_dim, config.heads,
                                        config.res_out, "res"))
        arrays.update(_attention_params(rng, F, n, config.hidden,
                                        config.aa_head_dim, config.heads,
                                        config.aa_out, "aa"))
        p_dim = n * config.res_out + F * config.aa_out
        arrays.update(_mlp_params(rng, p_dim, config.hidden, config.latent_dim, "enc"))
        arrays.update(_mlp_params(rng, config.latent_dim, config.hidden, n * F, "dec"))
        arrays.update(_mlp_params(rng, config.latent_dim, config.hidden, 1, "time"))
        n_struct = n * (n - 1) // 2 + config.n_dihedral * (config.n_dihedral - 1) // 2
        arrays.update(_mlp_params(rng, config.latent_dim, config.hidden,
                                  n_struct, "struct"))
        if config.coords_head:
            arrays.update(_mlp_params(rng, config.latent_dim, config.hidden,
                                      3 * n, "coords"))
        self.tensors: dict[str, Tensor] = {
            name: autodiff.param(a) for name, a in arrays.items()
        }

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def leaves(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def n_parameters(self) -> int:
        return sum(t.value.size for t in self.tensors.values())


# -- forward pass ------------------------------------------------------


def _mlp(params: ModelParams, prefix: str, x: Tensor) -> Tensor:
    h = autodiff.relu(autodiff.add(autodiff.matmul(x, params[f"{prefix}.W1"]),
                                   params[f"{prefix}.b1"]))
    return autodiff.add(autodiff.matmul(h, params[f"{prefix}.W2"]),
                        params[f"{prefix}.b2"])


def attention_head(params: ModelParams, prefix: str, S: Tensor) -> tuple[Tensor, Tensor]:
    """Single attention head: returns (mlp output, attention matrix)."""
    Q = autodiff.matmul(params[f"{prefix}.Wq"], S)
    K = autodiff.matmul(params[f"{prefix}.Wk"], S)
    V = autodiff.matmul(params[f"{prefix}.Wv"], S)
    d_k = Q.shape[1]
    scores = autodiff.smul(autodiff.matmul(Q, autodiff.transpose(K)),
                           1.0 / np.sqrt(d_k))
    attn = autodiff.softmax_cols(scores)
    attended = autodiff.matmul(attn, V)
    return _mlp(params, f"{prefix}.mlp", attended), attn


def attention_block(params: ModelParams, prefix: str, S: Tensor,
                    heads: int) -> tuple[Tensor, list[Tensor]]:
    """Multi-head block: independent heads, concatenated, linearly mixed."""
    outs, attns = [], []
    for h in range(heads):
        out, attn = attention_head(params, f"{prefix}.h{h}", S)
        outs.append(out)
        attns.append(attn)
    mixed = autodiff.add(
        autodiff.matmul(autodiff.hconcat(outs), params[f"{prefix}.Wmix"]),
        params[f"{prefix}.bmix"],
    )
    return mixed, attns


@dataclass
class FrameInputs:
    """Per-frame constants: diffusion powers, signals, targets."""

    powers: np.ndarray  # (t_max + 1, n, n), stack of P^t
    signals: np.ndarray  # (n, n_channels) one-hot
    targets: StructureTargets

    @classmethod
    def from_graph(cls, graph: ProteinGraph, coords: np.ndarray, time: float,
                   t_max: int) -> "FrameInputs":
        P = lazy_walk(graph.adjacency)
        return cls(
            powers=matrix_powers(P, t_max),
            signals=graph.signals,
            targets=StructureTargets.from_coords(coords, time),
        )


@dataclass
class ModelOutput:
    """Everything the loss and the reports need from one forward pass."""

    p: Tensor
    z: Tensor
    t_hat: Tensor  # (1, 1), normalized time scale
    pairdist_vec: Tensor  # (1, n(n-1)/2) upper triangle
    dihedral_vec: Tensor  # (1, n'(n'-1)/2) upper triangle
    coeffs: Tensor  # (n, F) scattering features
    coeffs_recon: Tensor  # (n, F) decoder output
    coords_hat: Tensor | None
    node_recon: Tensor | None
    attn_residue: list[np.ndarray] = field(repr=False, default_factory=list)
    attn_aa: list[np.ndarray] = field(repr=False, default_factory=list)

    def pairdist_matrix(self) -> np.ndarray:
        n = _n_from_upper(self.pairdist_vec.value.size)
        return upper_to_symmetric(self.pairdist_vec.value.ravel(), n)

    def dihedral_matrix(self) -> np.ndarray:
        m = _n_from_upper(self.dihedral_vec.value.size)
        return upper_to_antisymmetric(self.dihedral_vec.value.ravel(), m)

    def latent(self) -> np.ndarray:
        return self.z.value.ravel().copy()


def _n_from_upper(size: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * size)) / 2))
    if n * (n - 1) // 2 != size:
        raise ValueError(f"{size} is not a triangular number")
    return n


def forward(params: ModelParams, frame: FrameInputs) -> ModelOutput:
    cfg = params.config
    n = cfg.n
    if frame.signals.shape != (n, cfg.n_channels):
        raise ValueError(
            f"frame signals shape {frame.signals.shape}, "
            f"config expects ({n}, {cfg.n_channels})"
        )

    X = autodiff.wrap(frame.signals)
    node_recon = None
    if cfg.node_autoencoder:
        X = _mlp(params, "node_enc", X)
        node_recon = _mlp(params, "node_dec", X)

    wavelets, lowpass = soft_bank(frame.powers, params["theta"])
    U = scatter_coeffs(wavelets, lowpass, X)
    F = cfg.n_features

    R = autodiff.wrap(positional_encoding(n, F))
    S = autodiff.hconcat([R, U])
    res_out, attn_res = attention_block(params, "res", S, cfg.heads)
    aa_out, attn_aa = attention_block(params, "aa", autodiff.transpose(U), cfg.heads)

    p = autodiff.hconcat([
        autodiff.reshape(res_out, (1, n * cfg.res_out)),
        autodiff.reshape(aa_out, (1, F * cfg.aa_out)),
    ])
    z = _mlp(params, "enc", p)
    t_hat = _mlp(params, "time", z)
    struct = _mlp(params, "struct", z)
    n_pd = n * (n - 1) // 2
    pair_vec = autodiff.row_gather(autodiff.transpose(struct), range(n_pd))
    dih_vec = autodiff.row_gather(autodiff.transpose(struct),
                                  range(n_pd, struct.shape[1]))
    coords_hat = None
    if cfg.coords_head:
        coords_hat = autodiff.reshape(_mlp(params, "coords", z), (n, 3))
    coeffs_recon = autodiff.reshape(_mlp(params, "dec", z), (n, F))

    return ModelOutput(
        p=p,
        z=z,
        t_hat=t_hat,
        pairdist_vec=autodiff.transpose(pair_vec),
        dihedral_vec=autodiff.transpose(dih_vec),
        coeffs=U,
        coeffs_recon=coeffs_recon,
        coords_hat=coords_hat,
        node_recon=node_recon,
        attn_residue=[a.value.copy() for a in attn_res],
        attn_aa=[a.value.copy() for a in attn_aa],
    )


# -- loss --------------------------------------------------------------


def loss(params: ModelParams, output: ModelOutput, frame: FrameInputs,
         t_norm: float) -> tuple[Tensor, dict]:
    """Weighted sum alpha L_t + beta L_s + w_c L_c (+ node term).

    w_c is 1 - alpha - beta, or 1 - alpha + beta under the literal-loss
    switch; with the node autoencoder the weights are
    (alpha, beta, gamma, 1 - alpha - beta - gamma).
    """
    cfg = params.config
    pd_gt, dih_gt = frame.targets.upper_vectors()

    L_t = autodiff.mse(output.t_hat, autodiff.wrap(np.array([[t_norm]])))
    L_s = autodiff.mse(output.coeffs_recon, output.coeffs)
    L_pd = autodiff.mse(output.pairdist_vec, autodiff.wrap(pd_gt.reshape(1, -1)))
    L_dih = autodiff.mse(output.dihedral_vec, autodiff.wrap(dih_gt.reshape(1, -1)))
    L_c = autodiff.smul(autodiff.add(L_pd, L_dih), 0.5)
    if cfg.coords_head:
        L_xyz = autodiff.mse(output.coords_hat, autodiff.wrap(frame.targets.coords))
        L_c = autodiff.add(L_c, autodiff.smul(L_xyz, 0.5))

    if cfg.node_autoencoder:
        w_c = cfg.gamma
    elif cfg.literal_loss:
        w_c = 1.0 - cfg.alpha + cfg.beta
    else:
        w_c = 1.0 - cfg.alpha - cfg.beta

    total = autodiff.add(
        autodiff.add(autodiff.smul(L_t, cfg.alpha), autodiff.smul(L_s, cfg.beta)),
        autodiff.smul(L_c, w_c),
    )
    parts = {"time": L_t.item(), "scatter": L_s.item(), "structure": L_c.item()}
    if cfg.node_autoencoder:
        L_n = autodiff.mse(output.node_recon, autodiff.wrap(frame.signals))
        total = autodiff.add(
            total, autodiff.smul(L_n, 1.0 - cfg.alpha - cfg.beta - cfg.gamma)
        )
        parts["node"] = L_n.item()
    parts["total"] = total.item()
    return total, parts


# -- checkpoint format -------------------------------------------------


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """Versioned structured-text checkpoint: config echo + named hex arrays."""
    lines = [CHECKPOINT_MAGIC]
    cfg = asdict(params.config)
    lines.append(json.dumps({"config": cfg, "meta": meta or {}}, sort_keys=True))
    for name in params.names():
        v = params[name].value
        lines.append(f"TENSOR {name} {v.shape[0]} {v.shape[1]}")
        lines.append(np.ascontiguousarray(v, dtype="<f8").tobytes().hex())
    lines.append("END")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a {CHECKPOINT_MAGIC} checkpoint: {path}")
    head = json.loads(lines[1])
    config = ModelConfig(**head["config"])
    params = ModelParams(config)
    ln = 2
    seen = set()
    while ln < len(lines) and lines[ln] != "END":
        tag = lines[ln].split()
        if len(tag) != 4 or tag[0] != "TENSOR":
            raise ValueError(f"checkpoint line {ln + 1}: expected TENSOR header")
        name, rows, cols = tag[1], int(tag[2]), int(tag[3])
        if name not in params.tensors:
            raise ValueError(f"checkpoint has unknown tensor {name!r}")
        raw = np.frombuffer(bytes.fromhex(lines[ln + 1]), dtype="<f8")
        if raw.size != rows * cols:
            raise ValueError(f"tensor {name}: {raw.size} values for shape ({rows}, {cols})")
        expect = params[name].value.shape
        if (rows, cols) != expect:
            raise ValueError(f"tensor {name}: shape ({rows}, {cols}) != expected {expect}")
        params.tensors[name].value = raw.reshape(rows, cols).copy()
        seen.add(name)
        ln += 2
    if ln >= len(lines) or lines[ln] != "END":
        raise ValueError("checkpoint missing END marker")
    missing = set(params.names()) - seen
    if missing:
        raise ValueError(f"checkpoint missing tensors: {sorted(missing)}")
    return params, head["meta"]
