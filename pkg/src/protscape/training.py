"""Training protocol, withheld-window evaluation, latent-space analyses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import autodiff, model as model_mod
from .graphs import build_knn_graph, knn_edges
from .model import (
    FrameInputs,
    ModelConfig,
    ModelParams,
    forward,
    loss as model_loss,
    upper_indices,
)
from .scattering import expected_scales, scales_monotone
from .trajectory_io import Trajectory


# -- splits ------------------------------------------------------------


@dataclass
class SplitPlan:
    """Withheld contiguous windows; everything else trains."""

    n_frames: int
    windows: list[np.ndarray]
    seed: int

    @property
    def test_idx(self) -> np.ndarray:
        if not self.windows:
            return np.array([], dtype=int)
        return np.concatenate(self.windows)

    @property
    def train_idx(self) -> np.ndarray:
        mask = np.ones(self.n_frames, dtype=bool)
        mask[self.test_idx] = False
        return np.nonzero(mask)[0]


def make_split(n_frames: int, n_windows: int = 20, window_len: int = 5,
               seed: int = 0, max_attempts: int = 100_000) -> SplitPlan:
    """Withhold n_windows non-overlapping windows by rejection sampling."""
    if n_windows * window_len >= n_frames:
        raise ValueError(
            f"{n_windows} windows of {window_len} leave no training frames "
            f"out of {n_frames}"
        )
    rng = np.random.default_rng(seed)
    taken = np.zeros(n_frames, dtype=bool)
    windows: list[np.ndarray] = []
    attempts = 0
    while len(windows) < n_windows:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                f"could not place {n_windows} disjoint windows of {window_len} "
                f"in {n_frames} frames after {max_attempts} attempts"
            )
        start = int(rng.integers(0, n_frames - window_len + 1))
        if taken[start:start + window_len].any():
            continue
        taken[start:start + window_len] = True
        windows.append(np.arange(start, start + window_len))
    windows.sort(key=lambda w: int(w[0]))
    return SplitPlan(n_frames=n_frames, windows=windows, seed=seed)


# -- frame preparation -------------------------------------------------


def prepare_frames(traj: Trajectory, knn_k: int, t_max: int) -> list[FrameInputs]:
    """Per-frame graphs, diffusion power stacks and regression targets."""
    frames = []
    for fr in traj.frames:
        graph = build_knn_graph(fr.coords, traj.sequence, k=knn_k)
        frames.append(FrameInputs.from_graph(graph, fr.coords, fr.time, t_max))
    return frames


# -- optimizer ---------------------------------------------------------


class Adam:
    def __init__(self, leaves, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.leaves = list(leaves)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.leaves]
        self.v = [np.zeros_like(p.value) for p in self.leaves]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.leaves):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / b1c
            vhat = self.v[i] / b2c
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- training ----------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 120
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int | None = 20  # None: full-batch over the training frames
    seed: int = 0
    lr_drop: float = 0.2  # one-step decay factor; 1.0 disables the drop
    lr_drop_at: float = 2.0 / 3.0  # fraction of epochs after which lr drops


@dataclass
class TrainedModel:
    """Parameters plus the bookkeeping needed to embed and decode later."""

    params: ModelParams
    time_min: float
    time_max: float
    loss_curve: list[float] = field(repr=False)
    split: SplitPlan | None = None
    scales_ok: bool = True

    @property
    def config(self) -> ModelConfig:
        return self.params.config

    def normalize_time(self, t: float) -> float:
        span = self.time_max - self.time_min
        return (t - self.time_min) / span if span > 0 else 0.0

    def denormalize_time(self, t_norm: float) -> float:
        return t_norm * (self.time_max - self.time_min) + self.time_min

    def predict(self, frame: FrameInputs) -> model_mod.ModelOutput:
        with autodiff.no_grad():
            return forward(self.params, frame)

    def embed(self, frames) -> np.ndarray:
        return np.stack([self.predict(fr).latent() for fr in frames])

    def decode(self, z: np.ndarray) -> dict:
        """Structure predictions from a latent vector alone."""
        cfg = self.config
        zt = autodiff.wrap(np.asarray(z, dtype=np.float64).reshape(1, -1))
        if zt.shape[1] != cfg.latent_dim:
            raise ValueError(f"latent must have {cfg.latent_dim} entries")
        with autodiff.no_grad():
            return self._decode_tensors(zt)

    def _decode_tensors(self, zt: autodiff.Tensor) -> dict:
        cfg = self.config
        struct = model_mod._mlp(self.params, "struct", zt).value.ravel()
        n_pd = cfg.n * (cfg.n - 1) // 2
        out = {
            "pairdist": model_mod.upper_to_symmetric(struct[:n_pd], cfg.n),
            "dihedral_diff": model_mod.upper_to_antisymmetric(
                struct[n_pd:], cfg.n_dihedral
            ),
            "coeffs": model_mod._mlp(self.params, "dec", zt).value.reshape(
                cfg.n, cfg.n_features
            ),
            "time": self.denormalize_time(
                model_mod._mlp(self.params, "time", zt).item()
            ),
        }
        if cfg.coords_head:
            out["coords"] = model_mod._mlp(self.params, "coords", zt).value.reshape(
                cfg.n, 3
            )
        return out

    def meta(self) -> dict:
        return {"time_min": self.time_min, "time_max": self.time_max,
                "scales_ok": self.scales_ok}

    def save(self, path) -> None:
        model_mod.save_checkpoint(path, self.params, meta=self.meta())

    @classmethod
    def load(cls, path) -> "TrainedModel":
        params, meta = model_mod.load_checkpoint(path)
        return cls(
            params=params,
            time_min=float(meta.get("time_min", 0.0)),
            time_max=float(meta.get("time_max", 1.0)),
            loss_curve=[],
            scales_ok=bool(meta.get("scales_ok", True)),
        )


def train(frames: list[FrameInputs], config: ModelConfig,
          train_config: TrainConfig | None = None,
          split: SplitPlan | None = None,
          callback=None) -> TrainedModel:
    """Fit the model on the train side of the split (all frames if none).

    Gradients are accumulated frame by frame, so memory stays flat in the
    batch size; the optimizer steps once per batch on the mean-loss
    gradient.
    """
    tc = train_config or TrainConfig()
    params = ModelParams(config)
    train_idx = split.train_idx if split is not None else np.arange(len(frames))
    if len(train_idx) == 0:
        raise ValueError("no training frames")
    times = np.array([frames[i].targets.time for i in train_idx])
    t_min, t_max = float(times.min()), float(times.max())
    span = t_max - t_min if t_max > t_min else 1.0
    t_norm = {int(i): (frames[i].targets.time - t_min) / span for i in train_idx}

    opt = Adam(params.leaves(), lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2)
    rng = np.random.default_rng(tc.seed)
    batch = len(train_idx) if tc.batch_size is None else min(tc.batch_size, len(train_idx))
    drop_epoch = int(round(tc.lr_drop_at * tc.epochs)) if tc.lr_drop != 1.0 else -1
    curve = []
    for epoch in range(tc.epochs):
        if epoch == drop_epoch:
            opt.lr = tc.lr * tc.lr_drop
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), batch):
            chunk = order[start:start + batch]
            params.zero_grad()
            for i in chunk:
                out = forward(params, frames[i])
                L, parts = model_loss(params, out, frames[i], t_norm[int(i)])
                total += parts["total"]
                autodiff.backward(autodiff.smul(L, 1.0 / len(chunk)))
            opt.step()
        curve.append(total / len(order))
        if callback is not None:
            callback(epoch, curve[-1])

    trained = TrainedModel(
        params=params,
        time_min=t_min,
        time_max=t_max,
        loss_curve=curve,
        split=split,
        scales_ok=scales_monotone(params["theta"].value),
    )
    if not trained.scales_ok:
        import warnings

        warnings.warn(
            "expected wavelet scales are not increasing after training: "
            f"{np.round(expected_scales(params['theta'].value), 3)}",
            UserWarning,
            stacklevel=2,
        )
    return trained


# -- metrics -----------------------------------------------------------


def dirichlet_energy(values: np.ndarray, points: np.ndarray, k: int = 5) -> float:
    """x^T L x / x^T x for the combinatorial Laplacian of a k-NN graph."""
    x = np.asarray(values, dtype=np.float64).ravel()
    A = knn_edges(np.asarray(points, dtype=np.float64), k)
    L = np.diag(A.sum(axis=1)) - A
    denom = float(x @ x)
    if denom == 0.0:
        raise ValueError("values vector is identically zero")
    return float(x @ L @ x) / denom


@dataclass
class MetricsReport:
    mae_pairdist_mean: float
    mae_pairdist_std: float
    mae_dihedral_mean: float
    mae_dihedral_std: float
    scc: float
    pcc: float
    time_mse: float
    time_spearman: float
    dirichlet_latent: float
    dirichlet_raw: float
    rmsd: float | None
    window_rows: list[dict] = field(repr=False, default_factory=list)

    def to_kv(self) -> dict:
        kv = {
            "mae_pairdist_mean": self.mae_pairdist_mean,
            "mae_pairdist_std": self.mae_pairdist_std,
            "mae_dihedral_mean": self.mae_dihedral_mean,
            "mae_dihedral_std": self.mae_dihedral_std,
            "scc": self.scc,
            "pcc": self.pcc,
            "time_mse": self.time_mse,
            "time_spearman": self.time_spearman,
            "dirichlet_latent": self.dirichlet_latent,
            "dirichlet_raw": self.dirichlet_raw,
        }
        if self.rmsd is not None:
            kv["rmsd"] = self.rmsd
        return kv


def evaluate(trained: TrainedModel, frames: list[FrameInputs],
             split: SplitPlan, knn_k: int = 5) -> MetricsReport:
    """Withheld-window metrics plus latent-organization diagnostics.

    MAEs are over upper-triangle entries, reported per window then
    aggregated mean +/- std. The Dirichlet energies compare the frame-time
    signal on a k-NN graph over latents against the same graph built over
    raw scattering features, both across every frame given.
    """
    outputs = [trained.predict(fr) for fr in frames]
    latents = np.stack([o.latent() for o in outputs])
    raw = np.stack([o.coeffs.value.ravel() for o in outputs])
    times = np.array([fr.targets.time for fr in frames])

    n = trained.config.n
    iu_pd = upper_indices(n)
    iu_dh = upper_indices(trained.config.n_dihedral)

    window_rows = []
    gt_all, pred_all, t_true, t_pred = [], [], [], []
    for w, window in enumerate(split.windows):
        pd_err, dh_err = [], []
        for i in window:
            gt = frames[i].targets
            pd_hat = outputs[i].pairdist_matrix()[iu_pd]
            dh_hat = outputs[i].dihedral_matrix()[iu_dh]
            pd_gt = gt.pairdist[iu_pd]
            dh_gt = gt.dihedral_diff[iu_dh]
            pd_err.append(np.abs(pd_hat - pd_gt).mean())
            dh_err.append(np.abs(dh_hat - dh_gt).mean())
            gt_all.append(pd_gt)
            pred_all.append(pd_hat)
            t_true.append(gt.time)
            t_pred.append(trained.denormalize_time(outputs[i].t_hat.item()))
        window_rows.append({
            "window": w,
            "start": int(window[0]),
            "length": int(len(window)),
            "mae_pairdist": float(np.mean(pd_err)),
            "mae_dihedral": float(np.mean(dh_err)),
        })

    pd_maes = np.array([r["mae_pairdist"] for r in window_rows])
    dh_maes = np.array([r["mae_dihedral"] for r in window_rows])
    gt_flat = np.concatenate(gt_all)
    pred_flat = np.concatenate(pred_all)
    t_true = np.array(t_true)
    t_pred = np.array(t_pred)

    rmsd = None
    if trained.config.coords_head:
        sq = []
        for i in split.test_idx:
            d = outputs[i].coords_hat.value - frames[i].targets.coords
            sq.append(np.mean(np.sum(d * d, axis=1)))
        rmsd = float(np.sqrt(np.mean(sq)))

    return MetricsReport(
        mae_pairdist_mean=float(pd_maes.mean()),
        mae_pairdist_std=float(pd_maes.std()),
        mae_dihedral_mean=float(dh_maes.mean()),
        mae_dihedral_std=float(dh_maes.std()),
        scc=float(stats.spearmanr(gt_flat, pred_flat).statistic),
        pcc=float(stats.pearsonr(gt_flat, pred_flat).statistic),
        time_mse=float(np.mean((t_true - t_pred) ** 2)),
        time_spearman=float(stats.spearmanr(t_true, t_pred).statistic),
        dirichlet_latent=dirichlet_energy(times, latents, k=knn_k),
        dirichlet_raw=dirichlet_energy(times, raw, k=knn_k),
        rmsd=rmsd,
        window_rows=window_rows,
    )


# -- latent-space analyses ---------------------------------------------


def interpolate_latents(trained: TrainedModel, z_a: np.ndarray, z_b: np.ndarray,
                        steps: int = 10) -> list[dict]:
    """Decode evenly spaced points on the segment z_a -> z_b.

    Endpoints decode z_a and z_b themselves, bit for bit.
    """
    if steps < 2:
        raise ValueError("steps must be at least 2")
    z_a = np.asarray(z_a, dtype=np.float64).ravel()
    z_b = np.asarray(z_b, dtype=np.float64).ravel()
    out = []
    for k in range(steps):
        if k == 0:
            z = z_a
        elif k == steps - 1:
            z = z_b
        else:
            lam = k / (steps - 1)
            z = (1.0 - lam) * z_a + lam * z_b
        rec = trained.decode(z)
        rec["step"] = k
        rec["latent"] = z.copy()
        out.append(rec)
    return out


def kmeans(points: np.ndarray, k: int, seed: int = 0, n_iter: int = 200,
           retries: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Plain k-means with k-means++ seeding. Returns (labels, centers).

    An empty cluster triggers a fresh seeding; after `retries` failures it
    raises.
    """
    X = np.asarray(points, dtype=np.float64)
    if k < 1 or k > X.shape[0]:
        raise ValueError(f"k={k} out of range for {X.shape[0]} points")
    rng = np.random.default_rng(seed)
    last_err = None
    for _ in range(retries):
        centers = _kmeans_pp(X, k, rng)
        for _ in range(n_iter):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            new_centers = np.empty_like(centers)
            empty = False
            for c in range(k):
                mask = labels == c
                if not mask.any():
                    empty = True
                    break
                new_centers[c] = X[mask].mean(axis=0)
            if empty:
                last_err = "empty cluster"
                break
            if np.allclose(new_centers, centers):
                return labels, new_centers
            centers = new_centers
        else:
            return labels, centers
        if last_err is None:
            return labels, centers
    raise RuntimeError(f"k-means failed after {retries} seedings: {last_err}")


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(X.shape[0])]]
    while len(centers) < k:
        d2 = np.min(
            ((X[:, None, :] - np.array(centers)[None, :, :]) ** 2).sum(axis=2),
            axis=1,
        )
        total = d2.sum()
        if total == 0.0:
            centers.append(X[rng.integers(X.shape[0])])
            continue
        centers.append(X[rng.choice(X.shape[0], p=d2 / total)])
    return np.array(centers)


def cluster_centroids(latents: np.ndarray, k: int, seed: int = 0
                      ) -> tuple[np.ndarray, np.ndarray]:
    return kmeans(latents, k, seed=seed)


def attention_readout(trained: TrainedModel, frames: list[FrameInputs]) -> np.ndarray:
    """Per-residue attention mass, head-averaged then frame-averaged.

    The residue attention matrix is column-stochastic, so row sums divided
    by n give a distribution over residues; scores sum to 1.
    """
    n = trained.config.n
    acc = np.zeros(n)
    for fr in frames:
        out = trained.predict(fr)
        head_avg = np.mean(out.attn_residue, axis=0)
        acc += head_avg.sum(axis=1) / n
    return acc / len(frames)


def residue_position_variance(traj: Trajectory) -> np.ndarray:
    """Mean squared deviation of each residue center across frames."""
    coords = traj.coords_array()
    mean = coords.mean(axis=0, keepdims=True)
    return ((coords - mean) ** 2).sum(axis=2).mean(axis=0)


# -- generalization protocols ------------------------------------------


def s2l_run(traj: Trajectory, n_train: int, config: ModelConfig,
            train_config: TrainConfig | None = None, knn_k: int = 5,
            eval_windows: int = 20, eval_window_len: int = 5,
            eval_seed: int = 0) -> dict:
    """Short-to-long: train on the first n_train frames, evaluate beyond.

    The evaluation re-uses the withheld-window machinery on the unseen
    tail so the report shape matches evaluate().
    """
    if not (0 < n_train < traj.n_frames):
        raise ValueError(f"n_train={n_train} out of range for {traj.n_frames} frames")
    frames = prepare_frames(traj, knn_k, config.t_max)
    head = frames[:n_train]
    trained = train(head, config, train_config)
    tail = frames[n_train:]
    tail_split = make_split(len(tail), eval_windows, eval_window_len, seed=eval_seed)
    head_split = make_split(len(head), eval_windows, eval_window_len, seed=eval_seed)
    return {
        "trained": trained,
        "train_report": evaluate(trained, head, head_split),
        "eval_report": evaluate(trained, tail, tail_split),
    }


def wt2m_run(wt: Trajectory, mutant: Trajectory, config: ModelConfig,
             train_config: TrainConfig | None = None, knn_k: int = 5) -> dict:
    """Wild-type to mutant: train on wt, embed both, compare latent clouds."""
    if wt.n_residues != mutant.n_residues:
        raise ValueError("wild-type and mutant must share their length")
    frames_wt = prepare_frames(wt, knn_k, config.t_max)
    frames_mut = prepare_frames(mutant, knn_k, config.t_max)
    trained = train(frames_wt, config, train_config)
    z_wt = trained.embed(frames_wt)
    z_mut = trained.embed(frames_mut)
    centroid_gap = float(np.linalg.norm(z_wt.mean(axis=0) - z_mut.mean(axis=0)))
    spread_wt = float(np.linalg.norm(z_wt - z_wt.mean(axis=0), axis=1).mean())
    spread_mut = float(np.linalg.norm(z_mut - z_mut.mean(axis=0), axis=1).mean())
    cross = float(
        np.linalg.norm(z_wt[:, None, :] - z_mut[None, :, :], axis=2).mean()
    )
    within = float(
        np.linalg.norm(z_wt[:, None, :] - z_wt[None, :, :], axis=2).mean()
    )
    return {
        "trained": trained,
        "latents_wt": z_wt,
        "latents_mut": z_mut,
        "centroid_gap": centroid_gap,
        "spread_wt": spread_wt,
        "spread_mut": spread_mut,
        "cross_mean_dist": cross,
        "within_mean_dist": within,
    }
