"""pscape: command line front end.

Subcommands cover the full pipeline: generate or ingest trajectories,
compute scattering coefficients, train the embedding model, embed and
decode frames, interpolate between latents, score withheld windows, and
run the stability verifier.

Conventions shared by every subcommand:

  * outputs start with '#' comment headers (tool version, the resolved
    configuration as JSON, and the seed when one is used) and contain no
    timestamps, so a rerun with the same inputs is byte-identical;
  * floats are written with repr, the shortest round-tripping form;
  * a single --seed drives every random choice through named substreams
    (crc32 of the stream tag is added to the seed), so train/metrics
    agree on the withheld split when given the same seed;
  * --config FILE supplies defaults from a JSON object keyed by option
    name (underscores); explicit flags win over the file, the file wins
    over built-in defaults; paths are flag-only;
  * PSCAPE_THREADS caps worker threads for the per-frame work in
    scatter and embed (default 1);
  * exit status is 0 on success, 1 on runtime failure or failed
    verification, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .diffusion import lazy_walk
from .graphs import build_knn_graph, one_hot
from .model import ModelConfig
from .scattering import dyadic_bank, scatter
from .trajectory_io import (
    Trajectory,
    TrajectoryFormatError,
    load_trajectory,
    save_trajectory,
    synth_hinge,
    synth_two_state,
)
from .training import (
    TrainConfig,
    TrainedModel,
    evaluate,
    interpolate_latents,
    make_split,
    prepare_frames,
    train,
)
from .verify import run_suite


def derive_seed(base: int, stream: str) -> int:
    """Named substream of one base seed."""
    return (int(base) + zlib.crc32(stream.encode("utf-8"))) % 2**32


def _threads() -> int:
    raw = os.environ.get("PSCAPE_THREADS", "1")
    try:
        val = int(raw)
    except ValueError as exc:
        raise ValueError(f"PSCAPE_THREADS must be an integer, got {raw!r}") from exc
    if val < 1:
        raise ValueError(f"PSCAPE_THREADS must be at least 1, got {val}")
    return val


def _parallel_map(fn, items):
    """Map preserving order; threaded when PSCAPE_THREADS > 1."""
    workers = _threads()
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x: float) -> str:
    return repr(float(x))


def _header(sub: str, opts: dict, seed: int | None = None) -> list[str]:
    lines = [f"# pscape {__version__} {sub}"]
    lines.append("# config: " + json.dumps(opts, sort_keys=True))
    if seed is not None:
        lines.append(f"# seed: {seed}")
    return lines


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# -- option plumbing ----------------------------------------------------

# per-subcommand configurable options: dest -> (type, default, help)
_OPTS: dict[str, dict[str, tuple]] = {
    "gen": {
        "n_per_arm": (int, 5, "residues per hinge arm (hinge)"),
        "n": (int, 10, "residue count (two-state)"),
        "n_frames": (int, 300, "frames to generate"),
        "theta_min": (float, 0.6, "smallest hinge angle, radians (hinge)"),
        "theta_max": (float, 2.6, "largest hinge angle, radians (hinge)"),
        "noise_sigma": (float, 0.0, "coordinate noise level (hinge)"),
        "switch_prob": (float, 0.1, "per-frame state flip probability (two-state)"),
        "theta_open": (float, 2.4, "open-state angle (two-state)"),
        "theta_closed": (float, 0.8, "closed-state angle (two-state)"),
        "seed": (int, 0, "base seed"),
    },
    "scatter": {
        "knn_k": (int, 5, "k for the residue k-NN graph"),
        "J": (int, 4, "largest wavelet scale index"),
    },
    "train": {
        "knn_k": (int, 5, "k for the residue k-NN graph"),
        "J": (int, 4, "largest wavelet scale index"),
        "t_max": (int, 16, "largest diffusion power for scale selection"),
        "latent_dim": (int, 32, "latent width"),
        "hidden": (int, 128, "MLP hidden width"),
        "heads": (int, 4, "attention heads per block"),
        "alpha": (float, 0.3, "time loss weight"),
        "beta": (float, 0.2, "scattering reconstruction weight"),
        "gamma": (float, 0.35, "node reconstruction weight (large proteins)"),
        "coords_head": (int, 0, "1 adds a coordinate head"),
        "literal_loss": (int, 0, "1 uses the 1 - alpha + beta structure weight"),
        "node_ae": (int, -1, "-1 auto, 0 off, 1 on: node autoencoder"),
        "epochs": (int, 120, "training epochs"),
        "lr": (float, 1e-3, "Adam step size"),
        "batch_size": (int, 20, "frames per update, 0 = full batch"),
        "windows": (int, 20, "withheld windows"),
        "window_len": (int, 5, "frames per withheld window"),
        "seed": (int, 0, "base seed (init/shuffle/split substreams)"),
        "progress": (int, 0, "print loss to stderr every N epochs, 0 = quiet"),
    },
    "embed": {
        "knn_k": (int, 5, "k for the residue k-NN graph"),
    },
    "interpolate": {
        "knn_k": (int, 5, "k for the residue k-NN graph"),
        "steps": (int, 10, "points on the latent segment"),
    },
    "metrics": {
        "knn_k": (int, 5, "k for the residue k-NN graph"),
        "windows": (int, 20, "withheld windows"),
        "window_len": (int, 5, "frames per withheld window"),
        "seed": (int, 0, "base seed, split substream must match training"),
    },
    "verify": {
        "n": (int, 24, "vertices per random graph"),
        "pairs": (int, 20, "perturbation pairs to sample"),
        "J": (int, 3, "largest wavelet scale index"),
        "order": (int, 2, "deepest scattering tuple length"),
        "signals": (int, 3, "random signals per pair"),
        "seed": (int, 0, "base seed"),
    },
}


def _add_opts(sub: argparse.ArgumentParser, name: str) -> None:
    for dest, (typ, default, help_) in _OPTS.get(name, {}).items():
        flag = "--" + dest.replace("_", "-")
        sub.add_argument(flag, dest=dest, type=typ, default=None,
                         help=f"{help_} (default {default})")
    sub.add_argument("--config", default=None, metavar="FILE",
                     help="JSON file of option defaults (flags win)")


def _resolve(args: argparse.Namespace, name: str) -> dict:
    """Merge flags > config file > defaults into one option dict."""
    table = _OPTS.get(name, {})
    file_cfg: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(table))
        if unknown:
            raise ValueError(
                f"config keys not accepted by '{name}': {', '.join(unknown)}"
            )
    out = {}
    for dest, (typ, default, _help) in table.items():
        flag_val = getattr(args, dest)
        if flag_val is not None:
            out[dest] = typ(flag_val)
        elif dest in file_cfg:
            out[dest] = typ(file_cfg[dest])
        else:
            out[dest] = default
    return out


# -- subcommands --------------------------------------------------------


def _cmd_gen(args: argparse.Namespace) -> int:
    opt = _resolve(args, "gen")
    if args.kind == "hinge":
        traj = synth_hinge(
            n_per_arm=opt["n_per_arm"], n_frames=opt["n_frames"],
            theta_min=opt["theta_min"], theta_max=opt["theta_max"],
            noise_sigma=opt["noise_sigma"], seed=opt["seed"],
        )
    else:
        traj = synth_two_state(
            n=opt["n"], n_frames=opt["n_frames"],
            switch_prob=opt["switch_prob"], theta_open=opt["theta_open"],
            theta_closed=opt["theta_closed"], seed=opt["seed"],
        )
    save_trajectory(traj, args.out)
    print(f"wrote {args.out}: kind={args.kind} n={traj.n_residues} "
          f"frames={traj.n_frames}")
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    _resolve(args, "ingest")
    traj = load_trajectory(getattr(args, "in"))
    times = traj.times
    print(f"n_residues={traj.n_residues} n_frames={traj.n_frames} "
          f"t_first={_fmt(times[0])} t_last={_fmt(times[-1])}")
    print(f"sequence={traj.sequence}")
    if args.out:
        save_trajectory(traj, args.out)
        print(f"wrote {args.out}")
    return 0


def _frame_graph_signal(traj: Trajectory, knn_k: int):
    U = one_hot(traj.sequence)

    def build(i: int):
        g = build_knn_graph(traj.frames[i].coords, traj.sequence, knn_k)
        return lazy_walk(g.adjacency), U

    return build


def _cmd_scatter(args: argparse.Namespace) -> int:
    opt = _resolve(args, "scatter")
    traj = load_trajectory(getattr(args, "in"))
    build = _frame_graph_signal(traj, opt["knn_k"])

    def one(i: int):
        P, U = build(i)
        return scatter(dyadic_bank(P, opt["J"]), U)

    outs = _parallel_map(one, range(traj.n_frames))
    n, F = outs[0].coeffs.shape
    lines = _header("scatter", {**opt, "in": getattr(args, "in")})
    lines.append(f"# shape: n={n} F={F} (rows flatten residue-major)")
    lines.append("# layout: " + " ".join(outs[0].labels()))
    lines.append("# columns: frame time coeff*" + str(n * F))
    for i, out in enumerate(outs):
        vals = " ".join(_fmt(v) for v in out.coeffs.ravel())
        lines.append(f"{i} {_fmt(traj.frames[i].time)} {vals}")
    _write_lines(args.out, lines)
    print(f"wrote {args.out}: frames={traj.n_frames} n={n} F={F}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    opt = _resolve(args, "train")
    traj = load_trajectory(getattr(args, "in"))
    frames = prepare_frames(traj, opt["knn_k"], opt["t_max"])
    node_ae = {-1: None, 0: False, 1: True}.get(opt["node_ae"])
    if node_ae is None and opt["node_ae"] != -1:
        raise ValueError("--node-ae must be -1, 0, or 1")
    config = ModelConfig(
        n=traj.n_residues, J=opt["J"], t_max=opt["t_max"],
        latent_dim=opt["latent_dim"], hidden=opt["hidden"], heads=opt["heads"],
        alpha=opt["alpha"], beta=opt["beta"], gamma=opt["gamma"],
        coords_head=bool(opt["coords_head"]),
        literal_loss=bool(opt["literal_loss"]),
        node_autoencoder=node_ae,
        seed=derive_seed(opt["seed"], "init"),
    )
    split = make_split(traj.n_frames, n_windows=opt["windows"],
                       window_len=opt["window_len"],
                       seed=derive_seed(opt["seed"], "split"))
    train_config = TrainConfig(
        epochs=opt["epochs"], lr=opt["lr"],
        batch_size=opt["batch_size"] or None,
        seed=derive_seed(opt["seed"], "shuffle"),
    )
    every = opt["progress"]

    def progress(epoch: int, mean_loss: float) -> None:
        if every and (epoch % every == 0 or epoch == opt["epochs"] - 1):
            print(f"epoch {epoch} loss {mean_loss:.6f}", file=sys.stderr)

    trained = train(frames, config, train_config, split,
                    callback=progress if every else None)
    trained.save(args.out)
    print(f"wrote {args.out}: params={trained.params.n_parameters()} "
          f"final_loss={_fmt(trained.loss_curve[-1])} "
          f"scales_monotone={trained.scales_ok}")
    return 0


def _cmd_embed(args: argparse.Namespace) -> int:
    opt = _resolve(args, "embed")
    trained = TrainedModel.load(args.model)
    traj = load_trajectory(getattr(args, "in"))
    frames = prepare_frames(traj, opt["knn_k"], trained.config.t_max)
    zs = _parallel_map(lambda fr: trained.predict(fr).latent(), frames)
    lines = _header("embed", {**opt, "in": getattr(args, "in"),
                              "model": args.model})
    lines.append(f"# columns: frame time z*{trained.config.latent_dim}")
    for i, z in enumerate(zs):
        lines.append(f"{i} {_fmt(traj.frames[i].time)} "
                     + " ".join(_fmt(v) for v in z))
    _write_lines(args.out, lines)
    print(f"wrote {args.out}: frames={traj.n_frames} "
          f"latent_dim={trained.config.latent_dim}")
    return 0


def _parse_latent(args: argparse.Namespace, latent_dim: int) -> np.ndarray:
    if args.latent is not None:
        vals = [float(v) for v in args.latent.replace(",", " ").split()]
    else:
        rows = _read_embed_rows(args.latent_file)
        if not 0 <= args.row < len(rows):
            raise ValueError(
                f"--row {args.row} out of range for {len(rows)} embedded frames"
            )
        vals = rows[args.row]
    z = np.array(vals, dtype=np.float64)
    if z.size != latent_dim:
        raise ValueError(
            f"latent has {z.size} values, model expects {latent_dim}"
        )
    return z


def _read_embed_rows(path: str) -> list[list[float]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            rows.append([float(v) for v in parts[2:]])
    return rows


def _recon_lines(rec: dict) -> list[str]:
    lines = []
    for key in sorted(rec):
        val = rec[key]
        if isinstance(val, np.ndarray):
            body = " ".join(_fmt(v) for v in np.ravel(val))
        else:
            body = _fmt(val)
        lines.append(f"{key}\t{body}")
    return lines


def _cmd_decode(args: argparse.Namespace) -> int:
    _resolve(args, "decode")
    if (args.latent is None) == (args.latent_file is None):
        raise ValueError("pass exactly one of --latent or --latent-file")
    trained = TrainedModel.load(args.model)
    z = _parse_latent(args, trained.config.latent_dim)
    rec = trained.decode(z)
    lines = _header("decode", {"model": args.model})
    lines.extend(_recon_lines(rec))
    _write_lines(args.out, lines)
    print(f"wrote {args.out}: fields={','.join(sorted(rec))}")
    return 0


def _cmd_interpolate(args: argparse.Namespace) -> int:
    opt = _resolve(args, "interpolate")
    trained = TrainedModel.load(args.model)
    traj = load_trajectory(getattr(args, "in"))
    if not (0 <= args.from_frame < traj.n_frames
            and 0 <= args.to_frame < traj.n_frames):
        raise ValueError(
            f"frame indices must lie in [0, {traj.n_frames - 1}]"
        )
    frames = prepare_frames(traj, opt["knn_k"], trained.config.t_max)
    z_a = trained.predict(frames[args.from_frame]).latent()
    z_b = trained.predict(frames[args.to_frame]).latent()
    path = interpolate_latents(trained, z_a, z_b, steps=opt["steps"])
    lines = _header("interpolate", {**opt, "in": getattr(args, "in"),
                                    "model": args.model,
                                    "from_frame": args.from_frame,
                                    "to_frame": args.to_frame})
    n_pd = path[0]["pairdist"].size
    n_dh = path[0]["dihedral_diff"].size
    lines.append(f"# columns: step time pairdist*{n_pd} dihedral_diff*{n_dh}")
    for rec in path:
        row = [str(rec["step"]), _fmt(rec["time"])]
        row += [_fmt(v) for v in np.ravel(rec["pairdist"])]
        row += [_fmt(v) for v in np.ravel(rec["dihedral_diff"])]
        lines.append(" ".join(row))
    _write_lines(args.out, lines)
    print(f"wrote {args.out}: steps={opt['steps']}")
    return 0


def _cmd_metrics(args: argparse.Namespace) -> int:
    opt = _resolve(args, "metrics")
    trained = TrainedModel.load(args.model)
    traj = load_trajectory(getattr(args, "in"))
    frames = prepare_frames(traj, opt["knn_k"], trained.config.t_max)
    split = make_split(traj.n_frames, n_windows=opt["windows"],
                       window_len=opt["window_len"],
                       seed=derive_seed(opt["seed"], "split"))
    report = evaluate(trained, frames, split, knn_k=opt["knn_k"])
    lines = _header("metrics", {**opt, "in": getattr(args, "in"),
                                "model": args.model}, seed=opt["seed"])
    for key, val in report.to_kv().items():
        lines.append(f"{key}\t{_fmt(val)}")
    for row in report.window_rows:
        lines.append(
            f"window\t{row['window']}\t{_fmt(row['mae_pairdist'])}"
            f"\t{_fmt(row['mae_dihedral'])}"
        )
    _write_lines(args.out, lines)
    print(f"wrote {args.out}: windows={len(report.window_rows)} "
          f"scc={_fmt(report.scc)} time_spearman={_fmt(report.time_spearman)}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    opt = _resolve(args, "verify")
    report = run_suite(n=opt["n"], n_pairs=opt["pairs"], J=opt["J"],
                       seed=opt["seed"], n_signals=opt["signals"],
                       max_order=opt["order"])
    lines = _header("verify", opt, seed=opt["seed"])
    lines.append("# columns: name lhs rhs ratio passed")
    for rec in report.records:
        lines.append(f"{rec.name}\t{_fmt(rec.lhs)}\t{_fmt(rec.rhs)}"
                     f"\t{_fmt(rec.ratio)}\t{int(rec.passed)}")
    if args.out:
        _write_lines(args.out, lines)
        print(f"wrote {args.out}")
    n_fail = len(report.failures())
    print(f"{len(report.records) - n_fail}/{len(report.records)} checks passed")
    return 0 if report.all_passed else 1


# -- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pscape",
        description="scattering embeddings for protein conformation trajectories",
    )
    parser.add_argument("--version", action="version",
                        version=f"pscape {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="generate a synthetic trajectory")
    p.add_argument("kind", choices=["hinge", "two-state"])
    p.add_argument("--out", required=True, help="trajectory file to write")
    _add_opts(p, "gen")
    p.set_defaults(func=_cmd_gen)

    p = subs.add_parser("ingest", help="parse, summarize, optionally rewrite")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--out", default=None, help="canonical rewrite target")
    _add_opts(p, "ingest")
    p.set_defaults(func=_cmd_ingest)

    p = subs.add_parser("scatter", help="per-frame scattering coefficients")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--out", required=True, help="coefficient table to write")
    _add_opts(p, "scatter")
    p.set_defaults(func=_cmd_scatter)

    p = subs.add_parser("train", help="fit the embedding model")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--out", required=True, help="checkpoint to write")
    _add_opts(p, "train")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("embed", help="latent coordinates for every frame")
    p.add_argument("--model", required=True, help="checkpoint to load")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--out", required=True, help="latent table to write")
    _add_opts(p, "embed")
    p.set_defaults(func=_cmd_embed)

    p = subs.add_parser("decode", help="structure readout of one latent")
    p.add_argument("--model", required=True, help="checkpoint to load")
    p.add_argument("--out", required=True, help="reconstruction file to write")
    p.add_argument("--latent", default=None,
                   help="latent vector as comma or space separated floats")
    p.add_argument("--latent-file", default=None,
                   help="table written by embed")
    p.add_argument("--row", type=int, default=0,
                   help="row of --latent-file to decode (default 0)")
    _add_opts(p, "decode")
    p.set_defaults(func=_cmd_decode)

    p = subs.add_parser("interpolate", help="decode a latent-space segment")
    p.add_argument("--model", required=True, help="checkpoint to load")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--from-frame", type=int, required=True)
    p.add_argument("--to-frame", type=int, required=True)
    p.add_argument("--out", required=True, help="per-step table to write")
    _add_opts(p, "interpolate")
    p.set_defaults(func=_cmd_interpolate)

    p = subs.add_parser("metrics", help="withheld-window evaluation")
    p.add_argument("--model", required=True, help="checkpoint to load")
    p.add_argument("--in", required=True, help="trajectory file to read")
    p.add_argument("--out", required=True, help="metric table to write")
    _add_opts(p, "metrics")
    p.set_defaults(func=_cmd_metrics)

    p = subs.add_parser("verify", help="stability checks on random graphs")
    p.add_argument("--out", default=None, help="report table to write")
    _add_opts(p, "verify")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TrajectoryFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
