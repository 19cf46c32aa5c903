"""Numerical verification of the wavelet / scattering stability theory.

Checks fall in two classes. Exact statements carry no unknown constant and
must hold up to float tolerance:

  * telescoping of every wavelet bank,
  * non-expansiveness of the frame (weighted for the P-bank, plain for the
    T-bank) and its iterated scattering version,
  * the perturbed-bank operator bound C <= R^2 on the unperturbed space,
  * the deflated power-difference bound
        sum_j ||Tbar^{t_j} - Tbar'^{t_j}||^2
            <= (sum_j t_j^2 lam*^{2 t_j - 2}) ||Tbar - Tbar'||^2,
  * the diffusion-operator perturbation bound
        ||T - T'|| <= kappa (1 + R^3) + R ||P - P'||_w,
  * the norm transfer
        ||W - W'||_w^2 <= 6 (||W_T - W_T'||^2 + kappa^2 (kappa + 1)^2),
  * the scattering stability
        sum over length-l tuples ||U x - U' x||_w^2
            <= ||W - W'||_w^2 (sum_{k<l} R^{2k})^2 ||x||_w^2.

Statements whose constant depends only on spectral gaps are reported as an
empirical ratio C_hat = lhs / bracket; the testable content is that C_hat
stays of one size when J and the scales change, which stability_sweep
exposes.

All weighted norms here are taken in the unperturbed graph's degree
weighting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionOperators, weighted_norm
from .scattering import WaveletBank, all_tuples, apply_tuple, dyadic_scales, generalized_bank

EXACT_TOL = 1e-10  # multiplicative slack for float-exact statements
STABILITY_TOL = 1e-9  # slack for perturbation-chain statements


@dataclass
class CheckRecord:
    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs != 0.0 else np.inf


@dataclass
class StabilityReport:
    records: list[CheckRecord] = field(default_factory=list)

    def add(self, name: str, lhs: float, rhs: float, tol: float) -> CheckRecord:
        rec = CheckRecord(name, float(lhs), float(rhs),
                          bool(lhs <= rhs * (1.0 + tol)))
        self.records.append(rec)
        return rec

    def record(self, name: str, lhs: float, rhs: float) -> CheckRecord:
        """A reported quantity with no pass criterion of its own."""
        rec = CheckRecord(name, float(lhs), float(rhs), True)
        self.records.append(rec)
        return rec

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self) -> list[CheckRecord]:
        return [r for r in self.records if not r.passed]

    def summary(self) -> str:
        lines = []
        for r in self.records:
            lines.append(
                f"{'PASS' if r.passed else 'FAIL'} {r.name}: "
                f"lhs={r.lhs:.6g} rhs={r.rhs:.6g} ratio={r.ratio:.4g}"
            )
        n_fail = len(self.failures())
        lines.append(f"{len(self.records) - n_fail}/{len(self.records)} checks passed")
        return "\n".join(lines)


# -- random graphs and perturbations -----------------------------------


def random_connected_graph(n: int, p: float, rng: np.random.Generator,
                           max_tries: int = 200) -> np.ndarray:
    """Erdos-Renyi adjacency, resampled until connected."""
    for _ in range(max_tries):
        upper = rng.random((n, n)) < p
        A = np.triu(upper, k=1).astype(np.float64)
        A = A + A.T
        if _connected(A):
            return A
    raise RuntimeError(f"no connected G({n}, {p}) after {max_tries} tries")


def _connected(A: np.ndarray) -> bool:
    n = A.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for u in np.nonzero(A[v])[0]:
            if not seen[u]:
                seen[u] = True
                stack.append(int(u))
    return bool(seen.all())


def perturb_edges(A: np.ndarray, rng: np.random.Generator, n_flips: int = 2,
                  max_tries: int = 500) -> np.ndarray:
    """Flip edge indicators at random vertex pairs, keeping the graph
    connected and isolate-free. Always changes at least one pair."""
    n = A.shape[0]
    for _ in range(max_tries):
        B = A.copy()
        for _ in range(n_flips):
            i = int(rng.integers(0, n - 1))
            j = int(rng.integers(i + 1, n))
            B[i, j] = B[j, i] = 1.0 - B[i, j]
        if not np.array_equal(B, A) and _connected(B) and B.sum(axis=1).min() > 0:
            return B
    raise RuntimeError("could not produce a connected perturbation")


@dataclass
class PerturbationPair:
    """A graph, a perturbed twin, and their diffusion data."""

    ops: DiffusionOperators
    ops_prime: DiffusionOperators

    @classmethod
    def from_adjacency(cls, A: np.ndarray, A_prime: np.ndarray) -> "PerturbationPair":
        return cls(
            ops=DiffusionOperators.from_adjacency(A),
            ops_prime=DiffusionOperators.from_adjacency(A_prime),
        )

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, p: float = 0.25,
               n_flips: int = 2) -> "PerturbationPair":
        A = random_connected_graph(n, p, rng)
        return cls.from_adjacency(A, perturb_edges(A, rng, n_flips))


def compute_kappa_R(degrees: np.ndarray, degrees_prime: np.ndarray,
                    cross_check: bool = True) -> tuple[float, float]:
    """kappa = max ||I - D^-1/2 D'^1/2||, ||I - D'^-1/2 D^1/2|| and
    R = max ||D^-1/2 D'^1/2||, ||D'^-1/2 D^1/2||.

    The operators are diagonal, so both reduce to max over per-vertex
    degree ratios; with cross_check the closed form is compared against
    dense SVD norms.
    """
    d = np.asarray(degrees, dtype=np.float64)
    dp = np.asarray(degrees_prime, dtype=np.float64)
    r = np.sqrt(dp / d)
    kappa = float(max(np.abs(1.0 - r).max(), np.abs(1.0 - 1.0 / r).max()))
    R = float(max(r.max(), (1.0 / r).max()))
    if cross_check:
        n = d.size
        E = np.diag(r)
        k_svd = max(
            np.linalg.norm(np.eye(n) - E, ord=2),
            np.linalg.norm(np.eye(n) - np.linalg.inv(E), ord=2),
        )
        R_svd = max(
            np.linalg.norm(E, ord=2),
            np.linalg.norm(np.linalg.inv(E), ord=2),
        )
        if abs(k_svd - kappa) > 1e-10 or abs(R_svd - R) > 1e-10:
            raise AssertionError(
                f"diagonal kappa/R disagree with SVD: "
                f"({kappa}, {R}) vs ({k_svd}, {R_svd})"
            )
    return kappa, R


# -- norms in the unperturbed weighting --------------------------------


def _conj(M: np.ndarray, degrees: np.ndarray) -> np.ndarray:
    s = np.sqrt(degrees)
    return (1.0 / s)[:, None] * M * s[None, :]


def stacked_opnorm(blocks: list[np.ndarray], degrees: np.ndarray | None) -> float:
    """Operator norm of the vertical stack, optionally in the weighted space."""
    if degrees is not None:
        blocks = [_conj(B, degrees) for B in blocks]
    return float(np.linalg.norm(np.vstack(blocks), ord=2))


def wavelet_diff_norm(bank: WaveletBank, bank_prime: WaveletBank,
                      degrees: np.ndarray | None) -> float:
    """|| W - W' ||: norm of the stacked wavelet differences (no lowpass)."""
    blocks = [w - wp for w, wp in zip(bank.wavelets, bank_prime.wavelets)]
    return stacked_opnorm(blocks, degrees)


# -- exact bank-level checks -------------------------------------------


def check_telescoping(bank: WaveletBank, report: StabilityReport) -> CheckRecord:
    n = bank.n
    total = bank.wavelets.sum(axis=0) + bank.lowpass
    err = float(np.abs(total - np.eye(n)).max())
    return report.add("telescoping", err, 1e-10, 0.0)


def check_frame_nonexpansive(bank: WaveletBank, degrees: np.ndarray | None,
                             xs: np.ndarray, report: StabilityReport,
                             label: str = "frame_nonexpansive") -> CheckRecord:
    """sum_j ||Psi_j x||^2 + ||lowpass x||^2 <= ||x||^2 for each column of xs."""
    worst_lhs, worst_rhs = 0.0, 1.0
    for x in np.atleast_2d(xs.T):
        lhs = sum(_norm(w @ x, degrees) ** 2 for w in bank.wavelets)
        lhs += _norm(bank.lowpass @ x, degrees) ** 2
        rhs = _norm(x, degrees) ** 2
        if lhs * worst_rhs > worst_lhs * rhs:
            worst_lhs, worst_rhs = lhs, rhs
    return report.add(label, worst_lhs, worst_rhs, EXACT_TOL)


def check_iterated_nonexpansive(bank: WaveletBank, degrees: np.ndarray | None,
                                x: np.ndarray, max_order: int,
                                report: StabilityReport) -> list[CheckRecord]:
    """sum over length-l tuples ||U[tuple] x||^2 <= ||x||^2, l = 1..max_order."""
    rhs = _norm(x, degrees) ** 2
    level = [x]
    records = []
    for ell in range(1, max_order + 1):
        level = [np.abs(w @ y) for y in level for w in bank.wavelets]
        lhs = sum(_norm(y, degrees) ** 2 for y in level)
        records.append(
            report.add(f"iterated_nonexpansive_l{ell}", lhs, rhs, EXACT_TOL)
        )
    return records


def _norm(x: np.ndarray, degrees: np.ndarray | None) -> float:
    if degrees is None:
        return float(np.linalg.norm(x))
    return weighted_norm(x, degrees)


# -- perturbation-pair checks ------------------------------------------


@dataclass
class PairContext:
    """Shared quantities of one (graph, perturbed graph, scales) triple."""

    pair: PerturbationPair
    scales: list[int]
    bank: WaveletBank
    bank_prime: WaveletBank
    bank_T: WaveletBank
    bank_T_prime: WaveletBank
    kappa: float
    R: float
    dP_w: float

    @classmethod
    def build(cls, pair: PerturbationPair, scales) -> "PairContext":
        scales = list(scales)
        kappa, R = compute_kappa_R(pair.ops.degrees, pair.ops_prime.degrees)
        dP = pair.ops.P - pair.ops_prime.P
        return cls(
            pair=pair,
            scales=scales,
            bank=generalized_bank(pair.ops.P, scales),
            bank_prime=generalized_bank(pair.ops_prime.P, scales),
            bank_T=generalized_bank(pair.ops.T, scales),
            bank_T_prime=generalized_bank(pair.ops_prime.T, scales),
            kappa=kappa,
            R=R,
            dP_w=stacked_opnorm([dP], pair.ops.degrees),
        )

    @property
    def degrees(self) -> np.ndarray:
        return self.pair.ops.degrees


def check_operator_bound(ctx: PairContext, report: StabilityReport) -> CheckRecord:
    """||T - T'|| <= kappa (1 + R^3) + R ||P - P'||_w."""
    lhs = float(np.linalg.norm(ctx.pair.ops.T - ctx.pair.ops_prime.T, ord=2))
    rhs = ctx.kappa * (1.0 + ctx.R**3) + ctx.R * ctx.dP_w
    return report.add("operator_bound", lhs, rhs, STABILITY_TOL)


def check_deflated_power_bound(ctx: PairContext, report: StabilityReport) -> CheckRecord:
    """Lemma-level series bound on deflated powers, no unknown constant."""
    Tbar = ctx.pair.ops.deflated()
    Tbar_p = ctx.pair.ops_prime.deflated()
    lam = max(ctx.pair.ops.lambda2, ctx.pair.ops_prime.lambda2)
    base = float(np.linalg.norm(Tbar - Tbar_p, ord=2))
    lhs = sum(
        float(np.linalg.norm(
            np.linalg.matrix_power(Tbar, t) - np.linalg.matrix_power(Tbar_p, t),
            ord=2,
        )) ** 2
        for t in ctx.scales
    )
    series = sum(t**2 * lam ** (2 * t - 2) for t in ctx.scales)
    return report.add("deflated_power_bound", lhs, series * base**2, STABILITY_TOL)


def check_perturbed_frame_opnorm(ctx: PairContext, report: StabilityReport) -> CheckRecord:
    """Stacked perturbed bank, measured on the unperturbed space: <= R^2."""
    blocks = list(ctx.bank_prime.wavelets) + [ctx.bank_prime.lowpass]
    lhs = stacked_opnorm(blocks, ctx.degrees)
    return report.add("perturbed_frame_opnorm", lhs, ctx.R**2, STABILITY_TOL)


def check_norm_transfer(ctx: PairContext, report: StabilityReport) -> CheckRecord:
    """||W - W'||_w^2 <= 6 (||W_T - W_T'||^2 + kappa^2 (kappa+1)^2)."""
    lhs = wavelet_diff_norm(ctx.bank, ctx.bank_prime, ctx.degrees) ** 2
    dT = wavelet_diff_norm(ctx.bank_T, ctx.bank_T_prime, None)
    rhs = 6.0 * (dT**2 + ctx.kappa**2 * (ctx.kappa + 1.0) ** 2)
    return report.add("norm_transfer", lhs, rhs, STABILITY_TOL)


def wavelet_stability_ratio(ctx: PairContext) -> float:
    """Empirical constant of the top-level wavelet stability statement:

        ||W - W'||_w^2 <= C [ kappa (1 + R^3) + R ||P - P'||_w
                              + kappa^2 (kappa + 1)^2 ]

    Returns C_hat = lhs / bracket. The theory says C depends only on
    spectral gaps, not on J or the scales.
    """
    lhs = wavelet_diff_norm(ctx.bank, ctx.bank_prime, ctx.degrees) ** 2
    bracket = (
        ctx.kappa * (1.0 + ctx.R**3)
        + ctx.R * ctx.dP_w
        + ctx.kappa**2 * (ctx.kappa + 1.0) ** 2
    )
    if bracket <= 0.0:
        raise ValueError("degenerate perturbation: empty stability bracket")
    return lhs / bracket


def t_wavelet_stability_ratio(ctx: PairContext) -> float:
    """Empirical constant of the T-side statement
    ||W_T - W_T'||^2 <= C ||T - T'||."""
    lhs = wavelet_diff_norm(ctx.bank_T, ctx.bank_T_prime, None) ** 2
    dT = float(np.linalg.norm(ctx.pair.ops.T - ctx.pair.ops_prime.T, ord=2))
    if dT == 0.0:
        raise ValueError("degenerate perturbation: T == T'")
    return lhs / dT


def check_scattering_stability(ctx: PairContext, x: np.ndarray, order: int,
                               report: StabilityReport) -> CheckRecord:
    """Per-signal scattering stability at a fixed tuple length."""
    A2 = wavelet_diff_norm(ctx.bank, ctx.bank_prime, ctx.degrees) ** 2
    geom = sum(ctx.R ** (2 * k) for k in range(order))
    rhs = A2 * geom**2 * weighted_norm(x, ctx.degrees) ** 2
    lhs = 0.0
    for js in all_tuples(ctx.bank.J, order):
        u = apply_tuple(ctx.bank.wavelets, x, js)
        u_p = apply_tuple(ctx.bank_prime.wavelets, x, js)
        lhs += weighted_norm(u - u_p, ctx.degrees) ** 2
    return report.add(f"scattering_stability_l{order}", lhs, rhs, STABILITY_TOL)


def stability_sweep(pair: PerturbationPair, Js) -> dict[int, float]:
    """C_hat of the wavelet stability statement across J at dyadic scales."""
    out = {}
    for J in Js:
        ctx = PairContext.build(pair, dyadic_scales(J))
        out[J] = wavelet_stability_ratio(ctx)
    return out


# -- the portfolio ------------------------------------------------------


def run_suite(n: int = 24, n_pairs: int = 10, J: int = 3, seed: int = 0,
              n_signals: int = 3, max_order: int = 2) -> StabilityReport:
    """Run every check on freshly sampled perturbation pairs."""
    rng = np.random.default_rng(seed)
    report = StabilityReport()
    for _ in range(n_pairs):
        pair = PerturbationPair.random(n, rng)
        ctx = PairContext.build(pair, dyadic_scales(J))
        check_telescoping(ctx.bank, report)
        check_telescoping(ctx.bank_T, report)
        xs = rng.standard_normal((n, n_signals))
        check_frame_nonexpansive(ctx.bank, ctx.degrees, xs, report)
        check_frame_nonexpansive(ctx.bank_T, None, xs, report,
                                 label="frame_nonexpansive_T")
        check_iterated_nonexpansive(ctx.bank, ctx.degrees, xs[:, 0], max_order,
                                    report)
        check_operator_bound(ctx, report)
        check_deflated_power_bound(ctx, report)
        check_perturbed_frame_opnorm(ctx, report)
        check_norm_transfer(ctx, report)
        for ell in range(1, max_order + 1):
            check_scattering_stability(ctx, xs[:, 0], ell, report)
        report.record("wavelet_stability_ratio", wavelet_stability_ratio(ctx), 1.0)
        report.record("t_wavelet_stability_ratio", t_wavelet_stability_ratio(ctx), 1.0)
    return report
