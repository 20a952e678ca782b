"""Seeded experiment harness: each bound becomes a per-trial verdict plus a data table.

Every trial draws from its own substream of the root seed, so results do not
depend on evaluation order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cp_fit import fit_rank
from .cross_norms import Verdict, banach_mazur_bound, compare_bounds, injective_norm, projective_norm
from .normed_space import SpaceSpec, Vector, random_unit_vectors
from .options import OptimizerOptions, substream
from .rank_tools import border_sequence, flattening_rank_lower_bound, rank_upper_bound
from .tensor_core import Decomposition, DenseTensor, PureTensor, materialize, outer

EXPERIMENTS = ("equivalence", "subspace", "sigma-r", "border", "closedness")


@dataclass(frozen=True)
class ExperimentConfig:
    spaces: tuple[SpaceSpec, ...]
    r: int = 1
    trials: int = 1
    seed: int = 0
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    experiment: str = "equivalence"
    r_max: int | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))
        if not self.spaces:
            raise ValueError("need at least one space")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.r_max is not None and self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def order(self) -> int:
        return len(self.spaces)

    def trial_options(self, trial: int) -> OptimizerOptions:
        """Optimizer options whose seed is the trial's own substream."""
        seed = int(substream(self.seed, self.experiment, "optimizer", trial).integers(0, 2**63))
        return OptimizerOptions(self.optimizer.restarts, self.optimizer.max_sweeps, seed, self.optimizer.tol)


@dataclass(frozen=True)
class TrialVerdict:
    trial: int
    verdict: Verdict
    values: dict[str, float] = field(default_factory=dict)
    checks: dict[str, Verdict] = field(default_factory=dict)


def combine(verdicts) -> Verdict:
    verdicts = list(verdicts)
    if any(v is Verdict.VIOLATION for v in verdicts):
        return Verdict.VIOLATION
    if all(v is Verdict.HOLDS for v in verdicts):
        return Verdict.HOLDS
    return Verdict.CONSISTENT


# -- sampling ------------------------------------------------------------------------------


def sample_decomposition(spaces, r: int, rng: np.random.Generator) -> Decomposition:
    """r terms with unit-sphere factors, log-uniform scales in [0.1, 10] and random signs."""
    terms = []
    for _ in range(r):
        factors = [random_unit_vectors(m, 1, rng)[0] for m in spaces]
        scale = math.exp(rng.uniform(math.log(0.1), math.log(10.0))) * rng.choice((-1.0, 1.0))
        factors[0] = scale * factors[0]
        terms.append(PureTensor(tuple(spaces), tuple(factors)))
    return Decomposition(tuple(spaces), tuple(terms))


def _run(fn, cfg: ExperimentConfig):
    """Evaluate ``fn(cfg, t)`` for every trial, in order, optionally in parallel."""
    if cfg.workers == 1 or cfg.trials == 1:
        return [fn(cfg, t) for t in range(cfg.trials)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, [cfg] * cfg.trials, range(cfg.trials)))


# -- fixed-rank cone metrics -----------------------------------------------------------------


def _distance_verdict(trial, w: DenseTensor, z: DenseTensor, r: int, opts) -> TrialVerdict:
    n = w.order
    d = w - z
    eps_d, pi_d = injective_norm(d, opts), projective_norm(d, opts)
    eps_z, pi_z = injective_norm(z, opts), projective_norm(z, opts)
    c_dist = float((2 * r) ** (n - 1))
    c_norm = float(r ** (n - 1))
    checks = {
        "distance": compare_bounds(pi_d.lower, pi_d.upper, c_dist * eps_d.lower, c_dist * eps_d.upper),
        "norm": compare_bounds(pi_z.lower, pi_z.upper, c_norm * eps_z.lower, c_norm * eps_z.upper),
        "sandwich": compare_bounds(eps_d.lower, eps_d.upper, pi_d.lower, pi_d.upper),
    }
    values = {
        "d_eps_lower": eps_d.lower, "d_eps_upper": eps_d.upper,
        "d_pi_lower": pi_d.lower, "d_pi_upper": pi_d.upper,
        "z_eps_lower": eps_z.lower, "z_eps_upper": eps_z.upper,
        "z_pi_lower": pi_z.lower, "z_pi_upper": pi_z.upper,
        "distance_bound": c_dist, "norm_bound": c_norm,
        "ratio_upper": pi_d.upper / eps_d.lower if eps_d.lower > 0 else 0.0,
    }
    # both candidate constants for single-term differences, 2^(n-1) and 2^n
    for label, c in (("pow_n_minus_1", 2.0 ** (n - 1)), ("pow_n", 2.0**n)):
        values[f"upper_within_{label}"] = float(pi_d.upper <= c * eps_d.upper * (1 + 1e-9))
        values[f"certified_within_{label}"] = float(
            compare_bounds(pi_d.lower, pi_d.upper, c * eps_d.lower, c * eps_d.upper) is Verdict.HOLDS
        )
    return TrialVerdict(trial, combine(checks.values()), values, checks)


def _equivalence_one(cfg: ExperimentConfig, t: int) -> TrialVerdict:
    rng = substream(cfg.seed, cfg.experiment, "sample", t)
    w = materialize(sample_decomposition(cfg.spaces, cfg.r, rng))
    z = materialize(sample_decomposition(cfg.spaces, cfg.r, rng))
    return _distance_verdict(t, w, z, cfg.r, cfg.trial_options(t))


def run_equivalence_trial(cfg: ExperimentConfig) -> list[TrialVerdict]:
    if cfg.order < 2:
        raise ValueError("the equivalence experiment needs at least two modes")
    return _run(_equivalence_one, cfg)


def equivalence_verdict(w: DenseTensor, z: DenseTensor, r: int, opts: OptimizerOptions | None = None,
                        trial: int = 0) -> TrialVerdict:
    """The equivalence checks for one explicit pair of rank <= r tensors."""
    return _distance_verdict(trial, w, z, r, opts or OptimizerOptions())


# -- finite-dimensional subspace bound -------------------------------------------------------


def subspace_verdict(z: DenseTensor, opts: OptimizerOptions | None = None, trial: int = 0) -> TrialVerdict:
    """pi(z) against prod(dims without the largest) * eps(z)."""
    opts = opts or OptimizerOptions()
    eps, pi = injective_norm(z, opts), projective_norm(z, opts)
    bound = float(banach_mazur_bound(z.dims))
    check = compare_bounds(pi.lower, pi.upper, bound * eps.lower, bound * eps.upper)
    values = {
        "eps_lower": eps.lower, "eps_upper": eps.upper, "pi_lower": pi.lower, "pi_upper": pi.upper,
        "bound": bound,
        "ratio_lower": pi.lower / eps.upper if eps.upper > 0 else 0.0,
        "ratio_upper": pi.upper / eps.lower if eps.lower > 0 else 0.0,
    }
    return TrialVerdict(trial, check, values, {"subspace": check})


def _subspace_one(cfg: ExperimentConfig, t: int) -> TrialVerdict:
    rng = substream(cfg.seed, cfg.experiment, "sample", t)
    z = DenseTensor(cfg.spaces, rng.standard_normal(tuple(m.dim for m in cfg.spaces)))
    return subspace_verdict(z, cfg.trial_options(t), t)


def subspace_bound_trial(cfg: ExperimentConfig) -> list[TrialVerdict]:
    return _run(_subspace_one, cfg)


# -- sigma^r growth ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaRRow:
    r: int
    lower: float
    source: str  # "trial <t>" or the name of a structured candidate


@dataclass(frozen=True)
class SigmaREstimate:
    value: float
    table: tuple[SigmaRRow, ...]
    witness: tuple[DenseTensor, DenseTensor]


def _ratio_lower(w: DenseTensor, z: DenseTensor, opts) -> float:
    d = w - z
    if d.is_zero():
        return 0.0
    eps, pi = injective_norm(d, opts), projective_norm(d, opts)
    return pi.lower / eps.upper if eps.upper > 0 else 0.0


def _sigma_candidates(cfg: ExperimentConfig, r: int):
    spaces = cfg.spaces
    zero = DenseTensor(spaces, np.zeros(tuple(m.dim for m in spaces)))
    u = materialize(sample_decomposition(spaces, 1, substream(cfg.seed, "sigma-r", "pure")))
    yield "scaled_pure", u * 2.0, u
    k = min([r] + [m.dim for m in spaces])
    diag = sum(outer([np.eye(m.dim)[i] for m in spaces]) for i in range(k))
    yield "diagonal", DenseTensor(spaces, diag), zero


def _sigma_one(args):
    cfg, r, t = args
    rng = substream(cfg.seed, cfg.experiment, "sample", r, t)
    w = materialize(sample_decomposition(cfg.spaces, r, rng))
    z = materialize(sample_decomposition(cfg.spaces, r, rng))
    return _ratio_lower(w, z, cfg.trial_options(r * cfg.trials + t)), w, z


def estimate_sigma_r(cfg: ExperimentConfig) -> SigmaREstimate:
    """Certified lower bounds on sigma^r for r = 1 .. r_max (default cfg.r).

    Each row is the running maximum, so the table is nondecreasing in r.
    """
    r_max = cfg.r_max or cfg.r
    best = (0.0, "none", None)
    rows = []
    for r in range(1, r_max + 1):
        for name, w, z in _sigma_candidates(cfg, r):
            val = _ratio_lower(w, z, cfg.optimizer)
            if val > best[0]:
                best = (val, name, (w, z))
        jobs = [(cfg, r, t) for t in range(cfg.trials)]
        if cfg.workers > 1 and cfg.trials > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_sigma_one, jobs))
        else:
            results = [_sigma_one(j) for j in jobs]
        for t, (val, w, z) in enumerate(results):
            if val > best[0]:
                best = (val, f"trial {t}", (w, z))
        rows.append(SigmaRRow(r, best[0], best[1]))
    return SigmaREstimate(best[0], tuple(rows), best[2])


# -- border rank ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class BorderRow:
    k: int
    distance_pi_upper: float
    expansion_formula: float
    frobenius: float
    pi_lower: float
    fit_residual: float


@dataclass(frozen=True)
class BorderRankReport:
    rows: tuple[BorderRow, ...]
    halving_ratios: tuple[float, ...]  # d(k) / d(2k)
    limit_lower: int
    limit_upper: int | None
    border_suspected: tuple[int, ...]
    trajectory: tuple[tuple[int, float, float], ...]  # (iteration, residual, largest term norm) at m = n - 1


def border_rank_experiment(cfg: ExperimentConfig, k_max_exponent: int = 12) -> BorderRankReport:
    """The canonical degenerating sequence z_j = e_1, w_j = e_2 on cfg.spaces."""
    n = cfg.order
    if n < 3:
        raise ValueError("border rank needs at least three modes")
    if any(m.dim < 2 for m in cfg.spaces):
        raise ValueError("every mode needs dimension >= 2")
    zs = [Vector(np.eye(m.dim)[0], m) for m in cfg.spaces]
    ws = [Vector(np.eye(m.dim)[1], m) for m in cfg.spaces]
    rows = []
    limit = None
    for e in range(k_max_exponent + 1):
        k = 2**e
        pt = border_sequence(zs, ws, k)
        limit = pt.limit
        x_k = materialize(pt.x_k)
        gap = x_k - pt.limit
        pi = projective_norm(gap, cfg.optimizer)
        fit = fit_rank(x_k.coords, 2, substream(cfg.seed, "border", "fit", k), restarts=8, tol=1e-12)
        rows.append(BorderRow(
            k, pt.distance_pi_upper, _expansion(n, k), gap.frobenius(), pi.lower, fit.residual,
        ))
    ratios = tuple(a.distance_pi_upper / b.distance_pi_upper for a, b in zip(rows, rows[1:]))
    est = rank_upper_bound(limit, n, cfg.optimizer)
    traj = fit_rank(limit.coords, n - 1, substream(cfg.seed, "border", "trajectory"), restarts=8,
                    max_iters=4 * cfg.optimizer.max_sweeps)
    return BorderRankReport(tuple(rows), ratios, est.lower, est.upper, tuple(est.border_suspected),
                            tuple(traj.history))


def _expansion(n, k):
    return math.fsum(math.comb(n, s) * float(k) ** (1 - s) for s in range(2, n + 1))


# -- matrix closedness ---------------------------------------------------------------------------


def eckart_young_floor(M, r: int) -> float:
    """Spectral distance from M to the matrices of rank <= r: the (r+1)-th singular value."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return float(s[r]) if r < len(s) else 0.0


def best_rank_r(M, r: int) -> np.ndarray:
    U, s, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    return (U[:, :r] * s[:r]) @ Vt[:r]


def _closedness_one(cfg: ExperimentConfig, t: int) -> TrialVerdict:
    rng = substream(cfg.seed, cfg.experiment, "sample", t)
    r = cfg.r
    base = sample_decomposition(cfg.spaces, r, rng)
    direction = sample_decomposition(cfg.spaces, r, rng)
    limit = materialize(base)
    # z_k keeps r terms: each factor pair is nudged by 1/k, so z_k stays in S^r
    dists = []
    z_k = None
    for e in range(0, 21, 4):
        k = 2.0**e
        terms = tuple(
            PureTensor(cfg.spaces, tuple(a + b / k for a, b in zip(tb.factors, td.factors)))
            for tb, td in zip(base.terms, direction.terms)
        )
        z_k = materialize(Decomposition(cfg.spaces, terms))
        dists.append(float(np.linalg.norm(z_k.coords - limit.coords, 2)))
    limit_rank = flattening_rank_lower_bound(z_k)
    converging = all(b <= a * (1 + 1e-12) for a, b in zip(dists, dists[1:]))
    values = {"limit_rank": float(limit_rank), "last_distance": dists[-1], "r": float(r)}
    checks = {"limit_rank": Verdict.HOLDS if limit_rank <= r else Verdict.VIOLATION,
              "converging": Verdict.HOLDS if converging else Verdict.CONSISTENT}
    if r < min(m.dim for m in cfg.spaces):
        M = materialize(sample_decomposition(cfg.spaces, r + 1, rng)).coords
        floor = eckart_young_floor(M, r)
        approx = float(np.linalg.norm(M - best_rank_r(M, r), 2))
        # random rank-r competitors never beat the floor
        competitor = min(
            float(np.linalg.norm(M - materialize(sample_decomposition(cfg.spaces, r, rng)).coords, 2))
            for _ in range(8)
        )
        values.update(floor=floor, best_approx_distance=approx, competitor_distance=competitor)
        tol = 1e-10 * max(1.0, floor)
        checks["floor"] = Verdict.HOLDS if abs(approx - floor) <= tol and competitor >= floor - tol \
            else Verdict.VIOLATION
    return TrialVerdict(t, combine(checks.values()), values, checks)


def matrix_closedness_demo(cfg: ExperimentConfig) -> list[TrialVerdict]:
    if cfg.order != 2:
        raise ValueError("the closedness demo is for matrices (two modes)")
    return _run(_closedness_one, cfg)


# -- reports ---------------------------------------------------------------------------------------


def verdict_counts(trials) -> dict[str, int]:
    counts = Counter(t.verdict.value for t in trials)
    return {v.value: counts.get(v.value, 0) for v in Verdict}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(rows: list[dict]) -> str:
    """CSV with a header row, '.' decimals and '\\n' line endings."""
    buf = io.StringIO()
    if not rows:
        return ""
    header = list(rows[0])
    for row in rows[1:]:
        header += [k for k in row if k not in header]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(k, "")) for k in header])
    return buf.getvalue()


def trial_rows(trials) -> list[dict]:
    rows = []
    for t in trials:
        row = {"trial": t.trial, "verdict": t.verdict.value}
        row.update(t.values)
        row.update({f"check_{k}": v.value for k, v in t.checks.items()})
        rows.append(row)
    return rows


def summary(trials, ratio_key: str | None = None) -> dict:
    out = {"verdict_counts": verdict_counts(trials), "max_ratio": None, "witnesses": []}
    if ratio_key:
        vals = [(t.values.get(ratio_key, 0.0), t.trial) for t in trials]
        if vals:
            best = max(vals, key=lambda v: (v[0], -v[1]))
            out["max_ratio"] = best[0]
            out["witnesses"] = [{"trial": best[1], ratio_key: best[0]}]
    out["witnesses"] += [{"trial": t.trial, "verdict": t.verdict.value}
                         for t in trials if t.verdict is Verdict.VIOLATION]
    return out


def to_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


__all__ = [
    "BorderRankReport",
    "BorderRow",
    "EXPERIMENTS",
    "ExperimentConfig",
    "SigmaREstimate",
    "SigmaRRow",
    "TrialVerdict",
    "best_rank_r",
    "border_rank_experiment",
    "combine",
    "eckart_young_floor",
    "equivalence_verdict",
    "estimate_sigma_r",
    "matrix_closedness_demo",
    "run_equivalence_trial",
    "sample_decomposition",
    "subspace_bound_trial",
    "subspace_verdict",
    "summary",
    "to_csv",
    "to_json",
    "trial_rows",
    "verdict_counts",
]
