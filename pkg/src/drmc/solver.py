"""Fixed point continuation for DRMC-b and DRMC-1.

Each continuation stage repeats a gradient step on the data-fit terms, a
singular value shrinkage step and (DRMC-1 only) a projection that pins the
first column to ones, until the relative change of ``Z`` drops to ``epsilon``
or the inner iteration cap is hit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import loss
from .errors import ConfigError, NumericError, ObserverError, RankUnreachableError
from .matrix import (DEFAULT_MEMORY_BUDGET, InitPolicy, JointMatrix, ProblemInstance,
                     Variant, assemble_joint)
from .shrinkage import numeric_rank, shrink_factors, svd

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("stage", "iter", "mu", "rank", "rel_err", "objective")


@dataclass
class SolverConfig:
    lam: float = 1.0
    eta_mu: float = 0.01
    mu_final: float = 0.01
    tau_z: float = 0.5
    tau_b: float = 0.5
    epsilon: float = 1e-4
    max_inner_iters: int = 500
    max_outer_stages: int = 100
    variant: Variant = Variant.DRMC_B
    seed: int = 0
    track_objective: bool = True
    truncated_svd: bool = False
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)

    def validate(self, inst: ProblemInstance | None = None) -> None:
        if not (0.0 < self.eta_mu < 1.0):
            raise ConfigError(f"eta_mu must lie in (0, 1), got {self.eta_mu}")
        if self.mu_final <= 0:
            raise ConfigError(f"mu_final must be positive, got {self.mu_final}")
        if self.lam <= 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.tau_z <= 0 or (self.variant is Variant.DRMC_B and self.tau_b <= 0):
            raise ConfigError("step sizes must be positive")
        if self.max_inner_iters < 1 or self.max_outer_stages < 1:
            raise ConfigError("iteration caps must be at least 1")
        if inst is not None:
            check_step_sizes(self, inst)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def check_step_sizes(cfg: SolverConfig, inst: ProblemInstance) -> None:
    """Reject step sizes outside the convergence bounds.

    ``tau_z < min(4|Omega_Y|/lambda, |Omega_X|)`` and, for DRMC-b,
    ``tau_b < 4|Omega_Y| / (lambda (n+m))``.  A bound belonging to an empty
    mask is dropped: that term is absent from the objective.
    """
    nx, ny = len(inst.mask_x), len(inst.mask_y)
    bounds = []
    if ny:
        bounds.append((4 * ny / cfg.lam, "4|Omega_Y|/lambda"))
    if nx:
        bounds.append((float(nx), "|Omega_X|"))
    if bounds:
        limit = min(b for b, _ in bounds)
        if not cfg.tau_z < limit:
            raise ConfigError(
                f"step size violates tau_z < min(4|Omega_Y|/lambda, |Omega_X|): "
                f"tau_z={cfg.tau_z} but min(...)={limit:g} "
                f"(|Omega_X|={nx}, |Omega_Y|={ny}, lambda={cfg.lam})")
    if cfg.variant is Variant.DRMC_B and ny:
        limit_b = 4 * ny / (cfg.lam * inst.n_items)
        if not cfg.tau_b < limit_b:
            raise ConfigError(
                f"step size violates tau_b < 4|Omega_Y|/(lambda(n+m)): "
                f"tau_b={cfg.tau_b} but bound={limit_b:g}")


def mu_schedule(sigma1: float, eta_mu: float, mu_final: float, max_stages: int | None = None):
    """Continuation values ``mu_1 = max(sigma1*eta_mu, mu_final)``,
    ``mu_{k+1} = max(mu_k*eta_mu, mu_final)``, ending with ``mu_final``."""
    start = sigma1 * eta_mu
    if not start > 0:
        raise NumericError(f"sigma1*eta_mu must be positive, got {start}")
    mus = [max(start, mu_final)]
    while mus[-1] != mu_final:
        mus.append(max(mus[-1] * eta_mu, mu_final))
    if max_stages is not None and len(mus) > max_stages:
        mus = mus[:max_stages - 1] + [mu_final]
    return mus


def relative_error(Z_new, Z_old) -> float:
    diff = np.linalg.norm(np.asarray(Z_new) - np.asarray(Z_old))
    return float(diff / max(1.0, np.linalg.norm(Z_old)))


@dataclass
class IterRecord:
    stage: int
    iteration: int
    mu: float
    rank: int
    rel_err: float
    objective: float
    hit_cap: bool = False


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    mus: list = field(default_factory=list)
    sigma1: float = float("nan")
    initial_objective: float = float("nan")
    svd_count: int = 0
    wall_time: float = 0.0

    def stage_ends(self):
        """Last record of every stage."""
        ends = {}
        for rec in self.records:
            ends[rec.stage] = rec
        return [ends[k] for k in sorted(ends)]

    def ranks(self):
        return [rec.rank for rec in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in self.records:
            writer.writerow([rec.stage, rec.iteration, repr(rec.mu), rec.rank,
                             repr(rec.rel_err), repr(rec.objective)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "mus": list(self.mus),
            "sigma1": self.sigma1,
            "initial_objective": self.initial_objective,
            "svd_count": self.svd_count,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveTrace":
        return cls(records=[IterRecord(**r) for r in data["records"]],
                   mus=list(data["mus"]), sigma1=data["sigma1"],
                   initial_objective=data["initial_objective"],
                   svd_count=data["svd_count"], wall_time=data["wall_time"])


@dataclass
class SolveResult:
    Z: JointMatrix
    b: np.ndarray
    trace: SolveTrace
    final_rank: int
    config: SolverConfig | None = None


@dataclass(frozen=True)
class Snapshot:
    """Read-only view of an admissible iterate handed to observers."""

    stage: int
    iteration: int
    mu: float
    rank: int
    Z: np.ndarray
    b: np.ndarray


def _readonly(a):
    view = a.view()
    view.flags.writeable = False
    return view


def solve(inst: ProblemInstance, cfg: SolverConfig | None = None,
          observer: Callable[[Snapshot], None] | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    cfg.validate(inst)
    variant = cfg.variant
    started = time.perf_counter()

    joint = assemble_joint(inst, variant, InitPolicy.SIGNED, cfg.memory_budget)
    Z = joint.values
    b = np.zeros(inst.t if variant is Variant.DRMC_B else 0)
    b_arg = b if variant is Variant.DRMC_B else None

    trace = SolveTrace()
    S0 = svd(Z).S
    trace.svd_count += 1
    sigma1 = float(S0[0]) if S0.size else 0.0
    trace.sigma1 = sigma1
    if sigma1 == 0.0:
        # nothing observed and nothing to shrink: Z0 is already the fixed point
        sigma1 = cfg.mu_final / cfg.eta_mu
    mus = mu_schedule(sigma1, cfg.eta_mu, cfg.mu_final, cfg.max_outer_stages)
    trace.mus = mus
    if cfg.track_objective:
        trace.initial_objective = (cfg.mu_final * float(np.sum(S0))
                                   + loss.smooth_objective(Z, b_arg, inst, cfg.lam, variant))

    rank = numeric_rank(S0, shape=Z.shape)
    for stage, mu in enumerate(mus):
        for it in range(cfg.max_inner_iters):
            grad = loss.gradient(Z, b_arg, inst, cfg.lam, variant)
            A = Z - cfg.tau_z * grad.gZ
            if variant is Variant.DRMC_B:
                b = b - cfg.tau_b * grad.gB
                b_arg = b
            hint = rank if cfg.truncated_svd else None
            Z_new, S_new = shrink_factors(A, cfg.tau_z * mu, rank_hint=hint)
            trace.svd_count += 1
            if variant is Variant.DRMC_1:
                Z_new[:, 0] = 1.0
            if not np.all(np.isfinite(Z_new)) or not np.all(np.isfinite(b)):
                raise NumericError(f"non-finite iterate at stage {stage}, iteration {it}")

            if variant is Variant.DRMC_1:
                # projection changes the spectrum; rank and norm refer to the projected iterate
                S_new = np.linalg.svd(Z_new, compute_uv=False)
                trace.svd_count += 1
            rank = numeric_rank(S_new, float(S_new[0]) if S_new.size else 0.0, Z_new.shape)
            obj = float("nan")
            if cfg.track_objective:
                obj = mu * float(np.sum(S_new)) + loss.smooth_objective(
                    Z_new, b_arg, inst, cfg.lam, variant)
            rel = relative_error(Z_new, Z)
            Z = Z_new
            converged = rel <= cfg.epsilon
            hit_cap = not converged and it == cfg.max_inner_iters - 1
            trace.records.append(IterRecord(stage, it, mu, rank, rel, obj, hit_cap))
            if observer is not None:
                snap = Snapshot(stage, it, mu, rank, _readonly(Z), _readonly(b))
                try:
                    observer(snap)
                except Exception as exc:
                    raise ObserverError(
                        f"observer failed at stage {stage}, iteration {it}: {exc}") from exc
            if converged:
                break
        if trace.records and trace.records[-1].hit_cap:
            logger.warning("stage %d (mu=%g) stopped at the %d-iteration cap, rel_err=%g",
                           stage, mu, cfg.max_inner_iters, trace.records[-1].rel_err)

    trace.wall_time = time.perf_counter() - started
    return SolveResult(JointMatrix(Z, variant, joint.blocks), b, trace, rank, cfg)


def solve_to_rank(inst: ProblemInstance, cfg: SolverConfig | None, target_rank: int,
                  keep: str = "latest") -> SolveResult:
    """Run :func:`solve` and return the iterate whose rank is closest to
    ``target_rank``.  Ties go to the later iterate, or to the earlier one
    with ``keep="earliest"``.  The trace is the full one."""
    if target_rank < 0:
        raise ConfigError("target rank must be non-negative")
    if keep not in ("latest", "earliest"):
        raise ConfigError(f"keep must be 'latest' or 'earliest', got {keep!r}")
    best = {}

    def keep_closest(snap: Snapshot):
        dist = abs(snap.rank - target_rank)
        if not best or dist < best["dist"] or (dist == best["dist"] and keep == "latest"):
            best.update(dist=dist, Z=snap.Z.copy(), b=snap.b.copy(), rank=snap.rank)

    result = solve(inst, cfg, observer=keep_closest)
    if not best or best["dist"] > 0.5 * target_rank:
        raise RankUnreachableError(target_rank, result.trace.ranks())
    Z = JointMatrix(best["Z"], result.Z.variant, result.Z.blocks)
    return SolveResult(Z, best["b"], result.trace, best["rank"], result.config)
