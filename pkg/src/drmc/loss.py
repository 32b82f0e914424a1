"""Logistic cost, objective value and analytic gradients for both variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericError
from .matrix import BlockMap, ProblemInstance, Variant


def logistic_cost(u, v):
    """``log(1 + exp(-u*v))`` evaluated without overflow."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise NumericError("logistic_cost received a non-finite logit")
    out = np.logaddexp(0.0, -u * v)
    return float(out) if out.ndim == 0 else out


def logistic_cost_grad(u, v):
    """Derivative of :func:`logistic_cost` in ``u``: ``-v / (1 + exp(u*v))``."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all(np.isfinite(u)):
        raise NumericError("logistic_cost_grad received a non-finite logit")
    out = -v * expit(-u * v)
    return float(out) if out.ndim == 0 else out


@dataclass
class GradientPair:
    gZ: np.ndarray
    gB: np.ndarray  # length t for DRMC-b, empty for DRMC-1


def _logits(Z, b, inst: ProblemInstance, blocks: BlockMap):
    mx, my = inst.mask_x, inst.mask_y
    ux = Z[mx.rows, mx.cols + blocks.feature_start]
    uy = Z[my.rows, my.cols + blocks.label_start]
    if b is not None and len(my):
        uy = uy + b[my.cols]
    return ux, uy


def _check_shape(Z, b, inst, blocks):
    if Z.shape != (inst.n_items, blocks.n_cols):
        raise ConfigError(f"Z has shape {Z.shape}, expected {(inst.n_items, blocks.n_cols)}")
    if blocks.variant is Variant.DRMC_B:
        if b is None or np.shape(b) != (inst.t,):
            raise ConfigError(f"DRMC-b needs a bias vector of length {inst.t}")
    elif b is not None and len(b):
        raise ConfigError("DRMC-1 takes no bias vector")


def smooth_objective(Z, b, inst: ProblemInstance, lam: float, variant=Variant.DRMC_B,
                     strict: bool = False) -> float:
    """Data-fit part of the objective (everything but the nuclear norm).

    A term whose mask is empty contributes 0 unless ``strict`` is set, in
    which case it raises :class:`ConfigError`.
    """
    blocks = BlockMap(Variant.parse(variant), inst.d, inst.t)
    Z = np.asarray(Z, dtype=np.float64)
    _check_shape(Z, b, inst, blocks)
    if strict and (len(inst.mask_x) == 0 or len(inst.mask_y) == 0):
        raise ConfigError("objective is undefined for an empty observation mask")
    ux, uy = _logits(Z, b, inst, blocks)
    total = 0.0
    if len(ux):
        total += np.sum(logistic_cost(ux, inst.mask_x.values)) / len(ux)
    if len(uy):
        total += lam * np.sum(logistic_cost(uy, inst.mask_y.values)) / len(uy)
    return float(total)


def nuclear_norm(Z) -> float:
    return float(np.sum(np.linalg.svd(Z, compute_uv=False)))


def objective(Z, b, inst: ProblemInstance, mu: float, lam: float, variant=Variant.DRMC_B,
              strict: bool = False) -> float:
    """``mu*||Z||_* + mean feature cost + lam * mean label cost``."""
    if mu <= 0 or lam <= 0:
        raise ConfigError("mu and lambda must be positive")
    return mu * nuclear_norm(Z) + smooth_objective(Z, b, inst, lam, variant, strict)


def _gradient(Z, b, inst, lam, blocks) -> GradientPair:
    Z = np.asarray(Z, dtype=np.float64)
    _check_shape(Z, b, inst, blocks)
    mx, my = inst.mask_x, inst.mask_y
    ux, uy = _logits(Z, b, inst, blocks)
    gZ = np.zeros_like(Z)
    if len(mx):
        gZ[mx.rows, mx.cols + blocks.feature_start] = (
            -mx.values * expit(-mx.values * ux) / len(mx))
    gB = np.zeros(inst.t if blocks.variant is Variant.DRMC_B else 0)
    if len(my):
        gy = lam * (-my.values) * expit(-my.values * uy) / len(my)
        gZ[my.rows, my.cols + blocks.label_start] = gy
        if blocks.variant is Variant.DRMC_B:
            gB = np.bincount(my.cols, weights=gy, minlength=inst.t).astype(np.float64)
    return GradientPair(gZ, gB)


def gradient_drmc_b(Z, b, inst: ProblemInstance, lam: float) -> GradientPair:
    return _gradient(Z, np.asarray(b, dtype=np.float64), inst, lam,
                     BlockMap(Variant.DRMC_B, inst.d, inst.t))


def gradient_drmc_1(Z, inst: ProblemInstance, lam: float) -> GradientPair:
    return _gradient(Z, None, inst, lam, BlockMap(Variant.DRMC_1, inst.d, inst.t))


def gradient(Z, b, inst: ProblemInstance, lam: float, variant) -> GradientPair:
    if Variant.parse(variant) is Variant.DRMC_B:
        return gradient_drmc_b(Z, b, inst, lam)
    return gradient_drmc_1(Z, inst, lam)
