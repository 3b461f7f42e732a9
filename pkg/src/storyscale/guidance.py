"""Attention guidance: style injection, guidance synchronization, and CFG.

During early generation steps, every sample's self-attention keys are
replaced by the reference sample's, and its values are blended toward the
reference's with a weight alpha = lambda * cos(V_ref, V_n), cosine clamped
to [0, 1] so the blend never leaves the value hull. The same blend, with
the identical recorded alphas, is applied to the unconditional branch so
classifier-free guidance keeps its conditional/unconditional balance.

The reference sample (batch slot 0) is left untouched bit for bit on both
branches; its alpha is lambda by definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, SynchronizationError, ValidationError
from .model import AttentionState

COND = "cond"
UNCOND = "uncond"


@dataclass(frozen=True)
class GuidanceConfig:
    """Toggles and constants for identity replacement, injection, and CFG."""

    lam: float = 0.85
    early_steps: tuple[int, ...] = (2, 3)
    cfg_scale: float = 3.0
    enable_ipr: bool = True
    enable_asi: bool = True
    enable_sga: bool = True
    alpha_scope: str = "per_layer"  # or "per_step": reuse the first layer's alpha

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {self.lam}")
        if self.cfg_scale < 0.0:
            raise ValidationError(f"cfg scale must be >= 0, got {self.cfg_scale}")
        if self.enable_sga and not self.enable_asi:
            raise ValidationError("guidance synchronization requires style injection")
        if self.alpha_scope not in ("per_layer", "per_step"):
            raise ValidationError(f"unknown alpha_scope {self.alpha_scope!r}")

    @property
    def any_enabled(self) -> bool:
        return self.enable_ipr or self.enable_asi or self.enable_sga

    def check_against(self, n_steps: int) -> None:
        bad = sorted(s for s in self.early_steps if not 1 <= s <= n_steps)
        if bad:
            raise ValidationError(f"early steps {bad} outside schedule 1..{n_steps}")


@dataclass(frozen=True)
class AlphaRecord:
    """One interpolation weight, kept for audit and branch synchronization."""

    step: int
    layer: int
    sample_index: int
    alpha: float
    branch: str = COND


class AlphaLedger:
    """Write-once store of alphas; the unconditional branch reads, never computes."""

    def __init__(self):
        self.records: list[AlphaRecord] = []
        self._cond: dict[tuple[int, int, int], float] = {}
        self._step_alphas: dict[tuple[int, int], float] = {}

    def record(self, rec: AlphaRecord) -> None:
        self.records.append(rec)
        if rec.branch == COND:
            self._cond[(rec.step, rec.layer, rec.sample_index)] = rec.alpha

    def lookup(self, step: int, layer: int, sample_index: int) -> float:
        key = (step, layer, sample_index)
        if key not in self._cond:
            raise SynchronizationError(
                f"no conditional alpha recorded for step {step}, layer {layer}, "
                f"sample {sample_index}; the conditional pass must run first"
            )
        return self._cond[key]

    def step_alpha(self, step: int, sample_index: int) -> float | None:
        return self._step_alphas.get((step, sample_index))

    def set_step_alpha(self, step: int, sample_index: int, alpha: float) -> None:
        self._step_alphas.setdefault((step, sample_index), alpha)

    def rows(self) -> list[dict]:
        return [
            {
                "step": r.step,
                "layer": r.layer,
                "sample": r.sample_index,
                "branch": r.branch,
                "alpha": r.alpha,
            }
            for r in self.records
        ]


def compute_alpha(v_ref: np.ndarray, v_n: np.ndarray, lam: float) -> float:
    """lambda times the cosine of the flattened value features, clamped to [0, 1]."""
    if v_ref.shape != v_n.shape:
        raise ValidationError(f"value shapes differ: {v_ref.shape} vs {v_n.shape}")
    a = np.asarray(v_ref, dtype=np.float64).ravel()
    b = np.asarray(v_n, dtype=np.float64).ravel()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm value array is undefined")
    cos = float(a @ b / (na * nb))
    return lam * min(max(cos, 0.0), 1.0)


def _check_states(states: list[AttentionState]) -> None:
    if not states:
        raise ValidationError("no attention states given; reference is missing")
    ref = states[0]
    for st in states[1:]:
        if st.k.shape != ref.k.shape or st.v.shape != ref.v.shape:
            raise ValidationError("attention states in a batch must share shapes")


def inject_style_conditional(
    states: list[AttentionState], config: GuidanceConfig, ledger: AlphaLedger | None = None
) -> list[AlphaRecord]:
    """Rewrite conditional K/V toward the reference and record the alphas.

    Slot 0 is the reference: its K and V objects pass through untouched and
    its alpha is exactly lambda. Every other sample gets the reference's K
    and the alpha-blend of values. Mutates the states in place.
    """
    _check_states(states)
    if ledger is None:
        ledger = AlphaLedger()
    ref = states[0]
    step = ref.step
    records = []
    for st in states:
        if st is ref:
            alpha = config.lam
        else:
            if config.alpha_scope == "per_step":
                cached = ledger.step_alpha(step, st.sample_index)
                alpha = cached if cached is not None else compute_alpha(ref.v, st.v, config.lam)
            else:
                alpha = compute_alpha(ref.v, st.v, config.lam)
            st.k = ref.k.copy()
            st.v = alpha * st.v + (1.0 - alpha) * ref.v
        if config.alpha_scope == "per_step":
            ledger.set_step_alpha(step, st.sample_index, alpha)
        st.recorded_alpha = alpha
        rec = AlphaRecord(step=step, layer=st.layer, sample_index=st.sample_index, alpha=alpha)
        ledger.record(rec)
        records.append(rec)
    return records


def inject_style_unconditional(states: list[AttentionState], ledger: AlphaLedger) -> None:
    """Apply the conditional pass's transformation to the unconditional branch.

    Alphas are taken from the ledger, never recomputed from unconditional
    values; a missing record means the pipeline ran out of order.
    """
    _check_states(states)
    ref = states[0]
    for st in states:
        alpha = ledger.lookup(st.step, st.layer, st.sample_index)
        if st is not ref:
            st.k = ref.k.copy()
            st.v = alpha * st.v + (1.0 - alpha) * ref.v
        st.recorded_alpha = alpha
        ledger.record(
            AlphaRecord(
                step=st.step,
                layer=st.layer,
                sample_index=st.sample_index,
                alpha=alpha,
                branch=UNCOND,
            )
        )


class StyleInjectionHooks:
    """Paired attention hooks for the two branches, sharing one alpha ledger.

    Hooks self-gate: they act only during early steps, only when their
    toggle is on, and only for batches with at least one follower.
    """

    def __init__(self, config: GuidanceConfig, ledger: AlphaLedger | None = None):
        self.config = config
        self.ledger = ledger if ledger is not None else AlphaLedger()

    def _active(self, states: list[AttentionState], enabled: bool) -> bool:
        return enabled and len(states) >= 2 and states[0].step in self.config.early_steps

    def conditional(self, states: list[AttentionState]) -> None:
        if self._active(states, self.config.enable_asi):
            inject_style_conditional(states, self.config, self.ledger)

    def unconditional(self, states: list[AttentionState]) -> None:
        if self._active(states, self.config.enable_sga):
            inject_style_unconditional(states, self.ledger)


def apply_cfg(cond: np.ndarray, uncond: np.ndarray, w: float) -> np.ndarray:
    """uncond + w * (cond - uncond); w=0 and w=1 return exact copies."""
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ValidationError(f"logit shapes differ: {cond.shape} vs {uncond.shape}")
    if w < 0.0:
        raise ValidationError(f"cfg scale must be >= 0, got {w}")
    if w == 0.0:
        return uncond.copy()
    if w == 1.0:
        return cond.copy()
    return uncond + w * (cond - uncond)
