import numpy as np
import pytest

from storyscale import (
    AlphaLedger,
    DegenerateInputError,
    GuidanceConfig,
    SynchronizationError,
    ValidationError,
    apply_cfg,
    compute_alpha,
    inject_style_conditional,
    inject_style_unconditional,
)
from storyscale.guidance import COND, UNCOND, AlphaRecord, StyleInjectionHooks
from storyscale.model import AttentionState

from oracles import injection_oracle, sync_injection_oracle


def _states(rng, n=3, n_heads=2, tokens=4, d_head=4, branch=COND, step=2, layer=0):
    return [
        AttentionState(
            branch=branch,
            step=step,
            layer=layer,
            sample_index=i,
            q=rng.standard_normal((n_heads, tokens, d_head)),
            k=rng.standard_normal((n_heads, tokens, d_head)),
            v=rng.standard_normal((n_heads, tokens, d_head)),
        )
        for i in range(n)
    ]


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValidationError):
        GuidanceConfig(lam=1.5)
    with pytest.raises(ValidationError):
        GuidanceConfig(lam=-0.1)
    with pytest.raises(ValidationError):
        GuidanceConfig(cfg_scale=-1.0)
    with pytest.raises(ValidationError):
        GuidanceConfig(enable_asi=False, enable_sga=True)
    with pytest.raises(ValidationError):
        GuidanceConfig(alpha_scope="per_token")
    with pytest.raises(ValidationError):
        GuidanceConfig(early_steps=(5,)).check_against(4)
    GuidanceConfig(early_steps=(2, 3)).check_against(4)


def test_config_any_enabled():
    assert GuidanceConfig().any_enabled
    off = GuidanceConfig(enable_ipr=False, enable_asi=False, enable_sga=False)
    assert not off.any_enabled


# ---------------------------------------------------------------- alpha

def test_alpha_identical_vectors():
    v = np.array([1.0, 2.0, -3.0])
    assert compute_alpha(v, v, 0.85) == pytest.approx(0.85, abs=1e-12)


def test_alpha_orthogonal():
    assert compute_alpha(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.85) == 0.0


def test_alpha_scalar_case():
    v_n = np.array([1.0, 1.0]) / np.sqrt(2.0)
    got = compute_alpha(np.array([1.0, 0.0]), v_n, 0.85)
    assert got == pytest.approx(0.85 / np.sqrt(2.0), abs=1e-12)
    assert got == pytest.approx(0.6010407640085654, abs=1e-9)


def test_alpha_negative_cosine_clamped():
    assert compute_alpha(np.array([1.0, 0.0]), np.array([-1.0, 0.0]), 0.85) == 0.0


def test_alpha_zero_norm_rejected():
    with pytest.raises(DegenerateInputError):
        compute_alpha(np.zeros(3), np.ones(3), 0.85)


def test_alpha_shape_mismatch():
    with pytest.raises(ValidationError):
        compute_alpha(np.ones(3), np.ones(4), 0.85)


def test_alpha_range_and_monotonicity(rng):
    lam = 0.85
    cosines = []
    alphas = []
    for t in np.linspace(0, np.pi, 20):
        v_n = np.array([np.cos(t), np.sin(t)])
        a = compute_alpha(np.array([1.0, 0.0]), v_n, lam)
        assert 0.0 <= a <= lam
        cosines.append(np.cos(t))
        alphas.append(a)
    # alpha is non-decreasing in the cosine
    order = np.argsort(cosines)
    assert np.all(np.diff(np.array(alphas)[order]) >= -1e-15)


# ---------------------------------------------------------------- conditional injection

def test_reference_is_fixed_point(rng):
    for lam in (0.0, 0.5, 0.85, 1.0):
        states = _states(rng)
        k0 = states[0].k.copy()
        v0 = states[0].v.copy()
        inject_style_conditional(states, GuidanceConfig(lam=lam))
        assert np.array_equal(states[0].k, k0)
        assert np.array_equal(states[0].v, v0)
        assert states[0].recorded_alpha == lam


def test_full_replacement_at_alpha_zero(rng):
    states = _states(rng, n=2, n_heads=1, tokens=1, d_head=2)
    states[0].v = np.array([[[1.0, 0.0]]])
    states[1].v = np.array([[[0.0, 1.0]]])  # orthogonal: alpha = 0
    inject_style_conditional(states, GuidanceConfig(lam=0.85))
    assert np.array_equal(states[1].k, states[0].k)
    assert np.array_equal(states[1].v, states[0].v)
    assert states[1].recorded_alpha == 0.0


def test_conditional_matches_oracle(rng):
    states = _states(rng, n=2, n_heads=1, tokens=2, d_head=3)
    k_in = [s.k.copy() for s in states]
    v_in = [s.v.copy() for s in states]
    records = inject_style_conditional(states, GuidanceConfig(lam=0.85))
    exp_k, exp_v, exp_alpha = injection_oracle(k_in, v_in, 0.85)
    for st, ek, ev, ea in zip(states, exp_k, exp_v, exp_alpha):
        assert np.max(np.abs(st.k - ek)) <= 1e-12
        assert np.max(np.abs(st.v - ev)) <= 1e-12
        assert st.recorded_alpha == pytest.approx(ea, abs=1e-12)
    assert [r.sample_index for r in records] == [0, 1]


def test_conditional_value_convexity(rng):
    for _ in range(20):
        states = _states(rng, n=3)
        v_in = [s.v.copy() for s in states]
        inject_style_conditional(states, GuidanceConfig(lam=0.7))
        for st, orig in zip(states[1:], v_in[1:]):
            lo = np.minimum(orig, v_in[0]) - 1e-12
            hi = np.maximum(orig, v_in[0]) + 1e-12
            assert np.all(st.v >= lo) and np.all(st.v <= hi)


def test_conditional_requires_reference(rng):
    with pytest.raises(ValidationError):
        inject_style_conditional([], GuidanceConfig())
    states = _states(rng, n=2)
    states[1].v = states[1].v[:, :2, :]
    states[1].k = states[1].k[:, :2, :]
    with pytest.raises(ValidationError):
        inject_style_conditional(states, GuidanceConfig())


def test_conditional_records_per_sample(rng):
    ledger = AlphaLedger()
    states = _states(rng, n=4, layer=1)
    inject_style_conditional(states, GuidanceConfig(lam=0.85), ledger)
    assert len(ledger.records) == 4
    assert {r.sample_index for r in ledger.records} == {0, 1, 2, 3}
    assert all(r.step == 2 and r.layer == 1 and r.branch == COND for r in ledger.records)


# ---------------------------------------------------------------- synchronized injection

def test_sync_uses_recorded_alpha_not_own_cosine(rng):
    ledger = AlphaLedger()
    ledger.record(AlphaRecord(step=2, layer=0, sample_index=0, alpha=0.85))
    ledger.record(AlphaRecord(step=2, layer=0, sample_index=1, alpha=0.3))
    states = _states(rng, n=2, n_heads=1, tokens=1, d_head=2, branch=UNCOND)
    states[0].v = np.array([[[1.0, 0.0]]])
    states[1].v = np.array([[[0.0, 1.0]]])  # own cosine would give alpha 0
    v_ref = states[0].v.copy()
    v_own = states[1].v.copy()
    inject_style_unconditional(states, ledger)
    assert states[1].recorded_alpha == 0.3
    assert np.allclose(states[1].v, 0.3 * v_own + 0.7 * v_ref, atol=1e-15)


def test_sync_reference_fixed_point(rng):
    ledger = AlphaLedger()
    cond_states = _states(rng, n=3)
    inject_style_conditional(cond_states, GuidanceConfig(lam=0.6), ledger)
    uncond_states = _states(rng, n=3, branch=UNCOND)
    k0 = uncond_states[0].k.copy()
    v0 = uncond_states[0].v.copy()
    inject_style_unconditional(uncond_states, ledger)
    assert np.array_equal(uncond_states[0].k, k0)
    assert np.array_equal(uncond_states[0].v, v0)


def test_sync_matches_oracle(rng):
    ledger = AlphaLedger()
    cond_states = _states(rng, n=2, n_heads=1, tokens=2, d_head=3)
    inject_style_conditional(cond_states, GuidanceConfig(lam=0.85), ledger)
    alphas = [ledger.lookup(2, 0, i) for i in range(2)]
    uncond_states = _states(rng, n=2, n_heads=1, tokens=2, d_head=3, branch=UNCOND)
    k_in = [s.k.copy() for s in uncond_states]
    v_in = [s.v.copy() for s in uncond_states]
    inject_style_unconditional(uncond_states, ledger)
    exp_k, exp_v = sync_injection_oracle(k_in, v_in, alphas)
    for st, ek, ev in zip(uncond_states, exp_k, exp_v):
        assert np.max(np.abs(st.k - ek)) <= 1e-12
        assert np.max(np.abs(st.v - ev)) <= 1e-12


def test_sync_missing_record_is_error(rng):
    states = _states(rng, n=2, branch=UNCOND)
    with pytest.raises(SynchronizationError):
        inject_style_unconditional(states, AlphaLedger())


def test_alpha_sharing_bit_for_bit(rng):
    config = GuidanceConfig(lam=0.85)
    hooks = StyleInjectionHooks(config)
    for layer in range(3):
        cond = _states(rng, n=4, layer=layer)
        hooks.conditional(cond)
        uncond = _states(rng, n=4, layer=layer, branch=UNCOND)
        hooks.unconditional(uncond)
    cond_alpha = {
        (r.step, r.layer, r.sample_index): r.alpha
        for r in hooks.ledger.records if r.branch == COND
    }
    uncond_alpha = {
        (r.step, r.layer, r.sample_index): r.alpha
        for r in hooks.ledger.records if r.branch == UNCOND
    }
    assert set(cond_alpha) == set(uncond_alpha)
    for key, alpha in cond_alpha.items():
        assert uncond_alpha[key] == alpha  # exact float equality


# ---------------------------------------------------------------- hooks gating

def test_hooks_gate_on_step_and_batch_size(rng):
    hooks = StyleInjectionHooks(GuidanceConfig(early_steps=(2, 3)))
    outside = _states(rng, n=3, step=4)
    before = [(s.k.copy(), s.v.copy()) for s in outside]
    hooks.conditional(outside)
    for st, (k, v) in zip(outside, before):
        assert np.array_equal(st.k, k) and np.array_equal(st.v, v)
    single = _states(rng, n=1, step=2)
    hooks.conditional(single)
    assert not hooks.ledger.records


def test_hooks_ablation_asi_only(rng):
    # style injection without synchronization: only the conditional branch moves
    config = GuidanceConfig(enable_asi=True, enable_sga=False)
    hooks = StyleInjectionHooks(config)
    cond = _states(rng, n=2)
    hooks.conditional(cond)
    assert len(hooks.ledger.records) == 2
    uncond = _states(rng, n=2, branch=UNCOND)
    before = [(s.k.copy(), s.v.copy()) for s in uncond]
    hooks.unconditional(uncond)
    for st, (k, v) in zip(uncond, before):
        assert np.array_equal(st.k, k) and np.array_equal(st.v, v)
    assert all(r.branch == COND for r in hooks.ledger.records)


def test_hooks_ablation_all_disabled(rng):
    config = GuidanceConfig(enable_ipr=False, enable_asi=False, enable_sga=False)
    hooks = StyleInjectionHooks(config)
    states = _states(rng, n=3, step=2)
    before = [(s.k.copy(), s.v.copy()) for s in states]
    hooks.conditional(states)
    hooks.unconditional(states)
    for st, (k, v) in zip(states, before):
        assert np.array_equal(st.k, k) and np.array_equal(st.v, v)
    assert not hooks.ledger.records


def test_per_step_alpha_scope(rng):
    config = GuidanceConfig(alpha_scope="per_step")
    hooks = StyleInjectionHooks(config)
    for layer in range(3):
        states = _states(rng, n=2, layer=layer)
        hooks.conditional(states)
    alphas = [r.alpha for r in hooks.ledger.records if r.sample_index == 1]
    assert len(alphas) == 3
    assert alphas[0] == alphas[1] == alphas[2]  # first layer's alpha reused


# ---------------------------------------------------------------- CFG

def test_cfg_endpoints_exact(rng):
    cond = rng.standard_normal((2, 2, 4))
    uncond = rng.standard_normal((2, 2, 4))
    assert np.array_equal(apply_cfg(cond, uncond, 0.0), uncond)
    assert np.array_equal(apply_cfg(cond, uncond, 1.0), cond)


def test_cfg_scalar_case():
    got = apply_cfg(np.array([2.0]), np.array([1.0]), 3.0)
    assert got[0] == 4.0


def test_cfg_validation():
    with pytest.raises(ValidationError):
        apply_cfg(np.zeros(2), np.zeros(3), 1.0)
    with pytest.raises(ValidationError):
        apply_cfg(np.zeros(2), np.zeros(2), -0.5)
