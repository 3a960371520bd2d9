import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tswatermark.book import build_book
from tswatermark.embedder import (
    EmbedConfig,
    WatermarkPlan,
    _penalty_grad,
    embed,
    optimize_noise_hard,
    optimize_noise_soft,
    project_linf,
    select_from_matrix,
    select_locations,
)
from tswatermark.encoder import cosine_sim, encode, grad_alignment_loss, make_synthetic_protected_model
from tswatermark.errors import ConfigError, DataError, FingerprintError
from tswatermark.series import generate_synthetic_dataset, normalize


def test_select_argmax():
    assert select_from_matrix(np.array([[0.1, 0.9], [0.3, 0.2]]), 1) == [(0, 1)]


def test_select_distinct_patches():
    assert select_from_matrix(np.array([[0.1, 0.9], [0.3, 0.2]]), 2) == [(0, 1), (1, 0)]


def test_select_tie_break():
    S = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert select_from_matrix(S, 2) == [(0, 0), (1, 0)]


def test_select_alpha_too_large():
    with pytest.raises(ConfigError):
        select_from_matrix(np.zeros((2, 3)), 3)


def test_select_matches_exhaustive_oracle(rng):
    for trial in range(200):
        if trial % 2:
            S = rng.choice([0.0, 0.25, 0.5, 0.75], size=(5, 4))
        else:
            S = rng.uniform(-1, 1, size=(5, 4))
        assert select_from_matrix(S, 3) == oracles.best_selection(S.tolist(), 3)


def test_select_locations_maps_book_ids(small):
    fx, windows, book = small
    pairs = select_locations(windows[0].horizon, fx.model, book, 2)
    assert len({j for j, _ in pairs}) == 2
    assert all(tok in book.cold_token_ids for _, tok in pairs)


def test_select_locations_short_horizon(small):
    fx, _, book = small
    with pytest.raises(DataError):
        select_locations(np.zeros(fx.model.P - 1), fx.model, book, 1)


def test_project_linf():
    out = project_linf(np.array([0.5, -0.5, 0.001, -0.0]), 0.01)
    np.testing.assert_array_equal(out, [0.01, -0.01, 0.001, 0.0])
    assert not np.signbit(out[3])


@pytest.fixture(scope="module")
def d8():
    """Small-d fixture used for the alignment checks."""
    fx = make_synthetic_protected_model(1, 64, 8, 16, 0.5)
    windows, stats = generate_synthetic_dataset(1, 100, 16, 16)
    return fx, [normalize(w, stats).horizon for w in windows]


def test_alignment_improves(d8):
    fx, segments = d8
    rng = np.random.default_rng(0)
    improved = 0
    for x in segments:
        v = rng.standard_normal(fx.model.d)
        eps, trace = optimize_noise_hard(x, v, fx.model)
        before = cosine_sim(encode(x, fx.model), v)
        after = cosine_sim(encode(x + eps, fx.model), v)
        assert after >= before
        assert trace[0] == before
        improved += after > before
    assert improved >= 95


def test_hard_budget_respected(d8):
    fx, segments = d8
    rng = np.random.default_rng(1)
    for x in segments[:30]:
        for opt in ("projected_gd", "projected_adam"):
            cfg = EmbedConfig(eta=float(rng.uniform(0.001, 0.5)), optimizer=opt, step=1.0, keep_best=False)
            eps, _ = optimize_noise_hard(x, rng.standard_normal(8), fx.model, cfg)
            assert np.abs(eps).max() <= cfg.eta


def test_zero_budget(d8):
    fx, segments = d8
    eps, _ = optimize_noise_hard(segments[0], np.ones(8), fx.model, EmbedConfig(eta=0.0))
    assert np.all(eps == 0.0)


def test_soft_large_penalty(d8):
    fx, segments = d8
    rng = np.random.default_rng(2)
    cfg = EmbedConfig(mode="soft", lambda_soft=1e6)
    for x in segments[:20]:
        eps, _ = optimize_noise_soft(x, rng.standard_normal(8), fx.model, cfg)
        assert np.linalg.norm(eps) <= 1e-3


def _plain_descent(x, v, model, step, iters, adam):
    eps = np.zeros(x.size)
    m = np.zeros_like(eps)
    s = np.zeros_like(eps)
    for t in range(1, iters + 1):
        g = grad_alignment_loss(x, eps, v, model).grad
        if adam:
            m = 0.9 * m + 0.1 * g
            s = 0.999 * s + 0.001 * g * g
            eps = eps - step * (m / (1 - 0.9**t)) / (np.sqrt(s / (1 - 0.999**t)) + 1e-8)
        else:
            eps = eps - step * g
    return eps


@pytest.mark.parametrize("opt", ["projected_gd", "projected_adam"])
def test_soft_without_penalty_is_plain_descent(d8, opt):
    fx, segments = d8
    rng = np.random.default_rng(3)
    for x in segments[:10]:
        v = rng.standard_normal(8)
        cfg = EmbedConfig(mode="soft", lambda_soft=0.0, optimizer=opt, keep_best=False, step=0.5)
        eps, _ = optimize_noise_soft(x, v, fx.model, cfg)
        ref = _plain_descent(x, v, fx.model, 0.5, 20, opt == "projected_adam")
        np.testing.assert_allclose(eps, ref, rtol=0, atol=1e-12)


def test_soft_gradient_finite_differences(rng):
    fx = make_synthetic_protected_model(4, 32, 8, 16, 0.5)
    m = fx.model
    lam = 0.3
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(16)
        v = rng.standard_normal(8)
        eps = 0.05 * rng.standard_normal(16)

        def loss(e):
            z = oracles.affine(m.W.tolist(), m.b.tolist(), [a + b for a, b in zip(x.tolist(), e)])
            return 1.0 - oracles.cos(z, v.tolist()) + lam * sum(t * t for t in e) ** 0.5

        g = grad_alignment_loss(x, eps, v, m).grad + lam * _penalty_grad(eps)
        fd = np.array(oracles.central_diff(loss, eps.tolist(), h=1e-6))
        worst = max(worst, np.abs(g - fd).max() / np.abs(fd).max())
    assert worst <= 1e-4


def test_penalty_subgradient_at_zero():
    assert np.all(_penalty_grad(np.zeros(4)) == 0.0)


def test_segment_length_checked(d8):
    fx, _ = d8
    with pytest.raises(DataError):
        optimize_noise_hard(np.zeros(5), np.ones(8), fx.model)


def test_embed_zero_budget(small):
    fx, windows, book = small
    h = windows[3].horizon
    out, plan = embed(h, fx.model, book, EmbedConfig(eta=0.0))
    assert out.tobytes() == h.tobytes()
    assert all(np.all(e.epsilon == 0.0) for e in plan.entries)


def test_embed_single_contiguous_range(small):
    fx, windows, book = small
    for w in windows[:20]:
        h = w.horizon
        out, plan = embed(h, fx.model, book)
        (entry,) = plan.entries
        start, stop = entry.segment_range
        assert stop - start <= fx.model.P
        changed = np.flatnonzero(out != h)
        assert changed.size == 0 or (changed.min() >= start and changed.max() < stop)
        assert np.abs(out - h).max() <= 0.01 + 1e-12
        assert np.abs(entry.epsilon).max() <= 0.01
        assert np.mean(np.abs(out - h)) <= fx.model.P * 0.01 / h.size + 1e-12
        assert entry.final_sim >= entry.initial_sim


def test_embed_padded_tail(small):
    fx, windows, book = small
    P = fx.model.P
    h = windows[0].horizon[: 2 * P + 3]
    for alpha in (1, 2, 3):
        out, plan = embed(h, fx.model, book, EmbedConfig(alpha=alpha))
        assert out.shape == h.shape
        for e in plan.entries:
            start, stop = e.segment_range
            assert e.epsilon.size == stop - start
            np.testing.assert_array_equal(out[start:stop], h[start:stop] + e.epsilon)
    assert (2 * P, 2 * P + 3) in [e.segment_range for e in plan.entries]


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    alpha=st.integers(1, 4),
    eta=st.floats(0.0, 0.3),
    L=st.integers(32, 70),
    mode=st.sampled_from(["hard", "soft"]),
)
def test_embed_locality_and_budget(small, seed, alpha, eta, L, mode):
    fx, _, book = small
    h = np.random.default_rng(seed).standard_normal(L) * 2
    cfg = EmbedConfig(alpha=alpha, eta=eta, mode=mode)
    out, plan = embed(h, fx.model, book, cfg)
    mask = np.zeros(L, dtype=bool)
    ranges = sorted(e.segment_range for e in plan.entries)
    for (a, b), (c, _) in zip(ranges, ranges[1:]):
        assert b <= c
    for a, b in ranges:
        mask[a:b] = True
    assert out[~mask].tobytes() == h[~mask].tobytes()
    if mode == "hard":
        assert np.abs(out - h).max() <= eta + 1e-12
        assert np.mean(np.abs(out - h)) <= alpha * fx.model.P * eta / L + 1e-12


def test_embed_deterministic(small):
    fx, windows, book = small
    a, pa = embed(windows[5].horizon, fx.model, book, EmbedConfig(alpha=2))
    b, pb = embed(windows[5].horizon, fx.model, book, EmbedConfig(alpha=2))
    assert a.tobytes() == b.tobytes()
    assert pa.to_dict() == pb.to_dict()


def test_embed_does_not_mutate_input(small):
    fx, windows, book = small
    h = windows[6].horizon.copy()
    embed(h, fx.model, book)
    assert h.tobytes() == windows[6].horizon.tobytes()


def test_plan_round_trip(small, tmp_path):
    fx, windows, book = small
    _, plan = embed(windows[7].horizon, fx.model, book, EmbedConfig(alpha=2))
    path = tmp_path / "plan.json"
    plan.save(path)
    back = WatermarkPlan.from_dict(json.loads(path.read_text()))
    assert back.to_dict() == plan.to_dict()


def test_embed_wrong_model(small):
    _, windows, book = small
    other = make_synthetic_protected_model(99, 128, 16, 8, 0.5).model
    with pytest.raises(FingerprintError):
        embed(windows[0].horizon, other, book)


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0), dict(eta=-1.0), dict(step=0.0), dict(iters=0), dict(optimizer="sgd"), dict(mode="x")],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EmbedConfig(**kwargs)


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        EmbedConfig.from_dict({"beta": 1})


def test_book_built_on_small_is_usable():
    fx = make_synthetic_protected_model(5, 64, 8, 4, 0.5)
    windows, stats = generate_synthetic_dataset(5, 40, 8, 8)
    windows = [normalize(w, stats) for w in windows]
    book = build_book(fx.model, windows, windows, M=4)
    out, plan = embed(windows[0].horizon, fx.model, book, EmbedConfig(alpha=2))
    assert len(plan.entries) == 2
