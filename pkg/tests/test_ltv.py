import math

import mpmath
import numpy as np
import pytest

from vhull import ltv
from vhull.agent import UpdateEvent


def event(agent, nodes, weights, alpha=0.2, anchors=(), k=0, contact_k=(0, 0, 0)):
    return UpdateEvent(
        k=k,
        agent=agent,
        nodes=tuple(nodes),
        is_anchor=tuple(q in anchors for q in nodes),
        contact_k=tuple(contact_k),
        weights=tuple(weights),
        self_weight=alpha,
        estimates=tuple((float(q), 0.0) for q in nodes),
        rel_error=0.0,
        anchor_touched=bool(anchors),
    )


def random_stream(rng, n=5, m=1, length=1000, p_update=0.6, p_anchor=0.2):
    out = []
    for k in range(length):
        if rng.random() > p_update:
            continue
        i = int(rng.integers(n))
        alpha = float(rng.uniform(0.2, 0.9))
        others = [q for q in range(n) if q != i]
        if m and rng.random() < p_anchor:
            nodes = list(rng.choice(others, 2, replace=False)) + [n + int(rng.integers(m))]
            anchors = (nodes[2],)
            # keep the anchor entry above its floor
            w = rng.dirichlet((1, 1, 1))
            w = 0.5 * w + 0.5 * np.array([0.0, 0.0, 1.0])
        else:
            nodes = list(rng.choice(others, 3, replace=False))
            anchors = ()
            w = rng.dirichlet((1, 1, 1))
        out.append(ltv.capture_step(event(i, nodes, w, alpha, anchors), n, m, k=k))
    return out


def brute_product(stream, n):
    P = np.eye(n)
    for sm in stream:
        P = sm.P @ P
    return P


def test_capture_identity():
    sm = ltv.capture_step(None, 3, 1, k=4)
    assert np.array_equal(sm.P, np.eye(3)) and np.array_equal(sm.B, np.zeros((3, 1)))
    assert sm.row_sum() == 1.0 and not sm.strictly_substochastic()


def test_capture_placement():
    # barycentrics (0.375, 0.375, 0.25) scaled by 0.8 give 0.3, 0.3, 0.2
    sm = ltv.capture_step(event(0, (1, 2, 3), (0.375, 0.375, 0.25), anchors=(3,)), 3, 1)
    assert sm.P[0] == pytest.approx([0.2, 0.3, 0.3])
    assert sm.B[0] == pytest.approx([0.2])
    assert sm.row_sum() == pytest.approx(0.8) and sm.row_sum() <= 1 - 0.1
    assert sm.strictly_substochastic()
    assert sm.k == 0 * 3 + 0


def test_capture_anchorless_row_sums_to_one():
    w = (0.21, 0.33, 1.0 - (0.21 + 0.33))
    sm = ltv.capture_step(event(1, (0, 2, 3), w), 4, 0)
    assert sm.row_sum() == pytest.approx(1.0, abs=4e-16)
    assert not sm.strictly_substochastic()


def test_capture_sources_follow_turn_order():
    sm = ltv.capture_step(event(1, (0, 2, 3), (0.3, 0.3, 0.4), k=9, contact_k=(4, 5, 6)), 4, 0)
    assert sm.sources == {0: 5, 2: 5, 3: 6}


def test_capture_rejects_bad_events():
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(0, (1, 2, 3), (0.45, 0.45, 0.1), anchors=(3,)), 3, 1, anchor_min=0.1)
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(0, (1, 2, 9), (0.3, 0.3, 0.4), anchors=(9,)), 3, 1)
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(0, (0, 1, 2), (0.3, 0.3, 0.4)), 3, 0)
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(5, (0, 1, 2), (0.3, 0.3, 0.4)), 3, 0)
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(0, (1, 2, 3), (0.02, 0.58, 0.4)), 4, 0, agent_min=0.05)
    with pytest.raises(ltv.MalformedEvent):
        ltv.capture_step(event(0, (1, 2, 3), (0.3, 0.3, 0.4), alpha=0.1), 4, 0, self_floor=0.2)


def test_verify_trivial_cases():
    truths = np.random.default_rng(0).uniform(size=(6, 2, 2))
    assert ltv.verify_error_dynamics([], truths, truths) == 0.0
    truths = np.repeat(truths[:1], 6, axis=0)
    est = truths + 0.5
    assert ltv.verify_error_dynamics([], est, truths) == 0.0


def test_verify_detects_mismatch():
    truths = np.zeros((3, 1, 2))
    est = np.zeros((3, 1, 2))
    est[2, 0, 0] = 1.0
    assert ltv.verify_error_dynamics([], est, truths) == 1.0


def test_verify_one_update():
    # agent 0 averages with agents 1, 2, 3 whose errors are fixed
    rng = np.random.default_rng(1)
    e0 = rng.normal(size=(4, 2))
    w = np.array([0.2, 0.3, 0.5])
    e1 = e0.copy()
    e1[0] = 0.2 * e0[0] + 0.8 * (w @ e0[1:])
    truths = np.zeros((2, 4, 2))
    est = -np.stack([e0, e1])
    sm = ltv.capture_step(event(0, (1, 2, 3), w, k=0), 4, 0)
    assert ltv.verify_error_dynamics([sm], est, truths) < 1e-15


def test_slices_identity_stream():
    stream = [ltv.StepMatrices(k, 3, 1) for k in range(20)]
    rep = ltv.decompose_slices(stream)
    assert rep.slices == [] and rep.tail is None
    assert np.array_equal(rep.full_product(), np.eye(3))


def test_single_substochastic_matrix():
    sm = ltv.StepMatrices(0, 1, 1, agent=0, p_row=np.array([0.8]), b_row=np.array([0.2]))
    rep = ltv.decompose_slices([sm])
    assert rep.lengths == [1]
    assert rep.slices[0].norm == pytest.approx(0.8)


def test_slices_match_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(10):
        stream = random_stream(rng)
        rep = ltv.decompose_slices(stream)
        ref = brute_product(stream, 5)
        assert np.max(np.abs(rep.full_product() - ref)) <= 1e-12
        assert rep.slices and all(s.norm < 1 for s in rep.slices)
        # slices tile the chain between the lead and the tail
        for a, b in zip(rep.slices, rep.slices[1:]):
            assert a.end < b.start


def test_slices_without_anchor():
    stream = random_stream(np.random.default_rng(3), m=0)
    rep = ltv.decompose_slices(stream)
    assert rep.slices == []
    _, norms, _ = ltv.product_norm(stream, 5)
    assert np.all(np.abs(norms - 1.0) <= 1e-12)


def test_product_norm_non_increasing():
    stream = random_stream(np.random.default_rng(8))
    _, norms, prod = ltv.product_norm(stream, 5)
    assert np.all(np.diff(norms) <= 1e-15)
    assert np.allclose(prod, brute_product(stream, 5), atol=1e-12)
    ks, norms, prod = ltv.product_norm([ltv.StepMatrices(k, 2, 0) for k in range(5)])
    assert np.all(norms == 1.0)


def test_growth_bound_constant_for_gamma1_zero():
    p = ltv.GrowthBoundParams(0.2, 0.05, 0.0, 1.0)
    assert ltv.growth_bound(1, p) == ltv.growth_bound(50, p)
    ref = math.log((1 - math.exp(-1.0)) / 0.95) / math.log(0.2) + 1
    assert ltv.growth_bound(3, p) == pytest.approx(ref, rel=1e-14)


def test_growth_bound_invalid_params():
    p = ltv.GrowthBoundParams(0.2, 0.8, 0.0, 3.0)
    with pytest.raises(ltv.InvalidParams):
        ltv.growth_bound(1, p)
    raw = ltv.growth_bound(1, p, check=False)
    assert raw == pytest.approx(math.log((1 - math.exp(-3)) / 0.2) / math.log(0.2) + 1, rel=1e-14)
    for bad in ((0.0, 0.5, 0, 1), (0.5, 1.0, 0, 1), (0.5, 0.5, 2, 1), (0.5, 0.5, 0, 0)):
        with pytest.raises(ltv.InvalidParams):
            ltv.GrowthBoundParams(*bad)


def mp_bound(i, b1, b2, g1, g2):
    mpmath.mp.dps = 50
    x = mpmath.mpf(g2) * mpmath.mpf(i) ** (-mpmath.mpf(g1))
    return mpmath.log((1 - mpmath.exp(-x)) / (1 - mpmath.mpf(b2))) / mpmath.log(mpmath.mpf(b1)) + 1


def test_growth_bound_against_mpmath():
    worst = 0.0
    for b1 in (0.05, 0.2, 0.5, 0.9):
        for b2 in (0.0, 0.1, 0.5):
            for g1 in (0.0, 0.25, 0.5, 1.0):
                for g2 in (0.7, 1.0, 3.0):
                    p = ltv.GrowthBoundParams(b1, b2, g1, g2)
                    for i in (1, 2, 10, 1000):
                        try:
                            got = ltv.growth_bound(i, p)
                        except ltv.InvalidParams:
                            assert b2 >= math.exp(-g2 * i ** -g1)
                            continue
                        ref = mp_bound(i, b1, b2, g1, g2)
                        worst = max(worst, abs(got - float(ref)))
    assert worst <= 1e-12


def test_check_growth_bound():
    p = ltv.GrowthBoundParams(0.2, 0.05, 1.0, 1.0)
    gc = ltv.check_growth_bound([1, 50, 1, 1], p)
    assert gc.ok == [True, False, True, True]
    assert gc.prefix_ok == [True, True, True, True]
    assert gc.fraction_ok == 0.75 and gc.all_prefixes
    assert ltv.GrowthBoundParams.from_weights(0.2, 0.1, 0, 0.05) == ltv.GrowthBoundParams(0.2, 0.9, 0, 0.05)


def test_report_serialises():
    rep = ltv.decompose_slices(random_stream(np.random.default_rng(0), length=200))
    d = rep.to_dict()
    assert d["stats"]["completed"] == len(rep.slices)
    assert [s["length"] for s in d["slices"]] == rep.lengths
