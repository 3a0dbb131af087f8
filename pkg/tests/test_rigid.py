import math
from fractions import Fraction

import numpy as np
import pytest

from densecsp.additive import AdditiveBackend, AdditiveRequest, additive_solve
from densecsp.core import objective, random_instance
from densecsp.encodings.hier import cc_problem, enumerate_trunks, hier_to_rigid_csp, tree_cost_num
from densecsp.errors import CapExceededError, InvalidInputError
from densecsp.generators import gen_planted_hier
from densecsp.oracle import exact_csp, exact_hier
from densecsp.rigid import (
    RecursionFrame,
    RigidPtasParams,
    _Context,
    auto_samples,
    cc_recurse,
    solve_hierarchical,
    solve_rigid,
)
from densecsp.report import PhaseTimer

ONE = Fraction(1)


def _params(**kw):
    base = dict(eps=Fraction(3, 10), delta=ONE, samples=4)
    base.update(kw)
    return RigidPtasParams(**base)


def _cc(n, d, noise, seed):
    ph = gen_planted_hier(n, 1, d, noise, seed)
    return ph, hier_to_rigid_csp(ph.problem, ph.trunk)


def test_auto_sample_count():
    want = math.ceil(432**2 * 16 * math.log(1440 * 8) / 2)
    assert auto_samples(ONE, 2) == want
    assert _params(samples=None).sample_count(2) == want
    assert _params().depth_limit(3) == 4


def test_cost_zero_two_cluster_instance():
    for seed in range(5):
        ph, inst = _cc(10, 2, 0.0, seed)
        assert exact_csp(inst)[1] == 0
        for force in (False, True):
            rep = solve_rigid(inst, _params(seed=seed, force_recursion=force))
            assert rep.cost == 0


def test_principal_branch_clears_everything_at_cost_zero():
    ph, inst = _cc(10, 2, 0.0, 1)
    rep = solve_rigid(inst, _params(seed=1, force_recursion=True), reference=ph.labels)
    path = rep.trace["principal_path"]
    assert [e["tricky"] for e in path] == [10, 0]
    assert path[-1]["finished"] == 2


def test_depth_limit_frame_returns_additive_answer():
    rng = np.random.default_rng(70)
    inst = random_instance(7, 2, 3, rng, eta=2)
    y = rng.integers(0, 3, size=7)
    T = (1, 3, 4, 6)
    ctx = _Context(inst, _params(force_recursion=True), PhaseTimer(), None)
    x, cost = cc_recurse(RecursionFrame(T, y, 4), ctx)
    want = additive_solve(AdditiveRequest(inst, y, T), AdditiveBackend())
    assert cost == want.cost and np.array_equal(x, want.assignment)
    assert ctx.branching == 0


def test_root_at_depth_limit_is_oracle_with_exact_backend():
    rng = np.random.default_rng(71)
    inst = random_instance(8, 2, 2, rng, eta=2)
    rep = solve_rigid(inst, _params(max_depth=0, force_recursion=True))
    assert rep.cost == exact_csp(inst)[1] and rep.trace["branching_frames"] == 0


def test_pinned_agreement_in_every_frame():
    rng = np.random.default_rng(72)
    for seed in range(5):
        inst = random_instance(9, 2, 3, rng, eta=1, density=0.9)
        y = rng.integers(0, 3, size=9)
        T = tuple(sorted(rng.choice(9, 6, replace=False).tolist()))
        ctx = _Context(inst, _params(seed=seed, force_recursion=True, samples=2), PhaseTimer(), None)
        x, cost = cc_recurse(RecursionFrame(T, y, 0), ctx)
        fixed = [v for v in range(9) if v not in T]
        assert np.array_equal(x[fixed], y[fixed])
        assert cost == objective(inst, x)


def test_cost_never_below_optimum():
    rng = np.random.default_rng(73)
    for seed in range(6):
        inst = random_instance(8, 2, 3, rng, eta=2)
        rep = solve_rigid(inst, _params(seed=seed, force_recursion=True, samples=2))
        assert rep.cost >= exact_csp(inst)[1]


def test_frame_counter_respects_bound():
    for seed in range(3):
        _, inst = _cc(10, 3, 0.1, seed)
        rep = solve_rigid(inst, _params(seed=seed, force_recursion=True, samples=2))
        tr = rep.trace
        assert tr["frame_bound"] == (3**2) ** 4
        assert tr["branching_frames"] <= tr["frame_bound"]
        assert tr["frames"] >= tr["branching_frames"]


def test_guess_cap_and_arity():
    _, inst = _cc(8, 2, 0.1, 0)
    with pytest.raises(CapExceededError, match="smaller s"):
        solve_rigid(inst, _params(samples=12, guess_cap=2**10, force_recursion=True))
    with pytest.raises(InvalidInputError):
        solve_rigid(random_instance(5, 3, 2, np.random.default_rng(0)), _params())


def test_deterministic_report():
    _, inst = _cc(10, 3, 0.1, 4)
    p = _params(seed=9, force_recursion=True, samples=3, additive=AdditiveBackend("sampled", sample_size=5, seed=1))
    assert solve_rigid(inst, p).canonical() == solve_rigid(inst, p).canonical()


def test_memoized_children_reused():
    _, inst = _cc(10, 2, 0.05, 5)
    rep = solve_rigid(inst, _params(seed=5, force_recursion=True))
    # sampled vertices repeat, so distinct guesses collapse onto equal children
    assert rep.trace["memo_hits"] + rep.trace["frames"] > rep.trace["branching_frames"]


def test_principal_path_finishing_monotone():
    strict = steps = 0
    for seed in range(15):
        _, inst = _cc(10, 3, 0.05, seed)
        xs, _ = exact_csp(inst)
        rep = solve_rigid(inst, _params(seed=seed, force_recursion=True, samples=3), reference=xs)
        done = [e["finished"] for e in rep.trace["principal_path"]]
        assert all(a <= b for a, b in zip(done, done[1:]))
        strict += sum(a < b for a, b in zip(done, done[1:]))
        steps += len(done) - 1
    print(f"principal path strict-increase rate {strict}/{steps}")


def test_hierarchical_single_level_matches_rigid():
    for seed in range(4):
        ph = gen_planted_hier(9, 1, 3, 0.1, seed)
        p = _params(seed=seed, force_recursion=True, samples=3)
        h = solve_hierarchical(ph.problem, p)
        r = solve_rigid(hier_to_rigid_csp(ph.problem, enumerate_trunks(3, 1)[0]), p)
        assert h.cost == r.cost and np.array_equal(h.assignment, r.assignment)
        assert h.trace["trunks"] == 1


def test_correlation_clustering_cost_direct():
    rng = np.random.default_rng(74)
    A = np.triu(rng.integers(0, 2, (8, 8)), 1)
    A = A + A.T
    hp = cc_problem(A, 3)
    trunk = enumerate_trunks(3, 1)[0]
    for _ in range(20):
        lab = rng.integers(0, 3, 8)
        cut = sum(A[u, v] for u in range(8) for v in range(u + 1, 8) if lab[u] != lab[v])
        uncut = sum(1 - A[u, v] for u in range(8) for v in range(u + 1, 8) if lab[u] == lab[v])
        assert tree_cost_num(hp, trunk, lab) == cut + uncut


def test_hierarchical_zero_noise_cost_zero():
    for seed in range(3):
        ph = gen_planted_hier(8, 2, 2, 0.0, seed)
        rep = solve_hierarchical(ph.problem, _params(seed=seed))
        assert rep.cost == 0 == exact_hier(ph.problem)[2]
        assert rep.trace["trunks"] == len(enumerate_trunks(2, 2))
        assert rep.params["delta"] == Fraction(1, 2)


def test_hierarchical_never_below_oracle():
    for seed in range(3):
        ph = gen_planted_hier(7, 2, 2, 0.15, seed)
        rep = solve_hierarchical(ph.problem, _params(seed=seed, samples=2))
        assert rep.cost >= exact_hier(ph.problem)[2]


def test_single_cluster_hierarchy():
    ph = gen_planted_hier(5, 2, 1, 0.2, 0)
    rep = solve_hierarchical(ph.problem, _params())
    assert rep.assignment.tolist() == [0] * 5 and rep.cost == ph.planted_cost
