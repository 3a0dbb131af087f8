import math
from fractions import Fraction

import numpy as np
import pytest

from densecsp.additive import AdditiveBackend
from densecsp.core import CspBuilder, objective, random_instance
from densecsp.encodings.gb import GbInstance, gb_to_csp
from densecsp.errors import CapExceededError, InvalidInputError
from densecsp.fragile import (
    FragilePtasParams,
    auto_samples,
    b_hat_numerators,
    estimate_b_hat,
    extract_clearcut,
    greedy_round,
    solve_fragile,
    solve_fragile_detailed,
)
from densecsp.generators import gen_planted_gb, planted_switches
from densecsp.oracle import exact_csp, exact_gb

HALF = Fraction(1, 2)


def _planted(m, noise, seed):
    gb, x, y = gen_planted_gb(m, noise, seed)
    return gb, gb_to_csp(gb), planted_switches(x, y)


def _params(**kw):
    base = dict(eps=Fraction(1, 5), delta=HALF, samples=3)
    base.update(kw)
    return FragilePtasParams(**base)


def test_auto_sample_count():
    assert auto_samples(HALF, 2, 2) == 595
    assert _params(samples=None).sample_count(2, 2) == 595


def test_cost_zero_board_solved_exactly():
    for seed in range(5):
        gb, inst, xs = _planted(6, 0.0, seed)
        assert exact_gb(gb)[2] == 0
        rep = solve_fragile(inst, _params(seed=seed, skip_prepass=True))
        assert rep.cost == 0 and objective(inst, rep.assignment) == 0


def test_prepass_answer_returned_when_expensive():
    gb, inst, _ = _planted(6, 0.2, 3)
    opt = exact_gb(gb)[2]
    rep = solve_fragile(inst, _params())
    assert opt > 0 and rep.trace["branch"] == "prepass"
    assert rep.cost == rep.trace["prepass_cost"]
    assert rep.cost <= (1 + Fraction(1, 5)) * opt


def test_guess_cap_error():
    _, inst, _ = _planted(4, 0.0, 0)
    with pytest.raises(CapExceededError, match="smaller s"):
        solve_fragile(inst, _params(samples=10, guess_cap=2**8))


def test_param_validation():
    with pytest.raises(InvalidInputError):
        _params(eps=0)
    with pytest.raises(InvalidInputError):
        _params(delta=Fraction(3, 2))
    with pytest.raises(InvalidInputError):
        _params(samples=0)


def test_one_sample_estimate_reads_single_table():
    b = CspBuilder(4, 2, 2)
    b.add((0, 1), [0, 1, 1, 0])
    b.add((1, 2), [0, 0, 1, 0])
    inst = b.build()
    # S = {1}, guess x1 = 1: estimate for v = 2 reads the (1, 2) table at (1, i)
    assert estimate_b_hat(inst, [(1,)], {1: 1}, 2, 0) == 4
    assert estimate_b_hat(inst, [(1,)], {1: 1}, 2, 1) == 0
    assert estimate_b_hat(inst, [(1,)], {1: 1}, 1, 0) == 0  # v inside the sample
    with pytest.raises(InvalidInputError):
        estimate_b_hat(inst, [(3,)], {1: 1}, 2, 0)


def test_estimate_matrix_matches_pointwise_estimate():
    rng = np.random.default_rng(60)
    inst = random_instance(6, 3, 2, rng, eta=2)
    samples = [(0, 2), (1, 4), (0, 2)]
    guess = {0: 1, 1: 0, 2: 1, 4: 1}
    M = b_hat_numerators(inst, samples, guess)
    scale = Fraction(math.comb(6, 2), len(samples) * inst.eta)
    for v in range(6):
        for i in range(2):
            assert estimate_b_hat(inst, samples, guess, v, i) == scale * int(M[v, i])


def test_estimate_minimised_at_planted_values():
    _, inst, xs = _planted(8, 0.0, 4)
    samples = [(0,), (9,), (3,), (12,)]
    guess = {u: int(xs[u]) for S in samples for u in S}
    x1 = greedy_round(inst, mode="from-estimates", estimates=b_hat_numerators(inst, samples, guess))
    assert np.array_equal(x1, xs)


def test_greedy_from_optimum_is_fixed_point():
    for seed in range(5):
        _, inst, xs = _planted(7, 0.0, seed)
        x2 = greedy_round(inst, xs)
        assert np.array_equal(x2, xs)
        assert np.array_equal(greedy_round(inst, x2), xs)


def test_greedy_round_modes():
    _, inst, xs = _planted(3, 0.0, 0)
    with pytest.raises(InvalidInputError):
        greedy_round(inst, mode="from-estimates")
    with pytest.raises(InvalidInputError):
        greedy_round(inst)
    with pytest.raises(InvalidInputError):
        greedy_round(inst, xs, mode="sequential")


def test_greedy_ties_go_to_lowest_value():
    est = np.array([[3, 3], [5, 1], [0, 0]])
    _, inst, _ = _planted(3, 0.0, 0)
    assert greedy_round(inst, mode="from-estimates", estimates=est).tolist() == [0, 1, 0]


def test_second_round_repairs_corruption():
    # counted up to the global complement, which is also an optimum
    for seed in range(30):
        _, inst, xs = _planted(16, 0.02, seed)
        x0 = xs.copy()
        x0[np.random.default_rng(seed).choice(32, 3, replace=False)] ^= 1
        x2 = greedy_round(inst, x0)
        after = min(int((x2 != xs).sum()), int((x2 != 1 - xs).sum()))
        assert after < 3


def test_clearcut_everything_at_optimum():
    _, inst, xs = _planted(6, 0.0, 2)
    C, T = extract_clearcut(inst, xs, greedy_round(inst, xs), HALF)
    assert C.size == 12 and T.size == 0


def test_clearcut_excludes_tie():
    b = CspBuilder(3, 2, 2)
    b.add((0, 1), [0, 1, 1, 0])
    inst = b.build()
    x = np.array([0, 0, 0])
    C, T = extract_clearcut(inst, x, greedy_round(inst, x), Fraction(1, 10))
    assert 2 in T.tolist() and 2 not in C.tolist()


def test_clear_variables_correct_on_principal_branch():
    good = 0
    for seed in range(40):
        gb, inst, _ = _planted(8, 0.05, seed)
        r, c, _ = exact_gb(gb)
        xs = np.concatenate([r, c]).astype(np.int64)
        x1, x2, C, T, _ = solve_fragile_detailed(inst, _params(samples=4, seed=seed), xs)
        good += bool((x2[C] == xs[C]).all())
    assert good >= 38


def test_tricky_set_small_when_first_round_clean():
    # |V \ C| <= 3 n gamma / delta whenever x1 has at most delta n / 12k corruptions
    for seed in range(40):
        gb, inst, _ = _planted(8, 0.05, seed)
        r, c, opt = exact_gb(gb)
        xs = np.concatenate([r, c]).astype(np.int64)
        x1, _, _, T, _ = solve_fragile_detailed(inst, _params(samples=4, seed=seed), xs)
        n = inst.n
        if (x1 != xs).sum() <= HALF * n / 24:
            gamma = Fraction(int(opt), math.comb(n, 2))
            assert T.size <= 3 * n * gamma / HALF


def test_cost_never_below_optimum():
    rng = np.random.default_rng(61)
    for seed in range(6):
        inst = random_instance(8, 2, 2, rng, eta=2)
        opt = exact_csp(inst)[1]
        for skip in (False, True):
            rep = solve_fragile(inst, _params(seed=seed, skip_prepass=skip, samples=2))
            assert rep.cost >= opt and rep.cost == objective(inst, rep.assignment)


def test_returned_cost_is_best_record():
    gb, inst, xs = _planted(6, 0.1, 7)
    rep = solve_fragile(inst, _params(skip_prepass=True), reference=xs)
    recs = rep.trace["guesses"]
    assert len(recs) == 2 ** len({u for S in rep.trace["sample_sets"] for u in S})
    assert rep.cost == min(r["cost"] for r in recs)
    assert recs[rep.trace["chosen_guess"]]["cost"] == rep.cost
    assert sum(r["principal"] for r in recs) == 1


def test_deterministic_report():
    _, inst, _ = _planted(6, 0.1, 8)
    p = _params(seed=5, skip_prepass=True, additive=AdditiveBackend("sampled", sample_size=4, seed=2))
    assert solve_fragile(inst, p).canonical() == solve_fragile(inst, p).canonical()


def test_problem_cost_uses_native_units():
    b = CspBuilder(3, 2, 2)
    b.add((0, 1), [0, 1, 1, 0])
    b.add((1, 2), [0, 1, 1, 0])
    b.add((0, 2), [1, 0, 0, 1])  # odd cycle: one violation at best
    inst = b.build()
    rep = solve_fragile(inst, _params(delta=Fraction(1, 3)))
    assert rep.problem_cost == rep.cost * inst.cost_unit == 1


def test_all_zero_board():
    inst = gb_to_csp(GbInstance.from_bits(np.zeros((2, 2), dtype=np.uint8)))
    rep = solve_fragile(inst, _params(samples=1))
    assert rep.cost == 0
