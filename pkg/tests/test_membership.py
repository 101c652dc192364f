import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridpursuit.grid_world import EvaderState, Position, PursuerState
from gridpursuit.membership import (Coefficients, confidence, credit, membership,
                                    membership_matrix, priority)

from oracles import make_world


def pursuer(x=0, y=0, succeeded=0, participated=0, abandoned=0, rng=3):
    return PursuerState(id=0, pos=Position(x, y), succeeded=succeeded,
                        participated=participated, abandoned=abandoned,
                        pursuit_range=rng)


class TestConfidence:
    def test_no_history(self):
        assert confidence(pursuer()) == 0.1

    def test_plain_ratio(self):
        assert confidence(pursuer(succeeded=8, participated=10)) == pytest.approx(0.8)

    def test_floor(self):
        assert confidence(pursuer(succeeded=1, participated=20)) == 0.1


class TestCredit:
    def test_no_abandonment(self):
        assert credit(pursuer(succeeded=3, participated=5)) == 1.0

    def test_plain_ratio(self):
        p = pursuer(succeeded=2, participated=8, abandoned=5)
        assert credit(p) == pytest.approx(0.5)

    def test_clamped_to_floor(self):
        # raw value would be 0; the declared range floors it at 0.1
        p = pursuer(succeeded=2, participated=8, abandoned=10)
        assert credit(p) == pytest.approx(0.1)

    def test_fresh_pursuer(self):
        assert credit(pursuer()) == 1.0


class TestMembership:
    def test_colocated_ideal(self):
        world = make_world(10, 10, [(5, 5)], [(5, 5, 1)])
        p = world.pursuers[0]
        p.succeeded = p.participated = 5
        value = membership(world.evaders[0], p, world)
        assert value == pytest.approx(1.0)

    def test_distance_only_opposite_corners(self):
        world = make_world(10, 10, [(0, 0)], [(9, 9, 1)])
        coefs = Coefficients(1.0, 0.0, 0.0)
        value = membership(world.evaders[0], world.pursuers[0], world, coefs)
        expected = 1.0 - math.hypot(9, 9) / math.hypot(10, 10)
        assert value == pytest.approx(expected)
        # at the true corner-to-corner maximum the term reaches exactly zero
        far = make_world(10, 10, [(0, 0)], [(10 - 1, 10 - 1, 1)])
        assert membership(far.evaders[0], far.pursuers[0], far, coefs) >= 0.0

    def test_hand_evaluated_mixture(self):
        # closeness 0.5, confidence 0.1, credit 1.0, equal weights
        world = make_world(30, 40, [(0, 0)], [(15, 20, 1)])
        diag = math.hypot(30, 40)
        dist = math.hypot(15, 20)
        assert dist / diag == pytest.approx(0.5)
        value = membership(world.evaders[0], world.pursuers[0], world)
        assert value == pytest.approx((0.5 + 0.1 + 1.0) / 3.0)
        assert value == pytest.approx(0.5333333333, abs=1e-6)

    def test_raw_distance_mode(self):
        world = make_world(10, 10, [(5, 5)], [(5, 5, 1)])
        value = membership(world.evaders[0], world.pursuers[0], world,
                           Coefficients(1, 0, 0), invert_distance=False)
        assert value == pytest.approx(0.0)


class TestPriority:
    def test_base_case(self):
        world = make_world(20, 20, [], [(10, 10, 1)])
        assert priority(world.evaders[0], world) == pytest.approx(1.0)

    def test_three_invaders(self):
        world = make_world(20, 20, [(9, 10), (11, 10), (10, 12)], [(10, 10, 2)])
        assert priority(world.evaders[0], world) == pytest.approx(2.0)

    def test_brute_force_count(self):
        cells = [(8, 8), (9, 12), (12, 9), (11, 11), (13, 13), (1, 1)]
        world = make_world(20, 20, cells, [(10, 10, 4)], pursuit_range=3)
        invaders = sum(1 for (x, y) in cells if max(abs(x - 10), abs(y - 10)) <= 3)
        assert invaders == 5
        assert priority(world.evaders[0], world) == pytest.approx(1.5)


class TestMembershipMatrix:
    def test_degenerate_1x1(self):
        world = make_world(10, 10, [(5, 5)], [(5, 5, 1)])
        p = world.pursuers[0]
        p.succeeded = p.participated = 5
        m = membership_matrix(world)
        assert m.values.shape == (1, 1)
        assert m.values[0, 0] == pytest.approx(1.0)

    def test_identical_positions_identical_rows(self):
        world = make_world(10, 10, [(1, 1), (8, 3)], [(5, 5, 1), (5, 5, 2)])
        m = membership_matrix(world)
        assert np.allclose(m.values[0], m.values[1])

    def test_paper_scale_shape_and_entries(self):
        rng = np.random.default_rng(0)
        cells = {(int(x), int(y)) for x, y in rng.integers(0, 100, size=(80, 2))}
        cells = sorted(cells)[:42]
        world = make_world(100, 100, cells[:33], [(x, y, 2) for x, y in cells[33:42]])
        m = membership_matrix(world)
        assert m.values.shape == (9, 33)
        assert (m.values >= 0).all() and (m.values <= 1).all()
        # spot-check entries against the scalar operation
        by_id = {e.id: e for e in world.evaders}
        for i, j in [(0, 0), (4, 17), (8, 32)]:
            e = by_id[m.evader_ids[i]]
            p = next(pp for pp in world.pursuers if pp.id == m.pursuer_ids[j])
            assert m.values[i, j] == pytest.approx(membership(e, p, world))

    def test_requires_alive_evaders(self):
        world = make_world(10, 10, [(1, 1)], [(5, 5, 1)])
        world.evaders[0].captured = True
        with pytest.raises(ValueError):
            membership_matrix(world)

    def test_csv_round_trip(self, tmp_path):
        world = make_world(10, 10, [(1, 1), (3, 3)], [(5, 5, 1), (7, 2, 2)])
        m = membership_matrix(world)
        path = tmp_path / "matrix.csv"
        m.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",") == ["evader_id", "0", "1"]
        values = [[float(v) for v in line.split(",")[1:]] for line in lines[1:]]
        assert np.allclose(values, m.values)


coef_strategy = st.tuples(
    st.floats(0.01, 10), st.floats(0, 10), st.floats(0, 10)
).map(lambda t: Coefficients(*t))


@st.composite
def world_with_pair(draw):
    w = draw(st.integers(4, 40))
    h = draw(st.integers(4, 40))
    ex = draw(st.integers(0, 3))  # clearance so a farther pursuer exists
    ey = draw(st.integers(0, 3))
    px = draw(st.integers(0, w - 1))
    py = draw(st.integers(0, h - 1))
    succeeded = draw(st.integers(0, 20))
    participated = succeeded + draw(st.integers(0, 20))
    abandoned = draw(st.integers(0, 20))
    world = make_world(w, h, [(px, py)], [(ex, ey, draw(st.integers(1, 4)))])
    p = world.pursuers[0]
    p.succeeded, p.participated, p.abandoned = succeeded, participated, abandoned
    return world


@settings(max_examples=300, deadline=None)
@given(world=world_with_pair(), coefs=coef_strategy)
def test_membership_stays_in_unit_interval(world, coefs):
    value = membership(world.evaders[0], world.pursuers[0], world, coefs)
    assert 0.0 <= value <= 1.0


@settings(max_examples=300, deadline=None)
@given(world=world_with_pair(), coefs=coef_strategy, scale=st.floats(0.01, 100))
def test_membership_coefficient_scaling_invariance(world, coefs, scale):
    scaled = Coefficients(coefs.coef_dist * scale, coefs.coef_conf * scale,
                          coefs.coef_cred * scale)
    a = membership(world.evaders[0], world.pursuers[0], world, coefs)
    b = membership(world.evaders[0], world.pursuers[0], world, scaled)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(world=world_with_pair(), coefs=coef_strategy,
       fx=st.integers(0, 39), fy=st.integers(0, 39))
def test_membership_monotone_in_distance(world, coefs, fx, fy):
    p = world.pursuers[0]
    e = world.evaders[0]
    far = PursuerState(id=1, pos=Position(min(fx, world.config.width - 1),
                                          min(fy, world.config.height - 1)),
                       succeeded=p.succeeded, participated=p.participated,
                       abandoned=p.abandoned)
    near_d = math.hypot(p.pos.x - e.pos.x, p.pos.y - e.pos.y)
    far_d = math.hypot(far.pos.x - e.pos.x, far.pos.y - e.pos.y)
    if near_d > far_d:
        p, far = far, p
    assert membership(e, p, world, coefs) >= membership(e, far, world, coefs) - 1e-12


@settings(max_examples=200, deadline=None)
@given(d1=st.integers(1, 4), d2=st.integers(1, 4), invaders=st.integers(0, 6))
def test_priority_monotonicity(d1, d2, invaders):
    cells = [(10 + i, 10) for i in range(1, invaders + 1)]
    world = make_world(30, 30, cells, [(10, 10, min(d1, d2)), (25, 25, max(d1, d2))],
                       pursuit_range=8)
    easy, hard = world.evaders
    if easy.difficulty < hard.difficulty:
        assert priority(easy, world) > priority(hard, world) or invaders == -1
    more = make_world(30, 30, cells + [(10, 12)], [(10, 10, d1)], pursuit_range=8)
    fewer = make_world(30, 30, cells, [(10, 10, d1)], pursuit_range=8)
    assert priority(more.evaders[0], more) > priority(fewer.evaders[0], fewer)
