import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsprl.core import (ParseError, TspInstance, generate_instance, read_instance, tour_length,
                        validate_tour, write_instance)

SQUARE = TspInstance([[0, 0], [0, 1], [1, 1], [1, 0]])


def test_generate_range_and_size():
    inst = generate_instance(20, 42)
    assert inst.n == 20
    assert inst.coords.min() >= 0 and inst.coords.max() <= 1


def test_generate_single_city():
    assert generate_instance(1, 7).n == 1


def test_generate_deterministic():
    a, b = generate_instance(20, 42), generate_instance(20, 42)
    assert a.coords.tobytes() == b.coords.tobytes()


def test_generate_rejects_zero():
    with pytest.raises(ValueError):
        generate_instance(0, 1)


def test_generate_mean_is_centred():
    pts = np.concatenate([generate_instance(1000, s).coords for s in range(100)])
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01)


@pytest.mark.parametrize("coords", [
    [[0.5, 1.5]], [[np.nan, 0.2]], [[0.1, np.inf]], [[-0.1, 0.2]], np.zeros((0, 2)),
])
def test_instance_validation(coords):
    with pytest.raises(ValueError):
        TspInstance(coords)


def test_instance_is_immutable():
    with pytest.raises(ValueError):
        SQUARE.coords[0, 0] = 0.3


def test_square_perimeter():
    assert tour_length(SQUARE, [0, 1, 2, 3]) == pytest.approx(4.0, abs=1e-12)


def test_crossed_square():
    inst = TspInstance([[0, 0], [1, 1], [0, 1], [1, 0]])
    assert tour_length(inst, [0, 1, 2, 3]) == pytest.approx(2 + 2 * math.sqrt(2), abs=1e-12)


@pytest.mark.parametrize("order", [[0, 1, 2], [1, 0, 2], [2, 0, 1]])
def test_collinear_doubles_back(order):
    inst = TspInstance([[0, 0], [0.5, 0], [1, 0]])
    assert tour_length(inst, order) == pytest.approx(2.0, abs=1e-12)


def test_tour_length_rejects_invalid():
    with pytest.raises(ValueError):
        tour_length(SQUARE, [0, 1, 1, 3])


@pytest.mark.parametrize("order,n,fragment", [
    ([0, 1, 1, 3], 4, "duplicate"),
    ([0, 1, 2], 4, "wrong length"),
    ([0, 1, 2, 4], 4, "out of range"),
])
def test_validate_tour_violations(order, n, fragment):
    assert fragment in validate_tour(order, n)


def test_validate_tour_ok():
    assert validate_tour([0, 1, 2, 3], 4) is None


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 2**32 - 1), shift=st.integers(0, 29))
def test_length_invariant_under_rotation_and_reversal(n, seed, shift):
    inst = generate_instance(n, seed)
    tour = np.random.default_rng(seed).permutation(n)
    base = tour_length(inst, tour)
    assert tour_length(inst, np.roll(tour, shift % n)) == pytest.approx(base, abs=1e-9)
    assert tour_length(inst, tour[::-1]) == pytest.approx(base, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 2**32 - 1))
def test_length_at_least_twice_max_distance(n, seed):
    inst = generate_instance(n, seed)
    tour = np.random.default_rng(seed).permutation(n)
    assert tour_length(inst, tour) >= 2 * inst.distances.max() - 1e-12


def test_native_roundtrip(tmp_path):
    inst = generate_instance(17, 3)
    path = tmp_path / "inst.txt"
    write_instance(inst, path)
    again = read_instance(path)
    assert again == inst
    assert write_instance(again) == path.read_text()


def test_native_roundtrip_stream():
    inst = generate_instance(5, 9)
    buf = io.StringIO()
    write_instance(inst, buf)
    buf.seek(0)
    assert read_instance(buf) == inst


def test_truncated_file_names_line():
    text = "4\n0.1 0.2\n0.3 0.4\n"
    with pytest.raises(ParseError) as err:
        read_instance(io.StringIO(text))
    assert err.value.line == 4
    assert "line 4" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("x\n", 1),
    ("2\n0.1 0.2\n0.3\n", 3),
    ("2\n0.1 0.2\n0.3 abc\n", 3),
    ("1\n0.1 1.2\n", 2),
    ("1\n0.1 0.2\n0.5 0.5\n", 3),
])
def test_malformed_native(text, line):
    with pytest.raises(ParseError) as err:
        read_instance(io.StringIO(text))
    assert err.value.line == line


TSPLIB_FIXTURE = """NAME : five
COMMENT : hand-made fixture
TYPE : TSP
DIMENSION : 5
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
2 200 0
3 100 50
4 200 100
5 0 100
EOF
"""


def test_tsplib_rescale_matches_hand_computation():
    # x span 200, y span 100: everything divided by 200 after shifting to the origin
    expected = np.array([[0, 0], [1, 0], [0.5, 0.25], [1, 0.5], [0, 0.5]])
    inst = read_instance(io.StringIO(TSPLIB_FIXTURE))
    assert inst.name == "five"
    np.testing.assert_allclose(inst.coords, expected, atol=1e-15)


def test_tsplib_offset_rescale():
    text = TSPLIB_FIXTURE.replace("1 0 0", "1 -40 10").replace("5 0 100", "5 -40 110")
    inst = read_instance(io.StringIO(text))
    # x from -40..200 (span 240), y from 0..110
    assert inst.coords[0] == pytest.approx([0, 10 / 240])
    assert inst.coords[1] == pytest.approx([1, 0])


@pytest.mark.parametrize("mutate,line", [
    (lambda t: t.replace("3 100 50", "3 100"), 9),
    (lambda t: t.replace("DIMENSION : 5", "DIMENSION : 6"), 12),
    (lambda t: t.replace("EUC_2D", "GEO"), 6),
    (lambda t: t.replace("TYPE : TSP", "TYPE TSP"), 3),
])
def test_tsplib_errors(mutate, line):
    with pytest.raises(ParseError) as err:
        read_instance(io.StringIO(mutate(TSPLIB_FIXTURE)))
    assert err.value.line == line
