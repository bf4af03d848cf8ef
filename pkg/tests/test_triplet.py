import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from camofs.autodiff import Tape, check_gradients, cosine_distance
from camofs.roi import FgBgPartition
from camofs.triplet import TripletConfig, batch_triplet_loss, pre_hinge, triplet_loss


def brute_force(fg, bg, margin):
    """Direct scalar evaluation over every foreground and background member."""
    avg = [sum(f[c] for f in fg) / len(fg) for c in range(len(fg[0]))]

    def d(x, y):
        num = sum(a * b for a, b in zip(x, y))
        nx = sum(a * a for a in x) ** 0.5
        ny = sum(b * b for b in y) ** 0.5
        return 1.0 - num / (nx * ny)

    pos = sum(d(avg, f) for f in fg) / len(fg)
    neg = sum(d(avg, b) for b in bg) / len(bg)
    return max(pos - neg + margin, 0.0)


def part_of(fg, bg):
    return FgBgPartition.from_vectors([np.asarray(f, float) for f in fg],
                                      [np.asarray(b, float) for b in bg])


def test_separated_features_give_zero():
    assert float(triplet_loss(part_of([[1, 0]], [[0, 1]]), TripletConfig(0.5))) == 0.0


def test_indistinguishable_features_give_margin():
    loss = float(triplet_loss(part_of([[1, 1]], [[1, 1]]), TripletConfig(0.5)))
    assert abs(loss - 0.5) <= 1e-12


def test_matches_brute_force(rng):
    for _ in range(20):
        fg, bg = rng.normal(size=(3, 8)), rng.normal(size=(5, 8))
        m = float(rng.uniform(0, 2))
        got = float(triplet_loss(part_of(fg, bg), TripletConfig(m)))
        assert abs(got - brute_force(fg.tolist(), bg.tolist(), m)) <= 1e-12


def test_empty_sets_raise():
    with pytest.raises(ValueError):
        triplet_loss(part_of([[1, 0]], []))


def test_config_validation():
    with pytest.raises(ValueError):
        TripletConfig(margin=2.5)
    with pytest.raises(ValueError):
        TripletConfig(alpha=float("inf"))


def test_batch_single_and_mean(rng):
    p = part_of(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)))
    assert float(batch_triplet_loss([p])) == float(triplet_loss(p))
    zero = part_of([[1, 0]], [[0, 1]])
    half = part_of([[1, 1]], [[1, 1]])
    assert abs(float(batch_triplet_loss([zero, half])) - 0.25) <= 1e-12


def test_batch_matches_oracle_mean(rng):
    fgs = [rng.normal(size=(int(rng.integers(1, 4)), 6)) for _ in range(4)]
    bgs = [rng.normal(size=(int(rng.integers(1, 4)), 6)) for _ in range(4)]
    cfg = TripletConfig(0.5)
    got = float(batch_triplet_loss([part_of(f, b) for f, b in zip(fgs, bgs)], cfg))
    want = np.mean([brute_force(f.tolist(), b.tolist(), 0.5) for f, b in zip(fgs, bgs)])
    assert abs(got - want) <= 1e-12


def test_batch_skips_background_free_rois(rng):
    ok = part_of(rng.normal(size=(2, 4)), rng.normal(size=(2, 4)))
    no_bg = part_of(rng.normal(size=(2, 4)), [])
    assert float(batch_triplet_loss([ok, no_bg])) == float(triplet_loss(ok))
    with pytest.raises(ValueError):
        batch_triplet_loss([no_bg])


features = arrays(np.float64, st.tuples(st.integers(1, 4), st.just(5)),
                  elements=st.floats(-5, 5, allow_nan=False)).filter(
                      lambda a: np.all(np.linalg.norm(a, axis=1) > 1e-2))


@settings(max_examples=100, deadline=None)
@given(features, features, st.floats(0, 2))
def test_bounds(fg, bg, margin):
    if np.linalg.norm(fg.mean(axis=0)) < 1e-2:
        return
    loss = float(triplet_loss(part_of(fg, bg), TripletConfig(margin)))
    assert 0.0 <= loss <= 2.0 + margin + 1e-12


def test_gradient_matches_finite_differences(rng):
    checked = 0
    while checked < 30:
        fg, bg = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        cfg = TripletConfig(0.5)
        if abs(float(pre_hinge(part_of(fg, bg), cfg))) <= 1e-3:
            continue
        res = check_gradients(lambda t, l: triplet_loss(FgBgPartition.from_vectors(l[:3], l[3:]), cfg),
                              [*fg, *bg])
        assert res.ok, res
        checked += 1


def test_hinge_subgradient_is_zero():
    tape = Tape()
    fg = [tape.vector([1.0, 0.0])]
    bg = [tape.vector([0.0, 1.0])]
    # pre-hinge = 0 - 1 + 1 = 0 exactly
    loss = triplet_loss(FgBgPartition.from_vectors(fg, bg), TripletConfig(margin=1.0))
    tape.backward(loss)
    assert float(loss) == 0.0
    assert np.all(fg[0].grad == 0) and np.all(bg[0].grad == 0)


def test_cosine_distance_used_consistently(rng):
    x, y = rng.normal(size=3), rng.normal(size=3)
    p = part_of([x], [y])
    assert abs(float(pre_hinge(p, TripletConfig(0.0))) + float(cosine_distance(x, y))) <= 1e-12
