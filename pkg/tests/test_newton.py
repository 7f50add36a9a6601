import numpy as np
import pytest

from tocsynth import _backend
from tocsynth.errors import DeflationSingularityError
from tocsynth.newton import (
    DeflationState,
    SolveOptions,
    SolveStatus,
    clamp_admissible,
    deflate,
    deflated_jacobian,
    deflated_solve,
    is_admissible,
)
from tocsynth.poly import MultiPoly
from tocsynth.sysgen import PolySystem, ProblemSpec, build_system, system_factory


def scalar_quadratic():
    t = MultiPoly.variable(1, 0)
    return PolySystem.from_polys([t * t - 1])


def test_deflate_without_roots_is_identity():
    ds = DeflationState([], xi=0.0)
    assert np.array_equal(deflate([3.0, -2.0], [0.5, 0.5], ds), [3.0, -2.0])
    assert np.array_equal(deflated_jacobian([1.0], [[4.0]], [2.0], ds), [[4.0]])


def test_deflate_hand_values():
    assert deflate([8.0], [3.0], DeflationState([[1.0]], p=2, xi=0.0))[0] == pytest.approx(2.0)
    assert deflate([8.0], [3.0], DeflationState([[1.0]], p=2, xi=1.0))[0] == pytest.approx(10.0)


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("xi", [0.0, 1.0])
def test_deflated_jacobian_matches_finite_difference(p, xi):
    ds = DeflationState([[1.0]], p=p, xi=xi)

    def G(t):
        return deflate([t * t - 1], [t], ds)[0]

    h = 1e-6
    fd = (G(3 + h) - G(3 - h)) / (2 * h)
    assert deflated_jacobian([8.0], [[6.0]], [3.0], ds)[0, 0] == pytest.approx(fd, rel=1e-6)


def test_root_order_does_not_matter():
    t, F, J = [0.3, 0.9], [0.2, -1.1], [[1.0, 2.0], [0.5, -1.0]]
    a = DeflationState([[1.0, 1.0], [-1.0, 0.5]])
    b = DeflationState([[-1.0, 0.5], [1.0, 1.0]])
    assert np.allclose(deflate(F, t, a), deflate(F, t, b), rtol=1e-15)
    assert np.allclose(deflated_jacobian(F, J, t, a), deflated_jacobian(F, J, t, b), rtol=1e-15)


def test_singularity_near_known_root():
    with pytest.raises(DeflationSingularityError):
        deflate([0.0], [1.0 + 1e-9], DeflationState([[1.0]]))


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("xi", [0.0, 1.0])
def test_scalar_quadratic_exhausts_both_roots(p, xi):
    res = deflated_solve(scalar_quadratic(), SolveOptions(guess=np.array([3.0]), n_roots=2, p=p, xi=xi))
    assert res.status is SolveStatus.EXHAUSTED
    assert sorted(round(float(r[0]), 12) for r in res.roots) == [-1.0, 1.0]


def test_double_integrator_two_roots():
    res = deflated_solve(build_system(ProblemSpec(2, (-1, 0), 1)), SolveOptions(n_roots=2))
    found = sorted(tuple(np.round(r, 10)) for r in res.roots)
    assert found == [(-1.0, -1.0), (1.0, 1.0)]


def test_zero_roots_requested():
    res = deflated_solve(scalar_quadratic(), SolveOptions(n_roots=0))
    assert res.roots == [] and res.status is SolveStatus.EXHAUSTED


def test_no_real_roots_stalls():
    res = deflated_solve(build_system(ProblemSpec(2, (1, 0), 1)), SolveOptions(n_roots=1, max_iteration=200))
    assert res.roots == []
    assert res.status in (SolveStatus.STALLED, SolveStatus.DIVERGED)


def test_linear_system_matches_plain_newton():
    t1, t2 = MultiPoly.variable(2, 0), MultiPoly.variable(2, 1)
    sys_ = PolySystem.from_polys([t1 * 2 + t2 - 3, t1 - t2 * 4 + 1])
    res = deflated_solve(sys_, SolveOptions(n_roots=1))
    assert np.allclose(res.roots[0], np.linalg.solve([[2, 1], [1, -4]], [3, -1]), atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_returned_roots_are_separated_and_small(n, rng):
    fac = system_factory(n)
    for _ in range(5):
        cs = fac.instantiate(rng.uniform(-1, 1, n), 1)
        res = deflated_solve(cs, SolveOptions.for_dimension(n, n_roots=3))
        for i, r in enumerate(res.roots):
            assert np.max(np.abs(cs.residual(r))) <= 1e-8
            for s in res.roots[:i]:
                assert np.linalg.norm(r - s) > 1e-6


def test_admissibility():
    assert is_admissible([1.0, 1.0])
    assert not is_admissible([-1.0, -1.0])
    assert is_admissible([-1e-12, 0.5], tol=1e-9)
    assert np.array_equal(clamp_admissible([-1e-12, 0.5]), [0.0, 0.5])


def test_dimension_defaults():
    assert SolveOptions.for_dimension(3).restarts == 5
    wide = SolveOptions.for_dimension(4)
    assert wide.restart_box == (0.0, 4.0) and wide.restarts == 10
    assert SolveOptions.for_dimension(5, restarts=2).restarts == 2


@pytest.mark.skipif(len(_backend.available()) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("n", [2, 3, 4])
def test_backends_agree_bitwise(n, rng):
    fac = system_factory(n)
    xs = rng.uniform(-1, 1, (4, n))
    out = {}
    for name in ("compiled", "python"):
        prev = _backend.use(name)
        try:
            out[name] = [deflated_solve(fac.instantiate(x, 1), SolveOptions.for_dimension(n, n_roots=2)) for x in xs]
        finally:
            _backend.use(prev)
    for a, b in zip(out["compiled"], out["python"]):
        assert a.iterations == b.iterations and a.status == b.status
        assert all(np.array_equal(r, s) for r, s in zip(a.roots, b.roots))


def test_clamp_snaps_tiny_positive_lengths():
    assert np.array_equal(clamp_admissible([1e-17, 0.3, -2e-10]), [0.0, 0.3, 0.0])
