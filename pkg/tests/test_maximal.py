import math

import numpy as np
import pytest

from irregmc.errors import InsufficientDataError, InvalidArgumentError
from irregmc.maximal import (
    GridField,
    GridMeasure,
    gsp_field,
    gsp_stability,
    maximal_at,
    maximal_field,
    measure_from_atoms,
    measure_from_density,
    mollified_ball_gradient,
    percentile_lambda_grid,
    pointwise_check,
    superlevel_measure_atomic,
    weak_type_check,
)


def _box_density(fn, lo=-4.0, hi=4.0, cells=1024):
    return measure_from_density(GridField.from_function(fn, 1, lo, hi, cells))


@pytest.fixture(scope="module")
def slab():
    return _box_density(lambda x: (np.abs(x[..., 0]) <= 1.0).astype(float))


def test_maximal_slab_center(slab):
    # averaging 1_[-1,1] over [-s,s] is 1 for every s <= 1
    assert maximal_at(slab, [0.0]) == pytest.approx(1.0, abs=1e-12)


def test_maximal_slab_outside(slab):
    # best ball at x=2 covers the slab: mass 2 over length 6
    assert maximal_at(slab, [2.0]) == pytest.approx(1.0 / 3.0, abs=0.01)


def test_maximal_slab_restricted(slab):
    assert maximal_at(slab, [2.0], R=0.5) == 0.0


def test_maximal_dense_radius_scan_oracle(slab):
    # independent oracle: dense radius scan with exact cell-overlap interval mass
    density = slab.density
    h = density.spacing
    nodes = density.axis_nodes()
    vals = density.values
    cell_lo, cell_hi = nodes - h / 2, nodes + h / 2
    for x in (0.3, 1.4, 2.6):
        best = 0.0
        for s in np.linspace(h / 4, 8.0, 8000):
            overlap = np.clip(np.minimum(cell_hi, x + s) - np.maximum(cell_lo, x - s),
                              0.0, None)
            mass = float(np.sum(vals * overlap))
            best = max(best, mass / (2 * s))
        assert maximal_at(slab, [x]) == pytest.approx(best, rel=0.005)


def test_atom_maximal_exact():
    nu = measure_from_atoms([[0.0]], [1.0])
    # M nu(x) = 1 / (2|x|) in one dimension
    assert maximal_at(nu, [0.25]) == pytest.approx(2.0, rel=1e-12)
    assert maximal_at(nu, [-2.0]) == pytest.approx(0.25, rel=1e-12)
    assert maximal_at(nu, [0.0]) == math.inf
    assert maximal_at(nu, [2.0], R=0.5) == 0.0


def test_empty_measure():
    nu = GridMeasure(atoms=np.zeros((0, 1)), masses=np.zeros(0))
    assert maximal_at(nu, [1.0]) == 0.0
    rep = weak_type_check(nu, [0.5, 1.0])
    assert np.all(rep.superlevel_measures == 0.0)
    assert rep.violations == 0


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0, 4.0])
def test_single_atom_superlevel_closed_form(lam):
    # {M nu > lam} = {|x| < 1/(2 lam)}, so its measure is 1/lam
    nu = measure_from_atoms([[0.0]], [1.0])
    assert superlevel_measure_atomic(nu, lam) == pytest.approx(1.0 / lam, rel=1e-12)


def test_two_atom_superlevel_against_scan():
    nu = measure_from_atoms([[-1.0], [2.0]], [1.0, 0.5])
    for lam in (0.2, 0.5, 1.5):
        exact = superlevel_measure_atomic(nu, lam)
        xs = np.linspace(-12, 14, 200_001)
        vals = np.array([maximal_at(nu, [x]) for x in xs])
        scan = float(np.count_nonzero(vals > lam)) * (xs[1] - xs[0])
        assert exact == pytest.approx(scan, abs=3 * (xs[1] - xs[0]))


def test_weak_type_slab(slab):
    rep = weak_type_check(slab, [0.5])
    # example: Leb{M > 1/2} = 2 <= 5 * 2 / (1/2) = 20
    assert rep.superlevel_measures[0] == pytest.approx(2.0, rel=0.05)
    assert rep.bound_values[0] == pytest.approx(5 * slab.total_mass / 0.5)
    assert rep.violations == 0


def test_restriction_monotonicity(slab):
    for x in (0.0, 1.2, 3.0):
        v1 = maximal_at(slab, [x], R=0.25)
        v2 = maximal_at(slab, [x], R=1.0)
        v3 = maximal_at(slab, [x])
        assert v1 <= v2 + 1e-12
        assert v2 <= v3 + 1e-12


def test_sublinearity_atomic():
    rng = np.random.default_rng(7)
    a1 = measure_from_atoms(rng.uniform(-3, 3, (5, 1)), rng.uniform(0.1, 1, 5))
    a2 = measure_from_atoms(rng.uniform(-3, 3, (4, 1)), rng.uniform(0.1, 1, 4))
    both = measure_from_atoms(
        np.vstack([a1.atoms, a2.atoms]), np.concatenate([a1.masses, a2.masses])
    )
    for x in rng.uniform(-4, 4, 50):
        assert maximal_at(both, [x]) <= maximal_at(a1, [x]) + maximal_at(a2, [x]) + 1e-12


def test_mass_scaling():
    rng = np.random.default_rng(8)
    locs, masses = rng.uniform(-3, 3, (6, 1)), rng.uniform(0.1, 1, 6)
    nu = measure_from_atoms(locs, masses)
    nu3 = measure_from_atoms(locs, 3.0 * masses)
    for x in rng.uniform(-4, 4, 25):
        assert maximal_at(nu3, [x]) == pytest.approx(3.0 * maximal_at(nu, [x]), rel=1e-12)


def test_maximal_field_matches_pointwise(slab):
    fld = maximal_field(slab)
    nodes = slab.density.axis_nodes()
    for i in (0, 256, 512, 700, 1024):
        assert fld.values[i] == pytest.approx(maximal_at(slab, [nodes[i]]), rel=1e-9)


def test_grid_field_validation():
    with pytest.raises(InvalidArgumentError):
        GridField(d=3, lo=0.0, hi=1.0, spacing=0.5, values=np.zeros((3, 3, 3)))
    with pytest.raises(InvalidArgumentError):
        GridField(d=1, lo=0.0, hi=1.0, spacing=-0.5, values=np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        GridField(d=1, lo=1.0, hi=1.0, spacing=0.5, values=np.zeros(1))
    with pytest.raises(InvalidArgumentError):
        GridField(d=1, lo=0.0, hi=1.0, spacing=0.5, values=np.array([0.0, np.inf, 0.0]))
    with pytest.raises(InvalidArgumentError):
        GridField(d=1, lo=0.0, hi=1.0, spacing=0.5, values=np.zeros(7))


def test_total_mass_consistency_check():
    f = GridField(d=1, lo=0.0, hi=1.0, spacing=0.25, values=np.ones(5))
    with pytest.raises(InvalidArgumentError):
        GridMeasure(atoms=np.zeros((0, 1)), masses=np.zeros(0), density=f,
                    total_mass=99.0)


def test_percentile_lambda_grid():
    lams = percentile_lambda_grid(np.geomspace(0.1, 10, 100), 5)
    assert lams.shape == (5,)
    assert np.all(np.diff(lams) > 0)
    with pytest.raises(InsufficientDataError):
        percentile_lambda_grid(np.zeros(10), 5)


# ---------------------------------------------------------------------------
# G_{s,p}
# ---------------------------------------------------------------------------


def test_gsp_zero_function():
    f = GridField(d=1, lo=-1.0, hi=1.0, spacing=0.125, values=np.zeros(17))
    assert np.all(gsp_field(f, 0.5, 2.0).values == 0.0)


def test_gsp_brute_force_1d():
    f = GridField.from_function(
        lambda x: np.maximum(0.0, 1.0 - np.abs(x[..., 0])), 1, -2.0, 2.0, 32
    )
    g = gsp_field(f, 0.5, 2.0)
    nodes = f.axis_nodes()
    h = f.spacing
    for i in (0, 7, 16, 30):
        acc = 0.0
        for j in range(nodes.size):
            if j == i:
                continue
            acc += abs(f.values[i] - f.values[j]) ** 2 / abs(nodes[i] - nodes[j]) ** 2 * h
        assert g.values[i] == pytest.approx(math.sqrt(acc), rel=1e-12)


def test_gsp_brute_force_2d():
    fn = lambda x: np.exp(-np.sum(x**2, axis=-1))
    f = GridField.from_function(fn, 2, -1.0, 1.0, 8)
    g = gsp_field(f, 0.5, 2.0)
    nodes = f.node_coords()
    vals = f.values.ravel()
    h = f.spacing
    for i in (0, 12, 40, 80):
        acc = 0.0
        for j in range(nodes.shape[0]):
            if i == j:
                continue
            d = np.linalg.norm(nodes[i] - nodes[j])
            acc += abs(vals[i] - vals[j]) ** 2 / d**3 * h * h
        assert g.values.ravel()[i] == pytest.approx(math.sqrt(acc), rel=1e-10)


def test_gsp_tent_refinement_stable():
    tent = lambda x: np.maximum(0.0, 1.0 - np.abs(x[..., 0]))
    vals = []
    for cells in (512, 1024):  # h = 1/128 and 1/256 on [-2, 2]
        f = GridField.from_function(tent, 1, -2.0, 2.0, cells)
        g = gsp_field(f, 0.5, 2.0)
        vals.append(g.values[cells // 2])  # node at x = 0
    assert abs(vals[1] - vals[0]) / vals[0] < 0.10


def test_gsp_indicator_divergence_flag():
    # sp = 1.5 > 1: the seminorm diverges for a jump; refinement blows up
    ind = lambda x: ((x[..., 0] > 0) & (x[..., 0] < 1)).astype(float)
    res = gsp_stability(ind, -1.0, 2.0, 0.75, 2.0, [24, 48, 96, 192, 384, 768])
    assert res["unstable"]
    smooth = gsp_stability(
        lambda x: np.maximum(0.0, 1.0 - np.abs(x[..., 0])), -2.0, 2.0, 0.5, 2.0,
        [24, 48, 96, 192, 384, 768],
    )
    assert not smooth["unstable"]


def test_gsp_argument_validation():
    f = GridField(d=1, lo=0.0, hi=1.0, spacing=0.5, values=np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        gsp_field(f, 1.5, 2.0)
    with pytest.raises(InvalidArgumentError):
        gsp_field(f, 0.5, 0.5)


# ---------------------------------------------------------------------------
# Pointwise checks
# ---------------------------------------------------------------------------


def _heaviside_setup():
    f = GridField.from_function(lambda x: (x[..., 0] >= 0).astype(float),
                                1, -3.0, 3.0, 300)
    return f, measure_from_atoms([[0.0]], [1.0])


def test_pointwise_heaviside_bound():
    f, df = _heaviside_setup()

    def cross(rng, count):
        return (-rng.uniform(0.01, 3.0, (count, 1)), rng.uniform(0.01, 3.0, (count, 1)))

    rep = pointwise_check(f, df, 2000, mode="bv", seed=3, pair_sampler=cross)
    assert rep.violations == 0
    assert rep.k0 <= 0.5 + 1e-12
    # AM-GM oracle: 2|x|y / (|x|+y)^2 maximized at |x| = y
    assert rep.k0 == pytest.approx(0.5, abs=0.05)


def test_pointwise_same_side_skipped():
    f, df = _heaviside_setup()

    def same_side(rng, count):
        a = -rng.uniform(2.0, 3.0, (count, 1))
        return a, a - 0.05  # far from the atom: maximal windows are empty

    rep_err = None
    try:
        rep = pointwise_check(f, df, 50, mode="bv", seed=4, pair_sampler=same_side)
    except InsufficientDataError as exc:
        rep_err = exc
    assert rep_err is not None  # all pairs are 0/0 and skipped


def test_pointwise_2d_ball_stability():
    k0s = []
    for cells in (128, 256):
        f, grad = mollified_ball_gradient(1.0, -2.0, 2.0, cells)
        rep = pointwise_check(f, grad, 300, mode="bv", seed=5 + cells)
        assert rep.violations == 0
        k0s.append(rep.k0)
    assert max(k0s) / min(k0s) < 2.0


def test_pointwise_fractional_mode():
    tent = lambda x: np.maximum(0.0, 1.0 - np.abs(x[..., 0]))
    f = GridField.from_function(tent, 1, -2.0, 2.0, 256)
    g = gsp_field(f, 0.5, 2.0)
    rep = pointwise_check(f, g, 500, mode="fractional", s=0.5, seed=6)
    assert math.isfinite(rep.k0) and rep.k0 > 0
    assert rep.gamma == 0.5
    with pytest.raises(InvalidArgumentError):
        pointwise_check(f, g, 10, mode="fractional")


def test_mollified_gradient_mass_converges_to_perimeter():
    masses = []
    for cells in (128, 256):
        _, grad = mollified_ball_gradient(1.0, -2.0, 2.0, cells)
        masses.append(grad.total_mass)
    assert masses[1] == pytest.approx(2 * math.pi, rel=0.02)


def test_strong_type_boundedness_property():
    # ||Mf||_p <= A_p ||f||_p probed on grid norms; the constant is not
    # estimated sharply, only required to stay modest
    rng = np.random.default_rng(12)
    for _ in range(5):
        vals = np.repeat(rng.uniform(0.0, 1.0, 16), 17)[:257]
        f = GridField(d=1, lo=-3.0, hi=3.0, spacing=6.0 / 256, values=vals)
        nu = measure_from_density(f)
        mf = maximal_field(nu).values
        h = f.spacing
        for p in (2.0, 4.0):
            norm_f = (np.sum(f.values**p) * h) ** (1 / p)
            norm_mf = (np.sum(mf**p) * h) ** (1 / p)
            assert norm_mf <= 10.0 * norm_f


def test_orlicz_maximal_boundedness_probe():
    # modular-level probe of the Orlicz maximal estimate for x^2 log(e+x)
    phi = lambda x: x**2 * np.log(np.e + x)
    rng = np.random.default_rng(13)
    vals = np.repeat(rng.uniform(0.0, 1.0, 16), 17)[:257]
    f = GridField(d=1, lo=-3.0, hi=3.0, spacing=6.0 / 256, values=vals)
    mf = maximal_field(measure_from_density(f)).values
    h = f.spacing
    assert float(np.sum(phi(mf)) * h) <= 10.0 * float(np.sum(phi(f.values)) * h)


def test_weak_type_random_suite_small():
    rng = np.random.default_rng(10)
    for _ in range(10):
        k = int(rng.integers(1, 20))
        nu = measure_from_atoms(rng.uniform(-5, 5, (k, 1)), rng.uniform(0.1, 2, k))
        probes = rng.uniform(-6, 6, 100)
        vals = [maximal_at(nu, [p]) for p in probes]
        lams = percentile_lambda_grid(vals, 8)
        assert weak_type_check(nu, lams).violations == 0


def test_grid_csv_roundtrip(tmp_path):
    f = GridField.from_function(lambda x: np.sin(x[..., 0]), 1, -1.0, 1.0, 16)
    path = tmp_path / "field.csv"
    f.to_csv(path)
    g = GridField.from_csv(path)
    assert g.d == f.d and g.spacing == f.spacing
    assert np.array_equal(g.values, f.values)

    f2 = GridField.from_function(lambda x: np.cos(x[..., 0] + x[..., 1]), 2, -1.0, 1.0, 8)
    path2 = tmp_path / "field2.csv"
    f2.to_csv(path2)
    g2 = GridField.from_csv(path2)
    assert g2.values.shape == f2.values.shape
    assert np.array_equal(g2.values, f2.values)
