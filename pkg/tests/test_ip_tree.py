import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from treegrowth.ip_tree import (
    INF,
    PRESETS,
    BoundaryMeasure,
    IpConfigError,
    IpStructureError,
    LazyWord,
    TreePoint,
    epsilon_partition,
    load_ip,
    parse_ip_config,
    validate_ip,
)
from treegrowth.rng import generator

HALF_INTERVAL = "root\nvertex top parent=root length=1/2 profile=0:0,1/2:1 lambda=1/2\n"
HEAVY_ATOM = """\
root
vertex a parent=root length=0.3 profile=lebesgue atom=0.3 beta=1/2 lambda=1/2
vertex top parent=a length=0.7 profile=0:0,0.3:0,0.7:0.4 lambda=1/2
"""
MARKOV = """\
root
block root mass=1 ell=2 initial=1/2,1/2 transition=0.9,0.1;0.2,0.8
"""


def interval_point(tree, x):
    return tree.point("top", x)


# validation ------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_valid(name):
    assert validate_ip(load_ip(name)) == []


def test_single_atom_is_valid():
    assert validate_ip(parse_ip_config("root atom=1\n")) == []


def test_interval_spacing_at_a_point():
    t = load_ip("interval")
    x = interval_point(t, 0.3)
    assert t.height(x) == pytest.approx(0.3)
    assert t.fringe_mass(x) == pytest.approx(0.7)


def test_half_interval_fails_spacing_at_its_leaf():
    report = validate_ip(parse_ip_config(HALF_INTERVAL))
    assert len(report) == 1
    assert report[0].startswith("spacing: at vertex 'top'")
    assert "distance 0.5 + fringe mass 0 = 0.5" in report[0]


def test_mass_and_spanning_violations():
    report = validate_ip(parse_ip_config("root\nvertex a parent=root length=1\nvertex b parent=root length=1 atom=1/2\n"))
    assert any(r.startswith("mass:") for r in report)
    assert any(r.startswith("spanning:") and "'a'" in r for r in report)


def test_decoration_violations():
    cfg = "root\nvertex a parent=root length=0.5 atom=0.5 profile=lebesgue lambda=2 beta=0.9\n" \
          "vertex b parent=a length=0.5 atom=0 profile=lebesgue lambda=1/2\n"
    report = validate_ip(parse_ip_config(cfg))
    assert any("outside [0,1]" in r for r in report)


def test_beta_must_be_monotone():
    cfg = HEAVY_ATOM.replace("beta=1/2", "beta=0.7,0.2")
    report = validate_ip(parse_ip_config(cfg))
    assert any("thresholds" in r for r in report)


@pytest.mark.parametrize("text, fragment", [
    ("vertex a parent=root length=1\n", "declare the root"),
    ("root\nvertex a parent=nowhere length=1\n", "unknown parent"),
    ("root\nvertex a parent=root\n", "parent= and length="),
    ("root\nfoo bar\n", "unknown directive"),
    ("root\nvertex a parent=root length=x\n", "not a number"),
    ("root\nvertex a parent=root length=1 colour=red\n", "unknown keys"),
])
def test_config_errors_name_the_line(text, fragment):
    with pytest.raises(IpConfigError, match=fragment):
        parse_ip_config(text)


def test_structure_errors():
    with pytest.raises(IpStructureError):
        parse_ip_config("root\nvertex a parent=root length=1 profile=0:0,0.5:0.6,1:0.4\n")
    with pytest.raises(IpStructureError):
        BoundaryMeasure(2, probs=(1.0, 0.0))
    with pytest.raises(IpStructureError):
        BoundaryMeasure(1)


def test_missing_file():
    with pytest.raises(IpConfigError, match="cannot read"):
        load_ip("/nonexistent/tree.ip")


# fringe mass, mrca, ancestry ----------------------------------------------------

def test_fringe_examples():
    t = load_ip("interval")
    assert t.fringe_mass(t.root()) == 1.0
    assert t.fringe_mass(interval_point(t, 0.3)) == pytest.approx(0.7)
    b = load_ip("ell-ary")
    assert b.fringe_mass(TreePoint(0, prefix=(0, 1))) == pytest.approx(0.25)


def test_markov_cylinder():
    t = parse_ip_config(MARKOV)
    assert t.fringe_mass(TreePoint(0, prefix=(0, 0, 1))) == pytest.approx(0.5 * 0.9 * 0.1)
    assert validate_ip(t) == []


def test_mrca_examples():
    t = load_ip("interval")
    a, b = interval_point(t, 0.3), interval_point(t, 0.8)
    assert t.mrca(a, a) == a
    assert t.mrca(a, b) == a and t.mrca(b, a) == a
    assert t.is_ancestor(a, b) and not t.is_ancestor(b, a)
    e = load_ip("ell-ary")
    x, y = TreePoint(0, prefix=(0, 1, 0)), TreePoint(0, prefix=(0, 1, 1))
    assert e.mrca(x, y) == TreePoint(0, prefix=(0, 1))


def test_mrca_of_sampled_words_is_common_prefix():
    e = load_ip("ell-ary")
    rng = generator(4)
    for _ in range(50):
        x, y = e.sample_point(rng), e.sample_point(rng)
        m = e.mrca(x, y)
        k = len(m.prefix)
        assert x.word.prefix(k) == y.word.prefix(k) == m.prefix
        assert x.word.symbol(k) != y.word.symbol(k)


def sampled_points(name, seed, n):
    t = load_ip(name)
    rng = generator(seed)
    pts = [t.sample_point(rng) for _ in range(n)]
    t.separate(pts)
    return t, pts


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), st.integers(0, 2**32))
def test_geometry_identities(name, seed):
    t, pts = sampled_points(name, seed, 8)
    extra = [t.mrca(a, b) for a in pts for b in pts]
    for x in pts + extra:
        # the fringe mass bounds the height, with equality on the support
        assert t.height(x) <= 1 - t.fringe_mass(x) + 1e-9
        assert t.is_ancestor(t.root(), x)
    for x in pts:
        assert t.height(x) == pytest.approx(1 - t.fringe_mass(x), abs=1e-9)
        for y in pts:
            m = t.mrca(x, y)
            assert t.is_ancestor(m, x) and t.is_ancestor(m, y)
            assert t.fringe_mass(m) >= max(t.fringe_mass(x), t.fringe_mass(y)) - 1e-12
            assert t.distance(x, y) == pytest.approx(t.mass_distance(x, y), abs=1e-9)
            if t.is_ancestor(x, y):
                assert t.distance(x, y) == pytest.approx(t.fringe_mass(x) - t.fringe_mass(y), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(PRESETS)), st.integers(0, 2**32))
def test_planar_order_is_consistent(name, seed):
    t, pts = sampled_points(name, seed, 6)
    ordered = sorted(pts, key=t.key)
    for a, b in zip(ordered, ordered[1:]):
        # ancestors sort before descendants
        assert not (t.is_ancestor(b, a) and a != b)


# sampling ------------------------------------------------------------------------

def test_single_atom_sampling():
    t = parse_ip_config("root atom=1\n")
    rng = generator(0)
    assert {t.sample_point(rng) for _ in range(100)} == {TreePoint(0)}


def test_interval_sampling_is_uniform():
    t = load_ip("interval")
    rng = generator(21)
    h = np.array([t.height(t.sample_point(rng)) for _ in range(100_000)])
    res = stats.kstest(h, "uniform")
    assert res.statistic < 0.01


def test_binary_block_first_symbol():
    t = load_ip("ell-ary")
    rng = generator(22)
    first = np.array([t.sample_point(rng).word.symbol(0) for _ in range(100_000)])
    assert abs(first.mean() - 0.5) < 0.01


def test_atom_line_component_frequencies():
    t = load_ip("atom-line")
    rng = generator(23)
    pts = [t.sample_point(rng) for _ in range(50_000)]
    atom = sum(p == TreePoint(t.vertex_id("a")) for p in pts) / len(pts)
    assert atom == pytest.approx(0.2, abs=0.01)
    gap = [p for p in pts if 0.4 < t.height(p) < 0.6]
    assert gap == []


def test_lazy_words_are_reproducible():
    m = BoundaryMeasure.uniform(3)
    a, b = LazyWord(m, 99), LazyWord(m, 99)
    assert a.prefix(40) == b.prefix(40)
    assert all(0 <= z < 3 for z in a.prefix(40))


# decorations -------------------------------------------------------------------------

def test_lambda_pieces():
    t = load_ip("interval")
    assert t.lambda_at(interval_point(t, 0.2)) == 0.3
    assert t.lambda_at(interval_point(t, 0.5)) == 0.7
    assert t.lambda_at(interval_point(t, 0.9)) == 0.7


def test_lambda_only_on_segments():
    from treegrowth.ip_tree import DecorationError
    t = load_ip("atom-line")
    with pytest.raises(DecorationError):
        t.lambda_at(TreePoint(t.vertex_id("a")))


# the epsilon partition ----------------------------------------------------------------

def test_interval_partition_levels():
    t = load_ip("interval")
    part = epsilon_partition(t, 0.5)
    assert part.levels == [0.0, 0.25, 0.5, 0.75]
    assert [c.mass for c in part.cells] == pytest.approx([0.25] * 4)
    queries = [interval_point(t, x) for x in np.linspace(0.01, 0.99, 40)]
    assert part.check(queries) == []


def test_single_atom_partition():
    part = epsilon_partition(parse_ip_config("root atom=1\n"), 0.3)
    assert part.atoms == [(0, 1.0)]
    assert len(part.cells) == 1
    assert part.remainder == 0.0
    assert part.cells[0].mass == pytest.approx(0.0)
    assert part.locate(TreePoint(0)) == ("B", 0)


def test_heavy_atom_is_a_singleton():
    t = parse_ip_config(HEAVY_ATOM)
    assert validate_ip(t) == []
    part = epsilon_partition(t, 0.1)
    a = t.vertex_id("a")
    assert (a, pytest.approx(0.3)) in part.atoms
    assert part.check(t.special_points()) == []


@pytest.mark.parametrize("eps", [0.9, 0.3, 0.12, 0.05])
@pytest.mark.parametrize("name", sorted(PRESETS))
def test_partition_properties_on_presets(name, eps):
    t, pts = sampled_points(name, 7, 20)
    part = epsilon_partition(t, eps)
    queries = pts + [t.mrca(a, b) for a, b in zip(pts, pts[1:])] + t.special_points()
    assert part.check(queries) == []
    I, J, k = part.lookup(t.root())
    assert len(I) == len(part.cells)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.5])
def test_partition_eps_range(eps):
    with pytest.raises(ValueError):
        epsilon_partition(load_ip("interval"), eps)


def test_point_on_segment_offsets():
    t = load_ip("atom-line")
    p = t.point("top", 0.3)
    assert p.offset == 0.3 and p.offset != INF
    assert t.height(p) == pytest.approx(0.7)
