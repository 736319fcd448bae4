"""Generator checks: structure invariants, the generative formula against
closed-form moments, and the three corruption variants."""

import numpy as np
import pytest

from cvaead import synthetic as S
from cvaead.data import (
    LABEL_INLIER,
    LABEL_TYPE_A,
    LABEL_TYPE_B,
    LABEL_TYPE_B_INLIER,
)
from cvaead.errors import ConfigError, FileFormatError


# --- structure ------------------------------------------------------------------


def test_structure_columns_balanced():
    st = S.make_structure(n=100, m=5, o=5, seed=0)
    counts = np.bincount(st.s_column, minlength=5)
    assert list(counts) == [20] * 5
    assert st.s_matrix.sum() == 100
    assert np.all(st.s_matrix.sum(axis=1) == 1)


def test_structure_u_subsets_valid():
    st = S.make_structure(n=100, m=5, o=5, seed=3)
    sizes = {len(sub) for sub in st.u_assignment}
    for sub in st.u_assignment:
        assert 1 <= len(sub) <= 5
        assert all(0 <= i < 5 for i in sub)
        assert len(set(sub)) == len(sub)
    # with 100 draws of size uniform {1..5} every size shows up
    assert sizes == {1, 2, 3, 4, 5}


def test_structure_degenerate_single():
    st = S.make_structure(n=1, m=1, o=1, seed=0)
    assert st.s_matrix.tolist() == [[1]]
    assert st.u_assignment == [(0,)]


def test_structure_deterministic():
    a = S.make_structure(seed=7)
    b = S.make_structure(seed=7)
    assert np.array_equal(a.s_column, b.s_column)
    assert a.u_assignment == b.u_assignment
    c = S.make_structure(seed=8)
    assert a.u_assignment != c.u_assignment


def test_structure_rejects_bad_dims():
    with pytest.raises(ConfigError):
        S.make_structure(n=100, m=3)
    with pytest.raises(ConfigError):
        S.make_structure(n=0, m=1)
    with pytest.raises(ConfigError):
        S.make_structure(o=0)
    with pytest.raises(ConfigError):
        S.CausalStructure(4, 2, 1, np.array([0, 0, 0, 1]), [(0,)] * 4, 0.1)
    with pytest.raises(ConfigError):
        S.CausalStructure(4, 2, 1, np.array([0, 0, 1, 1]), [(0,)] * 4, -0.5)
    with pytest.raises(ConfigError):
        S.CausalStructure(4, 2, 2, np.array([0, 0, 1, 1]), [(0,), (1,), (2,), (0,)], 0.1)


def test_structure_roundtrip(tmp_path):
    st = S.make_structure(n=20, m=4, o=3, epsilon_sigma=0.25, seed=11)
    path = tmp_path / "structure.json"
    S.save_structure(st, path)
    loaded = S.load_structure(path)
    assert loaded.n == st.n and loaded.m == st.m and loaded.o == st.o
    assert loaded.epsilon_sigma == st.epsilon_sigma
    assert loaded.seed == st.seed
    assert np.array_equal(loaded.s_column, st.s_column)
    assert loaded.u_assignment == st.u_assignment


def test_structure_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("not json at all{")
    with pytest.raises(FileFormatError):
        S.load_structure(bad)
    bad.write_text('{"format": "something-else"}')
    with pytest.raises(FileFormatError):
        S.load_structure(bad)
    bad.write_text('{"format": "causal-structure", "version": 99}')
    with pytest.raises(FileFormatError):
        S.load_structure(bad)


# --- generation -------------------------------------------------------------------


def test_generate_formula_reduction():
    # all features use u_0 and the single k: x_j = u0*k + eps, so with tiny
    # noise x_j / k recovers u0 on every feature
    st = S.CausalStructure(
        n=4, m=1, o=1, s_column=np.zeros(4, dtype=int),
        u_assignment=[(0,)] * 4, epsilon_sigma=1e-12,
    )
    ds = S.generate(st, 50, seed=5)
    ratio = ds.x / ds.k[:, [0]]
    assert np.allclose(ratio, ds.u, atol=1e-9)


def test_generate_regeneration_identity():
    st = S.make_structure(seed=1)
    ds = S.generate(st, 500, seed=2)
    again = S.synthesize_x(st, ds.u, ds.k, ds.eps)
    assert np.array_equal(again, ds.x)


def test_generate_deterministic():
    st = S.make_structure(seed=1)
    a = S.generate(st, 100, seed=9)
    b = S.generate(st, 100, seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.k, b.k)
    c = S.generate(st, 100, seed=10)
    assert not np.array_equal(a.x, c.x)


def test_generate_all_inliers():
    st = S.make_structure(seed=1)
    ds = S.generate(st, 10, seed=0)
    assert ds.labels == [LABEL_INLIER] * 10
    assert all(len(c) == 0 for c in ds.corrupted)
    assert ds.structure is st


def test_generate_moments_match_closed_form():
    # E[x_j] = 0 and Var(x_j) = 1 + eps_sigma^2 (unit-variance independent
    # factors; the product has unit variance). Tolerances use the exact
    # fourth moment E[x^4] = 3^(|subset|+1) + 6 sigma^2 + 3 sigma^4 since the
    # product factors are heavy-tailed.
    st = S.make_structure(seed=4)
    count = 100_000
    ds = S.generate(st, count, seed=6)
    sig2 = st.epsilon_sigma**2

    mean = ds.x.mean(axis=0)
    se = ds.x.std(axis=0) / np.sqrt(count)
    assert np.all(np.abs(mean) < 5 * se)

    var = ds.x.var(axis=0)
    expected = 1.0 + sig2
    mu4 = np.array([3.0 ** (len(sub) + 1) for sub in st.u_assignment]) + 6 * sig2 + 3 * sig2**2
    var_of_var = (mu4 - expected**2) / count
    assert np.all(np.abs(var - expected) < 6 * np.sqrt(var_of_var))


def test_correlation_block_pattern():
    # Exact correlation: 1/(1 + eps_sigma^2) for distinct features sharing
    # both the k column and the full u subset, 0 otherwise. The max-over-
    # pairs estimate of a zero correlation is heavy-tailed here, so this
    # accumulates second moments over 10^6 samples in chunks.
    st = S.make_structure(seed=0)
    n = st.n
    chunks, chunk_size = 10, 100_000
    total = chunks * chunk_size
    sums = np.zeros(n)
    cross = np.zeros((n, n))
    for i in range(chunks):
        ds = S.generate(st, chunk_size, seed=100 + i)
        sums += ds.x.sum(axis=0)
        cross += ds.x.T @ ds.x
    mean = sums / total
    cov = cross / total - np.outer(mean, mean)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)

    expected = np.eye(n)
    rho = 1.0 / (1.0 + st.epsilon_sigma**2)
    for a in range(n):
        for b in range(n):
            if a != b and st.s_column[a] == st.s_column[b] and st.u_assignment[a] == st.u_assignment[b]:
                expected[a, b] = rho
    assert np.abs(corr - expected).max() < 0.1
    # the pattern is non-trivial: some off-diagonal mass exists
    assert (expected > 0.5).sum() > n


def test_generate_rejects_bad_count():
    st = S.make_structure(seed=1)
    with pytest.raises(ValueError):
        S.generate(st, 0)


# --- corruption -----------------------------------------------------------------


@pytest.fixture(scope="module")
def world():
    st = S.make_structure(seed=42)
    return st, S.generate(st, 300, seed=43)


def test_inject_type_a(world):
    st, ds = world
    out = S.inject(ds, LABEL_TYPE_A, seed=44)
    assert out.labels == [LABEL_TYPE_A] * len(ds)
    shift = 5 * st.epsilon_sigma
    for row in range(len(ds)):
        assert out.corrupted[row].size == 1
        j = out.corrupted[row][0]
        assert out.eps[row, j] == ds.eps[row, j] + shift
    # picks spread over many features
    assert len({int(c[0]) for c in out.corrupted}) > 50


def test_inject_type_b_anomaly_hits_full_cluster(world):
    st, ds = world
    out = S.inject(ds, LABEL_TYPE_B, seed=45)
    assert out.labels == [LABEL_TYPE_B] * len(ds)
    for row in range(len(ds)):
        picked = out.corrupted[row]
        assert picked.size == st.cluster_size
        col = st.s_column[picked[0]]
        assert np.array_equal(picked, st.cluster_features(col))


def test_inject_type_b_inlier_ignores_clusters(world):
    st, ds = world
    out = S.inject(ds, LABEL_TYPE_B_INLIER, seed=46)
    assert out.labels == [LABEL_TYPE_B_INLIER] * len(ds)
    aligned = 0
    for row in range(len(ds)):
        picked = out.corrupted[row]
        assert picked.size == st.cluster_size
        assert len(np.unique(picked)) == picked.size
        if len(set(st.s_column[picked])) == 1:
            aligned += 1
    # a uniform 20-of-100 draw landing on one cluster is essentially impossible
    assert aligned == 0


def test_inject_preserves_untouched_features_bit_exactly(world):
    st, ds = world
    for variant in (LABEL_TYPE_A, LABEL_TYPE_B_INLIER, LABEL_TYPE_B):
        out = S.inject(ds, variant, seed=47)
        for row in range(len(ds)):
            mask = np.ones(st.n, dtype=bool)
            mask[out.corrupted[row]] = False
            assert np.array_equal(out.x[row, mask], ds.x[row, mask])
            assert not np.array_equal(out.x[row, ~mask], ds.x[row, ~mask])


def test_inject_keeps_regeneration_identity(world):
    st, ds = world
    out = S.inject(ds, LABEL_TYPE_B, seed=48)
    again = S.synthesize_x(st, out.u, out.k, out.eps)
    assert np.array_equal(again, out.x)


def test_inject_is_deterministic(world):
    _, ds = world
    a = S.inject(ds, LABEL_TYPE_A, seed=49)
    b = S.inject(ds, LABEL_TYPE_A, seed=49)
    assert np.array_equal(a.x, b.x)
    assert all(np.array_equal(p, q) for p, q in zip(a.corrupted, b.corrupted))


def test_inject_rejects_bad_input(world):
    st, ds = world
    with pytest.raises(ConfigError):
        S.inject(ds, "no_such_variant", seed=0)
    already = S.inject(ds, LABEL_TYPE_A, seed=0)
    with pytest.raises(ConfigError):
        S.inject(already, LABEL_TYPE_A, seed=0)
    from cvaead.data import Dataset

    bare = Dataset(x=ds.x.copy(), k=ds.k.copy())
    with pytest.raises(ConfigError):
        S.inject(bare, LABEL_TYPE_A, seed=0)
