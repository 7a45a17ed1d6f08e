import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlos_isac.config import ConfigError
from nlos_isac.phd import (GaussianMixture, PhdConfig, PhdFilter, check_invariants,
                           phd_add_birth, phd_extract, phd_predict, phd_prune_merge, phd_update,
                           round_half_up, run_phd, write_estimates)
from phd_oracle import naive_step

CFG = PhdConfig()


def gm_of(*comps):
    """comps: (w, (r, v), P or scalar variance)."""
    ws, ms, Ps = [], [], []
    for w, m, P in comps:
        ws.append(w)
        ms.append(m)
        Ps.append(np.eye(2) * P if np.isscalar(P) else P)
    return GaussianMixture(ws, ms, Ps)


def random_mixture(rng, j):
    A = rng.normal(size=(j, 2, 2))
    P = A @ np.swapaxes(A, 1, 2) + 0.5 * np.eye(2)
    m = np.column_stack([rng.uniform(23, 60, j), rng.uniform(-8, 8, j)])
    return GaussianMixture(rng.uniform(0, 1, j), m, P)


def full_step(gm, z_prev, z, cfg):
    return phd_update(phd_add_birth(phd_predict(gm, cfg), z_prev, cfg), z, cfg)


# ---------------------------------------------------------------- examples

def test_predict_example():
    gm = phd_predict(gm_of((0.5, (29.31, 1.67), 1.0)), CFG)
    assert gm.w[0] == pytest.approx(0.49)
    assert gm.m[0] == pytest.approx([29.2933, 1.67])
    np.testing.assert_allclose(gm.P[0], CFG.F @ np.eye(2) @ CFG.F.T + CFG.Q)


def test_birth_from_previous_scan():
    gm = phd_add_birth(GaussianMixture(), [(30.0, -1.8), (41.0, 2.2)], CFG)
    assert len(gm) == 2
    assert (gm.w == CFG.birth_weight).all()
    np.testing.assert_allclose(gm.P[1], 4 * CFG.R)
    assert len(phd_add_birth(gm, [], CFG)) == 2


def test_update_without_measurements_scales_weights():
    gm = gm_of((0.8, (30.0, 1.0), 2.0), (0.1, (40.0, -1.0), 2.0))
    out = phd_update(gm, [], CFG)
    np.testing.assert_allclose(out.w, [0.08, 0.01])
    np.testing.assert_allclose(out.m, gm.m)


def test_single_component_mass_closed_form():
    cfg = PhdConfig(clutter_intensity=0.0)
    for w in (1e-6, 0.3, 2.0):
        out = phd_update(gm_of((w, (30.0, 1.0), 2.0)), [(31.0, 0.5)], cfg)
        assert out.mass == pytest.approx((1 - 0.9) * w + 1.0, rel=1e-12)


def test_single_component_mass_with_clutter():
    gm = gm_of((0.5, (30.0, 1.0), 2.0))
    z = np.array([30.5, 1.2])
    S = gm.P[0] + CFG.R
    d = z - gm.m[0]
    q = np.exp(-0.5 * d @ np.linalg.solve(S, d)) / (2 * np.pi * np.sqrt(np.linalg.det(S)))
    num = 0.9 * 0.5 * q
    out = phd_update(gm, [z], CFG)
    assert out.mass == pytest.approx(0.05 + num / (CFG.clutter_intensity + num), rel=1e-12)


def test_full_step_matches_naive_oracle():
    rng = np.random.default_rng(7)
    cfg = PhdConfig(birth_weight=1e-3)
    for _ in range(1000):
        gm = random_mixture(rng, int(rng.integers(0, 6)))
        z_prev = rng.uniform((23, -8), (60, 8), size=(int(rng.integers(0, 4)), 2))
        z = rng.uniform((23, -8), (60, 8), size=(int(rng.integers(0, 5)), 2))
        got = full_step(gm, z_prev, z, cfg)
        ref = naive_step(list(zip(gm.w, gm.m, gm.P)), z_prev, z, cfg)
        assert len(got) == len(ref)
        for (w, m, P), gw, gmu, gP in zip(ref, got.w, got.m, got.P):
            assert gw == pytest.approx(w, rel=1e-12, abs=1e-300)
            np.testing.assert_allclose(gmu, m, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(gP, P, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- prune / merge / extract

def test_merge_two_close_components():
    gm = gm_of((0.3, (30.0, 1.0), 1.0), (0.2, (30.1, 1.0), 1.0))
    out = phd_prune_merge(gm, CFG)
    assert len(out) == 1
    assert out.w[0] == pytest.approx(0.5)
    assert out.m[0] == pytest.approx([30.04, 1.0])
    # spread of the means enters the merged covariance
    assert out.P[0, 0, 0] == pytest.approx(1.0 + (0.3 * 0.04 ** 2 + 0.2 * 0.06 ** 2) / 0.5)


def test_far_components_are_not_merged():
    gm = gm_of((0.3, (30.0, 1.0), 1.0), (0.2, (40.0, 1.0), 1.0))
    assert len(phd_prune_merge(gm, CFG)) == 2


def test_cap_on_component_count():
    gm = gm_of(*[(0.01 * (k + 1), (23.0 + 5 * k, 1.0), 0.5) for k in range(40)])
    out = phd_prune_merge(gm, CFG)
    assert len(out) == 30
    assert out.w.min() == pytest.approx(0.11)


def test_everything_pruned():
    gm = gm_of((1e-8, (30.0, 1.0), 1.0), (5e-7, (40.0, 1.0), 1.0))
    out = phd_prune_merge(gm, CFG)
    assert len(out) == 0 and out.mass == 0.0
    assert phd_extract(out)[1] == 0


def test_extract_examples():
    gm = gm_of((0.6, (30.0, 1.0), 1.0), (0.3, (40.0, 2.0), 1.0), (0.2, (50.0, 3.0), 1.0))
    states, n = phd_extract(gm)
    assert n == 1 and states.tolist() == [[30.0, 1.0]]
    states, n = phd_extract(gm_of((0.5, (30.0, 1.0), 1.0)))
    assert n == 1
    states, n = phd_extract(gm_of((0.49, (30.0, 1.0), 1.0)))
    assert n == 0 and states.shape == (0, 2)


def test_round_half_up():
    assert [round_half_up(x) for x in (0.49, 0.5, 1.5, 2.5, 2.49)] == [0, 1, 2, 3, 2]


# ---------------------------------------------------------------- properties

@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32 - 1), ja=st.integers(0, 5), jb=st.integers(0, 5))
def test_predict_is_componentwise(seed, ja, jb):
    rng = np.random.default_rng(seed)
    a, b = random_mixture(rng, ja), random_mixture(rng, jb)
    joint = phd_predict(a.concat(b), CFG)
    split = phd_predict(a, CFG).concat(phd_predict(b, CFG))
    np.testing.assert_allclose(joint.w, split.w)
    np.testing.assert_allclose(joint.m, split.m)
    np.testing.assert_allclose(joint.P, split.P)


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32 - 1), j=st.integers(1, 12))
def test_step_is_permutation_invariant(seed, j):
    rng = np.random.default_rng(seed)
    gm = random_mixture(rng, j)
    z = rng.uniform((23, -8), (60, 8), size=(3, 2))
    perm = rng.permutation(j)
    shuffled = GaussianMixture(gm.w[perm], gm.m[perm], gm.P[perm])
    a = phd_prune_merge(phd_update(phd_predict(gm, CFG), z, CFG), CFG)
    b = phd_prune_merge(phd_update(phd_predict(shuffled, CFG), z, CFG), CFG)
    assert len(a) == len(b)
    np.testing.assert_allclose(a.w, b.w, rtol=1e-10)
    np.testing.assert_allclose(a.m, b.m, rtol=1e-10)


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 32 - 1), j=st.integers(0, 8), nz=st.integers(0, 6))
def test_step_preserves_invariants(seed, j, nz):
    rng = np.random.default_rng(seed)
    z = rng.uniform((23, -8), (60, 8), size=(nz, 2))
    prior = random_mixture(rng, j)
    gm = phd_prune_merge(full_step(prior, z[:2], z, CFG), CFG)
    check_invariants(gm)
    assert (gm.w >= 0).all()
    # each measurement contributes at most unit mass
    missed = (1 - CFG.detection_probability) * (prior.mass + 2 * CFG.birth_weight)
    assert gm.mass <= missed + nz + 1e-9


def test_check_invariants_rejects_bad_mixtures():
    with pytest.raises(FloatingPointError, match="negative"):
        check_invariants(gm_of((-0.1, (30.0, 1.0), 1.0)))
    with pytest.raises(FloatingPointError, match="symmetry"):
        check_invariants(gm_of((0.1, (30.0, 1.0), np.array([[1.0, 0.5], [0.0, 1.0]]))))
    with pytest.raises(FloatingPointError, match="semi-definite"):
        check_invariants(gm_of((0.1, (30.0, 1.0), np.array([[1.0, 2.0], [2.0, 1.0]]))))
    check_invariants(GaussianMixture())


def test_config_validation():
    with pytest.raises(ConfigError):
        PhdConfig(detection_probability=0.0)
    with pytest.raises(ConfigError):
        PhdConfig(birth_covariance=((1.0, 2.0), (2.0, 1.0)))
    assert PhdConfig(birth_covariance=((2.0, 0.0), (0.0, 3.0))).B[1, 1] == 3.0


# ---------------------------------------------------------------- filter

def runner_peaks(frames, r0=29.31, v=-1.67, dt=0.01):
    return [[(r0 - k * dt * v, v)] for k in range(frames)]


def test_filter_declares_clean_runner():
    filt = PhdFilter(PhdConfig(), check=True)
    first = None
    for k, z in enumerate(runner_peaks(15)):
        alarm, states = filt.step(z)
        if alarm and first is None:
            first = k
            assert states[0] == pytest.approx([29.31 + k * 0.0167, -1.67], abs=0.1)
    assert first is not None and first <= 5


def test_filter_silent_without_peaks():
    results = run_phd([[] for _ in range(20)])
    assert all(n == 0 and not alarm for alarm, n, _ in results)


def test_to_text_and_estimates_csv(tmp_path):
    text = gm_of((0.5, (30.0, 1.0), 1.0)).to_text()
    assert text.startswith("components: 1\n- weight: 5.000000e-01")
    results = run_phd(runner_peaks(10))
    path = tmp_path / "estimates.csv"
    write_estimates(path, results)
    lines = path.read_text().splitlines()
    assert lines[0] == "frame_index,alarm,p_hat,range_m_1,speed_mps_1"
    assert len(lines) == 11 and lines[1] == "0,0,0"
    assert lines[-1].split(",")[1:3] == ["1", "1"]
