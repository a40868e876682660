import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_plausible import (
    DimensionError,
    HyperCube,
    RgbImage,
    WhitePoint,
    auto_white_point,
    delta_e,
    evaluate_cubes,
    extract_alpha,
    joint_eta,
    mrae,
    reconstruct,
    worst_case,
    xyz_to_lab,
)
from spectral_plausible.metrics import (
    MetricsReport,
    combine_reports,
    eta_breakpoints,
    eta_sweep,
    exposure_report,
)


def scalar_lab(x, y, z, wx, wy, wz):
    def f(t):
        d = 6 / 29
        return t ** (1 / 3) if t > d ** 3 else t / (3 * d * d) + 4 / 29
    fx, fy, fz = f(x / wx), f(y / wy), f(z / wz)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def test_mrae_examples():
    assert mrae([1, 2, 4], [1, 2, 4]) == 0
    assert abs(mrae([1, 2, 4], [1.1, 2.2, 4.4]) - 0.1) <= 1e-12
    for xi in (0.5, 2):
        a = np.array([1, 2, 4.0])
        b = np.array([1.1, 2.2, 4.4])
        assert abs(mrae(xi * a, xi * b) - mrae(a, b)) <= 1e-12
    with pytest.raises(DimensionError):
        mrae([1, 2], [1, 2, 3])


def test_mrae_clamps_zero_denominator():
    assert mrae([0.0], [1e-6]) == pytest.approx(1.0)


def test_lab_examples():
    wp = WhitePoint(0.9, 1.0, 1.1)
    assert np.allclose(xyz_to_lab(wp.xyz, wp), [100, 0, 0], atol=1e-12)
    assert np.allclose(xyz_to_lab(np.zeros(3), wp), [0, 0, 0], atol=1e-12)
    lab = xyz_to_lab(wp.xyz / 8, wp)
    assert abs(lab[0] - 42.0) < 1e-12 and abs(lab[1]) < 1e-12 and abs(lab[2]) < 1e-12
    with pytest.raises(ValueError):
        WhitePoint(1, 0, 1)
    with pytest.raises(ValueError):
        xyz_to_lab(np.ones(3), [1, -1, 1])


def test_lab_seam_continuity():
    t0 = (6 / 29) ** 3
    wp = WhitePoint(1, 1, 1)
    below = xyz_to_lab(np.full(3, t0 * (1 - 1e-12)), wp)
    above = xyz_to_lab(np.full(3, t0 * (1 + 1e-12)), wp)
    assert np.max(np.abs(below - above)) < 1e-9


def test_delta_e_examples():
    assert delta_e([50, 1, 2], [50, 1, 2]) == 0
    assert delta_e([50, 0, 0], [52, 0, 0]) == 2
    assert delta_e([50, 3, 4], [50, 0, 0]) == 5


def test_delta_e_scale_invariance(rng):
    x, y = rng.uniform(0, 1, (100, 3)), rng.uniform(0, 1, (100, 3))
    wp = WhitePoint(0.95, 1.0, 1.09)
    base = delta_e(xyz_to_lab(x, wp), xyz_to_lab(y, wp))
    for xi in (0.1, 0.5, 2, 10):
        w = wp.scaled(xi)
        scaled = delta_e(xyz_to_lab(xi * x, w), xyz_to_lab(xi * y, w))
        assert np.max(np.abs(scaled - base)) < 1e-10


def test_auto_white_point():
    img = RgbImage(np.array([[[5, 5, 5], [9, 1, 1]]], dtype=float))
    wp, fallback = auto_white_point(img)
    assert wp.xyz.tolist() == [5, 5, 5] and not fallback
    wp, fallback = auto_white_point(RgbImage(np.full((3, 3, 3), 0.25)))
    assert wp.xyz.tolist() == [0.25] * 3 and not fallback
    img = RgbImage(np.array([[[9, 1, 1], [1, 8, 1]], [[1, 1, 7], [2, 3, 0]]], dtype=float))
    wp, fallback = auto_white_point(img)
    assert wp.xyz.tolist() == [9, 8, 7] and fallback
    with pytest.raises(ValueError):
        auto_white_point(RgbImage(np.zeros((2, 2, 3))))


def test_worst_case_examples():
    assert worst_case([3.0] * 10, 4) == 3
    assert worst_case([1, 2, 3, 6], 100) == 3
    assert worst_case([1, 1, 1, 9], 2) == 5
    with pytest.raises(ValueError):
        worst_case([], 3)
    with pytest.raises(ValueError):
        worst_case([1], 0)


@settings(max_examples=100, deadline=None)
@given(errs=st.lists(st.floats(0, 1e6), min_size=1, max_size=50),
       idx=st.integers(0, 49), bump=st.floats(0, 1e6), k=st.integers(1, 60))
def test_worst_case_monotone(errs, idx, bump, k):
    errs = np.array(errs)
    before = worst_case(errs, k)
    errs[idx % errs.size] += bump
    assert worst_case(errs, k) >= before
    assert worst_case(errs, k) >= errs.mean() - 1e-9 * max(1, errs.max())


def test_joint_eta_examples():
    de, mr = [1.0, 3.0, 0.5], [2.0, 1.0, 4.0]
    assert np.argmin(joint_eta(de, mr, 0.0)[0]) == np.argmin(mr)
    assert np.argmin(joint_eta(de, mr, 1.0)[0]) == np.argmin(de)
    eta, flagged = joint_eta([1, 3], [3, 1], 0.5)
    assert np.allclose(eta, [1, 1]) and flagged == []
    eta, flagged = joint_eta([0, 0], [1, 3], 0.5)
    assert flagged == ["delta_e"]
    assert np.allclose(eta, [0.25, 0.75])
    with pytest.raises(ValueError):
        joint_eta([1], [1], 0.5)
    with pytest.raises(ValueError):
        joint_eta([1, 2], [1, 2], 1.5)


def test_eta_crossover_against_dense_sweep():
    de, mr = [0.0, 1.0, 3.0], [4.0, 2.0, 1.0]
    breaks = eta_breakpoints(de, mr)
    assert [(a, b) for _, a, b in breaks] == [(2, 1), (1, 0)]
    gammas = np.round(np.arange(0, 1.0005, 0.001), 6)
    table, _ = eta_sweep(de, mr, gammas)
    best = np.argmin(table, axis=1)
    switches = [gammas[i] for i in range(1, gammas.size) if best[i] != best[i - 1]]
    assert len(switches) == len(breaks)
    for g_sweep, (g, _, _) in zip(switches, breaks):
        assert g <= g_sweep < g + 0.001 + 1e-12
    # hand values: lines cross at 3/13.5 and 6/11.25
    assert breaks[0][0] == pytest.approx(3 / 13.5)
    assert breaks[1][0] == pytest.approx(6 / 11.25)


def test_eta_sweep_default_grid():
    table, gammas = eta_sweep([1, 2], [2, 1])
    assert table.shape == (11, 2) and gammas[0] == 0 and gammas[-1] == 1


def scalar_report(gt, rec, s, wp, k):
    m, d = [], []
    S = s.matrix
    for y in range(gt.shape[0]):
        for x in range(gt.shape[1]):
            acc = 0.0
            for i in range(gt.shape[2]):
                acc += abs(gt[y, x, i] - rec[y, x, i]) / max(gt[y, x, i], 1e-6)
            m.append(acc / gt.shape[2])
            c1 = [sum(S[i, c] * gt[y, x, i] for i in range(gt.shape[2])) for c in range(3)]
            c2 = [sum(S[i, c] * rec[y, x, i] for i in range(gt.shape[2])) for c in range(3)]
            l1 = scalar_lab(*c1, *wp)
            l2 = scalar_lab(*c2, *wp)
            d.append(math.sqrt(sum((a - b) ** 2 for a, b in zip(l1, l2))))
    top = lambda v: sum(sorted(v)[-min(k, len(v)):]) / min(k, len(v))
    return sum(m) / len(m), top(m), sum(d) / len(d), top(d)


def test_evaluate_cubes_against_scalar_oracle(cie, rng):
    gt = rng.uniform(0.01, 1, (8, 8, 31))
    rec = gt + rng.normal(scale=0.05, size=gt.shape)
    wp = (9.0, 10.0, 9.5)
    rep = evaluate_cubes(HyperCube(cie.grid, gt), HyperCube(cie.grid, rec), cie, WhitePoint(*wp), k=10)
    oracle = scalar_report(gt, rec, cie, wp, 10)
    got = (rep.mean_mrae, rep.wc_mrae, rep.mean_de, rep.wc_de)
    for a, b in zip(got, oracle):
        assert abs(a - b) <= 1e-10 * max(1, abs(b))
    assert rep.wc_mrae >= rep.mean_mrae and rep.wc_de >= rep.mean_de


def test_evaluate_identical_and_plausible(cie, cie_model, rng):
    gt = HyperCube(cie.grid, rng.uniform(0.01, 1, (6, 6, 31)))
    rep = evaluate_cubes(gt, gt, cie)
    assert (rep.mean_mrae, rep.wc_mrae, rep.mean_de, rep.wc_de) == (0, 0, 0, 0)
    d = extract_alpha(cie_model, gt.data)
    rec = HyperCube(cie.grid, reconstruct(cie_model, d.rho, rng.normal(size=d.alpha.shape)))
    rep = evaluate_cubes(gt, rec, cie)
    assert rep.mean_de < 1e-8 and rep.wc_de < 1e-8 and rep.mean_mrae > 0


def test_evaluate_shape_mismatch(cie):
    a = HyperCube(cie.grid, np.ones((2, 2, 31)))
    b = HyperCube(cie.grid, np.ones((2, 3, 31)))
    with pytest.raises(DimensionError):
        evaluate_cubes(a, b, cie)


def test_clamp_flag(cie):
    d = np.ones((2, 2, 31))
    d[0, 0, 0] = 0
    gt = HyperCube(cie.grid, d)
    assert evaluate_cubes(gt, gt, cie).mrae_clamped


def test_report_serialisation():
    a = MetricsReport(0.1, 0.2, 1.0, 2.0, worst_k=5)
    b = MetricsReport(0.3, 0.4, 3.0, 4.0, worst_k=5)
    top = exposure_report({1.0: a, 0.5: b})
    assert top.mean_mrae == pytest.approx(0.2)
    text = top.to_text()
    assert "mean_mrae=" in text and "xi_0.5.mean_de=3.0" in text
    rows = top.to_rows(model="m")
    assert [r["xi"] for r in rows] == ["0.5", "1"] and rows[0]["model"] == "m"
    c = combine_reports([a, b])
    assert c.n_images == 2 and c.wc_de == pytest.approx(3.0)
