import json
import logging
import warnings

import numpy as np
import pytest

from unmix.config import PRESETS
from unmix.pipeline import (
    DegenerateStatisticsError,
    InsufficientDataError,
    init_state,
    num_frames,
    separate_batch,
    separate_dynamic,
    solve_window,
    step_update,
    window_spectra,
    write_diagnostics,
)
from unmix.rescale import build_filter_bank, demix_span
from unmix.signal_io import MixingFilters, TimeSeries, convolve_mix, default_filters
from unmix.spectral import hermitian_extend
from unmix.stats import accumulate, rho_maxlag
from unmix.synth import case_sources

CFG = PRESETS["case2"]


@pytest.fixture(scope="module")
def sources():
    return case_sources(2, 7, duration=3.0)


@pytest.fixture(scope="module")
def mixture(sources):
    return convolve_mix(sources, default_filters())


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def span(frames, cfg=CFG):
    return (frames - 1) * cfg.hop + cfg.T


def test_init_state_smoke(mixture):
    st = init_state(mixture, CFG)
    assert st.output.shape == (2, span(CFG.nT))
    assert st.bank.h.shape == (2, 2, 256)
    rec = st.diagnostics[0]
    for key in ("reference_bin", "C_ref", "sort_margin_min", "wls_residual", "support"):
        assert key in rec


def test_too_short_for_window(mixture):
    with pytest.raises(InsufficientDataError):
        init_state(mixture.trimmed(span(CFG.nT) - 1), CFG)


def test_need_two_channels(mixture):
    with pytest.raises(ValueError, match="need 2 channels"):
        init_state(TimeSeries(mixture.channels[:1], 16000), CFG)


def test_wls_compacts_filters(mixture):
    X = window_spectra(mixture.channels, CFG, 0, CFG.nT)
    sol = solve_window(X, accumulate(X), CFG)
    unit = build_filter_bank(hermitian_extend(sol.Hinv, CFG.T), np.ones((2, CFG.T)))
    assert np.all(sol.bank.support <= 0.05)
    assert np.all(unit.support >= 0.2)


def identity_mix(sources):
    taps = np.zeros((2, 2, 1))
    taps[0, 0, 0] = taps[1, 1, 0] = 1
    return convolve_mix(sources, MixingFilters(taps))


@pytest.mark.xfail(strict=True, reason="per-window frequency sorting misorders part of the bins on "
                   "these sources, so the compact filters are not pure delays")
def test_identity_mixing_recovers_inputs(sources):
    mix = identity_mix(sources)
    out = init_state(mix, CFG).output
    L = out.shape[1]
    m = np.array([[rho_maxlag(out[i], mix.channels[j, :L]) for j in range(2)] for i in range(2)])
    assert max(m[0, 0] + m[1, 1], m[0, 1] + m[1, 0]) / 2 >= 0.99


def test_identity_mixing_keeps_sources_apart(sources):
    mix = identity_mix(sources)
    out = init_state(mix, CFG).output
    L = out.shape[1]
    m = np.array([[rho_maxlag(out[i], mix.channels[j, :L]) for j in range(2)] for i in range(2)])
    order = [0, 1] if m[0, 0] + m[1, 1] >= m[0, 1] + m[1, 0] else [1, 0]
    for i in range(2):
        assert m[i, order[i]] > 2 * m[i, 1 - order[i]]


def test_frozen_signal_is_a_fixed_point(mixture):
    period = CFG.dnT * CFG.hop
    frozen = TimeSeries(np.tile(mixture.channels[:, :period], (1, 8)), 16000)
    st = init_state(frozen, CFG)
    before = st.bank.h.copy()
    step_update(st, frozen, CFG)
    assert np.max(np.abs(st.bank.h - before)) <= 1e-6 * np.max(np.abs(before))
    assert st.diagnostics[-1]["time_sigma"] == [0, 1]


@pytest.mark.xfail(strict=True, reason="100-frame windows give filters whose outputs on the shared "
                   "interval differ more than the self-consistency bound allows")
def test_consecutive_outputs_agree_on_overlap(mixture):
    st = init_state(mixture, CFG)
    for _ in range(5):
        e = st.emitted
        ov = e - CFG.DnT * CFG.hop
        prev = st.output[:, ov:e]
        step_update(st, mixture, CFG)
        cand = demix_span(mixture.channels, st.bank, ov, e)
        assert all(rho_maxlag(prev[i], cand[i]) >= 0.9 for i in range(2))


def test_update_counting(mixture):
    exact = mixture.trimmed(span(CFG.nT))
    res = separate_dynamic(exact, CFG)
    assert len(res.diagnostics) == 1
    np.testing.assert_array_equal(res.output.channels, init_state(exact, CFG).output)
    one = separate_dynamic(mixture.trimmed(span(CFG.nT + CFG.dnT)), CFG)
    assert len(one.diagnostics) == 2
    assert len(one.output) == span(CFG.nT + CFG.dnT)


def test_append_only_and_invariance(mixture):
    st = init_state(mixture, CFG)
    ref_max = st.bank.max_diag()
    snapshots = [st.output.copy()]
    total = num_frames(len(mixture), CFG)
    while st.frame_start + CFG.dnT + CFG.nT <= total:
        step_update(st, mixture, CFG)
        out = st.output
        for snap in snapshots:
            np.testing.assert_array_equal(out[:, : snap.shape[1]], snap)
        assert out.shape[1] > snapshots[-1].shape[1]
        np.testing.assert_allclose(st.bank.max_diag(), ref_max, rtol=1e-9)
        snapshots.append(out.copy())
    assert len(snapshots) > 5
    assert [d["update"] for d in st.diagnostics] == list(range(len(snapshots)))


def test_alignment_margins_recorded(mixture, caplog):
    with caplog.at_level(logging.WARNING, logger="unmix.pipeline"):
        res = separate_dynamic(mixture, CFG)
    margins = [d["time_margin"] for d in res.diagnostics[1:]]
    assert len(margins) == len(res.diagnostics) - 1
    low = [m for m in margins if not m > 0.05]
    assert len([r for r in caplog.records if "low-confidence" in r.message]) == len(low)


def test_batch_separates(mixture, sources):
    res = separate_batch(mixture, CFG)
    assert len(res.output) == len(mixture)
    assert rho_maxlag(*res.output.channels) <= 0.15


def test_batch_errors(mixture):
    with pytest.raises(InsufficientDataError):
        separate_batch(mixture.trimmed(span(CFG.batch_nT) - 1), CFG)
    with pytest.raises(DegenerateStatisticsError):
        separate_batch(TimeSeries(np.zeros((2, 32000)), 16000), CFG)


def test_threads_do_not_change_results(mixture, monkeypatch):
    short = mixture.trimmed(span(CFG.batch_nT))
    a = separate_batch(short, CFG).output.channels
    monkeypatch.setenv("UNMIX_THREADS", "3")
    b = separate_batch(short, CFG).output.channels
    np.testing.assert_array_equal(a, b)


def test_diagnostics_jsonl(tmp_path, mixture):
    res = separate_dynamic(mixture.trimmed(span(CFG.nT + 2 * CFG.dnT)), CFG)
    write_diagnostics(res.diagnostics, tmp_path / "d.jsonl")
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    assert len(lines) == 3
    for line in lines:
        rec = json.loads(line)
        assert {"C_ref", "sort_margin_median", "wls_residual", "support"} <= rec.keys()
