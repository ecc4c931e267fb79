import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from elmkit.tasks import (
    AddingTask,
    DigitSample,
    RecallTask,
    SpikeRaster,
    TeacherConfig,
    TeacherTask,
    alif_teacher_config,
    build_dataset,
    digit_template,
    gen_adding,
    gen_delayed_recall,
    gen_digit,
    gen_teacher_io,
    make_adding,
    make_teacher,
    read_dataset,
    rebin,
    summarize,
    teacher_trace,
    write_dataset,
)
from elmkit.tasks.digits import N_SUMS
from elmkit.tasks.teacher import cut_samples

# ---- teacher -----------------------------------------------------------------


def test_teacher_zero_input_decays_to_bias():
    cfg = TeacherConfig(channels=8, bias=0.6)
    tr = gen_teacher_io(make_teacher(cfg, 0), 8, 1000, 0.0, seed=0)
    assert tr.spikes.sum() == 0
    assert np.all(np.diff(tr.voltage) >= 0)
    assert tr.voltage[-1] == pytest.approx(0.6, rel=1e-12)


def test_alif_without_adaptation_matches_lif():
    lif = teacher_trace(TeacherConfig(channels=16), 2000, seed=3)
    alif = teacher_trace(TeacherConfig(channels=16, kind="alif", strength=0.0), 2000, seed=3)
    assert np.array_equal(lif.voltage, alif.voltage)
    assert np.array_equal(lif.spikes, alif.spikes)
    assert np.array_equal(lif.raster.values, alif.raster.values)


@pytest.mark.parametrize("cfg", [TeacherConfig(), alif_teacher_config()], ids=["lif", "alif"])
def test_default_teacher_rate_in_range(cfg):
    tr = teacher_trace(cfg, 100_000, seed=0)
    rate = tr.spikes.sum() / 100.0
    assert 1.0 <= rate <= 50.0


def test_teacher_adaptation_lowers_rate():
    base = alif_teacher_config()
    adapted = teacher_trace(base, 20_000, seed=1).spikes.sum()
    plain = teacher_trace(TeacherConfig(**{**base.to_dict(), "strength": 0.0}), 20_000, seed=1).spikes.sum()
    assert adapted < plain


def test_teacher_raster_sign_is_channel_identity():
    tr = teacher_trace(TeacherConfig(channels=40), 5000, seed=2)
    v = tr.raster.values
    signs = np.sign(v).max(axis=0) - np.sign(v).min(axis=0)
    assert np.all(signs <= 1)  # no channel carries both signs
    assert (v.min(axis=0) < 0).sum() == 8


def test_teacher_validation():
    p = make_teacher(TeacherConfig(channels=4), 0)
    with pytest.raises(ValueError):
        gen_teacher_io(p, 4, 999, 10.0, seed=0)
    with pytest.raises(ValueError):
        gen_teacher_io(p, 5, 1000, 10.0, seed=0)


def test_teacher_high_rates_clip_with_warning():
    p = make_teacher(TeacherConfig(channels=3), 0)
    with pytest.warns(UserWarning, match="clipped"):
        tr = gen_teacher_io(p, 3, 1000, 5000.0, seed=0)
    assert np.abs(tr.raster.values).max() == 1
    assert np.all(np.abs(tr.raster.values) == 1)


def test_teacher_streams_share_channels_not_inputs():
    cfg = TeacherConfig(channels=10)
    a = teacher_trace(cfg, 2000, 4, stream="train")
    b = teacher_trace(cfg, 2000, 4, stream="test")
    assert not np.array_equal(a.raster.values, b.raster.values)
    assert np.array_equal(np.sign(a.raster.values).min(0) < 0, np.sign(b.raster.values).min(0) < 0)


def test_cut_samples_shapes():
    tr = teacher_trace(TeacherConfig(channels=6), 2300, seed=0)
    x, y = cut_samples(tr, 500)
    assert x.shape == (4, 500, 6) and y.shape == (4, 500, 2)
    assert np.array_equal(y[1, :, 0], tr.voltage[500:1000])


# ---- digits and adding ----------------------------------------------------------


def test_digit_same_seed_identical():
    a = gen_digit(3, 32, seed=5)
    b = gen_digit(3, 32, seed=5)
    assert np.array_equal(a.raster.values, b.raster.values)


def test_digit_band_occupancy_chi_square():
    channels, n = 32, 30
    rates = digit_template(7).rates(channels, 1000)
    expected = n * rates.sum(axis=0) / 1000.0
    counts = sum(gen_digit(7, channels, seed=s).raster.values.sum(axis=0) for s in range(n))
    assert not np.array_equal(gen_digit(7, channels, seed=0).raster.values,
                              gen_digit(7, channels, seed=1).raster.values)
    keep = expected >= 5
    # Bernoulli counts are slightly under-dispersed w.r.t. Poisson, so the test is conservative
    chi2 = ((counts[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert chi2 < stats.chi2.ppf(0.999, keep.sum())
    assert np.all(counts[expected == 0] == 0)


@pytest.mark.parametrize("label", [0, 4, 9])
def test_digit_rate_invariant_under_dt(label):
    n = 40
    c1 = sum(gen_digit(label, 16, dt=1.0, seed=s).raster.values.sum() for s in range(n))
    c2 = sum(gen_digit(label, 16, dt=0.5, seed=s).raster.values.sum() for s in range(n))
    assert abs(c2 - c1) / c1 < 0.05


def test_zero_rate_channels_never_spike():
    for label in range(10):
        rates = digit_template(label).rates(64, 1000)
        silent = rates.sum(axis=0) == 0
        if not silent.any():
            continue
        for seed in range(5):
            assert np.all(gen_digit(label, 64, seed=seed).raster.values[:, silent] == 0)


def test_digit_rejects_bad_label():
    with pytest.raises(ValueError):
        gen_digit(10, 8)


def test_adding_examples():
    z = gen_digit(0, 8, seed=0)
    nine = gen_digit(9, 8, seed=0)
    assert make_adding(z, z).label == 0
    s = make_adding(nine, nine)
    assert s.label == 18 and N_SUMS == 19
    assert s.raster.steps == 2 * nine.raster.steps
    assert np.array_equal(s.raster.values[:1000], nine.raster.values)


def test_adding_rejects_mismatch():
    a = gen_digit(1, 8, seed=0)
    with pytest.raises(ValueError, match="channel"):
        make_adding(a, gen_digit(1, 9, seed=0))
    with pytest.raises(ValueError, match="dt"):
        make_adding(a, gen_digit(1, 8, dt=0.5, seed=0))


def test_adding_label_distribution():
    rng_labels = [s.label for s in gen_adding(2000, 2, seed=0, duration_ms=10)]
    counts = np.bincount(rng_labels, minlength=19)
    p = np.convolve(np.full(10, 0.1), np.full(10, 0.1))
    sd = np.sqrt(2000 * p * (1 - p))
    assert np.all(np.abs(counts - 2000 * p) <= 3 * sd + 1e-9)


# ---- rebin ------------------------------------------------------------------


def test_rebin_identity():
    r = SpikeRaster(np.array([[1, -1], [0, 1]], dtype=np.int16), 2.0)
    assert rebin(r, 2.0) is r


def test_rebin_two_spikes_one_bin():
    r = SpikeRaster(np.array([[1], [1], [0], [1]], dtype=np.int16), 1.0)
    out = rebin(r, 2.0)
    assert out.values[:, 0].tolist() == [2, 1]
    assert out.dt == 2.0 and out.k == 2


def test_rebin_rejects_non_multiple():
    r = SpikeRaster(np.zeros((4, 1), dtype=np.int16), 1.0)
    with pytest.raises(ValueError):
        rebin(r, 1.5)
    with pytest.raises(ValueError):
        rebin(r, 0.5)


@settings(max_examples=50)
@given(st.integers(1, 60), st.integers(1, 5), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_rebin_conserves_signed_mass(steps, channels, factor, seed):
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1, 1], size=channels)
    v = (rng.random((steps, channels)) < 0.4).astype(np.int16) * signs
    out = rebin(SpikeRaster(v.astype(np.int16), 1.0), float(factor))
    assert np.array_equal(out.values.sum(axis=0), v.sum(axis=0))
    assert out.steps == -(-steps // factor)
    assert np.abs(out.values).max(initial=0) <= out.k


# ---- delayed recall ---------------------------------------------------------


def test_recall_delay_zero_readable_at_last_step():
    b = gen_delayed_recall(20, 5, 0, seed=0, n=64)
    assert np.array_equal(b.inputs[:, -1, :5].argmax(axis=1), b.targets)


def test_recall_cue_position_and_labels():
    b = gen_delayed_recall(50, 3, 30, seed=1, n=32, noise_channels=0)
    assert np.array_equal(b.inputs[:, 19].argmax(axis=1), b.targets)
    assert b.inputs[:, 20:].sum() == 0 and b.inputs[:, :19].sum() == 0


def test_recall_held_cue():
    b = gen_delayed_recall(100, 4, 60, seed=2, n=8, noise_channels=0, cue_steps=10)
    on = b.inputs.sum(axis=2)
    assert np.all(on[:, 30:40] == 1) and on[:, :30].sum() == 0 and on[:, 40:].sum() == 0


def test_recall_chance_baseline():
    b = gen_delayed_recall(10, 4, 5, seed=3, n=8000)
    freq = np.bincount(b.targets, minlength=4) / 8000
    np.testing.assert_allclose(freq, 0.25, atol=0.02)


def test_recall_validation():
    with pytest.raises(ValueError):
        gen_delayed_recall(10, 4, 10, seed=0)
    with pytest.raises(ValueError):
        gen_delayed_recall(10, 1, 3, seed=0)
    with pytest.raises(ValueError):
        gen_delayed_recall(10, 4, 5, seed=0, cue_steps=6)


# ---- datasets -----------------------------------------------------------------

SMALL = {
    "teacher": TeacherTask(TeacherConfig(channels=6), train_ms=4000, test_ms=2000, sample_ms=500),
    "adding": AddingTask(channels=6, n_train=20, n_test=10, digit_ms=100, bin_ms=10),
    "recall": RecallTask(length=30, delay=20, cue_steps=5, n_train=20, n_test=10),
}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_build_dataset_deterministic(name):
    a = build_dataset(SMALL[name], 0)
    b = build_dataset(SMALL[name], 0)
    assert a.digest() == b.digest()
    assert build_dataset(SMALL[name], 1).digest() != a.digest()


@pytest.mark.parametrize("name", sorted(SMALL))
def test_dataset_round_trip(name, tmp_path):
    ds = build_dataset(SMALL[name], 0)
    write_dataset(ds, tmp_path)
    back = read_dataset(tmp_path)
    assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.targets, ds.targets)
    assert back.digest() == ds.digest()
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["counts"]["n"] == ds.inputs.shape[0]
    assert (tmp_path / "inputs.bin").stat().st_size == 4 * ds.inputs.size


def test_dataset_binary_layout(tmp_path):
    ds = build_dataset(SMALL["recall"], 0)
    write_dataset(ds, tmp_path)
    raw = np.fromfile(tmp_path / "inputs.bin", dtype="<f4").reshape(ds.inputs.shape)
    assert np.array_equal(raw, ds.inputs)
    assert np.array_equal(np.fromfile(tmp_path / "targets.bin", dtype="<i4"), ds.targets)


def test_dataset_splits_partition():
    ds = build_dataset(SMALL["adding"], 0)
    idx = np.concatenate([np.arange(*ds.splits[k]) for k in ("train", "val", "test")])
    assert np.array_equal(idx, np.arange(ds.inputs.shape[0]))
    assert len(summarize(ds)["class_counts"]) == 19


def test_adding_dataset_binned_dt():
    ds = build_dataset(SMALL["adding"], 0)
    assert ds.dt == 10.0 and ds.inputs.shape[1] == 20


def test_digit_sample_type():
    assert isinstance(gen_digit(2, 4, seed=0), DigitSample)


def test_no_warnings_at_default_rates():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gen_digit(5, 16, seed=0)
        teacher_trace(TeacherConfig(channels=8), 1000, seed=0)
