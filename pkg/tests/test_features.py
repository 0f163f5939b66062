import numpy as np
import pytest
from scipy.fft import dct

from seizenet import features as F
from seizenet.errors import FormatError, MontageError, SignalError


def make_record(seconds, fs=100, n_ch=22, seed=0):
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    t = np.arange(n) / fs
    samples = rng.normal(size=(n_ch, n)) + np.sin(2 * np.pi * 7 * t)[None, :]
    return F.SignalRecord(fs, [f"ch{i + 1}" for i in range(n_ch)], samples)


def test_frame_count_formula():
    sig = make_record(21, fs=100, n_ch=1)
    blocks = F.frame_signal(sig, 0.2, 0.1)
    # floor((21 - 0.2) / 0.1) + 1
    assert blocks.shape == (1, 209, 20)


def test_frame_constant_signal_blocks_identical():
    sig = F.SignalRecord(100, ["a"], np.full((1, 500), 3.0))
    blocks = F.frame_signal(sig, 0.2, 0.1)
    assert np.all(blocks == blocks[:, :1])


def test_frame_non_overlapping_reconstructs():
    sig = make_record(2.05, fs=100, n_ch=2)
    blocks = F.frame_signal(sig, 0.1, 0.1)
    raw = blocks / np.hamming(10)
    flat = raw.reshape(2, -1)
    np.testing.assert_allclose(flat, sig.samples[:, :flat.shape[1]], rtol=1e-12)
    assert flat.shape[1] == 200


def test_frame_too_short():
    sig = F.SignalRecord(100, ["a"], np.zeros((1, 10)))
    with pytest.raises(SignalError):
        F.frame_signal(sig, 0.2, 0.1)
    with pytest.raises(SignalError):
        F.frame_signal(sig, 0.05, 0.1)


def test_lfcc_zero_block_is_dct_of_floor():
    ceps, energy = F.lfcc(np.zeros(20), 100.0, n_filters=24, n_ceps=8)
    expected = dct(np.full(24, np.log(F.LOG_FLOOR)), type=2, norm="ortho")[:8]
    np.testing.assert_allclose(ceps, expected, atol=1e-12)
    # constant input to the DCT: only c0 survives
    assert np.all(np.abs(ceps[1:]) < 1e-12)
    assert np.isfinite(energy) and energy == pytest.approx(np.log(F.LOG_FLOOR))


def test_filter_at_sinusoid_frequency_dominates():
    fs, n_filters = 250.0, 24
    centers = np.linspace(0, fs / 2, n_filters + 2)[1:-1]
    j = 10
    t = np.arange(50) / fs
    block = np.sin(2 * np.pi * centers[j] * t) * np.hamming(50)
    e = F.filterbank_energies(block, fs, n_filters)
    others = [k for k in range(n_filters) if abs(k - j) >= 2]
    assert np.all(e[j] > e[others])


def test_lfcc_validation():
    with pytest.raises(SignalError):
        F.lfcc(np.zeros(1), 100.0)
    with pytest.raises(ValueError):
        F.lfcc(np.zeros(20), 100.0, n_filters=4, n_ceps=8)


def loop_delta(x):
    n = x.shape[0]
    out = np.zeros_like(x)
    for t in range(n):
        acc = 0.0
        for k in (1, 2):
            hi = x[min(n - 1, t + k)]
            lo = x[max(0, t - k)]
            acc = acc + k * (hi - lo)
        out[t] = acc / 10.0
    return out


def test_deltas_constant_is_zero():
    assert np.all(F.deltas(np.ones((8, 3)), 1) == 0)
    assert np.all(F.deltas(np.ones((8, 3)), 2) == 0)


def test_deltas_ramp_interior():
    x = 2.5 * np.arange(12.0)[:, None]
    d = F.deltas(x, 1)
    np.testing.assert_allclose(d[2:-2, 0], 2.5, rtol=1e-12)


def test_deltas_match_direct_formula():
    x = np.random.default_rng(3).normal(size=(15, 4))
    np.testing.assert_allclose(F.deltas(x, 1), loop_delta(x), atol=1e-12)
    np.testing.assert_allclose(F.deltas(x, 2), loop_delta(loop_delta(x)), atol=1e-12)


def test_deltas_too_short():
    with pytest.raises(SignalError):
        F.deltas(np.zeros((4, 2)))


def test_build_windows_count_and_shape():
    wins = F.build_windows(make_record(30))
    assert len(wins) == 10  # floor(30 - 21) + 1
    assert all(w.frames.shape == (210, 22, 26, 1) for w in wins)
    assert [w.start_time for w in wins] == [float(k) for k in range(10)]


def test_feature_width_is_26():
    assert F.FeatureConfig().feature_width == 26
    assert F.FeatureConfig().frames_per_window == 210


def test_identical_channels_identical_rows():
    sig = make_record(22)
    sig.samples[5] = sig.samples[3]
    w = F.build_windows(sig)[0].frames
    np.testing.assert_array_equal(w[:, 3], w[:, 5])


def test_window_frames_line_up_with_record_frames():
    sig = make_record(23)
    feats = F.frame_features(sig)
    wins = F.build_windows(sig)
    np.testing.assert_array_equal(wins[2].frames[..., 0], feats[20:230])


def test_build_windows_errors():
    with pytest.raises(MontageError):
        F.build_windows(make_record(30, n_ch=21))
    with pytest.raises(SignalError, match="shorter"):
        F.build_windows(make_record(20))


def test_features_deterministic_and_finite():
    a = F.build_windows(make_record(22, seed=5))
    b = F.build_windows(make_record(22, seed=5))
    assert a[0].frames.tobytes() == b[0].frames.tobytes()
    zero = F.SignalRecord(100, [f"c{i}" for i in range(22)], np.zeros((22, 2200)))
    assert all(np.all(np.isfinite(w.frames)) for w in F.build_windows(zero))


def test_amplitude_scaling_keeps_shapes():
    sig = make_record(23)
    scaled = F.SignalRecord(sig.sample_rate, sig.channels, sig.samples * 7.0)
    a, b = F.build_windows(sig), F.build_windows(scaled)
    assert len(a) == len(b) and a[0].frames.shape == b[0].frames.shape


def test_signal_record_validation():
    with pytest.raises(SignalError):
        F.SignalRecord(0, ["a"], np.zeros((1, 5)))
    with pytest.raises(SignalError):
        F.SignalRecord(10, ["a", "b"], np.zeros((1, 5)))
    assert F.SignalRecord(10, ["a"], np.zeros((1, 25))).duration == 2.5


def test_csv_roundtrip(tmp_path):
    sig = make_record(1, fs=50, n_ch=3)
    path = tmp_path / "s.csv"
    F.write_signal_csv(path, sig)
    assert path.read_text().splitlines()[0] == "time,ch1,ch2,ch3"
    back = F.read_signal(path)
    assert back.sample_rate == 50 and back.channels == sig.channels
    np.testing.assert_array_equal(back.samples, sig.samples)


def test_binary_layout_and_roundtrip(tmp_path):
    sig = make_record(1, fs=50, n_ch=2)
    path = tmp_path / "s.eeg"
    F.write_signal_binary(path, sig)
    raw = path.read_bytes()
    assert raw[:4] == b"EEGR"
    assert int.from_bytes(raw[4:8], "little") == 50
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:20], "little") == 50
    assert len(raw) == 20 + 4 * 2 * 50
    first = np.frombuffer(raw[20:24], "<f4")[0]
    assert first == np.float32(sig.samples[0, 0])
    back = F.read_signal(path)
    np.testing.assert_array_equal(back.samples, sig.samples.astype(np.float32).astype(np.float64))


def test_binary_truncated(tmp_path):
    path = tmp_path / "bad.eeg"
    path.write_bytes(b"EEGR" + bytes(10))
    with pytest.raises(FormatError):
        F.read_signal(path)
