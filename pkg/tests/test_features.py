import numpy as np
import pytest

from amcbench import features, modem
from amcbench.errors import ConfigurationError
from amcbench.features import FeatureTensor, WindowPlan
from amcbench.modem import IqFrame, ModulationClass


def make_frame(samples, label=ModulationClass.BPSK):
    return IqFrame(samples=np.asarray(samples, dtype=np.complex128), label=label,
                   snr_db=np.inf, seed=0)


@pytest.fixture
def random_frame():
    rng = np.random.default_rng(17)
    return make_frame(rng.normal(size=1024) + 1j * rng.normal(size=1024))


# ---------------------------------------------------------------------------
# segmentation


def test_default_plan_offsets(random_frame):
    windows = features.segment(random_frame, WindowPlan())
    assert len(windows) == 8
    assert list(WindowPlan().offsets()) == [0, 112, 224, 336, 448, 560, 672, 784]
    for off, win in zip(WindowPlan().offsets(), windows):
        np.testing.assert_array_equal(win, random_frame.samples[off:off + 224])


def test_identity_segmentation(random_frame):
    plan = WindowPlan(window_len=1024, stride=1, count=1)
    (window,) = features.segment(random_frame, plan)
    np.testing.assert_array_equal(window, random_frame.samples)


def test_plan_overflow_rejected(random_frame):
    with pytest.raises(ConfigurationError):
        features.segment(random_frame, WindowPlan(window_len=224, stride=112, count=9))


def test_trailing_samples_never_used(random_frame):
    tensors_a = features.frame_to_input(random_frame)
    tampered = random_frame.samples.copy()
    tampered[1008:] = 99.0 + 99.0j
    tensors_b = features.frame_to_input(make_frame(tampered))
    for a, b in zip(tensors_a, tensors_b):
        np.testing.assert_array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# amplitude / phase


def test_amplitude_values():
    win = np.array([3 + 4j, 0 + 0j, 1 + 1j])
    np.testing.assert_allclose(features.amplitude(win), [5.0, 0.0, np.sqrt(2.0)])


def test_phase_values_quadrant_aware():
    win = np.array([1 + 0j, 0 + 1j, -1 + 0j, 0 + 0j])
    np.testing.assert_allclose(features.phase(win), [0.0, np.pi / 2, np.pi, 0.0])


def test_amplitude_phase_identities_on_random_frames():
    rng = np.random.default_rng(23)
    for _ in range(10):
        win = rng.normal(size=256) + 1j * rng.normal(size=256)
        a = features.amplitude(win)
        p = features.phase(win)
        np.testing.assert_allclose(a * a, win.real**2 + win.imag**2, atol=1e-12)
        assert np.all(a >= 0)
        assert np.all((p >= -np.pi) & (p <= np.pi))
        # polar reconstruction closes the loop
        np.testing.assert_allclose(a * np.exp(1j * p), win, atol=1e-12)


# ---------------------------------------------------------------------------
# tensorize


def test_tensorize_s4_hand_case():
    win = np.array([1 + 0j, 0 + 1j, -1 + 0j, 0 - 1j])
    data = features.tensorize(win, 4).data
    np.testing.assert_allclose(data[:, :, 0], np.ones((4, 4)), atol=0)
    expected_phase = np.tile([0.0, np.pi / 2, np.pi, -np.pi / 2], (4, 1))
    np.testing.assert_allclose(data[:, :, 1], expected_phase, atol=0)
    np.testing.assert_array_equal(data[0, :, 2], [1.0, 0.0, -1.0, 0.0])
    np.testing.assert_array_equal(data[2, :, 2], [1.0, 0.0, -1.0, 0.0])
    np.testing.assert_array_equal(data[1, :, 2], [0.0, 1.0, 0.0, -1.0])
    np.testing.assert_array_equal(data[3, :, 2], [0.0, 1.0, 0.0, -1.0])


def test_tensorize_constant_window():
    win = np.ones(6, dtype=np.complex128)
    data = features.tensorize(win, 6).data
    assert np.all(data[:, :, 0] == 1.0)
    assert np.all(data[:, :, 1] == 0.0)
    assert np.all(data[0::2, :, 2] == 1.0) and np.all(data[1::2, :, 2] == 0.0)


def test_tensorize_row_tiling(random_frame):
    data = features.tensorize(random_frame.samples[:224], 224).data
    for ch in (0, 1):
        np.testing.assert_array_equal(data[:, :, ch], np.tile(data[0, :, ch], (224, 1)))
    # channel 2 holds exactly two interleaved row patterns
    assert len(np.unique(data[:, :, 2], axis=0)) == 2


def test_tensorize_rejects_mismatched_side():
    with pytest.raises(ConfigurationError):
        features.tensorize(np.ones(8, dtype=np.complex128), 16)


def test_scaling_equivariance(random_frame):
    c = 2.5
    scaled = make_frame(random_frame.samples * c)
    base = features.tensorize(random_frame.samples[:224], 224).data
    up = features.tensorize(scaled.samples[:224], 224).data
    np.testing.assert_allclose(up[:, :, 0], c * base[:, :, 0], atol=1e-12)
    np.testing.assert_allclose(up[:, :, 1], base[:, :, 1], atol=1e-12)
    np.testing.assert_allclose(up[:, :, 2], c * base[:, :, 2], atol=1e-12)


# ---------------------------------------------------------------------------
# frame_to_input


def test_frame_to_input_yields_8_tensors(random_frame):
    tensors = features.frame_to_input(random_frame)
    assert len(tensors) == 8
    assert [t.source_window for t in tensors] == list(range(8))
    for t in tensors:
        assert t.data.shape == (224, 224, 3)
        assert np.all(np.isfinite(t.data))
        assert np.all(t.data[:, :, 0] >= 0)
        assert np.all((t.data[:, :, 1] >= -np.pi) & (t.data[:, :, 1] <= np.pi))


def test_frame_to_input_deterministic(random_frame):
    a = features.frame_to_input(random_frame)
    b = features.frame_to_input(random_frame)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)


def test_zero_frame_zero_amplitude():
    tensors = features.frame_to_input(make_frame(np.zeros(1024, dtype=np.complex128)))
    for t in tensors:
        assert np.all(t.data[:, :, 0] == 0.0)


def test_stack_input_layout(random_frame):
    plan = WindowPlan(window_len=32, stride=16, count=8)
    tensors = features.frame_to_input(random_frame, plan)
    arr = features.stack_input(tensors)
    assert arr.shape == (8, 3, 32, 32)
    np.testing.assert_array_equal(arr[2, 1], tensors[2].data[:, :, 1])
