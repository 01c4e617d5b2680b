import math

import pytest
from hypothesis import given, settings, strategies as st

from nsrlsvi.schedule import ScheduleError, compute_schedule


def test_single_layer_width():
    d, m, T = 3, 3, 100
    s = compute_schedule(d, 1, m, T)
    assert s.W[2] == s.W[1] == 1.0
    expected = 2 + math.sqrt(2 * d) * (s.B_noise_P(0) + s.B_noise_R)
    assert s.W[0] == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("H", [1, 2, 3])
def test_zero_error_terms_give_plain_sigma(H):
    d, m = 4, 6
    s = compute_schedule(d, H, m, 50)
    assert s.B_err_P == 0.0
    for k in range(H):
        assert s.sigma_at(k) == pytest.approx(math.sqrt(8 * m * H) * s.width_at(k), rel=1e-12)


@pytest.mark.xfail(strict=True, reason="the closed-form order estimate omits the log factors "
                   "of the exact recursion; see the decisions ledger")
def test_sigma_one_matches_order_estimate():
    d, H, m = 8, 3, 36
    s = compute_schedule(d, H, m, 2000)
    estimate = (d * math.sqrt(m * H)) ** 3 * (math.sqrt(d) + math.sqrt(m * H))
    assert 0.5 * estimate <= s.sigma[0] <= 1.5 * estimate


def test_scale_override_scales_noise_only():
    a = compute_schedule(2, 2, 2, 10)
    b = compute_schedule(2, 2, 2, 10, scale_override=1e-3)
    assert b.W == a.W
    assert b.sigma_R == pytest.approx(1e-3 * a.sigma_R)
    assert all(x == pytest.approx(1e-3 * y) for x, y in zip(b.sigma, a.sigma))


def test_optimism_slack():
    s = compute_schedule(2, 3, 2, 10, gamma=2.0, eps1=0.1, eps_B=0.01)
    assert s.B_err_P == pytest.approx(math.sqrt(2 * 0.01 + 4 * 10 * 1e-4))
    assert s.optimism_slack == pytest.approx(s.B_err_P * 2.0 * 3)
    assert compute_schedule(2, 3, 2, 10).optimism_slack == 0.0


def test_overflow_is_reported():
    with pytest.raises(ScheduleError, match="smaller H"):
        compute_schedule(64, 400, 2000, 10**6)


def test_invalid_inputs():
    with pytest.raises(ScheduleError):
        compute_schedule(0, 1, 1, 1)
    with pytest.raises(ScheduleError):
        compute_schedule(2, 1, 1, 1, gamma=0.5)


def test_lines_list_every_layer():
    text = "\n".join(compute_schedule(2, 3, 3, 5).lines())
    assert "sigma_3" in text and "W_4" in text


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(1, 5), st.integers(1, 50), st.integers(1, 10_000))
def test_widths_grow_toward_the_first_layer(d, H, m, T):
    s = compute_schedule(d, H, m, T)
    assert all(a > b for a, b in zip(s.W[:H], s.W[1:H + 1]))
    assert all(x > 0 for x in s.sigma)
