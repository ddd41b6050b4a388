import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrpi.split import (
    METHODS,
    SplitCertificate,
    SplitError,
    compute_split,
    eig_shift_split,
    gershgorin_split,
    sdp_lite_split,
    verify_split,
)

from conftest import random_psd


def test_two_by_two_reference():
    Q = np.array([[2.0, 1.0], [1.0, 2.0]])
    for m in METHODS:
        np.testing.assert_allclose(compute_split(Q, m).D, [3.0, 3.0], rtol=1e-8)


def test_diagonal_q_is_its_own_split():
    Q = np.diag([1.0, 0.5, 2.0])
    np.testing.assert_allclose(sdp_lite_split(Q).D, [1.0, 0.5, 2.0], atol=1e-8)
    np.testing.assert_allclose(gershgorin_split(Q).D, [1.0, 0.5, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(0, 10**6), st.sampled_from(METHODS))
def test_split_is_valid_and_exact_on_binary_points(n, seed, method):
    rng = np.random.default_rng(seed)
    Q = random_psd(rng, n, rank=max(1, n // 2))
    cert = compute_split(Q, method)
    assert cert.passed
    assert verify_split(Q, cert.D).lambda_max <= 1e-8
    x = rng.integers(0, 2, n).astype(float)
    lhs = x @ (Q - np.diag(cert.D)) @ x + cert.D @ x
    assert lhs == pytest.approx(x @ Q @ x, abs=1e-12 * max(1.0, np.abs(Q).sum()))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10**6))
def test_sdp_lite_never_worse_than_seeds(n, seed):
    Q = random_psd(np.random.default_rng(seed), n)
    t = sdp_lite_split(Q).trace
    assert t <= gershgorin_split(Q).trace + 1e-9
    assert t <= eig_shift_split(Q).trace + 1e-9


def test_certificate_roundtrip():
    cert = eig_shift_split(np.eye(3))
    back = SplitCertificate.from_dict(cert.to_dict())
    np.testing.assert_array_equal(back.D, cert.D)
    assert back.method == "eig-shift"


def test_verify_flags_bad_split():
    Q = np.array([[1.0, 0.9], [0.9, 1.0]])
    assert not verify_split(Q, [1.0, 1.0]).passed


def test_rejects_asymmetric_and_unknown():
    with pytest.raises(SplitError):
        gershgorin_split(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(SplitError):
        compute_split(np.eye(2), "cholesky")
