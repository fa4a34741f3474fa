"""Acceptance suite: one test per release criterion.

Each test prints its pass/fail line (visible with -s or on failure) and
enforces the stated runtime budget where one exists.
"""

from otkit import verify


def _run(index, budget_seconds=None):
    result = verify.CRITERIA[index]()
    print(result.format_line())
    assert result.passed, result.detail
    if budget_seconds is not None:
        assert result.seconds < budget_seconds, (
            f"criterion {index} took {result.seconds:.1f}s, budget {budget_seconds}s"
        )
    return result


def test_criterion_1_sinkhorn_rate_envelope():
    _run(1, budget_seconds=60.0)


def test_criterion_2_approx_end_to_end():
    _run(2, budget_seconds=120.0)


def test_criterion_3_rounding_contract():
    _run(3)


def test_criterion_4_accelerated_end_to_end():
    _run(4)


def test_criterion_5_gradient_finite_differences():
    _run(5)


def test_criterion_6_barycenter_oracle_gap():
    _run(6)


def test_criterion_7_decentralized_consensus():
    _run(7)


def test_criterion_8_stochastic_gradient_unbiased():
    _run(8)


def test_criterion_9_projection_equivalence_logsumexp():
    _run(9)
