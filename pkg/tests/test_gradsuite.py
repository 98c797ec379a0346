import pytest

from zslfeedback.gradsuite import CHECKS, TOLERANCE, run_gradchecks


def test_cheap_checks_pass():
    names = [n for n in CHECKS if not n.startswith("full_objective")]
    results = run_gradchecks(names=names)
    assert [r.name for r in results] == names
    assert all(r.passed for r in results), results


def test_corruption_is_detected():
    results = run_gradchecks(names=["reconstruction_loss", "triplet_loss"],
                             corrupt="triplet_loss")
    assert results[0].passed and not results[1].passed
    assert results[1].max_rel_error > TOLERANCE


def test_unknown_check():
    with pytest.raises(KeyError):
        run_gradchecks(names=["nope"])
