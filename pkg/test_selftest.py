"""
Test the oracle self test - suite outcomes, fixture validation and deterministic output
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

# Add the project root to sys.path to import our modules
sys.path.insert(0, str(Path(__file__).parent))

import config
from main import EntropyApp
from selftest import bracket_suite, fixture_suite, quotient_norm_suite, random_space, run_selftest
from utils import save_metric_csv

BROKEN_MATRIX = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)


def test_random_spaces_are_seeded():
    first, second = random_space(4, 7), random_space(4, 7)
    assert 1 <= first.size <= 10
    assert np.array_equal(first.dist, second.dist)


def test_bracket_suite_passes():
    print("Testing bracket suite...")

    suite = bracket_suite(seed=0)
    for line in suite.lines():
        print(f"  {line}")
    assert suite.passed
    assert suite.cases == 150
    print("  [OK] 50 spaces x 3 eps")


def test_quotient_norm_suite_passes():
    suite = quotient_norm_suite(seed=0)
    for line in suite.lines():
        print(f"  {line}")
    assert suite.passed
    assert suite.cases == 14


def test_fixture_with_triangle_violation_fails():
    """An injected violation makes the fixture suite, and the whole run, fail."""
    print("Testing fixture validation...")

    with tempfile.TemporaryDirectory() as temp_dir:
        broken = save_metric_csv(BROKEN_MATRIX, str(Path(temp_dir) / 'broken.csv'))
        suite = fixture_suite(str(broken))
        missing = fixture_suite(str(Path(temp_dir) / 'missing.csv'))

    for line in suite.lines():
        print(f"  {line}")
    assert not suite.passed
    assert len(suite.failures) == 2
    assert all('triangle' in message for message in suite.failures)
    assert not missing.passed
    print("  [OK] Violations reported")


def test_lines_are_deterministic():
    assert bracket_suite(seed=5, n_spaces=10).lines() == bracket_suite(seed=5, n_spaces=10).lines()


def test_full_selftest_and_exit_codes():
    """All suites pass on the builders; an injected fixture turns the exit code to 2."""
    print("Testing the full self test...")

    result = run_selftest(seed=0)
    for line in result.lines():
        print(f"  {line}")
    assert result.passed
    assert result.lines()[0] == "selftest seed=0"
    assert result.lines()[-1] == "selftest: PASS"

    with tempfile.TemporaryDirectory() as temp_dir:
        broken = save_metric_csv(BROKEN_MATRIX, str(Path(temp_dir) / 'broken.csv'))
        code = EntropyApp().run(['--quiet', 'selftest', '--fixture', str(broken)])
    assert code == config.EXIT_CLAIM_FAILED
    print("  [OK] Exit 2 with a broken fixture")


def main():
    """Run all self test tests."""
    print("=" * 60)
    print("SELFTEST TESTS")
    print("=" * 60)

    try:
        test_random_spaces_are_seeded()
        test_bracket_suite_passes()
        test_quotient_norm_suite_passes()
        test_fixture_with_triangle_violation_fails()
        test_lines_are_deterministic()
        test_full_selftest_and_exit_codes()

        print("\n" + "=" * 60)
        print("[SUCCESS] ALL SELFTEST TESTS PASSED!")
        print("=" * 60)

    except Exception as e:
        print(f"\n[FAIL] SELFTEST TEST FAILED: {e}")
        raise


if __name__ == "__main__":
    main()
