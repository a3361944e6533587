import numpy as np
import pytest

from asymmix.exceptions import ContractViolation
from asymmix.harness import (
    REPORT_HEADER,
    SUMMARY_HEADER,
    Method,
    compare,
    format_report,
    repeated_runs,
)
from asymmix.synth import gen_synthetic_cells


@pytest.fixture(scope="module")
def dataset():
    return [gen_synthetic_cells(32, 32, 5, seed=s) for s in range(2)]


class TestRepeatedRuns:
    def test_single_round(self, dataset):
        rep = repeated_runs("gmm", dataset, rounds=1)
        assert rep.dice.shape == (1, 2)
        assert rep.dice_best == rep.dice_mean and rep.dice_std == 0.0

    def test_identical_seeds(self, dataset):
        rep = repeated_runs("mkmeans", dataset, rounds=3, seeds=[4, 4, 4])
        assert rep.dice_std == 0.0
        assert np.all(rep.dice == rep.dice[0])

    def test_report_invariants(self, dataset):
        rep = repeated_runs("amm", dataset, rounds=3)
        assert rep.dice_std >= 0
        assert rep.dice_best >= rep.dice_mean - 5 * rep.dice_std
        assert np.all((rep.dice >= 0) & (rep.dice <= 1))
        assert np.all(rep.seconds > 0)
        assert rep.chosen.shape == (3, 2)

    def test_network_method(self, dataset):
        rep = repeated_runs(Method("damm", damm_steps=2), dataset, rounds=1)
        assert rep.dice.shape == (1, 2)

    def test_empty_dataset(self):
        with pytest.raises(ContractViolation):
            repeated_runs("gmm", [])

    def test_seed_count(self, dataset):
        with pytest.raises(ContractViolation):
            repeated_runs("gmm", dataset, rounds=2, seeds=[1])

    def test_unknown_method(self):
        with pytest.raises(ContractViolation):
            Method("sam")

    def test_mask_shape_checked(self, dataset):
        image, mask = dataset[0]
        with pytest.raises(ContractViolation):
            repeated_runs("gmm", [(image, mask[:-1])])


class TestReport:
    def test_format(self, dataset):
        a = repeated_runs("amm", dataset, rounds=2)
        g = repeated_runs("gmm", dataset, rounds=2)
        text = format_report([a, g], reference="gmm")
        lines = text.splitlines()
        assert lines[0] == REPORT_HEADER
        assert len(lines) == 1 + 8 + 1 + 1 + 2
        assert lines[10] == SUMMARY_HEADER
        amm_row = lines[11].split(",")
        assert amm_row[0] == "amm" and float(amm_row[4]) == compare(a, g).p_value
        assert lines[12].split(",")[4] == ""

    def test_without_timing_is_reproducible(self, dataset):
        texts = [format_report([repeated_runs("gmm", dataset, rounds=2)], timing=False)
                 for _ in range(2)]
        assert texts[0] == texts[1]

    def test_compare_needs_equal_rounds(self, dataset):
        with pytest.raises(ContractViolation):
            compare(repeated_runs("gmm", dataset, rounds=1), repeated_runs("gmm", dataset, rounds=2))
