import copy

import pytest
import yaml

SMALL_ENCODER = {"widths": [16, 32, 64], "points": [64, 16, 0], "k": [8, 8, 8]}

TINY = {
    "images": {
        "preset": "shape-images",
        "data": {"count": 60, "test_fraction": 0.25},
        "encoder": SMALL_ENCODER,
        "train": {"epochs": 5},
        "sweep": {"sparsities": [0.0, 0.5], "noise_levels": [0.0, 0.02], "runs": 2,
                  "train_limit": 30, "test_limit": 10},
    },
    "events": {
        "preset": "dvs-gestures",
        "data": {"count": 12, "test_fraction": 0.25},
        "encoder": SMALL_ENCODER,
        "dvs": {"sample_count": 128},
        "train": {"epochs": 5},
    },
    "shapes": {
        "preset": "shapes",
        "data": {"count": 8, "test_fraction": 0.25, "n_points": 128},
        "encoder": {"widths": [16, 32, 64], "points": [32, 8, 0], "k": [8, 4, 1]},
        "decoder": {"widths": [32, 32, 32]},
        "train": {"epochs": 3, "points_per_shape": 32},
    },
}


def tiny(name, **overrides):
    raw = copy.deepcopy(TINY[name])
    for key, val in overrides.items():
        if isinstance(val, dict):
            raw.setdefault(key, {}).update(val)
        else:
            raw[key] = val
    return raw


@pytest.fixture
def write_config(tmp_path):
    def _write(name, **overrides):
        path = tmp_path / f"{name}.yaml"
        path.write_text(yaml.safe_dump(tiny(name, **overrides)))
        return path
    return _write


ACCEPTANCE = []


def record(criterion, passed, detail):
    """Log one acceptance line; it is printed now and again in the run summary."""
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
