import hashlib

import pandas as pd
import pytest
from pydantic import ValidationError

from config import ChannelConfig, FluidParams, SweepGrid, _set_dotted, load_config
from errors import ConfigError, DimensionMismatch
from utils import atomic_write_text, content_hash, frame_to_csv, matrix_columns, read_matrix_csv, thread_cap


def test_content_hash_ignores_key_order():
    assert content_hash({"a": 1, "b": [1, 2]}) == content_hash({"b": [1, 2], "a": 1})
    assert content_hash({"a": 1}) != content_hash({"a": 2})
    assert content_hash({}) == hashlib.sha1(b"blob 2\0{}").hexdigest()


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("YSL_THREADS", "3")
    assert thread_cap() == 3
    assert thread_cap(8) == 3
    assert thread_cap(2) == 2
    assert thread_cap(0) == 1

    monkeypatch.setenv("YSL_THREADS", "many")
    assert thread_cap(5) <= 5


def test_frame_to_csv_has_version_header():
    text = frame_to_csv(pd.DataFrame({"y": [0.1], "u": [1.0 / 3.0]}))
    lines = text.splitlines()
    assert lines[0] == "# yield-stress-lab 0.1.0"
    assert lines[1] == "y,u"
    assert float(lines[2].split(",")[1]) == 1.0 / 3.0


def test_read_matrix_csv(tmp_path):
    path = tmp_path / "X.csv"
    path.write_text("# header\nx11,x12,x21,x22\n1,2,3,4\n")
    X = read_matrix_csv(path, 2)
    assert X.shape == (1, 2, 2)
    assert X[0, 1, 0] == 3.0

    with pytest.raises(DimensionMismatch):
        read_matrix_csv(path, 3)
    with pytest.raises(ConfigError):
        read_matrix_csv(tmp_path / "absent.csv", 2)
    assert matrix_columns("S", 2) == ["S11", "S12", "S21", "S22"]


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = atomic_write_text(tmp_path / "nested" / "out.txt", "first")
    atomic_write_text(target, "second")
    assert target.read_text() == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_sweep_grid_expansion():
    grid = SweepGrid(kind="channel", base={"params": {"mu1": 1.0}, "cells": 8},
                     vary={"params.nu": [0.5, 1.0], "cells": [8, 16]})
    configs = grid.expand()

    assert len(configs) == 4
    assert configs[0] == {"params": {"mu1": 1.0, "nu": 0.5}, "cells": 8}
    assert configs[-1] == {"params": {"mu1": 1.0, "nu": 1.0}, "cells": 16}
    assert grid.overrides()[1] == {"cells": 8, "params.nu": 1.0}
    assert grid.base == {"params": {"mu1": 1.0}, "cells": 8}


def test_set_dotted_rejects_non_object_path():
    with pytest.raises(ConfigError):
        _set_dotted({"params": 3}, "params.nu", 1.0)


def test_tau_hat_rescaling():
    assert FluidParams(mu1=1.0, nu=16.0, q=4.0, tau_star=2.0).tau_hat == pytest.approx(1.0)
    assert FluidParams(mu1=1.0, nu=0.25, tau_star=2.0).tau_hat == 2.0


def test_load_config(write_config):
    config = load_config(write_config({"cells": 16, "params": {"mu1": 2.0}}), ChannelConfig)
    assert config.cells == 16
    assert config.params.mu1 == 2.0

    with pytest.raises(ValidationError):
        load_config(write_config({"cells": 16, "params": {"mu1": 1.0}, "unknown": 1}), ChannelConfig)
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json", ChannelConfig)
