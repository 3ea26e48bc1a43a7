import logging

import numpy as np

from timelyrec import hooks, utils
from timelyrec.log import init_logging


def test_derive_rng_is_stable():
    first = utils.derive_rng(42, 0, 3, 7).integers(0, 10**9, 5)
    again = utils.derive_rng(42, 0, 3, 7).integers(0, 10**9, 5)
    assert first.tolist() == again.tolist()


def test_derive_rng_streams_differ():
    draws = {
        keys: tuple(utils.derive_rng(42, *keys).integers(0, 10**9, 3))
        for keys in [
            (),
            (0,),
            (0, 0),
            (0, 1),
            (1, 0),
            (0, 2),
            (0, 1, 0),
            (5,),
            (5, 0),
            (5, 0, 0),
        ]
    }
    assert len(set(draws.values())) == len(draws)


def test_sha256_lines():
    assert utils.sha256_lines(["a", "b"]) == utils.sha256_lines(("a", "b"))
    assert utils.sha256_lines(["a", "b"]) != utils.sha256_lines(["b", "a"])
    assert utils.sha256_lines(["ab"]) != utils.sha256_lines(["a", "b"])


def test_sha256_arrays():
    arrays = {"x": np.arange(3.0), "y": np.ones((2, 2))}
    digest = utils.sha256_arrays(arrays)
    assert utils.sha256_arrays({"y": arrays["y"], "x": arrays["x"]}) == digest
    assert utils.sha256_arrays({"x": np.arange(3.0), "y": np.ones(4)}) != digest
    arrays["x"][0] = -1
    assert utils.sha256_arrays(arrays) != digest


def test_plugin_manager_has_hooks():
    pm = utils.get_plugin_manager()
    assert pm.project_name == "timelyrec"
    for name in ("timelyrec_train_start", "timelyrec_epoch_end", "timelyrec_train_end"):
        assert hasattr(pm.hook, name)
    assert hooks.hookimpl.project_name == "timelyrec"


def test_init_logging_keeps_existing_handlers(mocker, tmpdir):
    logger = logging.getLogger("timelyrec")
    mocker.patch.object(logger, "hasHandlers", return_value=True)
    mocker.patch.object(logger, "addHandler")
    init_logging(str(tmpdir.join("logs")))
    logger.addHandler.assert_not_called()
    assert not tmpdir.join("logs").check()


def test_init_logging_to_file(mocker, tmpdir):
    logger = logging.getLogger("timelyrec")
    mocker.patch.object(logger, "hasHandlers", return_value=False)
    mocker.patch.object(logger, "handlers", [])
    level = logger.level
    try:
        init_logging(str(tmpdir.join("logs")))
        logger.info("hello")
        for handler in logger.handlers:
            handler.flush()
        assert "hello" in tmpdir.join("logs", "timelyrec.log").read_text("utf-8")
    finally:
        for handler in logger.handlers:
            handler.close()
        logger.setLevel(level)
