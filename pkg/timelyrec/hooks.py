"""
Hook specifications that pluggy plugins can override
"""
import pluggy

hookspec = pluggy.HookspecMarker("timelyrec")
hookimpl = pluggy.HookimplMarker("timelyrec")


@hookspec
def timelyrec_train_start(config):
    """
    Called once before the first epoch.

    config is the TrainConfig the run uses. Plugins must not mutate it.
    """


@hookspec
def timelyrec_epoch_end(record):
    """
    Called after every epoch with that epoch's EpochRecord.

    record carries the epoch index, mean training loss, validation
    HR@10, whether it is the best epoch so far and the skip counters.
    """


@hookspec
def timelyrec_train_end(state):
    """
    Called once training stops, with the final TrainState.
    """
