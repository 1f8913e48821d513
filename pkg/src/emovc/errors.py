"""Exception types shared across the package."""


class BadInputError(ValueError):
    """Malformed user input: audio files, manifests, config files, CLI args."""


class MissingCheckpointError(FileNotFoundError):
    """A checkpoint path does not exist or was never trained."""


class CheckpointCorruptError(RuntimeError):
    """A checkpoint file exists but cannot be deserialized."""


class ConfigMismatchError(RuntimeError):
    """Checkpoint config hash does not match the requested configuration."""


class TrainingDivergedError(RuntimeError):
    """A loss component became NaN during training."""

    def __init__(self, component: str, step: int):
        self.component = component
        self.step = step
        super().__init__(f"loss component '{component}' is NaN at step {step}")
