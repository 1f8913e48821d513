"""The closed set of emotion labels and index helpers."""

from .errors import BadInputError

EMOTIONS = ("neutral", "angry", "happy", "sad", "surprise")

TARGET_EMOTIONS = ("angry", "happy", "sad", "surprise")

PAIR_NAMES = {
    "angry": "Neu-Ang",
    "happy": "Neu-Hap",
    "sad": "Neu-Sad",
    "surprise": "Neu-Sur",
}


def emotion_index(label: str) -> int:
    try:
        return EMOTIONS.index(label)
    except ValueError:
        raise BadInputError(f"unknown emotion label: {label!r}") from None
