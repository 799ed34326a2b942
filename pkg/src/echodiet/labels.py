"""The six-class dietary action taxonomy."""

CLASSES = ("null", "food_intake", "chewing", "drinking", "talking", "face_touch")
N_CLASSES = len(CLASSES)
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}

NULL = CLASS_INDEX["null"]
FOOD_INTAKE = CLASS_INDEX["food_intake"]
CHEWING = CLASS_INDEX["chewing"]
DRINKING = CLASS_INDEX["drinking"]
TALKING = CLASS_INDEX["talking"]
FACE_TOUCH = CLASS_INDEX["face_touch"]

# Tie-break order for window labels, highest priority first. Rare, brief
# actions win ties.
TIE_PRIORITY = ("food_intake", "drinking", "chewing", "face_touch", "talking", "null")
_PRIORITY_RANK = {name: rank for rank, name in enumerate(TIE_PRIORITY)}


def to_index(label):
    """Class index for a label given as name or integer."""
    if isinstance(label, str):
        try:
            return CLASS_INDEX[label]
        except KeyError:
            raise ValueError(f"unknown class label {label!r}") from None
    idx = int(label)
    if not 0 <= idx < N_CLASSES:
        raise ValueError(f"class index {idx} out of range")
    return idx


def to_name(label):
    return CLASSES[to_index(label)]


def priority_rank(label):
    """Lower rank wins ties."""
    return _PRIORITY_RANK[to_name(label)]
