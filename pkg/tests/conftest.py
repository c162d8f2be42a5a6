import os
from pathlib import Path

MNIST_FILES = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]


def find_mnist_dir():
    """Directory holding the four IDX files (plain or .gz), or None."""
    candidates = []
    env = os.environ.get("CONVPIPE_DATA_DIR")
    if env:
        candidates.append(Path(env))
    here = Path(__file__).resolve().parent
    candidates += [here / "data", here.parent / "data"]
    for cand in candidates:
        if cand.is_dir() and all(
                (cand / n).exists() or (cand / (n + ".gz")).exists()
                for n in MNIST_FILES):
            return cand
    return None
