import numpy as np
import pytest

from maskbudget.dataio import Dataset, Frame, make_instance
from maskbudget.masks import RleMask, rle_encode
from maskbudget.synth import SceneParams, generate_dataset


def rect(h: int, w: int, y0: int, x0: int, y1: int, x1: int) -> RleMask:
    """Filled rectangle with inclusive pixel corners on an h-by-w grid."""
    a = np.zeros((h, w), bool)
    a[y0 : y1 + 1, x0 : x1 + 1] = True
    return rle_encode(a)


def shrink(mask: RleMask) -> RleMask:
    """Drop the mask's last row of set pixels (stays non-empty)."""
    arr = mask.to_array()
    rows = np.flatnonzero(arr.any(axis=1))
    if len(rows) > 1:
        arr[rows[-1]] = False
    return rle_encode(arr)


def frame_of_rects(fid, h, w, rects, approx="same", preds=0):
    """Frame from inclusive-corner rectangles.

    approx: "same" copies gt, "shrunk" degrades it, None omits it.
    preds > 0 attaches that many predicted masks (copies of gt) per instance.
    """
    instances = []
    for iid, (y0, x0, y1, x1) in enumerate(rects):
        gt = rect(h, w, y0, x0, y1, x1)
        if approx == "same":
            ap = gt
        elif approx == "shrunk":
            ap = shrink(gt)
        else:
            ap = None
        pr = tuple([gt] * preds) if preds else None
        instances.append(make_instance(iid, gt, approx_mask=ap, predicted_masks=pr))
    return Frame(id=fid, height=h, width=w, instances=tuple(instances))


@pytest.fixture
def tiny_dataset():
    """Two frames; frame 0 has an overlapping pair plus a loner, frame 1 a pair."""
    f0 = frame_of_rects(0, 24, 32, [(0, 0, 9, 9), (5, 0, 14, 9), (16, 20, 22, 30)], approx="shrunk", preds=1)
    f1 = frame_of_rects(1, 24, 32, [(2, 2, 8, 8), (10, 12, 20, 26)], approx="shrunk", preds=1)
    return Dataset(frames=(f0, f1))


@pytest.fixture(scope="session")
def synth_dataset():
    ds, _ = generate_dataset(SceneParams(n_frames=12, seed=9))
    return ds
