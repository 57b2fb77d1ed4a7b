"""Built-in test targets, as relative-exposure images (1 = high dose)."""

import numpy as np

from . import pnm
from .errors import ValidationError


def gp_letters(height=25, width=50):
    """Low-dose letters "GP" on a high-dose background."""
    if (height, width) != (25, 50):
        raise ValidationError("the GP target is drawn at 25x50 only", "shape")
    img = np.ones((height, width))
    t = 4
    top, bot = 3, 22
    # G
    l, r = 4, 22
    img[top : top + t, l:r] = 0
    img[bot - t : bot, l:r] = 0
    img[top:bot, l : l + t] = 0
    img[11:bot, r - t : r] = 0
    img[11 : 11 + t, 13:r] = 0
    # P
    l, r = 28, 46
    img[top:bot, l : l + t] = 0
    img[top : top + t, l:r] = 0
    img[11 : 11 + t, l:r] = 0
    img[top : 11 + t, r - t : r] = 0
    return img


def signed_squares(size=26, square=6):
    """Two high-dose and two low-dose squares on a mid-level background."""
    img = np.full((size, size), 0.5)
    a, b = size // 6, size - size // 6 - square
    img[a : a + square, a : a + square] = 1.0
    img[b : b + square, b : b + square] = 1.0
    img[a : a + square, b : b + square] = 0.0
    img[b : b + square, a : a + square] = 0.0
    return img


def dot(size=10, radius=2.5):
    """A single high-dose disk."""
    c = (size - 1) / 2.0
    y, x = np.indices((size, size))
    return ((x - c) ** 2 + (y - c) ** 2 <= radius * radius).astype(np.float64)


BUILTIN = {"gp": gp_letters, "squares": signed_squares, "dot": dot}


def builtin(name):
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValidationError(f"unknown builtin target {name!r}; choose from {sorted(BUILTIN)}", "target") from None


def load_target_image(path):
    """Read a PBM/PGM as relative exposure; bitmap black (1) is low dose."""
    raw, maxval = pnm.read_pnm(path)
    if maxval == 1:
        return 1.0 - raw.astype(np.float64)
    return raw.astype(np.float64) / float(maxval)


def save_target_bitmap(path, image):
    """Write a two-level exposure image as a bitmap (low dose -> black)."""
    img = np.asarray(image, dtype=np.float64)
    pnm.write_pbm(path, (img < 0.5).astype(np.uint8))
