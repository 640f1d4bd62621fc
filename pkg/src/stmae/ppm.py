"""Binary PPM (P6, 8-bit) image export for frames and depth maps."""

import numpy as np


def to_uint8(image):
    """Map float [0,1] (or uint8) HxWx3 to uint8 with clamping."""
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        return arr
    return np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)


def depth_to_gray(depth):
    """Normalize a depth map to an 8-bit grayscale HxWx3 image."""
    d = np.asarray(depth, dtype=np.float64)
    lo, hi = float(d.min()), float(d.max())
    span = hi - lo if hi > lo else 1.0
    gray = np.clip(np.round((d - lo) / span * 255.0), 0, 255).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=-1)


def write_ppm(path, image):
    img = to_uint8(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM needs HxWx3, got {img.shape}")
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 255:
            raise ValueError("only 8-bit PPM supported")
        data = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).copy()
