"""Layer geometry: output shapes and im2col index maps.

The secure engine and the cleartext reference build their window maps
here, from the same code, so any geometry bug cancels out of exactness
comparisons only if both sides agree -- which is the point.

Index maps are flat row-major HWC.  Padded positions carry index -1;
they contribute nothing to an accumulation because a padded activation
equals the input zero point and (a - z1) vanishes.
"""

from __future__ import annotations

from .errors import ShapeError


def out_dim(size: int, filt: int, stride: int, same: bool) -> tuple[int, int]:
    """(output size, pad before) along one axis, TF convention."""
    if same:
        out = -(-size // stride)
        pad_total = max((out - 1) * stride + filt - size, 0)
        return out, pad_total // 2
    if size < filt:
        raise ShapeError(f"filter {filt} larger than input {size} (VALID)")
    return (size - filt) // stride + 1, 0


def conv_windows(
    in_shape: tuple[int, int, int],
    out_channels: int,
    filt: tuple[int, int],
    stride: tuple[int, int],
    same: bool,
) -> tuple[list[tuple[list[int], list[int]]], tuple[int, int, int]]:
    """(activation idx, weight idx) per output for a regular convolution.

    Weights are laid out (out_c, fh, fw, in_c) row-major; outputs are
    (oy, ox, oc) row-major.
    """
    h, w, cin = in_shape
    fh, fw = filt
    sh, sw = stride
    oh, pad_t = out_dim(h, fh, sh, same)
    ow, pad_l = out_dim(w, fw, sw, same)
    wlen = fh * fw * cin

    windows = []
    for oy in range(oh):
        for ox in range(ow):
            act = []
            for ky in range(fh):
                iy = oy * sh - pad_t + ky
                for kx in range(fw):
                    ix = ox * sw - pad_l + kx
                    if 0 <= iy < h and 0 <= ix < w:
                        base = (iy * w + ix) * cin
                        act.extend(range(base, base + cin))
                    else:
                        act.extend([-1] * cin)
            for oc in range(out_channels):
                wbase = oc * wlen
                windows.append((act, list(range(wbase, wbase + wlen))))
    return windows, (oh, ow, out_channels)


def depthwise_windows(
    in_shape: tuple[int, int, int],
    multiplier: int,
    filt: tuple[int, int],
    stride: tuple[int, int],
    same: bool,
) -> tuple[list[tuple[list[int], list[int]]], tuple[int, int, int]]:
    """Depthwise convolution: no summation across channels; output channel
    c*multiplier + m reads input channel c only.  Weights are laid out
    (1, fh, fw, cin*multiplier)."""
    h, w, cin = in_shape
    fh, fw = filt
    sh, sw = stride
    cout = cin * multiplier
    oh, pad_t = out_dim(h, fh, sh, same)
    ow, pad_l = out_dim(w, fw, sw, same)

    windows = []
    for oy in range(oh):
        for ox in range(ow):
            for c in range(cin):
                for m in range(multiplier):
                    oc = c * multiplier + m
                    act, wgt = [], []
                    for ky in range(fh):
                        iy = oy * sh - pad_t + ky
                        for kx in range(fw):
                            ix = ox * sw - pad_l + kx
                            if 0 <= iy < h and 0 <= ix < w:
                                act.append((iy * w + ix) * cin + c)
                            else:
                                act.append(-1)
                            wgt.append((ky * fw + kx) * cout + oc)
                    windows.append((act, wgt))
    return windows, (oh, ow, cout)


def fc_windows(in_len: int, out_units: int
               ) -> list[tuple[list[int], list[int]]]:
    """Fully connected rows: weights laid out (out_units, in_len)."""
    act = list(range(in_len))
    return [
        (act, list(range(o * in_len, (o + 1) * in_len)))
        for o in range(out_units)
    ]


def pool_windows(
    in_shape: tuple[int, int, int],
    filt: tuple[int, int],
    stride: tuple[int, int],
    same: bool,
) -> tuple[list[list[int]], tuple[int, int, int]]:
    """Per-output index lists containing valid positions only (padded
    cells are excluded from both max and average)."""
    h, w, cin = in_shape
    fh, fw = filt
    sh, sw = stride
    oh, pad_t = out_dim(h, fh, sh, same)
    ow, pad_l = out_dim(w, fw, sw, same)

    windows = []
    for oy in range(oh):
        for ox in range(ow):
            for c in range(cin):
                win = []
                for ky in range(fh):
                    iy = oy * sh - pad_t + ky
                    if not 0 <= iy < h:
                        continue
                    for kx in range(fw):
                        ix = ox * sw - pad_l + kx
                        if 0 <= ix < w:
                            win.append((iy * w + ix) * cin + c)
                if not win:
                    raise ShapeError("pooling window fully outside input")
                windows.append(win)
    return windows, (oh, ow, cin)
