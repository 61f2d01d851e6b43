"""Geometric receptive fields of a convolution stack.

A unit whose receptive field on the output of layer ``i`` is ``w_i`` wide
sees ``w_{i-1} = s_i * w_i + k_i - s_i`` columns of that layer's input, and
likewise for heights. Running the recurrence from the deepest layer back to
the image gives the image-space receptive field.

:func:`boundary_coverage` counts, for every output row, how many distinct
input rows can reach it. Zero padding clips the window at the top and
bottom edges; cylindrical padding wraps it around, so every row sees the
same number of input rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass


@dataclass(frozen=True)
class RfLayerSpec:
    kernel_w: int
    kernel_h: int
    stride_w: int = 1
    stride_h: int = 1
    pad: int | None = None   # vertical padding; None means (kernel_h - 1) // 2

    def __post_init__(self):
        if min(self.kernel_w, self.kernel_h, self.stride_w, self.stride_h) < 1:
            raise ValueError(f"kernel and stride sizes must be >= 1: {self}")
        if self.pad is not None and self.pad < 0:
            raise ValueError("pad must be >= 0")

    @property
    def pad_h(self) -> int:
        return (self.kernel_h - 1) // 2 if self.pad is None else self.pad


def _grow(rf: tuple[int, int], layer: RfLayerSpec) -> tuple[int, int]:
    w, h = rf
    return (layer.stride_w * w + layer.kernel_w - layer.stride_w,
            layer.stride_h * h + layer.kernel_h - layer.stride_h)


def rf_propagate(stack, seed_rf: tuple[int, int] = (1, 1)) -> list[tuple[int, int]]:
    """Image-space receptive field ``(w, h)`` of a unit after each layer.

    Entry ``d`` starts from ``seed_rf`` on the output of layer ``d`` and runs
    the recurrence back through layers ``d, d-1, ..., 0``.
    """
    stack = list(stack)
    if not stack:
        raise ValueError("layer stack is empty")
    out = []
    for depth in range(len(stack)):
        rf = tuple(seed_rf)
        for layer in reversed(stack[:depth + 1]):
            rf = _grow(rf, layer)
        out.append(rf)
    return out


@dataclass
class CoverageReport:
    pad_mode: str
    input_h: int
    counts: list          # distinct input rows reaching each final output row

    @property
    def uniform(self) -> bool:
        return len(set(self.counts)) <= 1


def _rows_after(h: int, layer: RfLayerSpec) -> int:
    return (h + 2 * layer.pad_h - layer.kernel_h) // layer.stride_h + 1


def boundary_coverage(stack, input_h: int, pad_mode: str = "zero") -> CoverageReport:
    """Exhaustive row reachability through ``stack`` for an ``input_h``-row input."""
    if pad_mode not in ("zero", "cylindrical"):
        raise ValueError(f"pad_mode must be zero or cylindrical, got {pad_mode!r}")
    stack = list(stack)
    if not stack:
        raise ValueError("layer stack is empty")
    # reach[r] = set of image rows feeding row r of the current layer's output
    reach = [{r} for r in range(input_h)]
    h = input_h
    for layer in stack:
        ho = _rows_after(h, layer)
        if ho < 1:
            raise ValueError(f"input of {h} rows is too small for {layer}")
        nxt = []
        for r in range(ho):
            rows = set()
            for u in range(layer.kernel_h):
                src = r * layer.stride_h - layer.pad_h + u
                if pad_mode == "cylindrical":
                    rows |= reach[src % h]
                elif 0 <= src < h:
                    rows |= reach[src]
            nxt.append(rows)
        reach, h = nxt, ho
    return CoverageReport(pad_mode, input_h, [len(s) for s in reach])


def rf_rows(stack, input_h: int | None = None) -> list[dict]:
    """One record per layer: receptive field and, with ``input_h``, the
    minimum and maximum row coverage under both padding modes."""
    stack = list(stack)
    rows = []
    for depth, (w, h) in enumerate(rf_propagate(stack)):
        row = {"layer": depth + 1, "kernel": f"{stack[depth].kernel_w}x{stack[depth].kernel_h}",
               "stride": f"{stack[depth].stride_w}x{stack[depth].stride_h}",
               "rf_w": w, "rf_h": h}
        if input_h is not None:
            for mode in ("zero", "cylindrical"):
                counts = boundary_coverage(stack[:depth + 1], input_h, mode).counts
                row[f"{mode}_min"] = min(counts)
                row[f"{mode}_max"] = max(counts)
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [keys] + [[str(r[k]) for k in keys] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(line, widths)) for line in cells]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines)


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return buf.getvalue()


def parse_stack(text: str) -> list[RfLayerSpec]:
    """Parse ``"3x3/1x1,3x3/3x2"`` style stacks: ``KWxKH[/SWxSH]`` per layer."""
    layers = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        kernel, _, stride = item.partition("/")
        try:
            kw, kh = (int(v) for v in kernel.lower().split("x"))
            sw, sh = (int(v) for v in stride.lower().split("x")) if stride else (1, 1)
        except ValueError:
            raise ValueError(f"cannot parse layer {item!r}; expected KWxKH or KWxKH/SWxSH") from None
        layers.append(RfLayerSpec(kw, kh, sw, sh))
    if not layers:
        raise ValueError("layer stack is empty")
    return layers
