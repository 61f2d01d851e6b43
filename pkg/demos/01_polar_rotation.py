# %% [markdown]
# # Rotation becomes a row shift
#
# Resampling an image on a polar grid turns a rotation about the image
# centre into a cyclic shift of rows. A convolution whose top and bottom
# padding wraps around then commutes with that shift exactly.

# %%
import numpy as np

from cycnn import ConvSpec, FilterBank, conv2d_direct, cyclic_shift_rows
from cycnn.datasets import synth_dataset
from cycnn.polar import PolarConfig, bounding_circle_columns, rotate_image, to_polar

# a glyph with no rotational symmetry, so every shift is a real test
img = synth_dataset(8, 8, seed=3).images[6, 0].astype(np.float64)
print(img.shape, img.min(), img.max())

# %% [markdown]
# Rows of the polar image are angles (row 0 is the positive x axis, angles
# grow counter-clockwise) and columns are radii.

# %%
cfg = PolarConfig.for_image(32, 32, "polar")
p = to_polar(img, cfg)
inside = bounding_circle_columns(cfg, 32, 32)
print("columns inside the bounding circle:", int(inside.sum()), "of", cfg.out_width)

# %% [markdown]
# Rotating by 2*pi*k/H moves row r to row r + k. Bilinear resampling is not
# exact, so the match is close rather than perfect. Quarter turns map pixel
# centres onto pixel centres and come out exact.

# %%
for k in (1, 3, 5, 11):
    rotated = to_polar(rotate_image(img, 2 * np.pi * k / 32), cfg)
    err = np.abs(rotated - cyclic_shift_rows(p, k))[:, inside].mean()
    wrong = np.abs(rotated - cyclic_shift_rows(p, -k))[:, inside].mean()
    print(f"k={k:2d}  shift +k: {err:.4f}   shift -k: {wrong:.4f}")

# %% [markdown]
# Log-polar sampling spends more columns near the centre.

# %%
lp = to_polar(img, PolarConfig.for_image(32, 32, "logpolar"))
print("mean intensity polar vs log-polar:", p.mean().round(3), lp.mean().round(3))

# %% [markdown]
# ## Cylindrical padding
#
# With cylindrical padding the rows above the image are copied from its
# bottom and vice versa; the left and right borders stay zero.

# %%
rng = np.random.default_rng(0)
x = rng.standard_normal((1, 2, 12, 9))
f = FilterBank(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3))
cyl = ConvSpec(2, 3, pad_mode="cylindrical")
zero = ConvSpec(2, 3)

for spec in (zero, cyl):
    y = conv2d_direct(x, f, spec)
    same = all(np.array_equal(conv2d_direct(cyclic_shift_rows(x, k), f, spec), cyclic_shift_rows(y, k))
               for k in range(1, 12))
    print(f"{spec.pad_mode:12s} commutes with every row shift: {same}")
