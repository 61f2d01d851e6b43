# %% [markdown]
# # Winograd convolution and boundary receptive fields

# %%
import numpy as np

from cycnn import ConvSpec, FilterBank, conv2d_direct, conv2d_winograd
from cycnn.bench import bench_conv
from cycnn.receptive_field import RfLayerSpec, boundary_coverage, format_table, rf_rows
from cycnn.winograd import multiply_counts

# %% [markdown]
# F(2x2, 3x3) computes a 2x2 output tile from a 4x4 input tile with 16
# multiplications instead of 36. Only the tiling step knows about padding,
# so the cylindrical variant reuses every transform.

# %%
print(multiply_counts())
rng = np.random.default_rng(1)
x = rng.standard_normal((2, 8, 16, 16))
f = FilterBank(rng.standard_normal((4, 8, 3, 3)), rng.standard_normal(4))
for mode in ("zero", "cylindrical"):
    spec = ConvSpec(8, 4, pad_mode=mode)
    diff = np.abs(conv2d_winograd(x, f, spec) - conv2d_direct(x, f, spec)).max()
    print(f"{mode:12s} max |winograd - direct| = {diff:.2e}")

# %% [markdown]
# A short timing run. Every algorithm is checked against the direct
# convolution before it is timed.

# %%
report = bench_conv([(4, 64, 32, 32, 64)], repeats=3)
print(report.to_csv())
print(report.summary())

# %% [markdown]
# ## Receptive fields
#
# A unit with a 3x3 receptive field on the output of a 3x3 layer with
# strides (3, 2) sees a 9x7 patch of that layer's input.

# %%
print(rf_rows([RfLayerSpec(3, 3, 3, 2)])[0], "(seeded with 1x1)")
from cycnn.receptive_field import rf_propagate
print(rf_propagate([RfLayerSpec(3, 3, 3, 2)], seed_rf=(3, 3)))

# %% [markdown]
# Zero padding starves the top and bottom rows: they reach fewer input rows
# than interior units. Wrapping the padding gives every row the same reach.

# %%
stack = [RfLayerSpec(3, 3)] * 4
for mode in ("zero", "cylindrical"):
    print(mode, boundary_coverage(stack, 16, mode).counts)
print(format_table(rf_rows(stack, input_h=16)))
