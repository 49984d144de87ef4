# # Inference batch size on heteroscedastic data
#
# Small batches inject more noise into the BN statistics, so the MC spread
# is larger and tracks the input-dependent noise better.  The network is
# trained once; only the inference batch size changes.

import warnings

from mcbn.data import heteroscedastic_dataset, make_split
from mcbn.experiment import sweep, train_split
from mcbn.training import HyperGrid

warnings.simplefilter("ignore")

ds = heteroscedastic_dataset(seed=0)
trained = train_split(ds, make_split(ds.n, 0), grid=HyperGrid((1e-4,), (32,)), max_epochs=300, passes=200)

rows, notes = sweep(ds, trained, "batch_size", passes=200, values=(8, 16, 32, 64, 128, 512))
print(f"{'M':>5} {'CRPS-bar':>9} {'PLL-bar':>9} {'tau':>8}")
for r in rows:
    print(f"{r['batch_size']:>5} {r['crps_bar']:9.2f} {r['pll_bar']:9.2f} {r['tau']:8.3g}")
# Below the training batch size the MC spread alone exceeds the fold residuals,
# so tau runs to the top of its search range and the few overconfident test
# points dominate PLL.
for n in notes:
    print("note:", n)
