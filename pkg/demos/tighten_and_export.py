"""How bound tightening shrinks the certificate MILP, plus an MPS dump.

Interval propagation alone leaves wide pre-activation boxes, which
means more unstable ReLUs and more binaries.  Solving one small LP per
neuron (or one MILP, if you can afford it) narrows the boxes and often
proves half of the units stable before the main solve even starts.
"""

import numpy as np

from gapcert import dcopf
from gapcert.encodings import ibp, obbt
from gapcert.lp_core import to_mps
from gapcert.neural import init_network

case = dcopf.case_3bus()
net = init_network((3, 16, 16, 3), seed=7)
domain = dcopf.LoadDomain(case.d_ref, u=0.05)
box = domain.load_box()

for name, bd in [("ibp", ibp(net, box)),
                 ("obbt-lp", obbt(net, box, relax=True)),
                 ("obbt-milp", obbt(net, box, relax=False))]:
    width = sum(float(np.sum(hi - lo)) for lo, hi in bd.pre)
    unstable = sum(int(np.sum((lo < 0) & (hi > 0)))
                   for (lo, hi), layer in zip(bd.pre, net.layers)
                   if layer.act == "relu")
    model = dcopf.build_compact_milp(case, net, domain, bounds=bd)
    print(f"{name:9s} total width {width:9.3f}  unstable relus "
          f"{unstable:2d}  binaries {len(model.problem.binary_idx):2d}")

bd = obbt(net, box, relax=True)
model = dcopf.build_compact_milp(case, net, domain, bounds=bd)
text = to_mps(model.problem.lp, name="GAP3BUS",
              binary_idx=model.problem.binary_idx)
with open("gap3bus.mps", "w") as fh:
    fh.write(text)
print(f"wrote gap3bus.mps ({model.problem.lp.n_rows} rows, "
      f"{model.problem.lp.n_vars} columns)")
