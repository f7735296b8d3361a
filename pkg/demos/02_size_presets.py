"""Gallery of the tumor size presets.

Synthesizes one scan per preset (tiny / small / medium / large / mix) with
a fixed seed and renders the slice through the largest tumor of each,
plus the label overlay. Output: out/02_size_presets.png.

Run: python demos/02_size_presets.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tumorlab import connected_components, make_phantom, synthesize

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

ct, liver = make_phantom((128, 128, 128), liver_margin=6, noise_hu=3.0, seed=1)

presets = ["tiny", "small", "medium", "large", "mix"]
fig, axes = plt.subplots(2, len(presets), figsize=(4 * len(presets), 8))

for col, preset in enumerate(presets):
    out_ct, out_labels, prov = synthesize(ct, liver, preset, seed=11)
    comps = connected_components(out_labels, target=2)
    biggest = int(np.argmax(comps.voxel_counts)) + 1
    zs = np.nonzero((comps.labels == biggest).any(axis=(0, 1)))[0]
    z = int(zs[len(zs) // 2])

    axes[0, col].imshow(out_ct.data[:, :, z].T, cmap="gray", origin="lower",
                        vmin=-140, vmax=260)
    axes[0, col].set_title(
        f"{preset}: {comps.count} tumors\nradii "
        + ", ".join(f"{r:.1f}" for r in sorted(comps.radii_mm, reverse=True)[:4])
        + " mm"
    )
    axes[1, col].imshow(out_labels.data[:, :, z].T, cmap="magma", origin="lower",
                        vmin=0, vmax=2)
    for ax in (axes[0, col], axes[1, col]):
        ax.axis("off")

fig.tight_layout()
fig.savefig(OUT / "02_size_presets.png", dpi=110)
print(f"wrote {OUT / '02_size_presets.png'}")
