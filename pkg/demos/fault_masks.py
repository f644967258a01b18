"""From bit-cells to weight errors: sample a weight-memory population,
profile it at a few voltages, and watch one weight get bent by its word's
stuck bits.

    python3 demos/fault_masks.py
"""
import numpy as np

from voltscale import sram
from voltscale.qformat import QFormat, apply_masks, quantize, dequantize

banks = sram.sample_population(seed=1)          # 8 banks x 576 words x 16 bits
geom = sram.geometry_of(banks)
print(f"{geom.n_cells} cells")
for v in (0.9, 0.55, 0.53, 0.50, 0.48, 0.46):
    print(f"  {v:.2f} V: {100 * sram.fault_rate(banks, v):7.3f}% of cells fail")

fmap = sram.profile(banks, 0.50, seed=1)
fmt = QFormat()
# the bank-0 word with the most stuck bits
in_bank0 = fmap.entries[fmap.entries[:, 0] == 0]
bank, word = 0, int(np.argmax(np.bincount(in_bank0[:, 1], minlength=geom.n_words)))
b_or, b_and = sram.compile_masks(fmap, bank, word)
q = quantize(0.731, fmt)
bent = apply_masks(q.qword, b_or, b_and)
print(f"\nbank {bank} word {word} at 0.50 V: OR mask {b_or:016b}, AND mask {b_and:016b}")
print(f"weight 0.731 is stored as {dequantize(q.qword):.6f} and read back as "
      f"{dequantize(bent):.6f}")

hot = sram.profile(banks, 0.50, temperature=90.0)
cold = sram.profile(banks, 0.50, temperature=-15.0)
print(f"\nsame voltage, different temperature: {100 * hot.rate:.1f}% at 90 C, "
      f"{100 * cold.rate:.1f}% at -15 C")
