"""Where the energy goes: the voltage/energy table, the three operating
scenarios, the SRAM minimum-energy point and the efficiency numbers.

    python3 demos/energy_walkthrough.py
"""
from voltscale import energy

table = energy.default_table()

print("knots (V, pJ/cycle, source)")
for comp, q in (("logic", energy.LOGIC), ("sram", energy.SRAM)):
    v, e = table.points(q)
    row = "  ".join(f"{a:.2f}:{b:.2f}{'*' if table.source_at(q, a) == 'extrapolated' else ''}"
                    for a, b in zip(v, e))
    print(f"  {comp:5s} {row}")
print("  (* extrapolated from the fitted leakage/dynamic model)")

print("\nscenarios")
for r in energy.all_scenarios(table):
    o, b = r.optimized, r.baseline
    print(f"  {r.scenario:11s} logic {o.logic_v:.2f} V, sram {o.sram_v:.2f} V, "
          f"{o.frequency_mhz:6.1f} MHz: {o.total_pj:6.2f} pJ vs {b.total_pj:6.2f} pJ "
          f"-> {r.reduction:.2f}x, {energy.efficiency_gops_per_watt(r):.0f} GOPS/W")

mep = energy.find_mep(table, "sram", 0.44)
print(f"\nSRAM minimum-energy point above a 0.44 V accuracy floor: {mep:.3f} V")
print(f"below it leakage per cycle grows faster than the dynamic energy falls: "
      f"{energy.energy_at(table, 'sram', 0.46):.2f} pJ at 0.46 V vs "
      f"{energy.energy_at(table, 'sram', mep):.2f} pJ at {mep:.2f} V")

print(f"\nefficiency from clock and power: nominal "
      f"{energy.gops_per_watt(250e6, 16.8e-3):.1f} GOPS/W, scaled "
      f"{energy.gops_per_watt(17.8e6, 0.37e-3):.1f} GOPS/W")
