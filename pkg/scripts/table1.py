"""Print the P_SPD grid and its residuals against the published values."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from qubus_repeater.cli import TABLE1_FIDELITIES, TABLE1_RATIOS, format_table1  # noqa: E402
from qubus_repeater.photonics import p_spd  # noqa: E402
from reference_values import TABLE1  # noqa: E402


def main():
    print(format_table1(0.9))
    print("F      l/l0   computed    published   residual")
    for F in TABLE1_FIDELITIES:
        for r in TABLE1_RATIOS:
            p = p_spd(F, r, 0.9)
            print(f"{F:<6g} {r:<6g} {p:.8f}  {TABLE1[(F, r)]:.5f}     {p - TABLE1[(F, r)]:+.2e}")


if __name__ == "__main__":
    main()
