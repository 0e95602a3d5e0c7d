"""Write P_CSP / P_SPD against F for the three segment spacings (one CSV each)."""
import argparse
from pathlib import Path

from qubus_repeater.photonics import Attenuation, link_curve, write_curve_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--eta2", type=float, default=0.9)
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for ratio in (0.4, 0.8, 1.6):
        path = out / f"link_curve_r{ratio:g}.csv"
        with path.open("w") as fh:
            write_curve_csv(link_curve(Attenuation(ratio), args.eta2), fh)
        print(path)


if __name__ == "__main__":
    main()
