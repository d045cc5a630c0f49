"""Execute every plot_*.py emitted under an output tree (default ``out``)."""

import runpy
import sys
from pathlib import Path


def main(root: str = "out") -> None:
    scripts = sorted(Path(root).rglob("plot_*.py"))
    for script in scripts:
        print(script)
        runpy.run_path(str(script), run_name="__main__")
    if not scripts:
        print(f"no plot scripts under {root}")


if __name__ == "__main__":
    main(*sys.argv[1:])
