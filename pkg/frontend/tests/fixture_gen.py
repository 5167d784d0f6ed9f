"""Write a synthetic neuron fixture for the browser-console e2e test.

Usage: python3 fixture_gen.py OUT_DIR [SEED]
Prints a JSON line with the planted ground truth and the matching config.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))

from synthgen import make_neuron, ndf_text  # noqa: E402
from synapcount.images import save_tiff  # noqa: E402


def main() -> None:
    out = Path(sys.argv[1])
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 424242
    out.mkdir(parents=True, exist_ok=True)
    neuron = make_neuron(seed, n_puncta=7)
    save_tiff(neuron.red, out / "red.tif")
    save_tiff(neuron.green, out / "green.tif")
    (out / "traces.ndf").write_text(ndf_text(neuron.traces))
    print(
        json.dumps(
            {
                "planted": neuron.planted_count,
                "dendrites": len(neuron.traces.traces),
                "config": {
                    "scale": neuron.config.scale,
                    "thickness": neuron.config.thickness,
                    "threshold_red": neuron.config.threshold_red,
                    "threshold_green": neuron.config.threshold_green,
                    "mode": neuron.config.mode,
                },
            }
        )
    )


if __name__ == "__main__":
    main()
