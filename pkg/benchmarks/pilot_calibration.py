"""Pilot run that fixes the synthetic-recovery reference RMSE.

Trains the default configuration (rank 4) on the reference synthetic
tensor with a long patience and records the best validation RMSE in
tests/oracles/pilot_synthetic.json.  Re-run only when the model or the
defaults change on purpose.
"""

import json
import pathlib

from nnlft import TrainConfig, split, synth_tensor, train

DIMS, TRUE_RANK, N_ENTRIES, NOISE_SD, DATA_SEED = (200, 200, 20), 4, 50000, 0.0, 0
RATIOS = (0.7, 0.1, 0.2)
OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "oracles" / "pilot_synthetic.json"


def main():
    tensor, _ = synth_tensor(DIMS, TRUE_RANK, N_ENTRIES, NOISE_SD, DATA_SEED)
    config = TrainConfig(rank=4, seed=0, patience=200, max_epochs=5000)
    _, trace = train(tensor, split(tensor, RATIOS, config.seed), config)
    result = {
        "synth": {"dims": DIMS, "true_rank": TRUE_RANK, "n_entries": N_ENTRIES,
                  "noise_sd": NOISE_SD, "seed": DATA_SEED},
        "split": RATIOS,
        "config": config.as_dict(),
        "best_epoch": trace.best_epoch,
        "epochs_run": trace.epochs,
        "best_validation_rmse": trace.best_validation_rmse,
    }
    OUT.write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result, indent=2))


if __name__ == "__main__":
    main()
