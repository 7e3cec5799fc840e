#!/usr/bin/env python3
"""Finite-difference gradient check over every trainable block: the fusion
model's four parameter groups and the contrastive city encoder."""

import numpy as np

from citysent.city_encoder import CityEncoderConfig, encoder_grad_check
from citysent.fusion import fusion_grad_check


def main() -> None:
    rng = np.random.default_rng(0)
    print("fusion model (per parameter group, max relative error):")
    for name, err in sorted(fusion_grad_check(rng).items()):
        status = "ok" if err < 1e-4 else "FAIL"
        print(f"  {name:<16} {err:.3e}  {status}")

    err = encoder_grad_check(np.random.default_rng(1), CityEncoderConfig(seed=1))
    status = "ok" if err < 1e-4 else "FAIL"
    print(f"city encoder       {err:.3e}  {status}")


if __name__ == "__main__":
    main()
