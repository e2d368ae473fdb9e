#!/usr/bin/env python3
"""
Script Name: AR persistence analysis
Description:
    This script classifies the persistence regime of a Gaussian auto-regressive
    process, estimates persistence probabilities and computes the AR3 persistence
    exponent from the Dirichlet eigenvalue of its limiting cone.

Usage:
    Example 1:
    # Decay regime of X_n = -X_(n-1) + X_(n-2) + X_(n-3) + xi_n
    poetry run python analyze_persistence.py classify \
    --coeffs=-1,1,1

    Example 2:
    # Splitting estimates of p_N for the random walk and a power-law fit
    poetry run python analyze_persistence.py persist \
    --coeffs 1 --N-grid 64:16384:x2 --method splitting --out ./results

    Example 3:
    # Exponent of the AR3 process with angle pi/2
    poetry run python analyze_persistence.py cone-exponent \
    --theta pi/2 --resolution 128x256

Arguments:
    classify | simulate | impulse | persist | fit | cone-exponent | sweep
    --coeffs, --zeros       Generating polynomial (recurrence coefficients or zeros of Q).
    --seed, --threads       Master seed and worker threads.
    --out                   Output directory for CSV and JSON artifacts.
    --config                YAML configuration (default: config/experiment.yaml).
    -v, --verbose

"""

import sys

from ar_persistence.cli import main


if __name__ == "__main__":
    sys.exit(main())
