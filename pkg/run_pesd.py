#!/usr/bin/env python
"""
Wrapper script for the forecaster CLI.
BLAS thread counts are pinned before numpy is imported so that matrix
reductions, and therefore checkpoints, are reproducible bitwise.
"""
import os
import sys

# Set thread pinning BEFORE any imports
os.environ['OMP_NUM_THREADS'] = '1'
os.environ['OPENBLAS_NUM_THREADS'] = '1'
os.environ['MKL_NUM_THREADS'] = '1'

# Now import and run
if __name__ == '__main__':
    from src.cli import main

    print("[INFO] OMP/OPENBLAS/MKL_NUM_THREADS: 1")
    if os.getenv("PESD_SEED"):
        print(f"[INFO] PESD_SEED: {os.getenv('PESD_SEED')}")
    sys.exit(main())
