#!/usr/bin/env python3
"""
Setup script for the MDI entanglement detection toolkit
"""

import os
import sys
import subprocess

# same as config.DEFAULT_OUT_DIR (setup runs before numpy is installed)
DEFAULT_OUT_DIR = "results"


def run_command(cmd, description):
    """Run a command and handle errors"""
    print(f"[INFO] {description}...")
    try:
        subprocess.run(cmd, shell=True, check=True, capture_output=True, text=True)
        print(f"[OK] {description} completed")
        return True
    except subprocess.CalledProcessError as e:
        print(f"[ERROR] {description} failed: {e}")
        return False


def main():
    print("=" * 60)
    print("    MDI Entanglement Detection - Setup")
    print("=" * 60)

    if sys.version_info < (3, 8):
        print("[ERROR] Python 3.8 or higher required")
        return False

    print(f"[OK] Python {sys.version.split()[0]} detected")

    if not run_command(f"{sys.executable} -m pip install -r requirements.txt", "Installing dependencies"):
        return False

    if not os.path.exists(DEFAULT_OUT_DIR):
        os.makedirs(DEFAULT_OUT_DIR)
        print(f"[OK] Output directory '{DEFAULT_OUT_DIR}' created")
    else:
        print(f"[OK] Output directory '{DEFAULT_OUT_DIR}' already exists")

    if not run_command(f"{sys.executable} -m pytest -q -x test_gaussian_core.py", "Smoke-testing the Gaussian core"):
        print("[WARNING] Smoke test failed; run pytest for details")

    print("\n" + "=" * 60)
    print("    SETUP COMPLETE!")
    print("=" * 60)
    print("Typical runs:")
    print("  Closed-form scores:   python mdi_cli.py witness-eval --r 0.5 --kappa 1")
    print("  Monte Carlo protocol: python mdi_cli.py mdi-simulate --r 0.5 --sigma 3 --trials 1000000")
    print("  Loss contours:        python mdi_cli.py contour --sigma-list 1,2,3,5,10")
    print("  Fock-space checks:    python mdi_cli.py fock-verify --tomography")
    print("  Prior information:    python mdi_cli.py prior-fim --prior gaussian --sigma 1")
    print("  Full test suite:      python -m pytest")
    print("=" * 60)

    return True


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
