#!/usr/bin/env python3
# Copyright 2026 The nqsdesk Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerate the FCIDUMP fixtures under data/.

Requires PySCF (pip install pyscf). Each fixture is an RHF calculation in the
STO-3G basis without point-group symmetry, so canonical orbitals are ordered
by orbital energy and the aufbau determinant is the Hartree-Fock state.

    python3 tools/gen_fcidump.py data/
"""
import sys
from pathlib import Path

from pyscf import fci, gto, scf
from pyscf.tools import fcidump

SYSTEMS = {
    # name: geometry in Angstrom
    "h2_sto3g": "H 0 0 0; H 0 0 0.74",
    "h4_sto3g": "H 0 0 0; H 0 0 1.0; H 0 0 2.0; H 0 0 3.0",
    "n2_sto3g": "N 0 0 0; N 0 0 1.112",
}


def main(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, atoms in SYSTEMS.items():
        mol = gto.M(atom=atoms, basis="sto-3g", verbose=0)
        mf = scf.RHF(mol).run(conv_tol=1e-12)
        e_fci, _ = fci.FCI(mf).kernel()
        fcidump.from_scf(mf, str(out_dir / f"{name}.fcidump"), tol=1e-14)
        print(f"{name}: norb={mf.mo_coeff.shape[1]} nelec={mol.nelectron} "
              f"e_hf={mf.e_tot:.10f} e_fci={e_fci:.10f}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "data"))
