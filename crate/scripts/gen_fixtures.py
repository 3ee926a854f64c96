"""Regenerates the bundled .ham fixtures. Needs tequila and pyscf.

Usage: python3 scripts/gen_fixtures.py
"""

from pathlib import Path

import tequila as tq

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

MOLECULES = [
    ("h2", "H2, STO-3G, 1.0 A bond", "H 0 0 0\nH 0 0 1.0"),
    ("h4", "H4 linear chain, STO-3G, 1.0 A spacing", "H 0 0 0\nH 0 0 1.0\nH 0 0 2.0\nH 0 0 3.0"),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, title, geometry in MOLECULES:
        mol = tq.Molecule(geometry=geometry, basis_set="sto-3g", backend="pyscf", transformation="JordanWigner")
        h = mol.make_hamiltonian()
        terms = h.to_openfermion().terms
        lines = [f"# {title}, Jordan-Wigner (tequila + pyscf)", f"qubits: {h.n_qubits}"]
        for term, c in terms.items():
            assert abs(c.imag) < 1e-12, (name, term, c)
            tokens = " ".join(f"{p}{q}" for q, p in term)
            lines.append(f"{float(c.real)!r} {tokens}".rstrip())
        path = OUT / f"{name}_jw.ham"
        path.write_text("\n".join(lines) + "\n")
        print(f"{path}: {len(terms)} terms on {h.n_qubits} qubits")


if __name__ == "__main__":
    main()
