from pathlib import Path

import numpy as np
import pytest

from protgraph.io.pdb import Atom, Chain, ProteinStructure, Residue

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def place_atom(a, b, c, bond, angle_deg, torsion_deg):
    """Position d so |cd| = bond, angle bcd = angle, torsion abcd = torsion (NeRF)."""
    angle, torsion = np.radians(angle_deg), np.radians(torsion_deg)
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    m = np.cross(n, bc)
    d2 = np.array([-bond * np.cos(angle), bond * np.sin(angle) * np.cos(torsion), bond * np.sin(angle) * np.sin(torsion)])
    return c + d2[0] * bc + d2[1] * m + d2[2] * n


def backbone(phis, psis, omega=180.0, name="ALA") -> ProteinStructure:
    """Ideal-geometry backbone with the given per-residue (phi, psi)."""
    n = np.array([0.0, 0.0, 0.0])
    ca = np.array([1.458, 0.0, 0.0])
    c = ca + 1.525 * np.array([-np.cos(np.radians(111.2)), np.sin(np.radians(111.2)), 0.0])
    coords = [(n, ca, c)]
    for i in range(1, len(phis)):
        prev_n, prev_ca, prev_c = coords[-1]
        n_i = place_atom(prev_n, prev_ca, prev_c, 1.329, 116.2, psis[i - 1])
        ca_i = place_atom(prev_ca, prev_c, n_i, 1.458, 121.7, omega)
        c_i = place_atom(prev_c, n_i, ca_i, 1.525, 111.2, phis[i])
        coords.append((n_i, ca_i, c_i))
    residues = []
    for i, (a, b, c_) in enumerate(coords):
        atoms = [Atom("N", "N", a, True), Atom("CA", "C", b, True), Atom("C", "C", c_, True)]
        residues.append(Residue(name, i + 1, "", atoms))
    return ProteinStructure([Chain("A", residues)])


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
