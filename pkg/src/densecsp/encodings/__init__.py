from densecsp.encodings.gb import GbCsp, GbInstance, gb_equivalences, gb_to_csp
from densecsp.encodings.hier import (
    HierProblem,
    Trunk,
    cc_problem,
    enumerate_trunks,
    hier_to_rigid_csp,
    trunk_f,
)
from densecsp.encodings.problems import (
    DnfInstance,
    MultiwayCut,
    NcpInstance,
    UgpInstance,
    minksat_to_csp,
    multiway_cut_to_csp,
    ncp_to_csp,
    ugp_to_csp,
)

__all__ = [
    "DnfInstance",
    "GbCsp",
    "GbInstance",
    "HierProblem",
    "MultiwayCut",
    "NcpInstance",
    "Trunk",
    "UgpInstance",
    "cc_problem",
    "enumerate_trunks",
    "gb_equivalences",
    "gb_to_csp",
    "hier_to_rigid_csp",
    "minksat_to_csp",
    "multiway_cut_to_csp",
    "ncp_to_csp",
    "trunk_f",
    "ugp_to_csp",
]
