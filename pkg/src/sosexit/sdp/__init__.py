from .program import Block, ConicProgram, ProgramError
from .solver import Solution, SolverSettings, residuals, solve
from .sdpa import SdpaError, dumps_sdpa, read_sdpa, write_sdpa
from .svec import smat, svec

__all__ = ["Block", "ConicProgram", "ProgramError", "SdpaError", "Solution", "SolverSettings",
           "dumps_sdpa", "read_sdpa", "residuals", "smat", "solve", "svec", "write_sdpa"]
