"""Krein systems with accelerants that jump at the origin.

Forward map: accelerant -> resolvent kernel -> potential -> Krein orthogonal
functions / matrizant.  Inverse map: potential -> matrizant -> F, G ->
resultant inversion -> accelerant.
"""

from .lincore import NoUniqueSolution, SingularMatrix, UniformGrid
from .accelerant import (
    AccelerantKernel,
    Potential,
    ResolventKernel,
    assemble_nystrom,
    is_accelerant,
    krein_sobolev_residual,
    potential_of,
    solve_resolvent,
)
from .resultant import (
    ExpTypeFunction,
    SingularResultant,
    TwoSidedKernel,
    assemble_resultant,
    conditions_check,
    eval_exptype,
    extract_kernel,
    recover_accelerant,
    sharp,
    weight_residual,
)
from .kreinsys import (
    LambdaGrid,
    MatrizantSamples,
    OrthoPair,
    factorization_residual,
    fg_from_matrizant,
    fg_from_potential,
    matrizant,
    ortho_from_matrizant,
    ortho_from_resolvent,
    zero_location_check,
)
from .examples import (
    AdmissibleTriple,
    ExpRealization,
    InvalidTriple,
    RationalTriple,
    SingularM,
    StepParams,
    exk_build,
    expk_family,
    pexp_family,
    rational_family,
    step_family,
)

__version__ = "0.1.0"
