#pragma once

// Convenience include for the whole library.

#include "prl/dataset.hpp"
#include "prl/functionals.hpp"
#include "prl/generators.hpp"
#include "prl/grid.hpp"
#include "prl/grid_search.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/properties.hpp"
#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/sigma_limit.hpp"
#include "prl/softclassifier.hpp"
#include "prl/train.hpp"
#include "prl/var_cvar.hpp"
#include "prl/vec.hpp"
