#pragma once

#include "cellcycle/classification.hpp"
#include "cellcycle/counterexample.hpp"
#include "cellcycle/discrete_operator.hpp"
#include "cellcycle/errors.hpp"
#include "cellcycle/flows.hpp"
#include "cellcycle/grid_density.hpp"
#include "cellcycle/master_pde.hpp"
#include "cellcycle/model_spec.hpp"
#include "cellcycle/parallel.hpp"
#include "cellcycle/pdmp.hpp"
#include "cellcycle/scalar_fn.hpp"
#include "cellcycle/stationary.hpp"
#include "cellcycle/stats.hpp"
#include "cellcycle/validate.hpp"
#include "cellcycle/verify.hpp"
