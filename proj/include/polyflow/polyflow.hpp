// Umbrella header.

#ifndef POLYFLOW_POLYFLOW_HPP
#define POLYFLOW_POLYFLOW_HPP

#include "polyflow/ball_transform.hpp"
#include "polyflow/cnf.hpp"
#include "polyflow/constraints.hpp"
#include "polyflow/core.hpp"
#include "polyflow/diagnostics.hpp"
#include "polyflow/embedding.hpp"
#include "polyflow/example_model.hpp"
#include "polyflow/experiment.hpp"
#include "polyflow/harness.hpp"
#include "polyflow/io.hpp"
#include "polyflow/lp.hpp"
#include "polyflow/mcmc.hpp"
#include "polyflow/mlp.hpp"
#include "polyflow/mve.hpp"
#include "polyflow/polytope.hpp"
#include "polyflow/random.hpp"
#include "polyflow/simplex_coords.hpp"
#include "polyflow/spline.hpp"
#include "polyflow/transform_chain.hpp"

#endif  // POLYFLOW_POLYFLOW_HPP
