// The small metabolic network used throughout the experiments: 8 species,
// 13 fluxes, h = 0.

#ifndef POLYFLOW_EXAMPLE_MODEL_HPP
#define POLYFLOW_EXAMPLE_MODEL_HPP

#include "polyflow/polytope.hpp"

namespace polyflow {

inline CanonicalModel build_example_model() {
  CanonicalModel model;
  model.variable_names = {"c_out", "v1",     "v2",     "v3",      "v4",    "v5",  "v6",
                          "v7",    "d_out", "f_out", "biomass", "h_out", "a_in"};
  model.S.resize(8, 13);
  // clang-format off
  //          c_out  v1   v2   v3   v4   v5   v6   v7  d_out f_out biomass h_out a_in
  model.S <<   0,   -1,   0,   0,   0,   0,   0,   0,   0,   0,    0.0,   0,   1,   // A
               0,    1,  -1,  -1,   0,   0,   0,   0,   0,   0,   -0.6,   0,   0,   // B
               0,    0,   0,   1,   0,  -1,   0,   0,   0,   0,   -0.1,   0,   0,   // C
               0,    0,   0,   1,   1,   0,  -1,   0,  -1,   0,    0.0,   0,   0,   // D
               0,    1,  -1,  -1,   1,  -1,  -1,   0,   0,   0,   -0.5,   0,   0,   // E
               0,    0,   0,   1,   1,   0,   1,  -2,   0,  -1,    0.0,   0,   0,   // F
               0,    0,   0,   0,   0,   0,   0,   1,   0,   0,   -0.3,  -1,   0,   // H
              -1,    0,   0,   1,   0,   0,   0,   0,   0,   0,    0.0,   0,   0;   // cof
  // clang-format on
  model.h = Vector::Zero(8);
  model.A_c.resize(0, 13);
  model.b_c.resize(0);
  std::vector<std::pair<double, double>> bounds(13, {0.0, 100.0});
  bounds[10] = {0.05, 1.5};  // biomass
  bounds[12] = {10.0, 10.0};  // a_in
  model.add_bounds(bounds);
  return model;
}

}  // namespace polyflow

#endif  // POLYFLOW_EXAMPLE_MODEL_HPP
