#pragma once

#include <string>
#include <vector>

#include "metosc/model.hpp"

namespace metosc {

/// One named sweep axis; values strictly increasing.
struct Axis {
  std::string name;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  void validate() const;
};

/// count points at the centers of equal cells partitioning [lo, hi].
Axis cell_centers(std::string name, double lo, double hi, int count);
/// count points from lo to hi inclusive.
Axis linspace(std::string name, double lo, double hi, int count);

/// Copy of prm with every delay set to tau.
ModelParams with_delay(const ModelParams& prm, double tau);
/// Copy of prm with total resource R_T.
ModelParams with_total_resource(const ModelParams& prm, double rt);
double delay_of(const ModelParams& prm);
double total_resource_of(const ModelParams& prm);

}  // namespace metosc
