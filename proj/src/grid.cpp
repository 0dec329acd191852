#include "metosc/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace metosc {

void Axis::validate() const {
  if (values.empty()) throw std::invalid_argument("axis '" + name + "' is empty");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw std::invalid_argument("axis '" + name + "' must be strictly increasing");
}

Axis cell_centers(std::string name, double lo, double hi, int count) {
  if (count < 1 || !(hi > lo)) throw std::invalid_argument("axis '" + name + "': need count >= 1 and hi > lo");
  Axis a{std::move(name), {}};
  const double h = (hi - lo) / count;
  for (int i = 0; i < count; ++i) a.values.push_back(lo + (i + 0.5) * h);
  return a;
}

Axis linspace(std::string name, double lo, double hi, int count) {
  if (count < 2 || !(hi > lo)) throw std::invalid_argument("axis '" + name + "': need count >= 2 and hi > lo");
  Axis a{std::move(name), {}};
  for (int i = 0; i < count; ++i) a.values.push_back(lo + (hi - lo) * i / (count - 1));
  return a;
}

ModelParams with_delay(const ModelParams& prm, double tau) {
  ModelParams out = prm;
  if (auto* s = std::get_if<SingleProteinParams>(&out)) {
    s->tau = tau;
  } else {
    std::get<ThreeProteinParams>(out).set_equal_delays(tau);
  }
  return out;
}

ModelParams with_total_resource(const ModelParams& prm, double rt) {
  ModelParams out = prm;
  std::visit([rt](auto& p) { p.R_T = rt; }, out);
  return out;
}

double delay_of(const ModelParams& prm) {
  if (const auto* s = std::get_if<SingleProteinParams>(&prm)) return s->tau;
  const auto& t = std::get<ThreeProteinParams>(prm).tau;
  return *std::max_element(t.begin(), t.end());
}

double total_resource_of(const ModelParams& prm) {
  return std::visit([](const auto& p) { return p.R_T; }, prm);
}

}  // namespace metosc
