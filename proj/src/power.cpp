// Copyright 2026 The cardrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cardrack/power.hpp"

#include <cmath>

#include "cardrack/error.hpp"

namespace cardrack::power {

void PowerModel::validate() const {
  if (server_idle_watts < 0 || card_envelope_watts < 0 || cards_per_server < 0 ||
      cooling_watts < 0 || margin_fraction < 0 || margin_fraction >= 1) {
    throw ConfigError("power model: values must be >= 0 and margin < 1");
  }
}

double server_envelope(const PowerModel& pm) {
  pm.validate();
  return (pm.server_idle_watts + pm.cards_per_server * pm.card_envelope_watts +
          pm.cooling_watts) *
         (1.0 + pm.margin_fraction);
}

double server_envelope(const PowerModel& pm, Rounding rounding) {
  const double watts = server_envelope(pm);
  if (rounding == Rounding::kExact) return watts;
  return std::ceil(watts / 100.0) * 100.0;
}

double rack_envelope(const PowerModel& pm, int nodes, Rounding rounding) {
  if (nodes < 0) throw ConfigError("rack_envelope: nodes must be >= 0");
  return nodes * server_envelope(pm, rounding);
}

double utilization(double measured_watts, double allocated_watts) {
  if (allocated_watts == 0) {
    throw MetricError("utilization: allocated power is zero");
  }
  return measured_watts / allocated_watts;
}

std::string to_string(Headroom h) {
  switch (h) {
    case Headroom::kFits: return "fits";
    case Headroom::kMarginal: return "marginal";
    case Headroom::kExceeds: return "exceeds";
  }
  return "unknown";
}

ExtrapolationReport extrapolate_instances(double per_instance_watts, int instances,
                                          ReserveRange reserve,
                                          double rack_envelope_watts) {
  if (instances < 0) throw ConfigError("extrapolate_instances: k must be >= 0");
  ExtrapolationReport r;
  r.total_watts = per_instance_watts * instances;
  r.envelope_watts = rack_envelope_watts;
  r.reserve = reserve;
  r.fits_at_low_reserve = r.total_watts + reserve.low_watts <= rack_envelope_watts;
  r.fits_at_high_reserve = r.total_watts + reserve.high_watts <= rack_envelope_watts;
  if (r.fits_at_high_reserve) {
    r.headroom = Headroom::kFits;
  } else if (r.fits_at_low_reserve) {
    r.headroom = Headroom::kMarginal;
  } else {
    r.headroom = Headroom::kExceeds;
  }
  return r;
}

double round_sig3(double value) {
  if (value == 0) return 0;
  const double magnitude = std::floor(std::log10(std::fabs(value)));
  const double scale = std::pow(10.0, 2 - magnitude);
  return std::round(value * scale) / scale;
}

nlohmann::json to_json(const ExtrapolationReport& r) {
  return {{"total_watts", r.total_watts},
          {"envelope_watts", r.envelope_watts},
          {"reserve_low_watts", r.reserve.low_watts},
          {"reserve_high_watts", r.reserve.high_watts},
          {"fits_at_low_reserve", r.fits_at_low_reserve},
          {"fits_at_high_reserve", r.fits_at_high_reserve},
          {"headroom", to_string(r.headroom)}};
}

}  // namespace cardrack::power
