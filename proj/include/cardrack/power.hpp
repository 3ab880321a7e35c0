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

#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace cardrack::power {

struct PowerModel {
  double server_idle_watts = 615.0;
  double card_envelope_watts = 50.0;
  int cards_per_server = 16;
  double cooling_watts = 350.0;
  double margin_fraction = 0.20;

  void validate() const;
};

// How a per-server envelope is carried into rack totals. kTenthKw rounds the
// server figure up to the next 0.1 kW first (2,118 W -> 2.2 kW).
enum class Rounding { kExact, kTenthKw };

// (idle + cards * card_envelope + cooling) * (1 + margin).
double server_envelope(const PowerModel& pm);
double server_envelope(const PowerModel& pm, Rounding rounding);

double rack_envelope(const PowerModel& pm, int nodes,
                     Rounding rounding = Rounding::kTenthKw);

// measured / allocated. Throws MetricError when allocated is zero.
double utilization(double measured_watts, double allocated_watts);

struct ReserveRange {
  double low_watts = 5000.0;
  double high_watts = 10000.0;
};

enum class Headroom { kFits, kMarginal, kExceeds };

struct ExtrapolationReport {
  double total_watts = 0;
  double envelope_watts = 0;
  ReserveRange reserve;
  bool fits_at_low_reserve = false;
  bool fits_at_high_reserve = false;
  Headroom headroom = Headroom::kFits;
};

std::string to_string(Headroom h);

ExtrapolationReport extrapolate_instances(double per_instance_watts, int instances,
                                          ReserveRange reserve,
                                          double rack_envelope_watts);

// Rounds to three significant figures for reporting.
double round_sig3(double value);

nlohmann::json to_json(const ExtrapolationReport& report);

}  // namespace cardrack::power
