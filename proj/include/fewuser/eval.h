// Copyright 2026 The FewUser Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEWUSER_EVAL_H_
#define FEWUSER_EVAL_H_

// Similarity-based inference and the accuracy / distance-error metrics.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "fewuser/corpus.h"
#include "fewuser/tensor.h"
#include "json.hpp"

namespace fewuser::eval {

inline constexpr double kEarthRadiusKm = 6371.0088;

// argmax_j user . bank[j], lowest index on ties. bank must be nonempty.
std::size_t Predict(std::span<const double> user, const Matrix& bank);

// Great-circle distance on a sphere of radius kEarthRadiusKm. Throws
// std::out_of_range for latitudes outside [-90, 90] or longitudes outside
// [-180, 180].
double HaversineKm(double lat1, double lon1, double lat2, double lon2);

struct EvalReport {
  double acc = 0.0;
  std::optional<double> mean_d;
  std::optional<double> med_d;
  std::map<std::size_t, double> per_class_acc;  // gold classes present only
  std::size_t n_test = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Distances are reported only when every label has coordinates; a correct
// prediction counts as 0 km. Throws DataError on an empty test set.
EvalReport Evaluate(std::span<const corpus::LabelId> gold,
                    std::span<const corpus::LabelId> predicted,
                    std::span<const corpus::LocationLabel> labels);

// Field-wise arithmetic mean. Per-class entries average over the reports
// that contain the class.
EvalReport Average(std::span<const EvalReport> reports);

nlohmann::ordered_json ReportToJson(const EvalReport& report,
                                    std::span<const corpus::LocationLabel> labels);
EvalReport ReportFromJson(const nlohmann::ordered_json& j,
                          std::span<const corpus::LocationLabel> labels);

struct TableRow {
  std::string name;
  EvalReport report;
};

// Fixed-width "acc (%) | meanD (km) | medD (km)" table; "-" for absent
// distances.
std::string FormatTable(std::span<const TableRow> rows);

}  // namespace fewuser::eval

#endif  // FEWUSER_EVAL_H_
