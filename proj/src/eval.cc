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

#include "fewuser/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fewuser/errors.h"

namespace fewuser::eval {
namespace {

double Radians(double deg) { return deg * std::numbers::pi / 180.0; }

void CheckCoordinate(double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    throw std::out_of_range("coordinate out of range: (" + std::to_string(lat) + ", " +
                            std::to_string(lon) + ")");
  }
}

std::string Cell(const std::optional<double>& v, int precision) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
  return buf;
}

}  // namespace

std::size_t Predict(std::span<const double> user, const Matrix& bank) {
  if (bank.rows() == 0) throw std::invalid_argument("Predict: empty location bank");
  if (bank.cols() != user.size()) {
    throw std::invalid_argument("Predict: user width " + std::to_string(user.size()) +
                                " does not match bank " + bank.ShapeString());
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < bank.rows(); ++j) {
    const double s = Dot(user, bank.row(j));
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  return best;
}

double HaversineKm(double lat1, double lon1, double lat2, double lon2) {
  CheckCoordinate(lat1, lon1);
  CheckCoordinate(lat2, lon2);
  const double dlat = Radians(lat2 - lat1);
  const double dlon = Radians(lon2 - lon1);
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(Radians(lat1)) * std::cos(Radians(lat2)) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

EvalReport Evaluate(std::span<const corpus::LabelId> gold,
                    std::span<const corpus::LabelId> predicted,
                    std::span<const corpus::LocationLabel> labels) {
  if (gold.empty()) throw DataError("evaluate: empty test set");
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("evaluate: gold and predicted lengths differ");
  }
  const bool with_distance =
      !labels.empty() && std::all_of(labels.begin(), labels.end(), [](const auto& l) {
        return l.has_coordinates();
      });

  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  std::size_t correct = 0;
  std::vector<double> distances;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::size_t g = corpus::Index(gold[i]);
    const std::size_t p = corpus::Index(predicted[i]);
    if (g >= labels.size() || p >= labels.size()) {
      throw std::out_of_range("evaluate: label id out of range");
    }
    const bool hit = g == p;
    correct += hit;
    auto& [c, n] = per_class[g];
    c += hit;
    ++n;
    if (with_distance) {
      distances.push_back(hit ? 0.0
                              : HaversineKm(*labels[g].latitude, *labels[g].longitude,
                                            *labels[p].latitude, *labels[p].longitude));
    }
  }

  EvalReport report;
  report.n_test = gold.size();
  report.acc = static_cast<double>(correct) / static_cast<double>(gold.size());
  for (const auto& [label, counts] : per_class) {
    report.per_class_acc[label] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  if (with_distance) {
    double total = 0.0;
    for (double d : distances) total += d;
    report.mean_d = total / static_cast<double>(distances.size());
    std::sort(distances.begin(), distances.end());
    report.med_d = distances[(distances.size() - 1) / 2];
  }
  return report;
}

EvalReport Average(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("Average: no reports");
  const double n = static_cast<double>(reports.size());
  EvalReport out;
  bool distances = true;
  double mean_d = 0.0, med_d = 0.0, n_test = 0.0;
  std::map<std::size_t, std::pair<double, std::size_t>> per_class;
  for (const EvalReport& r : reports) {
    out.acc += r.acc;
    n_test += static_cast<double>(r.n_test);
    if (r.mean_d && r.med_d) {
      mean_d += *r.mean_d;
      med_d += *r.med_d;
    } else {
      distances = false;
    }
    for (const auto& [label, acc] : r.per_class_acc) {
      per_class[label].first += acc;
      ++per_class[label].second;
    }
  }
  out.acc /= n;
  out.n_test = static_cast<std::size_t>(std::llround(n_test / n));
  if (distances) {
    out.mean_d = mean_d / n;
    out.med_d = med_d / n;
  }
  for (const auto& [label, sum] : per_class) {
    out.per_class_acc[label] = sum.first / static_cast<double>(sum.second);
  }
  return out;
}

nlohmann::ordered_json ReportToJson(const EvalReport& report,
                                    std::span<const corpus::LocationLabel> labels) {
  nlohmann::ordered_json j;
  j["acc"] = report.acc;
  if (report.mean_d) j["meanD"] = *report.mean_d;
  if (report.med_d) j["medD"] = *report.med_d;
  j["n_test"] = report.n_test;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [label, acc] : report.per_class_acc) {
    if (label >= labels.size()) throw std::out_of_range("report label id out of range");
    per_class[labels[label].name] = acc;
  }
  j["per_class_acc"] = std::move(per_class);
  return j;
}

EvalReport ReportFromJson(const nlohmann::ordered_json& j,
                          std::span<const corpus::LocationLabel> labels) {
  EvalReport r;
  r.acc = j.at("acc").get<double>();
  if (j.contains("meanD")) r.mean_d = j["meanD"].get<double>();
  if (j.contains("medD")) r.med_d = j["medD"].get<double>();
  r.n_test = j.at("n_test").get<std::size_t>();
  for (const auto& [name, acc] : j.at("per_class_acc").items()) {
    auto it = std::find_if(labels.begin(), labels.end(),
                           [&](const auto& l) { return l.name == name; });
    if (it == labels.end()) throw DataError("report names unknown label '" + name + "'");
    r.per_class_acc[static_cast<std::size_t>(it - labels.begin())] = acc.get<double>();
  }
  return r;
}

std::string FormatTable(std::span<const TableRow> rows) {
  std::size_t width = 5;
  for (const TableRow& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s | %8s | %10s | %10s\n", static_cast<int>(width),
                "model", "acc (%)", "meanD (km)", "medD (km)");
  out << line << std::string(width, '-') << "-+-" << std::string(8, '-') << "-+-"
      << std::string(10, '-') << "-+-" << std::string(10, '-') << "\n";
  for (const TableRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-*s | %8s | %10s | %10s\n", static_cast<int>(width),
                  r.name.c_str(), Cell(r.report.acc * 100.0, 2).c_str(),
                  Cell(r.report.mean_d, 2).c_str(), Cell(r.report.med_d, 2).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace fewuser::eval
