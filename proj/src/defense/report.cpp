// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "weightforge/defense.hpp"
#include "weightforge/error.hpp"

namespace wforge {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
}

}  // namespace

json to_json(const DefenseReport& r) {
  json sweep = json::array();
  for (const SweepPoint& p : r.sweep) {
    sweep.push_back({{"value", p.value},
                     {"accuracy", p.accuracy},
                     {"asr", p.asr},
                     {"accuracy_std", p.accuracy_std},
                     {"asr_std", p.asr_std}});
  }
  json scores = json::array();
  for (double s : r.scores) scores.push_back(number_or_null(s));
  json j = {{"schema_version", kDefenseSchemaVersion},
            {"defense", r.defense},
            {"parameter", r.parameter},
            {"sweep", sweep},
            {"accuracy_before", r.accuracy_before},
            {"asr_before", r.asr_before},
            {"accuracy_after", r.accuracy_after},
            {"asr_after", r.asr_after},
            {"readout", r.readout ? json(*r.readout) : json(nullptr)},
            {"applicable", r.applicable},
            {"detected", r.detected ? json(*r.detected) : json(nullptr)},
            {"scores", scores},
            {"seeds", r.seeds},
            {"details", r.details},
            {"seconds", r.seconds}};
  return j;
}

DefenseReport defense_report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kDefenseSchemaVersion) {
      throw ParseError("unsupported defense report schema_version", 0);
    }
    DefenseReport r;
    r.defense = j.at("defense").get<std::string>();
    r.parameter = j.at("parameter").get<std::string>();
    for (const json& p : j.at("sweep")) {
      r.sweep.push_back({p.at("value").get<double>(), p.at("accuracy").get<double>(),
                         p.at("asr").get<double>(), p.at("accuracy_std").get<double>(),
                         p.at("asr_std").get<double>()});
    }
    r.accuracy_before = j.at("accuracy_before").get<double>();
    r.asr_before = j.at("asr_before").get<double>();
    r.accuracy_after = j.at("accuracy_after").get<double>();
    r.asr_after = j.at("asr_after").get<double>();
    if (!j.at("readout").is_null()) r.readout = j.at("readout").get<double>();
    r.applicable = j.at("applicable").get<bool>();
    if (!j.at("detected").is_null()) r.detected = j.at("detected").get<bool>();
    for (const json& s : j.at("scores")) r.scores.push_back(number_from(s));
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.details = j.at("details");
    r.seconds = j.at("seconds").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed defense report: ") + e.what(), 0);
  }
}

std::optional<std::size_t> first_drop_index(const std::vector<SweepPoint>& sweep, double base,
                                            double drop) {
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (base - sweep[i].accuracy >= drop) return i;
  }
  return std::nullopt;
}

}  // namespace wforge
