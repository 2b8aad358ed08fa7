#include "fairgrain/fairness.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace fairgrain::fairness {

namespace {

struct Counts {
  long total = 0, correct = 0;
  long positives = 0, true_positives = 0;
  long negatives = 0, false_positives = 0;
};

std::map<SubgroupKey, Counts> tally(const std::vector<EvalRecord>& records,
                                    int positive_class) {
  std::map<SubgroupKey, Counts> out;
  for (const auto& r : records) {
    if (r.subgroup.empty())
      throw ValidationError("record '" + r.id + "' has an empty subgroup key");
    auto& c = out[r.subgroup];
    ++c.total;
    if (r.predicted_label == r.true_label) ++c.correct;
    if (r.true_label == positive_class) {
      ++c.positives;
      if (r.predicted_label == positive_class) ++c.true_positives;
    } else {
      ++c.negatives;
      if (r.predicted_label == positive_class) ++c.false_positives;
    }
  }
  return out;
}

}  // namespace

std::string subgroup_name(const SubgroupKey& key) {
  std::string name;
  for (size_t i = 0; i < key.size(); ++i) {
    if (i) name += "|";
    name += key[i];
  }
  return name;
}

std::map<SubgroupKey, double> subgroup_accuracy(const std::vector<EvalRecord>& records,
                                                double* overall) {
  if (records.empty()) throw ValidationError("subgroup_accuracy: no records");
  auto counts = tally(records, /*positive_class=*/-1);
  std::map<SubgroupKey, double> acc;
  long total = 0, correct = 0;
  for (const auto& [key, c] : counts) {
    acc[key] = 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total);
    total += c.total;
    correct += c.correct;
  }
  if (overall) *overall = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  return acc;
}

double degree_of_bias(const std::vector<double>& accuracies, StdMode mode) {
  const size_t g = accuracies.size();
  if (g < 2) throw ValidationError("degree_of_bias: needs at least 2 subgroup accuracies");
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(g);
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const double denom = mode == StdMode::Population ? static_cast<double>(g)
                                                   : static_cast<double>(g - 1);
  return std::sqrt(ss / denom);
}

double max_min_ratio(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw ValidationError("max_min_ratio: no accuracies");
  const auto [mn, mx] = std::minmax_element(accuracies.begin(), accuracies.end());
  if (*mn <= 0.0)
    throw ValidationError("max_min_ratio: worst subgroup accuracy is " +
                          std::to_string(*mn) + "; ratio undefined");
  return *mx / *mn;
}

std::map<SubgroupKey, double> subgroup_tpr(const std::vector<EvalRecord>& records,
                                           int positive_class,
                                           std::vector<std::string>* warnings) {
  if (records.empty()) throw ValidationError("subgroup_tpr: no records");
  auto counts = tally(records, positive_class);
  std::map<SubgroupKey, double> tpr;
  for (const auto& [key, c] : counts) {
    if (c.positives == 0) {
      if (warnings)
        warnings->push_back("subgroup '" + subgroup_name(key) +
                            "' has no positive-labeled records; excluded from TPR");
      continue;
    }
    tpr[key] = 100.0 * static_cast<double>(c.true_positives) /
               static_cast<double>(c.positives);
  }
  return tpr;
}

double deo_from_tprs(double tpr_a, double tpr_b) { return std::abs(tpr_a - tpr_b); }

double deo(const std::vector<EvalRecord>& records, int positive_class) {
  auto tprs = subgroup_tpr(records, positive_class);
  if (tprs.size() != 2)
    throw ValidationError("deo: needs exactly 2 protected groups, found " +
                          std::to_string(tprs.size()));
  auto it = tprs.begin();
  const double a = it->second;
  const double b = std::next(it)->second;
  return deo_from_tprs(a, b);
}

double deodds(const std::vector<EvalRecord>& records, int positive_class) {
  auto counts = tally(records, positive_class);
  if (counts.size() != 2)
    throw ValidationError("deodds: needs exactly 2 protected groups, found " +
                          std::to_string(counts.size()));
  std::vector<double> tprs, fprs;
  for (const auto& [key, c] : counts) {
    if (c.positives == 0 || c.negatives == 0)
      throw ValidationError("deodds: subgroup '" + subgroup_name(key) +
                            "' is missing one actual outcome");
    tprs.push_back(100.0 * static_cast<double>(c.true_positives) /
                   static_cast<double>(c.positives));
    fprs.push_back(100.0 * static_cast<double>(c.false_positives) /
                   static_cast<double>(c.negatives));
  }
  return std::abs(tprs[0] - tprs[1]) + std::abs(fprs[0] - fprs[1]);
}

SubgroupReport build_report(const std::vector<EvalRecord>& records, int positive_class,
                            StdMode std_mode) {
  SubgroupReport rep;
  rep.positive_class = positive_class;
  rep.accuracy = subgroup_accuracy(records, &rep.overall_accuracy);

  std::vector<double> accs;
  for (const auto& [key, a] : rep.accuracy) {
    accs.push_back(a);
    if (rep.max_accuracy_group.empty() || a > rep.max_group_accuracy) {
      rep.max_group_accuracy = a;
      rep.max_accuracy_group = key;
    }
    if (rep.min_accuracy_group.empty() || a < rep.min_group_accuracy) {
      rep.min_group_accuracy = a;
      rep.min_accuracy_group = key;
    }
  }
  try {
    rep.dob = degree_of_bias(accs, std_mode);
  } catch (const ValidationError& e) {
    rep.skipped.emplace_back("dob", e.what());
  }
  try {
    rep.max_min_ratio = max_min_ratio(accs);
  } catch (const ValidationError& e) {
    rep.skipped.emplace_back("max_min_ratio", e.what());
  }

  rep.tpr = subgroup_tpr(records, positive_class, &rep.warnings);
  long pos = 0, tp = 0;
  for (const auto& r : records)
    if (r.true_label == positive_class) {
      ++pos;
      if (r.predicted_label == positive_class) ++tp;
    }
  rep.overall_tpr = pos > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
  for (const auto& [key, t] : rep.tpr) {
    if (rep.max_tpr_group.empty() || t > rep.max_group_tpr) {
      rep.max_group_tpr = t;
      rep.max_tpr_group = key;
    }
    if (rep.min_tpr_group.empty() || t < rep.min_group_tpr) {
      rep.min_group_tpr = t;
      rep.min_tpr_group = key;
    }
  }
  try {
    rep.deo = deo(records, positive_class);
  } catch (const ValidationError& e) {
    rep.skipped.emplace_back("deo", e.what());
  }
  try {
    rep.deodds = deodds(records, positive_class);
  } catch (const ValidationError& e) {
    rep.skipped.emplace_back("deodds", e.what());
  }
  return rep;
}

namespace {
nlohmann::json group_map_to_json(const std::map<SubgroupKey, double>& m) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, v] : m) out[subgroup_name(key)] = v;
  return out;
}
std::map<SubgroupKey, double> group_map_from_json(const nlohmann::json& j) {
  std::map<SubgroupKey, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    SubgroupKey key;
    std::string part;
    for (char ch : it.key()) {
      if (ch == '|') {
        key.push_back(part);
        part.clear();
      } else {
        part += ch;
      }
    }
    key.push_back(part);
    out[key] = it.value().get<double>();
  }
  return out;
}
}  // namespace

std::string report_to_json(const SubgroupReport& rep) {
  nlohmann::json j;
  j["subgroup_accuracy"] = group_map_to_json(rep.accuracy);
  j["subgroup_tpr"] = group_map_to_json(rep.tpr);
  j["overall_accuracy"] = rep.overall_accuracy;
  j["overall_tpr"] = rep.overall_tpr;
  j["dob"] = rep.dob;
  j["max_min_ratio"] = rep.max_min_ratio;
  j["deo"] = rep.deo;
  j["deodds"] = rep.deodds;
  j["max_accuracy_group"] = subgroup_name(rep.max_accuracy_group);
  j["min_accuracy_group"] = subgroup_name(rep.min_accuracy_group);
  j["max_group_accuracy"] = rep.max_group_accuracy;
  j["min_group_accuracy"] = rep.min_group_accuracy;
  j["max_tpr_group"] = subgroup_name(rep.max_tpr_group);
  j["min_tpr_group"] = subgroup_name(rep.min_tpr_group);
  j["max_group_tpr"] = rep.max_group_tpr;
  j["min_group_tpr"] = rep.min_group_tpr;
  j["positive_class"] = rep.positive_class;
  nlohmann::json skipped = nlohmann::json::object();
  for (const auto& [metric, why] : rep.skipped) skipped[metric] = why;
  j["skipped"] = skipped;
  j["warnings"] = rep.warnings;
  return j.dump(2);
}

SubgroupReport report_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  SubgroupReport rep;
  rep.accuracy = group_map_from_json(j.at("subgroup_accuracy"));
  rep.tpr = group_map_from_json(j.at("subgroup_tpr"));
  rep.overall_accuracy = j.at("overall_accuracy").get<double>();
  rep.overall_tpr = j.at("overall_tpr").get<double>();
  rep.dob = j.at("dob").get<double>();
  rep.max_min_ratio = j.at("max_min_ratio").get<double>();
  rep.deo = j.at("deo").get<double>();
  rep.deodds = j.at("deodds").get<double>();
  rep.max_group_accuracy = j.at("max_group_accuracy").get<double>();
  rep.min_group_accuracy = j.at("min_group_accuracy").get<double>();
  rep.max_group_tpr = j.at("max_group_tpr").get<double>();
  rep.min_group_tpr = j.at("min_group_tpr").get<double>();
  rep.positive_class = j.at("positive_class").get<int>();
  for (auto it = j.at("skipped").begin(); it != j.at("skipped").end(); ++it)
    rep.skipped.emplace_back(it.key(), it.value().get<std::string>());
  for (const auto& w : j.at("warnings")) rep.warnings.push_back(w.get<std::string>());
  auto name_to_key = [](const std::string& s) {
    SubgroupKey key;
    std::string part;
    for (char ch : s)
      if (ch == '|') {
        key.push_back(part);
        part.clear();
      } else {
        part += ch;
      }
    key.push_back(part);
    return key;
  };
  rep.max_accuracy_group = name_to_key(j.at("max_accuracy_group").get<std::string>());
  rep.min_accuracy_group = name_to_key(j.at("min_accuracy_group").get<std::string>());
  rep.max_tpr_group = name_to_key(j.at("max_tpr_group").get<std::string>());
  rep.min_tpr_group = name_to_key(j.at("min_tpr_group").get<std::string>());
  return rep;
}

std::string report_to_csv(const SubgroupReport& rep) {
  std::string out = "subgroup,accuracy,tpr\n";
  for (const auto& [key, acc] : rep.accuracy) {
    out += subgroup_name(key) + "," + std::to_string(acc) + ",";
    auto it = rep.tpr.find(key);
    out += it != rep.tpr.end() ? std::to_string(it->second) : std::string("");
    out += "\n";
  }
  out += "overall," + std::to_string(rep.overall_accuracy) + "," +
         std::to_string(rep.overall_tpr) + "\n";
  return out;
}

}  // namespace fairgrain::fairness
